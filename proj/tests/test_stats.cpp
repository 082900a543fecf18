#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hsgeom/error.hpp"
#include "hsgeom/stats.hpp"
#include "oracles.hpp"

using namespace hsgeom;

namespace {

using Vec = std::vector<double>;

// Small integers so ties show up regularly.
Vec draw_small(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> d(0, levels - 1);
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Vec draw_normal(std::mt19937_64& rng, std::size_t n, double shift = 0.0) {
  std::normal_distribution<double> d(shift, 1.0);
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("U counts pairs with half weight for ties") {
  CHECK(mann_whitney_u(Vec{1, 2, 3}, Vec{4, 5, 6}) == 0.0);
  CHECK(mann_whitney_u(Vec{4, 5, 6}, Vec{1, 2, 3}) == 9.0);
  CHECK(mann_whitney_u(Vec{1, 2}, Vec{2, 3}) == 0.5);
}

TEST_CASE("midranks average over tie groups") {
  const Vec r = midranks(Vec{10, 20, 20, 5, 20});
  CHECK(r == Vec{2, 4, 4, 1, 4});
  CHECK(tie_term(Vec{1, 1, 1, 2, 3, 3}) == doctest::Approx(24.0 + 6.0));
}

TEST_CASE("exact MW: separated triples") {
  const auto res = mann_whitney(Vec{1, 2, 3}, Vec{4, 5, 6});
  CHECK(res.exact);
  CHECK(res.u == 0.0);
  CHECK(res.p == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("exact MW: interleaved pairs") {
  // U takes values 0,1,2,2,3,4 over the six assignments, so P(U <= 1) = 1/3.
  const auto res = mann_whitney(Vec{1, 3}, Vec{2, 4});
  CHECK(res.u == 1.0);
  CHECK(res.p == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(res.p == doctest::Approx(oracle::mw_exact_p({1, 3}, {2, 4})).epsilon(1e-12));
}

TEST_CASE("exact MW: identical samples") {
  const Vec x{1, 2, 3, 4};
  const auto res = mann_whitney(x, x);
  CHECK(res.u == 8.0);
  CHECK(res.p == 1.0);
}

TEST_CASE("exact MW matches brute-force enumeration") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n1 = 1 + rng() % 8, n2 = 1 + rng() % 8;
    const Vec x = trial % 2 ? draw_small(rng, n1, 4) : draw_normal(rng, n1);
    const Vec y = trial % 2 ? draw_small(rng, n2, 4) : draw_normal(rng, n2);
    const auto res = mann_whitney(x, y);
    REQUIRE(res.exact);
    CHECK(res.u == oracle::u_stat(x, y));
    CHECK(std::abs(res.p - oracle::mw_exact_p(x, y)) < 1e-12);
  }
}

TEST_CASE("exact eligibility boundary") {
  CHECK(mann_whitney_exact_eligible(8, 50));
  CHECK_FALSE(mann_whitney_exact_eligible(8, 51));
  CHECK_FALSE(mann_whitney_exact_eligible(9, 9));
  CHECK_FALSE(mann_whitney(Vec(30, 1.0), Vec(30, 2.0)).exact);
}

TEST_CASE("asymptotic MW close to exact for moderate samples without ties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n1 = 5 + rng() % 4, n2 = 5 + rng() % 4;
    const Vec x = draw_normal(rng, n1, 0.5), y = draw_normal(rng, n2);
    const double exact = mann_whitney_exact_p(x, y);
    CHECK(std::abs(mann_whitney_asymptotic_p(x, y, true) - exact) < 0.03);
  }
}

TEST_CASE("rank-biserial") {
  CHECK(rank_biserial(12.0, 3, 4) == 1.0);
  CHECK(rank_biserial(6.0, 3, 4) == 0.0);
  CHECK(rank_biserial(0.0, 2, 2) == -1.0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec x = draw_normal(rng, 7, 0.3), y = draw_normal(rng, 9);
    CHECK(rank_biserial(x, y) == doctest::Approx(-rank_biserial(y, x)));
  }
  CHECK_THROWS_AS(rank_biserial(0.0, 0, 3), ValidationError);
}

TEST_CASE("permutation p: small hand cases") {
  CHECK(permutation_p(Vec{0, 0}, Vec{0, 0}, 50000, 1) == 1.0);
  const auto res = permutation_test(Vec{1, 2}, Vec{3, 4}, 50000, 1);
  CHECK(res.exact);
  CHECK(res.evaluated == 6);
  CHECK(res.p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("exact permutation p matches brute-force enumeration") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n1 = 1 + rng() % 8, n2 = 1 + rng() % 8;
    const Vec x = trial % 2 ? draw_small(rng, n1, 5) : draw_normal(rng, n1, 0.4);
    const Vec y = trial % 2 ? draw_small(rng, n2, 5) : draw_normal(rng, n2);
    const auto res = permutation_test(x, y, 50000, 7);
    REQUIRE(res.exact);
    CHECK(std::abs(res.p - oracle::perm_exact_p(x, y)) < 1e-12);
  }
}

TEST_CASE("U-statistic permutation agrees with exact MW ordering") {
  // Under the U statistic, the exact permutation p counts assignments with
  // |U - n1 n2 / 2| at least as large as observed.
  const Vec x{1, 4, 6}, y{2, 3, 5, 7};
  const auto res = permutation_test(x, y, 50000, 1, PermutationStatistic::U);
  const double u = oracle::u_stat(x, y);
  double hits = 0, total = 0;
  Vec pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  Vec a, b;
  oracle::for_each_split(pooled.size(), x.size(), [&](std::uint32_t mask) {
    oracle::split(pooled, mask, a, b);
    hits += std::abs(oracle::u_stat(a, b) - 6.0) >= std::abs(u - 6.0) - 1e-9;
    total += 1;
  });
  CHECK(res.p == doctest::Approx(hits / total).epsilon(1e-12));
}

TEST_CASE("Monte-Carlo permutation p within 3 binomial SE of exact") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = draw_normal(rng, 5, 0.8), y = draw_normal(rng, 5);
    const double exact = oracle::perm_exact_p(x, y);
    const std::size_t n_perm = 100;  // below C(10,5) = 252, forces sampling
    const auto mc = permutation_test(x, y, n_perm, 1000 + trial);
    CHECK_FALSE(mc.exact);
    const double se = std::sqrt(exact * (1 - exact) / n_perm) + 1.0 / n_perm;
    CHECK(std::abs(mc.p - exact) <= 3 * se);
  }
}

TEST_CASE("Monte-Carlo permutation floor is 1 / (n_perm + 1)") {
  Vec x(30), y(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = i;
    y[i] = 100 + i;
  }
  CHECK(permutation_p(x, y, 9999, 42) == doctest::Approx(1.0 / 10000.0));
}

TEST_CASE("permutation test is deterministic in its seed") {
  std::mt19937_64 rng(2);
  const Vec x = draw_normal(rng, 30, 0.2), y = draw_normal(rng, 30);
  CHECK(permutation_p(x, y, 2000, 9) == permutation_p(x, y, 2000, 9));
}

TEST_CASE("permutation and MW agree on significance for most random cases") {
  std::mt19937_64 rng(31);
  int agree = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Vec x = draw_normal(rng, 30, 0.5), y = draw_normal(rng, 30);
    const bool a = mann_whitney(x, y).p < 0.05;
    const bool b = permutation_p(x, y, 2000, t) < 0.05;
    agree += a == b;
  }
  CHECK(agree >= 90);
}

TEST_CASE("BCa: constant statistic collapses and is flagged") {
  const Vec x{1, 2, 3}, y{4, 5, 6};
  const auto ci = bca_ci(x, y, [](auto, auto) { return 0.25; }, 200, 0.05, 1);
  CHECK(ci.degenerate);
  CHECK(ci.lo == 0.25);
  CHECK(ci.hi == 0.25);
}

TEST_CASE("BCa with z0 = 0 and a = 0 equals the percentile interval") {
  std::vector<double> reps;
  for (int i = -500; i <= 500; ++i) reps.push_back(i / 500.0);
  const Vec jack{-1.0, 1.0, -1.0, 1.0};  // symmetric: acceleration 0
  // Point is the median but lower_bound counts 500 of 1001 below: z0 close to 0.
  const auto ci = bca_interval(reps, 0.0, jack, 0.05);
  CHECK(ci.acceleration == 0.0);
  CHECK(std::abs(ci.z0) < 2e-3);
  const auto pct = percentile_interval(reps, 0.05);
  CHECK(ci.lo == doctest::Approx(pct.first).epsilon(1e-2));
  CHECK(ci.hi == doctest::Approx(pct.second).epsilon(1e-2));
}

TEST_CASE("BCa interval is ordered and contains the point for shifted data") {
  std::mt19937_64 rng(8);
  const Vec x = draw_normal(rng, 30, 1.0), y = draw_normal(rng, 30);
  const auto ci = bca_ci_rank_biserial(x, y, 2000, 0.05, 42);
  CHECK(ci.lo <= ci.point);
  CHECK(ci.point <= ci.hi);
  CHECK(ci.lo > 0.0);
  CHECK(ci.hi <= 1.0);
  const auto generic = bca_ci(x, y, [](auto a, auto b) { return rank_biserial(a, b); }, 2000, 0.05, 42);
  CHECK(generic.lo == ci.lo);
  CHECK(generic.hi == ci.hi);
}

TEST_CASE("BCa needs two values per sample") {
  CHECK_THROWS_AS(bca_ci_rank_biserial(Vec{1}, Vec{1, 2}, 100, 0.05, 1), ValidationError);
}

TEST_CASE("Kruskal-Wallis hand cases") {
  const std::vector<Vec> same{{1, 1}, {1, 1}, {1, 1}};
  const auto z = kruskal_wallis(same);
  CHECK(z.h == 0.0);
  CHECK(z.p == 1.0);

  // Rank sums 3, 7, 11 over N = 6: H = 12/42 * (9 + 49 + 121)/2 - 21 = 32/7.
  const std::vector<Vec> g{{1, 2}, {3, 4}, {5, 6}};
  const auto r = kruskal_wallis(g);
  CHECK(r.h_uncorrected == doctest::Approx(32.0 / 7.0).epsilon(1e-12));
  CHECK(r.h == doctest::Approx(32.0 / 7.0).epsilon(1e-12));
  CHECK(r.df == 2);
  CHECK(r.p == doctest::Approx(std::exp(-16.0 / 7.0)).epsilon(1e-12));
}

TEST_CASE("Kruskal-Wallis matches the oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t groups = 2 + trial % 2;
    std::vector<Vec> g;
    for (std::size_t i = 0; i < groups; ++i) {
      const std::size_t n = 1 + rng() % 8;
      g.push_back(trial % 3 ? draw_small(rng, n, 5) : draw_normal(rng, n));
    }
    std::vector<double> pooled;
    for (const auto& v : g) pooled.insert(pooled.end(), v.begin(), v.end());
    if (pooled.size() < 3) continue;
    const auto got = kruskal_wallis(g);
    const auto want = oracle::kruskal(g);
    CHECK(std::abs(got.h - want.h) < 1e-12 * (1.0 + want.h));
    CHECK(std::abs(got.p - want.p) < 1e-12);
  }
}

TEST_CASE("Kruskal-Wallis with two groups equals uncorrected asymptotic MW") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x = trial % 2 ? draw_small(rng, 12, 6) : draw_normal(rng, 12, 0.5);
    const Vec y = trial % 2 ? draw_small(rng, 15, 6) : draw_normal(rng, 15);
    const std::vector<Vec> g{x, y};
    CHECK(std::abs(kruskal_wallis(g).p - mann_whitney_asymptotic_p(x, y, false)) < 1e-6);
  }
}

TEST_CASE("Kruskal-Wallis rejects bad input") {
  CHECK_THROWS_AS(kruskal_wallis(std::vector<Vec>{{1, 2}}), ValidationError);
  CHECK_THROWS_AS(kruskal_wallis(std::vector<Vec>{{1, 2}, {}}), ValidationError);
}

TEST_CASE("Holm hand cases") {
  const auto h = holm_correct(Vec{0.01, 0.03, 0.04});
  CHECK(h[0].adjusted == doctest::Approx(0.03));
  CHECK(h[1].adjusted == doctest::Approx(0.06));
  CHECK(h[2].adjusted == doctest::Approx(0.06));
  CHECK(h[0].significant);
  CHECK_FALSE(h[1].significant);

  CHECK(holm_correct(Vec{0.2})[0].adjusted == 0.2);
  for (const auto& e : holm_correct(Vec{0, 0, 0})) {
    CHECK(e.adjusted == 0.0);
    CHECK(e.significant);
  }
  CHECK_THROWS_AS(holm_correct(Vec{1.5}), ValidationError);
}

TEST_CASE("Holm matches the step-down oracle") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 0.08);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 8;
    Vec p(m);
    for (auto& v : p) v = trial % 4 == 0 ? std::round(u(rng) * 100) / 100 : u(rng);
    const auto got = holm_correct(p);
    const auto want = oracle::holm(p, 0.05);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(std::abs(got[i].adjusted - want.adjusted[i]) < 1e-12);
      CHECK(got[i].significant == want.reject[i]);
      CHECK(got[i].adjusted >= p[i]);
    }
  }
}

TEST_CASE("distribution helpers") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054));
  CHECK(chi_squared_sf(3.0, 2.0) == doctest::Approx(std::exp(-1.5)));
  CHECK(chi_squared_sf(0.0, 1.0) == 1.0);
}

}
