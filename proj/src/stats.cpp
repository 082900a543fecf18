#include "hsgeom/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "hsgeom/error.hpp"
#include "hsgeom/rng.hpp"

namespace hsgeom {

namespace {

void require_nonempty(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.empty() || y.empty()) throw ValidationError(std::string(what) + ": empty sample");
}

std::vector<double> pooled(std::span<const double> x, std::span<const double> y) {
  std::vector<double> v(x.begin(), x.end());
  v.insert(v.end(), y.begin(), y.end());
  return v;
}

// C(n, k) as a double, saturating once it exceeds `cap`.
double binomial_capped(std::size_t n, std::size_t k, double cap) {
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (c > cap) return cap + 1.0;
  }
  return std::round(c);
}

// U from sorted samples by a merge walk.
double sorted_u(std::span<const double> xs, std::span<const double> ys) {
  double u = 0.0;
  std::size_t lo = 0;  // first y >= current x
  std::size_t hi = 0;  // first y > current x
  for (double v : xs) {
    while (lo < ys.size() && ys[lo] < v) ++lo;
    if (hi < lo) hi = lo;
    while (hi < ys.size() && ys[hi] <= v) ++hi;
    u += static_cast<double>(lo) + 0.5 * static_cast<double>(hi - lo);
  }
  return u;
}

double quantile_linear(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double q) {
  if (q <= 0.0) return -std::numeric_limits<double>::infinity();
  if (q >= 1.0) return std::numeric_limits<double>::infinity();
  return boost::math::quantile(boost::math::normal_distribution<double>(), q);
}

double chi_squared_sf(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double tie_term(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double s = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    s += t * t * t - t;
    i = j + 1;
  }
  return s;
}

double mann_whitney_u(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, y, "mann_whitney_u");
  std::vector<double> xs(x.begin(), x.end());
  std::vector<double> ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return sorted_u(xs, ys);
}

bool mann_whitney_exact_eligible(std::size_t n1, std::size_t n2) {
  return std::min(n1, n2) <= 8 && n1 * n2 <= 400;
}

double mann_whitney_exact_p(std::span<const double> x, std::span<const double> y) {
  require_nonempty(x, y, "mann_whitney_exact_p");
  const bool x_small = x.size() <= y.size();
  const std::size_t m = std::min(x.size(), y.size());
  const std::vector<double> all = pooled(x, y);
  const std::vector<double> ranks = midranks(all);

  // Doubled midranks are integers, so the rank-sum distribution is exact.
  std::vector<long> r2(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) r2[i] = std::lround(2.0 * ranks[i]);

  long observed = 0;
  const std::size_t offset = x_small ? 0 : x.size();
  for (std::size_t i = 0; i < m; ++i) observed += r2[offset + i];

  std::vector<long> sorted_r2 = r2;
  std::sort(sorted_r2.rbegin(), sorted_r2.rend());
  const long max_sum = std::accumulate(sorted_r2.begin(), sorted_r2.begin() + static_cast<long>(m), 0L);

  std::vector<std::vector<double>> ways(m + 1, std::vector<double>(max_sum + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t item = 0; item < r2.size(); ++item) {
    const long v = r2[item];
    for (std::size_t j = std::min(m, item + 1); j >= 1; --j) {
      auto& cur = ways[j];
      const auto& prev = ways[j - 1];
      for (long s = max_sum; s >= v; --s) cur[s] += prev[s - v];
    }
  }
  double total = 0.0, le = 0.0, ge = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double w = ways[m][s];
    total += w;
    if (s <= observed) le += w;
    if (s >= observed) ge += w;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

double mann_whitney_asymptotic_p(std::span<const double> x, std::span<const double> y,
                                 bool continuity) {
  require_nonempty(x, y, "mann_whitney_asymptotic_p");
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  const double n = n1 + n2;
  const double u = mann_whitney_u(x, y);
  const std::vector<double> all = pooled(x, y);
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term(all) / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  double d = std::abs(u - 0.5 * n1 * n2);
  if (continuity) d = std::max(0.0, d - 0.5);
  return std::min(1.0, std::erfc(d / std::sqrt(var) / std::sqrt(2.0)));
}

MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y,
                               const MannWhitneyOptions& opts) {
  require_nonempty(x, y, "mann_whitney");
  MannWhitneyResult res;
  res.u = mann_whitney_u(x, y);
  using M = MannWhitneyOptions::Method;
  res.exact = opts.method == M::Exact ||
              (opts.method == M::Auto && mann_whitney_exact_eligible(x.size(), y.size()));
  res.p = res.exact ? mann_whitney_exact_p(x, y) : mann_whitney_asymptotic_p(x, y, opts.continuity);
  return res;
}

double rank_biserial(double u, std::size_t n1, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw ValidationError("rank_biserial: empty sample");
  return 2.0 * u / (static_cast<double>(n1) * static_cast<double>(n2)) - 1.0;
}

double rank_biserial(std::span<const double> x, std::span<const double> y) {
  return rank_biserial(mann_whitney_u(x, y), x.size(), y.size());
}

PermutationResult permutation_test(std::span<const double> x, std::span<const double> y,
                                   std::size_t n_perm, std::uint64_t rng_seed,
                                   PermutationStatistic statistic) {
  require_nonempty(x, y, "permutation_p");
  const std::size_t n1 = x.size();
  const std::size_t n = x.size() + y.size();
  const std::vector<double> all = pooled(x, y);

  // Both statistics are monotone in the sum of the first group's scores:
  // raw values for the mean difference, midranks for U.
  std::vector<double> score = statistic == PermutationStatistic::U ? midranks(all) : all;
  const double total = std::accumulate(score.begin(), score.end(), 0.0);
  const double centre = total * static_cast<double>(n1) / static_cast<double>(n);
  const double observed =
      std::abs(std::accumulate(score.begin(), score.begin() + static_cast<long>(n1), 0.0) - centre);
  double scale = 0.0;
  for (double s : score) scale += std::abs(s);
  const double tol = 1e-12 * (scale + 1.0);

  PermutationResult res;
  const double combos = binomial_capped(n, n1, static_cast<double>(n_perm));
  if (combos <= static_cast<double>(n_perm)) {
    res.exact = true;
    std::vector<std::size_t> pick(n1);
    std::iota(pick.begin(), pick.end(), 0);
    std::size_t hits = 0, count = 0;
    while (true) {
      double s = 0.0;
      for (auto i : pick) s += score[i];
      if (std::abs(s - centre) >= observed - tol) ++hits;
      ++count;
      // next combination in lexicographic order
      std::size_t i = n1;
      while (i > 0 && pick[i - 1] == n - n1 + (i - 1)) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < n1; ++j) pick[j] = pick[j - 1] + 1;
    }
    res.evaluated = count;
    res.p = static_cast<double>(hits) / static_cast<double>(count);
    return res;
  }

  Rng rng(rng_seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < n_perm; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n1; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      s += score[idx[i]];
    }
    if (std::abs(s - centre) >= observed - tol) ++hits;
  }
  res.evaluated = n_perm;
  res.p = static_cast<double>(hits + 1) / static_cast<double>(n_perm + 1);
  return res;
}

double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t n_perm,
                     std::uint64_t rng_seed, PermutationStatistic statistic) {
  return permutation_test(x, y, n_perm, rng_seed, statistic).p;
}

std::pair<double, double> percentile_interval(std::vector<double> replicates, double alpha) {
  std::sort(replicates.begin(), replicates.end());
  return {quantile_linear(replicates, alpha / 2.0), quantile_linear(replicates, 1.0 - alpha / 2.0)};
}

BcaInterval bca_interval(std::vector<double> replicates, double point,
                         std::span<const double> jackknife, double alpha) {
  if (replicates.empty()) throw ValidationError("bca_interval: no bootstrap replicates");
  BcaInterval out;
  out.point = point;
  std::sort(replicates.begin(), replicates.end());
  if (replicates.front() == replicates.back()) {
    out.lo = out.hi = replicates.front();
    out.degenerate = true;
    return out;
  }

  const double b = static_cast<double>(replicates.size());
  const auto below = std::lower_bound(replicates.begin(), replicates.end(), point) - replicates.begin();
  double frac = static_cast<double>(below) / b;
  const double floor_frac = 0.5 / b;
  if (frac < floor_frac || frac > 1.0 - floor_frac) {
    out.clamped = true;
    frac = std::clamp(frac, floor_frac, 1.0 - floor_frac);
  }
  out.z0 = normal_quantile(frac);

  if (!jackknife.empty()) {
    const double mean = std::accumulate(jackknife.begin(), jackknife.end(), 0.0) /
                        static_cast<double>(jackknife.size());
    double s2 = 0.0, s3 = 0.0;
    for (double t : jackknife) {
      const double d = mean - t;
      s2 += d * d;
      s3 += d * d * d;
    }
    out.acceleration = s2 > 0.0 ? s3 / (6.0 * std::pow(s2, 1.5)) : 0.0;
  }

  auto adjusted = [&](double q) {
    const double z = normal_quantile(q);
    const double num = out.z0 + z;
    return normal_cdf(out.z0 + num / (1.0 - out.acceleration * num));
  };
  out.lo = quantile_linear(replicates, adjusted(alpha / 2.0));
  out.hi = quantile_linear(replicates, adjusted(1.0 - alpha / 2.0));
  return out;
}

namespace {

template <typename Stat>
BcaInterval bca_generic(std::span<const double> x, std::span<const double> y, Stat&& stat,
                        std::size_t n_boot, double alpha, std::uint64_t rng_seed) {
  if (x.size() < 2 || y.size() < 2) throw ValidationError("bca_ci: each sample needs at least 2 values");
  if (n_boot < 1) throw ValidationError("bca_ci: n_boot must be >= 1");
  const double point = stat(x, y);

  Rng rng(rng_seed);
  std::uniform_int_distribution<std::size_t> px(0, x.size() - 1);
  std::uniform_int_distribution<std::size_t> py(0, y.size() - 1);
  std::vector<double> bx(x.size()), by(y.size());
  std::vector<double> reps(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (auto& v : bx) v = x[px(rng)];
    for (auto& v : by) v = y[py(rng)];
    reps[b] = stat(std::span<const double>(bx), std::span<const double>(by));
  }

  std::vector<double> jack;
  jack.reserve(x.size() + y.size());
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.assign(x.begin(), x.end());
    lx.erase(lx.begin() + static_cast<long>(i));
    jack.push_back(stat(std::span<const double>(lx), y));
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    ly.assign(y.begin(), y.end());
    ly.erase(ly.begin() + static_cast<long>(j));
    jack.push_back(stat(x, std::span<const double>(ly)));
  }
  return bca_interval(std::move(reps), point, jack, alpha);
}

}  // namespace

BcaInterval bca_ci(std::span<const double> x, std::span<const double> y,
                   const TwoSampleStatistic& statistic, std::size_t n_boot, double alpha,
                   std::uint64_t rng_seed) {
  return bca_generic(x, y, statistic, n_boot, alpha, rng_seed);
}

BcaInterval bca_ci_rank_biserial(std::span<const double> x, std::span<const double> y,
                                 std::size_t n_boot, double alpha, std::uint64_t rng_seed) {
  std::vector<double> sx, sy;
  auto stat = [&](std::span<const double> a, std::span<const double> b) {
    sx.assign(a.begin(), a.end());
    sy.assign(b.begin(), b.end());
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    return rank_biserial(sorted_u(sx, sy), a.size(), b.size());
  };
  return bca_generic(x, y, stat, n_boot, alpha, rng_seed);
}

KruskalWallisResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw ValidationError("kruskal_wallis: need at least 2 groups");
  std::vector<double> all;
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("kruskal_wallis: empty group");
    all.insert(all.end(), g.begin(), g.end());
  }
  KruskalWallisResult res;
  res.df = groups.size() - 1;
  const double n = static_cast<double>(all.size());
  const double ties = tie_term(all);
  const double correction = 1.0 - ties / (n * n * n - n);
  if (!(correction > 0.0)) return res;  // every value identical

  const std::vector<double> ranks = midranks(all);
  double acc = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r += ranks[offset + i];
    const double dev = r - static_cast<double>(g.size()) * (n + 1.0) / 2.0;
    acc += dev * dev / static_cast<double>(g.size());
    offset += g.size();
  }
  res.h_uncorrected = 12.0 / (n * (n + 1.0)) * acc;
  res.h = std::max(0.0, res.h_uncorrected / correction);
  res.p = chi_squared_sf(res.h, static_cast<double>(res.df));
  return res;
}

std::vector<HolmEntry> holm_correct(std::span<const double> p_values, double alpha) {
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("holm_correct: p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<HolmEntry> out(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double scaled = static_cast<double>(m - j) * p_values[order[j]];
    running = std::min(1.0, std::max(running, scaled));
    out[order[j]].adjusted = running;
    out[order[j]].significant = running < alpha;
  }
  return out;
}

}  // namespace hsgeom
