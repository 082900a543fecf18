#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "hsgeom/clustering.hpp"
#include "hsgeom/error.hpp"

using namespace hsgeom;

TEST_SUITE("clustering") {

TEST_CASE("adapted k") {
  CHECK(adapted_k(16) == 10);
  CHECK(adapted_k(32) == 16);
  CHECK(adapted_k(64) == 32);
  CHECK(adapted_k(80) == 40);
  CHECK(adapted_k(128) == 40);
  CHECK(adapted_k(768) == 40);
  CHECK(adapted_k(1) == 10);
  CHECK_THROWS_AS(adapted_k(0), ValidationError);
}

TEST_CASE("k = n reaches zero inertia") {
  const RowMatrix x = fixture::random_rows(12, 3, 1).cast<double>();
  const auto m = fit_kmeans(x, 12, {});
  CHECK(m.inertia == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("k = 1 is the mean") {
  const RowMatrix x = fixture::random_rows(300, 4, 2).cast<double>();
  const auto m = fit_kmeans(x, 1, {});
  const Eigen::RowVectorXd mu = x.colwise().mean();
  CHECK((m.centroids.row(0) - mu).norm() < 1e-10);
  const double total = (x.rowwise() - mu).squaredNorm();
  CHECK(m.inertia == doctest::Approx(total).epsilon(1e-10));
}

TEST_CASE("two separated blobs") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  RowMatrix x(1000, 2);
  Eigen::RowVector2d sums[2] = {Eigen::RowVector2d::Zero(), Eigen::RowVector2d::Zero()};
  for (int i = 0; i < 1000; ++i) {
    const int b = i % 2;
    x(i, 0) = noise(rng) + (b ? 10.0 : 0.0);
    x(i, 1) = noise(rng);
    sums[b] += x.row(i);
  }
  const Eigen::RowVector2d means[2] = {sums[0] / 500.0, sums[1] / 500.0};
  for (int batch : {1024, 100}) {
    KMeansConfig cfg;
    cfg.batch_size = batch;
    const auto m = fit_kmeans(x, 2, cfg);
    for (const auto& mu : means) {
      const double d = std::min((m.centroids.row(0) - mu).norm(), (m.centroids.row(1) - mu).norm());
      CHECK(d < 0.1);
    }
  }
}

TEST_CASE("restarts use consecutive seeds and the best one wins") {
  const RowMatrix x = fixture::random_rows(400, 3, 4).cast<double>();
  KMeansConfig cfg;
  cfg.batch_size = 64;
  const auto fit = fit_kmeans_detailed(x, 5, cfg);
  REQUIRE(fit.restarts.size() == 5);
  double best = fit.restarts[0].inertia;
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(fit.restarts[r].seed == 42 + r);
    CHECK(fit.restarts[r].iterations <= cfg.max_iterations);
    best = std::min(best, fit.restarts[r].inertia);
  }
  CHECK(fit.model.inertia == best);
  CHECK(inertia(x, fit.model.centroids) == doctest::Approx(best));
}

TEST_CASE("fit is deterministic") {
  const RowMatrix x = fixture::random_rows(500, 6, 5).cast<double>();
  KMeansConfig cfg;
  cfg.batch_size = 128;
  const auto a = fit_kmeans(x, 8, cfg), b = fit_kmeans(x, 8, cfg);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("centroids are distinct and assignments index them") {
  const RowMatrix x = fixture::random_rows(300, 4, 6).cast<double>();
  const auto m = fit_kmeans(x, 10, {});
  for (int i = 0; i < m.k(); ++i) {
    for (int j = i + 1; j < m.k(); ++j) CHECK((m.centroids.row(i) - m.centroids.row(j)).norm() > 0.0);
  }
  const auto labels = assign(x, m.centroids);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < m.k(); ++j) {
      if ((x.row(i) - m.centroids.row(j)).squaredNorm() < (x.row(i) - m.centroids.row(best)).squaredNorm()) best = j;
    }
    CHECK(labels[i] == best);
  }
}

TEST_CASE("k-means++ picks data points") {
  const RowMatrix x = fixture::random_rows(50, 3, 7).cast<double>();
  const RowMatrix c = kmeans_plus_plus(x, 5, 1);
  for (int j = 0; j < 5; ++j) {
    bool found = false;
    for (Eigen::Index i = 0; i < x.rows(); ++i) found |= x.row(i) == c.row(j);
    CHECK(found);
  }
}

TEST_CASE("full batch matches Lloyd from the same seeding") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  RowMatrix data(150, 3);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) data(i, j) = normal(rng) + 4.0 * static_cast<double>((i % 4) == j);
  }
  KMeansConfig cfg;
  cfg.n_init = 1;
  cfg.max_iterations = 500;
  cfg.tolerance = 0.0;
  const int k = 4;
  const RowMatrix got = fit_kmeans(data, k, cfg).centroids;

  RowMatrix c = kmeans_plus_plus(data, k, cfg.rng_seed);
  for (int it = 0; it < 500; ++it) {
    RowMatrix sums = RowMatrix::Zero(k, 3);
    std::vector<int> count(k, 0);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if ((data.row(i) - c.row(j)).squaredNorm() < (data.row(i) - c.row(best)).squaredNorm()) best = j;
      }
      sums.row(best) += data.row(i);
      ++count[best];
    }
    for (int j = 0; j < k; ++j) {
      REQUIRE(count[j] > 0);
      c.row(j) = sums.row(j) / count[j];
    }
  }
  CHECK((got - c).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bad inputs") {
  const RowMatrix x = fixture::random_rows(5, 2, 1).cast<double>();
  CHECK_THROWS_AS(fit_kmeans(x, 6, {}), ValidationError);
  CHECK_THROWS_AS(fit_kmeans(x, 0, {}), ValidationError);
  CHECK_THROWS_AS(fit_kmeans(RowMatrix::Ones(5, 2), 2, {}), ValidationError);
  KMeansConfig cfg;
  cfg.n_init = 0;
  CHECK_THROWS_AS(fit_kmeans(x, 2, cfg), ValidationError);
}

}
