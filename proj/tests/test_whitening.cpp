#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hsgeom/error.hpp"
#include "hsgeom/synth.hpp"
#include "hsgeom/whitening.hpp"

using namespace hsgeom;

namespace {

RowMatrix cov_n(const RowMatrix& w) {
  const RowMatrix c = w.rowwise() - w.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(w.rows());
}

RowMatrix calibration_rows(const TraceSet& t) {
  return t.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; })
      .vectors()
      .cast<double>();
}

}  // namespace

TEST_SUITE("whitening") {

TEST_CASE("hand-computed 2D covariance") {
  RowMatrix x(4, 2);
  x << 1, 0, -1, 0, 0, 2, 0, -2;
  const auto m = fit_pca(x, 2);
  CHECK(m.mean.norm() == 0.0);
  CHECK(m.eigenvalues(0) == doctest::Approx(2.0));
  CHECK(m.eigenvalues(1) == doctest::Approx(0.5));
  CHECK(std::abs(m.eigenvectors(0, 0)) == doctest::Approx(0.0));
  CHECK(std::abs(m.eigenvectors(1, 0)) == doctest::Approx(1.0));
  CHECK(m.total_variance == doctest::Approx(2.5));
}

TEST_CASE("constant data gives zero eigenvalues and zero output") {
  RowMatrix x = RowMatrix::Constant(5, 3, 2.5);
  const auto m = fit_pca(x, 3);
  CHECK(m.eigenvalues.cwiseAbs().maxCoeff() == 0.0);
  const RowMatrix w = whiten(m, x);
  CHECK(w.allFinite());
  CHECK(w.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("whitening centres and scales along each axis") {
  const RowMatrix x = fixture::random_rows(200, 6, 3).cast<double>();
  const auto m = fit_pca(x, 6);
  const RowMatrix at_mean = whiten(m, RowMatrix(m.mean.transpose()));
  CHECK(at_mean.norm() < 1e-12);

  const double l1 = m.eigenvalues(0);
  const RowMatrix h = (m.mean + m.eigenvectors.col(0) * std::sqrt(l1)).transpose();
  const RowMatrix w = whiten(m, h);
  CHECK(w(0, 0) == doctest::Approx(std::sqrt(l1) / std::sqrt(l1 + m.epsilon)).epsilon(1e-12));
  CHECK(w.rightCols(5).norm() < 1e-10);
}

TEST_CASE("whitened covariance equals lambda / (lambda + eps) on the diagonal") {
  // Anisotropic data spanning four decades.
  RowMatrix x = fixture::random_rows(500, 5, 7).cast<double>();
  const Eigen::Vector<double, 5> sd{100.0, 10.0, 1.0, 0.1, 0.01};
  x = x * sd.asDiagonal();
  const auto m = fit_pca(x, 5);
  const RowMatrix c = cov_n(whiten(m, x));
  for (int i = 0; i < 5; ++i) {
    const double l = m.eigenvalues(i);
    CHECK(c(i, i) == doctest::Approx(l / (l + m.epsilon)).epsilon(1e-10));
    for (int j = 0; j < 5; ++j) {
      if (i != j) CHECK(std::abs(c(i, j)) < 1e-10);
    }
  }
}

TEST_CASE("synthetic calibration: identity covariance and dominant fraction") {
  SynthSpec s;
  s.n_seeds = 1;
  s.n_prompts_per_condition = 1;
  const RowMatrix cal = calibration_rows(gen_traces(s, 3));
  CHECK(cal.rows() == 2400);
  const auto m = fit_pca(cal, kDefaultComponents);
  const RowMatrix c = cov_n(whiten(m, cal));
  double worst = 0.0;
  for (int i = 0; i < c.rows(); ++i) {
    if (m.eigenvalues(i) < 100 * m.epsilon) continue;
    for (int j = 0; j < c.cols(); ++j) {
      if (m.eigenvalues(j) < 100 * m.epsilon) continue;
      worst = std::max(worst, std::abs(c(i, j) - (i == j ? 1.0 : 0.0)));
    }
  }
  CHECK(worst < 1e-3);

  const auto full = fit_pca(cal, 768);
  const auto bands = default_bands();
  CHECK(variance_fraction(full, bands[0]) == doctest::Approx(0.98).epsilon(0.01 / 0.98));
  const double expected[] = {0.980, 0.007, 0.006, 0.004, 0.003, 0.0005};
  double sum = 0.0;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const double f = variance_fraction(full, bands[b]);
    sum += f;
    if (b < 5) CHECK(std::abs(f - expected[b]) <= 0.1 * expected[b]);
    else CHECK(f < 0.001);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

  RowMatrix joined(cal.rows(), 768);
  Eigen::Index at = 0;
  for (const auto& b : bands) {
    joined.middleCols(at, b.width()) = band_whiten(full, cal, b);
    at += b.width();
  }
  CHECK(at == 768);
  CHECK((joined - whiten(full, cal)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("whitening is linear about the mean") {
  const RowMatrix x = fixture::random_rows(60, 5, 8).cast<double>();
  const auto m = fit_pca(x, 5);
  const RowMatrix h = fixture::random_rows(7, 5, 9).cast<double>();
  for (double a : {-2.0, 0.5, 3.0}) {
    const RowMatrix moved = (a * (h.rowwise() - m.mean.transpose())).rowwise() + m.mean.transpose();
    CHECK((whiten(m, moved) - a * whiten(m, h)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("band whitening") {
  const RowMatrix x = fixture::random_rows(100, 8, 5).cast<double>();
  const auto m = fit_pca(x, 8);
  const RowMatrix full = whiten(m, x);
  CHECK((band_whiten(m, x, {"all", 1, 8}) - full).norm() == 0.0);
  CHECK((band_whiten(m, x, {"mid", 3, 5}) - full.middleCols(2, 3)).norm() < 1e-12);
  const RowMatrix scores = project(m, x);
  CHECK((whiten_scores(m, scores, {"mid", 3, 5}) - full.middleCols(2, 3)).norm() < 1e-12);
  CHECK_THROWS_AS(band_whiten(m, x, {"bad", 6, 9}), ValidationError);
  CHECK_THROWS_AS(band_whiten(m, x, {"bad", 0, 2}), ValidationError);
}

TEST_CASE("near-zero tail stays finite") {
  RowMatrix x = fixture::random_rows(50, 4, 2).cast<double>();
  x.col(3) = x.col(0) * 2.0;  // rank 3
  const auto m = fit_pca(x, 4);
  const RowMatrix w = band_whiten(m, x, {"tail", 4, 4});
  CHECK(w.allFinite());
  CHECK(w.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("default band layout") {
  const auto b = default_bands();
  REQUIRE(b.size() == 6);
  const std::pair<int, int> ranges[] = {{1, 16}, {17, 48}, {49, 128}, {129, 256}, {257, 512}, {513, 768}};
  const char* names[] = {"Dominant", "Transition", "Mid-range A", "Mid-range B", "Lower", "Tail"};
  int next = 1;
  for (int i = 0; i < 6; ++i) {
    CHECK(b[i].name == names[i]);
    CHECK(b[i].pc_lo == ranges[i].first);
    CHECK(b[i].pc_hi == ranges[i].second);
    CHECK(b[i].pc_lo == next);
    next = b[i].pc_hi + 1;
  }
  CHECK(next == 769);
}

TEST_CASE("fit is deterministic and sign-canonical") {
  const RowMatrix x = fixture::random_rows(80, 10, 12).cast<double>();
  const auto a = fit_pca(x, 10), b = fit_pca(x, 10);
  CHECK(a == b);
  for (int j = 0; j < 10; ++j) {
    Eigen::Index at;
    a.eigenvectors.col(j).cwiseAbs().maxCoeff(&at);
    CHECK(a.eigenvectors(at, j) > 0.0);
  }
  const Eigen::MatrixXd gram = a.eigenvectors.transpose() * a.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("eigenvalues are non-increasing and truncation keeps the head") {
  const RowMatrix x = fixture::random_rows(60, 12, 8).cast<double>();
  const auto m = fit_pca(x, 12);
  for (int i = 1; i < 12; ++i) CHECK(m.eigenvalues(i) <= m.eigenvalues(i - 1));
  const auto t = truncated(m, 4);
  CHECK(t.n_components() == 4);
  CHECK((whiten(t, x) - whiten(m, x).leftCols(4)).norm() < 1e-12);
  CHECK_THROWS_AS(truncated(m, 13), ValidationError);
}

TEST_CASE("fit_pca rejects bad input") {
  CHECK_THROWS_AS(fit_pca(RowMatrix(RowMatrix::Zero(1, 3)), 1), ValidationError);
  CHECK_THROWS_AS(fit_pca(RowMatrix(RowMatrix::Zero(4, 3)), 4), ValidationError);
  RowMatrix bad = RowMatrix::Zero(4, 3);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(fit_pca(bad, 2), ValidationError);
  const auto m = fit_pca(fixture::random_rows(10, 3, 1), 3);
  CHECK_THROWS_AS(whiten(m, RowMatrix(RowMatrix::Zero(2, 4))), ValidationError);
}

}
