#include "hsgeom/whitening.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "hsgeom/error.hpp"

namespace hsgeom {

namespace {

constexpr Eigen::Index kBlockRows = 4096;

template <typename Matrix>
RowMatrix project_impl(const WhiteningModel& model, const Matrix& vectors, int lo, int width) {
  if (vectors.cols() != model.dim()) {
    throw ValidationError("dimension mismatch: vectors have " + std::to_string(vectors.cols()) +
                          " columns, model expects " + std::to_string(model.dim()));
  }
  const auto basis = model.eigenvectors.middleCols(lo, width);
  const Eigen::RowVectorXd mu = model.mean.transpose();
  RowMatrix out(vectors.rows(), width);
  for (Eigen::Index start = 0; start < vectors.rows(); start += kBlockRows) {
    const Eigen::Index n = std::min(kBlockRows, vectors.rows() - start);
    RowMatrix block = vectors.middleRows(start, n).template cast<double>();
    block.rowwise() -= mu;
    out.middleRows(start, n).noalias() = block * basis;
  }
  return out;
}

}  // namespace

Eigen::VectorXd WhiteningModel::scales() const {
  return (eigenvalues.array() + epsilon).rsqrt().matrix();
}

bool WhiteningModel::operator==(const WhiteningModel& o) const {
  return epsilon == o.epsilon && total_variance == o.total_variance && mean == o.mean &&
         eigenvectors == o.eigenvectors && eigenvalues == o.eigenvalues;
}

std::vector<SpectralBand> default_bands() {
  return {
      {"Dominant", 1, 16, 0.980},      {"Transition", 17, 48, 0.007},
      {"Mid-range A", 49, 128, 0.006}, {"Mid-range B", 129, 256, 0.004},
      {"Lower", 257, 512, 0.003},      {"Tail", 513, 768, 0.001},
  };
}

void canonicalize_signs(Eigen::MatrixXd& eigenvectors) {
  for (Eigen::Index j = 0; j < eigenvectors.cols(); ++j) {
    auto col = eigenvectors.col(j);
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      const double a = std::abs(col(i));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (col(best) < 0) col = -col;
  }
}

WhiteningModel fit_pca(const RowMatrix& calibration, int n_components, double epsilon) {
  const Eigen::Index n = calibration.rows();
  const Eigen::Index d = calibration.cols();
  if (n < 2) throw ValidationError("fit_pca needs at least 2 calibration vectors, got " + std::to_string(n));
  if (!calibration.allFinite()) throw ValidationError("fit_pca: calibration contains non-finite values");
  if (n_components < 1 || n_components > d) {
    throw ValidationError("fit_pca: n_components " + std::to_string(n_components) +
                          " outside [1, " + std::to_string(d) + "]");
  }
  if (!(epsilon >= 0.0)) throw ValidationError("fit_pca: epsilon must be non-negative");

  WhiteningModel m;
  m.epsilon = epsilon;
  m.mean = calibration.colwise().mean().transpose();
  RowMatrix centered = calibration.rowwise() - m.mean.transpose();
  m.total_variance = centered.squaredNorm() / static_cast<double>(n);

  // Full V so rank-deficient fits (n <= D) still get a complete orthonormal basis.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(centered), Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();

  Eigen::VectorXd eig = Eigen::VectorXd::Zero(d);
  eig.head(sv.size()) = sv.array().square() / static_cast<double>(n);
  m.eigenvalues = eig.head(n_components);
  m.eigenvectors = svd.matrixV().leftCols(n_components);
  canonicalize_signs(m.eigenvectors);
  return m;
}

WhiteningModel fit_pca(const FloatMatrix& calibration, int n_components, double epsilon) {
  return fit_pca(RowMatrix(calibration.cast<double>()), n_components, epsilon);
}

WhiteningModel truncated(const WhiteningModel& model, int n_components) {
  if (n_components < 1 || n_components > model.n_components()) {
    throw ValidationError("cannot truncate a " + std::to_string(model.n_components()) +
                          "-component model to " + std::to_string(n_components));
  }
  WhiteningModel m = model;
  m.eigenvectors = model.eigenvectors.leftCols(n_components);
  m.eigenvalues = model.eigenvalues.head(n_components);
  return m;
}

RowMatrix project(const WhiteningModel& model, const RowMatrix& vectors) {
  return project_impl(model, vectors, 0, model.n_components());
}

RowMatrix project(const WhiteningModel& model, const FloatMatrix& vectors) {
  return project_impl(model, vectors, 0, model.n_components());
}

RowMatrix whiten(const WhiteningModel& model, const RowMatrix& vectors) {
  RowMatrix s = project(model, vectors);
  s.array().rowwise() *= model.scales().transpose().array();
  return s;
}

RowMatrix whiten(const WhiteningModel& model, const FloatMatrix& vectors) {
  RowMatrix s = project(model, vectors);
  s.array().rowwise() *= model.scales().transpose().array();
  return s;
}

void check_band(const WhiteningModel& model, const SpectralBand& band) {
  if (band.pc_lo < 1 || band.pc_hi < band.pc_lo || band.pc_hi > model.n_components()) {
    throw ValidationError("band '" + band.name + "' [" + std::to_string(band.pc_lo) + ", " +
                          std::to_string(band.pc_hi) + "] out of range for a " +
                          std::to_string(model.n_components()) + "-component model");
  }
}

RowMatrix band_whiten(const WhiteningModel& model, const RowMatrix& vectors,
                      const SpectralBand& band) {
  check_band(model, band);
  RowMatrix s = project_impl(model, vectors, band.pc_lo - 1, band.width());
  s.array().rowwise() *= model.scales().segment(band.pc_lo - 1, band.width()).transpose().array();
  return s;
}

RowMatrix band_whiten(const WhiteningModel& model, const FloatMatrix& vectors,
                      const SpectralBand& band) {
  check_band(model, band);
  RowMatrix s = project_impl(model, vectors, band.pc_lo - 1, band.width());
  s.array().rowwise() *= model.scales().segment(band.pc_lo - 1, band.width()).transpose().array();
  return s;
}

RowMatrix whiten_scores(const WhiteningModel& model, const RowMatrix& scores,
                        const SpectralBand& band) {
  check_band(model, band);
  if (scores.cols() < band.pc_hi) {
    throw ValidationError("score matrix has " + std::to_string(scores.cols()) +
                          " columns, band needs " + std::to_string(band.pc_hi));
  }
  RowMatrix s = scores.middleCols(band.pc_lo - 1, band.width());
  s.array().rowwise() *= model.scales().segment(band.pc_lo - 1, band.width()).transpose().array();
  return s;
}

double variance_fraction(const WhiteningModel& model, const SpectralBand& band) {
  check_band(model, band);
  if (model.total_variance <= 0.0) return 0.0;
  return model.eigenvalues.segment(band.pc_lo - 1, band.width()).sum() / model.total_variance;
}

}  // namespace hsgeom
