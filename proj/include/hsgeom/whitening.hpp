#pragma once

// Calibration PCA and the whitening transform
//
//   w = (h - mean) * W,   W[:, i] = v_i / sqrt(lambda_i + epsilon)
//
// where v_i, lambda_i are the calibration eigenpairs in descending order.
// Eigenvalues use the population (divide-by-n) convention.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsgeom/trace.hpp"

namespace hsgeom {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr int kDefaultComponents = 256;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct WhiteningModel {
  Eigen::VectorXd mean;          // length D
  Eigen::MatrixXd eigenvectors;  // D x r, unit columns, descending eigenvalue
  Eigen::VectorXd eigenvalues;   // length r, non-negative, non-increasing
  double epsilon = kDefaultEpsilon;
  double total_variance = 0.0;   // trace of the calibration covariance (all D components)

  int dim() const { return static_cast<int>(mean.size()); }
  int n_components() const { return static_cast<int>(eigenvalues.size()); }

  /// Per-component scale 1/sqrt(lambda_i + epsilon).
  Eigen::VectorXd scales() const;

  bool operator==(const WhiteningModel& o) const;
};

/// Contiguous 1-indexed inclusive range of principal components.
struct SpectralBand {
  std::string name;
  int pc_lo = 1;
  int pc_hi = 1;
  double declared_variance = 0.0;  // documentation only

  int width() const { return pc_hi - pc_lo + 1; }
  bool operator==(const SpectralBand&) const = default;
};

/// The six fixed bands over a 768-component spectrum:
/// Dominant 1-16, Transition 17-48, Mid-range A 49-128, Mid-range B 129-256,
/// Lower 257-512, Tail 513-768.
std::vector<SpectralBand> default_bands();

/// Fits mean and eigenpairs from an n x D calibration matrix and keeps the
/// leading n_components. Throws ValidationError for n < 2, non-finite input or
/// n_components outside [1, D].
WhiteningModel fit_pca(const RowMatrix& calibration, int n_components,
                       double epsilon = kDefaultEpsilon);
WhiteningModel fit_pca(const FloatMatrix& calibration, int n_components,
                       double epsilon = kDefaultEpsilon);

/// First n_components eigenpairs of a fitted model.
WhiteningModel truncated(const WhiteningModel& model, int n_components);

/// Centered projections onto the retained eigenvectors (unscaled scores).
RowMatrix project(const WhiteningModel& model, const RowMatrix& vectors);
RowMatrix project(const WhiteningModel& model, const FloatMatrix& vectors);

RowMatrix whiten(const WhiteningModel& model, const RowMatrix& vectors);
RowMatrix whiten(const WhiteningModel& model, const FloatMatrix& vectors);

void check_band(const WhiteningModel& model, const SpectralBand& band);

RowMatrix band_whiten(const WhiteningModel& model, const RowMatrix& vectors,
                      const SpectralBand& band);
RowMatrix band_whiten(const WhiteningModel& model, const FloatMatrix& vectors,
                      const SpectralBand& band);

/// Whitened band coordinates from scores already produced by project().
RowMatrix whiten_scores(const WhiteningModel& model, const RowMatrix& scores,
                        const SpectralBand& band);

/// Fraction of calibration variance carried by the band's components.
double variance_fraction(const WhiteningModel& model, const SpectralBand& band);

/// Flips each column so its largest-magnitude entry is positive (first index
/// wins ties).
void canonicalize_signs(Eigen::MatrixXd& eigenvectors);

}  // namespace hsgeom
