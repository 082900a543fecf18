#pragma once

#include <cstdint>

#include "hsgeom/whitening.hpp"

namespace hsgeom {

struct KMeansConfig {
  int batch_size = 1024;
  int n_init = 5;
  std::uint64_t rng_seed = 42;
  int max_iterations = 100;  // mini-batches per restart
  double tolerance = 1e-4;   // early stop when the largest centroid shift falls below this

  bool operator==(const KMeansConfig&) const = default;
};

struct ClusterModel {
  RowMatrix centroids;  // k x d
  KMeansConfig config;
  double inertia = 0.0;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

/// Outcome of a single restart, kept for inspection.
struct KMeansRestart {
  std::uint64_t seed = 0;
  double inertia = 0.0;
  int iterations = 0;
};

struct KMeansFit {
  ClusterModel model;
  std::vector<KMeansRestart> restarts;
};

/// Mini-batch k-means: k-means++ seeding, then per-centroid learning rate
/// 1/count updates over random batches (with replacement). When batch_size >= n
/// every iteration sees the whole data set and the update reduces to Lloyd's
/// algorithm. Restart r uses seed rng_seed + r; the lowest full-data inertia wins.
KMeansFit fit_kmeans_detailed(const RowMatrix& data, int k, const KMeansConfig& cfg);
ClusterModel fit_kmeans(const RowMatrix& data, int k, const KMeansConfig& cfg);

/// k-means++ seeding alone (exposed for consistency checks).
RowMatrix kmeans_plus_plus(const RowMatrix& data, int k, std::uint64_t seed);

/// Index of the nearest centroid for each row.
std::vector<int> assign(const RowMatrix& data, const RowMatrix& centroids);

double inertia(const RowMatrix& data, const RowMatrix& centroids);

/// max(10, min(40, floor(band_dim / 2)))
int adapted_k(int band_dim);

}  // namespace hsgeom
