#include "hsgeom/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hsgeom/error.hpp"
#include "hsgeom/rng.hpp"

namespace hsgeom {

namespace {

// Squared distances, rows of `points` against rows of `centroids`.
RowMatrix squared_distances(const RowMatrix& points, const RowMatrix& centroids) {
  RowMatrix d2 = -2.0 * points * centroids.transpose();
  d2.colwise() += points.rowwise().squaredNorm();
  d2.rowwise() += centroids.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

struct Nearest {
  std::vector<int> label;
  std::vector<double> dist2;
};

Nearest nearest(const RowMatrix& points, const RowMatrix& centroids) {
  const RowMatrix d2 = squared_distances(points, centroids);
  Nearest out;
  out.label.resize(points.rows());
  out.dist2.resize(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index j = 0;
    out.dist2[i] = d2.row(i).minCoeff(&j);
    out.label[i] = static_cast<int>(j);
  }
  return out;
}

double max_shift(const RowMatrix& a, const RowMatrix& b) {
  return std::sqrt((a - b).rowwise().squaredNorm().maxCoeff());
}

// Moves each empty centroid onto the point farthest from its current centroid.
void reseed_empty(const RowMatrix& points, const Nearest& near, const std::vector<long>& counts,
                  RowMatrix& centroids) {
  std::vector<Eigen::Index> order(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return near.dist2[a] > near.dist2[b]; });
  std::size_t next = 0;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    if (counts[c] != 0 || next >= order.size()) continue;
    centroids.row(c) = points.row(order[next++]);
  }
}

struct RestartResult {
  RowMatrix centroids;
  double inertia;
  int iterations;
};

RestartResult run_restart(const RowMatrix& data, int k, const KMeansConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, {label_tag("kmeans-batches")});
  RowMatrix c = kmeans_plus_plus(data, k, seed);
  const Eigen::Index n = data.rows();
  const bool full_batch = cfg.batch_size >= n;

  std::vector<long> counts(k, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  int it = 0;
  std::vector<int> prev_labels;
  for (; it < cfg.max_iterations; ++it) {
    const RowMatrix before = c;
    if (full_batch) {
      const Nearest near = nearest(data, c);
      std::vector<long> batch_counts(k, 0);
      RowMatrix sums = RowMatrix::Zero(k, data.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(near.label[i]) += data.row(i);
        ++batch_counts[near.label[i]];
      }
      for (int j = 0; j < k; ++j) {
        if (batch_counts[j] > 0) c.row(j) = sums.row(j) / static_cast<double>(batch_counts[j]);
      }
      reseed_empty(data, near, batch_counts, c);
      const bool stable = near.label == prev_labels;
      prev_labels = near.label;
      if (stable) {
        ++it;
        break;
      }
      continue;
    }

    RowMatrix batch(cfg.batch_size, data.cols());
    for (int b = 0; b < cfg.batch_size; ++b) batch.row(b) = data.row(pick(rng));
    const Nearest near = nearest(batch, c);
    std::vector<long> batch_counts(k, 0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int j = near.label[b];
      ++counts[j];
      ++batch_counts[j];
      const double eta = 1.0 / static_cast<double>(counts[j]);
      c.row(j) = (1.0 - eta) * c.row(j) + eta * batch.row(b);
    }
    reseed_empty(batch, near, counts, c);
    if (max_shift(before, c) < cfg.tolerance) {
      ++it;
      break;
    }
  }
  return {c, inertia(data, c), it};
}

}  // namespace

RowMatrix kmeans_plus_plus(const RowMatrix& data, int k, std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  Rng rng = make_rng(seed, {label_tag("kmeans++")});
  RowMatrix c(k, data.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  c.row(0) = data.row(first(rng));

  Eigen::VectorXd d2 = (data.rowwise() - c.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    if (!(total > 0.0)) throw ValidationError("k-means: fewer distinct points than k = " + std::to_string(k));
    const double target = unif(rng) * total;
    double acc = 0.0;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2(i) <= 0.0) continue;
      acc += d2(i);
      chosen = i;
      if (acc > target) break;
    }
    c.row(j) = data.row(chosen);
    d2 = d2.cwiseMin((data.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

std::vector<int> assign(const RowMatrix& data, const RowMatrix& centroids) {
  return nearest(data, centroids).label;
}

double inertia(const RowMatrix& data, const RowMatrix& centroids) {
  const Nearest near = nearest(data, centroids);
  double s = 0.0;
  for (double v : near.dist2) s += v;
  return s;
}

KMeansFit fit_kmeans_detailed(const RowMatrix& data, int k, const KMeansConfig& cfg) {
  if (k < 1) throw ValidationError("k-means: k must be >= 1");
  if (data.cols() < 1) throw ValidationError("k-means: data dimension must be >= 1");
  if (data.rows() < k) {
    throw ValidationError("k-means: n = " + std::to_string(data.rows()) + " < k = " + std::to_string(k));
  }
  if (!data.allFinite()) throw ValidationError("k-means: data contains non-finite values");
  if (cfg.batch_size < 1 || cfg.n_init < 1 || cfg.max_iterations < 1) {
    throw ValidationError("k-means: batch_size, n_init and max_iterations must be >= 1");
  }

  KMeansFit fit;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.n_init; ++r) {
    const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(r);
    RestartResult res = run_restart(data, k, cfg, seed);
    fit.restarts.push_back({seed, res.inertia, res.iterations});
    if (res.inertia < best) {
      best = res.inertia;
      fit.model.centroids = std::move(res.centroids);
      fit.model.inertia = res.inertia;
    }
  }
  fit.model.config = cfg;
  return fit;
}

ClusterModel fit_kmeans(const RowMatrix& data, int k, const KMeansConfig& cfg) {
  return fit_kmeans_detailed(data, k, cfg).model;
}

int adapted_k(int band_dim) {
  if (band_dim < 1) throw ValidationError("adapted_k: band_dim must be >= 1");
  return std::max(10, std::min(40, band_dim / 2));
}

}  // namespace hsgeom
