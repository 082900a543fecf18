#pragma once

// Per-token cluster-geometry metrics in whitened space and their prompt-level means.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hsgeom/clustering.hpp"
#include "hsgeom/trace.hpp"
#include "hsgeom/whitening.hpp"

namespace hsgeom {

enum class Metric { Entropy, MaxSim, WhitenedNorm, RawNorm };

inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::Entropy, Metric::MaxSim,
                                                      Metric::WhitenedNorm, Metric::RawNorm};
/// Metrics computed within a spectral band (raw norm is not band-specific).
inline constexpr std::array<Metric, 3> kBandMetrics = {Metric::Entropy, Metric::MaxSim,
                                                       Metric::WhitenedNorm};

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

struct MetricConfig {
  double temperature = 1.0;
  /// Whitened vectors with norm at or below this are flagged as degenerate.
  double degenerate_norm = 1e-12;
};

struct MetricRecord {
  std::string prompt_id;
  Condition condition = Condition::T1;
  std::int64_t seed = 0;
  std::int64_t token_position = 0;
  double entropy = 0.0;
  double max_sim = 0.0;
  double whitened_norm = 0.0;
  double raw_norm = 0.0;

  double value(Metric m) const;
};

struct FlaggedToken {
  std::string prompt_id;
  Condition condition = Condition::T1;
  std::int64_t seed = 0;
  std::int64_t token_position = 0;
  std::string reason;
};

struct MetricTable {
  std::vector<MetricRecord> records;
  std::vector<FlaggedToken> flagged;
};

struct PromptRecord {
  std::string prompt_id;
  Condition condition = Condition::T1;
  std::int64_t seed = 0;
  double entropy = 0.0;
  double max_sim = 0.0;
  double whitened_norm = 0.0;
  double raw_norm = 0.0;
  std::int64_t token_count = 0;

  double value(Metric m) const;
};

/// s_j = <w, c_j> / (|w| |c_j|). Throws DegenerateInput for a zero-norm w or centroid.
Eigen::VectorXd centroid_similarities(const Eigen::Ref<const Eigen::VectorXd>& w,
                                      const ClusterModel& model);

/// Shannon entropy of softmax(s / temperature), divided by ln k so it lies in [0, 1].
double membership_entropy(const Eigen::Ref<const Eigen::VectorXd>& s, double temperature = 1.0);

double peak_alignment(const Eigen::Ref<const Eigen::VectorXd>& s);

/// Metrics for every experimental row of `traces`. `whitened` holds one row per
/// trace row (same order as traces.vectors()); the trace supplies raw norms.
MetricTable compute_metric_table(const TraceSet& traces, const RowMatrix& whitened,
                                 const ClusterModel& clusters, const MetricConfig& cfg = {});

/// Full-spectrum convenience: whitens with `whitening` first.
MetricTable compute_metric_table(const TraceSet& traces, const WhiteningModel& whitening,
                                 const ClusterModel& clusters, const MetricConfig& cfg = {});

/// Arithmetic mean per (prompt_id, seed), in order of first appearance.
std::vector<PromptRecord> prompt_aggregate(const std::vector<MetricRecord>& records);

}  // namespace hsgeom
