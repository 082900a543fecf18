#pragma once

// Per-band analysis and the sliding eigenspectrum scan.
//
// Each band is whitened within its own component range, clustered once on the
// band-whitened calibration rows (k = adapted_k(width)) and then run through
// the metric and statistics stages for every seed.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsgeom/config.hpp"
#include "hsgeom/multirun.hpp"
#include "hsgeom/trace.hpp"
#include "hsgeom/whitening.hpp"

namespace hsgeom {

/// k-means seed for a band: depends only on the base seed and the band's range,
/// so results do not depend on which other bands are analyzed.
std::uint64_t band_cluster_seed(std::uint64_t base, const SpectralBand& band);

struct BandResult {
  SpectralBand band;
  int k_used = 0;
  double variance_fraction = 0.0;
  std::vector<PairwiseResult> results;  // per seed, both levels
  std::vector<MultiRunSummary> summaries;
  std::vector<std::string> warnings;
};

/// `traces` must contain the calibration rows and the experimental rows;
/// `wm` must retain every component any band touches.
std::vector<BandResult> analyze_bands(const TraceSet& traces, const WhiteningModel& wm,
                                      std::span<const SpectralBand> bands, const PipelineConfig& cfg);

BandResult analyze_band(const TraceSet& traces, const WhiteningModel& wm, const SpectralBand& band,
                        const PipelineConfig& cfg);

/// Windows [1, width], [1 + step, width + step], ... up to n_components; a
/// shorter final window is added when the full-width windows stop short.
std::vector<SpectralBand> scan_windows(int n_components, int width, int step);

struct ScanCell {
  ConditionPair pair;
  Metric metric = Metric::Entropy;
  std::vector<std::int64_t> seeds;
  std::vector<double> seed_p;  // prompt-level MW p, aligned with seeds
  double median_p = 1.0;
  double bonferroni_p = 1.0;
  bool nominal = false;
  bool bonferroni = false;
};

struct ScanWindow {
  SpectralBand window;
  int offset = 0;  // pc_lo - 1
  int k_used = 0;
  std::vector<ScanCell> cells;  // kPairs x kBandMetrics
  bool bonferroni_significant = false;
};

struct ScanResult {
  std::vector<ScanWindow> windows;
  std::vector<std::int64_t> seeds;
  int bonferroni_factor = 0;  // windows x 3 metrics, applied within each pair
};

ScanResult sliding_scan(const TraceSet& traces, const WhiteningModel& wm, const PipelineConfig& cfg);

struct HeatCell {
  double sig_rate = 0.0;
  double median_r = 0.0;
  double holm_rate = 0.0;
  bool annotated = false;  // sig_rate >= 15%
};

struct Heatmap {
  std::vector<std::string> rows;     // band names
  std::vector<std::string> columns;  // "T1-T2 entropy" etc.
  std::vector<std::vector<HeatCell>> cells;
};

inline constexpr double kAnnotationThreshold = 0.15;

/// Prompt-level summaries of each band laid out as band x (pair x metric).
Heatmap heatmap_matrix(std::span<const BandResult> bands);

}  // namespace hsgeom
