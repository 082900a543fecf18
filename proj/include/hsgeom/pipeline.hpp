#pragma once

// Calibration artifact and the full-spectrum whitening experiment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsgeom/clustering.hpp"
#include "hsgeom/config.hpp"
#include "hsgeom/metrics.hpp"
#include "hsgeom/multirun.hpp"
#include "hsgeom/trace.hpp"
#include "hsgeom/whitening.hpp"

namespace hsgeom {

/// Whitening model plus the centroids fitted on whitened calibration data.
struct CalibrationArtifact {
  WhiteningModel whitening;
  ClusterModel clusters;
  std::string source_digest;  // SHA-256 of the calibration rows, hex
};

/// Fits PCA (cfg.n_components) and k-means (cfg.k) on the calibration rows of
/// `traces`. Experimental rows are ignored.
CalibrationArtifact calibrate(const TraceSet& traces, const PipelineConfig& cfg);

/// Manifest (<prefix>.calib.json) plus float64 little-endian payload
/// (<prefix>.calib.bin): mean, eigenvectors (column-major), eigenvalues,
/// centroids (row-major).
void write_calibration(const CalibrationArtifact& a, const std::filesystem::path& prefix);
CalibrationArtifact load_calibration(const std::filesystem::path& prefix_or_file);

struct SeedAnalysis {
  std::int64_t seed = 0;
  MetricTable table;
  std::vector<PromptRecord> prompts;
  std::vector<PairwiseResult> results;
  std::vector<KruskalWallisRun> kruskal;
  std::vector<std::string> warnings;
};

struct ExperimentResult {
  std::vector<SeedAnalysis> seeds;
  std::vector<MultiRunSummary> summaries;
  std::vector<std::string> warnings;

  std::vector<PairwiseResult> all_results() const;
};

/// Whitens every configured seed's experimental rows, computes metrics against
/// the calibration centroids and runs the two-level battery. Seeds listed in
/// the config but absent from the trace produce a warning.
ExperimentResult analyze_experiment(const TraceSet& traces, const CalibrationArtifact& calibration,
                                    const PipelineConfig& cfg);

/// Hex SHA-256 of a byte range / a file.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace hsgeom
