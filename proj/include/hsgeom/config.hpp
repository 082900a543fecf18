#pragma once

// Effective pipeline configuration and its JSON form.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsgeom/clustering.hpp"
#include "hsgeom/metrics.hpp"
#include "hsgeom/multirun.hpp"
#include "hsgeom/whitening.hpp"

namespace hsgeom {

struct PipelineConfig {
  std::filesystem::path trace_path;
  std::filesystem::path calibration_path;
  std::filesystem::path output_dir;

  int n_components = kDefaultComponents;
  double epsilon = kDefaultEpsilon;
  /// Components fitted for spectral analysis.
  int spectral_components = 768;

  int k = 40;
  KMeansConfig kmeans;

  MetricConfig metric;
  std::vector<Metric> metrics{kAllMetrics.begin(), kAllMetrics.end()};

  StatsConfig stats;
  std::vector<std::int64_t> seeds = default_seeds();

  std::vector<SpectralBand> bands = default_bands();
  int scan_width = 64;
  int scan_step = 32;
  bool scan_per_seed = false;

  int jobs = 1;

  static std::vector<std::int64_t> default_seeds();
};

std::string to_json(const PipelineConfig& cfg, int indent = 2);
/// Missing keys keep their defaults; unknown keys are a ValidationError.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);

/// "key=value" lines for every field that differs from the defaults.
std::vector<std::string> config_overrides(const PipelineConfig& cfg);

}  // namespace hsgeom
