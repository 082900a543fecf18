#pragma once

// Result tables on disk and the consolidated report built from them.
//
// Every file starts with '#' lines: the producing command, the effective
// configuration as one-line JSON, one "override" line per non-default setting,
// one "input" line per input file with its SHA-256 and any "note" lines.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hsgeom/config.hpp"
#include "hsgeom/multirun.hpp"
#include "hsgeom/pipeline.hpp"
#include "hsgeom/spectral.hpp"

namespace hsgeom {

struct OutputHeader {
  std::string command;
  std::string config_json;  // single line
  std::vector<std::string> overrides;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::string> notes;  // free-form "note" lines

  std::vector<std::string> lines() const;
};

/// Header for `command`; digests every existing file among `inputs` (a trace
/// or calibration prefix expands to its file pair).
OutputHeader make_header(std::string command, const PipelineConfig& cfg,
                         const std::vector<std::filesystem::path>& inputs);

/// Shortest round-trip decimal form.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const OutputHeader& header, const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t n_columns_;
};

struct CsvTable {
  std::vector<std::string> comments;  // header lines without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Throws ValidationError when the column is absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// pairwise.csv, summary.csv, kruskal.csv and run.log.
void write_experiment(const ExperimentResult& result, const OutputHeader& header, const std::filesystem::path& dir);

/// band_pairwise.csv, band_summary.csv and heatmap.csv.
void write_bands(const std::vector<BandResult>& bands, const OutputHeader& header, const std::filesystem::path& dir);

/// scan.csv: one row per window x pair x metric. With `per_seed`, also
/// scan_seeds.csv with one row per window x pair x metric x seed.
void write_scan(const ScanResult& scan, const OutputHeader& header, const std::filesystem::path& dir,
                bool per_seed = false);

/// Parses the rows written by write_experiment / write_bands (extra columns
/// such as "band" are ignored).
std::vector<PairwiseResult> parse_pairwise(const CsvTable& t);

struct ExperimentResults {
  std::string experiment;  // "whitening" or "band:<name>"
  std::vector<PairwiseResult> results;
};

struct SummaryRow {
  std::string experiment;
  MultiRunSummary summary;
};

struct ConditionMean {
  std::string experiment;
  Metric metric = Metric::Entropy;
  Condition condition = Condition::T1;
  std::size_t n_seeds = 0;
  double mean = 0.0;  // across seeds of the per-seed prompt-level mean
  double sd = 0.0;    // sample SD across seeds
};

struct EffectPoint {
  std::string experiment;
  Metric metric = Metric::Entropy;
  ConditionPair pair;
  std::int64_t seed = 0;
  double r = 0.0;
  std::optional<double> ci_lo, ci_hi;
};

struct PValuePoint {
  std::string experiment;
  Metric metric = Metric::Entropy;
  ConditionPair pair;
  Level level = Level::Prompt;
  std::int64_t seed = 0;
  double p = 1.0;
};

struct DiscordancePoint {
  std::string experiment;
  Metric metric = Metric::Entropy;
  ConditionPair pair;
  double token_neg_log10_p = 0.0;   // median across seeds
  double prompt_neg_log10_p = 0.0;
  std::string quadrant;  // both, token-only, prompt-only, neither
};

struct Report {
  std::vector<SummaryRow> summaries;
  std::vector<ConditionMean> condition_means;
  std::vector<EffectPoint> effects;
  std::vector<PValuePoint> p_values;
  std::vector<DiscordancePoint> discordance;
};

Report build_report(const std::vector<ExperimentResults>& experiments, double alpha = 0.05);

/// Reads pairwise.csv and band_pairwise.csv from `dir`. Throws ValidationError
/// ("no results found") when neither exists or both are empty.
std::vector<ExperimentResults> load_results(const std::filesystem::path& dir, std::vector<std::filesystem::path>* sources = nullptr);

/// report_summary.csv, condition_means.csv, effect_sizes.csv,
/// pvalue_strip.csv, discordance.csv and report.txt.
void write_report(const Report& report, const OutputHeader& header, const std::filesystem::path& dir);

}  // namespace hsgeom
