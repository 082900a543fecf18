#pragma once

// Pairwise condition tests at prompt and token level, Holm families per seed,
// and aggregation of per-seed results into multi-run summaries.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsgeom/metrics.hpp"
#include "hsgeom/stats.hpp"

namespace hsgeom {

struct StatsConfig {
  double alpha = 0.05;
  std::size_t n_perm = 50000;
  std::size_t n_boot = 10000;
  std::uint64_t rng_seed = 42;
  PermutationStatistic perm_statistic = PermutationStatistic::MeanDifference;
  bool continuity = true;
  /// Permutation p and BCa interval at prompt level.
  bool prompt_resampling = true;
  /// Same at token level (thousands of tokens per group; off by default).
  bool token_resampling = false;

  bool operator==(const StatsConfig&) const = default;
};

enum class Level { Token, Prompt };
std::string_view to_string(Level l);

struct ConditionPair {
  Condition first = Condition::T1;
  Condition second = Condition::T2;
  bool operator==(const ConditionPair&) const = default;
};

inline constexpr std::array<ConditionPair, 3> kPairs = {
    ConditionPair{Condition::T1, Condition::T2}, ConditionPair{Condition::T1, Condition::T3},
    ConditionPair{Condition::T2, Condition::T3}};

/// "T1-T2" etc.
std::string pair_name(ConditionPair p);
ConditionPair parse_pair(std::string_view s);

struct PairwiseResult {
  ConditionPair pair;
  Metric metric = Metric::Entropy;
  Level level = Level::Prompt;
  std::int64_t seed = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double mean_first = 0.0;
  double mean_second = 0.0;
  double u = 0.0;
  double p_mw = 1.0;
  bool exact = false;
  std::optional<double> p_perm;
  double r = 0.0;
  std::optional<BcaInterval> r_ci;
  double holm_adjusted = 1.0;
  bool holm_significant = false;
};

/// Both levels of the battery for one pair, metric and seed. Holm fields are
/// left unset; run_seed fills them once the whole family is known.
/// Throws ValidationError when either condition has no data for the seed.
std::pair<PairwiseResult, PairwiseResult> run_pair(const std::vector<PromptRecord>& prompts,
                                                   const std::vector<MetricRecord>& tokens,
                                                   ConditionPair pair, Metric metric,
                                                   std::int64_t seed, const StatsConfig& cfg);

struct SeedRun {
  std::vector<PairwiseResult> results;  // prompt and token level
  std::vector<std::string> warnings;    // skipped pairs
};

/// All pairs x metrics for one seed. Pairs with a missing condition are skipped
/// with a warning. Holm is applied within each (metric, level) family.
SeedRun run_seed(const std::vector<PromptRecord>& prompts, const std::vector<MetricRecord>& tokens,
                 std::int64_t seed, std::span<const Metric> metrics, const StatsConfig& cfg);

struct KruskalWallisRun {
  std::int64_t seed = 0;
  Metric metric = Metric::Entropy;
  KruskalWallisResult result;
};

/// Prompt-level Kruskal-Wallis over the conditions present for the seed.
std::optional<KruskalWallisRun> kruskal_for_seed(const std::vector<PromptRecord>& prompts,
                                                 std::int64_t seed, Metric metric);

struct MultiRunSummary {
  ConditionPair pair;
  Metric metric = Metric::Entropy;
  Level level = Level::Prompt;
  std::size_t n_seeds = 0;
  double sig_rate = 0.0;
  double holm_rate = 0.0;
  double median_r = 0.0;  // lower median
  double median_p = 1.0;  // lower median
  std::size_t direction_count = 0;
  int direction_sign = 0;  // +1, -1, or 0 when tied
  /// token sig_rate / prompt sig_rate; only on prompt-level summaries, unset when
  /// the prompt rate is 0 or token results are absent.
  std::optional<double> pseudo_ratio;
  std::optional<double> token_sig_rate;

  double direction() const {
    return n_seeds ? static_cast<double>(direction_count) / static_cast<double>(n_seeds) : 0.0;
  }
};

/// Lower median (element (n-1)/2 of the sorted values).
double lower_median(std::vector<double> v);

/// Summary of results sharing one pair, metric and level.
MultiRunSummary aggregate_runs(std::span<const PairwiseResult> results, double alpha = 0.05);

/// Groups by (pair, metric, level) in kPairs x metric order, prompt level first,
/// and attaches pseudo-ratios to the prompt-level summaries.
std::vector<MultiRunSummary> summarize(const std::vector<PairwiseResult>& results,
                                       double alpha = 0.05);

}  // namespace hsgeom
