#pragma once

// Synthetic traces with a known spectrum and planted condition effects.
//
// Each token is built in a latent space z with identity population covariance
// and mapped to hidden space as x = mu0 + Q (sqrt(lambda) .* z), Q a fixed
// random rotation. The first `cluster_dims` latent axes carry the cluster
// structure: every token picks one of 2 * cluster_dims centers (+-a times a
// column of a random orthogonal basis) and adds noise scaled so the latent
// covariance stays the identity. Experimental tokens add a prompt-level offset
// and AR(1) noise along the token sequence; calibration tokens are independent.
//
// Plants, by target:
//   MAX_SIM  scales the band part of each token's center by (1 + level), or
//            shifts along the band's first axis outside the cluster subspace
//   ENTROPY  scales the band part of each token's center by
//            sqrt(1 - 0.9 tanh(level)), so opposite levels shift its energy by
//            equal and opposite amounts; outside the cluster subspace it
//            inflates the band by exp(level)
//   NORM     scales the band by exp(level)

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hsgeom/trace.hpp"

namespace hsgeom {

enum class PlantTarget { MaxSim, Entropy, Norm };
std::string_view to_string(PlantTarget t);
PlantTarget parse_plant_target(std::string_view s);

struct PlantedEffect {
  PlantTarget target = PlantTarget::MaxSim;
  int pc_lo = 1;  // 1-indexed inclusive component range
  int pc_hi = 16;
  /// First entry gets level 2*gap, second gap, third 0.
  std::array<Condition, 3> ordering = {Condition::T1, Condition::T2, Condition::T3};
  double gap = 0.0;
  /// Prompts (0-based, per condition) inside [prompt_lo, prompt_hi] receive the
  /// level; the rest receive complement_sign times the level.
  int prompt_lo = 0;
  int prompt_hi = std::numeric_limits<int>::max();
  double complement_sign = 0.0;

  /// Level assigned to a condition's prompt.
  double level(Condition c, int prompt_index) const;

  bool operator==(const PlantedEffect&) const = default;
};

struct SynthSpec {
  int hidden_dim = 768;
  /// Empty means default_eigen_profile(hidden_dim, total_variance).
  std::vector<double> eigen_profile;
  double total_variance = 60000.0;
  double mean_norm = 0.0;
  int n_calibration_prompts = 40;
  int tokens_per_prompt = 60;
  int n_prompts_per_condition = 30;
  int n_seeds = 20;
  std::int64_t first_seed = 1;
  int cluster_dims = 64;
  /// a^2 / cluster_dims; must lie in [0, 1).
  double cluster_strength = 0.9;
  double ar_coefficient = 0.5;
  /// Share of per-dimension token variance from the prompt-level offset.
  double prompt_share = 0.05;
  /// Fraction of that offset shared by a prompt across seeds.
  double persistent_fraction = 0.5;
  std::vector<PlantedEffect> plants;
  std::string model_name = "synthetic";

  /// The eigen profile actually used (resolves the empty default).
  std::vector<double> resolved_profile() const;

  bool operator==(const SynthSpec&) const = default;
};

/// Per-band geometric decay (ratio 8 across the dominant band, 2 elsewhere)
/// whose sample band fractions at 2400 calibration vectors match
/// (98.0, 0.7, 0.6, 0.4, 0.3, 0.05) percent. A band cut short by `dim` keeps
/// its leading components and the profile is rescaled to total_variance.
std::vector<double> default_eigen_profile(int dim, double total_variance);

/// Throws ValidationError on any out-of-range field or plant.
void validate(const SynthSpec& spec);

std::string to_json(const SynthSpec& spec);
SynthSpec parse_synth_spec(std::string_view json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

/// Prompt identifier used by the generator, e.g. "T2-007" or "CAL-012".
std::string synth_prompt_id(Condition c, int index);
/// 0-based prompt index recovered from a synth_prompt_id.
int synth_prompt_index(std::string_view prompt_id);

TraceSet gen_traces(const SynthSpec& spec, std::uint64_t master_seed);

/// Entropy plant (ordering T1 > T2 > T3) on PCs 1-16 for the first
/// kArtifactPlanted prompts of each condition; the remaining prompts carry the
/// mirrored level so that the effect cancels across the full set.
inline constexpr int kArtifactPlanted = 15;
inline constexpr double kArtifactGap = 1.0;
SynthSpec artifact_spec();
TraceSet gen_artifact_scenario(std::uint64_t master_seed);

/// Calibration rows plus experimental prompts with index < kArtifactPlanted.
TraceSet artifact_planted_subset(const TraceSet& t);

}  // namespace hsgeom
