#include "hsgeom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hsgeom/error.hpp"
#include "hsgeom/rng.hpp"
#include "hsgeom/whitening.hpp"

namespace hsgeom {

using nlohmann::json;

std::string_view to_string(PlantTarget t) {
  switch (t) {
    case PlantTarget::MaxSim: return "max_sim";
    case PlantTarget::Entropy: return "entropy";
    case PlantTarget::Norm: return "norm";
  }
  return "?";
}

PlantTarget parse_plant_target(std::string_view s) {
  for (auto t : {PlantTarget::MaxSim, PlantTarget::Entropy, PlantTarget::Norm}) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown plant target '" + std::string(s) + "'");
}

double PlantedEffect::level(Condition c, int prompt_index) const {
  double base = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (ordering[i] == c) base = gap * static_cast<double>(2 - i);
  }
  const bool inside = prompt_index >= prompt_lo && prompt_index <= prompt_hi;
  return inside ? base : complement_sign * base;
}

std::vector<double> SynthSpec::resolved_profile() const {
  return eigen_profile.empty() ? default_eigen_profile(hidden_dim, total_variance) : eigen_profile;
}

std::vector<double> default_eigen_profile(int dim, double total_variance) {
  if (dim < 1) throw ValidationError("default_eigen_profile: dim must be >= 1");
  if (!(total_variance > 0.0)) throw ValidationError("default_eigen_profile: total variance must be positive");
  struct Piece {
    int lo, hi;
    double fraction, ratio;
  };
  // Population fractions chosen so that the sample fractions of a 2400-vector
  // calibration land on (98.0, 0.7, 0.6, 0.4, 0.3, 0.05) percent.
  const Piece pieces[] = {{1, 16, 0.97928, 8.0},   {17, 48, 0.0068, 2.0},   {49, 128, 0.0058, 2.0},
                          {129, 256, 0.004, 2.0},  {257, 512, 0.00346, 2.0}, {513, 768, 0.00066, 2.0}};
  // A band cut short by `dim` keeps its leading components unchanged; the
  // whole profile is rescaled to total_variance afterwards.
  std::vector<double> lambda;
  lambda.reserve(dim);
  for (const auto& p : pieces) {
    if (p.lo > dim) break;
    // Dimensions past 768 continue the tail decay.
    const int hi = p.hi == 768 && dim > 768 ? dim : p.hi;
    const int w = hi - p.lo + 1;
    const int keep = std::min(hi, dim) - p.lo + 1;
    const double q = w > 1 ? std::pow(p.ratio, -1.0 / (w - 1)) : 1.0;
    double weight = 0.0;
    for (int j = 0; j < w; ++j) weight += std::pow(q, j);
    const double first = p.fraction / weight;
    for (int j = 0; j < keep; ++j) lambda.push_back(first * std::pow(q, j));
  }
  double sum = 0.0;
  for (double v : lambda) sum += v;
  for (double& v : lambda) v *= total_variance / sum;
  for (std::size_t i = 1; i < lambda.size(); ++i) {
    if (lambda[i] > lambda[i - 1]) throw NumericalError("default_eigen_profile is not monotone");
  }
  return lambda;
}

void validate(const SynthSpec& s) {
  auto fail = [](const std::string& msg) { throw ValidationError("synth spec: " + msg); };
  if (s.hidden_dim < 1) fail("hidden_dim must be >= 1");
  if (static_cast<int>(s.eigen_profile.size()) > s.hidden_dim) fail("eigen_profile longer than hidden_dim");
  for (std::size_t i = 0; i < s.eigen_profile.size(); ++i) {
    if (!(s.eigen_profile[i] > 0.0) || !std::isfinite(s.eigen_profile[i])) fail("eigen_profile entries must be positive");
    if (i > 0 && s.eigen_profile[i] > s.eigen_profile[i - 1]) fail("eigen_profile must be non-increasing");
  }
  if (!(s.total_variance > 0.0)) fail("total_variance must be positive");
  if (!(s.mean_norm >= 0.0)) fail("mean_norm must be >= 0");
  if (s.n_calibration_prompts < 1) fail("n_calibration_prompts must be >= 1");
  if (s.tokens_per_prompt < 1) fail("tokens_per_prompt must be >= 1");
  if (s.n_prompts_per_condition < 1 || s.n_prompts_per_condition > 999) fail("n_prompts_per_condition must lie in [1, 999]");
  if (s.n_seeds < 1) fail("n_seeds must be >= 1");
  if (s.cluster_dims < 0 || s.cluster_dims > s.hidden_dim) fail("cluster_dims must lie in [0, hidden_dim]");
  if (!(s.cluster_strength >= 0.0 && s.cluster_strength < 1.0)) fail("cluster_strength must lie in [0, 1)");
  if (!(std::abs(s.ar_coefficient) < 1.0)) fail("ar_coefficient must lie in (-1, 1)");
  if (!(s.prompt_share >= 0.0 && s.prompt_share <= 1.0)) fail("prompt_share must lie in [0, 1]");
  if (!(s.persistent_fraction >= 0.0 && s.persistent_fraction <= 1.0)) fail("persistent_fraction must lie in [0, 1]");
  for (const auto& p : s.plants) {
    if (p.pc_lo < 1 || p.pc_hi < p.pc_lo) fail("plant band must satisfy 1 <= pc_lo <= pc_hi");
    if (p.pc_hi > s.hidden_dim) {
      fail("plant band " + std::to_string(p.pc_lo) + "-" + std::to_string(p.pc_hi) + " exceeds hidden_dim " +
           std::to_string(s.hidden_dim));
    }
    if (!(p.gap >= 0.0) || !std::isfinite(p.gap)) fail("plant gap must be >= 0");
    std::set<Condition> seen(p.ordering.begin(), p.ordering.end());
    if (seen.size() != 3 || seen.count(Condition::Calibration)) fail("plant ordering must be a permutation of T1, T2, T3");
    if (p.prompt_lo < 0 || p.prompt_hi < p.prompt_lo) fail("plant prompt range is empty");
  }
}

namespace {

json plant_to_json(const PlantedEffect& p) {
  json order = json::array();
  for (auto c : p.ordering) order.push_back(std::string(to_string(c)));
  return {{"target", std::string(to_string(p.target))},
          {"pc_lo", p.pc_lo},
          {"pc_hi", p.pc_hi},
          {"ordering", order},
          {"gap", p.gap},
          {"prompt_lo", p.prompt_lo},
          {"prompt_hi", p.prompt_hi},
          {"complement_sign", p.complement_sign}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

PlantedEffect plant_from_json(const json& j) {
  PlantedEffect p;
  if (j.contains("target")) p.target = parse_plant_target(j.at("target").get<std::string>());
  read_opt(j, "pc_lo", p.pc_lo);
  read_opt(j, "pc_hi", p.pc_hi);
  if (j.contains("ordering")) {
    const auto& o = j.at("ordering");
    if (!o.is_array() || o.size() != 3) throw ValidationError("synth spec: plant ordering must list 3 conditions");
    for (int i = 0; i < 3; ++i) p.ordering[i] = parse_condition(o.at(i).get<std::string>());
  }
  read_opt(j, "gap", p.gap);
  read_opt(j, "prompt_lo", p.prompt_lo);
  read_opt(j, "prompt_hi", p.prompt_hi);
  read_opt(j, "complement_sign", p.complement_sign);
  return p;
}

}  // namespace

std::string to_json(const SynthSpec& s) {
  json plants = json::array();
  for (const auto& p : s.plants) plants.push_back(plant_to_json(p));
  json j = {{"hidden_dim", s.hidden_dim},
            {"eigen_profile", s.eigen_profile},
            {"total_variance", s.total_variance},
            {"mean_norm", s.mean_norm},
            {"n_calibration_prompts", s.n_calibration_prompts},
            {"tokens_per_prompt", s.tokens_per_prompt},
            {"n_prompts_per_condition", s.n_prompts_per_condition},
            {"n_seeds", s.n_seeds},
            {"first_seed", s.first_seed},
            {"cluster_dims", s.cluster_dims},
            {"cluster_strength", s.cluster_strength},
            {"ar_coefficient", s.ar_coefficient},
            {"prompt_share", s.prompt_share},
            {"persistent_fraction", s.persistent_fraction},
            {"plants", plants},
            {"model_name", s.model_name}};
  return j.dump(2);
}

SynthSpec parse_synth_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth spec: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("synth spec: top level must be an object");
  SynthSpec s;
  try {
    read_opt(j, "hidden_dim", s.hidden_dim);
    read_opt(j, "eigen_profile", s.eigen_profile);
    read_opt(j, "total_variance", s.total_variance);
    read_opt(j, "mean_norm", s.mean_norm);
    read_opt(j, "n_calibration_prompts", s.n_calibration_prompts);
    read_opt(j, "tokens_per_prompt", s.tokens_per_prompt);
    read_opt(j, "n_prompts_per_condition", s.n_prompts_per_condition);
    read_opt(j, "n_seeds", s.n_seeds);
    read_opt(j, "first_seed", s.first_seed);
    read_opt(j, "cluster_dims", s.cluster_dims);
    read_opt(j, "cluster_strength", s.cluster_strength);
    read_opt(j, "ar_coefficient", s.ar_coefficient);
    read_opt(j, "prompt_share", s.prompt_share);
    read_opt(j, "persistent_fraction", s.persistent_fraction);
    read_opt(j, "model_name", s.model_name);
    if (j.contains("plants")) {
      for (const auto& p : j.at("plants")) s.plants.push_back(plant_from_json(p));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  validate(s);
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open synth spec '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

std::string synth_prompt_id(Condition c, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03d", c == Condition::Calibration ? "CAL" : to_string(c).data(), index);
  return buf;
}

int synth_prompt_index(std::string_view id) {
  const auto dash = id.rfind('-');
  if (dash == std::string_view::npos) throw ValidationError("not a synthetic prompt id: '" + std::string(id) + "'");
  return std::stoi(std::string(id.substr(dash + 1)));
}

namespace {

// Largest fractional change in center energy an ENTROPY plant can make.
constexpr double kEntropyDepth = 0.9;

struct Generator {
  const SynthSpec& spec;
  std::uint64_t master;
  int dim;
  int m;
  Eigen::VectorXd sqrt_lambda;
  Eigen::VectorXd mu0;
  std::vector<Eigen::VectorXd> reflections;
  Eigen::MatrixXd basis;  // m x m orthogonal; column c is cluster c's direction
  double a;               // cluster amplitude
  double b;               // noise scale inside the cluster subspace

  Generator(const SynthSpec& s, std::uint64_t master_seed)
      : spec(s), master(master_seed), dim(s.hidden_dim), m(s.cluster_dims) {
    const auto profile = s.resolved_profile();
    sqrt_lambda = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < profile.size(); ++i) sqrt_lambda(i) = std::sqrt(profile[i]);
    a = std::sqrt(s.cluster_strength * m);
    b = std::sqrt(1.0 - s.cluster_strength);

    std::normal_distribution<double> normal;
    for (int j = 0; j < 3 && dim > 1; ++j) {
      Rng rng = make_rng(master, {label_tag("rotation"), static_cast<std::uint64_t>(j)});
      Eigen::VectorXd u(dim);
      for (auto& v : u) v = normal(rng);
      reflections.push_back(u.normalized());
    }
    mu0 = Eigen::VectorXd::Zero(dim);
    if (s.mean_norm > 0.0) {
      Rng rng = make_rng(master, {label_tag("mean")});
      for (auto& v : mu0) v = normal(rng);
      mu0 *= s.mean_norm / mu0.norm();
    }
    if (m > 0) {
      Rng rng = make_rng(master, {label_tag("cluster-basis")});
      Eigen::MatrixXd g(m, m);
      for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
      basis = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(m, m);
    }
  }

  Eigen::VectorXd gaussian(Rng& rng) const {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(dim);
    for (auto& x : v) x = normal(rng);
    return v;
  }

  // Latent z -> hidden-space row.
  void emit(Eigen::VectorXd& z, FloatMatrix& out, Eigen::Index row) const {
    z.array() *= sqrt_lambda.array();
    for (const auto& u : reflections) z -= (2.0 * u.dot(z)) * u;
    z += mu0;
    out.row(row) = z.transpose().cast<float>();
  }

  // One prompt's tokens. `offset` is the prompt-level latent offset (already
  // scaled), `rho` the AR(1) coefficient, `noise_scale` the per-token scale.
  void prompt_rows(Rng& rng, const Eigen::VectorXd& offset, double rho, double noise_scale,
                   Condition cond, int prompt_index, FloatMatrix& out, Eigen::Index first_row) const {
    std::uniform_int_distribution<int> cluster_pick(0, std::max(m - 1, 0));
    std::bernoulli_distribution coin(0.5);
    const double innov = std::sqrt(1.0 - rho * rho);
    const bool planted = cond != Condition::Calibration;
    Eigen::VectorXd e = gaussian(rng);
    for (int t = 0; t < spec.tokens_per_prompt; ++t) {
      if (t > 0) e = rho * e + innov * gaussian(rng);
      Eigen::VectorXd z = offset + noise_scale * e;
      if (m > 0) {
        const int c = cluster_pick(rng);
        Eigen::VectorXd ctr = (coin(rng) ? a : -a) * basis.col(c);
        if (planted) shape_center(ctr, cond, prompt_index);
        z.head(m) *= b;
        z.head(m) += ctr;
      }
      if (planted) apply_plants(z, cond, prompt_index);
      emit(z, out, first_row + t);
    }
  }

  void shape_center(Eigen::VectorXd& ctr, Condition cond, int prompt_index) const {
    for (const auto& p : spec.plants) {
      if (p.pc_lo > m || p.target == PlantTarget::Norm) continue;
      const double l = p.level(cond, prompt_index);
      if (l == 0.0) continue;
      const int lo = p.pc_lo - 1;
      const int w = std::min(p.pc_hi, m) - lo;
      ctr.segment(lo, w) *= p.target == PlantTarget::MaxSim ? 1.0 + l : std::sqrt(1.0 - kEntropyDepth * std::tanh(l));
    }
  }

  void apply_plants(Eigen::VectorXd& z, Condition cond, int prompt_index) const {
    for (const auto& p : spec.plants) {
      const double l = p.level(cond, prompt_index);
      if (l == 0.0) continue;
      auto seg = z.segment(p.pc_lo - 1, p.pc_hi - p.pc_lo + 1);
      switch (p.target) {
        case PlantTarget::Norm:
          seg *= std::exp(l);
          break;
        case PlantTarget::Entropy:
          if (p.pc_lo > m) seg *= std::exp(l);
          break;
        case PlantTarget::MaxSim:
          if (p.pc_lo > m) z(p.pc_lo - 1) += l * std::max(a, 1.0);
          break;
      }
    }
  }
};

}  // namespace

TraceSet gen_traces(const SynthSpec& spec, std::uint64_t master_seed) {
  validate(spec);
  const Generator gen(spec, master_seed);
  const int tpp = spec.tokens_per_prompt;
  const std::size_t n_cal = static_cast<std::size_t>(spec.n_calibration_prompts) * tpp;
  const std::size_t n_exp = static_cast<std::size_t>(spec.n_seeds) * 3 * spec.n_prompts_per_condition * tpp;
  FloatMatrix vectors(static_cast<Eigen::Index>(n_cal + n_exp), spec.hidden_dim);
  std::vector<IndexRecord> index;
  index.reserve(n_cal + n_exp);

  auto add_index = [&](Condition c, int p, std::int64_t seed) {
    const std::string id = synth_prompt_id(c, p);
    for (int t = 0; t < tpp; ++t) {
      index.push_back({id, c, seed, t, static_cast<std::int64_t>(index.size())});
    }
  };

  const Eigen::VectorXd no_offset = Eigen::VectorXd::Zero(spec.hidden_dim);
  for (int p = 0; p < spec.n_calibration_prompts; ++p) {
    Rng rng = make_rng(master_seed, {label_tag("calibration"), static_cast<std::uint64_t>(p)});
    gen.prompt_rows(rng, no_offset, 0.0, 1.0, Condition::Calibration, p, vectors,
                    static_cast<Eigen::Index>(index.size()));
    add_index(Condition::Calibration, p, kCalibrationSeed);
  }

  const double kappa = std::sqrt(spec.prompt_share);
  const double noise_scale = std::sqrt(1.0 - spec.prompt_share);
  const double persistent = std::sqrt(spec.persistent_fraction);
  const double per_seed = std::sqrt(1.0 - spec.persistent_fraction);
  for (int s = 0; s < spec.n_seeds; ++s) {
    const std::int64_t seed = spec.first_seed + s;
    const auto useed = static_cast<std::uint64_t>(seed);
    for (const Condition c : kExperimentalConditions) {
      const auto uc = static_cast<std::uint64_t>(c);
      for (int p = 0; p < spec.n_prompts_per_condition; ++p) {
        const auto up = static_cast<std::uint64_t>(p);
        Rng prompt_rng = make_rng(master_seed, {label_tag("prompt"), uc, up});
        Rng seed_rng = make_rng(master_seed, {label_tag("prompt-seed"), useed, uc, up});
        const Eigen::VectorXd offset =
            kappa * (persistent * gen.gaussian(prompt_rng) + per_seed * gen.gaussian(seed_rng));
        Rng rng = make_rng(master_seed, {label_tag("tokens"), useed, uc, up});
        gen.prompt_rows(rng, offset, spec.ar_coefficient, noise_scale, c, p, vectors,
                        static_cast<Eigen::Index>(index.size()));
        add_index(c, p, seed);
      }
    }
  }

  TraceMetadata meta;
  meta.model_name = spec.model_name;
  meta.hidden_dim = spec.hidden_dim;
  meta.max_tokens = tpp;
  meta.creation_info = "synth master_seed=" + std::to_string(master_seed);
  return TraceSet(std::move(meta), std::move(vectors), std::move(index));
}

SynthSpec artifact_spec() {
  SynthSpec s;
  PlantedEffect p;
  p.target = PlantTarget::Entropy;
  p.pc_lo = 1;
  p.pc_hi = 16;
  p.ordering = {Condition::T1, Condition::T2, Condition::T3};
  p.gap = kArtifactGap;
  p.prompt_lo = 0;
  p.prompt_hi = kArtifactPlanted - 1;
  p.complement_sign = -1.0;
  s.plants.push_back(p);
  return s;
}

TraceSet gen_artifact_scenario(std::uint64_t master_seed) {
  return gen_traces(artifact_spec(), master_seed);
}

TraceSet artifact_planted_subset(const TraceSet& t) {
  return t.subset([](const IndexRecord& r) {
    return r.condition == Condition::Calibration || synth_prompt_index(r.prompt_id) < kArtifactPlanted;
  });
}

}  // namespace hsgeom
