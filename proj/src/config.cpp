#include "hsgeom/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hsgeom/error.hpp"

namespace hsgeom {

using nlohmann::json;

std::vector<std::int64_t> PipelineConfig::default_seeds() {
  std::vector<std::int64_t> s;
  for (std::int64_t i = 1; i <= 20; ++i) s.push_back(i);
  return s;
}

namespace {

std::string_view to_string(PermutationStatistic s) {
  return s == PermutationStatistic::U ? "u" : "mean_difference";
}

PermutationStatistic parse_perm_statistic(const std::string& s) {
  if (s == "u") return PermutationStatistic::U;
  if (s == "mean_difference") return PermutationStatistic::MeanDifference;
  throw ValidationError("config: unknown permutation statistic '" + s + "'");
}

json to_json_object(const PipelineConfig& c) {
  json metrics = json::array();
  for (auto m : c.metrics) metrics.push_back(std::string(to_string(m)));
  json bands = json::array();
  for (const auto& b : c.bands) {
    bands.push_back({{"name", b.name}, {"pc_lo", b.pc_lo}, {"pc_hi", b.pc_hi},
                     {"declared_variance", b.declared_variance}});
  }
  return {
      {"paths",
       {{"trace", c.trace_path.string()},
        {"calibration", c.calibration_path.string()},
        {"output_dir", c.output_dir.string()}}},
      {"whitening",
       {{"n_components", c.n_components},
        {"epsilon", c.epsilon},
        {"spectral_components", c.spectral_components}}},
      {"clustering",
       {{"k", c.k},
        {"batch_size", c.kmeans.batch_size},
        {"n_init", c.kmeans.n_init},
        {"seed", c.kmeans.rng_seed},
        {"max_iterations", c.kmeans.max_iterations},
        {"tolerance", c.kmeans.tolerance}}},
      {"metrics",
       {{"temperature", c.metric.temperature},
        {"degenerate_norm", c.metric.degenerate_norm},
        {"set", metrics}}},
      {"stats",
       {{"alpha", c.stats.alpha},
        {"n_perm", c.stats.n_perm},
        {"n_boot", c.stats.n_boot},
        {"seed", c.stats.rng_seed},
        {"perm_statistic", std::string(to_string(c.stats.perm_statistic))},
        {"continuity", c.stats.continuity},
        {"prompt_resampling", c.stats.prompt_resampling},
        {"token_resampling", c.stats.token_resampling},
        {"seeds", c.seeds}}},
      {"spectral",
       {{"bands", bands},
        {"scan_width", c.scan_width},
        {"scan_step", c.scan_step},
        {"scan_per_seed", c.scan_per_seed}}},
      {"jobs", c.jobs},
  };
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ValidationError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (c.n_components < 1) fail("whitening.n_components must be >= 1");
  if (c.spectral_components < 1) fail("whitening.spectral_components must be >= 1");
  if (!(c.epsilon >= 0.0)) fail("whitening.epsilon must be >= 0");
  if (c.k < 1) fail("clustering.k must be >= 1");
  if (c.kmeans.batch_size < 1 || c.kmeans.n_init < 1 || c.kmeans.max_iterations < 1) {
    fail("clustering batch_size, n_init and max_iterations must be >= 1");
  }
  if (!(c.metric.temperature > 0.0)) fail("metrics.temperature must be positive");
  if (c.metrics.empty()) fail("metrics.set must not be empty");
  if (!(c.stats.alpha > 0.0 && c.stats.alpha < 1.0)) fail("stats.alpha must lie in (0, 1)");
  if (c.stats.n_perm < 1 || c.stats.n_boot < 1) fail("stats.n_perm and stats.n_boot must be >= 1");
  if (c.seeds.empty()) fail("stats.seeds must not be empty");
  if (c.scan_width < 1 || c.scan_step < 1) fail("spectral scan width and step must be >= 1");
  for (const auto& b : c.bands) {
    if (b.pc_lo < 1 || b.pc_hi < b.pc_lo) fail("band '" + b.name + "' must satisfy 1 <= pc_lo <= pc_hi");
  }
  if (c.jobs < 1) fail("jobs must be >= 1");
}

}  // namespace

std::string to_json(const PipelineConfig& cfg, int indent) { return to_json_object(cfg).dump(indent); }

PipelineConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  PipelineConfig c;
  try {
    check_keys(j, "", {"paths", "whitening", "clustering", "metrics", "stats", "spectral", "jobs"});
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      check_keys(p, "paths", {"trace", "calibration", "output_dir"});
      if (p.contains("trace")) c.trace_path = p["trace"].get<std::string>();
      if (p.contains("calibration")) c.calibration_path = p["calibration"].get<std::string>();
      if (p.contains("output_dir")) c.output_dir = p["output_dir"].get<std::string>();
    }
    if (j.contains("whitening")) {
      const auto& w = j["whitening"];
      check_keys(w, "whitening", {"n_components", "epsilon", "spectral_components"});
      read(w, "n_components", c.n_components);
      read(w, "epsilon", c.epsilon);
      read(w, "spectral_components", c.spectral_components);
    }
    if (j.contains("clustering")) {
      const auto& k = j["clustering"];
      check_keys(k, "clustering", {"k", "batch_size", "n_init", "seed", "max_iterations", "tolerance"});
      read(k, "k", c.k);
      read(k, "batch_size", c.kmeans.batch_size);
      read(k, "n_init", c.kmeans.n_init);
      read(k, "seed", c.kmeans.rng_seed);
      read(k, "max_iterations", c.kmeans.max_iterations);
      read(k, "tolerance", c.kmeans.tolerance);
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      check_keys(m, "metrics", {"temperature", "degenerate_norm", "set"});
      read(m, "temperature", c.metric.temperature);
      read(m, "degenerate_norm", c.metric.degenerate_norm);
      if (m.contains("set")) {
        c.metrics.clear();
        for (const auto& s : m["set"]) c.metrics.push_back(parse_metric(s.get<std::string>()));
      }
    }
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      check_keys(s, "stats", {"alpha", "n_perm", "n_boot", "seed", "perm_statistic", "continuity",
                              "prompt_resampling", "token_resampling", "seeds"});
      read(s, "alpha", c.stats.alpha);
      read(s, "n_perm", c.stats.n_perm);
      read(s, "n_boot", c.stats.n_boot);
      read(s, "seed", c.stats.rng_seed);
      if (s.contains("perm_statistic")) c.stats.perm_statistic = parse_perm_statistic(s["perm_statistic"].get<std::string>());
      read(s, "continuity", c.stats.continuity);
      read(s, "prompt_resampling", c.stats.prompt_resampling);
      read(s, "token_resampling", c.stats.token_resampling);
      read(s, "seeds", c.seeds);
    }
    if (j.contains("spectral")) {
      const auto& s = j["spectral"];
      check_keys(s, "spectral", {"bands", "scan_width", "scan_step", "scan_per_seed"});
      if (s.contains("bands")) {
        c.bands.clear();
        for (const auto& b : s["bands"]) {
          check_keys(b, "spectral.bands[]", {"name", "pc_lo", "pc_hi", "declared_variance"});
          SpectralBand band;
          read(b, "name", band.name);
          read(b, "pc_lo", band.pc_lo);
          read(b, "pc_hi", band.pc_hi);
          read(b, "declared_variance", band.declared_variance);
          c.bands.push_back(band);
        }
      }
      read(s, "scan_width", c.scan_width);
      read(s, "scan_step", c.scan_step);
      read(s, "scan_per_seed", c.scan_per_seed);
    }
    read(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

// Leaves are scalars or whole arrays.
void diff_objects(const json& now, const json& base, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : now.items()) {
    const std::string path = prefix.empty() ? key : prefix + "/" + key;
    const bool nested = value.is_object() && base.contains(key) && base.at(key).is_object();
    if (nested) {
      diff_objects(value, base.at(key), path, out);
    } else if (!base.contains(key) || base.at(key) != value) {
      out.push_back(path + "=" + value.dump());
    }
  }
}

}  // namespace

std::vector<std::string> config_overrides(const PipelineConfig& cfg) {
  json now = to_json_object(cfg);
  json base = to_json_object(PipelineConfig{});
  now.erase("paths");
  base.erase("paths");
  std::vector<std::string> out;
  diff_objects(now, base, "", out);
  return out;
}

}  // namespace hsgeom
