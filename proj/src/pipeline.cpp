#include "hsgeom/pipeline.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "hsgeom/error.hpp"
#include "hsgeom/parallel.hpp"

namespace hsgeom {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "calibration payloads are written in host order, which must be little-endian");

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) {
    if (EVP_DigestUpdate(ctx_, data, size) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) throw Error("SHA-256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

struct CalibrationPaths {
  std::filesystem::path manifest, payload;
};

CalibrationPaths calibration_paths(const std::filesystem::path& p) {
  std::string s = p.string();
  for (const std::string suffix : {".calib.json", ".calib.bin"}) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  return {s + ".calib.json", s + ".calib.bin"};
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  Sha256 h;
  h.update(data, size);
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for hashing");
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

CalibrationArtifact calibrate(const TraceSet& traces, const PipelineConfig& cfg) {
  const TraceSet cal = traces.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  if (cal.empty()) throw ValidationError("trace holds no calibration rows");
  if (static_cast<int>(cal.size()) < cfg.k) {
    throw ValidationError("calibration has n = " + std::to_string(cal.size()) + " vectors < k = " +
                          std::to_string(cfg.k));
  }
  CalibrationArtifact a;
  a.whitening = fit_pca(cal.vectors(), cfg.n_components, cfg.epsilon);
  a.clusters = fit_kmeans(whiten(a.whitening, cal.vectors()), cfg.k, cfg.kmeans);
  a.source_digest = sha256_hex(cal.vectors().data(), static_cast<std::size_t>(cal.vectors().size()) * sizeof(float));
  return a;
}

void write_calibration(const CalibrationArtifact& a, const std::filesystem::path& prefix) {
  const auto paths = calibration_paths(prefix);
  const auto& w = a.whitening;
  const auto& c = a.clusters;
  std::vector<double> payload;
  payload.insert(payload.end(), w.mean.data(), w.mean.data() + w.mean.size());
  payload.insert(payload.end(), w.eigenvectors.data(), w.eigenvectors.data() + w.eigenvectors.size());
  payload.insert(payload.end(), w.eigenvalues.data(), w.eigenvalues.data() + w.eigenvalues.size());
  payload.insert(payload.end(), c.centroids.data(), c.centroids.data() + c.centroids.size());
  const std::size_t bytes = payload.size() * sizeof(double);

  json j = {{"format", "hsgeom-calibration"},
            {"version", 1},
            {"dim", w.dim()},
            {"n_components", w.n_components()},
            {"epsilon", w.epsilon},
            {"total_variance", w.total_variance},
            {"k", c.k()},
            {"kmeans",
             {{"batch_size", c.config.batch_size},
              {"n_init", c.config.n_init},
              {"seed", c.config.rng_seed},
              {"max_iterations", c.config.max_iterations},
              {"tolerance", c.config.tolerance}}},
            {"inertia", c.inertia},
            {"source_digest", a.source_digest},
            {"payload_sha256", sha256_hex(payload.data(), bytes)}};
  std::ofstream mf(paths.manifest);
  if (!mf) throw IoError("cannot open " + paths.manifest.string() + " for writing");
  mf << j.dump(2) << '\n';
  if (!mf) throw IoError("failed writing " + paths.manifest.string());
  std::ofstream pf(paths.payload, std::ios::binary);
  if (!pf) throw IoError("cannot open " + paths.payload.string() + " for writing");
  pf.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (!pf) throw IoError("failed writing " + paths.payload.string());
}

CalibrationArtifact load_calibration(const std::filesystem::path& prefix_or_file) {
  const auto paths = calibration_paths(prefix_or_file);
  std::ifstream mf(paths.manifest);
  if (!mf) throw IoError("cannot open " + paths.manifest.string());
  json j;
  try {
    j = json::parse(mf);
  } catch (const json::exception& e) {
    throw ValidationError("malformed calibration manifest: " + std::string(e.what()));
  }
  CalibrationArtifact a;
  int dim = 0, r = 0, k = 0;
  std::string expected_sha;
  try {
    if (j.at("format") != "hsgeom-calibration" || j.at("version") != 1) {
      throw ValidationError("malformed calibration manifest: unknown format or version");
    }
    dim = j.at("dim").get<int>();
    r = j.at("n_components").get<int>();
    k = j.at("k").get<int>();
    a.whitening.epsilon = j.at("epsilon").get<double>();
    a.whitening.total_variance = j.at("total_variance").get<double>();
    const auto& km = j.at("kmeans");
    a.clusters.config.batch_size = km.at("batch_size").get<int>();
    a.clusters.config.n_init = km.at("n_init").get<int>();
    a.clusters.config.rng_seed = km.at("seed").get<std::uint64_t>();
    a.clusters.config.max_iterations = km.at("max_iterations").get<int>();
    a.clusters.config.tolerance = km.at("tolerance").get<double>();
    a.clusters.inertia = j.at("inertia").get<double>();
    a.source_digest = j.at("source_digest").get<std::string>();
    expected_sha = j.at("payload_sha256").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError("malformed calibration manifest: " + std::string(e.what()));
  }
  if (dim < 1 || r < 1 || r > dim || k < 1) throw ValidationError("malformed calibration manifest: bad sizes");

  const std::size_t count = static_cast<std::size_t>(dim) + static_cast<std::size_t>(dim) * r + r +
                            static_cast<std::size_t>(k) * r;
  std::vector<double> payload(count);
  std::ifstream pf(paths.payload, std::ios::binary | std::ios::ate);
  if (!pf) throw IoError("cannot open " + paths.payload.string());
  const auto size = static_cast<std::size_t>(pf.tellg());
  if (size != count * sizeof(double)) {
    throw ValidationError("dimension mismatch: calibration payload has " + std::to_string(size) +
                          " bytes, manifest implies " + std::to_string(count * sizeof(double)));
  }
  pf.seekg(0);
  pf.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(size));
  if (!pf) throw IoError("short read on " + paths.payload.string());
  if (sha256_hex(payload.data(), size) != expected_sha) {
    throw ValidationError("calibration payload digest does not match its manifest");
  }

  const double* p = payload.data();
  a.whitening.mean = Eigen::Map<const Eigen::VectorXd>(p, dim);
  p += dim;
  a.whitening.eigenvectors = Eigen::Map<const Eigen::MatrixXd>(p, dim, r);
  p += static_cast<std::size_t>(dim) * r;
  a.whitening.eigenvalues = Eigen::Map<const Eigen::VectorXd>(p, r);
  p += r;
  a.clusters.centroids = Eigen::Map<const RowMatrix>(p, k, r);
  return a;
}

std::vector<PairwiseResult> ExperimentResult::all_results() const {
  std::vector<PairwiseResult> out;
  for (const auto& s : seeds) out.insert(out.end(), s.results.begin(), s.results.end());
  return out;
}

ExperimentResult analyze_experiment(const TraceSet& traces, const CalibrationArtifact& calibration,
                                    const PipelineConfig& cfg) {
  if (traces.hidden_dim() != calibration.whitening.dim()) {
    throw ValidationError("trace dimension " + std::to_string(traces.hidden_dim()) +
                          " does not match calibration dimension " +
                          std::to_string(calibration.whitening.dim()));
  }
  ExperimentResult out;
  const auto present = traces.seeds(true);
  std::vector<std::int64_t> seeds;
  for (auto s : cfg.seeds) {
    if (std::find(present.begin(), present.end(), s) != present.end()) {
      seeds.push_back(s);
    } else {
      out.warnings.push_back("seed " + std::to_string(s) + " not present in trace; skipped");
    }
  }
  out.seeds.resize(seeds.size());
  parallel_for(seeds.size(), cfg.jobs, [&](std::size_t i) {
    const std::int64_t seed = seeds[i];
    const TraceSet rows = traces.subset([seed](const IndexRecord& r) {
      return r.seed == seed && r.condition != Condition::Calibration;
    });
    SeedAnalysis& sa = out.seeds[i];
    sa.seed = seed;
    sa.table = compute_metric_table(rows, calibration.whitening, calibration.clusters, cfg.metric);
    sa.prompts = prompt_aggregate(sa.table.records);
    SeedRun run = run_seed(sa.prompts, sa.table.records, seed, cfg.metrics, cfg.stats);
    sa.results = std::move(run.results);
    sa.warnings = std::move(run.warnings);
    for (auto m : cfg.metrics) {
      if (auto kw = kruskal_for_seed(sa.prompts, seed, m)) sa.kruskal.push_back(*kw);
    }
  });
  for (const auto& s : out.seeds) {
    out.warnings.insert(out.warnings.end(), s.warnings.begin(), s.warnings.end());
    for (const auto& f : s.table.flagged) {
      out.warnings.push_back("seed " + std::to_string(f.seed) + " prompt " + f.prompt_id + " token " +
                             std::to_string(f.token_position) + ": " + f.reason);
    }
  }
  out.summaries = summarize(out.all_results(), cfg.stats.alpha);
  return out;
}

}  // namespace hsgeom
