#include "hsgeom/trace.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hsgeom/error.hpp"

namespace hsgeom {

using nlohmann::json;

static_assert(sizeof(float) == 4);

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::T1: return "T1";
    case Condition::T2: return "T2";
    case Condition::T3: return "T3";
    case Condition::Calibration: return "CALIBRATION";
  }
  return "?";
}

Condition parse_condition(std::string_view s) {
  if (s == "T1") return Condition::T1;
  if (s == "T2") return Condition::T2;
  if (s == "T3") return Condition::T3;
  if (s == "CALIBRATION") return Condition::Calibration;
  throw ValidationError("unknown condition '" + std::string(s) + "'");
}

namespace {

constexpr std::size_t kMaxListed = 10;

struct Problems {
  std::vector<std::string> items;
  std::size_t total = 0;
  void add(std::string msg) {
    ++total;
    if (items.size() < kMaxListed) items.push_back(std::move(msg));
  }
  void raise_if_any(std::string_view what) const {
    if (total == 0) return;
    std::ostringstream os;
    os << what << " (" << total << " offending record" << (total == 1 ? "" : "s") << ")";
    for (const auto& s : items) os << "\n  " << s;
    if (total > items.size()) os << "\n  ...";
    throw ValidationError(os.str());
  }
};

std::string describe(std::size_t i, const IndexRecord& r) {
  std::ostringstream os;
  os << "record " << i << " {prompt_id=" << r.prompt_id << ", condition=" << to_string(r.condition)
     << ", seed=" << r.seed << ", token_position=" << r.token_position << ", row=" << r.row << "}";
  return os.str();
}

struct GroupKey {
  std::string prompt;
  std::int64_t seed;
  bool operator==(const GroupKey&) const = default;
};

struct GroupKeyHash {
  std::size_t operator()(const GroupKey& k) const {
    return std::hash<std::string>{}(k.prompt) ^ (std::hash<std::int64_t>{}(k.seed) * 0x9e3779b97f4a7c15ULL);
  }
};

}  // namespace

void validate(const TraceMetadata& metadata, const FloatMatrix& vectors,
              const std::vector<IndexRecord>& index) {
  if (metadata.hidden_dim < 0) throw ValidationError("hidden_dim must be non-negative");
  if (vectors.cols() != metadata.hidden_dim) {
    throw ValidationError("dimension mismatch: hidden_dim " + std::to_string(metadata.hidden_dim) +
                          " but matrix has " + std::to_string(vectors.cols()) + " columns");
  }
  if (static_cast<std::size_t>(vectors.rows()) != index.size()) {
    throw ValidationError("row count mismatch: " + std::to_string(index.size()) +
                          " index records for " + std::to_string(vectors.rows()) + " matrix rows");
  }

  {
    Problems p;
    std::vector<char> seen(index.size(), 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto row = index[i].row;
      if (row < 0 || static_cast<std::size_t>(row) >= index.size()) {
        p.add(describe(i, index[i]) + ": row out of range");
      } else if (seen[row]++) {
        p.add(describe(i, index[i]) + ": row referenced twice");
      }
    }
    p.raise_if_any("index rows are not a bijection onto matrix rows");
  }

  {
    Problems p;
    std::set<std::tuple<std::string, std::int64_t, std::int64_t>> keys;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto& r = index[i];
      if (!keys.emplace(r.prompt_id, r.seed, r.token_position).second) {
        p.add(describe(i, r) + ": duplicate (prompt_id, seed, token_position)");
      }
    }
    p.raise_if_any("duplicate key in trace index");
  }

  {
    Problems p;
    std::unordered_map<GroupKey, std::int64_t, GroupKeyHash> next_pos;
    std::unordered_map<std::string, Condition> prompt_condition;
    std::optional<std::int64_t> calibration_seed;
    for (std::size_t i = 0; i < index.size(); ++i) {
      const auto& r = index[i];
      auto [it, fresh] = next_pos.try_emplace(GroupKey{r.prompt_id, r.seed}, 0);
      if (r.token_position != it->second) {
        p.add(describe(i, r) + ": expected token_position " + std::to_string(it->second));
      }
      it->second = r.token_position + 1;

      auto [pc, first] = prompt_condition.try_emplace(r.prompt_id, r.condition);
      if (!first && pc->second != r.condition) {
        p.add(describe(i, r) + ": prompt already labelled " + std::string(to_string(pc->second)));
      }
      if (r.condition == Condition::Calibration) {
        if (!calibration_seed) calibration_seed = r.seed;
        if (*calibration_seed != r.seed) {
          p.add(describe(i, r) + ": calibration rows must share seed " +
                std::to_string(*calibration_seed));
        }
      }
    }
    p.raise_if_any("trace index violates grouping invariants");
  }
}

TraceSet::TraceSet(TraceMetadata metadata, FloatMatrix vectors, std::vector<IndexRecord> index)
    : metadata_(std::move(metadata)), vectors_(std::move(vectors)), index_(std::move(index)) {
  if (vectors_.rows() == 0 && vectors_.cols() == 0) vectors_.resize(0, metadata_.hidden_dim);
  validate(metadata_, vectors_, index_);
}

TraceSet TraceSet::subset(const std::function<bool(const IndexRecord&)>& keep) const {
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < index_.size(); ++i) {
    if (keep(index_[i])) picked.push_back(i);
  }
  FloatMatrix out(static_cast<Eigen::Index>(picked.size()), metadata_.hidden_dim);
  std::vector<IndexRecord> idx;
  idx.reserve(picked.size());
  for (std::size_t j = 0; j < picked.size(); ++j) {
    const auto& r = index_[picked[j]];
    out.row(static_cast<Eigen::Index>(j)) = vectors_.row(r.row);
    IndexRecord copy = r;
    copy.row = static_cast<std::int64_t>(j);
    idx.push_back(std::move(copy));
  }
  return TraceSet(metadata_, std::move(out), std::move(idx));
}

std::vector<std::int64_t> TraceSet::seeds(bool experimental_only) const {
  std::set<std::int64_t> s;
  for (const auto& r : index_) {
    if (experimental_only && r.condition == Condition::Calibration) continue;
    s.insert(r.seed);
  }
  return {s.begin(), s.end()};
}

bool TraceSet::operator==(const TraceSet& other) const {
  if (!(metadata_ == other.metadata_) || index_.size() != other.index_.size()) return false;
  for (std::size_t i = 0; i < index_.size(); ++i) {
    const auto& a = index_[i];
    const auto& b = other.index_[i];
    if (a.prompt_id != b.prompt_id || a.condition != b.condition || a.seed != b.seed ||
        a.token_position != b.token_position) {
      return false;
    }
    const auto ra = vectors_.row(a.row);
    const auto rb = other.vectors_.row(b.row);
    if (std::memcmp(ra.data(), rb.data(), sizeof(float) * metadata_.hidden_dim) != 0) return false;
  }
  return true;
}

TracePaths trace_paths(const std::filesystem::path& prefix_or_file) {
  std::string s = prefix_or_file.string();
  for (std::string_view suffix : {".manifest.json", ".vectors.bin"}) {
    if (s.size() > suffix.size() && s.ends_with(suffix)) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  return {s + ".manifest.json", s + ".vectors.bin"};
}

namespace {

void write_le_floats(std::ostream& os, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(data[i]);
      bits = ((bits & 0xff) << 24) | ((bits & 0xff00) << 8) | ((bits >> 8) & 0xff00) | (bits >> 24);
      os.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

void read_le_floats(std::istream& is, float* data, std::size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(data[i]);
      bits = ((bits & 0xff) << 24) | ((bits & 0xff00) << 8) | ((bits >> 8) & 0xff00) | (bits >> 24);
      data[i] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace

void write_trace(const TraceSet& t, const std::filesystem::path& prefix) {
  validate(t.metadata(), t.vectors(), t.index());
  const auto paths = trace_paths(prefix);
  if (paths.manifest.has_parent_path()) {
    std::filesystem::create_directories(paths.manifest.parent_path());
  }

  json index = json::array();
  for (const auto& r : t.index()) {
    index.push_back({{"prompt_id", r.prompt_id},
                     {"condition", std::string(to_string(r.condition))},
                     {"seed", r.seed},
                     {"token_position", r.token_position},
                     {"row", r.row}});
  }
  const auto& md = t.metadata();
  json manifest = {{"format", "hsgeom-trace"},
                   {"version", 1},
                   {"metadata",
                    {{"model_name", md.model_name},
                     {"hidden_dim", md.hidden_dim},
                     {"max_tokens", md.max_tokens},
                     {"creation_info", md.creation_info},
                     {"n_rows", t.size()}}},
                   {"index", std::move(index)}};

  std::ofstream mf(paths.manifest);
  if (!mf) throw IoError("cannot open " + paths.manifest.string() + " for writing");
  mf << manifest.dump(1) << '\n';
  if (!mf) throw IoError("failed writing " + paths.manifest.string());

  std::ofstream vf(paths.vectors, std::ios::binary);
  if (!vf) throw IoError("cannot open " + paths.vectors.string() + " for writing");
  const auto& v = t.vectors();
  write_le_floats(vf, v.data(), static_cast<std::size_t>(v.size()));
  if (!vf) throw IoError("failed writing " + paths.vectors.string());
}

TraceSet load_trace(const std::filesystem::path& prefix_or_file) {
  const auto paths = trace_paths(prefix_or_file);
  std::ifstream mf(paths.manifest);
  if (!mf) throw IoError("cannot open " + paths.manifest.string());

  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + paths.manifest.string() + ": " + e.what());
  }

  TraceMetadata md;
  std::vector<IndexRecord> index;
  std::size_t n_rows = 0;
  try {
    if (manifest.at("format").get<std::string>() != "hsgeom-trace") {
      throw ValidationError("malformed header: unexpected format tag");
    }
    const auto& m = manifest.at("metadata");
    md.model_name = m.at("model_name").get<std::string>();
    md.hidden_dim = m.at("hidden_dim").get<int>();
    md.max_tokens = m.at("max_tokens").get<int>();
    md.creation_info = m.value("creation_info", std::string{});
    n_rows = m.at("n_rows").get<std::size_t>();
    const auto& idx = manifest.at("index");
    index.reserve(idx.size());
    for (const auto& e : idx) {
      index.push_back({e.at("prompt_id").get<std::string>(),
                       parse_condition(e.at("condition").get<std::string>()),
                       e.at("seed").get<std::int64_t>(), e.at("token_position").get<std::int64_t>(),
                       e.at("row").get<std::int64_t>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed header in " + paths.manifest.string() + ": " + e.what());
  }
  if (md.hidden_dim < 0) throw ValidationError("malformed header: negative hidden_dim");
  if (index.size() != n_rows) {
    throw ValidationError("malformed header: n_rows " + std::to_string(n_rows) + " but " +
                          std::to_string(index.size()) + " index records");
  }

  std::error_code ec;
  const auto bytes = std::filesystem::file_size(paths.vectors, ec);
  if (ec) throw IoError("cannot stat " + paths.vectors.string() + ": " + ec.message());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(n_rows) * md.hidden_dim * sizeof(float);
  if (bytes != expected) {
    std::ostringstream os;
    os << "dimension mismatch: manifest declares " << n_rows << " x " << md.hidden_dim << " ("
       << expected << " bytes) but payload has " << bytes << " bytes";
    if (n_rows > 0 && bytes % (n_rows * sizeof(float)) == 0) {
      os << " (consistent with hidden_dim " << bytes / (n_rows * sizeof(float)) << ")";
    }
    throw ValidationError(os.str());
  }

  FloatMatrix v(static_cast<Eigen::Index>(n_rows), md.hidden_dim);
  std::ifstream vf(paths.vectors, std::ios::binary);
  if (!vf) throw IoError("cannot open " + paths.vectors.string());
  read_le_floats(vf, v.data(), static_cast<std::size_t>(v.size()));
  if (!vf) throw IoError("short read on " + paths.vectors.string());

  return TraceSet(std::move(md), std::move(v), std::move(index));
}

Partition partition(const TraceSet& t) {
  bool any_calibration = std::any_of(t.index().begin(), t.index().end(), [](const IndexRecord& r) {
    return r.condition == Condition::Calibration;
  });
  if (!any_calibration) throw ValidationError("trace holds no calibration rows");

  Partition out;
  out.calibration = t.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  for (auto seed : t.seeds(true)) {
    out.experimental.emplace(seed, t.subset([seed](const IndexRecord& r) {
      return r.condition != Condition::Calibration && r.seed == seed;
    }));
  }
  return out;
}

TraceSet with_calibration(const TraceSet& experimental, const TraceSet& calibration) {
  if (experimental.hidden_dim() != calibration.hidden_dim()) {
    throw ValidationError("calibration trace has hidden_dim " + std::to_string(calibration.hidden_dim()) +
                          ", experimental trace " + std::to_string(experimental.hidden_dim()));
  }
  const TraceSet cal = calibration.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  const TraceSet exp = experimental.subset([](const IndexRecord& r) { return r.condition != Condition::Calibration; });
  FloatMatrix v(static_cast<Eigen::Index>(cal.size() + exp.size()), experimental.hidden_dim());
  v.topRows(static_cast<Eigen::Index>(cal.size())) = cal.vectors();
  v.bottomRows(static_cast<Eigen::Index>(exp.size())) = exp.vectors();
  std::vector<IndexRecord> idx = cal.index();
  for (IndexRecord r : exp.index()) {
    r.row += static_cast<std::int64_t>(cal.size());
    idx.push_back(std::move(r));
  }
  return TraceSet(experimental.metadata(), std::move(v), std::move(idx));
}

}  // namespace hsgeom
