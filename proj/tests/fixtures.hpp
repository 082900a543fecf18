#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "hsgeom/synth.hpp"
#include "hsgeom/trace.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hsgeom-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Few seeds, short prompts, small hidden size: seconds to analyze.
inline hsgeom::SynthSpec small_spec(int hidden_dim = 96, int n_seeds = 3) {
  hsgeom::SynthSpec s;
  s.hidden_dim = hidden_dim;
  s.n_seeds = n_seeds;
  s.tokens_per_prompt = 12;
  s.n_prompts_per_condition = 12;
  s.n_calibration_prompts = 40;
  s.cluster_dims = 16;
  return s;
}

// Index records for `prompts` prompts of `tokens` tokens each, one condition and seed.
inline void append_prompts(std::vector<hsgeom::IndexRecord>& index, hsgeom::Condition c,
                           std::int64_t seed, int prompts, int tokens) {
  for (int p = 0; p < prompts; ++p) {
    for (int t = 0; t < tokens; ++t) {
      index.push_back({hsgeom::synth_prompt_id(c, p), c, seed, t, static_cast<std::int64_t>(index.size())});
    }
  }
}

inline hsgeom::FloatMatrix random_rows(std::size_t n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  hsgeom::FloatMatrix m(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

}  // namespace fixture
