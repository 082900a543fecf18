#pragma once

// Hidden-state trace data model and its on-disk format.
//
// A trace is a pair of files sharing a prefix:
//   <prefix>.manifest.json  metadata + one index record per row
//   <prefix>.vectors.bin    raw little-endian float32, row-major, n_rows x hidden_dim
//
// Only generated-token states are stored; prompt tokens never contribute rows.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hsgeom {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Condition { T1, T2, T3, Calibration };

inline constexpr Condition kExperimentalConditions[] = {Condition::T1, Condition::T2,
                                                        Condition::T3};

std::string_view to_string(Condition c);
/// Throws ValidationError on anything outside the closed set.
Condition parse_condition(std::string_view s);

inline constexpr std::int64_t kCalibrationSeed = 42;

struct IndexRecord {
  std::string prompt_id;
  Condition condition = Condition::T1;
  std::int64_t seed = 0;
  std::int64_t token_position = 0;
  std::int64_t row = 0;

  bool operator==(const IndexRecord&) const = default;
};

struct TraceMetadata {
  std::string model_name;
  int hidden_dim = 0;
  int max_tokens = 0;
  std::string creation_info;

  bool operator==(const TraceMetadata&) const = default;
};

/// Immutable collection of per-token hidden states.
///
/// Invariants (checked on construction):
///  - index rows are a bijection onto matrix rows
///  - hidden_dim equals the matrix column count
///  - (prompt_id, seed) keys are unique per token_position, and positions run
///    0, 1, 2, ... in index order within each group
///  - each prompt_id belongs to exactly one condition
///  - all calibration rows share one seed
class TraceSet {
 public:
  TraceSet() = default;
  TraceSet(TraceMetadata metadata, FloatMatrix vectors, std::vector<IndexRecord> index);

  const TraceMetadata& metadata() const { return metadata_; }
  const FloatMatrix& vectors() const { return vectors_; }
  const std::vector<IndexRecord>& index() const { return index_; }

  std::size_t size() const { return index_.size(); }
  int hidden_dim() const { return metadata_.hidden_dim; }
  bool empty() const { return index_.empty(); }

  /// Row vector for index record i (not matrix row i).
  auto row_of(std::size_t i) const { return vectors_.row(index_[i].row); }

  /// Records (and their rows) for which keep() is true, in index order.
  /// Output rows are renumbered 0..m-1.
  TraceSet subset(const std::function<bool(const IndexRecord&)>& keep) const;

  std::vector<std::int64_t> seeds(bool experimental_only = true) const;

  bool operator==(const TraceSet& other) const;

 private:
  TraceMetadata metadata_;
  FloatMatrix vectors_;
  std::vector<IndexRecord> index_;
};

/// Checks every invariant and throws ValidationError listing offending records.
void validate(const TraceMetadata& metadata, const FloatMatrix& vectors,
              const std::vector<IndexRecord>& index);

struct TracePaths {
  std::filesystem::path manifest;
  std::filesystem::path vectors;
};

/// Accepts a bare prefix or either file name of the pair.
TracePaths trace_paths(const std::filesystem::path& prefix_or_file);

void write_trace(const TraceSet& t, const std::filesystem::path& prefix);
TraceSet load_trace(const std::filesystem::path& prefix_or_file);

struct Partition {
  TraceSet calibration;
  std::map<std::int64_t, TraceSet> experimental;
};

/// Calibration rows of `calibration` followed by the experimental rows of
/// `experimental`. Throws ValidationError on a hidden_dim mismatch.
TraceSet with_calibration(const TraceSet& experimental, const TraceSet& calibration);

/// Splits calibration rows from experimental rows, one TraceSet per seed.
/// Throws ValidationError when the trace holds no calibration rows.
Partition partition(const TraceSet& t);

}  // namespace hsgeom
