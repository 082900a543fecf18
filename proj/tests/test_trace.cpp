#include <doctest.h>

#include <fstream>
#include <vector>

#include "fixtures.hpp"
#include "hsgeom/error.hpp"
#include "hsgeom/trace.hpp"

using namespace hsgeom;

namespace {

TraceMetadata meta(int dim) { return {"unit", dim, 60, "test"}; }

TraceSet mixed_trace(int dim = 8) {
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::Calibration, kCalibrationSeed, 3, 4);
  for (std::int64_t seed : {1, 2}) {
    for (Condition c : kExperimentalConditions) fixture::append_prompts(index, c, seed, 2, 3);
  }
  return TraceSet(meta(dim), fixture::random_rows(index.size(), dim, 9), index);
}

}  // namespace

TEST_SUITE("trace") {

TEST_CASE("conditions parse and print") {
  for (Condition c : {Condition::T1, Condition::T2, Condition::T3, Condition::Calibration}) {
    CHECK(parse_condition(to_string(c)) == c);
  }
  CHECK_THROWS_AS(parse_condition("T4"), ValidationError);
}

TEST_CASE("empty trace writes a zero-row payload") {
  fixture::TempDir dir("trace-empty");
  const TraceSet t(meta(768), FloatMatrix(0, 768), {});
  write_trace(t, dir / "empty");
  CHECK(std::filesystem::file_size(trace_paths(dir / "empty").vectors) == 0);
  CHECK(load_trace(dir / "empty") == t);
}

TEST_CASE("a zero row is 3072 zero bytes") {
  fixture::TempDir dir("trace-zero");
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::T1, 1, 1, 1);
  write_trace(TraceSet(meta(768), FloatMatrix::Zero(1, 768), index), dir / "z");
  const auto file = trace_paths(dir / "z").vectors;
  REQUIRE(std::filesystem::file_size(file) == 3072);
  std::ifstream in(file, std::ios::binary);
  std::vector<char> bytes(3072);
  in.read(bytes.data(), 3072);
  CHECK(std::all_of(bytes.begin(), bytes.end(), [](char b) { return b == 0; }));
}

TEST_CASE("round trip of a 100-row trace is bit-identical") {
  fixture::TempDir dir("trace-rt");
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::T2, 5, 10, 10);
  const TraceSet t(meta(32), fixture::random_rows(100, 32, 4), index);
  write_trace(t, dir / "rt");
  const TraceSet back = load_trace(trace_paths(dir / "rt").manifest);
  CHECK(back == t);
  CHECK(std::memcmp(back.vectors().data(), t.vectors().data(), sizeof(float) * 3200) == 0);
  CHECK(load_trace(trace_paths(dir / "rt").vectors) == t);
}

TEST_CASE("payload sized for another dimension is rejected") {
  fixture::TempDir dir("trace-dim");
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::T1, 1, 1, 2);
  write_trace(TraceSet(meta(512), fixture::random_rows(2, 512, 1), index), dir / "a");
  // Rewrite the manifest to claim 768 columns.
  const auto mpath = trace_paths(dir / "a").manifest;
  std::ifstream in(mpath);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto at = text.find("\"hidden_dim\": 512");
  REQUIRE(at != std::string::npos);
  text.replace(at, 17, "\"hidden_dim\": 768");
  std::ofstream(mpath) << text;
  try {
    load_trace(dir / "a");
    FAIL("expected a dimension mismatch");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
    CHECK(std::string(e.what()).find("hidden_dim 512") != std::string::npos);
  }
}

TEST_CASE("duplicate index record is rejected") {
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::T1, 1, 1, 2);
  index.push_back(index.front());
  index.back().row = 2;
  try {
    TraceSet(meta(4), fixture::random_rows(3, 4, 1), index);
    FAIL("expected duplicate-key error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
}

TEST_CASE("invariant violations") {
  std::vector<IndexRecord> index;
  fixture::append_prompts(index, Condition::T1, 1, 1, 3);
  SUBCASE("row count") { CHECK_THROWS_AS(validate(meta(4), fixture::random_rows(2, 4, 1), index), ValidationError); }
  SUBCASE("columns") { CHECK_THROWS_AS(validate(meta(5), fixture::random_rows(3, 4, 1), index), ValidationError); }
  SUBCASE("position gap") {
    index[2].token_position = 5;
    CHECK_THROWS_AS(validate(meta(4), fixture::random_rows(3, 4, 1), index), ValidationError);
  }
  SUBCASE("prompt in two conditions") {
    fixture::append_prompts(index, Condition::T2, 2, 1, 1);
    index.back().prompt_id = index.front().prompt_id;
    CHECK_THROWS_AS(validate(meta(4), fixture::random_rows(4, 4, 1), index), ValidationError);
  }
  SUBCASE("two calibration seeds") {
    fixture::append_prompts(index, Condition::Calibration, 42, 1, 1);
    fixture::append_prompts(index, Condition::Calibration, 43, 1, 1);
    index.back().prompt_id = "CAL-009";
    CHECK_THROWS_AS(validate(meta(4), fixture::random_rows(5, 4, 1), index), ValidationError);
  }
  SUBCASE("rows not a bijection") {
    index[1].row = 0;
    CHECK_THROWS_AS(validate(meta(4), fixture::random_rows(3, 4, 1), index), ValidationError);
  }
}

TEST_CASE("partition splits calibration and seeds") {
  const TraceSet t = mixed_trace();
  const Partition p = partition(t);
  CHECK(p.calibration.size() == 12);
  REQUIRE(p.experimental.size() == 2);
  CHECK(p.experimental.count(1) == 1);
  CHECK(p.experimental.count(2) == 1);
  CHECK(p.experimental.at(1).size() == 18);
  CHECK(t.seeds() == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("partition of calibration-only trace has no seeds") {
  const TraceSet t = mixed_trace().subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  const Partition p = partition(t);
  CHECK(p.calibration.size() == t.size());
  CHECK(p.experimental.empty());
}

TEST_CASE("partition without calibration rows fails") {
  const TraceSet t = mixed_trace().subset([](const IndexRecord& r) { return r.condition != Condition::Calibration; });
  CHECK_THROWS_AS(partition(t), ValidationError);
}

TEST_CASE("subset renumbers rows and keeps vectors") {
  const TraceSet t = mixed_trace();
  const TraceSet s = t.subset([](const IndexRecord& r) { return r.condition == Condition::T3; });
  CHECK(s.size() == 12);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.index()[i].row == static_cast<std::int64_t>(i));
  std::size_t j = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.index()[i].condition != Condition::T3) continue;
    CHECK(s.row_of(j) == t.row_of(i));
    ++j;
  }
}

TEST_CASE("with_calibration combines two traces") {
  const TraceSet t = mixed_trace();
  const TraceSet cal = t.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  const TraceSet exp = t.subset([](const IndexRecord& r) { return r.condition != Condition::Calibration; });
  const TraceSet both = with_calibration(exp, cal);
  CHECK(both.size() == t.size());
  CHECK(partition(both).calibration == cal);
  const TraceSet other(meta(3), FloatMatrix(0, 3), {});
  CHECK_THROWS_AS(with_calibration(exp, other), ValidationError);
}

TEST_CASE("trace paths accept either file or the prefix") {
  CHECK(trace_paths("a/b").manifest == "a/b.manifest.json");
  CHECK(trace_paths("a/b.vectors.bin").manifest == "a/b.manifest.json");
  CHECK(trace_paths("a/b.manifest.json").vectors == "a/b.vectors.bin");
}

TEST_CASE("missing files are IO errors") {
  CHECK_THROWS_AS(load_trace("/nonexistent/trace"), IoError);
}

}
