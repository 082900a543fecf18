#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hsgeom/config.hpp"
#include "hsgeom/error.hpp"
#include "hsgeom/pipeline.hpp"
#include "hsgeom/report.hpp"
#include "hsgeom/spectral.hpp"
#include "hsgeom/synth.hpp"
#include "hsgeom/trace.hpp"

namespace fs = std::filesystem;
using namespace hsgeom;

namespace {

struct Common {
  std::string config;
  int jobs = 0;
};

PipelineConfig effective_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.jobs > 0) cfg.jobs = c.jobs;
  return cfg;
}

void print_warnings(const std::vector<std::string>& w) {
  for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

void run_synth(const std::string& spec_path, std::uint64_t master_seed, const std::string& scenario,
               const fs::path& out) {
  TraceSet t;
  if (scenario == "artifact") {
    t = gen_artifact_scenario(master_seed);
  } else {
    const SynthSpec spec = spec_path.empty() ? SynthSpec{} : load_synth_spec(spec_path);
    t = gen_traces(spec, master_seed);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_trace(t, out);
  std::cerr << "wrote " << t.size() << " vectors to " << out.string() << '\n';
}

fs::path run_calibrate(const PipelineConfig& cfg, const fs::path& trace, const fs::path& out) {
  const TraceSet t = load_trace(trace);
  const CalibrationArtifact a = calibrate(t, cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_calibration(a, out);
  std::cerr << "calibration: " << a.whitening.n_components() << " components, k = " << a.clusters.k() << '\n';
  return out;
}

void run_analyze(const PipelineConfig& cfg, const fs::path& trace, const fs::path& calib, const fs::path& out) {
  const TraceSet t = load_trace(trace);
  const CalibrationArtifact a = load_calibration(calib);
  const ExperimentResult r = analyze_experiment(t, a, cfg);
  write_experiment(r, make_header("analyze", cfg, {trace, calib}), out);
  print_warnings(r.warnings);
  std::cerr << "analyze: " << r.seeds.size() << " seeds, " << r.summaries.size() << " summaries\n";
}

void run_spectral(const PipelineConfig& cfg, const fs::path& trace, const std::string& calib_trace, bool scan,
                  const fs::path& out) {
  TraceSet t = load_trace(trace);
  std::vector<fs::path> inputs{trace};
  if (!calib_trace.empty()) {
    t = with_calibration(t, load_trace(calib_trace));
    inputs.emplace_back(calib_trace);
  }
  const TraceSet cal = t.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  if (cal.empty()) throw ValidationError("spectral analysis needs calibration rows");
  const WhiteningModel wm = fit_pca(cal.vectors(), cfg.spectral_components, cfg.epsilon);
  const OutputHeader header = make_header(scan ? "spectral --scan" : "spectral", cfg, inputs);
  const auto bands = analyze_bands(t, wm, cfg.bands, cfg);
  write_bands(bands, header, out);
  for (const auto& b : bands) print_warnings(b.warnings);
  if (scan) {
    const ScanResult s = sliding_scan(t, wm, cfg);
    write_scan(s, header, out, cfg.scan_per_seed);
    int flagged = 0;
    for (const auto& w : s.windows) flagged += w.bonferroni_significant;
    std::cerr << "scan: " << s.windows.size() << " windows, " << flagged << " Bonferroni-significant\n";
  }
  std::cerr << "spectral: " << bands.size() << " bands\n";
}

void run_report(const PipelineConfig& cfg, const fs::path& results, const fs::path& out) {
  std::vector<fs::path> sources;
  const auto experiments = load_results(results, &sources);
  const Report rep = build_report(experiments, cfg.stats.alpha);
  write_report(rep, make_header("report", cfg, sources), out);
  std::cerr << "report: " << rep.summaries.size() << " summary rows\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whitened hidden-state geometry: calibration, metrics, spectral bands and multi-seed statistics"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--jobs", common.jobs, "Worker threads for per-seed and per-band work")->check(CLI::PositiveNumber);

  std::string spec_path, scenario = "default", out, trace, calib, calib_trace, results;
  std::uint64_t master_seed = 0;
  bool scan = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic trace file pair");
  synth->add_option("--spec", spec_path, "Synthetic spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--master-seed", master_seed, "Master seed")->required();
  synth->add_option("--scenario", scenario, "default or artifact")->check(CLI::IsMember({"default", "artifact"}));
  synth->add_option("--out", out, "Output prefix")->required();

  auto* cal = app.add_subcommand("calibrate", "Fit whitening and clusters on calibration rows");
  cal->add_option("--trace", trace, "Trace prefix or file")->required();
  cal->add_option("--out", out, "Calibration artifact prefix")->required();

  auto* analyze = app.add_subcommand("analyze", "Whitening experiment over all seeds");
  analyze->add_option("--trace", trace, "Trace prefix or file")->required();
  analyze->add_option("--calibration", calib, "Calibration artifact prefix")->required();
  analyze->add_option("--out", out, "Output directory")->required();

  auto* spectral = app.add_subcommand("spectral", "Per-band analysis, optionally with the sliding scan");
  spectral->add_option("--trace", trace, "Trace prefix or file")->required();
  spectral->add_option("--calibration-trace", calib_trace, "Trace holding the calibration rows (default: --trace)");
  spectral->add_flag("--scan", scan, "Add the sliding-window scan");
  spectral->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Consolidated tables from a results directory");
  report->add_option("--results", results, "Results directory")->required();
  report->add_option("--out", out, "Output directory (default: --results)");

  auto* pipeline = app.add_subcommand("pipeline", "calibrate, analyze, spectral and report in one run");
  pipeline->add_option("--trace", trace, "Trace prefix or file")->required();
  pipeline->add_flag("--scan", scan, "Add the sliding-window scan");
  pipeline->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      run_synth(spec_path, master_seed, scenario, out);
      return 0;
    }
    const PipelineConfig cfg = effective_config(common);
    if (cal->parsed()) {
      run_calibrate(cfg, trace, out);
    } else if (analyze->parsed()) {
      run_analyze(cfg, trace, calib, out);
    } else if (spectral->parsed()) {
      run_spectral(cfg, trace, calib_trace, scan, out);
    } else if (report->parsed()) {
      run_report(cfg, results, out.empty() ? fs::path(results) : fs::path(out));
    } else if (pipeline->parsed()) {
      const fs::path dir = out;
      fs::create_directories(dir);
      const fs::path prefix = run_calibrate(cfg, trace, dir / "calibration");
      run_analyze(cfg, trace, prefix, dir);
      run_spectral(cfg, trace, "", scan, dir);
      run_report(cfg, dir, dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
