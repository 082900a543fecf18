#include "hsgeom/spectral.hpp"

#include <algorithm>
#include <map>

#include "hsgeom/clustering.hpp"
#include "hsgeom/error.hpp"
#include "hsgeom/metrics.hpp"
#include "hsgeom/parallel.hpp"
#include "hsgeom/rng.hpp"

namespace hsgeom {

std::uint64_t band_cluster_seed(std::uint64_t base, const SpectralBand& band) {
  return derive_seed(base, {label_tag("band"), static_cast<std::uint64_t>(band.pc_lo),
                            static_cast<std::uint64_t>(band.pc_hi)});
}

namespace {

std::vector<Metric> band_metrics(const PipelineConfig& cfg) {
  std::vector<Metric> out;
  for (auto m : kBandMetrics) {
    if (std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end()) out.push_back(m);
  }
  if (out.empty()) throw ValidationError("no band-level metric selected (entropy, max_sim, whitened_norm)");
  return out;
}

}  // namespace

std::vector<BandResult> analyze_bands(const TraceSet& traces, const WhiteningModel& wm,
                                      std::span<const SpectralBand> bands, const PipelineConfig& cfg) {
  if (traces.hidden_dim() != wm.dim()) {
    throw ValidationError("trace dimension " + std::to_string(traces.hidden_dim()) +
                          " does not match whitening model dimension " + std::to_string(wm.dim()));
  }
  for (const auto& b : bands) check_band(wm, b);
  const auto metrics = band_metrics(cfg);
  std::vector<BandResult> out(bands.size());
  if (bands.empty()) return out;

  const TraceSet cal = traces.subset([](const IndexRecord& r) { return r.condition == Condition::Calibration; });
  if (cal.empty()) throw ValidationError("spectral analysis needs calibration rows in the trace");
  const RowMatrix cal_scores = project(wm, cal.vectors());

  std::vector<ClusterModel> clusters(bands.size());
  parallel_for(bands.size(), cfg.jobs, [&](std::size_t b) {
    const SpectralBand& band = bands[b];
    const int k = adapted_k(band.width());
    if (static_cast<int>(cal.size()) < k) {
      throw ValidationError("band '" + band.name + "': calibration has n = " + std::to_string(cal.size()) +
                            " vectors < k = " + std::to_string(k));
    }
    KMeansConfig kcfg = cfg.kmeans;
    kcfg.rng_seed = band_cluster_seed(cfg.kmeans.rng_seed, band);
    clusters[b] = fit_kmeans(whiten_scores(wm, cal_scores, band), k, kcfg);
    out[b].band = band;
    out[b].k_used = k;
    out[b].variance_fraction = variance_fraction(wm, band);
  });

  const auto present = traces.seeds(true);
  std::vector<std::int64_t> seeds;
  std::vector<std::string> missing;
  for (auto s : cfg.seeds) {
    if (std::find(present.begin(), present.end(), s) != present.end()) {
      seeds.push_back(s);
    } else {
      missing.push_back("seed " + std::to_string(s) + " not present in trace; skipped");
    }
  }

  // slots[seed][band]
  std::vector<std::vector<SeedRun>> slots(seeds.size(), std::vector<SeedRun>(bands.size()));
  parallel_for(seeds.size(), cfg.jobs, [&](std::size_t i) {
    const std::int64_t seed = seeds[i];
    const TraceSet rows = traces.subset([seed](const IndexRecord& r) {
      return r.seed == seed && r.condition != Condition::Calibration;
    });
    const RowMatrix scores = project(wm, rows.vectors());
    for (std::size_t b = 0; b < bands.size(); ++b) {
      const MetricTable table =
          compute_metric_table(rows, whiten_scores(wm, scores, bands[b]), clusters[b], cfg.metric);
      SeedRun run = run_seed(prompt_aggregate(table.records), table.records, seed, metrics, cfg.stats);
      for (const auto& f : table.flagged) {
        run.warnings.push_back("band " + bands[b].name + " seed " + std::to_string(seed) + " prompt " +
                               f.prompt_id + " token " + std::to_string(f.token_position) + ": " + f.reason);
      }
      slots[i][b] = std::move(run);
    }
  });

  for (std::size_t b = 0; b < bands.size(); ++b) {
    auto& res = out[b];
    res.warnings = missing;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto& run = slots[i][b];
      res.results.insert(res.results.end(), run.results.begin(), run.results.end());
      res.warnings.insert(res.warnings.end(), run.warnings.begin(), run.warnings.end());
    }
    res.summaries = summarize(res.results, cfg.stats.alpha);
  }
  return out;
}

BandResult analyze_band(const TraceSet& traces, const WhiteningModel& wm, const SpectralBand& band,
                        const PipelineConfig& cfg) {
  return analyze_bands(traces, wm, std::span<const SpectralBand>(&band, 1), cfg).front();
}

std::vector<SpectralBand> scan_windows(int n_components, int width, int step) {
  if (n_components < 1 || width < 1 || step < 1) {
    throw ValidationError("scan_windows: n_components, width and step must be >= 1");
  }
  std::vector<SpectralBand> out;
  auto add = [&](int lo, int hi) {
    out.push_back({"PC" + std::to_string(lo) + "-" + std::to_string(hi), lo, hi, 0.0});
  };
  if (width >= n_components) {
    add(1, n_components);
    return out;
  }
  int lo = 1;
  for (; lo + width - 1 <= n_components; lo += step) add(lo, lo + width - 1);
  if (out.back().pc_hi < n_components) add(out.back().pc_lo + step, n_components);
  return out;
}

ScanResult sliding_scan(const TraceSet& traces, const WhiteningModel& wm, const PipelineConfig& cfg) {
  PipelineConfig scan_cfg = cfg;
  scan_cfg.stats.prompt_resampling = false;
  scan_cfg.stats.token_resampling = false;
  const auto windows = scan_windows(wm.n_components(), cfg.scan_width, cfg.scan_step);
  const auto bands = analyze_bands(traces, wm, windows, scan_cfg);
  const auto metrics = band_metrics(cfg);

  ScanResult out;
  out.bonferroni_factor = static_cast<int>(windows.size() * metrics.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    ScanWindow win;
    win.window = windows[w];
    win.offset = windows[w].pc_lo - 1;
    win.k_used = bands[w].k_used;
    for (const auto& pair : kPairs) {
      for (auto m : metrics) {
        ScanCell cell;
        cell.pair = pair;
        cell.metric = m;
        for (const auto& r : bands[w].results) {
          if (r.level == Level::Prompt && r.pair == pair && r.metric == m) {
            cell.seeds.push_back(r.seed);
            cell.seed_p.push_back(r.p_mw);
          }
        }
        if (cell.seed_p.empty()) continue;
        cell.median_p = lower_median(cell.seed_p);
        cell.bonferroni_p = std::min(1.0, cell.median_p * out.bonferroni_factor);
        cell.nominal = cell.median_p < cfg.stats.alpha;
        cell.bonferroni = cell.bonferroni_p < cfg.stats.alpha;
        win.bonferroni_significant = win.bonferroni_significant || cell.bonferroni;
        win.cells.push_back(std::move(cell));
      }
    }
    out.windows.push_back(std::move(win));
  }
  const auto present = traces.seeds(true);
  for (auto s : cfg.seeds) {
    if (std::find(present.begin(), present.end(), s) != present.end()) out.seeds.push_back(s);
  }
  return out;
}

Heatmap heatmap_matrix(std::span<const BandResult> bands) {
  Heatmap h;
  if (bands.empty()) return h;
  std::vector<std::pair<ConditionPair, Metric>> cols;
  for (const auto& pair : kPairs) {
    for (auto m : kBandMetrics) {
      const bool any = std::any_of(bands.begin(), bands.end(), [&](const BandResult& b) {
        return std::any_of(b.summaries.begin(), b.summaries.end(), [&](const MultiRunSummary& s) {
          return s.level == Level::Prompt && s.pair == pair && s.metric == m;
        });
      });
      if (!any) continue;
      cols.emplace_back(pair, m);
      h.columns.push_back(pair_name(pair) + " " + std::string(to_string(m)));
    }
  }
  for (const auto& b : bands) {
    h.rows.push_back(b.band.name);
    std::vector<HeatCell> row;
    for (const auto& [pair, m] : cols) {
      HeatCell cell;
      for (const auto& s : b.summaries) {
        if (s.level == Level::Prompt && s.pair == pair && s.metric == m) {
          cell.sig_rate = s.sig_rate;
          cell.median_r = s.median_r;
          cell.holm_rate = s.holm_rate;
          cell.annotated = s.sig_rate >= kAnnotationThreshold;
        }
      }
      row.push_back(cell);
    }
    h.cells.push_back(std::move(row));
  }
  return h;
}

}  // namespace hsgeom
