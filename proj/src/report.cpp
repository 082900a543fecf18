#include "hsgeom/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <cstdio>
#include <tuple>

#include "hsgeom/error.hpp"

namespace hsgeom {

namespace fs = std::filesystem;

std::vector<std::string> OutputHeader::lines() const {
  std::vector<std::string> out;
  out.push_back("hsgeom " + command);
  out.push_back("config " + config_json);
  for (const auto& o : overrides) out.push_back("override " + o);
  for (const auto& [path, digest] : inputs) out.push_back("input " + path + " sha256=" + digest);
  for (const auto& n : notes) out.push_back("note " + n);
  return out;
}

OutputHeader make_header(std::string command, const PipelineConfig& cfg, const std::vector<fs::path>& inputs) {
  OutputHeader h;
  h.command = std::move(command);
  h.config_json = to_json(cfg, -1);
  h.overrides = config_overrides(cfg);
  for (const auto& p : inputs) {
    std::vector<fs::path> files;
    if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      const auto tp = trace_paths(p);
      for (const fs::path& f : {tp.manifest, tp.vectors, fs::path(p.string() + ".calib.json"),
                                fs::path(p.string() + ".calib.bin")}) {
        if (fs::is_regular_file(f)) files.push_back(f);
      }
    }
    for (const auto& f : files) h.inputs.emplace_back(f.string(), sha256_file(f));
  }
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
std::string fmt(bool v) { return v ? "1" : "0"; }
template <class I>
  requires std::is_integral_v<I>
std::string fmt(I v) {
  return std::to_string(v);
}

double to_double(const std::string& s, const std::string& what) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("malformed number '" + s + "' in column " + what);
  }
  return v;
}

std::int64_t to_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("malformed integer '" + s + "' in column " + what);
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

const std::vector<std::string> kPairwiseColumns = {
    "pair", "metric", "level", "seed", "n1", "n2", "mean_first", "mean_second", "u", "p_mw", "exact",
    "p_perm", "r", "r_ci_lo", "r_ci_hi", "holm_adjusted", "holm_significant"};

std::vector<std::string> pairwise_fields(const PairwiseResult& r) {
  return {pair_name(r.pair), std::string(to_string(r.metric)), std::string(to_string(r.level)), fmt(r.seed),
          fmt(r.n1), fmt(r.n2), fmt(r.mean_first), fmt(r.mean_second), fmt(r.u), fmt(r.p_mw), fmt(r.exact),
          fmt(r.p_perm), fmt(r.r), r.r_ci ? fmt(r.r_ci->lo) : "", r.r_ci ? fmt(r.r_ci->hi) : "",
          fmt(r.holm_adjusted), fmt(r.holm_significant)};
}

const std::vector<std::string> kSummaryColumns = {
    "pair", "metric", "level", "n_seeds", "sig_rate", "holm_rate", "median_r", "median_p",
    "direction_count", "direction_sign", "pseudo_ratio", "token_sig_rate"};

std::vector<std::string> summary_fields(const MultiRunSummary& s) {
  return {pair_name(s.pair), std::string(to_string(s.metric)), std::string(to_string(s.level)), fmt(s.n_seeds),
          fmt(s.sig_rate), fmt(s.holm_rate), fmt(s.median_r), fmt(s.median_p), fmt(s.direction_count),
          fmt(s.direction_sign), fmt(s.pseudo_ratio), fmt(s.token_sig_rate)};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Level parse_level(const std::string& s) {
  if (s == "prompt") return Level::Prompt;
  if (s == "token") return Level::Token;
  throw ValidationError("unknown level '" + s + "'");
}

double neg_log10(double p) { return -std::log10(std::max(p, 1e-300)); }

}  // namespace

CsvWriter::CsvWriter(const fs::path& path, const OutputHeader& header, const std::vector<std::string>& columns)
    : path_(path), out_(path), n_columns_(columns.size()) {
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& l : header.lines()) out_ << "# " << l << '\n';
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != n_columns_) throw Error("CsvWriter: row width does not match the header");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find_first_of(",\n") != std::string::npos) throw Error("CsvWriter: field contains a separator");
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw IoError("failed writing " + path_.string());
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ValidationError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool have_columns = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!have_columns && line[0] == '#') {
      t.comments.push_back(line.size() > 2 ? line.substr(2) : std::string());
      continue;
    }
    auto fields = split(line, ',');
    if (!have_columns) {
      t.columns = std::move(fields);
      have_columns = true;
    } else {
      if (fields.size() != t.columns.size()) {
        throw ValidationError(path.string() + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(t.columns.size()));
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_columns) throw ValidationError(path.string() + ": no column header");
  return t;
}

void write_experiment(const ExperimentResult& result, const OutputHeader& header, const fs::path& dir) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "pairwise.csv", header, kPairwiseColumns);
    for (const auto& s : result.seeds) {
      for (const auto& r : s.results) w.row(pairwise_fields(r));
    }
    w.close();
  }
  {
    CsvWriter w(dir / "summary.csv", header, kSummaryColumns);
    for (const auto& s : result.summaries) w.row(summary_fields(s));
    w.close();
  }
  {
    CsvWriter w(dir / "kruskal.csv", header, {"seed", "metric", "h", "h_uncorrected", "df", "p"});
    for (const auto& s : result.seeds) {
      for (const auto& k : s.kruskal) {
        w.row({fmt(k.seed), std::string(to_string(k.metric)), fmt(k.result.h), fmt(k.result.h_uncorrected),
               fmt(k.result.df), fmt(k.result.p)});
      }
    }
    w.close();
  }
  std::ofstream log(dir / "run.log");
  if (!log) throw IoError("cannot open " + (dir / "run.log").string() + " for writing");
  for (const auto& l : header.lines()) log << "# " << l << '\n';
  for (const auto& w : result.warnings) log << "warning: " << w << '\n';
  if (!log) throw IoError("failed writing run.log");
}

void write_bands(const std::vector<BandResult>& bands, const OutputHeader& header, const fs::path& dir) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "band_pairwise.csv", header, concat({"band"}, kPairwiseColumns));
    for (const auto& b : bands) {
      for (const auto& r : b.results) w.row(concat({b.band.name}, pairwise_fields(r)));
    }
    w.close();
  }
  {
    CsvWriter w(dir / "band_summary.csv", header,
                concat({"band", "pc_lo", "pc_hi", "k_used", "variance_fraction"}, kSummaryColumns));
    for (const auto& b : bands) {
      for (const auto& s : b.summaries) {
        w.row(concat({b.band.name, fmt(b.band.pc_lo), fmt(b.band.pc_hi), fmt(b.k_used), fmt(b.variance_fraction)},
                     summary_fields(s)));
      }
    }
    w.close();
  }
  {
    const Heatmap h = heatmap_matrix(bands);
    CsvWriter w(dir / "heatmap.csv", header, {"band", "column", "sig_rate", "median_r", "holm_rate", "annotated"});
    for (std::size_t i = 0; i < h.rows.size(); ++i) {
      for (std::size_t j = 0; j < h.columns.size(); ++j) {
        const auto& c = h.cells[i][j];
        w.row({h.rows[i], h.columns[j], fmt(c.sig_rate), fmt(c.median_r), fmt(c.holm_rate), fmt(c.annotated)});
      }
    }
    w.close();
  }
  std::ofstream log(dir / "spectral.log");
  if (!log) throw IoError("cannot open " + (dir / "spectral.log").string() + " for writing");
  for (const auto& l : header.lines()) log << "# " << l << '\n';
  for (const auto& b : bands) {
    for (const auto& w : b.warnings) log << "warning: " << w << '\n';
  }
  if (!log) throw IoError("failed writing spectral.log");
}

void write_scan(const ScanResult& scan, const OutputHeader& header, const fs::path& dir, bool per_seed) {
  fs::create_directories(dir);
  OutputHeader h = header;
  h.notes.push_back("bonferroni family: windows x metrics within each pair, factor " + fmt(scan.bonferroni_factor));
  CsvWriter w(dir / "scan.csv", h,
              {"window", "pc_lo", "pc_hi", "offset", "k_used", "pair", "metric", "median_p", "bonferroni_p",
               "nominal", "bonferroni", "window_significant", "bonferroni_factor"});
  for (const auto& win : scan.windows) {
    for (const auto& c : win.cells) {
      w.row({win.window.name, fmt(win.window.pc_lo), fmt(win.window.pc_hi), fmt(win.offset), fmt(win.k_used),
             pair_name(c.pair), std::string(to_string(c.metric)), fmt(c.median_p), fmt(c.bonferroni_p),
             fmt(c.nominal), fmt(c.bonferroni), fmt(win.bonferroni_significant), fmt(scan.bonferroni_factor)});
    }
  }
  w.close();
  if (!per_seed) return;

  CsvWriter ws(dir / "scan_seeds.csv", h, {"window", "pair", "metric", "seed", "p_mw"});
  for (const auto& win : scan.windows) {
    for (const auto& c : win.cells) {
      for (std::size_t i = 0; i < c.seed_p.size(); ++i) {
        ws.row({win.window.name, pair_name(c.pair), std::string(to_string(c.metric)), fmt(c.seeds[i]),
                fmt(c.seed_p[i])});
      }
    }
  }
  ws.close();
}

std::vector<PairwiseResult> parse_pairwise(const CsvTable& t) {
  std::vector<std::size_t> col;
  for (const auto& c : kPairwiseColumns) col.push_back(t.column(c));
  std::vector<PairwiseResult> out;
  for (const auto& row : t.rows) {
    auto f = [&](std::size_t i) -> const std::string& { return row[col[i]]; };
    auto d = [&](std::size_t i) { return to_double(f(i), kPairwiseColumns[i]); };
    PairwiseResult r;
    r.pair = parse_pair(f(0));
    r.metric = parse_metric(f(1));
    r.level = parse_level(f(2));
    r.seed = to_int(f(3), "seed");
    r.n1 = static_cast<std::size_t>(to_int(f(4), "n1"));
    r.n2 = static_cast<std::size_t>(to_int(f(5), "n2"));
    r.mean_first = d(6);
    r.mean_second = d(7);
    r.u = d(8);
    r.p_mw = d(9);
    r.exact = f(10) == "1";
    if (!f(11).empty()) r.p_perm = d(11);
    r.r = d(12);
    if (!f(13).empty() && !f(14).empty()) {
      BcaInterval ci;
      ci.lo = d(13);
      ci.hi = d(14);
      ci.point = r.r;
      r.r_ci = ci;
    }
    r.holm_adjusted = d(15);
    r.holm_significant = f(16) == "1";
    out.push_back(r);
  }
  return out;
}

std::vector<ExperimentResults> load_results(const fs::path& dir, std::vector<fs::path>* sources) {
  if (!fs::is_directory(dir)) throw ValidationError("no results found: " + dir.string() + " is not a directory");
  std::vector<ExperimentResults> out;
  const fs::path pw = dir / "pairwise.csv";
  if (fs::is_regular_file(pw)) {
    if (sources) sources->push_back(pw);
    ExperimentResults e{"whitening", parse_pairwise(read_csv(pw))};
    if (!e.results.empty()) out.push_back(std::move(e));
  }
  const fs::path bp = dir / "band_pairwise.csv";
  if (fs::is_regular_file(bp)) {
    if (sources) sources->push_back(bp);
    const CsvTable t = read_csv(bp);
    const auto all = parse_pairwise(t);
    const std::size_t bc = t.column("band");
    for (std::size_t i = 0; i < all.size(); ++i) {
      const std::string name = "band:" + t.rows[i][bc];
      auto it = std::find_if(out.begin(), out.end(), [&](const ExperimentResults& e) { return e.experiment == name; });
      if (it == out.end()) {
        out.push_back({name, {}});
        it = out.end() - 1;
      }
      it->results.push_back(all[i]);
    }
  }
  if (out.empty()) throw ValidationError("no results found in " + dir.string());
  return out;
}

Report build_report(const std::vector<ExperimentResults>& experiments, double alpha) {
  Report rep;
  for (const auto& e : experiments) {
    for (const auto& s : summarize(e.results, alpha)) rep.summaries.push_back({e.experiment, s});

    // Per-seed condition means from the prompt-level rows; first pair wins.
    std::map<std::tuple<int, int, std::int64_t>, double> per_seed;
    for (const auto& r : e.results) {
      if (r.level != Level::Prompt) continue;
      per_seed.emplace(std::make_tuple(static_cast<int>(r.metric), static_cast<int>(r.pair.first), r.seed),
                       r.mean_first);
      per_seed.emplace(std::make_tuple(static_cast<int>(r.metric), static_cast<int>(r.pair.second), r.seed),
                       r.mean_second);
    }
    std::map<std::pair<int, int>, std::vector<double>> by_cond;
    for (const auto& [key, v] : per_seed) by_cond[{std::get<0>(key), std::get<1>(key)}].push_back(v);
    for (const auto& [key, vals] : by_cond) {
      ConditionMean cm;
      cm.experiment = e.experiment;
      cm.metric = static_cast<Metric>(key.first);
      cm.condition = static_cast<Condition>(key.second);
      cm.n_seeds = vals.size();
      double sum = 0.0;
      for (double v : vals) sum += v;
      cm.mean = sum / static_cast<double>(vals.size());
      double ss = 0.0;
      for (double v : vals) ss += (v - cm.mean) * (v - cm.mean);
      cm.sd = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
      rep.condition_means.push_back(cm);
    }

    std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> ps;
    for (const auto& r : e.results) {
      rep.p_values.push_back({e.experiment, r.metric, r.pair, r.level, r.seed, r.p_mw});
      if (r.level == Level::Prompt) {
        EffectPoint ep{e.experiment, r.metric, r.pair, r.seed, r.r, {}, {}};
        if (r.r_ci) {
          ep.ci_lo = r.r_ci->lo;
          ep.ci_hi = r.r_ci->hi;
        }
        rep.effects.push_back(ep);
      }
      const int pi = static_cast<int>(std::find(kPairs.begin(), kPairs.end(), r.pair) - kPairs.begin());
      auto& slot = ps[{static_cast<int>(r.metric), pi}];
      (r.level == Level::Token ? slot.first : slot.second).push_back(r.p_mw);
    }
    const double cut = neg_log10(alpha);
    for (const auto& [key, v] : ps) {
      if (v.first.empty() || v.second.empty()) continue;
      DiscordancePoint d;
      d.experiment = e.experiment;
      d.metric = static_cast<Metric>(key.first);
      d.pair = kPairs[static_cast<std::size_t>(key.second)];
      d.token_neg_log10_p = neg_log10(lower_median(v.first));
      d.prompt_neg_log10_p = neg_log10(lower_median(v.second));
      const bool tok = d.token_neg_log10_p > cut, pr = d.prompt_neg_log10_p > cut;
      d.quadrant = tok && pr ? "both" : tok ? "token-only" : pr ? "prompt-only" : "neither";
      rep.discordance.push_back(d);
    }
  }
  return rep;
}

void write_report(const Report& rep, const OutputHeader& header, const fs::path& dir) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "report_summary.csv", header, concat({"experiment"}, kSummaryColumns));
    for (const auto& s : rep.summaries) w.row(concat({s.experiment}, summary_fields(s.summary)));
    w.close();
  }
  {
    CsvWriter w(dir / "condition_means.csv", header, {"experiment", "metric", "condition", "n_seeds", "mean", "sd"});
    for (const auto& c : rep.condition_means) {
      w.row({c.experiment, std::string(to_string(c.metric)), std::string(to_string(c.condition)), fmt(c.n_seeds),
             fmt(c.mean), fmt(c.sd)});
    }
    w.close();
  }
  {
    CsvWriter w(dir / "effect_sizes.csv", header, {"experiment", "metric", "pair", "seed", "r", "ci_lo", "ci_hi"});
    for (const auto& e : rep.effects) {
      w.row({e.experiment, std::string(to_string(e.metric)), pair_name(e.pair), fmt(e.seed), fmt(e.r),
             fmt(e.ci_lo), fmt(e.ci_hi)});
    }
    w.close();
  }
  {
    CsvWriter w(dir / "pvalue_strip.csv", header, {"experiment", "metric", "pair", "level", "seed", "p"});
    for (const auto& p : rep.p_values) {
      w.row({p.experiment, std::string(to_string(p.metric)), pair_name(p.pair), std::string(to_string(p.level)),
             fmt(p.seed), fmt(p.p)});
    }
    w.close();
  }
  {
    CsvWriter w(dir / "discordance.csv", header,
                {"experiment", "metric", "pair", "token_neg_log10_p", "prompt_neg_log10_p", "quadrant"});
    for (const auto& d : rep.discordance) {
      w.row({d.experiment, std::string(to_string(d.metric)), pair_name(d.pair), fmt(d.token_neg_log10_p),
             fmt(d.prompt_neg_log10_p), d.quadrant});
    }
    w.close();
  }

  std::ofstream txt(dir / "report.txt");
  if (!txt) throw IoError("cannot open " + (dir / "report.txt").string() + " for writing");
  for (const auto& l : header.lines()) txt << "# " << l << '\n';
  std::string current;
  char buf[160];
  for (const auto& row : rep.summaries) {
    const auto& s = row.summary;
    if (s.level != Level::Prompt) continue;
    if (row.experiment != current) {
      current = row.experiment;
      txt << '\n' << current << '\n';
      std::snprintf(buf, sizeof buf, "  %-6s %-14s %6s %6s %8s %6s %7s\n", "pair", "metric", "sig", "holm", "med r",
                    "dir", "pseudo");
      txt << buf;
    }
    const std::string pseudo = s.pseudo_ratio ? format_double(std::round(*s.pseudo_ratio * 100) / 100) : "-";
    std::snprintf(buf, sizeof buf, "  %-6s %-14s %5.0f%% %5.0f%% %+8.3f %3zu/%-2zu %7s\n", pair_name(s.pair).c_str(),
                  std::string(to_string(s.metric)).c_str(), 100 * s.sig_rate, 100 * s.holm_rate, s.median_r,
                  s.direction_count, s.n_seeds, pseudo.c_str());
    txt << buf;
  }
  if (!txt) throw IoError("failed writing report.txt");
}

}  // namespace hsgeom
