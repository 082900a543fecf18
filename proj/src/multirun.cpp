#include "hsgeom/multirun.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hsgeom/error.hpp"
#include "hsgeom/rng.hpp"

namespace hsgeom {

std::string_view to_string(Level l) { return l == Level::Token ? "token" : "prompt"; }

std::string pair_name(ConditionPair p) {
  return std::string(to_string(p.first)) + "-" + std::string(to_string(p.second));
}

ConditionPair parse_pair(std::string_view s) {
  const auto dash = s.find('-');
  if (dash == std::string_view::npos) throw ValidationError("malformed pair '" + std::string(s) + "'");
  return {parse_condition(s.substr(0, dash)), parse_condition(s.substr(dash + 1))};
}

namespace {

std::uint64_t pair_index(ConditionPair p) {
  return static_cast<std::uint64_t>(p.first) * 4 + static_cast<std::uint64_t>(p.second);
}

template <typename Record>
std::vector<double> collect(const std::vector<Record>& records, std::int64_t seed, Condition c,
                            Metric m) {
  std::vector<double> v;
  for (const auto& r : records) {
    if (r.seed == seed && r.condition == c) v.push_back(r.value(m));
  }
  return v;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

PairwiseResult battery(const std::vector<double>& x, const std::vector<double>& y, ConditionPair pair,
                       Metric metric, Level level, std::int64_t seed, const StatsConfig& cfg) {
  PairwiseResult res;
  res.pair = pair;
  res.metric = metric;
  res.level = level;
  res.seed = seed;
  res.n1 = x.size();
  res.n2 = y.size();
  res.mean_first = mean(x);
  res.mean_second = mean(y);
  MannWhitneyOptions opts;
  opts.continuity = cfg.continuity;
  const MannWhitneyResult mw = mann_whitney(x, y, opts);
  res.u = mw.u;
  res.p_mw = mw.p;
  res.exact = mw.exact;
  res.r = rank_biserial(mw.u, x.size(), y.size());

  const bool resample = level == Level::Prompt ? cfg.prompt_resampling : cfg.token_resampling;
  if (resample) {
    const std::uint64_t base =
        derive_seed(cfg.rng_seed, {static_cast<std::uint64_t>(seed), pair_index(pair),
                                   static_cast<std::uint64_t>(metric), static_cast<std::uint64_t>(level)});
    res.p_perm = permutation_p(x, y, cfg.n_perm, derive_seed(base, {label_tag("perm")}),
                               cfg.perm_statistic);
    if (x.size() >= 2 && y.size() >= 2) {
      res.r_ci = bca_ci_rank_biserial(x, y, cfg.n_boot, cfg.alpha,
                                      derive_seed(base, {label_tag("bca")}));
    }
  }
  return res;
}

std::string missing_message(ConditionPair pair, std::int64_t seed, bool first_missing) {
  const Condition c = first_missing ? pair.first : pair.second;
  return "seed " + std::to_string(seed) + ": condition " + std::string(to_string(c)) +
         " has no data; pair " + pair_name(pair) + " skipped";
}

}  // namespace

std::pair<PairwiseResult, PairwiseResult> run_pair(const std::vector<PromptRecord>& prompts,
                                                   const std::vector<MetricRecord>& tokens,
                                                   ConditionPair pair, Metric metric,
                                                   std::int64_t seed, const StatsConfig& cfg) {
  const auto px = collect(prompts, seed, pair.first, metric);
  const auto py = collect(prompts, seed, pair.second, metric);
  const auto tx = collect(tokens, seed, pair.first, metric);
  const auto ty = collect(tokens, seed, pair.second, metric);
  if (px.empty() || tx.empty()) throw ValidationError(missing_message(pair, seed, true));
  if (py.empty() || ty.empty()) throw ValidationError(missing_message(pair, seed, false));
  return {battery(px, py, pair, metric, Level::Prompt, seed, cfg),
          battery(tx, ty, pair, metric, Level::Token, seed, cfg)};
}

SeedRun run_seed(const std::vector<PromptRecord>& prompts, const std::vector<MetricRecord>& tokens,
                 std::int64_t seed, std::span<const Metric> metrics, const StatsConfig& cfg) {
  SeedRun out;
  for (const Metric m : metrics) {
    std::map<Condition, std::vector<double>> pv, tv;
    for (const Condition c : kExperimentalConditions) {
      pv[c] = collect(prompts, seed, c, m);
      tv[c] = collect(tokens, seed, c, m);
    }
    std::vector<PairwiseResult> prompt_family, token_family;
    for (const auto& pair : kPairs) {
      const bool first_missing = pv[pair.first].empty() || tv[pair.first].empty();
      const bool second_missing = pv[pair.second].empty() || tv[pair.second].empty();
      if (first_missing || second_missing) {
        if (m == metrics.front()) out.warnings.push_back(missing_message(pair, seed, first_missing));
        continue;
      }
      prompt_family.push_back(battery(pv[pair.first], pv[pair.second], pair, m, Level::Prompt, seed, cfg));
      token_family.push_back(battery(tv[pair.first], tv[pair.second], pair, m, Level::Token, seed, cfg));
    }
    for (auto* family : {&prompt_family, &token_family}) {
      std::vector<double> p;
      for (const auto& r : *family) p.push_back(r.p_mw);
      const auto holm = holm_correct(p, cfg.alpha);
      for (std::size_t i = 0; i < family->size(); ++i) {
        (*family)[i].holm_adjusted = holm[i].adjusted;
        (*family)[i].holm_significant = holm[i].significant;
        out.results.push_back((*family)[i]);
      }
    }
  }
  return out;
}

std::optional<KruskalWallisRun> kruskal_for_seed(const std::vector<PromptRecord>& prompts,
                                                 std::int64_t seed, Metric metric) {
  std::vector<std::vector<double>> groups;
  for (const Condition c : kExperimentalConditions) {
    auto v = collect(prompts, seed, c, metric);
    if (!v.empty()) groups.push_back(std::move(v));
  }
  if (groups.size() < 2) return std::nullopt;
  return KruskalWallisRun{seed, metric, kruskal_wallis(groups)};
}

double lower_median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const auto mid = v.begin() + static_cast<long>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

MultiRunSummary aggregate_runs(std::span<const PairwiseResult> results, double alpha) {
  if (results.empty()) throw ValidationError("aggregate_runs: no results");
  MultiRunSummary s;
  s.pair = results.front().pair;
  s.metric = results.front().metric;
  s.level = results.front().level;
  s.n_seeds = results.size();
  std::size_t sig = 0, holm = 0, pos = 0, neg = 0;
  std::vector<double> r, p;
  for (const auto& res : results) {
    if (!(res.pair == s.pair) || res.metric != s.metric || res.level != s.level) {
      throw ValidationError("aggregate_runs: results mix pairs, metrics or levels");
    }
    if (res.p_mw < alpha) ++sig;
    if (res.holm_significant) ++holm;
    if (res.r > 0.0) ++pos;
    if (res.r < 0.0) ++neg;
    r.push_back(res.r);
    p.push_back(res.p_mw);
  }
  const double n = static_cast<double>(results.size());
  s.sig_rate = static_cast<double>(sig) / n;
  s.holm_rate = static_cast<double>(holm) / n;
  s.median_r = lower_median(r);
  s.median_p = lower_median(p);
  s.direction_count = std::max(pos, neg);
  s.direction_sign = pos > neg ? 1 : (neg > pos ? -1 : 0);
  return s;
}

std::vector<MultiRunSummary> summarize(const std::vector<PairwiseResult>& results, double alpha) {
  std::vector<MultiRunSummary> out;
  for (const auto& pair : kPairs) {
    for (const Metric m : kAllMetrics) {
      std::vector<PairwiseResult> prompt, token;
      for (const auto& r : results) {
        if (!(r.pair == pair) || r.metric != m) continue;
        (r.level == Level::Prompt ? prompt : token).push_back(r);
      }
      std::optional<MultiRunSummary> ps, ts;
      if (!prompt.empty()) ps = aggregate_runs(prompt, alpha);
      if (!token.empty()) ts = aggregate_runs(token, alpha);
      if (ps && ts) {
        ps->token_sig_rate = ts->sig_rate;
        if (ps->sig_rate > 0.0) ps->pseudo_ratio = ts->sig_rate / ps->sig_rate;
      }
      if (ps) out.push_back(*ps);
      if (ts) out.push_back(*ts);
    }
  }
  return out;
}

}  // namespace hsgeom
