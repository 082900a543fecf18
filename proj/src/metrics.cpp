#include "hsgeom/metrics.hpp"

#include <cmath>
#include <map>

#include "hsgeom/error.hpp"

namespace hsgeom {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Entropy: return "entropy";
    case Metric::MaxSim: return "max_sim";
    case Metric::WhitenedNorm: return "whitened_norm";
    case Metric::RawNorm: return "raw_norm";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (auto m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

double MetricRecord::value(Metric m) const {
  switch (m) {
    case Metric::Entropy: return entropy;
    case Metric::MaxSim: return max_sim;
    case Metric::WhitenedNorm: return whitened_norm;
    case Metric::RawNorm: return raw_norm;
  }
  return 0.0;
}

double PromptRecord::value(Metric m) const {
  switch (m) {
    case Metric::Entropy: return entropy;
    case Metric::MaxSim: return max_sim;
    case Metric::WhitenedNorm: return whitened_norm;
    case Metric::RawNorm: return raw_norm;
  }
  return 0.0;
}

Eigen::VectorXd centroid_similarities(const Eigen::Ref<const Eigen::VectorXd>& w,
                                      const ClusterModel& model) {
  if (w.size() != model.dim()) {
    throw ValidationError("centroid_similarities: vector has dimension " + std::to_string(w.size()) +
                          ", centroids " + std::to_string(model.dim()));
  }
  const double wn = w.norm();
  if (!(wn > 0.0)) throw DegenerateInput("zero-norm whitened vector");
  const Eigen::VectorXd cn = model.centroids.rowwise().norm();
  if (!(cn.minCoeff() > 0.0)) throw DegenerateInput("zero-norm centroid");
  return (model.centroids * w).cwiseQuotient(cn) / wn;
}

double membership_entropy(const Eigen::Ref<const Eigen::VectorXd>& s, double temperature) {
  const auto k = s.size();
  if (k < 2) throw ValidationError("membership_entropy needs k >= 2, got " + std::to_string(k));
  if (!(temperature > 0.0)) throw ValidationError("membership_entropy: temperature must be positive");
  const Eigen::ArrayXd z = s.array() / temperature;
  const Eigen::ArrayXd e = (z - z.maxCoeff()).exp();
  const Eigen::ArrayXd p = e / e.sum();
  double h = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (p(j) > 0.0) h -= p(j) * std::log(p(j));
  }
  return std::clamp(h / std::log(static_cast<double>(k)), 0.0, 1.0);
}

double peak_alignment(const Eigen::Ref<const Eigen::VectorXd>& s) {
  if (s.size() < 1) throw ValidationError("peak_alignment needs at least one similarity");
  return s.maxCoeff();
}

MetricTable compute_metric_table(const TraceSet& traces, const RowMatrix& whitened,
                                 const ClusterModel& clusters, const MetricConfig& cfg) {
  if (static_cast<std::size_t>(whitened.rows()) != traces.size()) {
    throw ValidationError("compute_metric_table: " + std::to_string(whitened.rows()) +
                          " whitened rows for " + std::to_string(traces.size()) + " trace rows");
  }
  if (whitened.cols() != clusters.dim()) {
    throw ValidationError("compute_metric_table: whitened dimension " + std::to_string(whitened.cols()) +
                          " does not match centroid dimension " + std::to_string(clusters.dim()));
  }
  const Eigen::VectorXd cn = clusters.centroids.rowwise().norm();
  if (!(cn.minCoeff() > 0.0)) throw DegenerateInput("cluster model has a zero-norm centroid");
  const RowMatrix unit_centroids = clusters.centroids.array().colwise() / cn.array();

  MetricTable table;
  table.records.reserve(traces.size());
  const auto& index = traces.index();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& r = index[i];
    if (r.condition == Condition::Calibration) continue;
    const auto w = whitened.row(r.row);
    const double wn = w.norm();
    if (!(wn > cfg.degenerate_norm) || !std::isfinite(wn)) {
      table.flagged.push_back({r.prompt_id, r.condition, r.seed, r.token_position,
                               "zero-norm whitened vector (token equals calibration mean)"});
      continue;
    }
    const Eigen::VectorXd s = (unit_centroids * w.transpose()) / wn;
    MetricRecord rec;
    rec.prompt_id = r.prompt_id;
    rec.condition = r.condition;
    rec.seed = r.seed;
    rec.token_position = r.token_position;
    rec.entropy = membership_entropy(s, cfg.temperature);
    rec.max_sim = peak_alignment(s);
    rec.whitened_norm = wn;
    rec.raw_norm = traces.vectors().row(r.row).cast<double>().norm();
    table.records.push_back(std::move(rec));
  }
  return table;
}

MetricTable compute_metric_table(const TraceSet& traces, const WhiteningModel& whitening,
                                 const ClusterModel& clusters, const MetricConfig& cfg) {
  return compute_metric_table(traces, whiten(whitening, traces.vectors()), clusters, cfg);
}

std::vector<PromptRecord> prompt_aggregate(const std::vector<MetricRecord>& records) {
  std::map<std::pair<std::string, std::int64_t>, std::size_t> slot;
  std::vector<PromptRecord> out;
  for (const auto& r : records) {
    auto [it, fresh] = slot.try_emplace({r.prompt_id, r.seed}, out.size());
    if (fresh) {
      PromptRecord p;
      p.prompt_id = r.prompt_id;
      p.condition = r.condition;
      p.seed = r.seed;
      out.push_back(std::move(p));
    }
    auto& p = out[it->second];
    p.entropy += r.entropy;
    p.max_sim += r.max_sim;
    p.whitened_norm += r.whitened_norm;
    p.raw_norm += r.raw_norm;
    ++p.token_count;
  }
  for (auto& p : out) {
    const double n = static_cast<double>(p.token_count);
    p.entropy /= n;
    p.max_sim /= n;
    p.whitened_norm /= n;
    p.raw_norm /= n;
  }
  return out;
}

}  // namespace hsgeom
