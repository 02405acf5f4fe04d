#include "geolab/analysis.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "geolab/error.hpp"

namespace geolab {

AccuracyCurve accuracy_from_logits(const TrialSet& trials) {
  if (!trials.has_logits()) {
    throw Error(ErrorKind::Argument, "accuracy_from_logits: condition " + trials.condition_id + " has missing logits");
  }
  AccuracyCurve curve;
  curve.condition_id = trials.condition_id;
  const std::size_t len = trials.sequence_length();
  std::vector<int> correct(len, 0);
  for (const Trial& t : trials.trials) {
    for (std::size_t i = 0; i < len; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int predicted = ((*t.logits)(row, 1) - (*t.logits)(row, 0)) >= 0.0 ? 1 : 0;
      correct[i] += predicted == t.shown_labels[i] ? 1 : 0;
    }
  }
  const int total = static_cast<int>(trials.trials.size());
  for (std::size_t i = 0; i < len; ++i) {
    curve.positions.push_back(static_cast<int>(i) + 1);
    curve.accuracy.push_back(static_cast<double>(correct[i]) / total);
    curve.counts.push_back(total);
  }
  return curve;
}

void append_accuracy_metrics(MetricsTable& table, const ConditionMeta& meta, const AccuracyCurve& curve) {
  for (std::size_t i = 0; i < curve.positions.size(); ++i) {
    MetricRow r;
    r.condition_id = meta.condition_id;
    r.model = meta.model;
    r.dataset = meta.dataset;
    r.family = to_string(meta.axis.family);
    r.rank = meta.axis.rank;
    r.target_layer = meta.axis.target_layer;
    r.position = curve.positions[i];
    r.metric = "accuracy";
    r.value = curve.accuracy[i];
    table.rows.push_back(std::move(r));
  }
}

std::vector<AccuracyCurve> accuracy_from_metrics(const MetricsTable& table) {
  std::map<std::string, std::map<int, double>> by_condition;
  for (const MetricRow& r : table.rows) {
    if (r.metric == "accuracy" && r.value) by_condition[r.condition_id][r.position] = *r.value;
  }
  std::vector<AccuracyCurve> out;
  for (const auto& [cond, points] : by_condition) {
    AccuracyCurve c;
    c.condition_id = cond;
    for (const auto& [pos, acc] : points) {
      c.positions.push_back(pos);
      c.accuracy.push_back(acc);
      c.counts.push_back(0);
    }
    out.push_back(std::move(c));
  }
  return out;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::Argument, "pearson: length mismatch");
  CorrelationResult out;
  out.n = x.size();
  if (out.n < 3) return out;
  const auto n = static_cast<double>(out.n);
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  out.defined = true;
  const double dof = n - 2.0;
  const double denom = 1.0 - out.r * out.r;
  if (denom <= 0.0) {
    out.p = 0.0;
  } else {
    const double t = std::abs(out.r) * std::sqrt(dof / denom);
    const boost::math::students_t dist(dof);
    out.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
  }
  return out;
}

namespace {

constexpr std::string_view kCorrelated[] = {"capacity", "radius", "dimension", "snr",  "delta",  "d_pr",
                                            "csa_0",    "csa_1",  "ss",        "bias", "signal", "noise"};

}  // namespace

std::span<const std::string_view> correlated_metrics() { return kCorrelated; }

std::vector<CorrelationResult> correlate_geometry_accuracy(const MetricsTable& metrics,
                                                           std::span<const AccuracyCurve> accuracy) {
  std::map<std::pair<std::string, int>, double> acc;
  for (const AccuracyCurve& c : accuracy) {
    for (std::size_t i = 0; i < c.positions.size(); ++i) acc[{c.condition_id, c.positions[i]}] = c.accuracy[i];
  }
  // (metric) -> (unit) -> value (nullopt when the metric is null)
  std::map<std::string, std::map<std::pair<std::string, int>, std::optional<double>>> values;
  std::set<std::pair<std::string, int>> joined;
  for (const MetricRow& r : metrics.rows) {
    const std::pair<std::string, int> unit{r.condition_id, r.position};
    if (!acc.contains(unit)) continue;
    if (std::find(std::begin(kCorrelated), std::end(kCorrelated), r.metric) == std::end(kCorrelated)) continue;
    values[r.metric][unit] = r.value;
    joined.insert(unit);
  }
  if (joined.size() < 3) {
    throw Error(ErrorKind::Argument, "correlate: insufficient units (" + std::to_string(joined.size()) +
                                         " joined, need at least 3)");
  }
  std::vector<CorrelationResult> out;
  for (std::string_view name : kCorrelated) {
    const auto it = values.find(std::string(name));
    if (it == values.end()) continue;
    std::vector<double> x;
    std::vector<double> y;
    std::size_t dropped = 0;
    for (const auto& unit : joined) {
      const auto v = it->second.find(unit);
      if (v == it->second.end() || !v->second) {
        ++dropped;
        continue;
      }
      x.push_back(*v->second);
      y.push_back(acc.at(unit));
    }
    CorrelationResult res = pearson(x, y);
    res.metric = std::string(name);
    res.dropped_units = dropped;
    out.push_back(std::move(res));
  }
  return out;
}

void save_correlations(std::span<const CorrelationResult> rows, const fs::path& path) {
  std::string out = "metric,r,p,n,dropped_units\n";
  for (const CorrelationResult& r : rows) {
    out += r.metric + ',' + (r.defined ? format_real(r.r) : "") + ',' + (r.defined ? format_real(r.p) : "") + ',' +
           std::to_string(r.n) + ',' + std::to_string(r.dropped_units) + '\n';
  }
  write_text_file(path, out);
}

ReportSummary emit_report(const MetricsTable& metrics, std::span<const AccuracyCurve> accuracy,
                          std::span<const FitRow> fits, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(ErrorKind::Io, "cannot create output directory " + out_dir.string());

  MetricsTable table = metrics;
  const bool has_accuracy =
      std::any_of(table.rows.begin(), table.rows.end(), [](const MetricRow& r) { return r.metric == "accuracy"; });
  if (!has_accuracy) {
    std::map<std::string, ConditionMeta> meta;
    for (const MetricRow& r : table.rows) {
      meta.emplace(r.condition_id, ConditionMeta{r.condition_id, r.model, r.dataset,
                                                 AxisRef{parse_axis_family(r.family), r.rank, r.target_layer}});
    }
    for (const AccuracyCurve& c : accuracy) {
      auto it = meta.find(c.condition_id);
      const ConditionMeta m = it != meta.end() ? it->second : ConditionMeta{c.condition_id, "", "", {}};
      append_accuracy_metrics(table, m, c);
    }
  }

  ReportSummary summary;
  try {
    summary.correlations = correlate_geometry_accuracy(table, accuracy);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Argument) throw;
  }

  const fs::path metrics_path = out_dir / "metrics.csv";
  const fs::path fits_path = out_dir / "fits.csv";
  const fs::path corr_path = out_dir / "correlations.csv";
  save_metrics(table, metrics_path);
  save_fits(fits, fits_path);
  save_correlations(summary.correlations, corr_path);
  summary.files = {metrics_path, fits_path, corr_path};

  std::set<std::string> names;
  for (const MetricRow& r : table.rows) {
    if (r.value) names.insert(r.metric);
  }
  for (const std::string& name : names) {
    const fs::path svg = out_dir / ("metric_" + name + ".svg");
    write_text_file(svg, render_metric_svg(table, name));
    summary.files.push_back(svg);
  }
  return summary;
}

}  // namespace geolab
