#pragma once

// Behavioral accuracy, geometry-accuracy correlation and report emission.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geolab/geometry.hpp"
#include "geolab/repstore.hpp"

namespace geolab {

struct AccuracyCurve {
  std::string condition_id;
  std::vector<int> positions;  // 1-based, ascending
  std::vector<double> accuracy;
  std::vector<int> counts;
};

/// Per position: LogitDiff = logit(1) - logit(0), prediction 1 iff LogitDiff >= 0,
/// scored against the shown label and averaged over trials.
AccuracyCurve accuracy_from_logits(const TrialSet& trials);

void append_accuracy_metrics(MetricsTable& table, const ConditionMeta& meta, const AccuracyCurve& curve);

/// Rebuild accuracy curves from "accuracy" rows of a metrics table.
std::vector<AccuracyCurve> accuracy_from_metrics(const MetricsTable& table);

struct CorrelationResult {
  std::string metric;
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  std::size_t dropped_units = 0;
  bool defined = false;  // false for n < 3 or constant input
};

/// Sample Pearson r with a two-sided p-value from the t statistic on n-2 dof.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Metrics correlated against accuracy by default.
std::span<const std::string_view> correlated_metrics();

/// One correlation per metric across all (condition, position) units joined
/// with accuracy. Units with a null metric are dropped and counted. Throws
/// when fewer than 3 units join.
std::vector<CorrelationResult> correlate_geometry_accuracy(const MetricsTable& metrics,
                                                           std::span<const AccuracyCurve> accuracy);

void save_correlations(std::span<const CorrelationResult> rows, const fs::path& path);

/// Minimal static line chart: one polyline per condition of metric vs position.
std::string render_metric_svg(const MetricsTable& metrics, const std::string& metric);

struct ReportSummary {
  std::vector<CorrelationResult> correlations;
  std::vector<fs::path> files;
};

/// Write metrics.csv, fits.csv, correlations.csv and metric_<name>.svg.
/// Accuracy curves are added to the metrics table as "accuracy" rows when the
/// table does not already contain them.
ReportSummary emit_report(const MetricsTable& metrics, std::span<const AccuracyCurve> accuracy,
                          std::span<const FitRow> fits, const fs::path& out_dir);

}  // namespace geolab
