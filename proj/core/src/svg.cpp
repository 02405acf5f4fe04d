#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>

#include "geolab/analysis.hpp"

namespace geolab {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 180.0;  // room for the legend
constexpr double kTop = 30.0;
constexpr double kBottom = 40.0;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

}  // namespace

std::string render_metric_svg(const MetricsTable& metrics, const std::string& metric) {
  std::map<std::string, std::vector<std::pair<int, double>>> series;
  double xmin = std::numeric_limits<double>::max();
  double xmax = std::numeric_limits<double>::lowest();
  double ymin = xmin;
  double ymax = xmax;
  for (const MetricRow& r : metrics.sorted()) {
    if (r.metric != metric || !r.value) continue;
    series[r.condition_id].emplace_back(r.position, *r.value);
    xmin = std::min(xmin, static_cast<double>(r.position));
    xmax = std::max(xmax, static_cast<double>(r.position));
    ymin = std::min(ymin, *r.value);
    ymax = std::max(ymax, *r.value);
  }
  if (series.empty()) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" width=\"640\" height=\"400\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(kLeft) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + escape(metric) +
         " vs position</text>\n";
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop + plot_h) + "\" x2=\"" + fixed(kLeft + plot_w) +
         "\" y2=\"" + fixed(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop) + "\" x2=\"" + fixed(kLeft) + "\" y2=\"" +
         fixed(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor) {
    svg += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"" +
           anchor + "\">" + escape(text) + "</text>\n";
  };
  label(kLeft, kTop + plot_h + 15, short_num(xmin), "middle");
  label(kLeft + plot_w, kTop + plot_h + 15, short_num(xmax), "middle");
  label(kLeft + plot_w / 2, kTop + plot_h + 32, "position", "middle");
  label(kLeft - 5, kTop + plot_h, short_num(ymin), "end");
  label(kLeft - 5, kTop + 10, short_num(ymax), "end");

  std::size_t k = 0;
  for (const auto& [cond, points] : series) {
    const char* color = kPalette[k % std::size(kPalette)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i > 0) svg += ' ';
      svg += fixed(px(points[i].first)) + "," + fixed(py(points[i].second));
    }
    svg += "\"/>\n";
    const double ly = kTop + 12.0 * static_cast<double>(k);
    svg += "<line x1=\"" + fixed(kWidth - kRight + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" +
           fixed(kWidth - kRight + 25) + "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\"/>\n";
    label(kWidth - kRight + 30, ly + 3, cond, "start");
    ++k;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace geolab
