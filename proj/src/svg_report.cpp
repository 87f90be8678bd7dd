#include "coarse2fine/svg_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

namespace c2f {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 600.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 440.0;
constexpr double kYMin = -0.05;
constexpr double kYMax = 1.05;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Series {
  std::string method;
  std::vector<int> bins;
  std::vector<double> rho;
  std::vector<double> se;  // NaN when absent
};

const char* series_color(const std::string& method, int order) {
  if (method == "naive") return "#d95f02";
  if (method == "mom") return "#7570b3";
  if (method == "em") return "#1b9e77";
  if (method == "oracle") return "#e7298a";
  static const char* fallback[] = {"#66a61e", "#e6ab02", "#a6761d", "#666666"};
  return fallback[order % 4];
}

}  // namespace

std::string render_report_svg(const CsvTable& rho, const std::optional<CsvTable>& truth) {
  const int bin_col = rho.require_column("bin");
  const int method_col = rho.require_column("method");
  const int rho_col = rho.require_column("rho");
  const int se_col = rho.column("se");

  std::vector<Series> series;
  std::map<std::string, std::size_t> series_index;
  int max_bin = 1;
  for (std::size_t r = 0; r < rho.rows.size(); ++r) {
    const int line = rho.line_numbers[r];
    const std::string& method = rho.rows[r][static_cast<std::size_t>(method_col)];
    auto found = series_index.find(method);
    if (found == series_index.end()) {
      found = series_index.emplace(method, series.size()).first;
      series.push_back(Series{method, {}, {}, {}});
    }
    Series& s = series[found->second];
    s.bins.push_back(parse_int(rho.rows[r][static_cast<std::size_t>(bin_col)], rho.path, line));
    s.rho.push_back(parse_double(rho.rows[r][static_cast<std::size_t>(rho_col)], rho.path, line));
    double se_val = std::nan("");
    if (se_col >= 0 && !rho.rows[r][static_cast<std::size_t>(se_col)].empty()) {
      se_val = parse_double(rho.rows[r][static_cast<std::size_t>(se_col)], rho.path, line);
    }
    s.se.push_back(se_val);
    max_bin = std::max(max_bin, s.bins.back());
  }

  std::vector<std::pair<int, double>> truth_points;
  if (truth) {
    const int tb = truth->require_column("bin");
    const int tr = truth->require_column("true_rho");
    for (std::size_t r = 0; r < truth->rows.size(); ++r) {
      const int line = truth->line_numbers[r];
      truth_points.emplace_back(
          parse_int(truth->rows[r][static_cast<std::size_t>(tb)], truth->path, line),
          parse_double(truth->rows[r][static_cast<std::size_t>(tr)], truth->path, line));
      max_bin = std::max(max_bin, truth_points.back().first);
    }
    std::sort(truth_points.begin(), truth_points.end());
  }

  const auto x_of = [&](double bin) {
    if (max_bin <= 1) return (kLeft + kRight) / 2.0;
    return kLeft + (bin - 1.0) / (max_bin - 1.0) * (kRight - kLeft);
  };
  const auto y_of = [&](double v) {
    return kBottom - (v - kYMin) / (kYMax - kYMin) * (kBottom - kTop);
  };
  const auto in_range = [&](double v) { return v >= kYMin && v <= kYMax; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // axes and ticks
  svg << "<g stroke=\"#333333\" stroke-width=\"1\" fill=\"none\">\n";
  svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kBottom) << "\" x2=\"" << fmt(kRight)
      << "\" y2=\"" << fmt(kBottom) << "\"/>\n";
  svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft)
      << "\" y2=\"" << fmt(kBottom) << "\"/>\n";
  svg << "</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = 0.25 * t;
    const double y = y_of(v);
    svg << "<line x1=\"" << fmt(kLeft - 4) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(kLeft)
        << "\" y2=\"" << fmt(y) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(y + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  const int x_step = std::max(1, (max_bin + 14) / 15);
  for (int b = 1; b <= max_bin; b += x_step) {
    const double x = x_of(b);
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(kBottom) << "\" x2=\"" << fmt(x)
        << "\" y2=\"" << fmt(kBottom + 4) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(kBottom + 18)
        << "\" text-anchor=\"middle\">" << b << "</text>\n";
  }
  svg << "<text x=\"" << fmt((kLeft + kRight) / 2) << "\" y=\"" << fmt(kHeight - 10)
      << "\" text-anchor=\"middle\">behavior bin</text>\n";
  svg << "<text x=\"16\" y=\"" << fmt((kTop + kBottom) / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << fmt((kTop + kBottom) / 2)
      << ")\">posterior probability</text>\n";
  svg << "</g>\n";

  if (!truth_points.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"3\" points=\"";
    for (std::size_t i = 0; i < truth_points.size(); ++i) {
      if (i > 0) svg << " ";
      svg << fmt(x_of(truth_points[i].first)) << "," << fmt(y_of(truth_points[i].second));
    }
    svg << "\"/>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = series_color(s.method, static_cast<int>(si));
    svg << "<g stroke=\"" << color << "\" fill=\"" << color << "\">\n";
    // connecting line over in-range points only
    svg << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.bins.size(); ++i) {
      if (!in_range(s.rho[i])) continue;
      if (!first) svg << " ";
      svg << fmt(x_of(s.bins[i])) << "," << fmt(y_of(s.rho[i]));
      first = false;
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.bins.size(); ++i) {
      if (!in_range(s.rho[i])) continue;  // off-scale estimates stay off the plot
      const double x = x_of(s.bins[i]);
      const double y = y_of(s.rho[i]);
      if (std::isfinite(s.se[i]) && s.se[i] > 0.0) {
        const double y_lo = y_of(std::max(kYMin, s.rho[i] - s.se[i]));
        const double y_hi = y_of(std::min(kYMax, s.rho[i] + s.se[i]));
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(y_lo) << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << fmt(y_hi) << "\" stroke-width=\"1\"/>\n";
        svg << "<line x1=\"" << fmt(x - 3) << "\" y1=\"" << fmt(y_lo) << "\" x2=\""
            << fmt(x + 3) << "\" y2=\"" << fmt(y_lo) << "\" stroke-width=\"1\"/>\n";
        svg << "<line x1=\"" << fmt(x - 3) << "\" y1=\"" << fmt(y_hi) << "\" x2=\""
            << fmt(x + 3) << "\" y2=\"" << fmt(y_hi) << "\" stroke-width=\"1\"/>\n";
      }
      svg << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"3\"/>\n";
    }
    svg << "</g>\n";
  }

  // legend
  svg << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  double ly = kTop + 10.0;
  if (!truth_points.empty()) {
    svg << "<line x1=\"" << fmt(kRight + 14) << "\" y1=\"" << fmt(ly) << "\" x2=\""
        << fmt(kRight + 38) << "\" y2=\"" << fmt(ly)
        << "\" stroke=\"black\" stroke-width=\"3\"/>\n";
    svg << "<text x=\"" << fmt(kRight + 44) << "\" y=\"" << fmt(ly + 4)
        << "\" fill=\"#333333\">truth</text>\n";
    ly += 20.0;
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = series_color(series[si].method, static_cast<int>(si));
    svg << "<line x1=\"" << fmt(kRight + 14) << "\" y1=\"" << fmt(ly) << "\" x2=\""
        << fmt(kRight + 38) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    svg << "<circle cx=\"" << fmt(kRight + 26) << "\" cy=\"" << fmt(ly) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << fmt(kRight + 44) << "\" y=\"" << fmt(ly + 4)
        << "\" fill=\"#333333\">" << series[si].method << "</text>\n";
    ly += 20.0;
  }
  svg << "</g>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace c2f
