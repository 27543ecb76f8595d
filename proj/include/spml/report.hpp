#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spml/error.hpp"
#include "spml/pipeline.hpp"
#include "spml/text.hpp"

namespace spml {

inline constexpr std::string_view kResultsHeader =
    "seed,tau,avg_pseudo_positives,teacher_map,student_map,an_baseline_map,em_baseline_map,"
    "full_supervision_map,wall_time_s";

// Shortest decimal string that parses back to the same double.
inline std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Row of results.csv. Per-tau mean rows carry seed "mean".
struct ResultsRow {
  std::string seed;
  SweepResultRow values;
};

// wall_time_s is machine dependent, so it is written as 0 unless timing is
// requested; otherwise identical configs give byte-identical files.
inline void write_results_csv(std::ostream& os, const std::vector<SweepResultRow>& rows, bool record_timing) {
  auto line = [&](const std::string& seed, const SweepResultRow& r) {
    os << seed << ',' << format_shortest(r.tau) << ',' << format_shortest(r.avg_pseudo_positives) << ','
       << format_shortest(r.teacher_map) << ',' << format_shortest(r.student_map) << ','
       << format_shortest(r.an_baseline_map) << ',' << format_shortest(r.em_baseline_map) << ','
       << format_shortest(r.full_supervision_map) << ','
       << format_shortest(record_timing ? r.wall_time_s : 0.0) << "\r\n";
  };
  os << kResultsHeader << "\r\n";
  for (const auto& r : rows) line(std::to_string(r.seed), r);
  for (const auto& r : mean_rows(rows)) line("mean", r);
}

inline std::vector<ResultsRow> read_results_csv(std::istream& is, const std::string& source = "results.csv") {
  std::string line;
  std::size_t lineno = 1;
  auto chomp = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(is, line)) throw ParseError(source, lineno, "empty results file");
  chomp(line);
  if (line != kResultsHeader) throw ParseError(source, lineno, "unexpected results header");
  std::vector<ResultsRow> out;
  while (std::getline(is, line)) {
    ++lineno;
    chomp(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string tok; std::getline(ls, tok, ',');) f.push_back(tok);
    if (f.size() != 9) throw ParseError(source, lineno, "expected 9 fields, got " + std::to_string(f.size()));
    ResultsRow r;
    r.seed = f[0];
    if (r.seed != "mean") r.values.seed = static_cast<std::uint64_t>(parse_long(f[0], source, lineno));
    double* dst[] = {&r.values.tau, &r.values.avg_pseudo_positives, &r.values.teacher_map,
                     &r.values.student_map, &r.values.an_baseline_map, &r.values.em_baseline_map,
                     &r.values.full_supervision_map, &r.values.wall_time_s};
    for (std::size_t i = 0; i < 8; ++i) *dst[i] = parse_double(f[i + 1], source, lineno);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static SVG line charts

struct ChartSeries {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
  bool dashed = false;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
  // Forced lower bound for the y axis (e.g. 0 for counts); NaN = auto.
  double y_floor = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string render_line_chart(const ChartSpec& spec) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : spec.series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!std::isnan(spec.y_floor)) ymin = std::min(ymin, spec.y_floor);
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  const double pad = (ymax - ymin) * 0.08;
  ymax += pad > 0 ? pad : 0.5;
  if (std::isnan(spec.y_floor)) ymin -= pad > 0 ? pad : 0.5;

  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << detail::svg_escape(spec.title) << "</text>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double yv = ymin + (ymax - ymin) * i / kTicks;
    const double y = sy(yv);
    os << "<line x1=\"" << kLeft << "\" y1=\"" << detail::fixed(y, 2) << "\" x2=\"" << kLeft + pw << "\" y2=\""
       << detail::fixed(y, 2) << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << detail::fixed(y + 4, 2) << "\" text-anchor=\"end\">"
       << detail::fixed(yv, 3) << "</text>\n";
  }
  std::vector<double> xticks;
  for (const auto& s : spec.series) {
    for (auto [x, y] : s.points) xticks.push_back(x);
  }
  std::sort(xticks.begin(), xticks.end());
  xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
  for (double xv : xticks) {
    os << "<text x=\"" << detail::fixed(sx(xv), 2) << "\" y=\"" << kTop + ph + 18
       << "\" text-anchor=\"middle\">" << format_shortest(xv) << "</text>\n";
  }
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << detail::svg_escape(spec.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::svg_escape(spec.y_label) << "</text>\n";

  double legend_y = kTop + 10;
  for (const auto& s : spec.series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\""
       << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      os << (i ? " " : "") << detail::fixed(sx(s.points[i].first), 2) << ','
         << detail::fixed(sy(s.points[i].second), 2);
    }
    os << "\"/>\n";
    for (auto [x, y] : s.points) {
      os << "<circle cx=\"" << detail::fixed(sx(x), 2) << "\" cy=\"" << detail::fixed(sy(y), 2)
         << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    const double lx = kLeft + pw + 15;
    os << "<line x1=\"" << lx << "\" y1=\"" << legend_y << "\" x2=\"" << lx + 20 << "\" y2=\"" << legend_y
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "")
       << "/>\n";
    os << "<text x=\"" << lx + 26 << "\" y=\"" << legend_y + 4 << "\">" << detail::svg_escape(s.name)
       << "</text>\n";
    legend_y += 20;
  }
  os << "</svg>\n";
  return os.str();
}

/// Per-tau means from results rows: uses the "mean" rows when present,
/// otherwise averages the per-seed rows.
inline std::vector<SweepResultRow> tau_means(const std::vector<ResultsRow>& rows) {
  std::vector<SweepResultRow> means, per_seed;
  for (const auto& r : rows) (r.seed == "mean" ? means : per_seed).push_back(r.values);
  return means.empty() ? mean_rows(per_seed) : means;
}

inline std::string map_vs_tau_chart(const std::vector<SweepResultRow>& means) {
  ChartSpec spec{"Test MAP vs threshold", "tau", "mean average precision", {}};
  ChartSeries student{"student (pseudo)", "#d62728", {}}, an{"AN baseline", "#1f77b4", {}, true},
      em{"EM baseline", "#2ca02c", {}, true}, full{"full supervision", "#7f7f7f", {}, true};
  for (const auto& r : means) {
    student.points.emplace_back(r.tau, r.student_map);
    an.points.emplace_back(r.tau, r.an_baseline_map);
    em.points.emplace_back(r.tau, r.em_baseline_map);
    full.points.emplace_back(r.tau, r.full_supervision_map);
  }
  spec.series = {student, an, em, full};
  return render_line_chart(spec);
}

inline std::string labels_vs_tau_chart(const std::vector<SweepResultRow>& means) {
  ChartSpec spec{"Pseudo positives per example vs threshold", "tau", "avg positive labels per example", {}, 0.0};
  ChartSeries pseudo{"pseudo multi-labels", "#d62728", {}}, single{"single positive", "#7f7f7f", {}, true};
  for (const auto& r : means) {
    pseudo.points.emplace_back(r.tau, r.avg_pseudo_positives);
    single.points.emplace_back(r.tau, 1.0);
  }
  spec.series = {pseudo, single};
  return render_line_chart(spec);
}

}  // namespace spml
