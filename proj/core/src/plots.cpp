#include "sslab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "sslab/error.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool include_zero) {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (include_zero) lo = std::min(lo, 0.0);
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      const double pad = 0.05 * (hi - lo);
      hi += pad;
      if (!include_zero || lo < 0.0) lo -= pad;
    }
  }
};

class Canvas {
 public:
  Canvas(const AxisLabels& labels, Range x, Range y) : x_(x), y_(y) {
    svg_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
         << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
         << escape(labels.title) << "</text>\n"
         << "<text x=\"" << num(kLeft + plot_w() / 2) << "\" y=\"" << num(kHeight - 15)
         << "\" text-anchor=\"middle\">" << escape(labels.x) << "</text>\n"
         << "<text transform=\"translate(18," << num(kTop + plot_h() / 2)
         << ") rotate(-90)\" text-anchor=\"middle\">" << escape(labels.y) << "</text>\n";
  }

  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }
  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * plot_w(); }
  double py(double y) const { return kTop + plot_h() - (y - y_.lo) / (y_.hi - y_.lo) * plot_h(); }

  void axes(bool numeric_x) {
    svg_ << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w()) << "\" height=\""
         << num(plot_h()) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double v = y_.lo + (y_.hi - y_.lo) * i / 5.0;
      svg_ << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << num(v)
           << "</text>\n";
    }
    if (!numeric_x) return;
    for (int i = 0; i <= 5; ++i) {
      const double v = x_.lo + (x_.hi - x_.lo) * i / 5.0;
      svg_ << "<text x=\"" << num(px(v)) << "\" y=\"" << num(kTop + plot_h() + 16) << "\" text-anchor=\"middle\">"
           << num(v) << "</text>\n";
    }
  }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 10 + 18.0 * static_cast<double>(i);
      svg_ << "<rect x=\"" << num(kWidth - kRight + 15) << "\" y=\"" << num(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
           << color(i) << "\"/>\n"
           << "<text x=\"" << num(kWidth - kRight + 30) << "\" y=\"" << num(y) << "\">" << escape(names[i]) << "</text>\n";
    }
  }

  std::ostringstream& out() { return svg_; }

  void save(const fs::path& path) {
    svg_ << "</svg>\n";
    std::ofstream f(path);
    f << svg_.str();
    if (!f) throw RuntimeFailure("cannot write plot " + path.string());
  }

 private:
  Range x_;
  Range y_;
  std::ostringstream svg_;
};

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << text;
  if (!f) throw RuntimeFailure("cannot write " + path.string());
}

}  // namespace

void write_grouped_bars(const fs::path& stem, const AxisLabels& labels, const std::vector<std::string>& categories,
                        const std::vector<BarSeries>& series) {
  if (categories.empty() || series.empty()) throw InvalidArgument("bar chart needs categories and series");
  std::ostringstream csv;
  csv << "category,series,value\n";
  Range x;
  x.lo = 0.0;
  x.hi = static_cast<double>(categories.size());
  Range y;
  for (const auto& s : series) {
    if (s.values.size() != categories.size()) throw InvalidArgument("bar series '" + s.name + "' has the wrong length");
    for (std::size_t c = 0; c < categories.size(); ++c) {
      y.add(s.values[c]);
      csv << csv_cell(categories[c]) << ',' << csv_cell(s.name) << ',';
      if (std::isfinite(s.values[c])) csv << num(s.values[c]);
      csv << '\n';
    }
  }
  y.finish(true);
  write_text(with_suffix(stem, ".csv"), csv.str());

  Canvas canvas(labels, x, y);
  canvas.axes(false);
  const double group_w = Canvas::plot_w() / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      if (!std::isfinite(v)) continue;
      const double top = canvas.py(std::max(v, 0.0));
      const double base = canvas.py(std::min(v, 0.0));
      canvas.out() << "<rect x=\"" << num(gx + bar_w * static_cast<double>(s)) << "\" y=\"" << num(top)
                   << "\" width=\"" << num(bar_w) << "\" height=\"" << num(base - top) << "\" fill=\"" << color(s)
                   << "\"/>\n";
    }
    canvas.out() << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << num(kTop + Canvas::plot_h() + 16)
                 << "\" text-anchor=\"middle\">" << escape(categories[c]) << "</text>\n";
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  canvas.legend(names);
  canvas.save(with_suffix(stem, ".svg"));
}

void write_scatter(const fs::path& stem, const AxisLabels& labels, const std::vector<ScatterPoint>& points) {
  if (points.empty()) throw InvalidArgument("scatter plot needs at least one point");
  double max_size = 0.0;
  Range x;
  Range y;
  std::vector<std::string> names;
  for (const auto& p : points) {
    if (!(p.size > 0.0)) throw InvalidArgument("scatter marker size must be positive");
    max_size = std::max(max_size, p.size);
    x.add(p.x);
    y.add(p.y);
    if (std::find(names.begin(), names.end(), p.series) == names.end()) names.push_back(p.series);
  }
  x.finish(false);
  y.finish(false);

  std::ostringstream csv;
  csv << "series,label,x,y,size,marker_area\n";
  Canvas canvas(labels, x, y);
  canvas.axes(true);
  for (const auto& p : points) {
    const double area = p.size * kMaxMarkerArea / max_size;
    const auto series_index = static_cast<std::size_t>(std::find(names.begin(), names.end(), p.series) - names.begin());
    csv << csv_cell(p.series) << ',' << csv_cell(p.label) << ',' << num(p.x) << ',' << num(p.y) << ',' << num(p.size)
        << ',' << num(area) << '\n';
    canvas.out() << "<circle cx=\"" << num(canvas.px(p.x)) << "\" cy=\"" << num(canvas.py(p.y)) << "\" r=\""
                 << num(std::sqrt(area / M_PI)) << "\" fill=\"" << color(series_index)
                 << "\" fill-opacity=\"0.6\"><title>" << escape(p.label) << "</title></circle>\n";
  }
  canvas.legend(names);
  write_text(with_suffix(stem, ".csv"), csv.str());
  canvas.save(with_suffix(stem, ".svg"));
}

void write_lines(const fs::path& stem, const AxisLabels& labels, const std::vector<LineSeries>& series) {
  if (series.empty()) throw InvalidArgument("line plot needs at least one series");
  Range x;
  Range y;
  std::ostringstream csv;
  csv << "series,x,y\n";
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty()) throw InvalidArgument("line series '" + s.name + "' is malformed");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x.add(s.x[i]);
      y.add(s.y[i]);
      csv << csv_cell(s.name) << ',' << num(s.x[i]) << ',' << num(s.y[i]) << '\n';
    }
  }
  x.finish(false);
  y.finish(true);
  Canvas canvas(labels, x, y);
  canvas.axes(true);
  std::vector<std::string> names;
  for (std::size_t s = 0; s < series.size(); ++s) {
    names.push_back(series[s].name);
    canvas.out() << "<polyline fill=\"none\" stroke=\"" << color(s) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      canvas.out() << num(canvas.px(series[s].x[i])) << ',' << num(canvas.py(series[s].y[i])) << ' ';
    }
    canvas.out() << "\"/>\n";
  }
  canvas.legend(names);
  write_text(with_suffix(stem, ".csv"), csv.str());
  canvas.save(with_suffix(stem, ".svg"));
}

}  // namespace sslab
