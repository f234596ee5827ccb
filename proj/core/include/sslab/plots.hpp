#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sslab {

// Minimal SVG charts. Every chart is written as <stem>.svg plus <stem>.csv
// holding exactly the plotted data, so checks can read numbers instead of
// pixels.

struct AxisLabels {
  std::string title;
  std::string x;
  std::string y;
};

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per category; NaN leaves a gap
};

/// CSV: category,series,value
void write_grouped_bars(const std::filesystem::path& stem, const AxisLabels& labels,
                        const std::vector<std::string>& categories, const std::vector<BarSeries>& series);

struct ScatterPoint {
  std::string series;
  std::string label;
  double x = 0.0;
  double y = 0.0;
  double size = 1.0;  // marker area is proportional to this
};

/// Largest marker area in square pixels.
inline constexpr double kMaxMarkerArea = 900.0;

/// CSV: series,label,x,y,size,marker_area. marker_area = size * kMaxMarkerArea / max(size).
void write_scatter(const std::filesystem::path& stem, const AxisLabels& labels, const std::vector<ScatterPoint>& points);

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// CSV: series,x,y
void write_lines(const std::filesystem::path& stem, const AxisLabels& labels, const std::vector<LineSeries>& series);

}  // namespace sslab
