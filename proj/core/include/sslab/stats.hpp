#pragma once

#include <cstddef>
#include <span>

namespace sslab {

struct CorrelationStat {
  double r = 0.0;
  double p = 1.0;  // two-sided
  std::size_t n = 0;
};

/// Sample Pearson r with a two-sided p from Student's t on n - 2 degrees of
/// freedom. Needs equal lengths >= 3 and non-zero variance on both sides.
CorrelationStat pearson_r_p(std::span<const double> x, std::span<const double> y);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;  // Welch-Satterthwaite
  double p = 1.0;   // two-sided
};

/// Welch's unequal-variance two-sample t-test. Each group needs >= 2 values.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace sslab
