#include "sslab/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "sslab/error.hpp"

namespace sslab {
namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double m) {
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

void require_finite(std::span<const double> v, const char* what) {
  for (const double x : v) {
    if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw InvalidArgument("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw InvalidArgument("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return std::clamp(p, 0.0, 1.0);
}

CorrelationStat pearson_r_p(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson_r_p: vectors differ in length");
  if (x.size() < 3) throw InvalidArgument("pearson_r_p: needs at least 3 points");
  require_finite(x, "pearson_r_p x");
  require_finite(y, "pearson_r_p y");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("pearson_r_p: zero variance");
  CorrelationStat out;
  out.n = x.size();
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(out.n) - 2.0;
  const double denom = 1.0 - out.r * out.r;
  out.p = denom <= 0.0 ? 0.0 : student_t_two_sided_p(out.r * std::sqrt(df / denom), df);
  return out;
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch_t_test: each group needs at least 2 values");
  require_finite(a, "welch_t_test group a");
  require_finite(b, "welch_t_test group b");
  const double ma = mean(a);
  const double mb = mean(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  TTestResult out;
  if (se2 == 0.0) {
    if (ma != mb) throw InvalidArgument("welch_t_test: zero variance in both groups with different means");
    out.df = static_cast<double>(a.size() + b.size() - 2);
    return out;
  }
  out.t = (ma - mb) / std::sqrt(se2);
  const double den = va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1);
  out.df = se2 * se2 / den;
  out.p = student_t_two_sided_p(out.t, out.df);
  return out;
}

}  // namespace sslab
