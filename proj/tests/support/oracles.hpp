#pragma once

// Independent reference implementations used only by tests. None of these
// call into sslab numerics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues descending.
inline std::vector<double> jacobi_eigenvalues(Matrix a, double tol = 1e-15, int max_sweeps = 100) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a[i][i] * a[i][i];
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off <= tol * tol * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

// Sample covariance (divisor rows - 1) of row-major data.
inline Matrix covariance(const std::vector<double>& x, std::size_t rows, std::size_t dim) {
  std::vector<double> mean(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) mean[c] += x[r * dim + c];
  }
  for (auto& m : mean) m /= static_cast<double>(rows);
  Matrix cov(dim, std::vector<double>(dim, 0.0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        cov[i][j] += (x[r * dim + i] - mean[i]) * (x[r * dim + j] - mean[j]);
      }
    }
  }
  for (auto& row : cov) {
    for (auto& v : row) v /= static_cast<double>(rows - 1);
  }
  return cov;
}

// Cumulative explained variance at each n (n <= dim).
inline std::vector<double> explained_fractions(const std::vector<double>& x, std::size_t rows, std::size_t dim,
                                               const std::vector<int>& grid) {
  auto ev = jacobi_eigenvalues(covariance(x, rows, dim));
  for (auto& e : ev) e = std::max(e, 0.0);
  const double total = std::accumulate(ev.begin(), ev.end(), 0.0);
  std::vector<double> out;
  for (const int n : grid) out.push_back(std::accumulate(ev.begin(), ev.begin() + n, 0.0) / total);
  return out;
}

// Regularized incomplete beta I_x(a, b) by the modified Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double tiny = 1e-300;
  double f = 1.0;
  double c = 1.0;
  double d = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const int m = i / 2;
    double num;
    if (i == 0) {
      num = 1.0;
    } else if (i % 2 == 0) {
      num = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    } else {
      num = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    }
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    const double cd = c * d;
    f *= cd;
    if (std::abs(1.0 - cd) < 1e-16) break;
  }
  return std::exp(log_front) * (f - 1.0) / a;
}

inline double student_t_two_sided(double t, double df) {
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct Correlation {
  double r;
  double p;
};

inline Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  const double df = n - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  return {r, student_t_two_sided(t, df)};
}

struct Welch {
  double t;
  double df;
  double p;
};

inline Welch welch(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (const double x : v) ss += (x - m) * (x - m);
    return std::pair{m, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double qa = va / static_cast<double>(a.size());
  const double qb = vb / static_cast<double>(b.size());
  const double t = (ma - mb) / std::sqrt(qa + qb);
  const double df = (qa + qb) * (qa + qb) /
                    (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
  return {t, df, student_t_two_sided(t, df)};
}

struct Hit {
  std::int64_t id;
  double distance;
};

// All pairwise distances, full sort, self dropped.
inline std::vector<Hit> brute_force_knn(const std::vector<float>& x, const std::vector<std::int64_t>& ids,
                                        std::size_t dim, std::int64_t query, std::size_t k) {
  std::size_t q = 0;
  while (ids[q] != query) ++q;
  std::vector<Hit> all;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (r == q) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = static_cast<double>(x[r * dim + c]) - static_cast<double>(x[q * dim + c]);
      s += d * d;
    }
    all.push_back({ids[r], std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  all.resize(k);
  return all;
}

inline int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// Greedy max-min selection recomputed from scratch at every step.
inline std::vector<std::vector<int>> greedy_maxmin(const std::vector<std::vector<int>>& pool, std::size_t size) {
  std::vector<int> id(pool.front().size());
  std::iota(id.begin(), id.end(), 0);
  std::vector<std::vector<int>> chosen{id};
  std::vector<bool> used(pool.size(), false);
  while (chosen.size() < size) {
    int best_score = -1;
    std::size_t best = 0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      if (used[k]) continue;
      int score = std::numeric_limits<int>::max();
      for (const auto& c : chosen) score = std::min(score, hamming(pool[k], c));
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    used[best] = true;
    chosen.push_back(pool[best]);
  }
  return chosen;
}

inline int min_pairwise_hamming(const std::vector<std::vector<int>>& set) {
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) best = std::min(best, hamming(set[i], set[j]));
  }
  return best;
}

}  // namespace oracle
