#pragma once

// Independent reference implementations used only by the test suite:
// a 1D finite-difference solver for the radial cell equation, a dense
// partial-pivot LU, and small quadrature helpers. Deliberately written
// with different numerics than the library they check.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Radial cell equation in log coordinates.
//
// The cell problem
//   -(1/eps^2)(Z'' + Z'/r) + (1/eps^2) V(r) Z = 1/(pi R^2),  Z'(0)=Z'(R)=0,
//   V = alpha^2/r^2 on (r_eps, R), 0 on (0, r_eps),
// becomes, with t = ln r and S = eps^2/(pi R^2),
//   -Z_tt + alpha^2 1_{t > ln r_eps} Z = S e^{2t},
// solved on a uniform t-grid truncated `pad` below ln r_eps (the omitted core
// contributes O(e^{2(t_min)}) to every quantity of interest).
// ---------------------------------------------------------------------------
struct RadialZSolution {
  std::vector<double> t;  // log radii
  std::vector<double> z;
  double R = 0.0;

  double value_at_r(double r) const {
    double tt = std::log(r);
    if (tt <= t.front()) return z.front();
    if (tt >= t.back()) return z.back();
    double h = t[1] - t[0];
    size_t i = static_cast<size_t>((tt - t.front()) / h);
    if (i + 1 >= t.size()) i = t.size() - 2;
    double w = (tt - t[i]) / h;
    return (1.0 - w) * z[i] + w * z[i + 1];
  }

  // integral over the unit square cell: 2 pi int Z r dr + (1 - pi R^2) Z(R)
  double cell_average() const {
    double acc = 0.0;
    for (size_t i = 0; i + 1 < t.size(); ++i) {
      double h = t[i + 1] - t[i];
      double f0 = z[i] * std::exp(2.0 * t[i]);
      double f1 = z[i + 1] * std::exp(2.0 * t[i + 1]);
      acc += 0.5 * h * (f0 + f1);
    }
    return 2.0 * kPi * acc + (1.0 - kPi * R * R) * z.back();
  }
};

inline RadialZSolution fd_radial_z(double eps, double R, double r_eps, int n = 40000,
                                   double pad = 30.0) {
  double alpha = 1.0 / std::log(R / r_eps);
  double S = eps * eps / (kPi * R * R);
  double tre = std::log(r_eps);
  double t1 = std::log(R);
  // place the coefficient jump exactly on a grid node (second-order interface
  // treatment: the interface node carries the average of the two sides)
  double span = t1 - tre;
  int m = std::max(8, static_cast<int>(std::lround(n * span / (span + pad))));
  double h = span / m;
  int k = static_cast<int>(std::ceil(pad / h));
  int N = m + k + 1;
  RadialZSolution sol;
  sol.R = R;
  sol.t.resize(N);
  sol.z.assign(N, 0.0);
  for (int i = 0; i < N; ++i) sol.t[i] = tre + h * (i - k);

  n = N;
  std::vector<double> lo(n, -1.0 / (h * h)), di(n), up(n, -1.0 / (h * h)), g(n);
  for (int i = 0; i < n; ++i) {
    double c = (i > k) ? alpha * alpha : (i == k ? 0.5 * alpha * alpha : 0.0);
    di[i] = 2.0 / (h * h) + c;
    g[i] = S * std::exp(2.0 * sol.t[i]);
  }
  // Neumann ends via ghost reflection
  up[0] = -2.0 / (h * h);
  lo[n - 1] = -2.0 / (h * h);

  // Thomas sweep
  std::vector<double> cp(n), dp(n);
  cp[0] = up[0] / di[0];
  dp[0] = g[0] / di[0];
  for (int i = 1; i < n; ++i) {
    double m = di[i] - lo[i] * cp[i - 1];
    cp[i] = up[i] / m;
    dp[i] = (g[i] - lo[i] * dp[i - 1]) / m;
  }
  sol.z[n - 1] = dp[n - 1];
  for (int i = n - 2; i >= 0; --i) sol.z[i] = dp[i] - cp[i] * sol.z[i + 1];
  return sol;
}

// ---------------------------------------------------------------------------
// Dense LU with partial pivoting (row-major), for small reference solves.
// ---------------------------------------------------------------------------
struct DenseLU {
  int n = 0;
  std::vector<double> lu;
  std::vector<int> piv;

  explicit DenseLU(std::vector<double> a, int n_) : n(n_), lu(std::move(a)), piv(n_) {
    for (int i = 0; i < n; ++i) piv[i] = i;
    for (int k = 0; k < n; ++k) {
      int p = k;
      for (int i = k + 1; i < n; ++i)
        if (std::abs(lu[i * n + k]) > std::abs(lu[p * n + k])) p = i;
      if (p != k) {
        for (int j = 0; j < n; ++j) std::swap(lu[k * n + j], lu[p * n + j]);
        std::swap(piv[k], piv[p]);
      }
      double d = lu[k * n + k];
      if (d == 0.0) throw std::runtime_error("DenseLU: singular");
      for (int i = k + 1; i < n; ++i) {
        double f = lu[i * n + k] / d;
        lu[i * n + k] = f;
        for (int j = k + 1; j < n; ++j) lu[i * n + j] -= f * lu[k * n + j];
      }
    }
  }

  std::vector<double> solve(const std::vector<double>& b) const {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[piv[i]];
    for (int i = 1; i < n; ++i) {
      double s = x[i];
      for (int j = 0; j < i; ++j) s -= lu[i * n + j] * x[j];
      x[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = x[i];
      for (int j = i + 1; j < n; ++j) s -= lu[i * n + j] * x[j];
      x[i] = s / lu[i * n + i];
    }
    return x;
  }
};

// ---------------------------------------------------------------------------
// Adaptive-free composite Gauss(5) quadrature on [a,b] with m panels.
// ---------------------------------------------------------------------------
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        int panels = 256) {
  static const double xs[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                               0.5384693101056831, 0.9061798459386640};
  static const double ws[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  double h = (b - a) / panels, acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    double c = a + (p + 0.5) * h;
    for (int q = 0; q < 5; ++q) acc += ws[q] * f(c + 0.5 * h * xs[q]);
  }
  return acc * 0.5 * h;
}

}  // namespace oracle
