// Test-only oracles, independent of the library's numerics.
#pragma once

#include <cmath>
#include <vector>

#include "protomp/tensor.hpp"

namespace test_oracle {

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(protomp::Tensor a) {
  const int n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) ev[size_t(i)] = a.at(i, i);
  return ev;
}

// Adaptive Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int depth, double fa, double fm, double fb,
                      double whole) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 1e-13) {
    return left + right;
  }
  return simpson(f, a, m, depth - 1, fa, flm, fm, left) +
         simpson(f, m, b, depth - 1, fm, frm, fb, right);
}

inline double integrate(const std::function<double(double)>& f, double a,
                        double b) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, b, 40, fa, fm, fb, whole);
}

// Two-sided p-value of Student's t by direct quadrature of the density.
inline double t_pvalue_by_quadrature(double t, double nu) {
  const double at = std::fabs(t);
  const double lognorm = std::lgamma((nu + 1.0) / 2.0) -
                         std::lgamma(nu / 2.0) -
                         0.5 * std::log(nu * 3.14159265358979323846);
  auto density = [&](double x) {
    return std::exp(lognorm - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
  };
  // P(|T| > t) = 1 - integral of the density over [-t, t].
  return 1.0 - integrate(density, -at, at);
}

}  // namespace test_oracle
