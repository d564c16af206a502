#pragma once

// Direct dense-matrix versions of the smoothers. They build the full weighted
// design and solve the normal equations with a full-pivot LU, sharing no code
// with the library's accumulated-sum implementations.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace hetfx::oracle {

inline double gauss(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

inline Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& g, const Eigen::VectorXd& w,
                                   const Eigen::VectorXd& y) {
  const Eigen::MatrixXd gtw = g.transpose() * w.asDiagonal();
  const Eigen::MatrixXd a = gtw * g;
  return a.fullPivLu().solve(gtw * y);
}

// Intercept of the Gaussian local linear fit at x0.
inline double local_linear(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h, double x0) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd g(n, 2);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, 0) = 1.0;
    g(i, 1) = x[i] - x0;
    w[i] = gauss((x[i] - x0) / h) / h;
  }
  return weighted_ls(g, w, y)[0];
}

struct VcCoef {
  double beta;
  double m0;
};

// Varying-coefficient fit of y on d around (x0, e0) with Gaussian product
// weights: columns d, 1, d*(x-x0), (x-x0), d*(s-e0), (s-e0).
inline VcCoef step1(const Eigen::VectorXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& d,
                    const Eigen::VectorXd& y, double h1, double h2, double x0, double e0) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd g(n, 6);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = x[i] - x0;
    const double b = s[i] - e0;
    g.row(i) << d[i], 1.0, d[i] * a, a, d[i] * b, b;
    w[i] = gauss(a / h1) * gauss(b / h2) / (h1 * h2);
  }
  const Eigen::VectorXd c = weighted_ls(g, w, y);
  return {c[0], c[1]};
}

inline double kde(const Eigen::VectorXd& x, double h, double x0) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += gauss((x[i] - x0) / h);
  return s / (static_cast<double>(x.size()) * h);
}

}  // namespace hetfx::oracle
