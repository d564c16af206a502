#include "hetfx/locfit.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "hetfx/error.hpp"
#include "hetfx/parallel.hpp"

namespace hetfx {
namespace {

template <typename Gram>
double condition_estimate(const Gram& gram) {
  using Solver = Eigen::SelfAdjointEigenSolver<Gram>;
  Solver es;
  if constexpr (Gram::RowsAtCompileTime == 2 || Gram::RowsAtCompileTime == 3) {
    es.computeDirect(gram, Eigen::EigenvaluesOnly);
  } else {
    es.compute(gram, Eigen::EigenvaluesOnly);
  }
  const auto& ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Shared solve policy for Gram-form problems of any (fixed or dynamic) size.
template <typename Gram, typename Rhs>
Rhs solve_gram(const Gram& gram, const Rhs& rhs, bool& regularized, double& condition) {
  const double trace = gram.trace();
  if (!(trace > 0.0)) throw EmptyNeighborhood("weighted design has no positive weight");
  condition = condition_estimate(gram);
  if (condition <= kConditionLimit) {
    regularized = false;
    return gram.ldlt().solve(rhs);
  }
  regularized = true;
  Gram jittered = gram;
  jittered.diagonal().array() += kRidgeScale * trace / static_cast<double>(gram.rows());
  return jittered.ldlt().solve(rhs);
}

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Kernel-weighted sums for the local linear smoother, optionally leaving out
// one observation.
LocalLinearFit local_linear_impl(std::span<const double> x, std::span<const double> y, double h,
                                 double x0, KernelKind kind, std::size_t skip) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
  const double inv_h = 1.0 / h;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i == skip) continue;
    const double u = (x[i] - x0) * inv_h;
    const double w = kernel_eval(kind, u);
    if (w == 0.0) continue;
    const double wu = w * u;
    s0 += w;
    s1 += wu;
    s2 += wu * u;
    t0 += w * y[i];
    t1 += wu * y[i];
  }
  if (!(s0 > 0.0)) throw EmptyNeighborhood("local_linear: no observation has positive weight");
  Mat2 gram;
  gram << s0, s1, s1, s2;
  bool regularized = false;
  double condition = 0.0;
  const Vec2 coef = solve_gram(gram, Vec2(t0, t1), regularized, condition);
  return {coef[0], coef[1] * inv_h, regularized};
}

// Accumulates the 6x6 Gram matrix of the Step-1 design. Every entry is a
// kernel-weighted sum of 1, a, b, a^2, ab, b^2 over either all units or the
// treated units only (D^2 = D), so 12 sums plus 6 right-hand-side sums
// describe the whole system.
std::optional<Step1Point> step1_point(std::span<const double> xl, std::span<const double> s,
                                      std::span<const double> d, std::span<const double> y,
                                      double x0, double e0, double h1, double h2, KernelKind kind,
                                      std::size_t skip) {
  // Index: 0:1 1:a 2:b 3:aa 4:ab 5:bb
  std::array<double, 6> all{}, treated{};
  // Index: 0:y 1:ay 2:by for all and treated.
  std::array<double, 3> ry{}, ryt{};
  const double inv_h1 = 1.0 / h1;
  const double inv_h2 = 1.0 / h2;
  const std::size_t n = xl.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == skip) continue;
    const double a = (xl[i] - x0) * inv_h1;
    const double b = (s[i] - e0) * inv_h2;
    double w;
    if (kind == KernelKind::Gaussian) {
      w = std::exp(-0.5 * (a * a + b * b));
    } else {
      w = kernel_eval(kind, a) * kernel_eval(kind, b);
    }
    if (w == 0.0) continue;
    const double wa = w * a;
    const double wb = w * b;
    const std::array<double, 6> m{w, wa, wb, wa * a, wa * b, wb * b};
    const double yi = y[i];
    for (int k = 0; k < 6; ++k) all[k] += m[k];
    ry[0] += w * yi;
    ry[1] += wa * yi;
    ry[2] += wb * yi;
    if (d[i] != 0.0) {
      for (int k = 0; k < 6; ++k) treated[k] += m[k];
      ryt[0] += w * yi;
      ryt[1] += wa * yi;
      ryt[2] += wb * yi;
    }
  }
  if (!(all[0] > 0.0)) return std::nullopt;

  // Column c of the design is (treated ? D : 1) times monomial mono[c].
  static constexpr int mono[6] = {0, 0, 1, 1, 2, 2};
  static constexpr bool has_d[6] = {true, false, true, false, true, false};
  // Product monomial index for (1|a|b) x (1|a|b).
  static constexpr int prod[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  Mat6 gram;
  Vec6 rhs;
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      const int k = prod[mono[r]][mono[c]];
      gram(r, c) = (has_d[r] || has_d[c]) ? treated[k] : all[k];
    }
    rhs[r] = has_d[r] ? ryt[mono[r]] : ry[mono[r]];
  }
  bool regularized = false;
  double condition = 0.0;
  const Vec6 coef = solve_gram(gram, rhs, regularized, condition);
  return Step1Point{coef[0], coef[1], regularized};
}

void check_bandwidth(double h, const char* what) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw InvalidArgument(std::string(what) + ": bandwidth must be positive and finite");
  }
}

std::vector<std::size_t> held_out(std::size_t n) {
  const std::size_t m = std::min(n, kLscvMaxHeldOut);
  std::vector<std::size_t> idx(m);
  for (std::size_t k = 0; k < m; ++k) idx[k] = k * n / m;
  return idx;
}

double lscv_smoother(std::span<const double> x, std::span<const double> y, double h,
                     KernelKind kind) {
  double cv = 0.0;
  for (std::size_t i : held_out(x.size())) {
    try {
      const double r = y[i] - local_linear_impl(x, y, h, x[i], kind, i).value;
      cv += r * r;
    } catch (const EmptyNeighborhood&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return cv;
}

double lscv_step1(const BandwidthProblem& p, double h1, double h2) {
  double cv = 0.0;
  for (std::size_t i : held_out(p.x.size())) {
    const auto fit = step1_point(p.x, p.scores, p.d, p.y, p.x[i], p.scores[i], h1, h2, p.kernel, i);
    if (!fit) return std::numeric_limits<double>::infinity();
    const double r = p.y[i] - fit->beta * p.d[i] - fit->m0;
    cv += r * r;
  }
  return cv;
}

}  // namespace

WlsSolution wls_solve(const WlsProblem& problem) {
  const auto& a = problem.design;
  const Eigen::Index n = a.rows();
  const Eigen::Index k = a.cols();
  if (k < 1) throw InvalidArgument("wls_solve: design needs at least one column");
  if (problem.weights.size() != n || problem.response.size() != n) {
    throw InvalidArgument("wls_solve: design, weights and response lengths differ");
  }
  if ((problem.weights.array() < 0.0).any() || !problem.weights.allFinite()) {
    throw InvalidArgument("wls_solve: weights must be finite and nonnegative");
  }
  if (!(problem.weights.array() > 0.0).any()) {
    throw EmptyNeighborhood("wls_solve: all weights are zero");
  }
  const Eigen::VectorXd sw = problem.weights.cwiseSqrt();
  const Eigen::MatrixXd wa = sw.asDiagonal() * a;
  const Eigen::VectorXd wy = sw.cwiseProduct(problem.response);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wa);
  const Eigen::VectorXd r = qr.matrixR().topLeftCorner(std::min(n, k), std::min(n, k))
                                .diagonal()
                                .cwiseAbs();
  double condition = std::numeric_limits<double>::infinity();
  if (n >= k && r.minCoeff() > 0.0) {
    const double c = r.maxCoeff() / r.minCoeff();
    condition = c * c;
  }
  WlsSolution out;
  out.condition = condition;
  if (condition <= kConditionLimit) {
    out.coef = qr.solve(wy);
    return out;
  }
  // Ridge: append sqrt(lambda) * I below the weighted design.
  const double lambda = kRidgeScale * wa.squaredNorm() / static_cast<double>(k);
  Eigen::MatrixXd aug(n + k, k);
  aug.topRows(n) = wa;
  aug.bottomRows(k) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
  rhs.head(n) = wy;
  out.coef = aug.colPivHouseholderQr().solve(rhs);
  out.regularized = true;
  return out;
}

WlsSolution solve_normal_equations(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
  if (gram.rows() != gram.cols() || gram.rows() != rhs.size() || gram.rows() == 0) {
    throw InvalidArgument("solve_normal_equations: dimension mismatch");
  }
  WlsSolution out;
  out.coef = solve_gram(gram, rhs, out.regularized, out.condition);
  return out;
}

LocalLinearFit local_linear(std::span<const double> x, std::span<const double> y, double h,
                            double x0, KernelKind kind) {
  check_bandwidth(h, "local_linear");
  if (x.size() != y.size()) throw InvalidArgument("local_linear: x and y lengths differ");
  return local_linear_impl(x, y, h, x0, kind, x.size());
}

std::vector<std::optional<double>> local_linear_many(std::span<const double> x,
                                                     std::span<const double> y, double h,
                                                     std::span<const double> points,
                                                     KernelKind kind) {
  check_bandwidth(h, "local_linear");
  if (x.size() != y.size()) throw InvalidArgument("local_linear: x and y lengths differ");
  std::vector<std::optional<double>> out(points.size());
  for (std::size_t g = 0; g < points.size(); ++g) {
    try {
      out[g] = local_linear_impl(x, y, h, points[g], kind, x.size()).value;
    } catch (const EmptyNeighborhood&) {
      out[g] = std::nullopt;
    }
  }
  return out;
}

std::vector<std::optional<Step1Point>> step1_vc_fit(const ObservationalDataset& data,
                                                    std::span<const double> smoothing_scores,
                                                    double h1, double h2,
                                                    std::span<const ScorePoint> points,
                                                    const Step1Options& options) {
  check_bandwidth(h1, "step1_vc_fit (h1)");
  check_bandwidth(h2, "step1_vc_fit (h2)");
  if (static_cast<Eigen::Index>(smoothing_scores.size()) != data.n()) {
    throw InvalidArgument("step1_vc_fit: score vector length differs from sample size");
  }
  for (const auto& pt : points) {
    if (!std::isfinite(pt.xl) || !std::isfinite(pt.score)) {
      throw InvalidArgument("step1_vc_fit: evaluation point is not finite");
    }
  }
  const auto xl = as_span(data.xl());
  const auto d = as_span(data.d());
  const auto y = as_span(data.y());
  std::vector<std::optional<Step1Point>> out(points.size());
  parallel_for(points.size(), options.threads, [&](std::size_t g) {
    out[g] = step1_point(xl, smoothing_scores, d, y, points[g].xl, points[g].score, h1, h2,
                         options.kernel, xl.size());
  });
  return out;
}

Step1Fit step1_fit_at_samples(const ObservationalDataset& data,
                              std::span<const double> smoothing_scores, double h1, double h2,
                              const Step1Options& options) {
  const Eigen::Index n = data.n();
  std::vector<ScorePoint> points(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    points[static_cast<std::size_t>(i)] = {data.xl()[i], smoothing_scores[static_cast<std::size_t>(i)]};
  }
  const auto fits = step1_vc_fit(data, smoothing_scores, h1, h2, points, options);
  Step1Fit out;
  out.h1 = h1;
  out.h2 = h2;
  out.beta_at_sample.resize(n);
  out.m0_at_sample.resize(n);
  out.residuals.resize(n);
  std::size_t regularized = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    // A sample point always carries its own positive weight.
    const auto& fit = *fits[static_cast<std::size_t>(i)];
    out.beta_at_sample[i] = fit.beta;
    out.m0_at_sample[i] = fit.m0;
    out.residuals[i] = data.y()[i] - fit.beta * data.d()[i] - fit.m0;
    if (fit.regularized) ++regularized;
  }
  out.regularized_fraction = static_cast<double>(regularized) / static_cast<double>(n);
  out.sparse_overlap = out.regularized_fraction > kSparseOverlapFraction;
  return out;
}

double lscv_score(const BandwidthProblem& problem, double h) {
  check_bandwidth(h, "lscv_score");
  return lscv_smoother(problem.x, problem.y, h, problem.kernel);
}

double lscv_score_step1(const BandwidthProblem& problem, double h1, double h2) {
  check_bandwidth(h1, "lscv_score_step1 (h1)");
  check_bandwidth(h2, "lscv_score_step1 (h2)");
  return lscv_step1(problem, h1, h2);
}

BandwidthMethod parse_bandwidth_method(std::string_view name) {
  if (name == "rot") return BandwidthMethod::RuleOfThumb;
  if (name == "lscv") return BandwidthMethod::Lscv;
  throw InvalidArgument("unknown bandwidth method '" + std::string(name) + "'");
}

std::string_view to_string(BandwidthMethod method) noexcept {
  return method == BandwidthMethod::Lscv ? "lscv" : "rot";
}

std::vector<double> lscv_factors() {
  std::vector<double> f(kLscvGridSize);
  const double lo = std::log(kLscvLowFactor);
  const double hi = std::log(kLscvHighFactor);
  for (std::size_t i = 0; i < kLscvGridSize; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(kLscvGridSize - 1);
    f[i] = std::exp(hi + t * (lo - hi));
  }
  f.front() = kLscvHighFactor;
  f.back() = kLscvLowFactor;
  return f;
}

BandwidthChoice select_bandwidth(const BandwidthProblem& problem, BandwidthMethod method,
                                 BandwidthTarget target) {
  const bool step1 = target == BandwidthTarget::Step1;
  if (step1 && problem.scores.size() != problem.x.size()) {
    throw InvalidArgument("select_bandwidth: Step-1 selection needs one score per observation");
  }
  BandwidthChoice rot{silverman_bandwidth(problem.x), std::nullopt};
  if (step1) rot.h2 = silverman_bandwidth(problem.scores);
  if (method == BandwidthMethod::RuleOfThumb) return rot;

  const std::size_t n = problem.x.size();
  if (n < 20) throw InvalidArgument("select_bandwidth: lscv needs at least 20 observations");
  if (problem.y.size() != n || (step1 && problem.d.size() != n)) {
    throw InvalidArgument("select_bandwidth: input lengths differ");
  }
  double scale = 0.0;
  for (double v : problem.y) scale += v * v;
  const double abs_tol = 1e-14 * scale;

  // Largest first: a later candidate must be strictly better to win.
  const auto minimise = [&](auto&& criterion) {
    double best_f = 0.0;
    double best_cv = std::numeric_limits<double>::infinity();
    for (double f : lscv_factors()) {
      const double cv = criterion(f);
      if (!std::isfinite(cv)) continue;
      if (!std::isfinite(best_cv) || cv < best_cv - 1e-9 * best_cv - abs_tol) {
        best_cv = cv;
        best_f = f;
      }
    }
    if (!std::isfinite(best_cv)) {
      throw InvalidArgument("select_bandwidth: every lscv candidate left an empty neighbourhood");
    }
    return best_f;
  };

  if (!step1) {
    const double f = minimise(
        [&](double f) { return lscv_smoother(problem.x, problem.y, f * rot.h, problem.kernel); });
    return {f * rot.h, std::nullopt};
  }
  // h1 and h2 are chosen independently: each one's multiplier is scanned
  // with the other bandwidth held at its rule-of-thumb value.
  const double f1 = minimise([&](double f) { return lscv_step1(problem, f * rot.h, *rot.h2); });
  const double f2 = minimise([&](double f) { return lscv_step1(problem, rot.h, f * *rot.h2); });
  return {f1 * rot.h, f2 * *rot.h2};
}

}  // namespace hetfx
