#include "hetfx/baselines.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hetfx/error.hpp"
#include "hetfx/parallel.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {
namespace {

void check_scores(const ObservationalDataset& data, const Eigen::VectorXd& scores) {
  if (scores.size() != data.n()) throw InvalidArgument("score vector length differs from sample size");
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!(scores[i] > 0.0 && scores[i] < 1.0)) throw InvalidArgument("scores must lie in (0, 1)");
  }
}

double pseudo_bandwidth(std::span<const double> xl, std::span<const double> pseudo,
                        const BaselineOptions& options) {
  if (options.h3) return *options.h3;
  return select_bandwidth({xl, pseudo, {}, {}, options.kernel}, options.bandwidth,
                          BandwidthTarget::PseudoOutcome)
      .h;
}

struct Whitened {
  std::vector<double> z1, z2;
  bool fallback = false;
};

// Coordinates in which Euclidean distance equals the Mahalanobis distance
// under the pooled covariance of (X^l, e).
Whitened whiten(std::span<const double> xl, std::span<const double> scores) {
  const std::size_t n = xl.size();
  const double mx = mean(xl);
  const double me = mean(scores);
  double sxx = 0.0, sxe = 0.0, see = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = xl[i] - mx;
    const double b = scores[i] - me;
    sxx += a * a;
    sxe += a * b;
    see += b * b;
  }
  const double denom = static_cast<double>(n > 1 ? n - 1 : 1);
  Eigen::Matrix2d cov;
  cov << sxx / denom, sxe / denom, sxe / denom, see / denom;

  Whitened w;
  w.z1.resize(n);
  w.z2.resize(n);
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (llt.info() != Eigen::Success || !(lo > 0.0) || hi / lo > kConditionLimit) {
    w.fallback = true;
    std::copy(xl.begin(), xl.end(), w.z1.begin());
    std::copy(scores.begin(), scores.end(), w.z2.begin());
    return w;
  }
  const Eigen::Matrix2d l = llt.matrixL();
  for (std::size_t i = 0; i < n; ++i) {
    // Solve L z = v by forward substitution.
    const double z1 = xl[i] / l(0, 0);
    w.z1[i] = z1;
    w.z2[i] = (scores[i] - l(1, 0) * z1) / l(1, 1);
  }
  return w;
}

// Nearest neighbour among `pool` (sorted by z1, then index) for the query.
Eigen::Index nearest(const Whitened& w, const std::vector<std::size_t>& pool, std::size_t q) {
  const double qz1 = w.z1[q];
  const double qz2 = w.z2[q];
  const auto it = std::lower_bound(pool.begin(), pool.end(), qz1,
                                   [&](std::size_t j, double v) { return w.z1[j] < v; });
  auto right = static_cast<std::ptrdiff_t>(it - pool.begin());
  auto left = right - 1;
  const auto size = static_cast<std::ptrdiff_t>(pool.size());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = std::numeric_limits<std::size_t>::max();
  auto consider = [&](std::size_t j) {
    const double a = w.z1[j] - qz1;
    const double b = w.z2[j] - qz2;
    const double dist = a * a + b * b;
    if (dist < best || (dist == best && j < best_idx)) {
      best = dist;
      best_idx = j;
    }
  };
  bool go_left = left >= 0;
  bool go_right = right < size;
  while (go_left || go_right) {
    if (go_right) {
      const std::size_t j = pool[static_cast<std::size_t>(right)];
      const double a = w.z1[j] - qz1;
      if (a * a > best) {
        go_right = false;
      } else {
        consider(j);
        go_right = ++right < size;
      }
    }
    if (go_left) {
      const std::size_t j = pool[static_cast<std::size_t>(left)];
      const double a = qz1 - w.z1[j];
      if (a * a > best) {
        go_left = false;
      } else {
        consider(j);
        go_left = --left >= 0;
      }
    }
  }
  return static_cast<Eigen::Index>(best_idx);
}

std::vector<double> matched_contrasts(std::span<const double> xl, std::span<const double> scores,
                                      std::span<const double> d, std::span<const double> y,
                                      bool* fallback) {
  const MatchedPairs mp = match_units(xl, scores, d, y);
  if (fallback) *fallback = mp.euclidean_fallback;
  std::vector<double> delta(xl.size());
  for (std::size_t i = 0; i < xl.size(); ++i) {
    delta[i] = mp.imputed_y1[static_cast<Eigen::Index>(i)] - mp.imputed_y0[static_cast<Eigen::Index>(i)];
  }
  return delta;
}

}  // namespace

Eigen::VectorXd ipw_pseudo_outcomes(const Eigen::VectorXd& d, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& scores) {
  Eigen::VectorXd z(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    z[i] = d[i] * y[i] / scores[i] - (1.0 - d[i]) * y[i] / (1.0 - scores[i]);
  }
  return z;
}

Eigen::VectorXd aipw_pseudo_outcomes(const Eigen::VectorXd& d, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& scores, const Eigen::VectorXd& mu1,
                                     const Eigen::VectorXd& mu0) {
  Eigen::VectorXd z(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    z[i] = d[i] * (y[i] - mu1[i]) / scores[i] - (1.0 - d[i]) * (y[i] - mu0[i]) / (1.0 - scores[i]) +
           mu1[i] - mu0[i];
  }
  return z;
}

OutcomeModels fit_outcome_models(const ObservationalDataset& data) {
  const Eigen::Index n = data.n();
  const Eigen::Index k = data.p() + 1;
  Eigen::MatrixXd design(n, k);
  design.col(0).setOnes();
  design.rightCols(data.p()) = data.x();
  OutcomeModels out;
  for (int arm = 0; arm <= 1; ++arm) {
    Eigen::VectorXd w = (data.d().array() == static_cast<double>(arm)).cast<double>();
    if (w.sum() <= static_cast<double>(k)) {
      throw InsufficientData("aipw: each arm needs more than p + 1 units");
    }
    const WlsSolution sol = wls_solve({design, w, data.y()});
    out.regularized = out.regularized || sol.regularized;
    (arm == 1 ? out.mu1 : out.mu0) = design * sol.coef;
  }
  return out;
}

HteEstimate smooth_pseudo_outcome(const ObservationalDataset& data,
                                  const Eigen::VectorXd& pseudo, const EvaluationGrid& grid,
                                  Method method, const BaselineOptions& options) {
  const auto xl = as_span(data.xl());
  const auto z = as_span(pseudo);
  const double h = pseudo_bandwidth(xl, z, options);
  HteEstimate est(grid, method);
  est.bandwidths.h3 = h;
  est.tau_hat = local_linear_many(xl, z, h, grid.points(), options.kernel);

  const Eigen::Index n = data.n();
  std::vector<double> centred_sq(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const double c = z[ii] - local_linear(xl, z, h, xl[ii], options.kernel).value;
    centred_sq[ii] = c * c;
  }
  const auto sigma2 = local_linear_many(xl, centred_sq, h, grid.points(), options.kernel);
  const double nu = kernel_constants_for_ratio(options.kernel, 0.0).nu;
  const double kde_h = silverman_bandwidth(xl);
  est.variance.assign(grid.size(), std::nullopt);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double f = kde(xl, kde_h, grid[g], KernelKind::Gaussian);
    if (f < 1e-10) {
      ++est.diagnostics.density_underflow;
      continue;
    }
    if (!sigma2[g] || !(*sigma2[g] > 0.0)) continue;
    est.variance[g] = nu * *sigma2[g] / (static_cast<double>(n) * h * f);
  }
  return est;
}

HteEstimate ipw_estimate(const ObservationalDataset& data, const Eigen::VectorXd& scores,
                         const EvaluationGrid& grid, const BaselineOptions& options) {
  check_scores(data, scores);
  auto est = smooth_pseudo_outcome(data, ipw_pseudo_outcomes(data.d(), data.y(), scores), grid,
                                   Method::Ipw, options);
  est.diagnostics.score_min = scores.minCoeff();
  est.diagnostics.score_max = scores.maxCoeff();
  return est;
}

HteEstimate aipw_estimate(const ObservationalDataset& data, const Eigen::VectorXd& scores,
                          const EvaluationGrid& grid, const BaselineOptions& options) {
  check_scores(data, scores);
  const OutcomeModels models = fit_outcome_models(data);
  auto est = smooth_pseudo_outcome(
      data, aipw_pseudo_outcomes(data.d(), data.y(), scores, models.mu1, models.mu0), grid,
      Method::Aipw, options);
  est.diagnostics.score_min = scores.minCoeff();
  est.diagnostics.score_max = scores.maxCoeff();
  est.diagnostics.outcome_model_regularized = models.regularized;
  return est;
}

MatchedPairs match_units(std::span<const double> xl, std::span<const double> scores,
                         std::span<const double> d, std::span<const double> y) {
  const std::size_t n = xl.size();
  if (scores.size() != n || d.size() != n || y.size() != n) {
    throw InvalidArgument("match_units: input lengths differ");
  }
  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < n; ++i) (d[i] != 0.0 ? treated : control).push_back(i);
  if (treated.empty() || control.empty()) throw InvalidArgument("match_units: both arms must be nonempty");

  const Whitened w = whiten(xl, scores);
  auto by_z1 = [&](std::size_t a, std::size_t b) {
    return w.z1[a] < w.z1[b] || (w.z1[a] == w.z1[b] && a < b);
  };
  std::sort(treated.begin(), treated.end(), by_z1);
  std::sort(control.begin(), control.end(), by_z1);

  MatchedPairs out;
  out.euclidean_fallback = w.fallback;
  out.pairs.resize(n);
  out.imputed_y1.resize(static_cast<Eigen::Index>(n));
  out.imputed_y0.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_treated = d[i] != 0.0;
    const Eigen::Index j = nearest(w, is_treated ? control : treated, i);
    const auto ii = static_cast<Eigen::Index>(i);
    out.pairs[i] = {ii, j};
    const double own = y[i];
    const double other = y[static_cast<std::size_t>(j)];
    out.imputed_y1[ii] = is_treated ? own : other;
    out.imputed_y0[ii] = is_treated ? other : own;
  }
  return out;
}

HteEstimate match_variant_estimate(const ObservationalDataset& data,
                                   const Eigen::VectorXd& scores, const EvaluationGrid& grid,
                                   const MatchOptions& options) {
  check_scores(data, scores);
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw InvalidArgument("match_variant_estimate: level must lie in (0, 1)");
  }
  const auto xl = as_span(data.xl());
  const auto s = as_span(scores);
  const auto d = as_span(data.d());
  const auto y = as_span(data.y());
  const auto kernel = options.smoothing.kernel;

  bool fallback = false;
  const std::vector<double> delta = matched_contrasts(xl, s, d, y, &fallback);
  const double h = pseudo_bandwidth(xl, delta, options.smoothing);
  HteEstimate est(grid, Method::MatchPsr);
  est.bandwidths.h3 = h;
  est.tau_hat = local_linear_many(xl, delta, h, grid.points(), kernel);
  est.diagnostics.euclidean_fallback = fallback;
  est.diagnostics.score_min = scores.minCoeff();
  est.diagnostics.score_max = scores.maxCoeff();
  if (options.bootstrap == 0) return est;

  const std::size_t n = xl.size();
  const std::size_t m = grid.size();
  // draws[b][g]; a resample without both arms or with an empty neighbourhood
  // leaves NaN and is skipped at that grid point.
  std::vector<std::vector<double>> draws(options.bootstrap,
                                         std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()));
  parallel_for(options.bootstrap, options.smoothing.threads, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    std::vector<double> bx(n), bs(n), bd(n), by(n);
    std::size_t treated = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.index(n));
      bx[i] = xl[k];
      bs[i] = s[k];
      bd[i] = d[k];
      by[i] = y[k];
      treated += d[k] != 0.0 ? 1 : 0;
    }
    if (treated == 0 || treated == n) return;
    const auto bdelta = matched_contrasts(bx, bs, bd, by, nullptr);
    const auto fit = local_linear_many(bx, bdelta, h, grid.points(), kernel);
    for (std::size_t g = 0; g < m; ++g) {
      if (fit[g]) draws[b][g] = *fit[g];
    }
  });

  const double alpha = 0.5 * (1.0 - options.level);
  est.variance.assign(m, std::nullopt);
  est.ci_lo.assign(m, std::nullopt);
  est.ci_hi.assign(m, std::nullopt);
  std::vector<double> column;
  for (std::size_t g = 0; g < m; ++g) {
    column.clear();
    for (std::size_t b = 0; b < options.bootstrap; ++b) {
      if (!std::isnan(draws[b][g])) column.push_back(draws[b][g]);
    }
    if (column.size() < 2 || !est.tau_hat[g]) continue;
    est.variance[g] = std::pow(sample_sd(column), 2);
    est.ci_lo[g] = quantile(column, alpha);
    est.ci_hi[g] = quantile(column, 1.0 - alpha);
  }
  return est;
}

}  // namespace hetfx
