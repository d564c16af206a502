#include "hetfx/psr.hpp"

#include <algorithm>
#include <cmath>

#include "hetfx/error.hpp"
#include "hetfx/normal.hpp"

namespace hetfx {
namespace {

std::optional<double> floored(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return std::max(*v, 0.0);
}

}  // namespace

Eigen::VectorXd smoothing_coordinate(const Eigen::VectorXd& scores, bool logit_scale) {
  if (!logit_scale) return scores;
  return scores.unaryExpr([](double e) { return std::log(e / (1.0 - e)); });
}

PsrFit psr_fit_with_scores(const ObservationalDataset& data, Eigen::VectorXd scores,
                           const EvaluationGrid& grid, const PsrOptions& options) {
  if (scores.size() != data.n()) throw InvalidArgument("psr: score vector length differs");
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!(scores[i] > 0.0 && scores[i] < 1.0)) throw InvalidArgument("psr: scores must lie in (0, 1)");
  }
  const Eigen::VectorXd coord = smoothing_coordinate(scores, options.logit_scale_scores);
  const auto xl = as_span(data.xl());

  // Step 1.
  double h1 = 0.0, h2 = 0.0;
  if (options.h1 && options.h2) {
    h1 = *options.h1;
    h2 = *options.h2;
  } else {
    const BandwidthChoice c = select_bandwidth(
        {xl, as_span(data.y()), as_span(coord), as_span(data.d()), options.kernel},
        options.bandwidth, BandwidthTarget::Step1);
    h1 = options.h1.value_or(c.h);
    h2 = options.h2.value_or(*c.h2);
  }
  Step1Fit step1 = step1_fit_at_samples(data, as_span(coord), h1, h2,
                                        {options.kernel, options.threads});

  // Step 2.
  const auto beta = as_span(step1.beta_at_sample);
  const double h3 = options.h3 ? *options.h3
                               : select_bandwidth({xl, beta, {}, {}, options.kernel},
                                                  options.bandwidth, BandwidthTarget::Step2)
                                     .h;
  HteEstimate est(grid, Method::Psr);
  est.tau_hat = local_linear_many(xl, beta, h3, grid.points(), options.kernel);
  Eigen::VectorXd tau_at_samples(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    tau_at_samples[i] = local_linear(xl, beta, h3, xl[static_cast<std::size_t>(i)], options.kernel).value;
  }

  est.bandwidths = {h1, h2, h3};
  est.diagnostics.regularized_fraction = step1.regularized_fraction;
  est.diagnostics.sparse_overlap = step1.sparse_overlap;
  est.diagnostics.score_min = scores.minCoeff();
  est.diagnostics.score_max = scores.maxCoeff();

  PsrFit fit{std::move(est), std::move(scores), coord, std::move(step1), std::move(tau_at_samples),
             h3, std::nullopt};
  return fit;
}

PsrFit psr_fit(const ObservationalDataset& data, const EvaluationGrid& grid,
               const PsrOptions& options) {
  ResolvedScores resolved = resolve_scores(data, options.score_policy);
  PsrFit fit = psr_fit_with_scores(data, std::move(resolved.scores), grid, options);
  if (resolved.fit) {
    fit.estimate.diagnostics.propensity_separation = resolved.fit->separation_warning;
    fit.propensity = std::move(resolved.fit);
  }
  return fit;
}

HteEstimate psr_estimate(const ObservationalDataset& data, const EvaluationGrid& grid,
                         const PsrOptions& options) {
  return psr_fit(data, grid, options).estimate;
}

VarianceComponents psr_variance_components(const ObservationalDataset& data,
                                           const Eigen::VectorXd& scores, const Step1Fit& step1,
                                           const Eigen::VectorXd& tau_on_samples, double h3,
                                           const EvaluationGrid& grid, KernelKind kind) {
  const Eigen::Index n = data.n();
  if (scores.size() != n || step1.beta_at_sample.size() != n || step1.residuals.size() != n ||
      tau_on_samples.size() != n) {
    throw InvalidArgument("psr_variance: inputs must have one entry per observation");
  }
  if (!(h3 > 0.0)) throw InvalidArgument("psr_variance: h3 must be positive");

  std::vector<double> centred_sq(static_cast<std::size_t>(n));
  std::vector<double> weighted_resid(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = step1.beta_at_sample[i] - tau_on_samples[i];
    centred_sq[static_cast<std::size_t>(i)] = c * c;
    const double e = scores[i];
    const double dm = data.d()[i] - e;
    const double xi = step1.residuals[i];
    weighted_resid[static_cast<std::size_t>(i)] = dm * dm * xi * xi / (e * e * (1.0 - e) * (1.0 - e));
  }

  const auto xl = as_span(data.xl());
  VarianceComponents out;
  out.constants = kernel_constants(kind, step1.h1, h3);
  const auto vb = local_linear_many(xl, centred_sq, h3, grid.points(), kind);
  const auto er = local_linear_many(xl, weighted_resid, h3, grid.points(), kind);
  const double kde_h = silverman_bandwidth(xl);

  const std::size_t m = grid.size();
  out.variance.assign(m, std::nullopt);
  out.beta_variance.resize(m);
  out.residual_moment.resize(m);
  out.density.resize(m);
  for (std::size_t g = 0; g < m; ++g) {
    out.beta_variance[g] = floored(vb[g]);
    out.residual_moment[g] = floored(er[g]);
    out.density[g] = kde(xl, kde_h, grid[g], KernelKind::Gaussian);
    if (out.density[g] < kDensityFloor) {
      ++out.density_underflow;
      continue;
    }
    if (!out.beta_variance[g] || !out.residual_moment[g]) continue;
    const double numer = out.constants.nu * *out.beta_variance[g] +
                         out.constants.kbar_sq_integral * *out.residual_moment[g];
    if (!(numer > 0.0)) continue;
    out.variance[g] = numer / (static_cast<double>(n) * h3 * out.density[g]);
  }
  return out;
}

std::vector<std::optional<double>> psr_variance(const ObservationalDataset& data,
                                                const Eigen::VectorXd& scores,
                                                const Step1Fit& step1,
                                                const Eigen::VectorXd& tau_on_samples, double h3,
                                                const EvaluationGrid& grid, KernelKind kind) {
  return psr_variance_components(data, scores, step1, tau_on_samples, h3, grid, kind).variance;
}

void attach_psr_variance(PsrFit& fit, const ObservationalDataset& data, KernelKind kind) {
  auto comp = psr_variance_components(data, fit.scores, fit.step1, fit.tau_at_samples, fit.h3,
                                      fit.estimate.grid, kind);
  fit.estimate.variance = std::move(comp.variance);
  fit.estimate.diagnostics.density_underflow = comp.density_underflow;
}

HteEstimate confidence_band(HteEstimate estimate, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  if (!estimate.has_variance()) throw InvalidArgument("confidence_band: estimate has no variance");
  const double z = normal_quantile(0.5 * (1.0 + level));
  const std::size_t m = estimate.grid.size();
  estimate.ci_lo.assign(m, std::nullopt);
  estimate.ci_hi.assign(m, std::nullopt);
  estimate.diagnostics.degenerate_bands = 0;
  for (std::size_t g = 0; g < m; ++g) {
    const auto& tau = estimate.tau_hat[g];
    const auto& var = estimate.variance[g];
    if (!tau || !var) continue;
    if (*var <= 0.0) ++estimate.diagnostics.degenerate_bands;
    const double half = z * std::sqrt(std::max(*var, 0.0));
    estimate.ci_lo[g] = *tau - half;
    estimate.ci_hi[g] = *tau + half;
  }
  return estimate;
}

}  // namespace hetfx
