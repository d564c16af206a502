#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "hetfx/data.hpp"
#include "hetfx/estimate.hpp"
#include "hetfx/kernel.hpp"
#include "hetfx/locfit.hpp"
#include "hetfx/propensity.hpp"

namespace hetfx {

struct PsrOptions {
  ScorePolicy score_policy = ScorePolicy::FitLogit;
  BandwidthMethod bandwidth = BandwidthMethod::Lscv;
  KernelKind kernel = KernelKind::Gaussian;
  // Smooth Step 1 over logit(e) instead of e.
  bool logit_scale_scores = false;
  // Fixed bandwidths override the selector.
  std::optional<double> h1;
  std::optional<double> h2;
  std::optional<double> h3;
  unsigned threads = 1;
};

/// Everything the three-step estimator produces, including the pieces the
/// plug-in variance needs.
struct PsrFit {
  HteEstimate estimate;
  Eigen::VectorXd scores;           // resolved e-hat on the probability scale
  Eigen::VectorXd smoothing_scores; // coordinate used in Step 1
  Step1Fit step1;
  Eigen::VectorXd tau_at_samples;   // Step-2 smoother evaluated at each X^l_i
  double h3 = 0.0;
  std::optional<PropensityFit> propensity;
};

/// Step 0 (scores), Step 1 (beta-hat at every sample point), Step 2 (local
/// linear regression of beta-hat on X^l with bandwidth h3 at each grid point).
PsrFit psr_fit(const ObservationalDataset& data, const EvaluationGrid& grid,
               const PsrOptions& options = {});

// Steps 1 and 2 with scores supplied by the caller (Step 0 skipped).
PsrFit psr_fit_with_scores(const ObservationalDataset& data, Eigen::VectorXd scores,
                           const EvaluationGrid& grid, const PsrOptions& options = {});

HteEstimate psr_estimate(const ObservationalDataset& data, const EvaluationGrid& grid,
                         const PsrOptions& options = {});

// Step-1 smoothing coordinate for given scores.
Eigen::VectorXd smoothing_coordinate(const Eigen::VectorXd& scores, bool logit_scale);

/// Plug-in variance of tau-hat and the pieces it is assembled from:
///   V(x) = [nu * Var(beta | x) + int Kbar^2 * E((D-e)^2 xi^2 / (e^2 (1-e)^2) | x)]
///          / (N h3 f(x)).
/// Both conditional moments are local linear fits on X^l with bandwidth h3,
/// floored at zero; f is a Gaussian KDE with the Silverman bandwidth.
struct VarianceComponents {
  std::vector<std::optional<double>> variance;
  std::vector<std::optional<double>> beta_variance;     // floored fit
  std::vector<std::optional<double>> residual_moment;   // floored fit
  std::vector<double> density;
  KernelConstants constants;
  std::size_t density_underflow = 0;
};

inline constexpr double kDensityFloor = 1e-10;

VarianceComponents psr_variance_components(const ObservationalDataset& data,
                                           const Eigen::VectorXd& scores, const Step1Fit& step1,
                                           const Eigen::VectorXd& tau_on_samples, double h3,
                                           const EvaluationGrid& grid,
                                           KernelKind kind = KernelKind::Gaussian);

std::vector<std::optional<double>> psr_variance(const ObservationalDataset& data,
                                                const Eigen::VectorXd& scores,
                                                const Step1Fit& step1,
                                                const Eigen::VectorXd& tau_on_samples, double h3,
                                                const EvaluationGrid& grid,
                                                KernelKind kind = KernelKind::Gaussian);

// Fills fit.estimate.variance (and its diagnostics) in place.
void attach_psr_variance(PsrFit& fit, const ObservationalDataset& data,
                         KernelKind kind = KernelKind::Gaussian);

/// Pointwise band tau-hat +/- z_{(1+level)/2} sqrt(V). A zero variance gives
/// a zero-width band and is counted in diagnostics.degenerate_bands.
HteEstimate confidence_band(HteEstimate estimate, double level);

}  // namespace hetfx
