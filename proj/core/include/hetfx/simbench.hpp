#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hetfx/data.hpp"
#include "hetfx/estimate.hpp"
#include "hetfx/kernel.hpp"
#include "hetfx/locfit.hpp"
#include "hetfx/metrics.hpp"
#include "hetfx/propensity.hpp"

namespace hetfx {

// Effect curves: I quintic polynomial, II transcendental, III linear, IV quadratic.
enum class OutcomeModel { I, II, III, IV };
// Treatment assignment: A and B give extreme scores, C and D moderate ones.
enum class Mechanism { A, B, C, D };

struct ScenarioConfig {
  OutcomeModel outcome_model = OutcomeModel::I;
  Mechanism mechanism = Mechanism::A;
  std::size_t n = 1000;
  std::size_t p = 5;
  std::uint64_t seed = 0;
};

// I/II pair with A or C, III/IV with B or D. Other pairings run but are
// labelled experimental.
bool is_canonical(OutcomeModel model, Mechanism mechanism) noexcept;
Mechanism canonical_mechanism(OutcomeModel model) noexcept;

// "I".."VIII" for canonical pairings, "III/A" style otherwise.
std::string scenario_label(OutcomeModel model, Mechanism mechanism);

OutcomeModel parse_outcome_model(std::string_view name);
Mechanism parse_mechanism(std::string_view name);

struct ScenarioName {
  OutcomeModel model;
  Mechanism mechanism;
};
// Accepts the eight simulation labels I..VIII.
ScenarioName parse_scenario(std::string_view label);

/// Assignment coefficients on (X^l, X^-l_1, ..., X^-l_{p-1}), no intercept.
Eigen::VectorXd mechanism_alpha(Mechanism mechanism, std::size_t p);

/// Covariance of X^-l: Sigma_jk = 2^-|j-k|.
Eigen::MatrixXd covariate_covariance(std::size_t dim);

double true_tau(OutcomeModel model, double x);

// Prognostic part f(X) shared by both potential outcomes; x is a full row
// (X^l first).
double prognostic(OutcomeModel model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

struct PotentialOutcomes {
  double y1;
  double y0;
};
PotentialOutcomes potential_outcomes(OutcomeModel model,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& x, double eps1,
                                     double eps0);

struct GeneratedData {
  ObservationalDataset dataset;     // true scores attached as external scores (clamped)
  Eigen::VectorXd true_scores;
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;
};

/// Draws X^l ~ U(-0.5, 0.5), X^-l ~ N(0, Sigma) through the Cholesky factor
/// of Sigma, D ~ Bernoulli(logistic(X' alpha)), both potential outcomes with
/// N(0, 1) errors, and observes Y = D Y(1) + (1 - D) Y(0). Fully determined
/// by config.seed.
GeneratedData generate_dataset(const ScenarioConfig& config);

/// Grid used by the harness: equispaced between the 5th and 95th
/// percentiles of U(-0.5, 0.5), identical across replicates.
EvaluationGrid simulation_grid(std::size_t size);

inline constexpr std::size_t kDefaultGridSize = 25;
inline constexpr double kReliabilityExclusion = 0.10;

struct MonteCarloConfig {
  ScenarioConfig scenario;
  Method method = Method::Psr;
  ScorePolicy score_policy = ScorePolicy::FitLogit;
  std::size_t reps = 200;
  std::size_t grid_size = kDefaultGridSize;
  std::uint64_t master_seed = 0;
  KernelKind kernel = KernelKind::Gaussian;
  BandwidthMethod bandwidth = BandwidthMethod::Lscv;
  double level = 0.95;
  std::size_t bootstrap = 100;
  bool logit_scale_scores = false;
  unsigned threads = 0;
};

/// Replicate r uses the dataset seed derive_seed(master_seed, r) (so methods
/// run with the same master seed see identical data) and, for the matching
/// variant, bootstrap seed splitmix64(dataset seed).
MetricsReport run_monte_carlo(const MonteCarloConfig& config);

// Single replicate: the estimate and the true curve on the grid.
struct ReplicateResult {
  HteEstimate estimate;
  std::vector<double> truth;
};
ReplicateResult run_replicate(const MonteCarloConfig& config, std::size_t replicate);

/// Aggregates reps x grid error and coverage matrices. NaN marks a missing
/// cell. Bias, MAE, MSE and CP95 average over all present cells; SD averages
/// the across-replicate sample SD (divisor reps - 1) of each grid point.
MetricsReport compute_metrics(const Eigen::MatrixXd& errors, const Eigen::MatrixXd& hits);

/// Largest |beta-hat(true e) - beta-hat(estimated e)| over a lattice of
/// (x^l, e) points for one generated dataset, using common bandwidths chosen
/// by the rule of thumb on the true scores.
double beta_score_sensitivity(const ScenarioConfig& config, std::span<const ScorePoint> lattice,
                              KernelKind kernel = KernelKind::Gaussian);

}  // namespace hetfx
