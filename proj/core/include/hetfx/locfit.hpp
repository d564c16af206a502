#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hetfx/data.hpp"
#include "hetfx/kernel.hpp"

namespace hetfx {

// A weighted Gram matrix whose condition estimate exceeds this is treated as
// singular and solved with ridge jitter 1e-8 * trace / k.
inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRidgeScale = 1e-8;

struct WlsProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd weights;
  Eigen::VectorXd response;
};

struct WlsSolution {
  Eigen::VectorXd coef;
  bool regularized = false;
  // Condition estimate of the weighted Gram matrix.
  double condition = 0.0;
};

/// Minimises sum_i w_i (y_i - g_i' gamma)^2 through a column-pivoted QR of
/// diag(sqrt(w)) * design. Throws EmptyNeighborhood when every weight is 0.
WlsSolution wls_solve(const WlsProblem& problem);

/// Same policy starting from the normal equations (Gram matrix and
/// right-hand side). Used by the smoothers, which accumulate the Gram matrix
/// directly from kernel-weighted sums of locally centred regressors.
WlsSolution solve_normal_equations(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs);

struct LocalLinearFit {
  double value = 0.0;
  double slope = 0.0;
  bool regularized = false;
};

/// Local linear fit at x0 with weights K_h(x_i - x0); `value` is the intercept.
LocalLinearFit local_linear(std::span<const double> x, std::span<const double> y, double h,
                            double x0, KernelKind kind = KernelKind::Gaussian);

// local_linear at each point; nullopt where the neighbourhood is empty.
std::vector<std::optional<double>> local_linear_many(std::span<const double> x,
                                                     std::span<const double> y, double h,
                                                     std::span<const double> points,
                                                     KernelKind kind = KernelKind::Gaussian);

/// An evaluation location for the Step-1 surface.
struct ScorePoint {
  double xl = 0.0;
  double score = 0.0;
};

struct Step1Point {
  double beta = 0.0;  // coefficient on D
  double m0 = 0.0;    // intercept surface, E[Y(0) | x^l, e]
  bool regularized = false;
};

struct Step1Options {
  KernelKind kernel = KernelKind::Gaussian;
  unsigned threads = 1;
};

/// Varying-coefficient local linear fit of Y on D with coefficients smooth in
/// (X^l, e). At each (x^l, e) the regressors are
///   (D, 1, D (X^l - x^l)/h1, (X^l - x^l)/h1, D (s - e)/h2, (s - e)/h2)
/// with product-kernel weights K_h1(X^l - x^l) K_h2(s - e), where s holds the
/// smoothing coordinate (the scores, or a one-to-one transform of them).
/// Returns nullopt at points whose neighbourhood is empty.
std::vector<std::optional<Step1Point>> step1_vc_fit(const ObservationalDataset& data,
                                                    std::span<const double> smoothing_scores,
                                                    double h1, double h2,
                                                    std::span<const ScorePoint> points,
                                                    const Step1Options& options = {});

/// Step-1 surface evaluated at every sample point, with residuals
/// xi_i = Y_i - beta_i D_i - m0_i.
struct Step1Fit {
  Eigen::VectorXd beta_at_sample;
  Eigen::VectorXd m0_at_sample;
  Eigen::VectorXd residuals;
  double h1 = 0.0;
  double h2 = 0.0;
  double regularized_fraction = 0.0;
  // More than 20% of the local fits were regularised.
  bool sparse_overlap = false;
};

inline constexpr double kSparseOverlapFraction = 0.2;

Step1Fit step1_fit_at_samples(const ObservationalDataset& data,
                              std::span<const double> smoothing_scores, double h1, double h2,
                              const Step1Options& options = {});

enum class BandwidthMethod { RuleOfThumb, Lscv };
enum class BandwidthTarget { Step1, Step2, PseudoOutcome };

BandwidthMethod parse_bandwidth_method(std::string_view name);
std::string_view to_string(BandwidthMethod method) noexcept;

/// Inputs for bandwidth selection. `x` is X^l and `y` the response being
/// smoothed. Step-1 selection also reads `scores` (the smoothing coordinate)
/// and `d`.
struct BandwidthProblem {
  std::span<const double> x;
  std::span<const double> y;
  std::span<const double> scores;
  std::span<const double> d;
  KernelKind kernel = KernelKind::Gaussian;
};

struct BandwidthChoice {
  double h = 0.0;                 // h1 for Step 1, h3 otherwise
  std::optional<double> h2;       // Step 1 only
};

inline constexpr std::size_t kLscvGridSize = 20;
inline constexpr double kLscvLowFactor = 0.1;
inline constexpr double kLscvHighFactor = 3.0;
// Above this many observations the leave-one-out error is accumulated over an
// evenly strided subset of held-out points (every fit still uses all others).
inline constexpr std::size_t kLscvMaxHeldOut = 400;

/// Rule of thumb: 1.06 * sd * N^(-1/5) per smoothing dimension. LSCV: the
/// leave-one-out squared prediction error is minimised over a 20-point
/// logarithmic grid on [0.1, 3] times the rule-of-thumb value, ties going to
/// the larger bandwidth. For Step 1 the Step-1 leave-one-out criterion scans
/// each bandwidth separately with the other held at its rule-of-thumb value.
BandwidthChoice select_bandwidth(const BandwidthProblem& problem, BandwidthMethod method,
                                 BandwidthTarget target);

// The candidate multipliers, largest first.
std::vector<double> lscv_factors();

// Leave-one-out criteria behind the LSCV selector (sum of squared held-out
// residuals; +inf when a held-out fit has an empty neighbourhood).
double lscv_score(const BandwidthProblem& problem, double h);
double lscv_score_step1(const BandwidthProblem& problem, double h1, double h2);

}  // namespace hetfx
