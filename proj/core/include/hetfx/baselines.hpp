#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hetfx/data.hpp"
#include "hetfx/estimate.hpp"
#include "hetfx/kernel.hpp"
#include "hetfx/locfit.hpp"

namespace hetfx {

struct BaselineOptions {
  KernelKind kernel = KernelKind::Gaussian;
  BandwidthMethod bandwidth = BandwidthMethod::Lscv;
  // Fixed smoothing bandwidth on X^l; selected from the pseudo-outcomes when unset.
  std::optional<double> h3;
  unsigned threads = 1;
};

// Z_i = D_i Y_i / e_i - (1 - D_i) Y_i / (1 - e_i).
Eigen::VectorXd ipw_pseudo_outcomes(const Eigen::VectorXd& d, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& scores);

// Z_i = D_i (Y_i - mu1_i) / e_i - (1 - D_i)(Y_i - mu0_i) / (1 - e_i) + mu1_i - mu0_i.
Eigen::VectorXd aipw_pseudo_outcomes(const Eigen::VectorXd& d, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& scores, const Eigen::VectorXd& mu1,
                                     const Eigen::VectorXd& mu0);

/// Per-arm OLS of Y on (1, X), predicted for every unit.
struct OutcomeModels {
  Eigen::VectorXd mu1;
  Eigen::VectorXd mu0;
  bool regularized = false;
};

OutcomeModels fit_outcome_models(const ObservationalDataset& data);

/// Local linear smoothing of a pseudo-outcome on X^l with the sandwich
/// variance nu * sigma^2(x) / (N h f(x)), where sigma^2(x) is the local linear
/// fit of the squared centred pseudo-outcomes.
HteEstimate smooth_pseudo_outcome(const ObservationalDataset& data,
                                  const Eigen::VectorXd& pseudo, const EvaluationGrid& grid,
                                  Method method, const BaselineOptions& options);

HteEstimate ipw_estimate(const ObservationalDataset& data, const Eigen::VectorXd& scores,
                         const EvaluationGrid& grid, const BaselineOptions& options = {});

HteEstimate aipw_estimate(const ObservationalDataset& data, const Eigen::VectorXd& scores,
                          const EvaluationGrid& grid, const BaselineOptions& options = {});

/// 1:1 nearest-neighbour matching with replacement on (X^l, e-hat) under the
/// Mahalanobis metric of the pooled sample covariance. Every unit is matched
/// to its nearest opposite-arm unit; exact distance ties go to the lower index.
struct MatchedPairs {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;  // (unit, match)
  Eigen::VectorXd imputed_y1;
  Eigen::VectorXd imputed_y0;
  bool euclidean_fallback = false;
};

MatchedPairs match_units(std::span<const double> xl, std::span<const double> scores,
                         std::span<const double> d, std::span<const double> y);

inline constexpr std::size_t kDefaultBootstrap = 100;

struct MatchOptions {
  BaselineOptions smoothing;
  std::size_t bootstrap = kDefaultBootstrap;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Matching variant: imputed contrasts Y1 - Y0 smoothed on X^l. The band is
/// the percentile interval of a nonparametric bootstrap of the whole
/// procedure (rows resampled, units re-matched), resample b drawing from
/// derive_seed(seed, b). `variance` holds the bootstrap variance.
HteEstimate match_variant_estimate(const ObservationalDataset& data,
                                   const Eigen::VectorXd& scores, const EvaluationGrid& grid,
                                   const MatchOptions& options = {});

}  // namespace hetfx
