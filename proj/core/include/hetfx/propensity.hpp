#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string_view>
#include <vector>

#include "hetfx/data.hpp"

namespace hetfx {

enum class Link { Logit, Probit };

/// Fitted parametric propensity model e(X) = g(alpha_0 + X' alpha).
struct PropensityFit {
  Eigen::VectorXd alpha_hat;  // intercept first
  Link link = Link::Logit;
  bool converged = false;
  int iterations = 0;
  // Coefficient norm passed 1e3 while the likelihood was still improving, or
  // the fit reproduced every treatment label.
  bool separation_warning = false;
  // Log-likelihood after each accepted iteration, starting value first.
  std::vector<double> loglik_trace;
};

inline constexpr int kIrlsMaxIterations = 100;
inline constexpr double kIrlsTolerance = 1e-8;
inline constexpr double kSeparationNorm = 1e3;

/// Maximum-likelihood fit by iteratively reweighted least squares with step
/// halving whenever an update lowers the likelihood. Convergence is declared
/// when the largest absolute coefficient change drops below 1e-8.
PropensityFit fit_glm(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, Link link);
PropensityFit fit_glm(const ObservationalDataset& data, Link link);

double inverse_link(Link link, double eta) noexcept;

/// Scores for rows of x (no intercept column), clamped to [1e-6, 1 - 1e-6].
Eigen::VectorXd predict_scores(const PropensityFit& fit, const Eigen::MatrixXd& x);

double bernoulli_loglik(Link link, const Eigen::VectorXd& eta, const Eigen::VectorXd& d);

enum class ScorePolicy { FitLogit, FitProbit, External };

ScorePolicy parse_score_policy(std::string_view name);
std::string_view to_string(ScorePolicy policy) noexcept;

struct ResolvedScores {
  Eigen::VectorXd scores;
  std::optional<PropensityFit> fit;
};

/// Step 0: per-row scores in (0, 1), either fitted or taken from the
/// dataset's external score column (clamped).
ResolvedScores resolve_scores(const ObservationalDataset& data, ScorePolicy policy);

}  // namespace hetfx
