#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hetfx/error.hpp"
#include "hetfx/propensity.hpp"

using namespace hetfx;

namespace {

struct Sample {
  Eigen::MatrixXd x;
  Eigen::VectorXd d;
};

// Logistic assignment with coefficients `alpha` (no intercept), covariates
// i.i.d. N(0, 1) drawn with the standard library generator.
Sample logit_sample(const Eigen::VectorXd& alpha, int n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  Sample s{Eigen::MatrixXd(n, alpha.size()), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < alpha.size(); ++j) s.x(i, j) = z(gen);
    const double e = 1.0 / (1.0 + std::exp(-s.x.row(i).dot(alpha)));
    s.d[i] = u(gen) < e ? 1.0 : 0.0;
  }
  return s;
}

}  // namespace

TEST(Propensity, RecoversMechanismCoefficients) {
  Eigen::VectorXd alpha(5);
  alpha << 1, -1, -1, 1, -1;
  const auto s = logit_sample(alpha, 20000, 1);
  const auto fit = fit_glm(s.x, s.d, Link::Logit);
  ASSERT_TRUE(fit.converged);
  // Standard errors from the observed information at the estimate.
  Eigen::MatrixXd z(s.x.rows(), 6);
  z.col(0).setOnes();
  z.rightCols(5) = s.x;
  const Eigen::VectorXd eta = z * fit.alpha_hat;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(6, 6);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
    info += mu * (1.0 - mu) * z.row(i).transpose() * z.row(i);
  }
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  Eigen::VectorXd truth(6);
  truth << 0, alpha;
  for (int j = 0; j < 6; ++j) EXPECT_LT(std::abs(fit.alpha_hat[j] - truth[j]), 3.0 * se[j]) << j;
}

TEST(Propensity, LogLikelihoodNeverDecreases) {
  Eigen::VectorXd alpha(3);
  alpha << 2.0, -3.0, 0.5;
  for (Link link : {Link::Logit, Link::Probit}) {
    const auto s = logit_sample(alpha, 500, 2);
    const auto fit = fit_glm(s.x, s.d, link);
    EXPECT_TRUE(fit.converged);
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1] - 1e-12 * std::abs(fit.loglik_trace[i - 1]));
    }
  }
}

TEST(Propensity, BalancedDesignGivesHalf) {
  // Every covariate pattern has one treated and one control unit, so the
  // likelihood is maximised at alpha = 0.
  Eigen::MatrixXd x(8, 2);
  x << -1, -1, -1, -1, -1, 1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1;
  Eigen::VectorXd d(8);
  d << 0, 1, 1, 0, 0, 1, 1, 0;
  const auto fit = fit_glm(x, d, Link::Logit);
  EXPECT_TRUE(fit.converged);
  EXPECT_LT(fit.alpha_hat.cwiseAbs().maxCoeff(), 1e-8);
  const auto e = predict_scores(fit, Eigen::MatrixXd::Zero(1, 2));
  EXPECT_NEAR(e[0], 0.5, 1e-8);
}

TEST(Propensity, Errors) {
  Eigen::MatrixXd x(6, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  Eigen::VectorXd d(6);
  d << 0, 1, 0, 1, 1, 0;
  EXPECT_THROW(fit_glm(x, d, Link::Logit), SingularDesign);
  EXPECT_THROW(fit_glm(x.col(0), Eigen::VectorXd::Ones(6), Link::Logit), InvalidArgument);
  Eigen::VectorXd alpha(2);
  alpha << 0.5, 0.5;
  const auto s = logit_sample(alpha, 200, 3);
  const auto fit = fit_glm(s.x, s.d, Link::Logit);
  EXPECT_THROW(predict_scores(fit, Eigen::MatrixXd::Zero(2, 3)), InvalidArgument);
}

TEST(Propensity, SeparationIsFlagged) {
  Eigen::MatrixXd x(30, 1);
  Eigen::VectorXd d(30);
  for (int i = 0; i < 30; ++i) {
    x(i, 0) = i - 14.5;
    d[i] = i >= 15;
  }
  const auto fit = fit_glm(x, d, Link::Logit);
  EXPECT_TRUE(fit.separation_warning);
  EXPECT_EQ(fit.alpha_hat.size(), 2);
}

TEST(Propensity, LinkValues) {
  PropensityFit fit;
  fit.alpha_hat = Eigen::Vector2d(0.0, 1.0);
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 2.0, 40.0;
  fit.link = Link::Logit;
  auto e = predict_scores(fit, x);
  EXPECT_DOUBLE_EQ(e[0], 0.5);
  EXPECT_NEAR(e[1], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(e[1], 0.880797, 1e-6);
  EXPECT_DOUBLE_EQ(e[2], 1.0 - 1e-6);
  fit.link = Link::Probit;
  e = predict_scores(fit, x);
  EXPECT_DOUBLE_EQ(e[0], 0.5);
  EXPECT_NEAR(e[1], 0.5 * std::erfc(-2.0 / std::sqrt(2.0)), 1e-15);
  // Monotone in the index for both links.
  for (Link link : {Link::Logit, Link::Probit}) {
    double prev = 0.0;
    for (double t = -10; t <= 10; t += 0.25) {
      const double v = inverse_link(link, t);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Propensity, RescalingCovariateLeavesScores) {
  Eigen::VectorXd alpha(3);
  alpha << 0.7, -0.4, 0.2;
  auto s = logit_sample(alpha, 800, 4);
  const auto base = predict_scores(fit_glm(s.x, s.d, Link::Logit), s.x);
  Eigen::MatrixXd scaled = s.x;
  scaled.col(1) *= 37.5;
  const auto fit2 = fit_glm(scaled, s.d, Link::Logit);
  const auto again = predict_scores(fit2, scaled);
  EXPECT_LT((base - again).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Propensity, ResolveScores) {
  Eigen::VectorXd alpha(2);
  alpha << 0.5, -0.5;
  const auto s = logit_sample(alpha, 300, 5);
  const ObservationalDataset ds(s.x, 0, s.d, Eigen::VectorXd::Zero(300));
  EXPECT_THROW(resolve_scores(ds, ScorePolicy::External), ConfigError);
  const auto r = resolve_scores(ds, ScorePolicy::FitLogit);
  ASSERT_TRUE(r.fit.has_value());
  EXPECT_EQ(r.scores, predict_scores(fit_glm(ds, Link::Logit), ds.x()));

  Eigen::VectorXd ext = Eigen::VectorXd::Constant(300, 0.3);
  ext[0] = 1e-9;
  const auto with = ds.with_external_scores(ext);
  const auto rext = resolve_scores(with, ScorePolicy::External);
  EXPECT_FALSE(rext.fit.has_value());
  EXPECT_DOUBLE_EQ(rext.scores[0], 1e-6);
  EXPECT_DOUBLE_EQ(rext.scores[1], 0.3);
  EXPECT_EQ(parse_score_policy("probit"), ScorePolicy::FitProbit);
  EXPECT_THROW(parse_score_policy("forest"), InvalidArgument);
}
