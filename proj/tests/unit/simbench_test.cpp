#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hetfx/error.hpp"
#include "hetfx/propensity.hpp"
#include "hetfx/psr.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/simbench.hpp"

using namespace hetfx;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

TEST(TrueTau, ClosedForms) {
  EXPECT_DOUBLE_EQ(true_tau(OutcomeModel::III, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(true_tau(OutcomeModel::I, 0.0), 0.0);
  EXPECT_NEAR(true_tau(OutcomeModel::IV, 0.2), 0.4, 1e-15);
  EXPECT_NEAR(true_tau(OutcomeModel::I, 0.5), 0.5 * 4.0 * 0.25, 1e-15);
  EXPECT_NEAR(true_tau(OutcomeModel::II, 0.5),
              0.5 * 0.5 * std::cos(0.5) * std::log(2.5) * std::exp(0.5), 1e-15);
}

TEST(Metrics, HandComputedCases) {
  const auto zero = compute_metrics(Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Ones(3, 4));
  EXPECT_EQ(zero.bias, 0.0);
  EXPECT_EQ(zero.sd, 0.0);
  EXPECT_EQ(zero.mae, 0.0);
  EXPECT_EQ(zero.mse, 0.0);
  EXPECT_EQ(zero.cp95, 1.0);

  const auto pm = compute_metrics(Eigen::Vector2d(-1.0, 1.0), Eigen::Vector2d(1.0, 0.0));
  EXPECT_DOUBLE_EQ(pm.bias, 0.0);
  EXPECT_DOUBLE_EQ(pm.mae, 1.0);
  EXPECT_DOUBLE_EQ(pm.mse, 1.0);
  EXPECT_DOUBLE_EQ(pm.sd, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(pm.cp95, 0.5);
  EXPECT_GE(pm.mse, pm.bias * pm.bias);
}

TEST(Metrics, MissingCellsAreExcluded) {
  Eigen::MatrixXd err(4, 3), hit(4, 3);
  err << 1, 2, kNaN, 1, 2, kNaN, 1, 2, 3, 1, 2, kNaN;
  hit << 1, 0, kNaN, 1, 0, kNaN, 1, 0, 1, 1, 0, kNaN;
  const auto m = compute_metrics(err, hit);
  EXPECT_DOUBLE_EQ(m.exclusion_fraction, 0.25);
  EXPECT_TRUE(m.reliability_warning);
  EXPECT_DOUBLE_EQ(m.bias, 15.0 / 9.0);
  EXPECT_DOUBLE_EQ(m.cp95, 5.0 / 9.0);
  EXPECT_EQ(m.per_point[2].used, 1u);
  EXPECT_THROW(compute_metrics(err, Eigen::MatrixXd::Zero(4, 2)), InvalidArgument);
  EXPECT_THROW(compute_metrics(Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0)), InvalidArgument);
}

TEST(Dgp, ReproducibleAndSeedSensitive) {
  ScenarioConfig sc;
  sc.n = 200;
  sc.seed = 41;
  const auto a = generate_dataset(sc);
  const auto b = generate_dataset(sc);
  EXPECT_EQ(a.dataset.x(), b.dataset.x());
  EXPECT_EQ(a.dataset.y(), b.dataset.y());
  EXPECT_EQ(a.dataset.d(), b.dataset.d());
  sc.seed = 42;
  const auto c = generate_dataset(sc);
  EXPECT_NE(a.dataset.y(), c.dataset.y());
  sc.p = 4;
  EXPECT_THROW(generate_dataset(sc), InvalidArgument);
}

TEST(Dgp, CovariateLaw) {
  ScenarioConfig sc;
  sc.n = 50000;
  sc.p = 6;
  sc.seed = 43;
  const auto gen = generate_dataset(sc);
  const Eigen::MatrixXd& x = gen.dataset.x();
  EXPECT_GE(x.col(0).minCoeff(), -0.5);
  EXPECT_LT(x.col(0).maxCoeff(), 0.5);
  EXPECT_NEAR(x.col(0).mean(), 0.0, 0.01);
  const Eigen::MatrixXd z = x.rightCols(5);
  const Eigen::MatrixXd cov = z.transpose() * z / static_cast<double>(sc.n);
  for (int j = 0; j < 5; ++j)
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(cov(j, k), std::pow(2.0, -std::abs(j - k)), 0.03);
  // Y is the potential outcome of the received arm.
  for (Eigen::Index i = 0; i < 100; ++i) {
    EXPECT_EQ(gen.dataset.y()[i], gen.dataset.d()[i] != 0.0 ? gen.y1[i] : gen.y0[i]);
  }
}

TEST(Dgp, MechanismShapes) {
  ScenarioConfig sc;
  sc.n = 10000;
  sc.seed = 44;
  sc.mechanism = Mechanism::D;
  const auto d = generate_dataset(sc);
  const double treated = d.dataset.d().mean();
  EXPECT_GT(treated, 0.45);
  EXPECT_LT(treated, 0.55);
  const auto near_half = (d.true_scores.array() - 0.5).abs() < 0.2;
  EXPECT_GT(near_half.cast<double>().mean(), 0.95);

  sc.mechanism = Mechanism::A;
  const auto a = generate_dataset(sc);
  // Ten-bin histogram of the scores: each end bin outweighs each central bin.
  Eigen::VectorXd bins = Eigen::VectorXd::Zero(10);
  for (double e : a.true_scores) bins[std::min(9, static_cast<int>(e * 10.0))] += 1.0;
  EXPECT_GT(std::min(bins[0], bins[9]), 1.2 * std::max(bins[4], bins[5]));

  for (auto m : {Mechanism::A, Mechanism::B, Mechanism::C, Mechanism::D}) {
    const Eigen::VectorXd alpha = mechanism_alpha(m, 7);
    EXPECT_EQ(alpha.tail(2).cwiseAbs().sum(), 0.0);
    EXPECT_EQ(inverse_link(Link::Logit, Eigen::VectorXd::Zero(7).dot(alpha)), 0.5);
  }
  EXPECT_DOUBLE_EQ(mechanism_alpha(Mechanism::C, 5)[1], -0.25);
  EXPECT_DOUBLE_EQ(mechanism_alpha(Mechanism::D, 5)[3], 0.125);
}

TEST(Dgp, ConditionalEffectMatchesTruth) {
  // Brute-force E[Y(1) - Y(0) | X^l = x] with X^-l drawn independently of
  // the library's generator.
  std::mt19937_64 gen(45);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd l = covariate_covariance(4).llt().matrixL();
  const int draws = 20000;
  for (auto model : {OutcomeModel::I, OutcomeModel::II, OutcomeModel::III, OutcomeModel::IV}) {
    for (double x : {-0.4, -0.2, 0.0, 0.2, 0.4}) {
      double s = 0, ss = 0;
      Eigen::RowVectorXd row(5);
      for (int k = 0; k < draws; ++k) {
        Eigen::Vector4d u(z(gen), z(gen), z(gen), z(gen));
        row << x, (l * u).transpose();
        const auto po = potential_outcomes(model, row, z(gen), z(gen));
        const double diff = po.y1 - po.y0;
        s += diff;
        ss += diff * diff;
      }
      const double mean = s / draws;
      const double se = std::sqrt((ss / draws - mean * mean) / draws);
      EXPECT_LT(std::abs(mean - true_tau(model, x)), 3.0 * se) << static_cast<int>(model) << " " << x;
    }
  }
}

TEST(Scenarios, Labels) {
  EXPECT_EQ(scenario_label(OutcomeModel::I, Mechanism::A), "I");
  EXPECT_EQ(scenario_label(OutcomeModel::III, Mechanism::D), "VII");
  EXPECT_EQ(scenario_label(OutcomeModel::III, Mechanism::A), "III/A");
  const auto v = parse_scenario("V");
  EXPECT_EQ(v.model, OutcomeModel::I);
  EXPECT_EQ(v.mechanism, Mechanism::C);
  const auto viii = parse_scenario("VIII");
  EXPECT_EQ(viii.model, OutcomeModel::IV);
  EXPECT_EQ(viii.mechanism, Mechanism::D);
  EXPECT_THROW(parse_scenario("IX"), InvalidArgument);
  EXPECT_THROW(parse_mechanism("E"), InvalidArgument);
  EXPECT_FALSE(is_canonical(OutcomeModel::II, Mechanism::B));
}

TEST(MonteCarlo, ThreadCountDoesNotMatter) {
  MonteCarloConfig mc;
  mc.scenario.n = 300;
  mc.reps = 6;
  mc.bandwidth = BandwidthMethod::RuleOfThumb;
  mc.master_seed = 46;
  for (Method m : {Method::Psr, Method::MatchPsr}) {
    mc.method = m;
    mc.bootstrap = 10;
    mc.threads = 1;
    const auto a = run_monte_carlo(mc);
    mc.threads = 4;
    const auto b = run_monte_carlo(mc);
    EXPECT_EQ(a.bias, b.bias);
    EXPECT_EQ(a.mse, b.mse);
    EXPECT_EQ(a.sd, b.sd);
    EXPECT_EQ(a.cp95, b.cp95);
    EXPECT_EQ(a.reps, 6u);
    EXPECT_GE(a.mse, a.bias * a.bias);
  }
  mc.reps = 1;
  EXPECT_THROW(run_monte_carlo(mc), InvalidArgument);
}

TEST(MonteCarlo, PairedSeedsShareData) {
  MonteCarloConfig mc;
  mc.scenario.n = 200;
  mc.master_seed = 47;
  mc.bandwidth = BandwidthMethod::RuleOfThumb;
  mc.method = Method::Psr;
  const auto a = run_replicate(mc, 3);
  mc.method = Method::Ipw;
  const auto b = run_replicate(mc, 3);
  EXPECT_EQ(a.truth, b.truth);
  ScenarioConfig sc = mc.scenario;
  sc.seed = derive_seed(47, 3);
  const auto gen = generate_dataset(sc);
  PsrOptions o;
  o.bandwidth = BandwidthMethod::RuleOfThumb;
  EXPECT_EQ(psr_estimate(gen.dataset, simulation_grid(kDefaultGridSize), o).tau_hat, a.estimate.tau_hat);
}
