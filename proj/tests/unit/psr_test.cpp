#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hetfx/error.hpp"
#include "hetfx/psr.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/simbench.hpp"
#include "hetfx/stats.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hetfx;

namespace {

PsrOptions external_rot() {
  PsrOptions o;
  o.score_policy = ScorePolicy::External;
  o.bandwidth = BandwidthMethod::RuleOfThumb;
  return o;
}

ObservationalDataset noisy_study(std::size_t n, std::uint64_t seed) {
  return test::synthetic(
      n, seed, [](double t) { return 1.0 + t - t * t; },
      [](const auto& row) { return 0.5 * row[1] + std::sin(row[0]); }, 0.7);
}

}  // namespace

TEST(Psr, ConstantEffectIsExact) {
  auto ds = test::synthetic(
      400, 21, [](double) { return 3.0; }, [](const auto&) { return 0.0; });
  const auto grid = EvaluationGrid::linspace(-0.8, 0.8, 9);
  for (auto bw : {BandwidthMethod::RuleOfThumb, BandwidthMethod::Lscv}) {
    auto o = external_rot();
    o.bandwidth = bw;
    const auto est = psr_estimate(ds, grid, o);
    for (const auto& t : est.tau_hat) {
      ASSERT_TRUE(t.has_value());
      EXPECT_NEAR(*t, 3.0, 1e-8);
    }
  }
  // Fitted scores too.
  auto o = external_rot();
  o.score_policy = ScorePolicy::FitLogit;
  for (const auto& t : psr_estimate(ds, grid, o).tau_hat) EXPECT_NEAR(*t, 3.0, 1e-8);
}

TEST(Psr, OutcomeShifts) {
  const auto ds = noisy_study(300, 22);
  const auto grid = EvaluationGrid::linspace(-0.7, 0.7, 7);
  const auto base = psr_estimate(ds, grid, external_rot());
  // Adding a constant to every outcome leaves the effect unchanged; adding it
  // to treated outcomes only moves the effect by that constant.
  const auto level = psr_estimate(ds.with_outcome(ds.y().array() + 4.0), grid, external_rot());
  const auto effect = psr_estimate(ds.with_outcome(ds.y() + 4.0 * ds.d()), grid, external_rot());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(*level.tau_hat[g], *base.tau_hat[g], 1e-10);
    EXPECT_NEAR(*effect.tau_hat[g], *base.tau_hat[g] + 4.0, 1e-10);
  }
}

TEST(Psr, LabelSwapNegates) {
  const auto ds = noisy_study(300, 23);
  const auto grid = EvaluationGrid::linspace(-0.7, 0.7, 7);
  auto o = external_rot();
  const auto base = psr_estimate(ds, grid, o);
  const Eigen::VectorXd flipped_scores = (1.0 - ds.external_scores()->array()).matrix();
  const auto swapped = ds.with_treatment((1.0 - ds.d().array()).matrix())
                           .with_external_scores(flipped_scores);
  // Pin the bandwidths: sd(1 - e) equals sd(e) only up to rounding.
  o.h1 = base.bandwidths.h1;
  o.h2 = base.bandwidths.h2;
  o.h3 = base.bandwidths.h3;
  const auto neg = psr_estimate(swapped, grid, o);
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_NEAR(*neg.tau_hat[g], -*base.tau_hat[g], 1e-10);
}

TEST(Psr, PermutationAndDeterminism) {
  const auto ds = noisy_study(250, 24);
  const auto grid = EvaluationGrid::linspace(-0.7, 0.7, 5);
  auto o = external_rot();
  o.bandwidth = BandwidthMethod::Lscv;
  const auto a = psr_estimate(ds, grid, o);
  o.threads = 3;
  const auto b = psr_estimate(ds, grid, o);
  EXPECT_EQ(a.tau_hat, b.tau_hat);
  std::vector<Eigen::Index> perm(250);
  for (Eigen::Index i = 0; i < 250; ++i) perm[static_cast<std::size_t>(i)] = (i * 37) % 250;
  const auto c = psr_estimate(ds.select_rows(perm), grid, o);
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_NEAR(*c.tau_hat[g], *a.tau_hat[g], 1e-10);
}

TEST(Psr, VarianceMatchesOracle) {
  const auto ds = noisy_study(200, 25);
  const auto grid = EvaluationGrid::linspace(-0.8, 0.8, 6);
  auto fit = psr_fit(ds, grid, external_rot());
  const auto comp = psr_variance_components(ds, fit.scores, fit.step1, fit.tau_at_samples, fit.h3, grid);

  const Eigen::VectorXd& e = fit.scores;
  const Eigen::VectorXd centred = (fit.step1.beta_at_sample - fit.tau_at_samples).array().square();
  Eigen::VectorXd resid(200);
  for (int i = 0; i < 200; ++i) {
    const double dm = ds.d()[i] - e[i];
    const double xi = fit.step1.residuals[i];
    resid[i] = dm * dm * xi * xi / std::pow(e[i] * (1.0 - e[i]), 2);
  }
  const double r = *fit.estimate.bandwidths.h1 / fit.h3;
  const double nu = 1.0 / (2.0 * std::sqrt(std::numbers::pi));
  const double kbar2 = 1.0 / (2.0 * std::sqrt(std::numbers::pi * (1.0 + r * r)));
  const double sd = sample_sd(as_span(ds.xl()));
  const double kde_h = 1.06 * sd * std::pow(200.0, -0.2);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double vb = std::max(0.0, oracle::local_linear(ds.xl(), centred, fit.h3, grid[g]));
    const double er = std::max(0.0, oracle::local_linear(ds.xl(), resid, fit.h3, grid[g]));
    const double f = oracle::kde(ds.xl(), kde_h, grid[g]);
    EXPECT_NEAR(*comp.beta_variance[g], vb, 1e-8 * std::max(1.0, vb));
    EXPECT_NEAR(*comp.residual_moment[g], er, 1e-8 * std::max(1.0, er));
    EXPECT_NEAR(comp.density[g], f, 1e-8);
    const double v = (nu * vb + kbar2 * er) / (200.0 * fit.h3 * f);
    EXPECT_NEAR(*comp.variance[g], v, 1e-8 * v);
  }
}

TEST(Psr, BetaVarianceVanishesForConstantEffect) {
  const auto grid = EvaluationGrid::linspace(-0.5, 0.5, 5);
  std::vector<double> ratio;
  for (std::size_t n : {400u, 3200u}) {
    const auto ds = test::synthetic(
        n, 26, [](double) { return 2.0; }, [](const auto& row) { return row[1]; }, 1.0);
    auto fit = psr_fit(ds, grid, external_rot());
    const auto c = psr_variance_components(ds, fit.scores, fit.step1, fit.tau_at_samples, fit.h3, grid);
    double vb = 0, er = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      vb += c.constants.nu * *c.beta_variance[g];
      er += c.constants.kbar_sq_integral * *c.residual_moment[g];
    }
    ratio.push_back(vb / er);
  }
  EXPECT_LT(ratio[1], ratio[0]);
  EXPECT_LT(ratio[1], 0.5);
}

TEST(Psr, BandHalfWidths) {
  HteEstimate est(EvaluationGrid({0.0, 1.0, 2.0}));
  est.tau_hat = {1.0, 2.0, std::nullopt};
  est.variance = {0.01, 0.0, 0.01};
  const auto b95 = confidence_band(est, 0.95);
  EXPECT_NEAR(*b95.ci_hi[0] - 1.0, 0.195996, 1e-6);
  EXPECT_NEAR(1.0 - *b95.ci_lo[0], 0.1959963985, 1e-9);
  EXPECT_EQ(*b95.ci_lo[1], 2.0);
  EXPECT_EQ(*b95.ci_hi[1], 2.0);
  EXPECT_EQ(b95.diagnostics.degenerate_bands, 1u);
  EXPECT_FALSE(b95.ci_lo[2].has_value());
  const auto b50 = confidence_band(est, 0.5);
  EXPECT_NEAR(*b50.ci_hi[0] - 1.0, 0.674489750 * 0.1, 1e-9);
  EXPECT_THROW(confidence_band(est, 1.0), InvalidArgument);
  EXPECT_THROW(confidence_band(HteEstimate(EvaluationGrid({0.0})), 0.9), InvalidArgument);
}

TEST(Psr, SimulationThreeCentre) {
  // tau(x) = x; with true scores the estimate at 0 averages to 0.
  MonteCarloConfig mc;
  mc.scenario.outcome_model = OutcomeModel::III;
  mc.scenario.mechanism = Mechanism::A;
  mc.scenario.n = 2000;
  const auto grid = EvaluationGrid({0.0});
  double sum = 0.0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    mc.scenario.seed = derive_seed(77, static_cast<std::uint64_t>(r));
    const auto gen = generate_dataset(mc.scenario);
    sum += *psr_estimate(gen.dataset, grid, external_rot()).tau_hat[0];
  }
  EXPECT_NEAR(sum / reps, 0.0, 0.05);
}

TEST(Psr, SimulationFourPoint) {
  ScenarioConfig sc;
  sc.outcome_model = OutcomeModel::IV;
  sc.mechanism = Mechanism::B;
  sc.n = 1000;
  const auto grid = EvaluationGrid({0.2});
  std::vector<double> est;
  for (int r = 0; r < 200; ++r) {
    sc.seed = derive_seed(78, static_cast<std::uint64_t>(r));
    const auto gen = generate_dataset(sc);
    est.push_back(*psr_estimate(gen.dataset, grid, external_rot()).tau_hat[0]);
  }
  const double avg = mean(est);
  const double sd = sample_sd(est);
  EXPECT_NEAR(true_tau(OutcomeModel::IV, 0.2), 0.4, 1e-15);
  EXPECT_LT(std::abs(avg - 0.4), 3.0 * sd);
}

TEST(Psr, ScoreScaleTransformChangesLittle) {
  // Smoothing over logit(e) instead of e moves the estimate by much less than
  // its own sampling spread.
  ScenarioConfig sc;
  sc.n = 1000;
  const auto grid = simulation_grid(kDefaultGridSize);
  const int reps = 20;
  Eigen::MatrixXd draws(reps, static_cast<Eigen::Index>(grid.size()));
  std::vector<double> median_diff;
  for (int r = 0; r < reps; ++r) {
    sc.seed = derive_seed(79, static_cast<std::uint64_t>(r));
    const auto gen = generate_dataset(sc);
    PsrOptions o;
    const auto a = psr_estimate(gen.dataset, grid, o);
    o.logit_scale_scores = true;
    const auto b = psr_estimate(gen.dataset, grid, o);
    std::vector<double> diff;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      draws(r, static_cast<Eigen::Index>(g)) = *a.tau_hat[g];
      diff.push_back(std::abs(*a.tau_hat[g] - *b.tau_hat[g]));
    }
    median_diff.push_back(quantile(diff, 0.5));
  }
  std::vector<double> sds;
  for (Eigen::Index g = 0; g < draws.cols(); ++g) {
    const Eigen::VectorXd col = draws.col(g);
    sds.push_back(sample_sd(as_span(col)));
  }
  const double sd = mean(sds);
  EXPECT_LT(quantile(median_diff, 0.5), 0.5 * sd);
}

TEST(Psr, Errors) {
  const auto ds = noisy_study(100, 27);
  const auto grid = EvaluationGrid::linspace(-0.5, 0.5, 3);
  EXPECT_THROW(psr_fit_with_scores(ds, Eigen::VectorXd::Constant(99, 0.5), grid), InvalidArgument);
  EXPECT_THROW(psr_fit_with_scores(ds, Eigen::VectorXd::Constant(100, 1.0), grid), InvalidArgument);
  auto o = external_rot();
  EXPECT_THROW(psr_fit(ds.with_external_scores(std::nullopt), grid, o), ConfigError);
}
