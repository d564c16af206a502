#include "hetfx/simbench.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "hetfx/baselines.hpp"
#include "hetfx/error.hpp"
#include "hetfx/parallel.hpp"
#include "hetfx/psr.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* roman(OutcomeModel m) {
  switch (m) {
    case OutcomeModel::I: return "I";
    case OutcomeModel::II: return "II";
    case OutcomeModel::III: return "III";
    case OutcomeModel::IV: return "IV";
  }
  return "?";
}

char letter(Mechanism m) { return static_cast<char>('A' + static_cast<int>(m)); }

}  // namespace

bool is_canonical(OutcomeModel model, Mechanism mechanism) noexcept {
  const bool first_pair = model == OutcomeModel::I || model == OutcomeModel::II;
  return first_pair ? (mechanism == Mechanism::A || mechanism == Mechanism::C)
                    : (mechanism == Mechanism::B || mechanism == Mechanism::D);
}

Mechanism canonical_mechanism(OutcomeModel model) noexcept {
  return (model == OutcomeModel::I || model == OutcomeModel::II) ? Mechanism::A : Mechanism::B;
}

std::string scenario_label(OutcomeModel model, Mechanism mechanism) {
  if (!is_canonical(model, mechanism)) return std::string(roman(model)) + "/" + letter(mechanism);
  static const char* const extreme[] = {"I", "II", "III", "IV"};
  static const char* const moderate[] = {"V", "VI", "VII", "VIII"};
  const bool is_moderate = mechanism == Mechanism::C || mechanism == Mechanism::D;
  return (is_moderate ? moderate : extreme)[static_cast<int>(model)];
}

OutcomeModel parse_outcome_model(std::string_view name) {
  if (name == "I") return OutcomeModel::I;
  if (name == "II") return OutcomeModel::II;
  if (name == "III") return OutcomeModel::III;
  if (name == "IV") return OutcomeModel::IV;
  throw InvalidArgument("unknown outcome model '" + std::string(name) + "'");
}

Mechanism parse_mechanism(std::string_view name) {
  if (name.size() == 1 && name[0] >= 'A' && name[0] <= 'D') {
    return static_cast<Mechanism>(name[0] - 'A');
  }
  throw InvalidArgument("unknown assignment mechanism '" + std::string(name) + "'");
}

ScenarioName parse_scenario(std::string_view label) {
  static const char* const labels[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII"};
  for (int k = 0; k < 8; ++k) {
    if (label == labels[k]) {
      const auto model = static_cast<OutcomeModel>(k % 4);
      Mechanism mech = canonical_mechanism(model);
      if (k >= 4) mech = mech == Mechanism::A ? Mechanism::C : Mechanism::D;
      return {model, mech};
    }
  }
  throw InvalidArgument("unknown scenario '" + std::string(label) + "'");
}

Eigen::VectorXd mechanism_alpha(Mechanism mechanism, std::size_t p) {
  if (p < 5) throw InvalidArgument("simulation needs p >= 5");
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  const double pattern[5] = {1.0, -1.0, -1.0, 1.0, -1.0};
  for (int j = 0; j < 5; ++j) {
    switch (mechanism) {
      case Mechanism::A: alpha[j] = pattern[j]; break;
      case Mechanism::B: alpha[j] = 1.0; break;
      case Mechanism::C: alpha[j] = 0.25 * pattern[j]; break;
      case Mechanism::D: alpha[j] = 0.125 * pattern[j]; break;
    }
  }
  return alpha;
}

Eigen::MatrixXd covariate_covariance(std::size_t dim) {
  const auto m = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd sigma(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < m; ++k) {
      sigma(j, k) = std::ldexp(1.0, -static_cast<int>(std::abs(j - k)));
    }
  }
  return sigma;
}

double true_tau(OutcomeModel model, double x) {
  switch (model) {
    case OutcomeModel::I: {
      const double a = 2.0 * x + 1.0;
      const double b = x - 1.0;
      return x * a * a * b * b;
    }
    case OutcomeModel::II:
      return x * (1.0 - x) * std::cos(x) * std::log(x + 2.0) * std::exp(x);
    case OutcomeModel::III:
      return x;
    case OutcomeModel::IV:
      return 5.0 * x * x + x;
  }
  return kNaN;
}

double prognostic(OutcomeModel model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const double xl = x[0];
  switch (model) {
    case OutcomeModel::I:
    case OutcomeModel::II:
      return xl * xl * x[1] * x[2] * x[3] * x[4];
    case OutcomeModel::III:
      return 0.5 * (xl * x[1] + std::exp(x[2] - 3.0) * (std::sin(x[3]) + std::cos(x[4])));
    case OutcomeModel::IV:
      return xl * xl * (x[1] / 4.0 + x[2] / 8.0 + x[3] / 16.0 + x[4] / 32.0);
  }
  return kNaN;
}

PotentialOutcomes potential_outcomes(OutcomeModel model,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& x, double eps1,
                                     double eps0) {
  const double f = prognostic(model, x);
  return {true_tau(model, x[0]) + f + eps1, f + eps0};
}

GeneratedData generate_dataset(const ScenarioConfig& config) {
  if (config.p < 5) throw InvalidArgument("generate_dataset: p must be at least 5");
  if (config.n < 2) throw InvalidArgument("generate_dataset: n must be at least 2");
  const auto n = static_cast<Eigen::Index>(config.n);
  const auto p = static_cast<Eigen::Index>(config.p);
  const Eigen::MatrixXd chol = covariate_covariance(config.p - 1).llt().matrixL();
  const Eigen::VectorXd alpha = mechanism_alpha(config.mechanism, config.p);

  Rng rng(config.seed);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd e(n), d(n), y(n), y1(n), y0(n);
  Eigen::VectorXd z(p - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-0.5, 0.5);
    for (Eigen::Index j = 0; j < p - 1; ++j) z[j] = rng.normal();
    x.row(i).tail(p - 1) = (chol * z).transpose();
    e[i] = inverse_link(Link::Logit, x.row(i).dot(alpha));
    d[i] = rng.bernoulli(e[i]) ? 1.0 : 0.0;
    const double eps1 = rng.normal();
    const double eps0 = rng.normal();
    const auto po = potential_outcomes(config.outcome_model, x.row(i), eps1, eps0);
    y1[i] = po.y1;
    y0[i] = po.y0;
    y[i] = d[i] != 0.0 ? po.y1 : po.y0;
  }
  Eigen::VectorXd clamped = e.unaryExpr([](double v) { return clamp_score(v); });
  std::vector<std::string> names;
  names.reserve(config.p);
  names.emplace_back("xl");
  for (std::size_t j = 1; j < config.p; ++j) names.push_back("x" + std::to_string(j));
  return {ObservationalDataset(std::move(x), 0, std::move(d), std::move(y), std::move(clamped),
                               std::move(names)),
          std::move(e), std::move(y1), std::move(y0)};
}

EvaluationGrid simulation_grid(std::size_t size) {
  if (size < 2) throw InvalidArgument("grid size must be at least 2");
  return EvaluationGrid::linspace(-0.45, 0.45, size);
}

ReplicateResult run_replicate(const MonteCarloConfig& config, std::size_t replicate) {
  ScenarioConfig sc = config.scenario;
  sc.seed = derive_seed(config.master_seed, replicate);
  const GeneratedData gen = generate_dataset(sc);
  const ObservationalDataset& data = gen.dataset;
  const EvaluationGrid grid = simulation_grid(config.grid_size);

  std::vector<double> truth(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) truth[g] = true_tau(sc.outcome_model, grid[g]);

  if (config.method == Method::Psr) {
    PsrOptions opt;
    opt.score_policy = config.score_policy;
    opt.bandwidth = config.bandwidth;
    opt.kernel = config.kernel;
    opt.logit_scale_scores = config.logit_scale_scores;
    PsrFit fit = psr_fit(data, grid, opt);
    attach_psr_variance(fit, data, config.kernel);
    return {confidence_band(std::move(fit.estimate), config.level), std::move(truth)};
  }

  const Eigen::VectorXd scores = resolve_scores(data, config.score_policy).scores;
  BaselineOptions bopt;
  bopt.kernel = config.kernel;
  bopt.bandwidth = config.bandwidth;
  switch (config.method) {
    case Method::Ipw:
      return {confidence_band(ipw_estimate(data, scores, grid, bopt), config.level),
              std::move(truth)};
    case Method::Aipw:
      return {confidence_band(aipw_estimate(data, scores, grid, bopt), config.level),
              std::move(truth)};
    case Method::MatchPsr: {
      MatchOptions mopt;
      mopt.smoothing = bopt;
      mopt.bootstrap = config.bootstrap;
      mopt.level = config.level;
      mopt.seed = splitmix64(sc.seed);
      return {match_variant_estimate(data, scores, grid, mopt), std::move(truth)};
    }
    case Method::Psr:
      break;
  }
  throw InvalidArgument("run_replicate: unsupported method");
}

MetricsReport run_monte_carlo(const MonteCarloConfig& config) {
  if (config.reps < 2) throw InvalidArgument("run_monte_carlo: need at least 2 replicates");
  const EvaluationGrid grid = simulation_grid(config.grid_size);
  const auto reps = static_cast<Eigen::Index>(config.reps);
  const auto m = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd errors = Eigen::MatrixXd::Constant(reps, m, kNaN);
  Eigen::MatrixXd hits = Eigen::MatrixXd::Constant(reps, m, kNaN);

  parallel_for(config.reps, config.threads, [&](std::size_t r) {
    const ReplicateResult res = run_replicate(config, r);
    const auto& est = res.estimate;
    const auto row = static_cast<Eigen::Index>(r);
    for (Eigen::Index g = 0; g < m; ++g) {
      const auto gi = static_cast<std::size_t>(g);
      if (!est.tau_hat[gi]) continue;
      errors(row, g) = *est.tau_hat[gi] - res.truth[gi];
      if (est.has_band() && est.ci_lo[gi] && est.ci_hi[gi]) {
        hits(row, g) = (*est.ci_lo[gi] <= res.truth[gi] && res.truth[gi] <= *est.ci_hi[gi]) ? 1.0 : 0.0;
      }
    }
  });

  MetricsReport report = compute_metrics(errors, hits);
  report.scenario = scenario_label(config.scenario.outcome_model, config.scenario.mechanism);
  report.method = std::string(to_string(config.method));
  report.n = config.scenario.n;
  report.p = config.scenario.p;
  report.grid = grid.points();
  return report;
}

MetricsReport compute_metrics(const Eigen::MatrixXd& errors, const Eigen::MatrixXd& hits) {
  if (errors.size() == 0) throw InvalidArgument("compute_metrics: empty error matrix");
  if (errors.rows() != hits.rows() || errors.cols() != hits.cols()) {
    throw InvalidArgument("compute_metrics: error and coverage matrices differ in shape");
  }
  const Eigen::Index reps = errors.rows();
  const Eigen::Index m = errors.cols();
  CompensatedSum bias, mae, mse, cover, sd_sum;
  std::size_t used = 0, covered_cells = 0, sd_points = 0;
  MetricsReport out;
  out.reps = static_cast<std::size_t>(reps);
  out.per_point.resize(static_cast<std::size_t>(m));
  std::vector<double> column;
  for (Eigen::Index g = 0; g < m; ++g) {
    column.clear();
    CompensatedSum pt_mse, pt_cover;
    std::size_t pt_hits = 0;
    for (Eigen::Index r = 0; r < reps; ++r) {
      const double e = errors(r, g);
      if (std::isnan(e)) continue;
      column.push_back(e);
      bias.add(e);
      mae.add(std::abs(e));
      mse.add(e * e);
      pt_mse.add(e * e);
      ++used;
      const double h = hits(r, g);
      if (!std::isnan(h)) {
        cover.add(h);
        pt_cover.add(h);
        ++covered_cells;
        ++pt_hits;
      }
    }
    auto& pt = out.per_point[static_cast<std::size_t>(g)];
    pt.used = column.size();
    if (!column.empty()) {
      pt.mean_error = mean(column);
      pt.mse = pt_mse.value() / static_cast<double>(column.size());
    }
    if (pt_hits > 0) pt.coverage = pt_cover.value() / static_cast<double>(pt_hits);
    if (column.size() >= 2) {
      pt.sd = sample_sd(column);
      sd_sum.add(pt.sd);
      ++sd_points;
    }
  }
  const double cells = static_cast<double>(reps * m);
  out.exclusion_fraction = 1.0 - static_cast<double>(used) / cells;
  out.reliability_warning = out.exclusion_fraction > kReliabilityExclusion;
  if (used > 0) {
    out.bias = bias.value() / static_cast<double>(used);
    out.mae = mae.value() / static_cast<double>(used);
    out.mse = mse.value() / static_cast<double>(used);
  }
  out.sd = sd_points > 0 ? sd_sum.value() / static_cast<double>(sd_points) : 0.0;
  out.cp95 = covered_cells > 0 ? cover.value() / static_cast<double>(covered_cells) : 0.0;
  return out;
}

double beta_score_sensitivity(const ScenarioConfig& config, std::span<const ScorePoint> lattice,
                              KernelKind kernel) {
  const GeneratedData gen = generate_dataset(config);
  const auto& data = gen.dataset;
  const Eigen::VectorXd estimated = resolve_scores(data, ScorePolicy::FitLogit).scores;
  const Eigen::VectorXd truth = gen.true_scores;
  const double h1 = silverman_bandwidth(as_span(data.xl()));
  const double h2 = silverman_bandwidth(as_span(truth));
  const Step1Options opt{kernel, 1};
  const auto with_true = step1_vc_fit(data, as_span(truth), h1, h2, lattice, opt);
  const auto with_est = step1_vc_fit(data, as_span(estimated), h1, h2, lattice, opt);
  double sup = 0.0;
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    if (!with_true[k] || !with_est[k]) continue;
    sup = std::max(sup, std::abs(with_true[k]->beta - with_est[k]->beta));
  }
  return sup;
}

}  // namespace hetfx
