#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "hetfx/baselines.hpp"
#include "hetfx/data.hpp"
#include "hetfx/error.hpp"
#include "hetfx/io.hpp"
#include "hetfx/psr.hpp"
#include "hetfx/simbench.hpp"

#ifndef HETFX_VERSION
#define HETFX_VERSION "unknown"
#endif

namespace hetfx::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::uint64_t kDefaultSeed = 1;

// Flags raised while a command runs that should turn exit 0 into exit 2.
struct Outcome {
  bool warning = false;
};

// Everything that determines the numbers a simulate/compare run produces.
// Thread count and output location are deliberately not part of it.
struct SimSettings {
  std::string scenario = "I";
  std::string mechanism;
  std::vector<std::string> methods{"psr"};
  std::size_t n = 1000;
  std::size_t p = 5;
  std::size_t reps = 200;
  std::size_t grid_size = kDefaultGridSize;
  std::size_t bootstrap = kDefaultBootstrap;
  std::uint64_t seed = kDefaultSeed;
  std::string kernel = "gauss";
  std::string bandwidth = "lscv";
  std::string score = "logit";
  std::string format = "csv";
  double level = 0.95;
  bool logit_scale = false;
};

json to_json(const SimSettings& s) {
  return {{"scenario", s.scenario},   {"mechanism", s.mechanism}, {"methods", s.methods},
          {"n", s.n},                 {"p", s.p},                 {"reps", s.reps},
          {"grid_size", s.grid_size}, {"bootstrap", s.bootstrap}, {"seed", s.seed},
          {"kernel", s.kernel},       {"bandwidth", s.bandwidth}, {"score", s.score},
          {"format", s.format},       {"level", s.level},         {"logit_scale", s.logit_scale}};
}

SimSettings sim_settings_from_json(const json& j) {
  SimSettings s;
  try {
    s.scenario = j.at("scenario").get<std::string>();
    s.mechanism = j.at("mechanism").get<std::string>();
    s.methods = j.at("methods").get<std::vector<std::string>>();
    s.n = j.at("n").get<std::size_t>();
    s.p = j.at("p").get<std::size_t>();
    s.reps = j.at("reps").get<std::size_t>();
    s.grid_size = j.at("grid_size").get<std::size_t>();
    s.bootstrap = j.at("bootstrap").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.kernel = j.at("kernel").get<std::string>();
    s.bandwidth = j.at("bandwidth").get<std::string>();
    s.score = j.at("score").get<std::string>();
    s.format = j.at("format").get<std::string>();
    s.level = j.at("level").get<double>();
    s.logit_scale = j.at("logit_scale").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest settings are incomplete: ") + e.what());
  }
  return s;
}

json version_block() {
  return {{"hetfx", HETFX_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__}};
}

std::uint64_t parse_seed_text(const std::string& text, const char* origin) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') {
    throw InvalidArgument(std::string(origin) + " is not a nonnegative integer: '" + text + "'");
  }
  return v;
}

// --seed wins, then HETFX_SEED, then the built-in default.
std::uint64_t resolve_seed(const std::optional<std::string>& flag) {
  if (flag) return parse_seed_text(*flag, "--seed");
  if (const char* env = std::getenv("HETFX_SEED"); env && *env) {
    return parse_seed_text(env, "HETFX_SEED");
  }
  return kDefaultSeed;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  p += suffix;
  return p;
}

std::string extension(Format f) { return f == Format::Json ? ".json" : ".csv"; }

void write_manifest(const fs::path& path, const json& manifest) {
  write_file_atomic(path, manifest.dump(2) + "\n");
}

json read_manifest(const fs::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("command") || j["command"] != command) {
    throw ConfigError("manifest '" + path.string() + "' was not written by '" + command + "'");
  }
  if (!j.contains("settings")) throw ConfigError("manifest has no settings block");
  return j;
}

// ---------------------------------------------------------------------------
// simulate / compare

struct SimFlags {
  SimSettings settings;
  std::optional<std::string> seed;
  std::string method = "psr";
  std::string out;
  std::string replay;
  unsigned threads = 0;
  bool full_scale = false;
};

void add_sim_options(CLI::App& cmd, SimFlags& f, bool compare) {
  auto& s = f.settings;
  cmd.add_option("--scenario", s.scenario, "Simulation I..VIII (or I..IV with --mechanism)")
      ->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI", "VII", "VIII"}));
  cmd.add_option("--mechanism", s.mechanism, "Assignment mechanism A..D")
      ->check(CLI::IsMember({"A", "B", "C", "D"}));
  if (compare) {
    cmd.add_option("--methods", s.methods, "Comma-separated methods (psr,ipw,aipw,match)")
        ->delimiter(',')
        ->default_str("psr,ipw,aipw,match");
  } else {
    cmd.add_option("--method", f.method, "psr, ipw, aipw or match")
        ->check(CLI::IsMember({"psr", "ipw", "aipw", "match"}));
  }
  cmd.add_option("--n", s.n, "Sample size per replicate");
  cmd.add_option("--p", s.p, "Covariate dimension (>= 5)");
  cmd.add_option("--reps", s.reps, "Monte Carlo replicates (>= 2)");
  cmd.add_option("--seed", f.seed, "Master seed (falls back to HETFX_SEED)");
  cmd.add_option("--grid-size", s.grid_size, "Evaluation grid points");
  cmd.add_option("--kernel", s.kernel)->check(CLI::IsMember({"gauss", "epan"}));
  cmd.add_option("--bandwidth", s.bandwidth)->check(CLI::IsMember({"rot", "lscv"}));
  cmd.add_option("--score", s.score)->check(CLI::IsMember({"logit", "probit", "external"}));
  cmd.add_option("--level", s.level, "Confidence level of the bands");
  cmd.add_option("--bootstrap", s.bootstrap, "Bootstrap resamples for the matching variant");
  cmd.add_flag("--logit-scale", s.logit_scale, "Smooth Step 1 over logit(e)");
  cmd.add_option("--format", s.format)->check(CLI::IsMember({"csv", "json"}));
  cmd.add_option("--out", f.out, "Results file (default <command>.<format>)");
  cmd.add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  cmd.add_flag("--full-scale", f.full_scale, "Use reps=1000 and n=2000 unless given");
  cmd.add_option("--replay", f.replay, "Re-run the settings stored in a manifest");
}

MonteCarloConfig monte_carlo_config(const SimSettings& s, const std::string& method,
                                    unsigned threads) {
  MonteCarloConfig mc;
  const ScenarioName name = parse_scenario(s.scenario);
  mc.scenario.outcome_model = name.model;
  mc.scenario.mechanism = s.mechanism.empty() ? name.mechanism : parse_mechanism(s.mechanism);
  mc.scenario.n = s.n;
  mc.scenario.p = s.p;
  mc.method = parse_method(method);
  mc.score_policy = parse_score_policy(s.score);
  mc.reps = s.reps;
  mc.grid_size = s.grid_size;
  mc.master_seed = s.seed;
  mc.kernel = parse_kernel(s.kernel);
  mc.bandwidth = parse_bandwidth_method(s.bandwidth);
  mc.level = s.level;
  mc.bootstrap = s.bootstrap;
  mc.logit_scale_scores = s.logit_scale;
  mc.threads = threads;
  return mc;
}

void validate(const SimSettings& s) {
  if (s.methods.empty()) throw InvalidArgument("no method given");
  if (s.reps < 2) throw InvalidArgument("--reps must be at least 2");
  if (s.p < 5) throw InvalidArgument("--p must be at least 5");
  if (s.n < 20) throw InvalidArgument("--n must be at least 20");
  if (s.grid_size < 2) throw InvalidArgument("--grid-size must be at least 2");
  if (!(s.level > 0.0 && s.level < 1.0)) throw InvalidArgument("--level must lie in (0, 1)");
  for (const auto& m : s.methods) {
    parse_method(m);
    if (m == "match" && s.bootstrap < 2) throw InvalidArgument("--bootstrap must be at least 2");
  }
  parse_scenario(s.scenario);
  if (!s.mechanism.empty()) parse_mechanism(s.mechanism);
  parse_kernel(s.kernel);
  parse_bandwidth_method(s.bandwidth);
  parse_score_policy(s.score);
  parse_format(s.format);
}

int run_simulation(const std::string& command, SimFlags& f, const CLI::App& cmd, std::ostream& out,
                   std::ostream& err) {
  SimSettings s = f.settings;
  if (!f.replay.empty()) {
    s = sim_settings_from_json(read_manifest(f.replay, command).at("settings"));
  } else {
    if (command == "simulate") s.methods = {f.method};
    if (f.full_scale) {
      if (cmd.count("--reps") == 0) s.reps = 1000;
      if (cmd.count("--n") == 0) s.n = 2000;
    }
    s.seed = resolve_seed(f.seed);
  }
  validate(s);
  const Format fmt = parse_format(s.format);
  const fs::path out_path = f.out.empty() ? fs::path(command + extension(fmt)) : fs::path(f.out);

  std::vector<MetricsReport> reports;
  std::vector<std::string> point_files;
  Outcome outcome;
  for (const auto& method : s.methods) {
    const MonteCarloConfig mc = monte_carlo_config(s, method, f.threads);
    reports.push_back(run_monte_carlo(mc));
    const MetricsReport& rep = reports.back();
    if (rep.reliability_warning) {
      outcome.warning = true;
      err << "warning: " << method << " left " << format_value(100.0 * rep.exclusion_fraction)
          << "% of grid cells without an estimate\n";
    }
    std::vector<double> truth;
    for (double x : rep.grid) truth.push_back(true_tau(mc.scenario.outcome_model, x));
    const fs::path points = sibling(out_path, s.methods.size() == 1 ? ".points.csv"
                                                                    : "." + method + ".points.csv");
    write_file_atomic(points, render_point_summaries(rep, truth));
    point_files.push_back(points.filename().string());
  }
  write_results(reports, out_path, fmt);

  json manifest = {{"tool", "hetfx"},
                   {"command", command},
                   {"settings", to_json(s)},
                   {"versions", version_block()},
                   {"outputs", {{"results", out_path.filename().string()}, {"points", point_files}}}};
  write_manifest(sibling(out_path, ".manifest.json"), manifest);
  out << render_metrics(reports, Format::Csv);
  return outcome.warning ? kExitWarning : kExitOk;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateFlags {
  std::string data;
  std::string treatment = "d";
  std::string outcome = "y";
  std::string xl = "xl";
  std::vector<std::string> covariates;
  std::string score_col;
  std::size_t min_rows = 10;
  std::string method = "psr";
  std::string score = "logit";
  std::string bandwidth = "lscv";
  std::string kernel = "gauss";
  std::size_t grid_size = kDefaultGridSize;
  double level = 0.95;
  std::size_t bootstrap = kDefaultBootstrap;
  std::optional<std::string> seed;
  unsigned threads = 0;
  bool logit_scale = false;
  std::string out;
  std::string plot;
  std::string format = "csv";
};

void add_estimate_options(CLI::App& cmd, EstimateFlags& f) {
  cmd.add_option("--data", f.data, "Input CSV with a header row")->required();
  cmd.add_option("--treatment", f.treatment, "Binary treatment column");
  cmd.add_option("--outcome", f.outcome, "Outcome column");
  cmd.add_option("--xl", f.xl, "Covariate of interest");
  cmd.add_option("--covariates", f.covariates, "Comma-separated covariates (default: all others)")
      ->delimiter(',');
  cmd.add_option("--score-col", f.score_col, "Column of known propensity scores");
  cmd.add_option("--min-rows", f.min_rows, "Minimum usable rows");
  cmd.add_option("--method", f.method)->check(CLI::IsMember({"psr", "ipw", "aipw", "match"}));
  cmd.add_option("--score", f.score)->check(CLI::IsMember({"logit", "probit", "external"}));
  cmd.add_option("--bandwidth", f.bandwidth)->check(CLI::IsMember({"rot", "lscv"}));
  cmd.add_option("--kernel", f.kernel)->check(CLI::IsMember({"gauss", "epan"}));
  cmd.add_option("--grid-size", f.grid_size);
  cmd.add_option("--level", f.level);
  cmd.add_option("--bootstrap", f.bootstrap);
  cmd.add_option("--seed", f.seed, "Bootstrap seed for the matching variant");
  cmd.add_option("--threads", f.threads);
  cmd.add_flag("--logit-scale", f.logit_scale);
  cmd.add_option("--out", f.out, "Estimate file (default estimate.<format>)");
  cmd.add_option("--plot", f.plot, "Plot data file (default <out>.plot.csv)");
  cmd.add_option("--format", f.format)->check(CLI::IsMember({"csv", "json"}));
}

int run_estimate(EstimateFlags& f, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  const Format fmt = parse_format(f.format);
  if (!(f.level > 0.0 && f.level < 1.0)) throw InvalidArgument("--level must lie in (0, 1)");
  if (f.grid_size < 2) throw InvalidArgument("--grid-size must be at least 2");
  // A score column means the scores are known: Step 0 is skipped unless a
  // fitted policy was asked for explicitly.
  std::string score = f.score;
  if (!f.score_col.empty() && cmd.count("--score") == 0) score = "external";
  const ScorePolicy policy = parse_score_policy(score);
  const Method method = parse_method(f.method);
  const KernelKind kernel = parse_kernel(f.kernel);
  const BandwidthMethod bw = parse_bandwidth_method(f.bandwidth);
  const std::uint64_t seed = resolve_seed(f.seed);

  CsvSchema schema;
  schema.treatment_col = f.treatment;
  schema.outcome_col = f.outcome;
  schema.xl_col = f.xl;
  if (!f.score_col.empty()) schema.score_col = f.score_col;
  schema.covariate_cols = f.covariates;
  schema.min_rows = f.min_rows;
  const CsvLoad load = read_csv(f.data, schema);
  const ObservationalDataset& data = load.dataset;
  const EvaluationGrid grid = default_grid(data, f.grid_size);

  std::optional<HteEstimate> est;
  Eigen::VectorXd scores;
  if (method == Method::Psr) {
    PsrOptions opt;
    opt.score_policy = policy;
    opt.bandwidth = bw;
    opt.kernel = kernel;
    opt.logit_scale_scores = f.logit_scale;
    opt.threads = f.threads;
    PsrFit fit = psr_fit(data, grid, opt);
    attach_psr_variance(fit, data, kernel);
    scores = fit.scores;
    est = confidence_band(std::move(fit.estimate), f.level);
  } else {
    const ResolvedScores resolved = resolve_scores(data, policy);
    scores = resolved.scores;
    BaselineOptions opt;
    opt.kernel = kernel;
    opt.bandwidth = bw;
    opt.threads = f.threads;
    if (method == Method::MatchPsr) {
      MatchOptions mo;
      mo.smoothing = opt;
      mo.bootstrap = f.bootstrap;
      mo.level = f.level;
      mo.seed = seed;
      est = match_variant_estimate(data, scores, grid, mo);
    } else {
      est = confidence_band(method == Method::Ipw ? ipw_estimate(data, scores, grid, opt)
                                                  : aipw_estimate(data, scores, grid, opt),
                            f.level);
    }
    est->diagnostics.score_min = scores.minCoeff();
    est->diagnostics.score_max = scores.maxCoeff();
    if (resolved.fit) est->diagnostics.propensity_separation = resolved.fit->separation_warning;
  }

  const fs::path out_path = f.out.empty() ? fs::path("estimate" + extension(fmt)) : fs::path(f.out);
  const fs::path plot_path = f.plot.empty() ? sibling(out_path, ".plot.csv") : fs::path(f.plot);
  write_results(*est, out_path, fmt);
  const std::vector<HteEstimate> plotted{*est};
  write_file_atomic(plot_path, render_plot_data(plotted));

  const auto& dg = est->diagnostics;
  json manifest = {
      {"tool", "hetfx"},
      {"command", "estimate"},
      {"settings",
       {{"data", f.data},
        {"treatment", f.treatment},
        {"outcome", f.outcome},
        {"xl", f.xl},
        {"covariates", data.covariate_names()},
        {"score_col", f.score_col},
        {"min_rows", f.min_rows},
        {"method", f.method},
        {"score", score},
        {"bandwidth", f.bandwidth},
        {"kernel", f.kernel},
        {"grid_size", f.grid_size},
        {"level", f.level},
        {"bootstrap", f.bootstrap},
        {"seed", seed},
        {"logit_scale", f.logit_scale},
        {"format", f.format}}},
      {"data_summary", {{"rows_used", data.n()}, {"rows_rejected", load.rejected_rows}}},
      {"versions", version_block()},
      {"outputs",
       {{"results", out_path.filename().string()}, {"plot", plot_path.filename().string()}}}};
  write_manifest(sibling(out_path, ".manifest.json"), manifest);

  out << "rows used: " << data.n() << " (rejected " << load.rejected_rows << ")\n";
  out << "score range: [" << format_value(dg.score_min) << ", " << format_value(dg.score_max) << "]\n";
  if (method == Method::Psr) {
    out << "bandwidths: h1=" << format_value(est->bandwidths.h1.value_or(0.0))
        << " h2=" << format_value(est->bandwidths.h2.value_or(0.0))
        << " h3=" << format_value(est->bandwidths.h3) << "\n";
    out << "regularized fraction: " << format_value(dg.regularized_fraction) << "\n";
  } else {
    out << "bandwidth: h=" << format_value(est->bandwidths.h3) << "\n";
  }
  std::size_t missing = 0;
  for (const auto& t : est->tau_hat) missing += t ? 0 : 1;
  if (missing > 0) out << "grid points without an estimate: " << missing << "\n";

  bool warning = false;
  if (dg.sparse_overlap) {
    warning = true;
    err << "warning: sparse overlap, more than 20% of Step-1 fits were regularized\n";
  }
  if (dg.propensity_separation) {
    warning = true;
    err << "warning: the propensity model shows signs of separation\n";
  }
  if (dg.density_underflow > 0) {
    warning = true;
    err << "warning: density underflow at " << dg.density_underflow << " grid points\n";
  }
  return warning ? kExitWarning : kExitOk;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateFlags {
  std::string scenario = "I";
  std::string mechanism;
  std::size_t n = 1000;
  std::size_t p = 5;
  std::optional<std::string> seed;
  std::string score_col = "e";
  std::string out = "data.csv";
};

void add_generate_options(CLI::App& cmd, GenerateFlags& f) {
  cmd.add_option("--scenario", f.scenario)
      ->check(CLI::IsMember({"I", "II", "III", "IV", "V", "VI", "VII", "VIII"}));
  cmd.add_option("--mechanism", f.mechanism)->check(CLI::IsMember({"A", "B", "C", "D"}));
  cmd.add_option("--n", f.n);
  cmd.add_option("--p", f.p);
  cmd.add_option("--seed", f.seed);
  cmd.add_option("--score-col", f.score_col, "Name of the true-score column");
  cmd.add_option("--out", f.out);
}

int run_generate(const GenerateFlags& f, std::ostream& out) {
  const ScenarioName name = parse_scenario(f.scenario);
  ScenarioConfig sc;
  sc.outcome_model = name.model;
  sc.mechanism = f.mechanism.empty() ? name.mechanism : parse_mechanism(f.mechanism);
  sc.n = f.n;
  sc.p = f.p;
  sc.seed = resolve_seed(f.seed);
  const GeneratedData gen = generate_dataset(sc);
  write_dataset_csv(gen.dataset, f.out, f.score_col);
  json manifest = {{"tool", "hetfx"},
                   {"command", "generate"},
                   {"settings",
                    {{"scenario", scenario_label(sc.outcome_model, sc.mechanism)},
                     {"n", sc.n},
                     {"p", sc.p},
                     {"seed", sc.seed},
                     {"score_col", f.score_col}}},
                   {"versions", version_block()},
                   {"outputs", {{"data", fs::path(f.out).filename().string()}}}};
  write_manifest(sibling(f.out, ".manifest.json"), manifest);
  out << "wrote " << sc.n << " rows to " << f.out << "\n";
  return kExitOk;
}

int report(std::ostream& err, const char* kind, const std::exception& e, int code) {
  err << "hetfx: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous treatment effects by propensity score regression", "hetfx"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HETFX_VERSION);

  SimFlags sim, cmp;
  cmp.settings.methods = {"psr", "ipw", "aipw", "match"};
  EstimateFlags estf;
  GenerateFlags genf;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of one estimator");
  add_sim_options(*simulate, sim, false);
  auto* compare = app.add_subcommand("compare", "Several estimators on paired replicates");
  add_sim_options(*compare, cmp, true);
  auto* estimate = app.add_subcommand("estimate", "Estimate tau(x^l) on a CSV dataset");
  add_estimate_options(*estimate, estf);
  auto* generate = app.add_subcommand("generate", "Write a simulated dataset as CSV");
  add_generate_options(*generate, genf);

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();  // program name
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulation("simulate", sim, *simulate, out, err);
    if (compare->parsed()) return run_simulation("compare", cmp, *compare, out, err);
    if (estimate->parsed()) return run_estimate(estf, *estimate, out, err);
    if (generate->parsed()) return run_generate(genf, out);
  } catch (const SchemaError& e) {
    return report(err, "schema error", e, kExitData);
  } catch (const DataError& e) {
    return report(err, "data error", e, kExitData);
  } catch (const InsufficientData& e) {
    return report(err, "data error", e, kExitData);
  } catch (const IoError& e) {
    return report(err, "i/o error", e, kExitData);
  } catch (const InvalidArgument& e) {
    return report(err, "usage error", e, kExitUsage);
  } catch (const ConfigError& e) {
    return report(err, "usage error", e, kExitUsage);
  } catch (const Error& e) {
    return report(err, "error", e, kExitData);
  } catch (const std::exception& e) {
    return report(err, "internal error", e, kExitInternal);
  }
  return kExitUsage;
}

}  // namespace hetfx::cli
