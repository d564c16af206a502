#include "hetfx/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>
#include <system_error>

#include "hetfx/error.hpp"

namespace hetfx {
namespace {

using nlohmann::ordered_json;

constexpr std::string_view kEstimateHeader = "x,tau_hat,variance,ci_lo,ci_hi";
constexpr std::string_view kMetricsHeader = "scenario,method,n,p,reps,bias,sd,mae,mse,cp95";

std::string format_optional(const std::optional<double>& v) {
  return v ? format_value(*v) : std::string("NA");
}

// JSON numbers carry the same 6 significant digits as CSV cells.
ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_value(v));
}

ordered_json json_optional_array(const std::vector<std::optional<double>>& values,
                                 std::size_t size) {
  ordered_json arr = ordered_json::array();
  for (std::size_t i = 0; i < size; ++i) {
    if (i < values.size() && values[i]) {
      arr.push_back(json_number(*values[i]));
    } else {
      arr.push_back(nullptr);
    }
  }
  return arr;
}

std::optional<double> at_or_missing(const std::vector<std::optional<double>>& v, std::size_t i) {
  return i < v.size() ? v[i] : std::nullopt;
}

ordered_json metrics_json(const MetricsReport& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["method"] = r.method;
  j["n"] = r.n;
  j["p"] = r.p;
  j["reps"] = r.reps;
  j["bias"] = json_number(r.bias);
  j["sd"] = json_number(r.sd);
  j["mae"] = json_number(r.mae);
  j["mse"] = json_number(r.mse);
  j["cp95"] = json_number(r.cp95);
  return j;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<double> parse_cell(const std::string& cell) {
  if (cell == "NA" || cell.empty()) return std::nullopt;
  return std::stod(cell);
}

std::optional<double> json_optional(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

double or_nan(const std::optional<double>& v) {
  return v.value_or(std::numeric_limits<double>::quiet_NaN());
}

MetricsReport metrics_from_json(const ordered_json& j) {
  MetricsReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.p = j.at("p").get<std::size_t>();
  r.reps = j.at("reps").get<std::size_t>();
  r.bias = or_nan(json_optional(j.at("bias")));
  r.sd = or_nan(json_optional(j.at("sd")));
  r.mae = or_nan(json_optional(j.at("mae")));
  r.mse = or_nan(json_optional(j.at("mse")));
  r.cp95 = or_nan(json_optional(j.at("cp95")));
  return r;
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  throw InvalidArgument("unknown output format '" + std::string(name) + "'");
}

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Psr: return "psr";
    case Method::Ipw: return "ipw";
    case Method::Aipw: return "aipw";
    case Method::MatchPsr: return "match";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "psr") return Method::Psr;
  if (name == "ipw") return Method::Ipw;
  if (name == "aipw") return Method::Aipw;
  if (name == "match" || name == "match_psr") return Method::MatchPsr;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot move results into place at " + path.string() + ": " + ec.message());
  }
}

std::string format_value(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string render_estimate(const HteEstimate& est, Format fmt) {
  const std::size_t m = est.grid.size();
  if (fmt == Format::Csv) {
    std::string out(kEstimateHeader);
    out += '\n';
    for (std::size_t g = 0; g < m; ++g) {
      out += format_value(est.grid[g]);
      out += ',' + format_optional(at_or_missing(est.tau_hat, g));
      out += ',' + format_optional(at_or_missing(est.variance, g));
      out += ',' + format_optional(at_or_missing(est.ci_lo, g));
      out += ',' + format_optional(at_or_missing(est.ci_hi, g));
      out += '\n';
    }
    return out;
  }
  ordered_json j;
  j["method"] = std::string(to_string(est.method));
  ordered_json xs = ordered_json::array();
  for (double x : est.grid.points()) xs.push_back(json_number(x));
  j["x"] = std::move(xs);
  j["tau_hat"] = json_optional_array(est.tau_hat, m);
  j["variance"] = json_optional_array(est.variance, m);
  j["ci_lo"] = json_optional_array(est.ci_lo, m);
  j["ci_hi"] = json_optional_array(est.ci_hi, m);
  ordered_json bw;
  bw["h1"] = est.bandwidths.h1 ? json_number(*est.bandwidths.h1) : ordered_json(nullptr);
  bw["h2"] = est.bandwidths.h2 ? json_number(*est.bandwidths.h2) : ordered_json(nullptr);
  bw["h3"] = json_number(est.bandwidths.h3);
  j["bandwidths"] = std::move(bw);
  const auto& d = est.diagnostics;
  ordered_json diag;
  diag["regularized_fraction"] = json_number(d.regularized_fraction);
  diag["sparse_overlap"] = d.sparse_overlap;
  diag["score_min"] = json_number(d.score_min);
  diag["score_max"] = json_number(d.score_max);
  diag["density_underflow"] = d.density_underflow;
  diag["degenerate_bands"] = d.degenerate_bands;
  diag["propensity_separation"] = d.propensity_separation;
  diag["euclidean_fallback"] = d.euclidean_fallback;
  diag["outcome_model_regularized"] = d.outcome_model_regularized;
  j["diagnostics"] = std::move(diag);
  return j.dump(2) + "\n";
}

std::string render_metrics(std::span<const MetricsReport> reports, Format fmt) {
  if (fmt == Format::Csv) {
    std::string out(kMetricsHeader);
    out += '\n';
    for (const auto& r : reports) {
      out += r.scenario + ',' + r.method + ',' + std::to_string(r.n) + ',' + std::to_string(r.p) +
             ',' + std::to_string(r.reps) + ',' + format_value(r.bias) + ',' + format_value(r.sd) +
             ',' + format_value(r.mae) + ',' + format_value(r.mse) + ',' +
             format_value(r.cp95) + '\n';
    }
    return out;
  }
  if (reports.size() == 1) return metrics_json(reports.front()).dump(2) + "\n";
  ordered_json j;
  j["reports"] = ordered_json::array();
  for (const auto& r : reports) j["reports"].push_back(metrics_json(r));
  return j.dump(2) + "\n";
}

std::string render_point_summaries(const MetricsReport& report,
                                   std::span<const double> tau_true) {
  std::string out = "x,tau_true,mean_error,sd,mse,cp95,used\n";
  for (std::size_t g = 0; g < report.grid.size(); ++g) {
    const auto& s = report.per_point.at(g);
    out += format_value(report.grid[g]) + ',' +
           (g < tau_true.size() ? format_value(tau_true[g]) : std::string("NA")) + ',' +
           format_value(s.mean_error) + ',' + format_value(s.sd) + ',' + format_value(s.mse) +
           ',' + format_value(s.coverage) + ',' + std::to_string(s.used) + '\n';
  }
  return out;
}

std::string render_plot_data(std::span<const HteEstimate> estimates) {
  std::string out = "x,estimate,lo,hi,method\n";
  for (const auto& est : estimates) {
    for (std::size_t g = 0; g < est.grid.size(); ++g) {
      out += format_value(est.grid[g]) + ',' + format_optional(at_or_missing(est.tau_hat, g)) +
             ',' + format_optional(at_or_missing(est.ci_lo, g)) + ',' +
             format_optional(at_or_missing(est.ci_hi, g)) + ',' +
             std::string(to_string(est.method)) + '\n';
    }
  }
  return out;
}

void write_results(const HteEstimate& est, const std::filesystem::path& path, Format fmt) {
  write_file_atomic(path, render_estimate(est, fmt));
}

void write_results(const MetricsReport& report, const std::filesystem::path& path, Format fmt) {
  write_file_atomic(path, render_metrics(std::span(&report, 1), fmt));
}

void write_results(std::span<const MetricsReport> reports, const std::filesystem::path& path,
                   Format fmt) {
  write_file_atomic(path, render_metrics(reports, fmt));
}

EstimateTable read_estimate(const std::filesystem::path& path, Format fmt) {
  const std::string text = read_text(path);
  EstimateTable t;
  if (fmt == Format::Csv) {
    const auto records = parse_csv(text);
    if (records.empty() || records.front().size() != 5) {
      throw SchemaError(path.string() + ": not an estimate table", "");
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
      const auto& rec = records[r];
      if (rec.size() != 5) throw DataError(path.string() + ": malformed row", r);
      t.x.push_back(std::stod(rec[0]));
      t.tau_hat.push_back(parse_cell(rec[1]));
      t.variance.push_back(parse_cell(rec[2]));
      t.ci_lo.push_back(parse_cell(rec[3]));
      t.ci_hi.push_back(parse_cell(rec[4]));
    }
    return t;
  }
  const auto j = ordered_json::parse(text);
  for (const auto& v : j.at("x")) t.x.push_back(v.get<double>());
  for (const auto& v : j.at("tau_hat")) t.tau_hat.push_back(json_optional(v));
  for (const auto& v : j.at("variance")) t.variance.push_back(json_optional(v));
  for (const auto& v : j.at("ci_lo")) t.ci_lo.push_back(json_optional(v));
  for (const auto& v : j.at("ci_hi")) t.ci_hi.push_back(json_optional(v));
  return t;
}

std::vector<MetricsReport> read_metrics(const std::filesystem::path& path, Format fmt) {
  const std::string text = read_text(path);
  std::vector<MetricsReport> out;
  if (fmt == Format::Csv) {
    const auto records = parse_csv(text);
    for (std::size_t r = 1; r < records.size(); ++r) {
      const auto& rec = records[r];
      if (rec.size() != 10) throw DataError(path.string() + ": malformed row", r);
      MetricsReport m;
      m.scenario = rec[0];
      m.method = rec[1];
      m.n = std::stoul(rec[2]);
      m.p = std::stoul(rec[3]);
      m.reps = std::stoul(rec[4]);
      m.bias = or_nan(parse_cell(rec[5]));
      m.sd = or_nan(parse_cell(rec[6]));
      m.mae = or_nan(parse_cell(rec[7]));
      m.mse = or_nan(parse_cell(rec[8]));
      m.cp95 = or_nan(parse_cell(rec[9]));
      out.push_back(std::move(m));
    }
    return out;
  }
  const auto j = ordered_json::parse(text);
  if (j.contains("reports")) {
    for (const auto& r : j.at("reports")) out.push_back(metrics_from_json(r));
  } else {
    out.push_back(metrics_from_json(j));
  }
  return out;
}

}  // namespace hetfx
