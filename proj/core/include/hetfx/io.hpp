#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "hetfx/estimate.hpp"
#include "hetfx/metrics.hpp"

namespace hetfx {

enum class Format { Csv, Json };

Format parse_format(std::string_view name);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Fixed 6-significant-digit rendering used by every result writer.
std::string format_value(double v);

// CSV header: x,tau_hat,variance,ci_lo,ci_hi (missing cells written as NA).
std::string render_estimate(const HteEstimate& est, Format fmt);
// CSV header: scenario,method,n,p,reps,bias,sd,mae,mse,cp95.
std::string render_metrics(std::span<const MetricsReport> reports, Format fmt);
// Per-grid-point diagnostics: x,tau_true,mean_error,sd,mse,cp95,used.
std::string render_point_summaries(const MetricsReport& report,
                                   std::span<const double> tau_true);
// Tidy plot data: x,estimate,lo,hi,method.
std::string render_plot_data(std::span<const HteEstimate> estimates);

void write_results(const HteEstimate& est, const std::filesystem::path& path, Format fmt);
void write_results(const MetricsReport& report, const std::filesystem::path& path, Format fmt);
void write_results(std::span<const MetricsReport> reports, const std::filesystem::path& path,
                   Format fmt);

// Readers for the formats above.
struct EstimateTable {
  std::vector<double> x;
  std::vector<std::optional<double>> tau_hat, variance, ci_lo, ci_hi;
};
EstimateTable read_estimate(const std::filesystem::path& path, Format fmt);
std::vector<MetricsReport> read_metrics(const std::filesystem::path& path, Format fmt);

}  // namespace hetfx
