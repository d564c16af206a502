#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hetfx {

/// Monte Carlo summary for one (scenario, method, n, p) cell. Values are in
/// natural units (the usual tables print bias, sd, mae and mse times 100).
struct MetricsReport {
  std::string scenario;
  std::string method;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t reps = 0;
  double bias = 0.0;
  double sd = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double cp95 = 0.0;

  std::vector<double> grid;
  // Share of (replicate, grid point) cells without an estimate.
  double exclusion_fraction = 0.0;
  bool reliability_warning = false;

  // Per-grid-point breakdown, same order as `grid`.
  struct PointSummary {
    double mean_error = 0.0;
    double sd = 0.0;
    double mse = 0.0;
    double coverage = 0.0;
    std::size_t used = 0;
  };
  std::vector<PointSummary> per_point;
};

}  // namespace hetfx
