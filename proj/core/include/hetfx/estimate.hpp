#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetfx/data.hpp"

namespace hetfx {

enum class Method { Psr, Ipw, Aipw, MatchPsr };

std::string_view to_string(Method m) noexcept;
// Accepts "psr", "ipw", "aipw", "match" and "match_psr".
Method parse_method(std::string_view name);

struct BandwidthRecord {
  std::optional<double> h1;
  std::optional<double> h2;
  double h3 = 0.0;
};

struct EstimateDiagnostics {
  // Fraction of Step-1 local fits that needed ridge regularisation.
  double regularized_fraction = 0.0;
  bool sparse_overlap = false;
  double score_min = 0.0;
  double score_max = 0.0;
  // Grid points whose variance could not be formed because f-hat underflowed.
  std::size_t density_underflow = 0;
  // Grid points with zero variance and therefore a zero-width band.
  std::size_t degenerate_bands = 0;
  bool propensity_separation = false;
  // Matching fell back to the Euclidean metric.
  bool euclidean_fallback = false;
  // Outcome-model fits (AIPW) that needed ridge regularisation.
  bool outcome_model_regularized = false;
};

/// Heterogeneous effect curve on a grid. Entries are std::nullopt where the
/// estimator could not produce a value (never filled in).
struct HteEstimate {
  EvaluationGrid grid;
  Method method = Method::Psr;
  std::vector<std::optional<double>> tau_hat;
  std::vector<std::optional<double>> variance;
  std::vector<std::optional<double>> ci_lo;
  std::vector<std::optional<double>> ci_hi;
  BandwidthRecord bandwidths;
  EstimateDiagnostics diagnostics;

  explicit HteEstimate(EvaluationGrid g, Method m = Method::Psr)
      : grid(std::move(g)), method(m), tau_hat(grid.size()) {}

  bool has_variance() const noexcept { return !variance.empty(); }
  bool has_band() const noexcept { return !ci_lo.empty(); }
};

}  // namespace hetfx
