#pragma once

namespace hetfx {

double normal_pdf(double x) noexcept;
double normal_cdf(double x) noexcept;

/// Inverse standard normal CDF for p in (0, 1). Rational initial guess refined
/// by Halley steps; absolute error well below 1e-12 over (1e-300, 1 - 1e-16).
double normal_quantile(double p);

}  // namespace hetfx
