#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string_view>

namespace hetfx {

enum class KernelKind { Gaussian, Epanechnikov };

// Accepts "gauss"/"gaussian" and "epan"/"epanechnikov".
KernelKind parse_kernel(std::string_view name);
std::string_view to_string(KernelKind kind) noexcept;

/// Unscaled second-order kernel K(u). Epanechnikov is supported on |u| <= 1.
inline double kernel_eval(KernelKind kind, double u) noexcept {
  switch (kind) {
    case KernelKind::Gaussian:
      return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    case KernelKind::Epanechnikov:
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  }
  return 0.0;
}

/// Scaled kernel K_h(u) = K(u / h) / h.
inline double kernel_scaled(KernelKind kind, double u, double h) noexcept {
  return kernel_eval(kind, u / h) / h;
}

// Finite integration range of K. The Gaussian is cut where K(u) < 1e-31.
double kernel_support_radius(KernelKind kind) noexcept;

/// Constants entering the plug-in variance of the two-stage estimator.
///
/// `nu` is the roughness of K. `kbar_sq_integral` is the integral of the
/// squared convolution-type kernel Kbar(x) = int K(t) K(x + ratio * t) dt with
/// ratio = h1 / h3; when ratio is 0 Kbar reduces to K.
struct KernelConstants {
  double nu = 0.0;
  double kbar_sq_integral = 0.0;
  double ratio = 0.0;
};

KernelConstants kernel_constants(KernelKind kind, double h1, double h3);

// Same computation parameterised directly by h1 / h3; accepts ratio == 0.
KernelConstants kernel_constants_for_ratio(KernelKind kind, double ratio);

// Kbar(x) for the given ratio; exposed for tests and diagnostics.
double kbar(KernelKind kind, double ratio, double x);

/// Kernel density estimate (1 / (N h)) * sum_i K((x - s_i) / h).
double kde(std::span<const double> samples, double h, double x,
           KernelKind kind = KernelKind::Gaussian);

/// Silverman's rule 1.06 * sd * N^(-1/5), with the sample sd (divisor N - 1).
double silverman_bandwidth(std::span<const double> samples);

}  // namespace hetfx
