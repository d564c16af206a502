#include "hetfx/kernel.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <numeric>
#include <string>

#include "hetfx/error.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {
namespace {

using Quadrature = boost::math::quadrature::gauss_kronrod<double, 31>;

constexpr double kRelTol = 1e-12;
constexpr unsigned kMaxDepth = 15;

template <typename F>
double integrate(F&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return Quadrature::integrate(f, a, b, kMaxDepth, kRelTol);
}

// Integrates over consecutive breakpoints so kinks never fall inside a panel.
template <typename F, std::size_t N>
double integrate_piecewise(F&& f, std::array<double, N> breaks) {
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < N; ++i) total += integrate(f, breaks[i], breaks[i + 1]);
  return total;
}

}  // namespace

double kernel_support_radius(KernelKind kind) noexcept {
  return kind == KernelKind::Epanechnikov ? 1.0 : 12.0;
}

double kbar(KernelKind kind, double ratio, double x) {
  if (ratio == 0.0) return kernel_eval(kind, x);
  const double radius = kernel_support_radius(kind);
  // Need |t| <= radius and |x + ratio * t| <= radius.
  const double lo = std::max(-radius, (-radius - x) / ratio);
  const double hi = std::min(radius, (radius - x) / ratio);
  return integrate([&](double t) { return kernel_eval(kind, t) * kernel_eval(kind, x + ratio * t); },
                   lo, hi);
}

KernelConstants kernel_constants_for_ratio(KernelKind kind, double ratio) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) {
    throw InvalidArgument("kernel_constants: bandwidth ratio must be finite and >= 0");
  }
  const double radius = kernel_support_radius(kind);
  KernelConstants out;
  out.ratio = ratio;
  out.nu = integrate_piecewise(
      [&](double t) {
        const double k = kernel_eval(kind, t);
        return k * k;
      },
      std::array{-radius, 0.0, radius});
  if (ratio == 0.0) {
    out.kbar_sq_integral = out.nu;
    return out;
  }
  const double outer = (1.0 + ratio) * radius;
  const double kink = std::abs(1.0 - ratio) * radius;
  out.kbar_sq_integral = integrate_piecewise(
      [&](double x) {
        const double k = kbar(kind, ratio, x);
        return k * k;
      },
      std::array{-outer, -kink, 0.0, kink, outer});
  return out;
}

KernelConstants kernel_constants(KernelKind kind, double h1, double h3) {
  if (!(h1 > 0.0) || !(h3 > 0.0)) {
    throw InvalidArgument("kernel_constants: bandwidths must be positive");
  }
  return kernel_constants_for_ratio(kind, h1 / h3);
}

double kde(std::span<const double> samples, double h, double x, KernelKind kind) {
  if (samples.empty()) throw InvalidArgument("kde: empty sample");
  if (!(h > 0.0)) throw InvalidArgument("kde: bandwidth must be positive");
  double sum = 0.0;
  for (double s : samples) sum += kernel_eval(kind, (x - s) / h);
  return sum / (static_cast<double>(samples.size()) * h);
}

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw InvalidArgument("bandwidth rule needs at least 2 observations");
  const double sd = sample_sd(samples);
  if (!(sd > 0.0)) throw InvalidArgument("bandwidth rule: regressor has zero variance");
  return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

KernelKind parse_kernel(std::string_view name) {
  if (name == "gauss" || name == "gaussian") return KernelKind::Gaussian;
  if (name == "epan" || name == "epanechnikov") return KernelKind::Epanechnikov;
  throw InvalidArgument("unknown kernel '" + std::string(name) + "'");
}

std::string_view to_string(KernelKind kind) noexcept {
  return kind == KernelKind::Gaussian ? "gauss" : "epan";
}

}  // namespace hetfx
