#pragma once

#include <cstdint>
#include <random>

namespace hetfx {

/// SplitMix64 finaliser. Seeds for replicate r (and for bootstrap resample b
/// inside a replicate) are derived as
///   derive_seed(master, r) = splitmix64(master + (r + 1) * 0x9E3779B97F4A7C15)
/// i.e. the (r + 1)-th output of a SplitMix64 stream started at `master`, so a
/// stream's seed depends only on (master, r) and never on scheduling.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

// mt19937_64 with portable variate generation (the std distributions are
// implementation-defined, these are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  // Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t index(std::uint64_t n) noexcept;

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace hetfx
