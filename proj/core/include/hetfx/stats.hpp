#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace hetfx {

// Neumaier-compensated running sum. Used wherever aggregates must not depend
// on how many terms were folded in before.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double mean(std::span<const double> v);

// Sample standard deviation, divisor n - 1.
double sample_sd(std::span<const double> v);

// Linear-interpolation quantile (the "type 7" definition), q in [0, 1].
double quantile(std::span<const double> v, double q);

}  // namespace hetfx
