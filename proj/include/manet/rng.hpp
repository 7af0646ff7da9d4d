// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

#include "manet/common.hpp"

namespace manet {

// Deterministic random source. All distribution transforms are implemented
// here rather than with std::*_distribution so that streams are reproducible
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. The spare value is cached so one draw
  // consumes either two or zero engine outputs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Circularly symmetric complex normal with the given total variance,
  // i.e. real and imaginary parts are N(0, variance/2).
  std::complex<double> cnormal(double variance = 1.0) {
    const double s = std::sqrt(variance * 0.5);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  // Unbiased integer in [0, n) by rejection (Lemire-style bound check).
  std::uint64_t integer(std::uint64_t n) {
    require(n > 0, "Rng::integer: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t raw() { return engine_(); }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fisher-Yates shuffle driven by the deterministic source above.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.integer(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace manet
