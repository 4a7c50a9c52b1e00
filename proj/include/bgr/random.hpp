#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "bgr/mat.hpp"

namespace bgr {

// Seeded generator whose draws depend only on the mt19937_64 stream, so
// sequences are reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Mat uniform_mat(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Mat m(rows, cols);
    for (auto& v : m.data()) v = uniform(lo, hi);
    return m;
  }

  Mat normal_mat(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Mat m(rows, cols);
    for (auto& v : m.data()) v = normal(0.0, stddev);
    return m;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bgr
