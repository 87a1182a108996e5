// SPDX-License-Identifier: Apache-2.0
/**
 * @file   random.hpp
 * @brief  Bit-reproducible random streams.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The standard distributions are implementation-defined, so the
 * uniform, normal and index draws below are written out explicitly:
 *   uniform  = (next() >> 11) · 2⁻⁵³                      in [0, 1)
 *   normal   = Box-Muller on two uniforms, cosine branch only
 *   index(n) = rejection sampling on next() to avoid modulo bias
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "specattn/linalg.hpp"

namespace specattn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }

  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  /// rows×cols matrix with i.i.d. N(0, std²) entries, filled row-major.
  Matrix gaussian(std::size_t rows, std::size_t cols, double std = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std * normal();
    return m;
  }

  /// Seed for a derived, independent stream (e.g. one per instance).
  static std::uint64_t derive(std::uint64_t base, std::uint64_t index) {
    // splitmix64 finalizer over base + golden-ratio stride
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace specattn
