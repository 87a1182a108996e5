// SPDX-License-Identifier: Apache-2.0
/**
 * @file   oracles.hpp
 * @brief  Independent reference implementations used only by the tests.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "specattn/linalg.hpp"
#include "specattn/random.hpp"

namespace oracle {

using specattn::Matrix;

/// kron by the index formula (ip + k, jq + l) = a(i, j)·b(k, l).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

inline Matrix vec(const Matrix& a) {
  Matrix out(a.size(), 1);
  std::size_t r = 0;
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) out(r++, 0) = a(i, j);
  return out;
}

/// Eigenvalues of a symmetric matrix by the classical two-sided Jacobi method,
/// sorted non-increasing.
inline std::vector<double> symmetric_eigenvalues(Matrix s) {
  const std::size_t n = s.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (off < 1e-30 * std::max(1.0, s.frobenius_norm() * s.frobenius_norm())) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (s(p, q) == 0.0) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double skp = s(k, p), skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double spk = s(p, k), sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = s(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Singular values as square roots of the eigenvalues of the smaller Gram
/// matrix. Accurate to about √ε·σ_max for the smallest values.
inline std::vector<double> singular_values(const Matrix& a) {
  const Matrix g = a.rows() >= a.cols() ? specattn::matmul_tn(a, a) : specattn::matmul_nt(a, a);
  std::vector<double> ev = symmetric_eigenvalues(g);
  for (double& v : ev) v = std::sqrt(std::max(v, 0.0));
  return ev;
}

inline Matrix random_matrix(specattn::Rng& rng, std::size_t max_side) {
  const std::size_t r = 1 + rng.index(max_side);
  const std::size_t c = 1 + rng.index(max_side);
  return rng.gaussian(r, c);
}

}  // namespace oracle
