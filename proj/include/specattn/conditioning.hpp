// SPDX-License-Identifier: Apache-2.0
/**
 * @file   conditioning.hpp
 * @brief  Frozen correction matrices C_Q, C_K, C_V for spectral conditioned
 *         attention.
 *
 * Two constructions are provided:
 *  - SvdCap: C = U·S̄·Vᵀ with σ_max(W) on the diagonal of S̄, giving
 *    κ(W + C) = 2σ_max / (σ_min + σ_max) ≤ 2.
 *  - DiagonalShift: C = λ·I_k (ones on the leading min(D, d) diagonal),
 *    which needs no SVD.
 * Corrections are built once from the initial weights and never change.
 */
#pragma once

#include <array>
#include <optional>
#include <string>

#include "specattn/attention.hpp"
#include "specattn/linalg.hpp"

namespace specattn {

inline constexpr double kDefaultShift = 10.0;
inline constexpr double kMinShift = 2.0;

enum class CorrectionKind { SvdCap, DiagonalShift };

struct CorrectionMode {
  CorrectionKind kind = CorrectionKind::DiagonalShift;
  double lambda = kDefaultShift;  // used by DiagonalShift only

  static CorrectionMode svd_cap() { return {CorrectionKind::SvdCap, 0.0}; }
  static CorrectionMode diagonal_shift(double lambda = kDefaultShift) {
    return {CorrectionKind::DiagonalShift, lambda};
  }
  std::string describe() const;
};

/// Diagnostic for the shift hypothesis
///   (σ_max + λ)/(λ − σ_min) ≤ σ_max/σ_min.
struct ShiftPrecondition {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double lambda = 0.0;
  std::string reason;  // non-empty when the left-hand side is undefined
};

Matrix svd_cap_correction(const Matrix& w);
Matrix diag_shift_correction(std::size_t rows, std::size_t cols, double lambda);
ShiftPrecondition shift_precondition_holds(const Matrix& w, double lambda);

class CorrectionSet {
 public:
  const Matrix& correction(Role r) const { return c_[static_cast<int>(r)]; }
  const Matrix& c_q() const noexcept { return c_[0]; }
  const Matrix& c_k() const noexcept { return c_[1]; }
  const Matrix& c_v() const noexcept { return c_[2]; }
  const CorrectionMode& mode() const noexcept { return mode_; }
  /// Always true: there is no mutating interface.
  bool frozen() const noexcept { return true; }
  /// Present for DiagonalShift sets, one per role.
  const std::optional<std::array<ShiftPrecondition, 3>>& diagnostics() const noexcept {
    return diagnostics_;
  }

  bool operator==(const CorrectionSet& other) const {
    return c_ == other.c_ && mode_.kind == other.mode_.kind &&
           mode_.lambda == other.mode_.lambda;
  }

  friend CorrectionSet build_correction_set(const AttentionParams& p, CorrectionMode mode);
  /// All-zero corrections of the given shape; the C = 0 identity.
  static CorrectionSet zeros(std::size_t rows, std::size_t cols);

 private:
  CorrectionSet(std::array<Matrix, 3> c, CorrectionMode mode)
      : c_(std::move(c)), mode_(mode) {}

  std::array<Matrix, 3> c_;
  CorrectionMode mode_;
  std::optional<std::array<ShiftPrecondition, 3>> diagnostics_;
};

/// Builds the per-role corrections from the (initial) weights in `p`.
CorrectionSet build_correction_set(const AttentionParams& p, CorrectionMode mode);

}  // namespace specattn
