// SPDX-License-Identifier: Apache-2.0
/**
 * @file   attention.hpp
 * @brief  Single-head self-attention softmax(X·W_Q·W_Kᵀ·Xᵀ)·X·W_V, its
 *         analytic parameter Jacobians and a central-difference oracle.
 *
 * No 1/√d scaling is applied anywhere. Jacobians are ∂vec(A)/∂vec(W) with
 * column-major vec, so each block is (N·d)×(D·d).
 */
#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "specattn/linalg.hpp"

namespace specattn {

class CorrectionSet;

/// Query/key/value projections of one head, each D×d.
class AttentionParams {
 public:
  AttentionParams(Matrix w_q, Matrix w_k, Matrix w_v);

  const Matrix& w_q() const noexcept { return w_q_; }
  const Matrix& w_k() const noexcept { return w_k_; }
  const Matrix& w_v() const noexcept { return w_v_; }
  std::size_t model_width() const noexcept { return w_q_.rows(); }
  std::size_t head_width() const noexcept { return w_q_.cols(); }

  /// The weights actually used in the forward pass: W + C per role.
  AttentionParams corrected(const CorrectionSet& c) const;

 private:
  Matrix w_q_;
  Matrix w_k_;
  Matrix w_v_;
};

enum class Role { Q = 0, K = 1, V = 2 };

const char* role_name(Role r);

struct JacobianBlocks {
  Matrix a_q;
  Matrix a_k;
  Matrix a_v;
  Matrix stacked;  // [a_q; a_k; a_v], 3dN×dD
};

/// Dense Jacobians are only built while N·d and D·d stay within this cap.
inline constexpr std::size_t kMaxJacobianSide = 512;

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

/// Λ(z) = Diag(z) − z·zᵀ for a probability vector z.
Matrix lambda_op(std::span<const double> z);

/// ∂vec(softmax_rows(m))/∂vec(m) for square m, an N²×N² matrix built from the
/// per-row Λ blocks placed at column-major vec positions.
Matrix softmax_rows_jacobian(const Matrix& m);

/// Attention output N×d. With `c`, evaluates spectral conditioned attention
/// using W + C for each role.
Matrix attention_forward(const Matrix& x, const AttentionParams& p,
                         const CorrectionSet* c = nullptr);

Matrix jacobian_wq(const Matrix& x, const AttentionParams& p);
Matrix jacobian_wk(const Matrix& x, const AttentionParams& p);
Matrix jacobian_wv(const Matrix& x, const AttentionParams& p);
JacobianBlocks assemble_jacobian(const Matrix& x, const AttentionParams& p);

/// Central differences of vec(attention_forward) with respect to vec(W_role).
Matrix fd_jacobian(const Matrix& x, const AttentionParams& p, Role which,
                   double step = 1e-5);

}  // namespace specattn
