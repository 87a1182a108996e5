// SPDX-License-Identifier: Apache-2.0
/**
 * @file   attention.cpp
 * @brief  Self-attention forward pass and Kronecker-form parameter Jacobians.
 */
#include "specattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "specattn/conditioning.hpp"
#include "specattn/error.hpp"

namespace specattn {

namespace {

void require_conformable(const Matrix& x, const AttentionParams& p) {
  if (x.empty() || x.cols() != p.model_width()) {
    std::ostringstream os;
    os << "attention: input has " << x.cols() << " columns, weights expect "
       << p.model_width();
    throw DimensionError(os.str());
  }
}

void require_jacobian_size(const Matrix& x, const AttentionParams& p) {
  const std::size_t nd = x.rows() * p.head_width();
  const std::size_t dd = p.model_width() * p.head_width();
  if (nd > kMaxJacobianSide || dd > kMaxJacobianSide) {
    std::ostringstream os;
    os << "attention Jacobian of " << nd << "x" << dd
       << " exceeds the dense materialization cap of " << kMaxJacobianSide;
    throw DimensionError(os.str());
  }
}

Matrix scores(const Matrix& x, const AttentionParams& p) {
  // X·W_Q·(X·W_K)ᵀ
  return matmul_nt(matmul(x, p.w_q()), matmul(x, p.w_k()));
}

// Left factor shared by A_Q and A_K: W_Vᵀ·Xᵀ ⊗ I_N.
Matrix value_factor(const Matrix& x, const AttentionParams& p) {
  return kron(matmul(x, p.w_v()).transpose(), Matrix::identity(x.rows()));
}

}  // namespace

AttentionParams::AttentionParams(Matrix w_q, Matrix w_k, Matrix w_v)
    : w_q_(std::move(w_q)), w_k_(std::move(w_k)), w_v_(std::move(w_v)) {
  if (w_q_.empty() || w_q_.rows() != w_k_.rows() || w_q_.rows() != w_v_.rows() ||
      w_q_.cols() != w_k_.cols() || w_q_.cols() != w_v_.cols()) {
    throw DimensionError("AttentionParams: W_Q, W_K, W_V must share one D×d shape");
  }
}

AttentionParams AttentionParams::corrected(const CorrectionSet& c) const {
  return AttentionParams(w_q_ + c.correction(Role::Q), w_k_ + c.correction(Role::K),
                         w_v_ + c.correction(Role::V));
}

const char* role_name(Role r) {
  switch (r) {
    case Role::Q: return "q";
    case Role::K: return "k";
    case Role::V: return "v";
  }
  return "?";
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix lambda_op(std::span<const double> z) {
  Matrix out(z.size(), z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = 0; j < z.size(); ++j) out(i, j) = -z[i] * z[j];
    out(i, i) += z[i];
  }
  return out;
}

Matrix softmax_rows_jacobian(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("softmax_rows_jacobian: expects a square matrix");
  }
  const std::size_t n = m.rows();
  const Matrix s = softmax_rows(m);
  // ∂S(i, j)/∂M(i, k) = Λ(s_i)(j, k); vec position of (i, j) is j·n + i.
  Matrix jac(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix block = lambda_op(s.row(i));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) jac(j * n + i, k * n + i) = block(j, k);
  }
  return jac;
}

Matrix attention_forward(const Matrix& x, const AttentionParams& p, const CorrectionSet* c) {
  require_conformable(x, p);
  if (c != nullptr) return attention_forward(x, p.corrected(*c), nullptr);
  return matmul(softmax_rows(scores(x, p)), matmul(x, p.w_v()));
}

Matrix jacobian_wq(const Matrix& x, const AttentionParams& p) {
  require_conformable(x, p);
  require_jacobian_size(x, p);
  const Matrix left = value_factor(x, p);
  const Matrix middle = softmax_rows_jacobian(scores(x, p));
  const Matrix right = kron(matmul(x, p.w_k()), x);
  return matmul(matmul(left, middle), right);
}

Matrix jacobian_wk(const Matrix& x, const AttentionParams& p) {
  require_conformable(x, p);
  require_jacobian_size(x, p);
  const Matrix left = value_factor(x, p);
  const Matrix middle = softmax_rows_jacobian(scores(x, p));
  const Matrix right = kron(x, matmul(x, p.w_q()));
  const CommutationMatrix t(p.model_width(), p.head_width());
  return t.right_multiply(matmul(matmul(left, middle), right));
}

Matrix jacobian_wv(const Matrix& x, const AttentionParams& p) {
  require_conformable(x, p);
  require_jacobian_size(x, p);
  const Matrix weighted = matmul(softmax_rows(scores(x, p)), x);
  return kron(Matrix::identity(p.head_width()), weighted);
}

JacobianBlocks assemble_jacobian(const Matrix& x, const AttentionParams& p) {
  JacobianBlocks j;
  j.a_q = jacobian_wq(x, p);
  j.a_k = jacobian_wk(x, p);
  j.a_v = jacobian_wv(x, p);
  const Matrix blocks[] = {j.a_q, j.a_k, j.a_v};
  j.stacked = vstack(blocks);
  return j;
}

Matrix fd_jacobian(const Matrix& x, const AttentionParams& p, Role which, double step) {
  require_conformable(x, p);
  if (!(step > 0.0)) throw ConstraintError("fd_jacobian: step must be positive");
  const std::size_t big_d = p.model_width();
  const std::size_t d = p.head_width();
  const std::size_t out_len = x.rows() * d;
  Matrix jac(out_len, big_d * d);

  auto perturbed = [&](std::size_t r, std::size_t c, double delta) {
    Matrix w[3] = {p.w_q(), p.w_k(), p.w_v()};
    w[static_cast<int>(which)](r, c) += delta;
    return vec(attention_forward(x, AttentionParams(w[0], w[1], w[2])));
  };

  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < big_d; ++r) {
      const std::size_t col = c * big_d + r;  // vec position of W(r, c)
      const Matrix plus = perturbed(r, c, step);
      const Matrix minus = perturbed(r, c, -step);
      for (std::size_t i = 0; i < out_len; ++i)
        jac(i, col) = (plus(i, 0) - minus(i, 0)) / (2.0 * step);
    }
  }
  return jac;
}

}  // namespace specattn
