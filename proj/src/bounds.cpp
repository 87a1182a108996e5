// SPDX-License-Identifier: Apache-2.0
/**
 * @file   bounds.cpp
 * @brief  Jacobian condition-number bound evaluation.
 */
#include "specattn/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "specattn/error.hpp"

namespace specattn {

double combine_bound(const BoundComponents& c) {
  const double kx3 = c.kappa_x * c.kappa_x * c.kappa_x;
  return kx3 * c.kappa_lambda_softmax * c.kappa_wv * (c.kappa_wq + c.kappa_wk) +
         c.kappa_x * c.kappa_softmax;
}

BoundComponents bound_components(const Matrix& x, const AttentionParams& p) {
  if (x.rows() < 2) {
    throw ConstraintError("bound: needs N >= 2 (Λ vanishes at N = 1)");
  }
  if (x.cols() != p.model_width()) {
    throw DimensionError("bound: input width does not match the weights");
  }
  const Matrix m = matmul_nt(matmul(x, p.w_q()), matmul(x, p.w_k()));
  BoundComponents c;
  c.kappa_x = spectral_record(x).kappa;
  c.kappa_lambda_softmax = spectral_record(softmax_rows_jacobian(m)).kappa_effective;
  c.kappa_softmax = spectral_record(softmax_rows(m)).kappa_effective;
  c.kappa_wq = spectral_record(p.w_q()).kappa;
  c.kappa_wk = spectral_record(p.w_k()).kappa;
  c.kappa_wv = spectral_record(p.w_v()).kappa;
  return c;
}

SpectralRecord batch_jacobian_record(std::span<const Matrix> xs, const AttentionParams& p,
                                     std::string tag) {
  if (xs.empty()) throw ConstraintError("batch_jacobian_record: empty batch");
  std::vector<Matrix> blocks;
  blocks.reserve(xs.size());
  for (const Matrix& x : xs) blocks.push_back(assemble_jacobian(x, p).stacked);
  return spectral_record(xs.size() == 1 ? blocks.front() : vstack(blocks), std::move(tag));
}

BoundReport evaluate_bound(const Matrix& x, const AttentionParams& p, std::string tag) {
  BoundReport r;
  r.tag = std::move(tag);
  r.components = bound_components(x, p);
  r.bound_value = combine_bound(r.components);

  const JacobianBlocks j = assemble_jacobian(x, p);
  const SpectralRecord jr = spectral_record(j.stacked);
  r.kappa_j = jr.kappa;
  r.kappa_j_effective = jr.kappa_effective;
  r.sigma_min_j = jr.sigma_min;
  r.sigma_max_j = jr.sigma_max;
  r.rank_j = jr.numerical_rank;
  r.full_rank = jr.numerical_rank == std::min(j.stacked.rows(), j.stacked.cols());
  r.inequality_checked = r.full_rank && std::isfinite(r.bound_value);
  r.inequality_holds = !r.inequality_checked || r.kappa_j <= r.bound_value;
  return r;
}

}  // namespace specattn
