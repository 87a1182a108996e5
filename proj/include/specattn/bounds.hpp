// SPDX-License-Identifier: Apache-2.0
/**
 * @file   bounds.hpp
 * @brief  Upper bound on the condition number of the stacked attention
 *         Jacobian in terms of κ(X), κ(Λ(softmax)), κ(softmax) and the
 *         projection condition numbers:
 *
 *   κ(J) ≤ κ(X)³·κ(Λ)·κ(W_V)·(κ(W_Q) + κ(W_K)) + κ(X)·κ(softmax)
 *
 * Λ(softmax) always annihilates the all-ones direction and is therefore
 * singular; its factor (and the softmax factor) use the effective condition
 * number. X and the projections use the raw κ.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "specattn/attention.hpp"
#include "specattn/linalg.hpp"

namespace specattn {

struct BoundComponents {
  double kappa_x = 0.0;
  double kappa_lambda_softmax = 0.0;  // effective
  double kappa_wq = 0.0;
  double kappa_wk = 0.0;
  double kappa_wv = 0.0;
  double kappa_softmax = 0.0;  // effective
};

/// The bound's arithmetic. Used both to fill BoundReport::bound_value and to
/// recompute it from logged components.
double combine_bound(const BoundComponents& c);

struct BoundReport {
  double kappa_j = 0.0;            // raw, +inf when J is rank deficient
  double kappa_j_effective = 0.0;
  double sigma_min_j = 0.0;
  double sigma_max_j = 0.0;
  std::size_t rank_j = 0;
  double bound_value = 0.0;
  BoundComponents components;
  bool full_rank = false;
  /// True when full_rank and bound_value is finite, i.e. the inequality applies.
  bool inequality_checked = false;
  /// kappa_j ≤ bound_value; vacuously true when not checked.
  bool inequality_holds = true;
  std::string tag;
};

/// Every factor of the bound for one head (no Jacobian). Requires N ≥ 2.
BoundComponents bound_components(const Matrix& x, const AttentionParams& p);

/// Spectral record of the Jacobian of the attention outputs over a batch of
/// sequences w.r.t. (W_Q, W_K, W_V): the per-sequence stacked Jacobians
/// concatenated vertically.
SpectralRecord batch_jacobian_record(std::span<const Matrix> xs, const AttentionParams& p,
                                     std::string tag = {});

/// Evaluates both sides of the bound for one head. Requires N ≥ 2.
BoundReport evaluate_bound(const Matrix& x, const AttentionParams& p, std::string tag = {});

}  // namespace specattn
