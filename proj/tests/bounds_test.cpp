// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "specattn/bounds.hpp"
#include "specattn/error.hpp"
#include "specattn/random.hpp"

namespace {

using namespace specattn;

AttentionParams random_params(Rng& rng, std::size_t big_d, std::size_t d, double scale = 1.0) {
  const double std = scale / std::sqrt(static_cast<double>(big_d));
  return AttentionParams(rng.gaussian(big_d, d, std), rng.gaussian(big_d, d, std),
                         rng.gaussian(big_d, d, std));
}

TEST(CombineBound, Arithmetic) {
  BoundComponents c;
  c.kappa_x = 2.0;
  c.kappa_lambda_softmax = 3.0;
  c.kappa_wq = 1.5;
  c.kappa_wk = 2.5;
  c.kappa_wv = 4.0;
  c.kappa_softmax = 5.0;
  EXPECT_DOUBLE_EQ(combine_bound(c), 8.0 * 3.0 * 4.0 * 4.0 + 2.0 * 5.0);
}

TEST(Bound, IdentityInputHolds) {
  Rng rng(1);
  const BoundReport r = evaluate_bound(Matrix::identity(2), random_params(rng, 2, 2));
  EXPECT_TRUE(std::isfinite(r.bound_value));
  EXPECT_DOUBLE_EQ(r.components.kappa_x, 1.0);
  if (r.full_rank) {
    EXPECT_LE(r.kappa_j, r.bound_value);
  }
  EXPECT_TRUE(r.inequality_holds);
}

TEST(Bound, NearUniformSoftmaxHolds) {
  Rng rng(2);
  for (double scale : {1e-1, 1e-2, 1e-3}) {
    const AttentionParams base = random_params(rng, 3, 2);
    const AttentionParams p(scale * base.w_q(), scale * base.w_k(), base.w_v());
    const BoundReport r = evaluate_bound(rng.gaussian(3, 3), p);
    EXPECT_TRUE(std::isfinite(r.bound_value));
    EXPECT_TRUE(std::isfinite(r.kappa_j_effective));
    EXPECT_TRUE(r.inequality_holds);
  }
}

TEST(Bound, DuplicateRowsSuppressCheck) {
  Rng rng(3);
  Matrix x = rng.gaussian(3, 3);
  for (std::size_t j = 0; j < 3; ++j) x(1, j) = x(0, j);
  const BoundReport r = evaluate_bound(x, random_params(rng, 3, 2));
  EXPECT_TRUE(std::isinf(r.components.kappa_x));
  EXPECT_FALSE(r.inequality_checked);
  EXPECT_TRUE(r.inequality_holds);
}

TEST(Bound, EffectiveKappaWithinBoundOnRandomInstances) {
  Rng rng(4);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(5), big_d = 1 + rng.index(6), d = 1 + rng.index(4);
    const BoundReport r = evaluate_bound(rng.gaussian(n, big_d), random_params(rng, big_d, d));
    if (!r.full_rank || !std::isfinite(r.bound_value)) continue;
    ++checked;
    EXPECT_LE(r.kappa_j_effective, r.bound_value);
    EXPECT_DOUBLE_EQ(combine_bound(r.components), r.bound_value);
  }
  EXPECT_GT(checked, 20);
}

TEST(Bound, RequiresTwoTokens) {
  Rng rng(5);
  EXPECT_THROW(evaluate_bound(rng.gaussian(1, 3), random_params(rng, 3, 2)), ConstraintError);
  EXPECT_THROW(bound_components(rng.gaussian(3, 4), random_params(rng, 3, 2)), DimensionError);
}

TEST(BatchJacobian, SingleSequenceEqualsStacked) {
  Rng rng(6);
  const AttentionParams p = random_params(rng, 4, 2);
  const Matrix x = rng.gaussian(3, 4);
  const Matrix xs[] = {x};
  const SpectralRecord batch = batch_jacobian_record(xs, p);
  const SpectralRecord single = spectral_record(assemble_jacobian(x, p).stacked);
  EXPECT_DOUBLE_EQ(batch.sigma_max, single.sigma_max);
  EXPECT_EQ(batch.numerical_rank, single.numerical_rank);
  EXPECT_THROW(batch_jacobian_record(std::span<const Matrix>{}, p), ConstraintError);
}

TEST(BatchJacobian, MoreSequencesReachFullRank) {
  // One sequence with N < D cannot give full column rank: J depends on W only
  // through X·W. Stacking sequences removes that restriction.
  Rng rng(7);
  const AttentionParams p = random_params(rng, 6, 2);
  std::vector<Matrix> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(rng.gaussian(3, 6));
  const SpectralRecord one = batch_jacobian_record(std::span<const Matrix>(xs).first(1), p);
  const SpectralRecord all = batch_jacobian_record(xs, p);
  EXPECT_LT(one.numerical_rank, 12u);
  EXPECT_EQ(all.numerical_rank, 12u);
}

}  // namespace
