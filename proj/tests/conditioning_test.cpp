// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "specattn/conditioning.hpp"
#include "specattn/error.hpp"
#include "specattn/random.hpp"

namespace {

using namespace specattn;

TEST(SvdCap, DiagonalExample) {
  const Matrix w{{3, 0}, {0, 1}};
  const Matrix c = svd_cap_correction(w);
  EXPECT_LE(max_abs_diff(c, Matrix{{3, 0}, {0, 3}}), 1e-15);
  const SpectralRecord r = spectral_record(w + c);
  EXPECT_NEAR(r.sigma_max, 6.0, 1e-14);
  EXPECT_NEAR(r.sigma_min, 4.0, 1e-14);
  EXPECT_NEAR(r.kappa, 1.5, 1e-14);
}

TEST(SvdCap, ScaledIdentity) {
  const Matrix w = 2.5 * Matrix::identity(3);
  EXPECT_LE(max_abs_diff(svd_cap_correction(w), w), 1e-15);
  EXPECT_NEAR(spectral_record(w + svd_cap_correction(w)).kappa, 1.0, 1e-15);
}

TEST(SvdCap, ZeroInputIsDegenerate) {
  EXPECT_THROW(svd_cap_correction(Matrix(2, 3)), DegenerateInputError);
}

TEST(SvdCap, SpectrumShiftsBySigmaMax) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const Matrix w = oracle::random_matrix(rng, 16);
    const auto s = oracle::singular_values(w);
    const auto sc = oracle::singular_values(w + svd_cap_correction(w));
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(sc[i], s[i] + s[0], 1e-7 * s[0]);
    EXPECT_LE(spectral_record(w + svd_cap_correction(w)).kappa, 2.0 + 1e-9);
  }
}

TEST(DiagShift, Shapes) {
  EXPECT_EQ(diag_shift_correction(3, 2, 10.0), (Matrix{{10, 0}, {0, 10}, {0, 0}}));
  EXPECT_EQ(diag_shift_correction(2, 2, 2.0), 2.0 * Matrix::identity(2));
  EXPECT_EQ(diag_shift_correction(2, 4, 10.0), (Matrix{{10, 0, 0, 0}, {0, 10, 0, 0}}));
}

TEST(DiagShift, RejectsSmallLambda) {
  EXPECT_THROW(diag_shift_correction(2, 2, 1.5), ConstraintError);
  EXPECT_THROW(diag_shift_correction(2, 2, std::nan("")), ConstraintError);
}

TEST(ShiftPrecondition, Examples) {
  const ShiftPrecondition pre = shift_precondition_holds(Matrix{{4, 0}, {0, 1}}, 10.0);
  EXPECT_TRUE(pre.holds);
  EXPECT_DOUBLE_EQ(pre.lhs, 14.0 / 9.0);
  EXPECT_DOUBLE_EQ(pre.rhs, 4.0);
  const Matrix shifted = Matrix{{4, 0}, {0, 1}} + diag_shift_correction(2, 2, 10.0);
  EXPECT_NEAR(spectral_record(shifted).kappa, 14.0 / 11.0, 1e-15);

  const ShiftPrecondition id = shift_precondition_holds(Matrix::identity(3), 10.0);
  EXPECT_FALSE(id.holds);
  EXPECT_DOUBLE_EQ(id.rhs, 1.0);
  EXPECT_DOUBLE_EQ(id.lhs, 11.0 / 9.0);
}

TEST(ShiftPrecondition, UndefinedWhenLambdaBelowSigmaMin) {
  const ShiftPrecondition pre = shift_precondition_holds(20.0 * Matrix::identity(2), 10.0);
  EXPECT_FALSE(pre.holds);
  EXPECT_FALSE(pre.reason.empty());
}

TEST(ShiftPrecondition, SignedMatrixCounterexample) {
  // The precondition only sees singular values; a negative diagonal cancels.
  const Matrix w{{-9.9, 0}, {0, -1}};
  const ShiftPrecondition pre = shift_precondition_holds(w, 10.0);
  EXPECT_TRUE(pre.holds);
  EXPECT_NEAR(pre.lhs, 19.9 / 9.0, 1e-15);
  EXPECT_NEAR(pre.rhs, 9.9, 1e-15);
  const double after = spectral_record(w + diag_shift_correction(2, 2, 10.0)).kappa;
  EXPECT_NEAR(after, 90.0, 1e-9);
}

TEST(CorrectionSet, DiagonalShiftIsSharedAcrossRoles) {
  Rng rng(2);
  const AttentionParams p(rng.gaussian(4, 2), rng.gaussian(4, 2), rng.gaussian(4, 2));
  const CorrectionSet c = build_correction_set(p, CorrectionMode::diagonal_shift(10.0));
  const Matrix expect = diag_shift_correction(4, 2, 10.0);
  EXPECT_EQ(c.c_q(), expect);
  EXPECT_EQ(c.c_k(), expect);
  EXPECT_EQ(c.c_v(), expect);
  ASSERT_TRUE(c.diagnostics().has_value());
  EXPECT_TRUE(c.frozen());
}

TEST(CorrectionSet, SvdCapBoundsEveryRole) {
  Rng rng(3);
  Matrix wq(4, 2);
  wq(0, 0) = 3.0;
  wq(1, 1) = 1.0;
  const AttentionParams p(wq, rng.gaussian(4, 2), rng.gaussian(4, 2));
  const CorrectionSet c = build_correction_set(p, CorrectionMode::svd_cap());
  const AttentionParams pc = p.corrected(c);
  EXPECT_NEAR(spectral_record(pc.w_q()).kappa, 1.5, 1e-14);
  EXPECT_LE(spectral_record(pc.w_k()).kappa, 2.0 + 1e-12);
  EXPECT_LE(spectral_record(pc.w_v()).kappa, 2.0 + 1e-12);
  EXPECT_FALSE(c.diagnostics().has_value());
}

}  // namespace
