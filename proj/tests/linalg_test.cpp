// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "specattn/error.hpp"
#include "specattn/linalg.hpp"
#include "specattn/random.hpp"

namespace {

using namespace specattn;

TEST(Vec, StacksColumns) {
  EXPECT_EQ(vec(Matrix{{1, 2}, {3, 4}}), (Matrix{{1}, {3}, {2}, {4}}));
  EXPECT_EQ(vec(Matrix{{5}}), (Matrix{{5}}));
  EXPECT_EQ(vec(Matrix{{1, 2, 3}}), (Matrix{{1}, {2}, {3}}));
}

TEST(Vec, UnvecInverts) {
  Rng rng(1);
  const Matrix a = rng.gaussian(3, 5);
  EXPECT_EQ(unvec(vec(a), 3, 5), a);
  EXPECT_EQ(vec(a), oracle::vec(a));
  EXPECT_THROW(unvec(vec(a), 4, 4), DimensionError);
}

TEST(Kron, IdentityGivesBlockDiagonal) {
  const Matrix b{{1, 2}, {3, 4}};
  const Matrix expect{{1, 2, 0, 0}, {3, 4, 0, 0}, {0, 0, 1, 2}, {0, 0, 3, 4}};
  EXPECT_EQ(kron(Matrix::identity(2), b), expect);
  EXPECT_EQ(kron(Matrix{{2}}, b), 2.0 * b);
}

TEST(Kron, MatchesIndexFormula) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = oracle::random_matrix(rng, 4);
    const Matrix b = oracle::random_matrix(rng, 4);
    EXPECT_EQ(kron(a, b), oracle::kron(a, b));
  }
}

TEST(Kron, VecIdentity) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 1 + rng.index(4), n = 1 + rng.index(4), p = 1 + rng.index(4);
    const std::size_t q = 1 + rng.index(4);
    const Matrix a = rng.gaussian(m, n), x = rng.gaussian(n, p), b = rng.gaussian(p, q);
    const Matrix lhs = vec(matmul(matmul(a, x), b));
    const Matrix rhs = matmul(kron(b.transpose(), a), vec(x));
    EXPECT_LE(max_abs_diff(lhs, rhs), 1e-12 * std::max(1.0, lhs.frobenius_norm()));
  }
}

TEST(Kron, RejectsOversizedProducts) {
  const Matrix a(4000, 1), b(4000, 1);
  EXPECT_THROW(kron(a, b), DimensionError);
}

TEST(Commutation, SmallCases) {
  const CommutationMatrix t(2, 2);
  ASSERT_EQ(t.dim(), 4u);
  EXPECT_EQ(t.source(0), 0u);
  EXPECT_EQ(t.source(1), 2u);
  EXPECT_EQ(t.source(2), 1u);
  EXPECT_EQ(t.source(3), 3u);
  EXPECT_EQ(CommutationMatrix(1, 5).dense(), Matrix::identity(5));
  EXPECT_EQ(CommutationMatrix(4, 1).dense(), Matrix::identity(4));
}

TEST(Commutation, TransposesAndInverts) {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = 1 + rng.index(6), n = 1 + rng.index(6);
    const Matrix a = rng.gaussian(m, n);
    const CommutationMatrix tmn(m, n), tnm(n, m);
    EXPECT_EQ(tmn.apply(vec(a)), vec(a.transpose()));
    EXPECT_EQ(matmul(tnm.dense(), tmn.dense()), Matrix::identity(m * n));
    EXPECT_EQ(tmn.dense().transpose(), tnm.dense());
    const Matrix r = rng.gaussian(3, m * n);
    EXPECT_EQ(tmn.right_multiply(r), matmul(r, tmn.dense()));
    const Matrix l = rng.gaussian(m * n, 2);
    EXPECT_EQ(tmn.left_multiply(l), matmul(tmn.dense(), l));
  }
}

TEST(Commutation, SwapsKroneckerFactors) {
  // T_{pm}·(A ⊗ B)·T_{nq} = B ⊗ A for A m×n, B p×q
  Rng rng(5);
  const Matrix a = rng.gaussian(2, 3), b = rng.gaussian(4, 2);
  const Matrix lhs =
      matmul(matmul(CommutationMatrix(4, 2).dense(), kron(a, b)), CommutationMatrix(3, 2).dense());
  EXPECT_LE(max_abs_diff(lhs, kron(b, a)), 0.0);
}

TEST(Svd, DiagonalInput) {
  const SvdResult r = svd(Matrix{{3, 0}, {0, 1}});
  ASSERT_EQ(r.s.size(), 2u);
  EXPECT_DOUBLE_EQ(r.s[0], 3.0);
  EXPECT_DOUBLE_EQ(r.s[1], 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(std::abs(r.u(i, i)), 1.0);
    EXPECT_DOUBLE_EQ(std::abs(r.vt(i, i)), 1.0);
  }
}

TEST(Svd, ZeroMatrix) {
  const SvdResult r = svd(Matrix(3, 2));
  for (double s : r.s) EXPECT_EQ(s, 0.0);
  EXPECT_LE(max_abs_diff(matmul_tn(r.u, r.u), Matrix::identity(3)), 1e-15);
}

Matrix reconstruct(const SvdResult& r, std::size_t m, std::size_t n) {
  Matrix s(m, n);
  for (std::size_t i = 0; i < r.s.size(); ++i) s(i, i) = r.s[i];
  return matmul(matmul(r.u, s), r.vt);
}

TEST(Svd, ReconstructsAndMatchesEigenOracle) {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const Matrix a = oracle::random_matrix(rng, 12);
    const SvdResult r = svd(a);
    const double scale = std::max(1.0, a.frobenius_norm());
    EXPECT_LE(max_abs_diff(reconstruct(r, a.rows(), a.cols()), a), 1e-12 * scale);
    EXPECT_LE(max_abs_diff(matmul_tn(r.u, r.u), Matrix::identity(a.rows())), 1e-12);
    EXPECT_LE(max_abs_diff(matmul_nt(r.vt, r.vt), Matrix::identity(a.cols())), 1e-12);
    EXPECT_TRUE(std::is_sorted(r.s.rbegin(), r.s.rend()));
    const auto ref = oracle::singular_values(a);
    for (std::size_t i = 0; i < r.s.size(); ++i)
      EXPECT_NEAR(r.s[i], ref[i], 1e-7 * r.s.front()) << "case " << t;
    const auto only = singular_values(a);
    for (std::size_t i = 0; i < r.s.size(); ++i) EXPECT_NEAR(only[i], r.s[i], 1e-12 * scale);
  }
}

TEST(Svd, RankDeficientAndTinyScales) {
  Rng rng(7);
  const Matrix u = rng.gaussian(6, 2), v = rng.gaussian(2, 5);
  const Matrix low = matmul(u, v);
  const SvdResult r = svd(low);
  EXPECT_LE(max_abs_diff(reconstruct(r, 6, 5), low), 1e-12 * low.frobenius_norm());
  EXPECT_LE(max_abs_diff(matmul_tn(r.u, r.u), Matrix::identity(6)), 1e-12);
  EXPECT_EQ(spectral_record(low).numerical_rank, 2u);

  Matrix tiny = 1e-200 * rng.gaussian(4, 3);
  const auto s = singular_values(tiny);
  const auto s_ref = singular_values(1e200 * tiny);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i] * 1e200, s_ref[i], 1e-12 * s_ref[0]);
}

TEST(SpectralRecord, Examples) {
  const SpectralRecord id = spectral_record(Matrix::identity(4));
  EXPECT_DOUBLE_EQ(id.sigma_min, 1.0);
  EXPECT_DOUBLE_EQ(id.sigma_max, 1.0);
  EXPECT_DOUBLE_EQ(id.kappa, 1.0);
  EXPECT_DOUBLE_EQ(spectral_record(Matrix{{10, 0}, {0, 2}}).kappa, 5.0);
}

TEST(SpectralRecord, SingularHasInfiniteRawKappa) {
  const SpectralRecord r = spectral_record(Matrix{{0.25, -0.25}, {-0.25, 0.25}});
  EXPECT_TRUE(std::isinf(r.kappa));
  EXPECT_DOUBLE_EQ(r.kappa_effective, 1.0);
  EXPECT_EQ(r.numerical_rank, 1u);
  const SpectralRecord z = spectral_record(Matrix(2, 3));
  EXPECT_TRUE(std::isinf(z.kappa));
  EXPECT_TRUE(std::isinf(z.kappa_effective));
  EXPECT_EQ(z.numerical_rank, 0u);
}

TEST(SpectralRecord, RectangularUsesMinDimension) {
  const SpectralRecord r = spectral_record(Matrix{{4, 0}, {0, 1}, {0, 0}});
  EXPECT_DOUBLE_EQ(r.sigma_min, 1.0);
  EXPECT_DOUBLE_EQ(r.kappa, 4.0);
  EXPECT_EQ(r.numerical_rank, 2u);
}

TEST(Matrix, RejectsNonFinite) {
  EXPECT_THROW(Matrix(1, 1, {std::numeric_limits<double>::quiet_NaN()}), NumericalError);
  EXPECT_THROW(Matrix(1, 2, {1.0}), DimensionError);
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

}  // namespace
