// SPDX-License-Identifier: Apache-2.0
/**
 * @file   linalg.hpp
 * @brief  Dense double-precision kernel: vec/Kronecker calculus, commutation
 *         permutations, one-sided Jacobi SVD and condition numbers.
 *
 * vec() is column-major stacking everywhere in this library. Every Kronecker
 * formula in attention.hpp relies on that convention.
 */
#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace specattn {

/// Dense row-major matrix. Entries are always finite.
class Matrix {
 public:
  Matrix() = default;
  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of row-major `data`; throws on size mismatch or
  /// non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  /// Diagonal matrix with `diag` on its main diagonal.
  static Matrix diagonal(std::span<const double> diag);
  /// Column vector holding `values`.
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  Matrix transpose() const;
  double frobenius_norm() const;
  bool all_zero() const;
  /// Throws NumericalError naming `context` if any entry is NaN or Inf.
  void require_finite(const char* context) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  /// Bitwise equality of shape and entries.
  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
/// Dense product; throws DimensionError when inner sizes differ.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Vertical concatenation; all blocks share a column count.
Matrix vstack(std::span<const Matrix> blocks);
/// Horizontal concatenation; all blocks share a row count.
Matrix hstack(std::span<const Matrix> blocks);

/// Relative Frobenius distance ‖a − b‖ / max(‖b‖, floor).
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-300);
double max_abs_diff(const Matrix& a, const Matrix& b);

// --- vectorization calculus -------------------------------------------------

/// Column-major stacking: out(j·rows + i) = a(i, j).
Matrix vec(const Matrix& a);
/// Inverse of vec for a column vector of length rows·cols.
Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols);

/// Largest dense Kronecker product kron() will materialize.
inline constexpr std::size_t kMaxKronEntries = 10'000'000;

/// Block (i, j) of the result is a(i, j)·b.
Matrix kron(const Matrix& a, const Matrix& b);

/// The commutation matrix T_{mn}, stored as a permutation: for every m×n A,
/// T·vec(A) = vec(Aᵀ). Row r of T has its single 1 in column source(r).
class CommutationMatrix {
 public:
  CommutationMatrix(std::size_t m, std::size_t n);

  std::size_t m() const noexcept { return m_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t dim() const noexcept { return source_.size(); }
  std::size_t source(std::size_t r) const { return source_[r]; }

  /// T·v for a column vector v of length m·n.
  Matrix apply(const Matrix& v) const;
  /// a·T, i.e. a column permutation of `a` (a has m·n columns).
  Matrix right_multiply(const Matrix& a) const;
  /// T·a, i.e. a row permutation of `a` (a has m·n rows).
  Matrix left_multiply(const Matrix& a) const;
  /// Dense form, for tests and small dimensions only.
  Matrix dense() const;

 private:
  std::size_t m_;
  std::size_t n_;
  std::vector<std::size_t> source_;
};

// --- SVD and conditioning ---------------------------------------------------

struct SvdResult {
  Matrix u;                  // m×m orthogonal
  std::vector<double> s;     // min(m, n) values, non-increasing
  Matrix vt;                 // n×n orthogonal, Vᵀ
};

/// Relative threshold below which a Jacobi rotation is skipped.
inline constexpr double kJacobiTolerance = 1e-14;
inline constexpr int kJacobiMaxSweeps = 60;

/// Full SVD by one-sided cyclic Jacobi. Deterministic for a fixed input.
/// Throws NumericalError (carrying the last off-diagonal residual) when the
/// sweep cap is reached.
SvdResult svd(const Matrix& a);
/// Singular values only; skips accumulating V and completing U.
std::vector<double> singular_values(const Matrix& a);

/// Numerical rank tolerance max(m, n)·σ_max·2⁻⁵²·16.
double rank_tolerance(std::size_t rows, std::size_t cols, double sigma_max);

struct SpectralRecord {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  /// σ_max / σ_min, or +inf when σ_min is at or below the rank tolerance.
  double kappa = std::numeric_limits<double>::infinity();
  /// σ_max over the smallest singular value above the rank tolerance; +inf
  /// only for a zero matrix.
  double kappa_effective = std::numeric_limits<double>::infinity();
  std::size_t numerical_rank = 0;
  std::string tag;
};

SpectralRecord spectral_record(const Matrix& a, std::string tag = {});
/// Same computation from an already known spectrum of an rows×cols matrix.
SpectralRecord spectral_record_from_values(std::span<const double> s,
                                           std::size_t rows, std::size_t cols,
                                           std::string tag = {});

}  // namespace specattn
