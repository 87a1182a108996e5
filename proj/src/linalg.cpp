// SPDX-License-Identifier: Apache-2.0
/**
 * @file   linalg.cpp
 * @brief  Dense matrix kernel and one-sided Jacobi SVD.
 */
#include "specattn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "specattn/error.hpp"

namespace specattn {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    std::ostringstream os;
    os << "matrix dimensions must be positive, got " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
  }
}

}  // namespace

// --- Matrix -----------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols) {
  require_positive(rows, cols);
  data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "matrix data has " << data_.size() << " entries, expected "
       << rows * cols;
    throw DimensionError(os.str());
  }
  require_finite("Matrix construction");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  require_positive(rows_, cols_);
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite("Matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  m.require_finite("Matrix::diagonal");
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::frobenius_norm() const {
  // Scaled accumulation so that huge or tiny entries do not over/underflow.
  double scale = 0.0;
  for (double v : data_) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double v : data_) {
    const double r = v / scale;
    sum += r * r;
  }
  return scale * std::sqrt(sum);
}

bool Matrix::all_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
}

void Matrix::require_finite(const char* context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(context) + ": non-finite entry");
    }
  }
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  require_finite("operator+");
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  require_finite("operator-");
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  require_finite("operator*");
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a) + " times " + shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  c.require_finite("matmul");
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + shape_str(a) + "ᵀ times " + shape_str(b));
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.data().data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* crow = c.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  c.require_finite("matmul_tn");
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_str(a) + " times " + shape_str(b) + "ᵀ");
  }
  Matrix c(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data().data() + i * inner;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data().data() + j * inner;
      double sum = 0.0;
      for (std::size_t k = 0; k < inner; ++k) sum += arow[k] * brow[k];
      c(i, j) = sum;
    }
  }
  c.require_finite("matmul_nt");
  return c;
}

Matrix vstack(std::span<const Matrix> blocks) {
  if (blocks.empty()) throw DimensionError("vstack: no blocks");
  std::size_t rows = 0;
  const std::size_t cols = blocks.front().cols();
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw DimensionError("vstack: column count mismatch");
    rows += b.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + offset);
    offset += b.size();
  }
  return out;
}

Matrix hstack(std::span<const Matrix> blocks) {
  if (blocks.empty()) throw DimensionError("hstack: no blocks");
  std::size_t cols = 0;
  const std::size_t rows = blocks.front().rows();
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw DimensionError("hstack: row count mismatch");
    cols += b.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
    offset += b.cols();
  }
  return out;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  require_same_shape(a, b, "relative_error");
  Matrix diff(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) diff.data()[i] = a.data()[i] - b.data()[i];
  return diff.frobenius_norm() / std::max(b.frobenius_norm(), floor);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

// --- vectorization ----------------------------------------------------------

Matrix vec(const Matrix& a) {
  Matrix v(a.size(), 1);
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) v(j * a.rows() + i, 0) = a(i, j);
  return v;
}

Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols) {
  if (v.cols() != 1 || v.rows() != rows * cols) {
    throw DimensionError("unvec: expected a column of length " +
                         std::to_string(rows * cols) + ", got " + shape_str(v));
  }
  Matrix a(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) a(i, j) = v(j * rows + i, 0);
  return a;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (rows != 0 && cols > kMaxKronEntries / rows) {
    std::ostringstream os;
    os << "kron: " << rows << "x" << cols << " product exceeds the "
       << kMaxKronEntries << "-entry cap";
    throw DimensionError(os.str());
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (std::size_t p = 0; p < b.rows(); ++p) {
        double* dst = &out(i * b.rows() + p, j * b.cols());
        for (std::size_t q = 0; q < b.cols(); ++q) dst[q] = aij * b(p, q);
      }
    }
  }
  out.require_finite("kron");
  return out;
}

// --- commutation ------------------------------------------------------------

CommutationMatrix::CommutationMatrix(std::size_t m, std::size_t n) : m_(m), n_(n) {
  if (m == 0 || n == 0) throw DimensionError("commutation matrix needs m, n >= 1");
  source_.resize(m * n);
  // vec(Aᵀ)[i·n + j] = Aᵀ(j, i) = A(i, j) = vec(A)[j·m + i]
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) source_[i * n + j] = j * m + i;
}

Matrix CommutationMatrix::apply(const Matrix& v) const {
  if (v.cols() != 1 || v.rows() != dim()) {
    throw DimensionError("CommutationMatrix::apply: expected a column of length " +
                         std::to_string(dim()));
  }
  return left_multiply(v);
}

Matrix CommutationMatrix::left_multiply(const Matrix& a) const {
  if (a.rows() != dim()) {
    throw DimensionError("CommutationMatrix::left_multiply: row count mismatch");
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < dim(); ++r) {
    const auto src = a.row(source_[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix CommutationMatrix::right_multiply(const Matrix& a) const {
  if (a.cols() != dim()) {
    throw DimensionError("CommutationMatrix::right_multiply: column count mismatch");
  }
  // (a·T)(:, source(r)) = a(:, r)
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t r = 0; r < dim(); ++r) out(i, source_[r]) = a(i, r);
  return out;
}

Matrix CommutationMatrix::dense() const {
  Matrix t(dim(), dim());
  for (std::size_t r = 0; r < dim(); ++r) t(r, source_[r]) = 1.0;
  return t;
}

// --- SVD --------------------------------------------------------------------

namespace {

struct JacobiState {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> w;  // column-major m×n, columns become U·Σ
  std::vector<double> v;  // column-major n×n, empty when not requested
  int exponent = 0;       // w holds A·2^-exponent
  double negligible = 0;  // column norm below which rotations stop, scaled units
};

double column_norm(const double* col, std::size_t m) {
  double scale = 0.0;
  for (std::size_t k = 0; k < m; ++k) scale = std::max(scale, std::abs(col[k]));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double r = col[k] / scale;
    sum += r * r;
  }
  return scale * std::sqrt(sum);
}

// Orthogonalizes the columns of a tall (m >= n) matrix by cyclic rotations.
JacobiState jacobi_sweeps(const Matrix& a, bool want_v) {
  JacobiState st;
  st.m = a.rows();
  st.n = a.cols();
  const std::size_t m = st.m;
  const std::size_t n = st.n;
  st.w.resize(m * n);
  double max_abs = 0.0;
  for (double x : a.data()) max_abs = std::max(max_abs, std::abs(x));
  // Power-of-two scaling keeps tiny inputs clear of underflow in the inner products.
  if (max_abs > 0.0) st.exponent = std::ilogb(max_abs);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) st.w[j * m + i] = std::scalbn(a(i, j), -st.exponent);
  if (want_v) {
    st.v.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) st.v[j * n + j] = 1.0;
  }

  // Columns at rounding-noise level never settle under the relative test.
  st.negligible = std::numeric_limits<double>::epsilon() * column_norm(st.w.data(), m * n);
  const double negligible = st.negligible;
  const double negligible_sq = negligible * negligible;
  double residual = 0.0;
  for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
    bool rotated = false;
    residual = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* wp = st.w.data() + p * m;
      for (std::size_t q = p + 1; q < n; ++q) {
        double* wq = st.w.data() + q * m;
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += wp[k] * wp[k];
          beta += wq[k] * wq[k];
          gamma += wp[k] * wq[k];
        }
        if (alpha <= negligible_sq || beta <= negligible_sq || gamma == 0.0) continue;
        const double off = std::abs(gamma) / (std::sqrt(alpha) * std::sqrt(beta));
        residual = std::max(residual, off);
        if (off <= kJacobiTolerance) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double x = wp[k];
          const double y = wq[k];
          wp[k] = c * x - s * y;
          wq[k] = s * x + c * y;
        }
        if (want_v) {
          double* vp = st.v.data() + p * n;
          double* vq = st.v.data() + q * n;
          for (std::size_t k = 0; k < n; ++k) {
            const double x = vp[k];
            const double y = vq[k];
            vp[k] = c * x - s * y;
            vq[k] = s * x + c * y;
          }
        }
      }
    }
    if (!rotated) return st;
  }
  throw NumericalError("svd: one-sided Jacobi did not converge in " +
                           std::to_string(kJacobiMaxSweeps) + " sweeps",
                       residual);
}

// Descending by value; ties keep their original order.
std::vector<std::size_t> descending_order(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  JacobiState st = jacobi_sweeps(a, true);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = column_norm(st.w.data() + j * m, m);
  const auto order = descending_order(norms);

  SvdResult r;
  r.s.resize(n);
  // u columns are gathered column-major, then completed to an orthonormal basis.
  std::vector<std::vector<double>> ucols;
  std::vector<bool> filled(m, false);
  ucols.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    r.s[k] = std::scalbn(norms[j], st.exponent);
    // Negligible columns are not orthogonalized; their u comes from completion.
    if (norms[j] > st.negligible) {
      const double* col = st.w.data() + j * m;
      for (std::size_t i = 0; i < m; ++i) ucols[k][i] = col[i] / norms[j];
      filled[k] = true;
    }
  }

  // Complete with the standard basis vector of largest residual after
  // Gram-Schmidt (applied twice); that residual is at least 1/sqrt(m).
  const auto residual = [&](std::size_t e) {
    std::vector<double> cand(m, 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t o = 0; o < m; ++o) {
        if (!filled[o]) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += ucols[o][i] * cand[i];
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * ucols[o][i];
      }
    }
    return cand;
  };
  for (std::size_t k = 0; k < m; ++k) {
    if (filled[k]) continue;
    std::vector<double> best;
    double best_norm = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
      auto cand = residual(e);
      const double nrm = column_norm(cand.data(), m);
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    if (!(best_norm > 0.0)) throw NumericalError("svd: failed to complete the left basis");
    for (std::size_t i = 0; i < m; ++i) ucols[k][i] = best[i] / best_norm;
    filled[k] = true;
  }

  r.u = Matrix(m, m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < m; ++i) r.u(i, k) = ucols[k][i];
  r.vt = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double* vcol = st.v.data() + order[k] * n;
    for (std::size_t i = 0; i < n; ++i) r.vt(k, i) = vcol[i];
  }
  return r;
}

// R factor (n×n, upper triangular) of A·P = Q·R by Householder reflections
// with column pivoting on the largest remaining column norm. A is m×n, m ≥ n.
Matrix pivoted_qr_r(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> w(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) w[j * m + i] = a(i, j);

  std::vector<double> v(m);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = -1.0;
    for (std::size_t j = k; j < n; ++j) {
      const double nrm = column_norm(w.data() + j * m + k, m - k);
      if (nrm > best) {
        best = nrm;
        pivot = j;
      }
    }
    if (pivot != k) {
      std::swap_ranges(w.begin() + k * m, w.begin() + (k + 1) * m, w.begin() + pivot * m);
    }
    double* col = w.data() + k * m;
    const double xnorm = column_norm(col + k, m - k);
    if (xnorm == 0.0) continue;
    const double alpha = col[k] > 0.0 ? -xnorm : xnorm;
    for (std::size_t i = k; i < m; ++i) v[i] = col[i];
    v[k] -= alpha;
    double vv = 0.0;
    for (std::size_t i = k; i < m; ++i) vv += v[i] * v[i];
    if (vv > 0.0) {
      for (std::size_t j = k + 1; j < n; ++j) {
        double* wj = w.data() + j * m;
        double dot = 0.0;
        for (std::size_t i = k; i < m; ++i) dot += v[i] * wj[i];
        const double f = 2.0 * dot / vv;
        for (std::size_t i = k; i < m; ++i) wj[i] -= f * v[i];
      }
    }
    col[k] = alpha;
    for (std::size_t i = k + 1; i < m; ++i) col[i] = 0.0;
  }

  Matrix r(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i <= j; ++i) r(i, j) = w[j * m + i];
  return r;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  a.require_finite("svd input");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(a.transpose());
  // aᵀ = U S Vᵀ  =>  a = V S Uᵀ
  return SvdResult{t.vt.transpose(), std::move(t.s), t.u.transpose()};
}

std::vector<double> singular_values(const Matrix& a) {
  a.require_finite("singular_values input");
  Matrix tall = a.rows() >= a.cols() ? a : a.transpose();
  double max_abs = 0.0;
  for (double x : tall.data()) max_abs = std::max(max_abs, std::abs(x));
  const int exponent = max_abs > 0.0 ? std::ilogb(max_abs) : 0;
  for (double& x : tall.data()) x = std::scalbn(x, -exponent);
  // Jacobi on Rᵀ from A·P = Q·R converges in far fewer sweeps than on A,
  // especially for rank-deficient inputs.
  const JacobiState st = jacobi_sweeps(pivoted_qr_r(tall).transpose(), false);
  std::vector<double> s(st.n);
  for (std::size_t j = 0; j < st.n; ++j)
    s[j] = std::scalbn(column_norm(st.w.data() + j * st.m, st.m), st.exponent + exponent);
  std::stable_sort(s.begin(), s.end(), std::greater<>());
  return s;
}

double rank_tolerance(std::size_t rows, std::size_t cols, double sigma_max) {
  constexpr double kEps = 0x1p-52;
  return static_cast<double>(std::max(rows, cols)) * sigma_max * kEps * 16.0;
}

SpectralRecord spectral_record_from_values(std::span<const double> s, std::size_t rows,
                                           std::size_t cols, std::string tag) {
  SpectralRecord rec;
  rec.tag = std::move(tag);
  if (s.empty()) return rec;
  rec.sigma_max = s.front();
  rec.sigma_min = s.back();
  const double tau = rank_tolerance(rows, cols, rec.sigma_max);
  rec.numerical_rank = static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [tau](double v) { return v > tau; }));
  constexpr double inf = std::numeric_limits<double>::infinity();
  rec.kappa = rec.sigma_min > tau ? rec.sigma_max / rec.sigma_min : inf;
  rec.kappa_effective =
      rec.numerical_rank > 0 ? rec.sigma_max / s[rec.numerical_rank - 1] : inf;
  return rec;
}

SpectralRecord spectral_record(const Matrix& a, std::string tag) {
  const auto s = singular_values(a);
  return spectral_record_from_values(s, a.rows(), a.cols(), std::move(tag));
}

}  // namespace specattn
