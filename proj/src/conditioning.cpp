// SPDX-License-Identifier: Apache-2.0
/**
 * @file   conditioning.cpp
 * @brief  SVD-cap and diagonal-shift correction constructions.
 */
#include "specattn/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "specattn/error.hpp"

namespace specattn {

std::string CorrectionMode::describe() const {
  if (kind == CorrectionKind::SvdCap) return "svd_cap";
  std::ostringstream os;
  os.precision(17);
  os << "diagonal_shift(" << lambda << ")";
  return os.str();
}

Matrix svd_cap_correction(const Matrix& w) {
  if (w.all_zero()) {
    throw DegenerateInputError("svd_cap_correction: all-zero weight matrix has σ_max = 0");
  }
  const SvdResult f = svd(w);
  const double sigma_max = f.s.front();
  const std::size_t k = f.s.size();
  // U·S̄·Vᵀ with S̄ = σ_max on the k×k diagonal block
  Matrix c(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t r = 0; r < k; ++r) sum += f.u(i, r) * f.vt(r, j);
      c(i, j) = sigma_max * sum;
    }
  }
  return c;
}

Matrix diag_shift_correction(std::size_t rows, std::size_t cols, double lambda) {
  if (!(lambda >= kMinShift)) {
    std::ostringstream os;
    os << "diag_shift_correction: lambda must be >= " << kMinShift << ", got " << lambda;
    throw ConstraintError(os.str());
  }
  Matrix c(rows, cols);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) c(i, i) = lambda;
  return c;
}

ShiftPrecondition shift_precondition_holds(const Matrix& w, double lambda) {
  const SpectralRecord rec = spectral_record(w);
  ShiftPrecondition r;
  r.sigma_min = rec.sigma_min;
  r.sigma_max = rec.sigma_max;
  r.lambda = lambda;
  r.rhs = rec.sigma_min > 0.0 ? rec.sigma_max / rec.sigma_min
                              : std::numeric_limits<double>::infinity();
  if (!(lambda > rec.sigma_min)) {
    r.lhs = std::numeric_limits<double>::quiet_NaN();
    r.reason = "lambda does not exceed sigma_min; left-hand side undefined";
    return r;
  }
  r.lhs = (rec.sigma_max + lambda) / (lambda - rec.sigma_min);
  r.holds = r.lhs <= r.rhs;
  return r;
}

CorrectionSet CorrectionSet::zeros(std::size_t rows, std::size_t cols) {
  return CorrectionSet({Matrix(rows, cols), Matrix(rows, cols), Matrix(rows, cols)},
                       CorrectionMode{CorrectionKind::DiagonalShift, 0.0});
}

CorrectionSet build_correction_set(const AttentionParams& p, CorrectionMode mode) {
  const Matrix* w[3] = {&p.w_q(), &p.w_k(), &p.w_v()};
  if (mode.kind == CorrectionKind::SvdCap) {
    return CorrectionSet({svd_cap_correction(*w[0]), svd_cap_correction(*w[1]),
                          svd_cap_correction(*w[2])},
                         CorrectionMode::svd_cap());
  }
  const std::size_t rows = p.model_width();
  const std::size_t cols = p.head_width();
  const Matrix c = diag_shift_correction(rows, cols, mode.lambda);
  CorrectionSet set({c, c, c}, mode);
  set.diagnostics_ = std::array<ShiftPrecondition, 3>{
      shift_precondition_holds(*w[0], mode.lambda),
      shift_precondition_holds(*w[1], mode.lambda),
      shift_precondition_holds(*w[2], mode.lambda)};
  return set;
}

}  // namespace specattn
