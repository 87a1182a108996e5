// SPDX-License-Identifier: Apache-2.0
/**
 * @file   analysis.hpp
 * @brief  One-shot conditioning analysis of supplied matrices and the seeded
 *         property suites behind `specattn verify`.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specattn/attention.hpp"
#include "specattn/bounds.hpp"
#include "specattn/conditioning.hpp"
#include "specattn/harness.hpp"
#include "specattn/linalg.hpp"

namespace specattn {

// --- analyze ------------------------------------------------------------------

struct RoleAnalysis {
  Role role = Role::Q;
  SpectralRecord before;  // W
  SpectralRecord after;   // W + C (= W when conditioning is off)
  double c_fro = 0.0;
  std::optional<ShiftPrecondition> precondition;  // DiagonalShift only
};

struct AnalysisReport {
  std::string conditioning;  // off | svd_cap | diagonal_shift
  double lambda = 0.0;
  std::array<RoleAnalysis, 3> roles;
  /// Absent when X has a single row (the bound needs N ≥ 2).
  std::optional<BoundReport> bound_before;
  std::optional<BoundReport> bound_after;
};

AnalysisReport analyze(const Matrix& x, const AttentionParams& p, const Conditioning& mode);
std::string analysis_json(const AnalysisReport& r);
/// One row per spectral record and per bound report.
std::string analysis_csv(const AnalysisReport& r);

// --- verify -------------------------------------------------------------------

inline constexpr const char* kVerifySuites[] = {"all", "jacobian", "corrections", "bound", "vec"};

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst_residual = 0.0;
  double threshold = 0.0;
  /// Passing requires worst < threshold instead of worst ≤ threshold.
  bool strict = false;
  std::optional<std::uint64_t> offending_seed;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  std::size_t seeds = 0;
  std::vector<PropertyResult> properties;

  bool passed() const;
};

/// Runs the named suite over seeds 0..seeds-1. Zero seeds gives an empty,
/// passing report. Throws ConfigError on an unknown suite name.
VerifyReport run_verify(std::string_view suite, std::size_t seeds);
std::string verify_json(const VerifyReport& r);

}  // namespace specattn
