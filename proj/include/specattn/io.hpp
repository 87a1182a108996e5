// SPDX-License-Identifier: Apache-2.0
/**
 * @file   io.hpp
 * @brief  File formats: matrix CSV, parameter files, flat run configs,
 *         metrics tables and run manifests.
 *
 * Every floating-point value is written with 17 significant digits; +∞, −∞
 * and NaN are written as inf, -inf and nan in both CSV and JSON.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specattn/attention.hpp"
#include "specattn/harness.hpp"
#include "specattn/linalg.hpp"

namespace specattn {

// --- scalars ------------------------------------------------------------------

/// Shortest lossless text: "%.17g", or inf / -inf / nan.
std::string format_double(double v);
/// Inverse of format_double. Throws ConfigError on malformed text.
double parse_double(std::string_view text);

// --- matrices -----------------------------------------------------------------

/// A matrix block is a header line `rows,cols` followed by `rows` lines of
/// `cols` comma-separated values. Blank lines and `#` comments are skipped.
/// Throws ParseError carrying the 1-based line number.
std::vector<Matrix> parse_matrix_blocks(std::string_view text);
/// Exactly one block.
Matrix parse_matrix_csv(std::string_view text);
/// Exactly three D×d blocks in Q, K, V order.
AttentionParams parse_params(std::string_view text);

std::string format_matrix_csv(const Matrix& m);
std::string format_params(const AttentionParams& p);

Matrix read_matrix_csv(const std::filesystem::path& path);
AttentionParams read_params(const std::filesystem::path& path);

// --- configuration ------------------------------------------------------------

/// Flat `key = value` text with `#` comments. Unknown keys and bad values throw
/// ConfigError naming the line; lines without '=' throw ParseError.
RunConfig parse_config(std::string_view text);
RunConfig read_config(const std::filesystem::path& path);
/// Sets one key. Throws ConfigError on an unknown key or bad value.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
/// Every key with its current value, in schema order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

// --- metrics ------------------------------------------------------------------

std::vector<std::string> metrics_columns();
std::vector<double> metrics_row(const TrajectoryPoint& p);
std::string metrics_csv(std::span<const TrajectoryPoint> points);
/// {"columns": [...], "rows": [[...], ...]} with the same values as the CSV.
std::string metrics_json(std::span<const TrajectoryPoint> points);
/// step,loss for every training step.
std::string step_loss_csv(const RunMetrics& metrics);
std::string ablation_csv(std::span<const AblationRow> rows);

// --- manifests ----------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::uint64_t> seeds;
  std::string version;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;  // relative to the manifest's directory
  std::string status;                // completed | diverged | failed
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> metadata;
};

std::string manifest_json(const RunManifest& m);
/// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

// --- files --------------------------------------------------------------------

/// $SPECATTN_OUT when set and non-empty, otherwise "runs".
std::filesystem::path output_root();
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);

/// Writes metrics.csv, metrics.json, train_loss.csv and manifest.json into
/// `dir`, filling `manifest.outputs` and status. Returns the manifest path.
std::filesystem::path write_train_run(const std::filesystem::path& dir, const TrainRun& run,
                                      RunManifest manifest);
/// Writes ablation.csv, one metrics file per λ and manifest.json into `dir`.
std::filesystem::path write_ablation(const std::filesystem::path& dir,
                                     const AblationResult& result, RunManifest manifest);

}  // namespace specattn
