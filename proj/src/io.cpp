// SPDX-License-Identifier: Apache-2.0
/**
 * @file   io.cpp
 * @brief  Text formats, run directories and manifests.
 */
#include "specattn/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "specattn/error.hpp"

namespace specattn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

bool parse_count(std::string_view text, std::uint64_t& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool try_parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

// Content lines with their 1-based numbers; blanks and comments dropped.
std::vector<std::pair<std::size_t, std::string_view>> content_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find('\n', start);
    const auto line = text.substr(start, pos == std::string_view::npos ? pos : pos - start);
    ++number;
    const auto body = trim(line.substr(0, line.find('#')));
    if (!body.empty()) out.emplace_back(number, body);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string quoted_number(double v) {
  const std::string s = format_double(v);
  return std::isfinite(v) ? s : "\"" + s + "\"";
}

std::string join_row(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "on" || v == "1") {
    out = true;
    return true;
  }
  if (v == "false" || v == "off" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

// --- scalars ------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view text) {
  double v = 0.0;
  if (!try_parse_double(text, v)) throw ConfigError("not a number: '" + std::string(text) + "'");
  return v;
}

// --- matrices -----------------------------------------------------------------

std::vector<Matrix> parse_matrix_blocks(std::string_view text) {
  const auto lines = content_lines(text);
  std::vector<Matrix> blocks;
  std::size_t i = 0;
  while (i < lines.size()) {
    const auto [header_line, header] = lines[i++];
    const auto dims = split(header, ',');
    std::uint64_t rows = 0, cols = 0;
    if (dims.size() != 2 || !parse_count(dims[0], rows) || !parse_count(dims[1], cols))
      throw ParseError("line " + std::to_string(header_line) +
                           ": expected a 'rows,cols' header, got '" + std::string(header) + "'",
                       header_line);
    if (rows == 0 || cols == 0)
      throw ParseError("line " + std::to_string(header_line) + ": dimensions must be positive",
                       header_line);
    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::uint64_t r = 0; r < rows; ++r) {
      if (i >= lines.size()) {
        const std::size_t last = lines.empty() ? 1 : lines.back().first;
        throw ParseError("line " + std::to_string(last) + ": expected " + std::to_string(rows) +
                             " rows after the header on line " + std::to_string(header_line),
                         last);
      }
      const auto [number, body] = lines[i++];
      const auto cells = split(body, ',');
      if (cells.size() != cols)
        throw ParseError("line " + std::to_string(number) + ": expected " +
                             std::to_string(cols) + " values, got " +
                             std::to_string(cells.size()),
                         number);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        double v = 0.0;
        if (!try_parse_double(cells[c], v) || !std::isfinite(v))
          throw ParseError("line " + std::to_string(number) + ", column " +
                               std::to_string(c + 1) + ": bad value '" + std::string(cells[c]) +
                               "'",
                           number);
        data.push_back(v);
      }
    }
    blocks.emplace_back(rows, cols, std::move(data));
  }
  return blocks;
}

Matrix parse_matrix_csv(std::string_view text) {
  auto blocks = parse_matrix_blocks(text);
  if (blocks.size() != 1)
    throw ParseError("expected one matrix block, found " + std::to_string(blocks.size()), 1);
  return std::move(blocks.front());
}

AttentionParams parse_params(std::string_view text) {
  auto blocks = parse_matrix_blocks(text);
  if (blocks.size() != 3)
    throw ParseError("expected three matrix blocks (W_Q, W_K, W_V), found " +
                         std::to_string(blocks.size()),
                     1);
  return AttentionParams(std::move(blocks[0]), std::move(blocks[1]), std::move(blocks[2]));
}

std::string format_matrix_csv(const Matrix& m) {
  std::string out = std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += join_row(m.row(i));
    out += '\n';
  }
  return out;
}

std::string format_params(const AttentionParams& p) {
  return format_matrix_csv(p.w_q()) + format_matrix_csv(p.w_k()) + format_matrix_csv(p.w_v());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  return parse_matrix_csv(read_text(path));
}

AttentionParams read_params(const std::filesystem::path& path) {
  return parse_params(read_text(path));
}

// --- configuration ------------------------------------------------------------

void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  const auto bad = [&](const char* expect) {
    return ConfigError("key '" + std::string(key) + "': expected " + expect + ", got '" +
                       std::string(value) + "'");
  };
  const auto count = [&](std::size_t& field) {
    std::uint64_t v = 0;
    if (!parse_count(value, v)) throw bad("a non-negative integer");
    field = static_cast<std::size_t>(v);
  };
  const auto real = [&](double& field) {
    double v = 0.0;
    if (!try_parse_double(value, v) || !std::isfinite(v)) throw bad("a finite number");
    field = v;
  };
  const auto flag = [&](bool& field) {
    if (!parse_bool(value, field)) throw bad("true or false");
  };

  TransformerConfig& m = cfg.model;
  OptimizerConfig& o = cfg.optimizer;
  if (key == "seed") {
    std::uint64_t v = 0;
    if (!parse_count(value, v)) throw bad("a non-negative integer");
    m.seed = v;
  } else if (key == "layers") {
    count(m.layers);
  } else if (key == "heads") {
    count(m.heads);
  } else if (key == "d_model") {
    count(m.model_width);
  } else if (key == "d_head") {
    count(m.head_width);
  } else if (key == "seq_len") {
    count(m.seq_len);
  } else if (key == "ffn_width") {
    count(m.ffn_width);
  } else if (key == "layer_norm") {
    flag(m.layer_norm);
  } else if (key == "conditioning") {
    if (value == "off") {
      m.conditioning.kind = ConditioningKind::Off;
    } else if (value == "svd_cap") {
      m.conditioning.kind = ConditioningKind::SvdCap;
    } else if (value == "diagonal_shift") {
      m.conditioning.kind = ConditioningKind::DiagonalShift;
    } else {
      throw bad("off, svd_cap or diagonal_shift");
    }
  } else if (key == "lambda") {
    real(m.conditioning.lambda);
  } else if (key == "lr") {
    real(o.lr);
  } else if (key == "beta1") {
    real(o.beta1);
  } else if (key == "beta2") {
    real(o.beta2);
  } else if (key == "weight_decay") {
    real(o.weight_decay);
  } else if (key == "eps") {
    real(o.eps);
  } else if (key == "steps") {
    count(cfg.steps);
  } else if (key == "batch_size") {
    count(cfg.batch_size);
  } else if (key == "probe_every") {
    count(cfg.probe_every);
  } else if (key == "probe_samples") {
    count(cfg.probe_samples);
  } else if (key == "n_train") {
    count(cfg.n_train);
  } else if (key == "n_eval") {
    count(cfg.n_eval);
  } else {
    throw ConfigError("unknown key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  for (const auto& [number, body] : content_lines(text)) {
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(number) + ": expected 'key = value'", number);
    const auto key = trim(body.substr(0, eq));
    try {
      apply_config_value(cfg, key, body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  const TransformerConfig& m = cfg.model;
  const OptimizerConfig& o = cfg.optimizer;
  const auto n = [](std::uint64_t v) { return std::to_string(v); };
  return {
      {"seed", n(m.seed)},
      {"layers", n(m.layers)},
      {"heads", n(m.heads)},
      {"d_model", n(m.model_width)},
      {"d_head", n(m.head_width)},
      {"seq_len", n(m.seq_len)},
      {"ffn_width", n(m.ffn_width)},
      {"layer_norm", m.layer_norm ? "true" : "false"},
      {"conditioning", m.conditioning.name()},
      {"lambda", format_double(m.conditioning.lambda)},
      {"lr", format_double(o.lr)},
      {"beta1", format_double(o.beta1)},
      {"beta2", format_double(o.beta2)},
      {"weight_decay", format_double(o.weight_decay)},
      {"eps", format_double(o.eps)},
      {"steps", n(cfg.steps)},
      {"batch_size", n(cfg.batch_size)},
      {"probe_every", n(cfg.probe_every)},
      {"probe_samples", n(cfg.probe_samples)},
      {"n_train", n(cfg.n_train)},
      {"n_eval", n(cfg.n_eval)},
  };
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

// --- metrics ------------------------------------------------------------------

std::vector<std::string> metrics_columns() {
  std::vector<std::string> cols = {"step", "loss", "eval_acc"};
  for (const char* role : {"q", "k", "v"}) {
    for (const char* field : {"w_sigma_min", "w_sigma_max", "w_kappa", "wc_sigma_min",
                              "wc_sigma_max", "wc_kappa", "c_fro"})
      cols.push_back(std::string(field) + "_" + role);
  }
  for (const char* c : {"kappa_j", "kappa_j_effective", "bound_value", "full_rank_fraction"})
    cols.emplace_back(c);
  return cols;
}

std::vector<double> metrics_row(const TrajectoryPoint& p) {
  std::vector<double> row = {static_cast<double>(p.step), p.loss, p.eval_acc};
  for (const RoleAggregate& r : p.roles) {
    row.insert(row.end(), {r.w_sigma_min, r.w_sigma_max, r.w_kappa, r.wc_sigma_min,
                           r.wc_sigma_max, r.wc_kappa, r.c_fro});
  }
  row.insert(row.end(), {p.kappa_j, p.kappa_j_effective, p.bound_value, p.full_rank_fraction});
  return row;
}

std::string metrics_csv(std::span<const TrajectoryPoint> points) {
  std::string out;
  const auto cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& p : points) {
    out += join_row(metrics_row(p));
    out += '\n';
  }
  return out;
}

std::string metrics_json(std::span<const TrajectoryPoint> points) {
  std::string out = "{\n  \"columns\": [";
  const auto cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? ", \"" : "\"") + cols[i] + "\"";
  out += "],\n  \"rows\": [";
  for (std::size_t r = 0; r < points.size(); ++r) {
    out += r ? ",\n    [" : "\n    [";
    const auto row = metrics_row(points[r]);
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? ", " : "") + quoted_number(row[i]);
    out += "]";
  }
  out += points.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

std::string step_loss_csv(const RunMetrics& metrics) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < metrics.step_loss.size(); ++i)
    out += std::to_string(i + 1) + "," + format_double(metrics.step_loss[i]) + "\n";
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out =
      "lambda,final_eval_acc,init_mean_kappa_wc,final_mean_kappa_wc,"
      "final_mean_kappa_j_effective,status\n";
  for (const auto& r : rows) {
    const double values[] = {r.lambda, r.final_eval_acc, r.init_mean_kappa_wc,
                             r.final_mean_kappa_wc, r.final_mean_kappa_j_effective};
    out += join_row(values);
    out += r.status == RunStatus::Completed ? ",completed\n" : ",diverged\n";
  }
  return out;
}

// --- manifests ----------------------------------------------------------------

std::string manifest_json(const RunManifest& m) {
  using Json = nlohmann::ordered_json;
  Json j;
  j["command"] = m.command;
  Json config = Json::object();
  for (const auto& [k, v] : m.config) config[k] = v;
  j["config"] = config;
  j["seeds"] = m.seeds;
  j["version"] = m.version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["outputs"] = m.outputs;
  j["status"] = m.status;
  j["warnings"] = m.warnings;
  Json meta = Json::object();
  for (const auto& [k, v] : m.metadata) meta[k] = v;
  j["metadata"] = meta;
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- files --------------------------------------------------------------------

std::filesystem::path output_root() {
  const char* env = std::getenv("SPECATTN_OUT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::filesystem::path write_train_run(const std::filesystem::path& dir, const TrainRun& run,
                                      RunManifest manifest) {
  const auto trajectory = run.metrics.probes.empty()
                              ? std::vector<TrajectoryPoint>{}
                              : conditioning_trajectory(run.metrics.probes);
  write_text(dir / "metrics.csv", metrics_csv(trajectory));
  write_text(dir / "metrics.json", metrics_json(trajectory));
  write_text(dir / "train_loss.csv", step_loss_csv(run.metrics));
  manifest.outputs = {"metrics.csv", "metrics.json", "train_loss.csv"};
  const bool diverged = run.metrics.status == RunStatus::Diverged;
  manifest.status = diverged ? "diverged" : "completed";
  if (manifest.config.empty()) manifest.config = config_entries(run.config);
  if (manifest.seeds.empty()) manifest.seeds = {run.config.model.seed};
  manifest.metadata.emplace_back(
      "probe_batch", "first " + std::to_string(run.config.probe_samples) +
                         " sequence(s) of the eval split, fixed for the whole run");
  manifest.metadata.emplace_back("probe_every", std::to_string(run.config.probe_every));
  manifest.metadata.emplace_back("probe_count", std::to_string(run.metrics.probes.size()));
  manifest.metadata.emplace_back(
      "kappa_j", "Jacobian of the probe batch's attention outputs w.r.t. (W_Q, W_K, W_V), "
                 "per-sequence Jacobians stacked; kappa_j is raw (inf when rank deficient), "
                 "kappa_j_effective uses the smallest singular value above the rank tolerance");
  manifest.metadata.emplace_back("bound_value",
                                 "mean over heads of the per-sequence bound, averaged over the "
                                 "probe batch; effective kappa for the softmax factors");
  if (diverged) {
    manifest.metadata.emplace_back("diverged_at", std::to_string(run.metrics.diverged_at));
    manifest.metadata.emplace_back("diagnostic", run.metrics.diagnostic);
  }
  const auto path = dir / "manifest.json";
  write_text(path, manifest_json(manifest));
  return path;
}

std::filesystem::path write_ablation(const std::filesystem::path& dir,
                                     const AblationResult& result, RunManifest manifest) {
  write_text(dir / "ablation.csv", ablation_csv(result.rows));
  manifest.outputs = {"ablation.csv"};
  bool diverged = false;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const TrainRun& run = result.runs[i];
    const auto name = "metrics_lambda_" + format_double(result.rows[i].lambda) + ".csv";
    const auto trajectory = run.metrics.probes.empty()
                                ? std::vector<TrajectoryPoint>{}
                                : conditioning_trajectory(run.metrics.probes);
    write_text(dir / name, metrics_csv(trajectory));
    manifest.outputs.push_back(name);
    diverged = diverged || run.metrics.status == RunStatus::Diverged;
  }
  manifest.status = diverged ? "diverged" : "completed";
  const auto path = dir / "manifest.json";
  write_text(path, manifest_json(manifest));
  return path;
}

}  // namespace specattn
