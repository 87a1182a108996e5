// SPDX-License-Identifier: Apache-2.0
/**
 * @file   capi.cpp
 * @brief  extern "C" wrappers: exception-to-status translation, handles and
 *         the command implementations behind the CLI.
 */
#include "specattn/specattn.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <new>
#include <string>

#include "specattn/analysis.hpp"
#include "specattn/error.hpp"
#include "specattn/harness.hpp"
#include "specattn/io.hpp"

struct sa_matrix {
  specattn::Matrix m;
};

struct sa_config {
  specattn::RunConfig c;
};

namespace {

using namespace specattn;

thread_local std::string g_last_error;

sa_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return SA_ERR_DIMENSION;
    case ErrorKind::Numerical: return SA_ERR_NUMERICAL;
    case ErrorKind::DegenerateInput: return SA_ERR_DEGENERATE;
    case ErrorKind::Constraint: return SA_ERR_CONSTRAINT;
    case ErrorKind::Parse: return SA_ERR_PARSE;
    case ErrorKind::Config: return SA_ERR_CONFIG;
    case ErrorKind::Io: return SA_ERR_IO;
    case ErrorKind::Diverged: return SA_ERR_DIVERGED;
  }
  return SA_ERR_INTERNAL;
}

sa_status fail(sa_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <typename F>
sa_status guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SA_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SA_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

#define SA_REQUIRE(cond, what) \
  if (!(cond)) return fail(SA_ERR_INVALID_ARGUMENT, what)

AttentionParams params_of(const sa_matrix* wq, const sa_matrix* wk, const sa_matrix* wv) {
  return AttentionParams(wq->m, wk->m, wv->m);
}

sa_spectral_record to_c(const SpectralRecord& r) {
  return {r.sigma_min, r.sigma_max, r.kappa, r.kappa_effective, r.numerical_rank};
}

RunManifest base_manifest(const char* command) {
  RunManifest m;
  m.command = command ? command : "";
  m.version = SPECATTN_VERSION;
  m.started = utc_timestamp();
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

extern "C" {

// --- library ------------------------------------------------------------------

const char* sa_version(void) { return SPECATTN_VERSION; }

const char* sa_last_error(void) { return g_last_error.c_str(); }

const char* sa_status_name(sa_status status) {
  switch (status) {
    case SA_OK: return "ok";
    case SA_ERR_DIMENSION: return "dimension error";
    case SA_ERR_NUMERICAL: return "numerical error";
    case SA_ERR_DEGENERATE: return "degenerate input";
    case SA_ERR_CONSTRAINT: return "constraint violated";
    case SA_ERR_PARSE: return "parse error";
    case SA_ERR_CONFIG: return "configuration error";
    case SA_ERR_IO: return "i/o error";
    case SA_ERR_DIVERGED: return "diverged";
    case SA_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SA_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void sa_string_free(char* s) { std::free(s); }

sa_status sa_output_root(char** out) {
  SA_REQUIRE(out, "sa_output_root: null output");
  return guarded([&] {
    *out = dup_string(output_root().string());
    return SA_OK;
  });
}

// --- matrices -----------------------------------------------------------------

sa_status sa_matrix_create(size_t rows, size_t cols, const double* row_major, sa_matrix** out) {
  SA_REQUIRE(out, "sa_matrix_create: null output");
  SA_REQUIRE(row_major || rows * cols == 0, "sa_matrix_create: null data");
  return guarded([&] {
    std::vector<double> data(row_major, row_major + rows * cols);
    *out = new sa_matrix{Matrix(rows, cols, std::move(data))};
    return SA_OK;
  });
}

sa_status sa_matrix_read_csv(const char* path, sa_matrix** out) {
  SA_REQUIRE(path && out, "sa_matrix_read_csv: null argument");
  return guarded([&] {
    *out = new sa_matrix{read_matrix_csv(path)};
    return SA_OK;
  });
}

void sa_matrix_free(sa_matrix* m) { delete m; }

size_t sa_matrix_rows(const sa_matrix* m) { return m ? m->m.rows() : 0; }

size_t sa_matrix_cols(const sa_matrix* m) { return m ? m->m.cols() : 0; }

const double* sa_matrix_data(const sa_matrix* m) { return m ? m->m.data().data() : nullptr; }

sa_status sa_spectral(const sa_matrix* a, sa_spectral_record* out) {
  SA_REQUIRE(a && out, "sa_spectral: null argument");
  return guarded([&] {
    *out = to_c(spectral_record(a->m));
    return SA_OK;
  });
}

sa_status sa_svd_cap_correction(const sa_matrix* w, sa_matrix** out) {
  SA_REQUIRE(w && out, "sa_svd_cap_correction: null argument");
  return guarded([&] {
    *out = new sa_matrix{svd_cap_correction(w->m)};
    return SA_OK;
  });
}

sa_status sa_diag_shift_correction(size_t rows, size_t cols, double lambda, sa_matrix** out) {
  SA_REQUIRE(out, "sa_diag_shift_correction: null output");
  return guarded([&] {
    *out = new sa_matrix{diag_shift_correction(rows, cols, lambda)};
    return SA_OK;
  });
}

sa_status sa_jacobian(const sa_matrix* x, const sa_matrix* w_q, const sa_matrix* w_k,
                      const sa_matrix* w_v, sa_matrix** out) {
  SA_REQUIRE(x && w_q && w_k && w_v && out, "sa_jacobian: null argument");
  return guarded([&] {
    *out = new sa_matrix{assemble_jacobian(x->m, params_of(w_q, w_k, w_v)).stacked};
    return SA_OK;
  });
}

sa_status sa_evaluate_bound(const sa_matrix* x, const sa_matrix* w_q, const sa_matrix* w_k,
                            const sa_matrix* w_v, sa_bound_report* out) {
  SA_REQUIRE(x && w_q && w_k && w_v && out, "sa_evaluate_bound: null argument");
  return guarded([&] {
    const BoundReport b = evaluate_bound(x->m, params_of(w_q, w_k, w_v));
    const BoundComponents& c = b.components;
    *out = {b.kappa_j,     b.kappa_j_effective,      b.bound_value, c.kappa_x,
            c.kappa_lambda_softmax, c.kappa_wq,      c.kappa_wk,    c.kappa_wv,
            c.kappa_softmax,        b.rank_j,        b.full_rank,   b.inequality_checked,
            b.inequality_holds};
    return SA_OK;
  });
}

sa_status sa_flops_estimate(uint64_t n, uint64_t d_model, uint64_t d_head, int conditioned,
                            uint64_t* out) {
  SA_REQUIRE(out, "sa_flops_estimate: null output");
  SA_REQUIRE(n > 0 && d_model > 0 && d_head > 0, "sa_flops_estimate: dimensions must be positive");
  return guarded([&] {
    *out = flops_estimate(n, d_model, d_head, conditioned != 0);
    return SA_OK;
  });
}

// --- run configuration --------------------------------------------------------

sa_status sa_config_default(sa_config** out) {
  SA_REQUIRE(out, "sa_config_default: null output");
  return guarded([&] {
    *out = new sa_config{};
    return SA_OK;
  });
}

sa_status sa_config_read(const char* path, sa_config** out) {
  SA_REQUIRE(path && out, "sa_config_read: null argument");
  return guarded([&] {
    *out = new sa_config{read_config(path)};
    return SA_OK;
  });
}

sa_status sa_config_set(sa_config* cfg, const char* key, const char* value) {
  SA_REQUIRE(cfg && key && value, "sa_config_set: null argument");
  return guarded([&] {
    apply_config_value(cfg->c, key, value);
    return SA_OK;
  });
}

sa_status sa_config_get(const sa_config* cfg, const char* key, char** out) {
  SA_REQUIRE(cfg && key && out, "sa_config_get: null argument");
  return guarded([&] {
    for (const auto& [k, v] : config_entries(cfg->c)) {
      if (k == key) {
        *out = dup_string(v);
        return SA_OK;
      }
    }
    return fail(SA_ERR_CONFIG, std::string("unknown key '") + key + "'");
  });
}

sa_status sa_config_validate(const sa_config* cfg) {
  SA_REQUIRE(cfg, "sa_config_validate: null argument");
  return guarded([&] {
    cfg->c.validate();
    return SA_OK;
  });
}

sa_status sa_config_format(const sa_config* cfg, char** out) {
  SA_REQUIRE(cfg && out, "sa_config_format: null argument");
  return guarded([&] {
    *out = dup_string(format_config(cfg->c));
    return SA_OK;
  });
}

void sa_config_free(sa_config* cfg) { delete cfg; }

// --- commands -----------------------------------------------------------------

sa_status sa_verify(const char* suite, size_t seeds, const char* out_dir, const char* command,
                    int* passed, char** summary) {
  SA_REQUIRE(suite && out_dir && passed, "sa_verify: null argument");
  return guarded([&] {
    RunManifest manifest = base_manifest(command);
    const VerifyReport r = run_verify(suite, seeds);
    const std::filesystem::path dir(out_dir);
    const auto report_path = (dir / "verify.json").string();
    write_text(report_path, verify_json(r));
    manifest.config = {{"suite", suite}, {"seeds", std::to_string(seeds)}};
    for (std::uint64_t i = 0; i < seeds; ++i) manifest.seeds.push_back(i);
    manifest.outputs = {"verify.json"};
    manifest.status = r.passed() ? "completed" : "failed";
    manifest.finished = utc_timestamp();
    write_text(dir / "manifest.json", manifest_json(manifest));
    *passed = r.passed() ? 1 : 0;
    std::string s;
    for (const PropertyResult& p : r.properties) {
      s += std::string(p.passed ? "PASS " : "FAIL ") + p.name + "  cases=" +
           std::to_string(p.cases) + "  worst=" + format_double(p.worst_residual) +
           (p.strict ? "  (< " : "  (<= ") + format_double(p.threshold) + ")";
      if (p.offending_seed) s += "  seed=" + std::to_string(*p.offending_seed);
      s += "\n";
    }
    s += std::string(r.passed() ? "verify: all " : "verify: FAILED, ") +
         std::to_string(r.properties.size()) + " properties, report " + report_path + "\n";
    set_string(summary, s);
    return SA_OK;
  });
}

sa_status sa_analyze(const char* params_path, const char* x_path, sa_conditioning mode,
                     double lambda, const char* out_dir, const char* command, char** summary) {
  SA_REQUIRE(params_path && x_path && out_dir, "sa_analyze: null argument");
  return guarded([&] {
    RunManifest manifest = base_manifest(command);
    Conditioning cond;
    switch (mode) {
      case SA_CONDITIONING_OFF: cond = Conditioning::off(); break;
      case SA_CONDITIONING_SVD_CAP: cond = Conditioning::svd_cap(); break;
      case SA_CONDITIONING_DIAGONAL_SHIFT: cond = Conditioning::diagonal_shift(lambda); break;
      default: return fail(SA_ERR_INVALID_ARGUMENT, "sa_analyze: unknown conditioning mode");
    }
    const AttentionParams p = read_params(params_path);
    const Matrix x = read_matrix_csv(x_path);
    const AnalysisReport r = analyze(x, p, cond);
    const std::filesystem::path dir(out_dir);
    write_text(dir / "analysis.json", analysis_json(r));
    write_text(dir / "analysis.csv", analysis_csv(r));
    manifest.config = {{"params", params_path},
                       {"x", x_path},
                       {"conditioning", cond.name()},
                       {"lambda", format_double(cond.lambda)}};
    manifest.outputs = {"analysis.json", "analysis.csv"};
    manifest.status = "completed";
    if (!r.bound_before) manifest.warnings.push_back("X has one row; bound not evaluated");
    manifest.finished = utc_timestamp();
    write_text(dir / "manifest.json", manifest_json(manifest));

    std::string s;
    for (const RoleAnalysis& ra : r.roles) {
      s += std::string("W_") + role_name(ra.role) + ": kappa " + fmt(ra.before.kappa) +
           " -> " + fmt(ra.after.kappa) + "\n";
    }
    if (r.bound_after) {
      s += "J: kappa_eff " + fmt(r.bound_before->kappa_j_effective) + " -> " +
           fmt(r.bound_after->kappa_j_effective) + ", bound " + fmt(r.bound_before->bound_value) +
           " -> " + fmt(r.bound_after->bound_value) + "\n";
    }
    s += "analysis written to " + dir.string() + "\n";
    set_string(summary, s);
    return SA_OK;
  });
}

sa_status sa_train(const sa_config* cfg, const char* run_dir, const char* command,
                   char** summary) {
  SA_REQUIRE(cfg && run_dir, "sa_train: null argument");
  return guarded([&] {
    cfg->c.validate();
    RunManifest manifest = base_manifest(command);
    const TrainRun run = train(cfg->c);
    manifest.finished = utc_timestamp();
    const auto path = write_train_run(run_dir, run, manifest);
    const bool diverged = run.metrics.status == RunStatus::Diverged;
    std::string s;
    if (!run.metrics.probes.empty()) {
      const ProbeSnapshot& last = run.metrics.probes.back();
      s += "step " + std::to_string(last.step) + ": eval_acc " + fmt(last.eval_acc) +
           ", eval loss " + fmt(last.loss) + "\n";
    }
    if (diverged) s += "diverged: " + run.metrics.diagnostic + "\n";
    s += "manifest " + path.string() + "\n";
    set_string(summary, s);
    if (diverged) return fail(SA_ERR_DIVERGED, run.metrics.diagnostic);
    return SA_OK;
  });
}

sa_status sa_ablate(const sa_config* cfg, const double* lambdas, size_t count,
                    const char* run_dir, const char* command, char** summary) {
  SA_REQUIRE(cfg && run_dir && (lambdas || count == 0), "sa_ablate: null argument");
  return guarded([&] {
    if (count == 0) return fail(SA_ERR_CONFIG, "ablate: the lambda list is empty");
    cfg->c.validate();
    RunManifest manifest = base_manifest(command);
    std::vector<double> unique;
    for (size_t i = 0; i < count; ++i) {
      if (std::find(unique.begin(), unique.end(), lambdas[i]) != unique.end()) {
        manifest.warnings.push_back("duplicate lambda " + format_double(lambdas[i]) +
                                    " dropped");
        continue;
      }
      unique.push_back(lambdas[i]);
    }
    const AblationResult result = ablate_lambda(cfg->c, unique);
    manifest.finished = utc_timestamp();
    manifest.config = config_entries(cfg->c);
    manifest.seeds = {cfg->c.model.seed};
    std::string lambda_list;
    for (const AblationRow& r : result.rows)
      lambda_list += (lambda_list.empty() ? "" : ",") + format_double(r.lambda);
    manifest.metadata.emplace_back("lambdas", lambda_list);
    const auto path = write_ablation(run_dir, result, manifest);

    std::string s = "lambda  eval_acc  mean_kappa_wc  mean_kappa_j_eff\n";
    bool diverged = false;
    for (const AblationRow& r : result.rows) {
      s += fmt(r.lambda) + "  " + fmt(r.final_eval_acc) + "  " + fmt(r.final_mean_kappa_wc) +
           "  " + fmt(r.final_mean_kappa_j_effective) +
           (r.status == RunStatus::Diverged ? "  diverged" : "") + "\n";
      diverged = diverged || r.status == RunStatus::Diverged;
    }
    for (const auto& w : manifest.warnings) s += "warning: " + w + "\n";
    s += "manifest " + path.string() + "\n";
    set_string(summary, s);
    if (diverged) return fail(SA_ERR_DIVERGED, "ablate: at least one run diverged");
    return SA_OK;
  });
}

}  // extern "C"
