/* SPDX-License-Identifier: Apache-2.0 */
/**
 * @file   specattn.h
 * @brief  C interface to the spectral attention library.
 *
 * All functions return an sa_status. On failure the message for the calling
 * thread is available from sa_last_error() until the next failing call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function. Strings returned through char** must be released with
 * sa_string_free().
 */
#ifndef SPECATTN_H
#define SPECATTN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SPECATTN_BUILDING)
#define SPECATTN_API __declspec(dllexport)
#else
#define SPECATTN_API __declspec(dllimport)
#endif
#else
#define SPECATTN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sa_status {
  SA_OK = 0,
  SA_ERR_DIMENSION = 1,
  SA_ERR_NUMERICAL = 2,
  SA_ERR_DEGENERATE = 3,
  SA_ERR_CONSTRAINT = 4,
  SA_ERR_PARSE = 5,
  SA_ERR_CONFIG = 6,
  SA_ERR_IO = 7,
  SA_ERR_DIVERGED = 8,
  SA_ERR_INVALID_ARGUMENT = 9,
  SA_ERR_INTERNAL = 10
} sa_status;

typedef enum sa_conditioning {
  SA_CONDITIONING_OFF = 0,
  SA_CONDITIONING_SVD_CAP = 1,
  SA_CONDITIONING_DIAGONAL_SHIFT = 2
} sa_conditioning;

typedef struct sa_matrix sa_matrix;
typedef struct sa_config sa_config;

typedef struct sa_spectral_record {
  double sigma_min;
  double sigma_max;
  double kappa; /* +inf when rank deficient */
  double kappa_effective;
  size_t numerical_rank;
} sa_spectral_record;

typedef struct sa_bound_report {
  double kappa_j;
  double kappa_j_effective;
  double bound_value;
  double kappa_x;
  double kappa_lambda_softmax;
  double kappa_wq;
  double kappa_wk;
  double kappa_wv;
  double kappa_softmax;
  size_t rank_j;
  int full_rank;
  int inequality_checked;
  int inequality_holds;
} sa_bound_report;

/* --- library ------------------------------------------------------------- */

SPECATTN_API const char* sa_version(void);
SPECATTN_API const char* sa_last_error(void);
SPECATTN_API const char* sa_status_name(sa_status status);
SPECATTN_API void sa_string_free(char* s);
/** $SPECATTN_OUT when set, otherwise "runs". */
SPECATTN_API sa_status sa_output_root(char** out);

/* --- matrices ------------------------------------------------------------ */

SPECATTN_API sa_status sa_matrix_create(size_t rows, size_t cols, const double* row_major,
                                        sa_matrix** out);
/** Reads a `rows,cols` CSV block. Parse failures report the line number. */
SPECATTN_API sa_status sa_matrix_read_csv(const char* path, sa_matrix** out);
SPECATTN_API void sa_matrix_free(sa_matrix* m);
SPECATTN_API size_t sa_matrix_rows(const sa_matrix* m);
SPECATTN_API size_t sa_matrix_cols(const sa_matrix* m);
/** Row-major entries, valid until the handle is freed. */
SPECATTN_API const double* sa_matrix_data(const sa_matrix* m);

SPECATTN_API sa_status sa_spectral(const sa_matrix* a, sa_spectral_record* out);
SPECATTN_API sa_status sa_svd_cap_correction(const sa_matrix* w, sa_matrix** out);
SPECATTN_API sa_status sa_diag_shift_correction(size_t rows, size_t cols, double lambda,
                                                sa_matrix** out);
/** Stacked Jacobian [A_Q; A_K; A_V] (3dN × dD). */
SPECATTN_API sa_status sa_jacobian(const sa_matrix* x, const sa_matrix* w_q,
                                   const sa_matrix* w_k, const sa_matrix* w_v, sa_matrix** out);
SPECATTN_API sa_status sa_evaluate_bound(const sa_matrix* x, const sa_matrix* w_q,
                                         const sa_matrix* w_k, const sa_matrix* w_v,
                                         sa_bound_report* out);
SPECATTN_API sa_status sa_flops_estimate(uint64_t n, uint64_t d_model, uint64_t d_head,
                                         int conditioned, uint64_t* out);

/* --- run configuration --------------------------------------------------- */

SPECATTN_API sa_status sa_config_default(sa_config** out);
SPECATTN_API sa_status sa_config_read(const char* path, sa_config** out);
SPECATTN_API sa_status sa_config_set(sa_config* cfg, const char* key, const char* value);
/** Current value of one key as text. */
SPECATTN_API sa_status sa_config_get(const sa_config* cfg, const char* key, char** out);
SPECATTN_API sa_status sa_config_validate(const sa_config* cfg);
/** `key = value` text for every key. */
SPECATTN_API sa_status sa_config_format(const sa_config* cfg, char** out);
SPECATTN_API void sa_config_free(sa_config* cfg);

/* --- commands ------------------------------------------------------------ */

/**
 * Runs a verification suite (all, jacobian, corrections, bound, vec) and
 * writes verify.json and manifest.json into out_dir. *passed is 1 when every
 * property holds.
 */
SPECATTN_API sa_status sa_verify(const char* suite, size_t seeds, const char* out_dir,
                                 const char* command, int* passed, char** summary);

/**
 * Conditioning analysis of one head. Writes analysis.json, analysis.csv and
 * manifest.json into out_dir.
 */
SPECATTN_API sa_status sa_analyze(const char* params_path, const char* x_path,
                                  sa_conditioning mode, double lambda, const char* out_dir,
                                  const char* command, char** summary);

/**
 * Trains per cfg and writes the run directory. Returns SA_ERR_DIVERGED when
 * the loss became non-finite; outputs are still written.
 */
SPECATTN_API sa_status sa_train(const sa_config* cfg, const char* run_dir, const char* command,
                                char** summary);

/**
 * One diagonal-shift run per λ. Duplicate values are dropped with a
 * manifest warning; an empty list is a configuration error.
 */
SPECATTN_API sa_status sa_ablate(const sa_config* cfg, const double* lambdas, size_t count,
                                 const char* run_dir, const char* command, char** summary);

#ifdef __cplusplus
}
#endif

#endif /* SPECATTN_H */
