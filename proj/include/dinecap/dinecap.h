/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the dinecap library.
 *
 * Every entry point returns a dinecap_status. On failure the thread-local
 * message returned by dinecap_last_error() describes the problem. Results are
 * opaque handles released with dinecap_result_free().
 *
 * Configuration is passed as a JSON object string. Accepted keys:
 *   family ("awgn" | "ma1"), alpha, sigma2, power, feedback, batch, seq_len,
 *   dine_lr, ndt_lr, iterations, dine_steps_per_ndt, warmup, eval_samples,
 *   seed, dine_hidden, dine_head, ndt_hidden, ndt_head, margin,
 *   reference_floor, clip_norm, ema_denominator, output_dir,
 *   window_sampling ("disjoint" | "random").
 * Unknown keys are rejected with DINECAP_ERR_CONFIG. NULL or "" means defaults.
 */
#ifndef DINECAP_H
#define DINECAP_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#if defined(DINECAP_BUILDING)
#define DINECAP_API __declspec(dllexport)
#else
#define DINECAP_API __declspec(dllimport)
#endif
#else
#define DINECAP_API __attribute__((visibility("default")))
#endif

typedef enum dinecap_status {
  DINECAP_OK = 0,
  DINECAP_ERR_INVALID_ARGUMENT = 1, /* null pointer or out-of-range argument */
  DINECAP_ERR_CONFIG = 2,           /* invalid configuration or channel parameters */
  DINECAP_ERR_DIMENSION = 3,
  DINECAP_ERR_NUMERIC = 4,          /* non-finite values, divergence */
  DINECAP_ERR_UNSUPPORTED = 5,
  DINECAP_ERR_PARSE = 6,            /* malformed CSV, JSON or model file */
  DINECAP_ERR_IO = 7,
  DINECAP_ERR_INTERNAL = 8
} dinecap_status;

typedef struct dinecap_result dinecap_result;

/* Called once per alternation (capacity) or iteration (di-estimate). */
typedef void (*dinecap_progress_fn)(long iteration, double d_y, double d_yx, double estimate,
                                    void* user);

DINECAP_API const char* dinecap_version(void);
DINECAP_API const char* dinecap_status_string(dinecap_status status);
DINECAP_API const char* dinecap_last_error(void);

/* Parses and validates a configuration, returning the fully populated
 * configuration as JSON in the result. */
DINECAP_API dinecap_status dinecap_check_config(const char* config_json, dinecap_result** out);

/* Analytic capacity for the configured channel: family, alpha, sigma2, power
 * and feedback are read from the configuration. */
DINECAP_API dinecap_status dinecap_baseline(const char* config_json, dinecap_result** out);

/* Alternating DINE/NDT capacity estimation followed by Monte-Carlo evaluation.
 * If ndt_path is not NULL the trained input generator is written there. A
 * diverged run still returns DINECAP_OK; dinecap_result_ok() reports 0. */
DINECAP_API dinecap_status dinecap_capacity(const char* config_json, const char* ndt_path,
                                            dinecap_progress_fn progress, void* user,
                                            dinecap_result** out);

/* Trains DINE on the windows of a trajectory CSV and evaluates it over the
 * whole file. */
DINECAP_API dinecap_status dinecap_di_estimate(const char* csv_path, const char* config_json,
                                               dinecap_progress_fn progress, void* user,
                                               dinecap_result** out);

/* Finite-difference gradient suite: selector is nn, dine, ndt or rollout.
 * dinecap_result_ok() is 1 iff every block is within tolerance. */
DINECAP_API dinecap_status dinecap_grad_check(const char* selector, long hidden, long steps,
                                              long batch, unsigned long long seed,
                                              double tolerance, dinecap_result** out);

/* Writes a single realization of `length` channel uses to csv_path. Inputs
 * come from the NDT stored at ndt_path, or are i.i.d. N(0, power) when
 * ndt_path is NULL. */
DINECAP_API dinecap_status dinecap_simulate(const char* config_json, const char* ndt_path,
                                            long length, const char* csv_path);

/* Result accessors. Strings stay valid until dinecap_result_free(). */
DINECAP_API const char* dinecap_result_json(const dinecap_result* result);
DINECAP_API const char* dinecap_result_curve_csv(const dinecap_result* result);
DINECAP_API double dinecap_result_estimate(const dinecap_result* result);
DINECAP_API int dinecap_result_ok(const dinecap_result* result);
DINECAP_API void dinecap_result_free(dinecap_result* result);

#ifdef __cplusplus
}
#endif

#endif /* DINECAP_H */
