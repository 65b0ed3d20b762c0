#ifndef IVBANDIT_H
#define IVBANDIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IvbStatus {
  IVB_STATUS_OK = 0,
  IVB_STATUS_NULL_POINTER = 1,
  IVB_STATUS_INVALID_ARGUMENT = 2,
  IVB_STATUS_INVALID_CONFIG = 3,
  IVB_STATUS_NUMERICAL = 4,
  IVB_STATUS_CAP_EXCEEDED = 5,
  IVB_STATUS_BUFFER_TOO_SMALL = 6,
  IVB_STATUS_IO = 7,
  IVB_STATUS_PANIC = 8,
} IvbStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct IvbExperiment IvbExperiment;

/**
 * Opaque problem instance.
 */
typedef struct IvbInstance IvbInstance;

/**
 * Opaque table of trial results.
 */
typedef struct IvbResults IvbResults;

typedef struct IvbTrialSummary {
  uint64_t recommended;
  bool correct;
  uint64_t total_samples;
  uint64_t phases;
} IvbTrialSummary;

typedef struct IvbResultRow {
  uint64_t trial;
  uint64_t seed;
  uint64_t samples;
  bool correct;
  /**
   * -1 when the trial did not finish.
   */
  int64_t recommended;
} IvbResultRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ivb_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
 * to `len`). Returns the full message length in bytes, 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ivb_last_error_message(char *buf, size_t len);

/**
 * Jump-around compliance instance on `d` levels.
 *
 * # Safety
 * `theta` must point to `d` doubles and `out` must be writable.
 */
enum IvbStatus ivb_instance_jump_around(size_t d,
                                        const double *theta,
                                        double sigma_u_sq,
                                        struct IvbInstance **out);

/**
 * Interpolation instance `Γ = (1−ε)/d·11ᵀ + εI`.
 *
 * # Safety
 * `theta` must point to `d` doubles and `out` must be writable.
 */
enum IvbStatus ivb_instance_interpolation(size_t d,
                                          const double *theta,
                                          double eps,
                                          double noise_scale,
                                          struct IvbInstance **out);

/**
 * # Safety
 * `inst` must be null or a handle from this library that was not freed yet.
 */
void ivb_instance_free(struct IvbInstance *inst);

/**
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_instance_dim(const struct IvbInstance *inst, size_t *out);

/**
 * Number of instruments, i.e. the length of a design's weight vector.
 *
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_instance_num_arms(const struct IvbInstance *inst, size_t *out);

/**
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_instance_best_arm(const struct IvbInstance *inst, size_t *out);

/**
 * XY-optimal design over all pairs of evaluation arms, under the true `Γ`.
 *
 * # Safety
 * `weights` must hold `len` doubles; `objective` must be writable.
 */
enum IvbStatus ivb_xy_design(const struct IvbInstance *inst,
                             double *weights,
                             size_t len,
                             double *objective);

/**
 * E-optimal design; `objective` receives `κ₀`.
 *
 * # Safety
 * `weights` must hold `len` doubles; `objective` must be writable.
 */
enum IvbStatus ivb_e_design(const struct IvbInstance *inst,
                            double *weights,
                            size_t len,
                            double *objective);

/**
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_rho_star(const struct IvbInstance *inst, double gamma, double *out);

/**
 * One known-Γ elimination run with default parameters for the instance.
 *
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_run_cpeg(const struct IvbInstance *inst,
                            double delta,
                            uint64_t seed,
                            struct IvbTrialSummary *out);

/**
 * One unknown-Γ elimination run with default parameters for the instance.
 *
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_run_cpeug(const struct IvbInstance *inst,
                             double delta,
                             uint64_t seed,
                             struct IvbTrialSummary *out);

/**
 * Parses an experiment from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum IvbStatus ivb_experiment_from_toml(const char *toml, struct IvbExperiment **out);

/**
 * Loads a built-in preset by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum IvbStatus ivb_experiment_from_preset(const char *name, struct IvbExperiment **out);

/**
 * Overrides the trial count, master seed and worker count; a zero `workers` keeps the default.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum IvbStatus ivb_experiment_configure(struct IvbExperiment *exp,
                                        size_t trials,
                                        uint64_t master_seed,
                                        size_t workers);

/**
 * # Safety
 * `exp` must be null or a live handle.
 */
void ivb_experiment_free(struct IvbExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_experiment_run(const struct IvbExperiment *exp, struct IvbResults **out);

/**
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_results_len(const struct IvbResults *res, size_t *out);

/**
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum IvbStatus ivb_results_row(const struct IvbResults *res,
                               size_t index,
                               struct IvbResultRow *out);

/**
 * Writes `results.csv` and `summary.json` into `dir`.
 *
 * # Safety
 * `res` must be a live handle and `dir` a NUL-terminated string.
 */
enum IvbStatus ivb_results_write(const struct IvbResults *res, const char *dir);

/**
 * # Safety
 * `res` must be null or a live handle.
 */
void ivb_results_free(struct IvbResults *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVBANDIT_H */
