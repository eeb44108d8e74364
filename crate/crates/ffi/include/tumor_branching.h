#ifndef TUMOR_BRANCHING_H
#define TUMOR_BRANCHING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbMatrix {
  TB_MATRIX_Q = 0,
  TB_MATRIX_A = 1,
  TB_MATRIX_A_SHIFT = 2,
  TB_MATRIX_SKELETON = 3,
} TbMatrix;

/**
 * Status codes; the numeric values match the command-line exit codes
 * where the two overlap.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_CONFIG = 2,
  TB_STATUS_NUMERICS = 3,
  TB_STATUS_INVALID_ARGUMENT = 4,
  TB_STATUS_BUFFER_TOO_SMALL = 5,
  TB_STATUS_PANIC = 6,
} TbStatus;

typedef enum TbTailPolicy {
  TB_TAIL_POLICY_KILL = 0,
  TB_TAIL_POLICY_REFLECT = 1,
} TbTailPolicy;

/**
 * Opaque model handle.
 */
typedef struct TbModel TbModel;

typedef struct TbKappa0 {
  double green;
  double quadrature;
  double quadrature_error;
} TbKappa0;

typedef struct TbSurvival {
  size_t replicas;
  size_t extinct;
  size_t censored;
  /**
   * Mean population size at the horizon over all replicas.
   */
  double mean_total;
} TbSurvival;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Gompertz chain truncated at `k` with `β(x) = kappa · min(x, x_cap)^r`.
 * A non-positive `x_cap` means no cap; `tail_policy` is a `TbTailPolicy`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TbStatus tb_model_gompertz(double a,
                                double n,
                                size_t k,
                                uint32_t tail_policy,
                                double kappa,
                                double r,
                                double x_cap,
                                struct TbModel **out);

/**
 * Chain from `len` triples `(from[i], to[i], rate[i])` on types `1..=k`,
 * `to = 0` meaning absorption, with per-type creation rates `beta[0..k]`.
 *
 * # Safety
 * `from`, `to` and `rate` must point to `len` elements, `beta` to `k`
 * elements, and `out` to writable storage for one handle.
 */
enum TbStatus tb_model_from_triples(const size_t *from,
                                    const size_t *to,
                                    const double *rate,
                                    size_t len,
                                    size_t k,
                                    uint32_t tail_policy,
                                    const double *beta,
                                    struct TbModel **out);

/**
 * Model described by a TOML experiment config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TbStatus tb_model_from_config(const char *path, struct TbModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from a `tb_model_*` constructor and not be used again.
 */
void tb_model_free(struct TbModel *model);

/**
 * Number of types, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t tb_model_size(const struct TbModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TbStatus tb_kappa0(const struct TbModel *model, double tol, struct TbKappa0 *out);

/**
 * Perron root and normalized eigenvectors (`Σν = 1`, `ν·μ = 1`) of the
 * `TbMatrix` selected by `matrix`. `nu` and `mu` may be null when not wanted.
 *
 * # Safety
 * `model` must be a live handle, `lambda` writable, and non-null `nu`/`mu`
 * must hold `len` elements.
 */
enum TbStatus tb_perron(const struct TbModel *model,
                        uint32_t matrix,
                        double tol,
                        size_t max_iter,
                        double *lambda,
                        double *nu,
                        double *mu,
                        size_t len);

/**
 * Extinction probabilities per starting type.
 *
 * # Safety
 * `model` must be a live handle and `q` must hold `len` elements.
 */
enum TbStatus tb_extinction(const struct TbModel *model,
                            double tol,
                            size_t max_iter,
                            double *q,
                            size_t len);

/**
 * Simulates `replicas` populations started from one particle of
 * `initial_type` up to `horizon`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TbStatus tb_simulate(const struct TbModel *model,
                          size_t initial_type,
                          double horizon,
                          size_t replicas,
                          uint64_t seed,
                          struct TbSurvival *out);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next `tb_*` call on the same thread.
 */
const char *tb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUMOR_BRANCHING_H */
