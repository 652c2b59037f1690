#ifndef ROC_H
#define ROC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of margins written by `roc_reduced_ks_point`.
 */
#define ROC_REDUCED_MARGINS 5

typedef enum {
  ROC_STATUS_OK = 0,
  ROC_STATUS_NULL_POINTER = 1,
  ROC_STATUS_INVALID_UTF8 = 2,
  ROC_STATUS_INVALID_INPUT = 3,
  ROC_STATUS_DOMAIN = 4,
  ROC_STATUS_EVALUATION = 5,
  ROC_STATUS_NOT_APPLICABLE = 6,
  ROC_STATUS_PARSE = 7,
  ROC_STATUS_IO = 8,
  ROC_STATUS_PANIC = 9,
} RocStatus;

/**
 * Opaque energy handle.
 */
typedef struct RocEnergy RocEnergy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Built-in energy by name. `n = 0` selects the default dimension.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
RocStatus roc_energy_from_zoo(const char *name, size_t n, RocEnergy **out);

/**
 * Energy from a ĝ expression in `l1..ln`. `regularity` is 0 for
 * c1-closure, 1 for c2-closure.
 *
 * # Safety
 * `expr` must be a NUL-terminated string; `out` must be writable.
 */
RocStatus roc_energy_from_ghat(const char *expr, size_t n, int regularity, RocEnergy **out);

/**
 * # Safety
 * `energy` must be NULL or a handle from this library not yet freed.
 */
void roc_energy_free(RocEnergy *energy);

/**
 * Dimension of the energy, 0 for a NULL handle.
 *
 * # Safety
 * `energy` must be NULL or a live handle.
 */
size_t roc_energy_dim(const RocEnergy *energy);

/**
 * W(F) for a row-major `n*n` matrix.
 *
 * # Safety
 * `f` must point to `n*n` doubles, `out` to one writable double.
 */
RocStatus roc_energy_eval(const RocEnergy *energy, const double *f, size_t n, double *out);

/**
 * ĝ at a weakly decreasing tuple of `n` positive values.
 *
 * # Safety
 * `s` must point to `n` doubles, `out` to one writable double.
 */
RocStatus roc_energy_ghat(const RocEnergy *energy, const double *s, size_t n, double *out);

/**
 * Ordered SVD `F = U diag(s) Vᵀ`. `u` and `v` may be NULL; otherwise they
 * receive row-major `n*n` factors.
 *
 * # Safety
 * `f` must point to `n*n` doubles, `s` to `n` writable doubles, `u` and
 * `v` to `n*n` writable doubles when not NULL.
 */
RocStatus roc_svd_ordered(const double *f, size_t n, double *s, double *u, double *v);

/**
 * Reduced planar criterion at `l1 > l2` with default tolerances.
 * `margins` receives RED-i.1, RED-i.2, RED-ii, RED-iii, RED-iv; `passed`
 * (may be NULL) is set to 1 when all hold.
 *
 * # Safety
 * `margins` must point to `ROC_REDUCED_MARGINS` writable doubles.
 */
RocStatus roc_reduced_ks_point(const RocEnergy *energy,
                               double l1,
                               double l2,
                               double *margins,
                               int *passed);

/**
 * Full check driven by a TOML configuration (the CLI `--config` format).
 * `report` receives a JSON string to release with `roc_string_free`;
 * `verdict` (may be NULL) receives 0 passed, 1 refuted, 2 inconclusive.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `report` must be writable.
 */
RocStatus roc_check(const char *config_toml, char **report, int *verdict);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void roc_string_free(char *s);

/**
 * Last error on the calling thread, or NULL. Valid until the next failing
 * call on the same thread.
 */
const char *roc_last_error_message(void);

const char *roc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROC_H */
