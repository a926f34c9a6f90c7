#ifndef CONTRATENSOR_H
#define CONTRATENSOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. The numeric values match the CLI exit
 * codes where the two overlap.
 */
typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_INVALID_ARGUMENT = 2,
  CT_STATUS_DATA_ERROR = 3,
  CT_STATUS_NUMERICAL_ERROR = 4,
  CT_STATUS_PANIC = 5,
} CtStatus;

/**
 * Weighted rank-one terms from a decomposition.
 */
typedef struct CtDecomposition CtDecomposition;

/**
 * Fitted contrastive model.
 */
typedef struct CtModel CtModel;

/**
 * Symmetric fourth-order tensor.
 */
typedef struct CtTensor CtTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *ct_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ct_version(void);

/**
 * Sample fourth-order cumulant of an `n x p` row-major data matrix.
 *
 * # Safety
 * `rows` must point to `n * p` doubles and `out` to writable storage.
 */
enum CtStatus ct_tensor_from_data(const double *rows, size_t n, size_t p, struct CtTensor **out);

/**
 * Tensor from `p^4` entries in row-major `(i, j, k, l)` order, symmetrized.
 *
 * # Safety
 * `entries` must point to `p^4` doubles and `out` to writable storage.
 */
enum CtStatus ct_tensor_from_entries(const double *entries, size_t p, struct CtTensor **out);

/**
 * Dimension `p` of a tensor, or 0 for null.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t ct_tensor_dim(const struct CtTensor *t);

/**
 * Copies the `p^4` entries into `out`.
 *
 * # Safety
 * `out` must have room for `p^4` doubles.
 */
enum CtStatus ct_tensor_entries(const struct CtTensor *t, double *out);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void ct_tensor_free(struct CtTensor *t);

/**
 * Hierarchical decomposition with at most `rank` terms.
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum CtStatus ct_htd(const struct CtTensor *t, size_t rank, struct CtDecomposition **out);

/**
 * Number of terms, or 0 for null.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
size_t ct_decomposition_len(const struct CtDecomposition *d);

/**
 * Weight and unit vector of term `index`; `vector` needs room for `p`
 * doubles where `p` is the tensor dimension.
 *
 * # Safety
 * `d` must be a live handle; `weight` and `vector` writable.
 */
enum CtStatus ct_decomposition_term(const struct CtDecomposition *d,
                                    size_t index,
                                    double *weight,
                                    double *vector);

/**
 * # Safety
 * `d` must be null or a handle not yet freed.
 */
void ct_decomposition_free(struct CtDecomposition *d);

/**
 * General contrastive fit with `r` background and `l` foreground terms.
 * `restarts == 0` selects the default.
 *
 * # Safety
 * Tensor arguments must be live handles and `out` writable.
 */
enum CtStatus ct_fit_general(const struct CtTensor *k4x,
                             const struct CtTensor *k4y,
                             size_t r,
                             size_t l,
                             uint64_t seed,
                             size_t restarts,
                             struct CtModel **out);

/**
 * Proportional fit. A NaN `gamma` estimates it, which needs the background
 * rank `r`; `r == 0` means unknown.
 *
 * # Safety
 * Tensor arguments must be live handles and `out` writable.
 */
enum CtStatus ct_fit_proportional(const struct CtTensor *k4x,
                                  const struct CtTensor *k4y,
                                  size_t l,
                                  double gamma,
                                  size_t r,
                                  struct CtModel **out);

/**
 * Input dimension the model expects (original space when PCA is attached).
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t ct_model_input_dim(const struct CtModel *m);

/**
 * Number of foreground patterns, or 0 for null.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t ct_model_num_patterns(const struct CtModel *m);

/**
 * Foreground pattern `index` in model coordinates with its weight. `vector`
 * needs room for the model dimension.
 *
 * # Safety
 * `m` must be a live handle; `nu` and `vector` writable.
 */
enum CtStatus ct_model_pattern(const struct CtModel *m, size_t index, double *nu, double *vector);

/**
 * γ of a proportional model, NaN otherwise.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
double ct_model_gamma(const struct CtModel *m);

/**
 * Coordinates of each row of an `n x p` matrix on patterns `i` and `j`
 * (0-based), written row-major into `out` (`n * 2` doubles).
 *
 * # Safety
 * `rows` must hold `n * p` doubles and `out` `n * 2`.
 */
enum CtStatus ct_model_project(const struct CtModel *m,
                               const double *rows,
                               size_t n,
                               size_t p,
                               size_t i,
                               size_t j,
                               double *out);

/**
 * Serializes the model. Release the string with `ct_string_free`.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CtStatus ct_model_to_json(const struct CtModel *m, char **out);

/**
 * Parses and validates a model document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum CtStatus ct_model_from_json(const char *json, struct CtModel **out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void ct_model_free(struct CtModel *m);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void ct_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTRATENSOR_H */
