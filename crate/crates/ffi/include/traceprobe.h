/* C ABI for the traceprobe trace-estimation library. */

#ifndef TRACEPROBE_H
#define TRACEPROBE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_POINTER = 1,
  TP_STATUS_INVALID_ARGUMENT = 2,
  TP_STATUS_DIMENSION_MISMATCH = 3,
  TP_STATUS_SOLVER_FAILURE = 4,
  TP_STATUS_DOMAIN_ERROR = 5,
  TP_STATUS_IO_ERROR = 6,
  TP_STATUS_CORRUPT_CHECKPOINT = 7,
  TP_STATUS_TRAINING_FAILURE = 8,
  TP_STATUS_INTERNAL_ERROR = 9,
} TpStatus;

// An ensemble matrix (opaque).
typedef struct TpMatrix TpMatrix;

// A matrix-free operator: the matrix itself or its inverse (opaque).
typedef struct TpOperator TpOperator;

// Trained probing vectors plus an additive bias correction (opaque).
typedef struct TpProbingSet TpProbingSet;

// Training parameters; see `tp_train_config_default` for the published
// L=100 column at desk scale.
typedef struct TpTrainConfig {
  uint64_t l;
  uint64_t n_p;
  uint64_t n_z;
  double eta;
  double alpha;
  uint64_t n_r;
  uint64_t n_training;
  uint64_t bootstrap_len;
  uint64_t seed;
  double noise_sigma;
  double solver_tol;
  // 0 means the default cap of 10 * L.
  uint64_t solver_max_iter;
} TpTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message for the calling thread; empty until a call fails.
// The pointer stays valid until the next failing call on this thread.
const char *tp_last_error_message(void);

// Generate the ensemble member `(l, seed, noise_sigma)`.
//
// # Safety
// `out` must be a valid pointer to a `TpMatrix*`.
enum TpStatus tp_matrix_generate(uint64_t l,
                                 uint64_t seed,
                                 double noise_sigma,
                                 struct TpMatrix **out);

// # Safety
// `matrix` must be null or a pointer from `tp_matrix_generate`, not yet
// freed.
void tp_matrix_free(struct TpMatrix *matrix);

// # Safety
// `matrix` and `out` must be valid pointers.
enum TpStatus tp_matrix_dim(const struct TpMatrix *matrix, uint64_t *out);

// `out = M v`. Both buffers must hold `tp_matrix_dim` doubles.
//
// # Safety
// `matrix` must be a live handle; `v` and `out` must point to `len`
// readable/writable doubles, with `len` equal to the matrix dimension.
enum TpStatus tp_matrix_apply(const struct TpMatrix *matrix,
                              const double *v,
                              size_t len,
                              double *out);

// `out = M^T v`.
//
// # Safety
// As for `tp_matrix_apply`.
enum TpStatus tp_matrix_apply_transpose(const struct TpMatrix *matrix,
                                        const double *v,
                                        size_t len,
                                        double *out);

// Operator `A = M` (the matrix itself).
//
// # Safety
// `matrix` must be a live handle; `out` must be a valid pointer.
enum TpStatus tp_operator_direct(const struct TpMatrix *matrix, struct TpOperator **out);

// Operator `A = M^{-1}` backed by BiCGSTAB with the given relative
// residual tolerance; `max_iter = 0` means the default cap of 10 * L.
//
// # Safety
// `matrix` must be a live handle; `out` must be a valid pointer.
enum TpStatus tp_operator_inverse(const struct TpMatrix *matrix,
                                  double tol,
                                  uint64_t max_iter,
                                  struct TpOperator **out);

// # Safety
// `op` must be null or a live operator handle, not yet freed.
void tp_operator_free(struct TpOperator *op);

// # Safety
// `op` and `out` must be valid pointers.
enum TpStatus tp_operator_dim(const struct TpOperator *op, uint64_t *out);

// `out = A v`. For inverse operators this runs one solve.
//
// # Safety
// `op` must be a live handle; `v` and `out` must point to `len` doubles
// with `len` equal to the operator dimension.
enum TpStatus tp_operator_apply(const struct TpOperator *op,
                                const double *v,
                                size_t len,
                                double *out);

// Exact trace via one application per basis vector (L solves for inverse
// operators).
//
// # Safety
// `op` and `out` must be valid pointers.
enum TpStatus tp_operator_exact_trace(const struct TpOperator *op, double *out);

// Hutchinson estimate with `n_z` Rademacher vectors drawn from `seed`.
// `std_error` may be null if only the estimate is wanted.
//
// # Safety
// `op` and `estimate` must be valid pointers; `std_error` may be null.
enum TpStatus tp_operator_hutchinson(const struct TpOperator *op,
                                     uint64_t n_z,
                                     uint64_t seed,
                                     double *estimate,
                                     double *std_error);

// The published L=100 parameter column at desk scale.
//
// # Safety
// `out` must be a valid pointer.
enum TpStatus tp_train_config_default(struct TpTrainConfig *out);

// Run the full training loop (blocking) and return the trained vectors.
//
// # Safety
// `config` and `out` must be valid pointers.
enum TpStatus tp_train(const struct TpTrainConfig *config, struct TpProbingSet **out);

// Load the probing vectors of a training checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
enum TpStatus tp_probing_load(const char *path, struct TpProbingSet **out);

// # Safety
// `set` must be null or a live handle, not yet freed.
void tp_probing_free(struct TpProbingSet *set);

// Vector length and count of a probing set.
//
// # Safety
// All pointers must be valid.
enum TpStatus tp_probing_counts(const struct TpProbingSet *set, uint64_t *l, uint64_t *n_p);

// Set the additive bias correction added by `tp_probing_estimate`.
//
// # Safety
// `set` must be a live handle.
enum TpStatus tp_probing_set_bias(struct TpProbingSet *set, double d_bar);

// # Safety
// `set` and `out` must be valid pointers.
enum TpStatus tp_probing_bias(const struct TpProbingSet *set, double *out);

// Trace estimate `sum_l p_l^T A p_l + d_bar`: `n_p` operator applications.
//
// # Safety
// `set`, `op`, and `out` must be valid pointers.
enum TpStatus tp_probing_estimate(const struct TpProbingSet *set,
                                  const struct TpOperator *op,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACEPROBE_H */
