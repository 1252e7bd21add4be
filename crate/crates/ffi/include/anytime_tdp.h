/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ANYTIME_TDP_H
#define ANYTIME_TDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all functions.
typedef enum TdpStatus {
  TDP_STATUS_OK = 0,
  // A required pointer argument was NULL.
  TDP_STATUS_NULL_POINTER = 1,
  // Malformed data: wrong lengths, negative e-values, bad indices.
  TDP_STATUS_INPUT_ERROR = 2,
  // Invalid parameters such as alpha outside (0, 1).
  TDP_STATUS_CONFIG_ERROR = 3,
  // A numeric routine failed.
  TDP_STATUS_NUMERIC_ERROR = 4,
  // Exhaustive closed testing was asked for more than 20 hypotheses.
  TDP_STATUS_TOO_LARGE = 5,
  // The call does not fit the engine's mode or stage.
  TDP_STATUS_INVALID_STATE = 6,
  // A Rust panic was caught at the boundary. This is a bug.
  TDP_STATUS_PANIC = 7,
} TdpStatus;

typedef enum TdpFamilyKind {
  TDP_FAMILY_KIND_GAUSSIAN_LR = 0,
  TDP_FAMILY_KIND_T_LR = 1,
  TDP_FAMILY_KIND_MOM = 2,
} TdpFamilyKind;

// Streaming engine: per-hypothesis e-values plus bound trackers.
typedef struct TdpEngine TdpEngine;

// E-process family for observation input.
typedef struct TdpFamily {
  enum TdpFamilyKind kind;
  // Effect size for `GaussianLr` and `TLr`.
  double delta;
  // Minimal relevant effect for `Mom`.
  double delta_min;
  // Quadrature nodes for `Mom`; 0 selects the default of 64.
  size_t quadrature_nodes;
  // Nonzero to mirror the moment prior onto negative effects.
  uint8_t two_sided;
} TdpFamily;

// Bound for one discovery set after the latest update.
typedef struct TdpBound {
  uint64_t time;
  // Upper bound on the number of true nulls in the set at this time.
  size_t c_inst;
  // Running minimum of `c_inst`.
  size_t c_ard;
  double tdp_inst;
  double tdp_ard;
} TdpBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *tdp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *tdp_version(void);

// Creates an engine over `m` hypotheses at level `alpha`.
//
// With `family` NULL the engine takes precomputed e-values through
// [`tdp_engine_push_evalues`]; otherwise it builds e-processes from raw
// observations pushed with [`tdp_engine_push_observations`].
//
// # Safety
// `family` must be NULL or point to a valid `TdpFamily`; `out_engine` must
// be valid for writes.
enum TdpStatus tdp_engine_new(size_t m,
                              double alpha,
                              const struct TdpFamily *family,
                              struct TdpEngine **out_engine);

// Releases an engine. NULL is ignored.
//
// # Safety
// `engine` must be NULL or come from [`tdp_engine_new`] and not be used
// afterwards.
void tdp_engine_free(struct TdpEngine *engine);

// Registers a discovery set (1-based indices) and returns its id through
// `out_set_id`. Sets can only be added before the first update.
//
// # Safety
// `indices` must be valid for `len` reads and `out_set_id` for writes.
enum TdpStatus tdp_engine_add_set(struct TdpEngine *engine,
                                  const size_t *indices,
                                  size_t len,
                                  size_t *out_set_id);

// Feeds one subject's observations (`len` must equal `m`).
//
// # Safety
// `ys` must be valid for `len` reads.
enum TdpStatus tdp_engine_push_observations(struct TdpEngine *engine, const double *ys, size_t len);

// Feeds the next row of e-values (`len` must equal `m`).
//
// # Safety
// `e` must be valid for `len` reads.
enum TdpStatus tdp_engine_push_evalues(struct TdpEngine *engine, const double *e, size_t len);

// Latest bound for a set. Before any update it is the trivial bound.
//
// # Safety
// `out_bound` must be valid for writes.
enum TdpStatus tdp_engine_bound(struct TdpEngine *engine,
                                size_t set_id,
                                struct TdpBound *out_bound);

// Current e-value of hypothesis `index` (1-based).
//
// # Safety
// `out_value` must be valid for writes.
enum TdpStatus tdp_engine_evalue(struct TdpEngine *engine, size_t index, double *out_value);

// Number of updates absorbed so far.
//
// # Safety
// `out_time` must be valid for writes.
enum TdpStatus tdp_engine_time(struct TdpEngine *engine, uint64_t *out_time);

// Closed-testing bound on the number of true nulls in `r` via the
// sort-and-scan shortcut, `O(m log m)`.
//
// # Safety
// `e` must be valid for `m` reads, `r` for `r_len` reads, `out_c` for writes.
enum TdpStatus tdp_shortcut_bound(const double *e,
                                  size_t m,
                                  const size_t *r,
                                  size_t r_len,
                                  double alpha,
                                  size_t *out_c);

// Same bound by exhaustive closed testing; limited to `m <= 20`.
//
// # Safety
// As for [`tdp_shortcut_bound`].
enum TdpStatus tdp_brute_force_bound(const double *e,
                                     size_t m,
                                     const size_t *r,
                                     size_t r_len,
                                     double alpha,
                                     size_t *out_c);

// Converts one e-process path into its p-process, writing `len` values.
//
// # Safety
// `e` must be valid for `len` reads and `out_p` for `len` writes.
enum TdpStatus tdp_e_to_p(const double *e, size_t len, double *out_p);

// t likelihood ratio at statistic `t` from `n_t` observations with
// `lambda` degrees of freedom, against effect size `delta`.
//
// # Safety
// `out_value` must be valid for writes.
enum TdpStatus tdp_t_lr(double t, uint64_t n_t, uint64_t lambda, double delta, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANYTIME_TDP_H */
