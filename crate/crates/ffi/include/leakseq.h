/* Copyright 2026 The leakseq Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef LEAKSEQ_H
#define LEAKSEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LeakseqStatus {
  LEAKSEQ_STATUS_OK = 0,
  LEAKSEQ_STATUS_NULL_POINTER = 1,
  LEAKSEQ_STATUS_INVALID_ARGUMENT = 2,
  LEAKSEQ_STATUS_NUMERIC = 3,
  LEAKSEQ_STATUS_SINGULAR_PROJECTION = 4,
  LEAKSEQ_STATUS_DEGENERATE_INVARIANTS = 5,
  LEAKSEQ_STATUS_MISSING_DEPENDENCY = 6,
  LEAKSEQ_STATUS_IO = 7,
  LEAKSEQ_STATUS_SCHEMA = 8,
  LEAKSEQ_STATUS_VERIFICATION = 9,
  LEAKSEQ_STATUS_PANIC = 10,
} LeakseqStatus;

typedef enum LeakseqInteraction {
  LEAKSEQ_INTERACTION_ZZ = 0,
  LEAKSEQ_INTERACTION_XX_PLUS_YY = 1,
} LeakseqInteraction;

// Solved sequences keyed by length, used for warm starts.
typedef struct LeakseqArchive LeakseqArchive;

// Frozen noise ensemble.
typedef struct LeakseqEnsemble LeakseqEnsemble;

// Rotation angles of one sequence.
typedef struct LeakseqSequence LeakseqSequence;

// Noise settings; fill with [`leakseq_noise_config_default`] first.
typedef struct LeakseqNoiseConfig {
  double sigma_logical;
  double sigma_leakage;
  double sigma_local;
  bool local_enabled;
  bool virtual_z;
  size_t m_realizations;
  uint64_t seed;
} LeakseqNoiseConfig;

// Optimizer settings; fill with [`leakseq_optimizer_options_default`] first.
typedef struct LeakseqOptimizerOptions {
  size_t history_size;
  double grad_tol;
  double rel_f_tol;
  size_t max_iterations;
  double fd_step_scale;
  size_t restarts;
} LeakseqOptimizerOptions;

typedef struct LeakseqMetrics {
  double j_value;
  double gate_error;
  double pe_distance;
  double pe_error;
} LeakseqMetrics;

typedef struct LeakseqOptimizationSummary {
  double j_value;
  double in_sample_gate_error;
  double in_sample_pe_error;
  double out_of_sample_gate_error;
  double out_of_sample_pe_error;
  size_t iterations;
  bool converged;
} LeakseqOptimizationSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len - 1` bytes) and returns the full message
// length in bytes, excluding the terminator. `buf` may be null to query the
// length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t leakseq_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *leakseq_version(void);

// # Safety
// `out` must be null or valid for writes.
enum LeakseqStatus leakseq_noise_config_default(struct LeakseqNoiseConfig *out);

// # Safety
// `out` must be null or valid for writes.
enum LeakseqStatus leakseq_optimizer_options_default(struct LeakseqOptimizerOptions *out);

// Draws an ensemble for sequences of `n_steps` steps.
//
// # Safety
// `config` must be null or valid; `out` must be null or valid for writes.
enum LeakseqStatus leakseq_ensemble_sample(const struct LeakseqNoiseConfig *config,
                                           size_t n_steps,
                                           struct LeakseqEnsemble **out);

// # Safety
// `ensemble` must be null or a live handle.
size_t leakseq_ensemble_len(const struct LeakseqEnsemble *ensemble);

// # Safety
// `ensemble` must be null or a handle not yet freed.
void leakseq_ensemble_free(struct LeakseqEnsemble *ensemble);

// Creates a sequence from `6 * n_steps` angles ordered
// `alpha1, beta1, gamma1, alpha2, beta2, gamma2` per step.
//
// # Safety
// `angles` must point to `6 * n_steps` doubles; `out` must be valid for writes.
enum LeakseqStatus leakseq_sequence_new(enum LeakseqInteraction interaction,
                                        const double *angles,
                                        size_t n_steps,
                                        struct LeakseqSequence **out);

// # Safety
// `seq` must be null or a live handle.
size_t leakseq_sequence_n_steps(const struct LeakseqSequence *seq);

// Copies the `6 * n_steps` angles into `out`, which holds `len` doubles.
//
// # Safety
// `seq` must be a live handle; `out` must point to `len` writable doubles.
enum LeakseqStatus leakseq_sequence_angles(const struct LeakseqSequence *seq,
                                           double *out,
                                           size_t len);

// # Safety
// `seq` must be null or a handle not yet freed.
void leakseq_sequence_free(struct LeakseqSequence *seq);

// Mean of gate error plus perfect-entangler distance over the ensemble.
//
// # Safety
// Handles must be live; `out` must be valid for writes.
enum LeakseqStatus leakseq_functional_j(const struct LeakseqSequence *seq,
                                        const struct LeakseqEnsemble *ensemble,
                                        double *out);

// Ensemble-mean figures of merit; `pe_error` uses the raw logical block.
//
// # Safety
// Handles must be live; `out` must be valid for writes.
enum LeakseqStatus leakseq_ensemble_metrics(const struct LeakseqSequence *seq,
                                            const struct LeakseqEnsemble *ensemble,
                                            struct LeakseqMetrics *out);

// # Safety
// `out` must be valid for writes.
enum LeakseqStatus leakseq_archive_new(struct LeakseqArchive **out);

// Loads the solutions of a JSON archive written by the harness.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum LeakseqStatus leakseq_archive_load(const char *path, struct LeakseqArchive **out);

// Stores a copy of `seq` under its length, replacing any previous entry.
//
// # Safety
// Handles must be live.
enum LeakseqStatus leakseq_archive_insert(struct LeakseqArchive *archive,
                                          const struct LeakseqSequence *seq);

// Copies the stored solution of length `n` into a new handle.
//
// # Safety
// `archive` must be live; `out` must be valid for writes.
enum LeakseqStatus leakseq_archive_get(const struct LeakseqArchive *archive,
                                       size_t n,
                                       struct LeakseqSequence **out);

// # Safety
// `archive` must be null or a handle not yet freed.
void leakseq_archive_free(struct LeakseqArchive *archive);

// Optimizes a length-`n` sequence.
//
// `options` and `archive` may be null (defaults and an empty archive).
// On success `*out_seq` receives a new sequence handle and `summary`, if
// not null, the figures of merit.
//
// # Safety
// Non-null pointers must be valid; `out_seq` must be valid for writes.
enum LeakseqStatus leakseq_optimize(size_t n,
                                    enum LeakseqInteraction interaction,
                                    const struct LeakseqNoiseConfig *config,
                                    const struct LeakseqOptimizerOptions *options,
                                    const struct LeakseqArchive *archive,
                                    size_t eval_m,
                                    struct LeakseqSequence **out_seq,
                                    struct LeakseqOptimizationSummary *summary);

// Makhlin invariants `(g1, g2, g3)` of a 4x4 block.
//
// # Safety
// `re`, `im` must point to 16 doubles; `out` to 3 writable doubles.
enum LeakseqStatus leakseq_makhlin_invariants(const double *re, const double *im, double *out);

// Sign-corrected distance to the perfect entanglers.
//
// # Safety
// `re`, `im` must point to 16 doubles; `out` must be valid for writes.
enum LeakseqStatus leakseq_pe_distance(const double *re, const double *im, double *out);

// Canonical Weyl chamber coordinates `(c1, c2, c3)`.
//
// # Safety
// `re`, `im` must point to 16 doubles; `out` to 3 writable doubles.
enum LeakseqStatus leakseq_weyl_coordinates(const double *re, const double *im, double *out);

// Perfect-entangler fidelity of canonical coordinates `c[0..3]`.
//
// # Safety
// `c` must point to 3 doubles; `out` must be valid for writes.
enum LeakseqStatus leakseq_pe_fidelity(const double *c, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEAKSEQ_H */
