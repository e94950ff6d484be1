#ifndef PTYCHONOISE_H
#define PTYCHONOISE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtnStatus {
  PTN_STATUS_OK = 0,
  PTN_STATUS_NULL_POINTER = 1,
  PTN_STATUS_INVALID_ARGUMENT = 2,
  PTN_STATUS_CONFIG = 3,
  PTN_STATUS_IO = 4,
  PTN_STATUS_FORMAT = 5,
  PTN_STATUS_UNKNOWN_SCHEME = 6,
  PTN_STATUS_GEOMETRY = 7,
  PTN_STATUS_NUMERIC = 8,
  PTN_STATUS_BUFFER_TOO_SMALL = 9,
  PTN_STATUS_NOT_AVAILABLE = 10,
  PTN_STATUS_PANIC = 11,
} PtnStatus;

/**
 * A finished reconstruction.
 */
typedef struct PtnReconstruction PtnReconstruction;

/**
 * A benchmark record.
 */
typedef struct PtnRecord PtnRecord;

/**
 * One simulated noisy realization plus its ground truth.
 */
typedef struct PtnSimulation PtnSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *ptn_last_error(void);

/**
 * Simulates realization `realization` of the experiment described by the TOML text `config`.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out_sim` a valid pointer.
 */
enum PtnStatus ptn_simulate(const char *config, size_t realization, struct PtnSimulation **out_sim);

/**
 * Loads a simulation written by `ptn_simulation_save` or the `simulate` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_sim` a valid pointer.
 */
enum PtnStatus ptn_simulation_load(const char *path, struct PtnSimulation **out_sim);

/**
 * # Safety
 * `sim` must come from this library and `path` be a NUL-terminated string.
 */
enum PtnStatus ptn_simulation_save(const struct PtnSimulation *sim, const char *path);

/**
 * Number of diffraction patterns and their width and height.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PtnStatus ptn_simulation_shape(const struct PtnSimulation *sim,
                                    size_t *count,
                                    size_t *width,
                                    size_t *height);

/**
 * Copies pattern `index` into `buf` (at least width*height doubles).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum PtnStatus ptn_simulation_copy_pattern(const struct PtnSimulation *sim,
                                           size_t index,
                                           double *buf,
                                           size_t len);

/**
 * Position-ordering seed the benchmark uses for this simulation's config.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PtnStatus ptn_simulation_default_seed(const struct PtnSimulation *sim, uint64_t *seed);

/**
 * # Safety
 * `sim` must come from this library or be NULL; it must not be used afterwards.
 */
void ptn_simulation_free(struct PtnSimulation *sim);

/**
 * Reconstructs with `scheme` ("1" to "20", or "adapter") from the constant start.
 *
 * # Safety
 * `sim` must come from this library, `scheme` be NUL-terminated and `out_rec` valid.
 */
enum PtnStatus ptn_reconstruct(const struct PtnSimulation *sim,
                               const char *scheme,
                               uint64_t seed,
                               struct PtnReconstruction **out_rec);

/**
 * # Safety
 * All pointers must be valid.
 */
enum PtnStatus ptn_reconstruction_final_error(const struct PtnReconstruction *rec, double *error);

/**
 * Number of logged (sweep, error) points.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PtnStatus ptn_reconstruction_curve_len(const struct PtnReconstruction *rec, size_t *len);

/**
 * Copies the error after each sweep into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum PtnStatus ptn_reconstruction_copy_curve(const struct PtnReconstruction *rec,
                                             double *buf,
                                             size_t len);

/**
 * # Safety
 * All pointers must be valid.
 */
enum PtnStatus ptn_reconstruction_object_dims(const struct PtnReconstruction *rec,
                                              size_t *width,
                                              size_t *height);

/**
 * Copies the reconstructed object as interleaved `re, im` pairs (2*width*height doubles).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum PtnStatus ptn_reconstruction_copy_object(const struct PtnReconstruction *rec,
                                              double *buf,
                                              size_t len);

/**
 * # Safety
 * `rec` must come from this library or be NULL; it must not be used afterwards.
 */
void ptn_reconstruction_free(struct PtnReconstruction *rec);

/**
 * Runs the full benchmark described by the TOML text `config`.
 *
 * # Safety
 * `config` must be NUL-terminated and `out_record` valid.
 */
enum PtnStatus ptn_bench(const char *config, struct PtnRecord **out_record);

/**
 * Writes summary.csv, curves.csv and record.json into `dir`.
 *
 * # Safety
 * `record` must come from this library and `dir` be NUL-terminated.
 */
enum PtnStatus ptn_record_export(const struct PtnRecord *record, const char *dir);

/**
 * Loads and verifies a record.json.
 *
 * # Safety
 * `path` must be NUL-terminated and `out_record` valid.
 */
enum PtnStatus ptn_record_load(const char *path, struct PtnRecord **out_record);

/**
 * Median final error of `run` over its completed realizations.
 *
 * # Safety
 * All pointers must be valid and `run` NUL-terminated.
 */
enum PtnStatus ptn_record_median(const struct PtnRecord *record, const char *run, double *median);

/**
 * Paired comparison: median of `candidate - baseline` and the sign-test p-value.
 *
 * # Safety
 * All pointers must be valid and the run names NUL-terminated.
 */
enum PtnStatus ptn_compare(const struct PtnRecord *record,
                           const char *baseline,
                           const char *candidate,
                           double *median_difference,
                           double *p_value);

/**
 * # Safety
 * `record` must come from this library or be NULL; it must not be used afterwards.
 */
void ptn_record_free(struct PtnRecord *record);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTYCHONOISE_H */
