#ifndef QFILT_H
#define QFILT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QfStatus {
  QF_STATUS_OK = 0,
  QF_STATUS_NULL_POINTER = 1,
  QF_STATUS_INVALID_ARGUMENT = 2,
  QF_STATUS_NUMERICAL = 3,
  QF_STATUS_IO = 4,
  QF_STATUS_PANIC = 5,
} QfStatus;

typedef enum QfScheme {
  QF_SCHEME_HOMODYNE = 0,
  QF_SCHEME_COUNTING = 1,
  // Homodyne with detector efficiency set by `kappa`.
  QF_SCHEME_IMPERFECT = 2,
} QfScheme;

typedef enum QfFilterKind {
  QF_FILTER_KIND_ZAKAI = 0,
  QF_FILTER_KIND_BKS = 1,
} QfFilterKind;

// A running filter.
typedef struct QfFilter QfFilter;

// Lindblad model: Hamiltonian plus coupling operators.
typedef struct QfModel QfModel;

// An observation record.
typedef struct QfRecord QfRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qf_version(void);

// Message for the last failing call on this thread; empty after a
// successful call. Valid until the next call into the library.
const char *qf_last_error_message(void);

// Builds a model from a Hamiltonian and `n_channels` coupling operators
// stored back to back in `channels`.
//
// # Safety
// `hamiltonian` must hold `2·dim·dim` doubles and `channels`
// `n_channels·2·dim·dim`; `out` must be writable.
enum QfStatus qf_model_new(size_t dim,
                           const double *hamiltonian,
                           const double *channels,
                           size_t n_channels,
                           struct QfModel **out);

// # Safety
// `model` must come from [`qf_model_new`] and not be used afterwards.
void qf_model_free(struct QfModel *model);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum QfStatus qf_model_dim(const struct QfModel *model, size_t *out);

// Unconditional state exp(t𝓛')(ρ0).
//
// # Safety
// `rho0` and `out` must hold `2·dim·dim` doubles.
enum QfStatus qf_semigroup_evolve(const struct QfModel *model,
                                  const double *rho0,
                                  double t,
                                  double *out);

// Creates a filter at `rho0`. The model must have exactly one channel.
// `scheme_kind` takes a [`QfScheme`] value and `kind` a [`QfFilterKind`].
//
// # Safety
// `model` must be a live handle, `rho0` must hold `2·dim·dim` doubles and
// `out` must be writable.
enum QfStatus qf_filter_new(const struct QfModel *model,
                            uint32_t scheme_kind,
                            double kappa,
                            uint32_t kind,
                            const double *rho0,
                            struct QfFilter **out);

// # Safety
// `filter` must come from [`qf_filter_new`] and not be used afterwards.
void qf_filter_free(struct QfFilter *filter);

// Advances the filter by one increment `dy` over `dt`. On failure the
// state is left unchanged.
//
// # Safety
// `filter` must be a live handle.
enum QfStatus qf_filter_step(struct QfFilter *filter, double dy, double dt);

// Feeds every increment of `record` through the filter.
//
// # Safety
// `filter` and `record` must be live handles.
enum QfStatus qf_filter_run_record(struct QfFilter *filter, const struct QfRecord *record);

// Copies the current filter matrix (unnormalized for Zakai filters).
//
// # Safety
// `out` must hold `2·dim·dim` doubles.
enum QfStatus qf_filter_state(const struct QfFilter *filter, double *out);

// Normalized expectation trace(ϖX)/trace(ϖ).
//
// # Safety
// `x` must hold `2·dim·dim` doubles; `re` and `im` must be writable.
enum QfStatus qf_filter_expectation(const struct QfFilter *filter,
                                    const double *x,
                                    double *re,
                                    double *im);

// Record likelihood accumulated so far.
//
// # Safety
// `out` must be writable.
enum QfStatus qf_filter_likelihood(const struct QfFilter *filter, double *out);

// Samples an observation record of `horizon / dt` steps. `scheme_kind`
// takes a [`QfScheme`] value.
//
// # Safety
// `model` must be a live handle, `rho0` must hold `2·dim·dim` doubles and
// `out` must be writable.
enum QfStatus qf_simulate(const struct QfModel *model,
                          uint32_t scheme_kind,
                          double kappa,
                          const double *rho0,
                          double horizon,
                          double dt,
                          uint64_t seed,
                          struct QfRecord **out);

// # Safety
// `record` must come from this library and not be used afterwards.
void qf_record_free(struct QfRecord *record);

// # Safety
// `steps` and `dt` must be writable.
enum QfStatus qf_record_info(const struct QfRecord *record, size_t *steps, double *dt);

// Copies the increments into `out`, which must hold `len` ≥ steps doubles.
//
// # Safety
// `out` must hold `len` doubles.
enum QfStatus qf_record_increments(const struct QfRecord *record, double *out, size_t len);

// # Safety
// `path` must be a NUL-terminated UTF-8 string.
enum QfStatus qf_record_write(const struct QfRecord *record, const char *path);

// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum QfStatus qf_record_read(const char *path, struct QfRecord **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QFILT_H */
