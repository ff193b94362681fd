#ifndef GRIDFORM_SSA_H
#define GRIDFORM_SSA_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum GssaStatus {
  GSSA_STATUS_OK = 0,
  // Null pointer, short buffer or out-of-range index.
  GSSA_STATUS_INVALID_ARGUMENT = 1,
  // Malformed case or violated model precondition.
  GSSA_STATUS_VALIDATION = 2,
  // Eigensolver, tracking or other numerical failure.
  GSSA_STATUS_NUMERICAL = 3,
  // Unexpected internal failure.
  GSSA_STATUS_INTERNAL = 4,
} GssaStatus;

typedef enum GssaModeClass {
  GSSA_MODE_CLASS_INTER_AREA = 0,
  GSSA_MODE_CLASS_LOCAL = 1,
  GSSA_MODE_CLASS_REAL = 2,
  GSSA_MODE_CLASS_INVERTER = 3,
} GssaModeClass;

// Network model with its device park.
typedef struct GssaModel GssaModel;

// Modal analysis result bound to the model state it was computed from.
typedef struct GssaModes GssaModes;

typedef struct GssaModeInfo {
  double re;
  double im;
  double freq_hz;
  // Damping ratio as a fraction.
  double damping;
  int32_t class_;
  double residual;
  double slow_ratio;
} GssaModeInfo;

typedef struct GssaSensitivity {
  double re;
  double im;
  double fd_re;
  double fd_im;
  double rel_err;
  double cond;
} GssaSensitivity;

typedef struct GssaDesign {
  // Droop lower bound; +inf when unbounded.
  double mstar;
  bool preconditions;
  double condition_lhs;
  bool condition_holds;
} GssaDesign;

// Message of the last failure on this thread, or null. Valid until the next
// call into the library from the same thread.
const char *gssa_last_error(void);

// Library version as a static NUL-terminated string.
const char *gssa_version(void);

// Parse a case document and build the model.
//
// # Safety
// `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum GssaStatus gssa_model_from_json(const char *json, struct GssaModel **out);

// # Safety
// `model` must come from [`gssa_model_from_json`] and not be used afterwards.
void gssa_model_free(struct GssaModel *model);

// Generator count, inverter count and state dimension `2 n_g + n_i`.
//
// # Safety
// All pointers must be valid.
enum GssaStatus gssa_model_dims(const struct GssaModel *model,
                                size_t *n_g,
                                size_t *n_i,
                                size_t *n_states);

// Set a uniform droop setting m̂_p (fraction) on every inverter.
//
// # Safety
// `model` must be valid.
enum GssaStatus gssa_model_set_droop(struct GssaModel *model, double setting);

// Droop gain entering the state matrix.
//
// # Safety
// Pointers must be valid.
enum GssaStatus gssa_model_droop_gain(const struct GssaModel *model, double *out);

// Copy the state matrix, row-major, into `buf` of `len ≥ n_states²` doubles.
//
// # Safety
// `buf` must be writable for `len` doubles.
enum GssaStatus gssa_state_matrix(const struct GssaModel *model, double *buf, size_t len);

// Modal analysis with inter-area band `[band_lo, band_hi]` Hz.
//
// # Safety
// `model` must be valid and `out` writable.
enum GssaStatus gssa_modes_compute(const struct GssaModel *model,
                                   double band_lo,
                                   double band_hi,
                                   struct GssaModes **out);

// # Safety
// `modes` must come from [`gssa_modes_compute`] and not be used afterwards.
void gssa_modes_free(struct GssaModes *modes);

// Number of modes (eigenvalues with Im λ ≥ 0).
//
// # Safety
// `modes` must be valid or null.
size_t gssa_modes_count(const struct GssaModes *modes);

// # Safety
// Pointers must be valid.
enum GssaStatus gssa_modes_get(const struct GssaModes *modes,
                               size_t index,
                               struct GssaModeInfo *out);

// Analytic dλ/dm_p for one mode with a finite-difference cross-check at
// relative step `fd_step` (0 selects the default).
//
// # Safety
// Pointers must be valid; `modes` must come from the same model.
enum GssaStatus gssa_sensitivity(const struct GssaModel *model,
                                 const struct GssaModes *modes,
                                 size_t index,
                                 double fd_step,
                                 struct GssaSensitivity *out);

// Droop lower bound m*(λ) and the necessary condition for one mode.
//
// # Safety
// Pointers must be valid; `modes` must come from the same model.
enum GssaStatus gssa_mstar(const struct GssaModel *model,
                           const struct GssaModes *modes,
                           size_t index,
                           struct GssaDesign *out);

#endif  /* GRIDFORM_SSA_H */
