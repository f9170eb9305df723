#ifndef RISER_STAB_H
#define RISER_STAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of the C interface.
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_UTF8 = 2,
  RS_STATUS_INVALID_SCENARIO = 3,
  // The run stopped early; the returned trajectory holds the completed part.
  RS_STATUS_STEP_FAILURE = 4,
  RS_STATUS_FIT = 5,
  RS_STATUS_OUT_OF_RANGE = 6,
  RS_STATUS_INTERNAL = 7,
} RsStatus;

typedef enum RsDecayKind {
  RS_DECAY_KIND_EXPONENTIAL = 0,
  RS_DECAY_KIND_POLYNOMIAL = 1,
} RsDecayKind;

// Opaque scenario handle.
typedef struct RsScenario RsScenario;

// Opaque trajectory handle.
typedef struct RsTrajectory RsTrajectory;

// Derived constants and threshold checks of a scenario. Thresholds that do
// not apply are reported as NaN; an absent bound on `h` is `+inf`.
typedef struct RsConditions {
  double h;
  double mu;
  double lambda1;
  double delta;
  double d0;
  double h_max_nonlinear;
  double mu_min_nonlinear;
  bool satisfied_nonlinear;
  double h_max_linear;
  double mu_min_linear;
  bool satisfied_linear;
} RsConditions;

// One sampled time of a trajectory.
typedef struct RsSample {
  double t;
  double norm_v_sq;
  double norm_uxx_sq;
  double bn;
  double script_e;
  double big_e;
  double script_e1;
  double w;
  double dissipation;
  double cumulative_dissipation;
} RsSample;

typedef struct RsDecayFit {
  double rate;
  double intercept;
  double r_squared;
  size_t samples;
} RsDecayFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent error on this thread, or NULL if none occurred.
// The pointer stays valid until the next failing call on the same thread.
const char *rs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rs_version(void);

// Parses a JSON scenario. On success `*out` receives a handle to free with
// [`rs_scenario_free`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum RsStatus rs_scenario_from_json(const char *json, struct RsScenario **out);

// # Safety
// `scenario` must be NULL or a handle from [`rs_scenario_from_json`] not yet freed.
void rs_scenario_free(struct RsScenario *scenario);

// Checks the scenario's invariants; all problems are joined into the error message.
//
// # Safety
// `scenario` must be a live handle.
enum RsStatus rs_scenario_validate(const struct RsScenario *scenario);

// Evaluates the admissibility thresholds of the scenario's controller.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum RsStatus rs_scenario_check(const struct RsScenario *scenario, struct RsConditions *out);

// Integrates the scenario. A trajectory handle is returned both on success
// and on `RS_STATUS_STEP_FAILURE`, where it holds the steps completed before the failure.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum RsStatus rs_simulate(const struct RsScenario *scenario, struct RsTrajectory **out);

// # Safety
// `traj` must be NULL or a handle from [`rs_simulate`] not yet freed.
void rs_trajectory_free(struct RsTrajectory *traj);

// Number of samples in the trajectory; 0 for a NULL handle.
//
// # Safety
// `traj` must be NULL or a live handle.
size_t rs_trajectory_len(const struct RsTrajectory *traj);

// # Safety
// `traj` must be a live handle and `out` a valid pointer.
enum RsStatus rs_trajectory_sample(const struct RsTrajectory *traj,
                                   size_t index,
                                   struct RsSample *out);

// Largest energy-balance residual over the trajectory. `absolute` is set
// when the residual is not normalized (zero initial energy).
//
// # Safety
// `traj` must be a live handle; `residual` and `absolute` valid pointers.
enum RsStatus rs_trajectory_energy_balance_residual(const struct RsTrajectory *traj,
                                                    double *residual,
                                                    bool *absolute);

// Fits the decay of `‖u_t‖² + ‖u_xx‖²` over `[t0, t1]`. The polynomial fit
// uses the trajectory's damping exponent.
//
// # Safety
// `traj` must be a live handle and `out` a valid pointer.
enum RsStatus rs_trajectory_fit(const struct RsTrajectory *traj,
                                enum RsDecayKind kind,
                                double t0,
                                double t1,
                                struct RsDecayFit *out);

// Exponential fit of an arbitrary series given as parallel arrays.
//
// # Safety
// `times` and `values` must each point to `len` readable doubles; `out` must be valid.
enum RsStatus rs_fit_exponential(const double *times,
                                 const double *values,
                                 size_t len,
                                 double t0,
                                 double t1,
                                 struct RsDecayFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISER_STAB_H */
