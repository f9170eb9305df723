//! C ABI over the riser-stab simulator.
//!
//! Scenarios and trajectories are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns an
//! [`RsStatus`]; on anything other than `RS_STATUS_OK` a message describing the error
//! can be read with [`rs_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use riser_stab::diagnostics::{fit_exponential, fit_polynomial, DecayFit};
use riser_stab::{
    check_conditions, energy_balance_residual, simulate, validate_scenario, RiserError,
    ScenarioConfig, Trajectory,
};

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    /// The run stopped early; the returned trajectory holds the completed part.
    StepFailure = 4,
    Fit = 5,
    OutOfRange = 6,
    Internal = 7,
}

/// Opaque scenario handle.
pub struct RsScenario(ScenarioConfig);

/// Opaque trajectory handle.
pub struct RsTrajectory(Trajectory);

/// Derived constants and threshold checks of a scenario. Thresholds that do
/// not apply are reported as NaN; an absent bound on `h` is `+inf`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsConditions {
    pub h: f64,
    pub mu: f64,
    pub lambda1: f64,
    pub delta: f64,
    pub d0: f64,
    pub h_max_nonlinear: f64,
    pub mu_min_nonlinear: f64,
    pub satisfied_nonlinear: bool,
    pub h_max_linear: f64,
    pub mu_min_linear: f64,
    pub satisfied_linear: bool,
}

/// One sampled time of a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsSample {
    pub t: f64,
    pub norm_v_sq: f64,
    pub norm_uxx_sq: f64,
    pub bn: f64,
    pub script_e: f64,
    pub big_e: f64,
    pub script_e1: f64,
    pub w: f64,
    pub dissipation: f64,
    pub cumulative_dissipation: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsDecayKind {
    Exponential = 0,
    Polynomial = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RsDecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: RsStatus, message: impl Into<String>) -> RsStatus {
    set_error(message);
    status
}

fn status_of(err: &RiserError) -> RsStatus {
    match err {
        RiserError::Fit(_) => RsStatus::Fit,
        RiserError::NonConvergence { .. }
        | RiserError::NonFinite { .. }
        | RiserError::SingularPivot { .. } => RsStatus::StepFailure,
        _ => RsStatus::InvalidScenario,
    }
}

/// Runs `body`, turning a panic into `RS_STATUS_INTERNAL` instead of unwinding into C.
fn guard(body: impl FnOnce() -> RsStatus) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RsStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn to_fit(fit: DecayFit) -> RsDecayFit {
    RsDecayFit {
        rate: fit.rate,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        samples: fit.samples,
    }
}

/// Message of the most recent error on this thread, or NULL if none occurred.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON scenario. On success `*out` receives a handle to free with
/// [`rs_scenario_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_from_json(
    json: *const c_char,
    out: *mut *mut RsScenario,
) -> RsStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(RsStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(RsStatus::InvalidUtf8, "scenario text is not UTF-8");
        };
        match ScenarioConfig::from_json_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(RsScenario(cfg)));
                RsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from [`rs_scenario_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_free(scenario: *mut RsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Checks the scenario's invariants; all problems are joined into the error message.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_validate(scenario: *const RsScenario) -> RsStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(RsStatus::NullPointer, "null scenario");
        };
        let report = validate_scenario(&s.0);
        if report.is_valid() {
            RsStatus::Ok
        } else {
            fail(RsStatus::InvalidScenario, report.violations.join("; "))
        }
    })
}

/// Evaluates the admissibility thresholds of the scenario's controller.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_scenario_check(
    scenario: *const RsScenario,
    out: *mut RsConditions,
) -> RsStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(RsStatus::NullPointer, "null argument");
        };
        let cfg = &s.0;
        let r = check_conditions(&cfg.params, &cfg.control, cfg.delta_override);
        let nl = r.nonlinear.as_ref();
        let li = r.linear.as_ref();
        *out = RsConditions {
            h: cfg.h(),
            mu: cfg.control.mu,
            lambda1: r.lambda1,
            delta: r.delta,
            d0: r.d0,
            h_max_nonlinear: nl.map_or(f64::NAN, |t| t.h_max),
            mu_min_nonlinear: nl.map_or(f64::NAN, |t| t.mu_min),
            satisfied_nonlinear: r.satisfied_nonlinear(),
            h_max_linear: li.map_or(f64::NAN, |t| t.h_max),
            mu_min_linear: li.map_or(f64::NAN, |t| t.mu_min),
            satisfied_linear: r.satisfied_linear(),
        };
        RsStatus::Ok
    })
}

/// Integrates the scenario. A trajectory handle is returned both on success
/// and on `RS_STATUS_STEP_FAILURE`, where it holds the steps completed before the failure.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_simulate(
    scenario: *const RsScenario,
    out: *mut *mut RsTrajectory,
) -> RsStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(RsStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        match simulate(&s.0) {
            Ok(traj) => {
                let failure = traj
                    .failure
                    .as_ref()
                    .map(|f| format!("simulation failed at t = {}: {}", f.t, f.message));
                *out = Box::into_raw(Box::new(RsTrajectory(traj)));
                match failure {
                    Some(msg) => fail(RsStatus::StepFailure, msg),
                    None => RsStatus::Ok,
                }
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `traj` must be NULL or a handle from [`rs_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_trajectory_free(traj: *mut RsTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of samples in the trajectory; 0 for a NULL handle.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_trajectory_len(traj: *const RsTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.samples.len())
}

/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_trajectory_sample(
    traj: *const RsTrajectory,
    index: usize,
    out: *mut RsSample,
) -> RsStatus {
    guard(|| {
        let (Some(t), false) = (traj.as_ref(), out.is_null()) else {
            return fail(RsStatus::NullPointer, "null argument");
        };
        let Some(s) = t.0.samples.get(index) else {
            return fail(
                RsStatus::OutOfRange,
                format!("sample {index} out of range (len {})", t.0.samples.len()),
            );
        };
        let e = &s.energy;
        *out = RsSample {
            t: e.t,
            norm_v_sq: e.norm_v_sq,
            norm_uxx_sq: e.norm_uxx_sq,
            bn: e.bn,
            script_e: e.script_e,
            big_e: e.big_e,
            script_e1: e.script_e1,
            w: e.w,
            dissipation: e.dissipation,
            cumulative_dissipation: s.cumulative_dissipation,
        };
        RsStatus::Ok
    })
}

/// Largest energy-balance residual over the trajectory. `absolute` is set
/// when the residual is not normalized (zero initial energy).
///
/// # Safety
/// `traj` must be a live handle; `residual` and `absolute` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rs_trajectory_energy_balance_residual(
    traj: *const RsTrajectory,
    residual: *mut f64,
    absolute: *mut bool,
) -> RsStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(RsStatus::NullPointer, "null trajectory");
        };
        if residual.is_null() || absolute.is_null() {
            return fail(RsStatus::NullPointer, "null output pointer");
        }
        let b = energy_balance_residual(&t.0);
        *residual = b.residual;
        *absolute = b.absolute;
        RsStatus::Ok
    })
}

/// Fits the decay of `‖u_t‖² + ‖u_xx‖²` over `[t0, t1]`. The polynomial fit
/// uses the trajectory's damping exponent.
///
/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_trajectory_fit(
    traj: *const RsTrajectory,
    kind: RsDecayKind,
    t0: f64,
    t1: f64,
    out: *mut RsDecayFit,
) -> RsStatus {
    guard(|| {
        let (Some(t), false) = (traj.as_ref(), out.is_null()) else {
            return fail(RsStatus::NullPointer, "null argument");
        };
        let series = t.0.norm_series();
        let fit = match kind {
            RsDecayKind::Exponential => fit_exponential(&series, (t0, t1)),
            RsDecayKind::Polynomial => fit_polynomial(&series, (t0, t1), t.0.p),
        };
        match fit {
            Ok(f) => {
                *out = to_fit(f);
                RsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Exponential fit of an arbitrary series given as parallel arrays.
///
/// # Safety
/// `times` and `values` must each point to `len` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_fit_exponential(
    times: *const f64,
    values: *const f64,
    len: usize,
    t0: f64,
    t1: f64,
    out: *mut RsDecayFit,
) -> RsStatus {
    guard(|| {
        if times.is_null() || values.is_null() || out.is_null() {
            return fail(RsStatus::NullPointer, "null argument");
        }
        let ts = std::slice::from_raw_parts(times, len);
        let vs = std::slice::from_raw_parts(values, len);
        let series: Vec<(f64, f64)> = ts.iter().copied().zip(vs.iter().copied()).collect();
        match fit_exponential(&series, (t0, t1)) {
            Ok(f) => {
                *out = to_fit(f);
                RsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
