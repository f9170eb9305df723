//! Numerical simulator and verification harness for finite-volume feedback
//! stabilization of the clamped marine riser equation
//!
//! ```text
//! m u_tt + k u_xxxx - [a(x) u_x]_x + γ u_tx + damping(u_t) = -μ Σ ū_k χ_{J_k}
//! u = u_x = 0 at x = 0 and x = L
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] and [`descriptor`]: scenario configuration and closed-form fields.
//! * [`spatial`]: uniform-grid operators, quadrature and finite-volume averaging.
//! * [`controller`]: the nudging feedback, the observable `B_N` and the explicit
//!   admissibility thresholds on `h` and `μ`.
//! * [`integrator`]: implicit Newmark time stepping of the closed loop.
//! * [`diagnostics`]: energy and Lyapunov functionals, balance residuals, decay fits.
//! * [`lemmas`]: randomized checks of the functional inequalities the feedback relies on.
//! * [`sweep`], [`output`], [`cli`]: batch runs and the `riser-stab` command line.

pub mod cli;
pub mod controller;
pub mod descriptor;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod lemmas;
pub mod linalg;
pub mod output;
pub mod params;
pub mod spatial;
pub mod sweep;

pub use controller::{
    b_n, check_conditions, check_conditions_linear, check_conditions_nonlinear, feedback_term,
    ConditionCheck, ConditionReport, ThresholdSet,
};
pub use descriptor::{FieldDescriptor, SourceTerm};
pub use diagnostics::{
    bounded_product_check, energy_balance_residual, fit_exponential, fit_polynomial,
    BoundedProduct, DecayFit, DecayKind, EnergyEvaluator, EnergyReport,
};
pub use error::{Result, RiserError};
pub use integrator::{simulate, step, SemiDiscreteSystem, State, Stepper, Trajectory};
pub use params::{
    validate_scenario, ControlConfig, Mode, RiserParams, ScenarioConfig, ValidationReport,
};
pub use spatial::{Grid, VolumePartition};
