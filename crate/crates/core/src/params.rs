//! Physical parameters, controller configuration and scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::{sample_field, sample_midpoints, FieldDescriptor, SourceTerm};
use crate::error::{Result, RiserError};
use crate::spatial::{Grid, MIN_POINTS};

/// Coefficients of `m u_tt + k u_xxxx − [a u_x]_x + γ u_tx + b u_t|u_t|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiserParams {
    /// Mass line density.
    pub m: f64,
    /// Flexural rigidity.
    pub k: f64,
    /// Damping coefficient.
    pub b: f64,
    /// Coriolis coefficient.
    #[serde(default)]
    pub gamma: f64,
    /// Damping exponent; only read in nonlinear-damping mode.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Domain length `L`.
    #[serde(alias = "L")]
    pub length: f64,
    /// Effective tension `a(x)`.
    pub tension: FieldDescriptor,
    /// Declared lower tension bound: `a(x) ≥ −a0`.
    pub a0: f64,
    /// Declared upper tension bound: `a(x) ≤ a1`.
    pub a1: f64,
}

fn default_p() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Number of finite volumes `N`.
    pub n_volumes: usize,
    /// Nudging gain `μ`; zero means open loop.
    pub mu: f64,
}

impl ControlConfig {
    /// Volume width `h = L / N`.
    pub fn h(&self, length: f64) -> f64 {
        length / self.n_volumes as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `b u_t |u_t|^p` damping.
    NonlinearDamping,
    /// `b u_t` damping.
    LinearDamping,
    /// Linear damping plus a restoring source `f(u)`.
    SourceTerm,
    /// Linear damping; the controlled solution is nudged toward an
    /// uncontrolled reference through the difference of their averages.
    Tracking,
}

impl Mode {
    pub fn is_nonlinear(self) -> bool {
        self == Mode::NonlinearDamping
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NonlinearDamping => "nonlinear-damping",
            Mode::LinearDamping => "linear-damping",
            Mode::SourceTerm => "source-term",
            Mode::Tracking => "tracking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceInitial {
    pub u: FieldDescriptor,
    pub v: FieldDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: RiserParams,
    pub control: ControlConfig,
    /// Node count `M`.
    pub grid_points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub initial_u: FieldDescriptor,
    pub initial_v: FieldDescriptor,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_initial: Option<ReferenceInitial>,
    #[serde(default = "default_stride")]
    pub sample_every: usize,
    /// Fit window `[t_lo, t_hi]`; defaults to `[max(1, 0.1 T), T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Replaces the theorem's `δ` in the functionals; flagged as off-theorem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_override: Option<f64>,
    /// Keep a full-state snapshot every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

fn default_stride() -> usize {
    1
}

impl ScenarioConfig {
    /// Parses a scenario, reporting descriptor problems by field name before
    /// falling back to the generic parse error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let descriptor_fields: [(&str, &[&str]); 5] = [
            ("params.tension", &["params", "tension"]),
            ("initial_u", &["initial_u"]),
            ("initial_v", &["initial_v"]),
            ("reference_initial.u", &["reference_initial", "u"]),
            ("reference_initial.v", &["reference_initial", "v"]),
        ];
        for (name, path) in descriptor_fields {
            let node = path.iter().try_fold(&value, |v, key| v.get(key));
            if let Some(node) = node {
                if let Err(e) = FieldDescriptor::deserialize(node) {
                    return Err(RiserError::Descriptor {
                        field: name.to_string(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        if let Some(node) = value.get("source").filter(|v| !v.is_null()) {
            if let Err(e) = SourceTerm::deserialize(node) {
                return Err(RiserError::Descriptor {
                    field: "source".into(),
                    reason: e.to_string(),
                });
            }
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_points, self.params.length)
    }

    pub fn h(&self) -> f64 {
        self.control.h(self.params.length)
    }

    /// Number of time steps: `floor(T / dt)`, robust to rounding of the ratio.
    pub fn steps(&self) -> usize {
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return 0;
        }
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    pub fn default_window(&self) -> (f64, f64) {
        match self.fit_window {
            Some([lo, hi]) => (lo, hi),
            None => crate::diagnostics::default_window(self.t_final),
        }
    }
}

/// Violated invariants; empty iff the scenario is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every scenario invariant without mutating the configuration.
pub fn validate_scenario(cfg: &ScenarioConfig) -> ValidationReport {
    let mut v = Vec::new();
    let p = &cfg.params;
    let mut require = |ok: bool, msg: &str| {
        if !ok {
            v.push(msg.to_string());
        }
    };
    require(p.m > 0.0, "m > 0");
    require(p.k > 0.0, "k > 0");
    require(p.length > 0.0 && p.length.is_finite(), "L > 0");
    require(p.b >= 0.0, "b >= 0");
    require(p.gamma.is_finite(), "gamma finite");
    require(p.a1 > 0.0, "a1 > 0");
    require(p.a0 >= 0.0, "a0 >= 0");
    if cfg.mode.is_nonlinear() {
        require(p.p >= 1.0, "p >= 1 in nonlinear-damping mode");
    }
    require(cfg.grid_points >= MIN_POINTS, "M >= 7");
    require(cfg.dt > 0.0, "dt > 0");
    require(cfg.t_final > cfg.dt, "t_final > dt");
    require(cfg.sample_every >= 1, "sample_every >= 1");
    require(cfg.control.n_volumes >= 1, "N >= 1");
    require(cfg.control.mu >= 0.0, "mu >= 0");
    if cfg.grid_points >= 2 && cfg.control.n_volumes > cfg.grid_points - 1 {
        v.push("volumes finer than grid".to_string());
    }
    if let Some(d) = cfg.delta_override {
        if !(d > 0.0) {
            v.push("delta_override > 0".to_string());
        }
    }
    if let Some([lo, hi]) = cfg.fit_window {
        if !(lo < hi) {
            v.push("fit window lo < hi".to_string());
        }
    }

    match (cfg.mode, &cfg.source) {
        (Mode::SourceTerm, None) => v.push("source-term mode requires a source".into()),
        (Mode::SourceTerm, Some(s)) => v.extend(s.spot_check()),
        (_, Some(_)) => v.push("source given outside source-term mode".into()),
        _ => {}
    }
    match (cfg.mode, &cfg.reference_initial) {
        (Mode::Tracking, None) => v.push("tracking mode requires reference_initial".into()),
        (Mode::Tracking, Some(_)) => {}
        (_, Some(_)) => v.push("reference_initial given outside tracking mode".into()),
        _ => {}
    }

    if let Ok(grid) = Grid::new(cfg.grid_points, p.length) {
        check_tension(cfg, &grid, &mut v);
        for (name, d) in [("initial_u", &cfg.initial_u), ("initial_v", &cfg.initial_v)] {
            if d.is_raw() {
                v.push(format!("{name}: raw arrays are only accepted for reference_initial"));
            } else {
                check_boundary(name, d, &grid, &mut v);
            }
        }
        if let Some(r) = &cfg.reference_initial {
            for (name, d) in [("reference_initial.u", &r.u), ("reference_initial.v", &r.v)] {
                check_boundary(name, d, &grid, &mut v);
            }
        }
    }
    ValidationReport { violations: v }
}

fn check_tension(cfg: &ScenarioConfig, grid: &Grid, v: &mut Vec<String>) {
    let p = &cfg.params;
    if p.tension.is_raw() {
        v.push("params.tension: raw arrays are not accepted".into());
        return;
    }
    let nodes = sample_field(&p.tension, grid).unwrap_or_default();
    let mids = sample_midpoints(&p.tension, grid).unwrap_or_default();
    let slack = 1e-12 * (1.0 + p.a0.max(p.a1));
    if nodes.iter().chain(&mids).any(|&a| a < -p.a0 - slack) {
        v.push("tension below -a0".into());
    }
    if nodes.iter().chain(&mids).any(|&a| a > p.a1 + slack) {
        v.push("tension above a1".into());
    }
}

fn check_boundary(name: &str, d: &FieldDescriptor, grid: &Grid, v: &mut Vec<String>) {
    match sample_field(d, grid) {
        Ok(f) => {
            let scale = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let tol = 1e-12 * scale.max(1.0);
            if f[0].abs() > tol || f[f.len() - 1].abs() > tol {
                v.push(format!("{name} does not vanish at the boundary"));
            }
        }
        Err(e) => v.push(format!("{name}: {e}")),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// m = k = 1, a(x) = −1, N = 8, μ = 4 on L = 1.
    pub(crate) fn valid_scenario() -> ScenarioConfig {
        ScenarioConfig {
            params: RiserParams {
                m: 1.0,
                k: 1.0,
                b: 1.0,
                gamma: 0.5,
                p: 1.0,
                length: 1.0,
                tension: FieldDescriptor::Constant { value: -1.0 },
                a0: 1.0,
                a1: 1.0,
            },
            control: ControlConfig {
                n_volumes: 8,
                mu: 4.0,
            },
            grid_points: 41,
            dt: 1e-3,
            t_final: 0.1,
            initial_u: FieldDescriptor::Bump { scale: 1.0 },
            initial_v: FieldDescriptor::Zero,
            mode: Mode::LinearDamping,
            source: None,
            reference_initial: None,
            sample_every: 1,
            fit_window: None,
            delta_override: None,
            snapshot_every: None,
        }
    }

    #[test]
    fn valid_scenario_has_no_violations() {
        let r = validate_scenario(&valid_scenario());
        assert!(r.is_valid(), "{:?}", r.violations);
    }

    #[test]
    fn zero_length_is_flagged() {
        let mut cfg = valid_scenario();
        cfg.params.length = 0.0;
        assert!(validate_scenario(&cfg)
            .violations
            .contains(&"L > 0".to_string()));
    }

    #[test]
    fn tension_below_bound_is_flagged() {
        let mut cfg = valid_scenario();
        cfg.params.tension = FieldDescriptor::Constant { value: -2.0 };
        cfg.params.a0 = 1.0;
        assert_eq!(
            validate_scenario(&cfg).violations,
            vec!["tension below -a0".to_string()]
        );
    }

    #[test]
    fn ramp_tension_checked_at_every_node() {
        let mut cfg = valid_scenario();
        // a(x) = -0.5 + 1.6x reaches 1.1 > a1 near x = 1
        cfg.params.tension = FieldDescriptor::Linear {
            alpha: -0.5,
            beta: 1.6,
        };
        assert_eq!(
            validate_scenario(&cfg).violations,
            vec!["tension above a1".to_string()]
        );
    }

    #[test]
    fn validation_is_idempotent_and_pure() {
        let mut cfg = valid_scenario();
        cfg.params.k = -1.0;
        cfg.grid_points = 5;
        let before = cfg.clone();
        let a = validate_scenario(&cfg);
        let b = validate_scenario(&cfg);
        assert_eq!(a, b);
        assert_eq!(cfg, before);
        assert!(a.violations.contains(&"k > 0".to_string()));
        assert!(a.violations.contains(&"M >= 7".to_string()));
    }

    #[test]
    fn nonlinear_mode_requires_p_at_least_one() {
        let mut cfg = valid_scenario();
        cfg.mode = Mode::NonlinearDamping;
        cfg.params.p = 0.5;
        assert!(validate_scenario(&cfg)
            .violations
            .iter()
            .any(|v| v.starts_with("p >= 1")));
        cfg.mode = Mode::LinearDamping;
        assert!(validate_scenario(&cfg).is_valid());
    }

    #[test]
    fn mode_specific_fields() {
        let mut cfg = valid_scenario();
        cfg.mode = Mode::SourceTerm;
        assert!(!validate_scenario(&cfg).is_valid());
        cfg.source = Some(SourceTerm::Sine { coeff: 1.0 });
        assert!(validate_scenario(&cfg)
            .violations
            .iter()
            .any(|v| v.contains("f(s)s - F(s)")));
        cfg.source = Some(SourceTerm::Cubic { coeff: 1.0 });
        assert!(validate_scenario(&cfg).is_valid());

        let mut cfg = valid_scenario();
        cfg.mode = Mode::Tracking;
        assert!(!validate_scenario(&cfg).is_valid());
        cfg.reference_initial = Some(ReferenceInitial {
            u: FieldDescriptor::Values {
                values: vec![0.0; 41],
            },
            v: FieldDescriptor::Zero,
        });
        assert!(validate_scenario(&cfg).is_valid());
    }

    #[test]
    fn non_vanishing_initial_data_is_flagged() {
        let mut cfg = valid_scenario();
        cfg.initial_u = FieldDescriptor::Constant { value: 1.0 };
        assert_eq!(
            validate_scenario(&cfg).violations,
            vec!["initial_u does not vanish at the boundary".to_string()]
        );
    }

    #[test]
    fn descriptor_errors_name_the_field() {
        let cfg = valid_scenario();
        let mut json = serde_json::to_value(&cfg).unwrap();
        json["initial_v"] = serde_json::json!({"type": "gaussian"});
        let err = ScenarioConfig::from_json_str(&json.to_string()).unwrap_err();
        match err {
            RiserError::Descriptor { field, .. } => assert_eq!(field, "initial_v"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_and_l_alias() {
        let cfg = valid_scenario();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json_str(&text).unwrap(), cfg);
        let aliased = text.replace("\"length\"", "\"L\"");
        assert_eq!(ScenarioConfig::from_json_str(&aliased).unwrap(), cfg);
    }

    #[test]
    fn step_count_tolerates_rounding() {
        let mut cfg = valid_scenario();
        cfg.dt = 0.1;
        cfg.t_final = 0.3;
        assert_eq!(cfg.steps(), 3);
        cfg.t_final = 0.05;
        assert_eq!(cfg.steps(), 0);
    }

    #[test]
    fn h_is_derived() {
        let cfg = valid_scenario();
        assert!((cfg.h() * 8.0 - 1.0).abs() <= f64::EPSILON);
    }
}
