//! Parameter sweeps: run a base scenario over a grid of parameter values and
//! compare the theorem's verdict with the empirical one at every point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::FieldDescriptor;
use crate::diagnostics::{
    bounded_product_check, claimed_polynomial_rate, fit_exponential, fit_polynomial,
};
use crate::error::{Result, RiserError};
use crate::integrator::{simulate, Trajectory};
use crate::params::{validate_scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisGrid {
    Values(Vec<f64>),
    Linear(Range),
    /// Geometric spacing; both ends must be positive.
    Log(Range),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// One of `mu`, `a0`, `n_volumes`, `gamma`, `b`, `k`, `m`, `p`.
    pub name: String,
    #[serde(flatten)]
    pub grid: AxisGrid,
}

pub const AXIS_NAMES: [&str; 8] = ["mu", "a0", "n_volumes", "gamma", "b", "k", "m", "p"];

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !AXIS_NAMES.contains(&self.name.as_str()) {
            return Err(RiserError::InvalidScenario(format!(
                "unknown sweep axis '{}' (expected one of {})",
                self.name,
                AXIS_NAMES.join(", ")
            )));
        }
        let values = match &self.grid {
            AxisGrid::Values(v) => v.clone(),
            AxisGrid::Linear(r) => match r.count {
                0 => Vec::new(),
                1 => vec![r.start],
                n => (0..n)
                    .map(|i| r.start + (r.stop - r.start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
            AxisGrid::Log(r) => {
                if !(r.start > 0.0 && r.stop > 0.0) {
                    return Err(RiserError::InvalidScenario(format!(
                        "log axis '{}' needs positive ends",
                        self.name
                    )));
                }
                match r.count {
                    0 => Vec::new(),
                    1 => vec![r.start],
                    n => {
                        let (a, b) = (r.start.ln(), r.stop.ln());
                        (0..n)
                            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                            .collect()
                    }
                }
            }
        };
        if values.is_empty() {
            return Err(RiserError::InvalidScenario(format!(
                "sweep axis '{}' is empty",
                self.name
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RiserError::InvalidScenario(format!(
                "sweep axis '{}' has non-finite values",
                self.name
            )));
        }
        Ok(values)
    }
}

/// Empirical stabilization rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Classification {
    /// Minimal fitted exponential rate.
    pub min_rate: f64,
    pub min_r_squared: f64,
    /// Judge nonlinear-damping runs by boundedness of `t^((p+1)/(p+2))·norm`
    /// instead of an exponential fit.
    pub polynomial_for_nonlinear: bool,
}

impl Default for Classification {
    fn default() -> Self {
        Self {
            min_rate: 1e-3,
            min_r_squared: 0.9,
            polynomial_for_nonlinear: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub classification: Classification,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        if spec.axes.is_empty() {
            return Err(RiserError::InvalidScenario("sweep has no axes".into()));
        }
        for a in &spec.axes {
            a.values()?;
        }
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Cartesian product of the axes, first axis varying slowest.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values()?;
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// Applies one axis value to a scenario. Setting `a0` also sets a constant
/// tension `a ≡ −a0`, keeping the declared bound and the profile consistent.
pub fn apply_axis(cfg: &mut ScenarioConfig, name: &str, value: f64) -> Result<()> {
    let p = &mut cfg.params;
    match name {
        "mu" => cfg.control.mu = value,
        "a0" => {
            p.a0 = value;
            p.tension = FieldDescriptor::Constant { value: -value };
        }
        "n_volumes" => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(RiserError::InvalidScenario(format!(
                    "n_volumes must be a positive integer, got {value}"
                )));
            }
            cfg.control.n_volumes = value as usize;
        }
        "gamma" => p.gamma = value,
        "b" => p.b = value,
        "k" => p.k = value,
        "m" => p.m = value,
        "p" => p.p = value,
        other => {
            return Err(RiserError::InvalidScenario(format!(
                "unknown sweep axis '{other}'"
            )))
        }
    }
    Ok(())
}

/// Empirical verdict on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub stabilized: bool,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub bounded: Option<bool>,
    pub note: Option<String>,
}

pub fn classify(traj: &Trajectory, window: (f64, f64), rule: &Classification) -> Verdict {
    if let Some(f) = &traj.failure {
        return Verdict {
            stabilized: false,
            rate: None,
            r_squared: None,
            bounded: None,
            note: Some(format!("step failure at t = {}: {}", f.t, f.message)),
        };
    }
    let series = traj.norm_series();
    if series.iter().all(|&(_, y)| y == 0.0) {
        return Verdict {
            stabilized: true,
            rate: None,
            r_squared: None,
            bounded: Some(true),
            note: Some("zero energy".into()),
        };
    }
    if traj.mode.is_nonlinear() && rule.polynomial_for_nonlinear {
        let check = bounded_product_check(&series, claimed_polynomial_rate(traj.p), window);
        let fit = fit_polynomial(&series, window, traj.p).ok();
        return Verdict {
            stabilized: check.is_bounded,
            rate: fit.as_ref().map(|f| f.rate),
            r_squared: fit.as_ref().map(|f| f.r_squared),
            bounded: Some(check.is_bounded),
            note: None,
        };
    }
    match fit_exponential(&series, window) {
        Ok(fit) => Verdict {
            stabilized: fit.rate > rule.min_rate && fit.r_squared > rule.min_r_squared,
            rate: Some(fit.rate),
            r_squared: Some(fit.r_squared),
            bounded: None,
            note: None,
        },
        Err(e) => Verdict {
            stabilized: false,
            rate: None,
            r_squared: None,
            bounded: None,
            note: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<f64>,
    pub theorem_satisfied: bool,
    pub h: f64,
    pub h_max: f64,
    pub mu_min: f64,
    pub verdict: Verdict,
    pub error: Option<String>,
}

impl SweepRow {
    /// A theorem-satisfied point that did not stabilize.
    pub fn unsound(&self) -> bool {
        self.theorem_satisfied && !self.verdict.stabilized
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn unsound_rows(&self) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.unsound()).collect()
    }

    pub fn is_sound(&self) -> bool {
        self.rows.iter().all(|r| !r.unsound())
    }

    /// Column order: `index`, one column per axis, then `theorem_satisfied,
    /// h, h_max, mu_min, stabilized, rate, r_squared, bounded, error`.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string()];
        header.extend(self.axes.iter().cloned());
        header.extend(
            [
                "theorem_satisfied",
                "h",
                "h_max",
                "mu_min",
                "stabilized",
                "rate",
                "r_squared",
                "bounded",
                "error",
            ]
            .map(String::from),
        );
        out.write_record(&header).map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.index.to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.push(r.theorem_satisfied.to_string());
            rec.push(r.h.to_string());
            rec.push(r.h_max.to_string());
            rec.push(r.mu_min.to_string());
            rec.push(r.verdict.stabilized.to_string());
            rec.push(opt(r.verdict.rate));
            rec.push(opt(r.verdict.r_squared));
            rec.push(r.verdict.bounded.map(|b| b.to_string()).unwrap_or_default());
            let err = r.error.clone().or_else(|| r.verdict.note.clone());
            rec.push(err.unwrap_or_default());
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> RiserError {
    RiserError::Io(std::io::Error::other(e))
}

fn run_point(spec: &SweepSpec, index: usize, values: &[f64]) -> SweepRow {
    let mut cfg = spec.base.clone();
    let mut row = SweepRow {
        index,
        values: values.to_vec(),
        theorem_satisfied: false,
        h: f64::NAN,
        h_max: f64::NAN,
        mu_min: f64::NAN,
        verdict: Verdict {
            stabilized: false,
            rate: None,
            r_squared: None,
            bounded: None,
            note: None,
        },
        error: None,
    };
    for (axis, &v) in spec.axes.iter().zip(values) {
        if let Err(e) = apply_axis(&mut cfg, &axis.name, v) {
            row.error = Some(e.to_string());
            return row;
        }
    }
    let report = validate_scenario(&cfg);
    if !report.is_valid() {
        row.error = Some(report.violations.join("; "));
        return row;
    }
    match simulate(&cfg) {
        Ok(traj) => {
            let c = &traj.conditions;
            let thresholds = if cfg.mode.is_nonlinear() {
                c.nonlinear.as_ref()
            } else {
                c.linear.as_ref()
            };
            if let Some(t) = thresholds {
                row.theorem_satisfied = t.satisfied;
                row.h = t.h;
                row.h_max = t.h_max;
                row.mu_min = t.mu_min;
            }
            row.verdict = classify(&traj, cfg.default_window(), &spec.classification);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every grid point, at most `threads` at a time (`None`: rayon's default).
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<SweepResult> {
    let points = spec.points()?;
    let run = || -> Vec<SweepRow> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, v)| run_point(spec, i, v))
            .collect()
    };
    let rows = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| RiserError::InvalidScenario(e.to_string()))?
            .install(run),
        None => run(),
    };
    Ok(SweepResult {
        axes: spec.axes.iter().map(|a| a.name.clone()).collect(),
        rows,
    })
}
