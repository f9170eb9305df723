//! Energy and Lyapunov functionals, dissipation, the energy-balance residual
//! and decay-rate fits.
//!
//! All spatial integrals use the same trapezoid weights and clamped second
//! difference as the operators, so the reported functionals are the exact
//! discrete energies the integrator preserves or dissipates.

use serde::{Deserialize, Serialize};

use crate::controller::{b_n, ConditionReport};
use crate::descriptor::SourceTerm;
use crate::error::{Result, RiserError};
use crate::integrator::{SemiDiscreteSystem, State, Trajectory};
use crate::spatial::{inner_product, norm_sq, second_difference, tension_energy, Grid, VolumePartition};

/// Default fit window `[max(1, T/10), T]`.
pub fn default_window(t_final: f64) -> (f64, f64) {
    ((0.1 * t_final).max(1.0), t_final)
}

/// Sampled functionals at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub norm_v_sq: f64,
    pub norm_uxx_sq: f64,
    /// `∫ a u_x²`, may be negative.
    pub tension_energy: f64,
    pub bn: f64,
    /// `𝓔 = m/2‖u_t‖² + k/2‖u_xx‖² + ½∫a u_x² + μh/2 B_N (+ ∫F(u))`.
    pub script_e: f64,
    /// `E = 𝓔 + δ m (u, u_t)`.
    pub big_e: f64,
    /// `𝓔₁ = m‖u_t‖² + δD₀‖u_xx‖² + δ∫a u_x² + δhμ B_N`.
    pub script_e1: f64,
    /// `W = 𝓔 + ε m (u, u_t) + εb/2 ‖u‖²`, with `ε = 0` when it is undefined.
    pub w: f64,
    /// `b ∫|u_t|^(p+2)` (exponent 2 for linear damping).
    pub dissipation: f64,
    /// `∫F(u)`; zero without a source term.
    pub source_energy: f64,
}

/// Everything needed to evaluate [`EnergyReport`]s for one system.
#[derive(Debug, Clone)]
pub struct EnergyEvaluator {
    grid: Grid,
    partition: VolumePartition,
    a_half: Vec<f64>,
    m: f64,
    k: f64,
    b: f64,
    q: f64,
    mu: f64,
    delta: f64,
    d0: f64,
    eps: f64,
    source: Option<SourceTerm>,
}

impl EnergyEvaluator {
    pub fn new(system: &SemiDiscreteSystem, conditions: &ConditionReport) -> Self {
        let damping = system.damping();
        Self {
            grid: system.grid().clone(),
            partition: system.partition().clone(),
            a_half: system.tension_half().to_vec(),
            m: system.mass(),
            k: system.rigidity(),
            b: damping.coefficient(),
            q: damping.dissipation_exponent(),
            mu: system.control().mu,
            delta: conditions.delta,
            d0: conditions.d0,
            eps: conditions.eps.unwrap_or(0.0),
            source: system.source(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `b ∫|v|^(q+2)` by the trapezoid rule.
    pub fn dissipation(&self, v: &[f64]) -> f64 {
        let e = self.q + 2.0;
        self.b
            * v.iter()
                .enumerate()
                .map(|(i, x)| self.grid.weight(i) * x.abs().powf(e))
                .sum::<f64>()
    }

    /// Panics if the state does not live on this evaluator's grid.
    pub fn energy_functionals(&self, state: &State) -> EnergyReport {
        let g = &self.grid;
        let (u, v) = (&state.u, &state.v);
        let lens = "state length matches grid";
        let norm_v_sq = norm_sq(v, g).expect(lens);
        let uxx = second_difference(u, g).expect(lens);
        let norm_uxx_sq = norm_sq(&uxx, g).expect(lens);
        let tension = tension_energy(&self.a_half, u, g).expect(lens);
        let bn = b_n(u, &self.partition, g).expect(lens);
        let h = self.partition.h();
        let source_energy = match self.source {
            Some(s) => u
                .iter()
                .enumerate()
                .map(|(i, x)| g.weight(i) * s.potential(*x))
                .sum(),
            None => 0.0,
        };
        let uv = inner_product(u, v, g).expect(lens);
        let norm_u_sq = norm_sq(u, g).expect(lens);
        let script_e = 0.5 * self.m * norm_v_sq
            + 0.5 * self.k * norm_uxx_sq
            + 0.5 * tension
            + 0.5 * self.mu * h * bn
            + source_energy;
        EnergyReport {
            t: state.t,
            norm_v_sq,
            norm_uxx_sq,
            tension_energy: tension,
            bn,
            script_e,
            big_e: script_e + self.delta * self.m * uv,
            script_e1: self.m * norm_v_sq
                + self.delta * self.d0 * norm_uxx_sq
                + self.delta * tension
                + self.delta * h * self.mu * bn,
            w: script_e + self.eps * self.m * uv + 0.5 * self.eps * self.b * norm_u_sq,
            dissipation: self.dissipation(v),
            source_energy,
        }
    }
}

/// Energy-balance residual of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub residual: f64,
    /// The initial energy vanished, so `residual` is absolute, not relative.
    pub absolute: bool,
}

/// `max_t |𝓔(t) − 𝓔(0) + ∫₀ᵗ dissipation| / 𝓔(0)`.
pub fn energy_balance_residual(traj: &Trajectory) -> EnergyBalance {
    let Some(first) = traj.samples.first() else {
        return EnergyBalance {
            residual: 0.0,
            absolute: true,
        };
    };
    let e0 = first.energy.script_e;
    let worst = traj
        .samples
        .iter()
        .map(|s| (s.energy.script_e - e0 + s.cumulative_dissipation).abs())
        .fold(0.0f64, f64::max);
    if e0 == 0.0 {
        EnergyBalance {
            residual: worst,
            absolute: true,
        }
    } else {
        EnergyBalance {
            residual: worst / e0.abs(),
            absolute: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayKind {
    Polynomial,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// `−slope` of the log-linear (exponential) or log-log (polynomial) fit.
    pub rate: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
    pub samples: usize,
    /// Exponent stated by the decay theorem; none for the exponential rate,
    /// which is only known to exist.
    pub claimed_rate: Option<f64>,
    /// Slowest exponent of the derivation's final inequality, `p/(p+2)`.
    pub derivation_rate: Option<f64>,
}

fn windowed(series: &[(f64, f64)], window: (f64, f64)) -> Vec<(f64, f64)> {
    series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect()
}

/// Ordinary least squares `y = c + s x`; returns `(s, c, r²)`.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    // relative threshold: a constant series carries rounding noise in log space
    let r2 = if ss_tot <= 1e-28 * n * (1.0 + my * my) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, intercept, r2)
}

fn prepare(
    series: &[(f64, f64)],
    window: (f64, f64),
    log_t: bool,
) -> Result<Vec<(f64, f64)>> {
    if !(window.0 < window.1) {
        return Err(RiserError::Fit(format!(
            "empty window [{}, {}]",
            window.0, window.1
        )));
    }
    let pts = windowed(series, window);
    if pts.len() < 2 {
        return Err(RiserError::Fit(format!(
            "{} samples in window [{}, {}], need at least 2",
            pts.len(),
            window.0,
            window.1
        )));
    }
    pts.iter()
        .map(|&(t, y)| {
            if !(y > 0.0) || !y.is_finite() {
                return Err(RiserError::Fit(format!("nonpositive value {y} at t = {t}")));
            }
            if log_t && !(t > 0.0) {
                return Err(RiserError::Fit(format!("nonpositive time {t}")));
            }
            Ok((if log_t { t.ln() } else { t }, y.ln()))
        })
        .collect()
}

/// Fits `value ≈ C e^{−rate·t}` over the window.
pub fn fit_exponential(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts = prepare(series, window, false)?;
    let (slope, intercept, r_squared) = least_squares(&pts);
    Ok(DecayFit {
        kind: DecayKind::Exponential,
        rate: -slope,
        intercept,
        window: [window.0, window.1],
        r_squared,
        samples: pts.len(),
        claimed_rate: None,
        derivation_rate: None,
    })
}

/// Theorem exponent `(p+1)/(p+2)`.
pub fn claimed_polynomial_rate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        (p + 1.0) / (p + 2.0)
    }
}

/// Derivation exponent `p/(p+2)`.
pub fn derivation_polynomial_rate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p + 2.0)
    }
}

/// Fits `value ≈ C t^{−rate}` over the window.
pub fn fit_polynomial(series: &[(f64, f64)], window: (f64, f64), p: f64) -> Result<DecayFit> {
    let pts = prepare(series, window, true)?;
    let (slope, intercept, r_squared) = least_squares(&pts);
    Ok(DecayFit {
        kind: DecayKind::Polynomial,
        rate: -slope,
        intercept,
        window: [window.0, window.1],
        r_squared,
        samples: pts.len(),
        claimed_rate: Some(claimed_polynomial_rate(p)),
        derivation_rate: Some(derivation_polynomial_rate(p)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedProduct {
    pub exponent: f64,
    /// `sup t^e · value` over the window.
    pub sup: f64,
    /// Sup over the first three quarters of the window.
    pub head_sup: f64,
    /// Sup over the last quarter.
    pub tail_sup: f64,
    pub is_bounded: bool,
}

/// Checks that `t^exponent · value` stays bounded: the sup over the last
/// quarter of the window may not exceed the sup over the rest of it.
pub fn bounded_product_check(
    series: &[(f64, f64)],
    exponent: f64,
    window: (f64, f64),
) -> BoundedProduct {
    let split = window.0 + 0.75 * (window.1 - window.0);
    let mut head_sup = 0.0f64;
    let mut tail_sup = 0.0f64;
    for (t, y) in windowed(series, window) {
        let prod = t.powf(exponent) * y;
        if t < split {
            head_sup = head_sup.max(prod);
        } else {
            tail_sup = tail_sup.max(prod);
        }
    }
    BoundedProduct {
        exponent,
        sup: head_sup.max(tail_sup),
        head_sup,
        tail_sup,
        is_bounded: tail_sup <= head_sup * (1.0 + 1e-9),
    }
}
