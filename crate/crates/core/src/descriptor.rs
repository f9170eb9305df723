//! Closed-form field descriptors and nonlinear source terms.
//!
//! Scenario files never carry raw node arrays for initial data or tension;
//! they carry a small tagged expression that is sampled on whatever grid the
//! run uses, so refinement studies reuse one configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiserError};
use crate::spatial::Grid;

/// A closed-form function of `x ∈ [0, L]`.
///
/// JSON form is internally tagged, e.g. `{"type": "sine", "amplitude": 1.0, "harmonic": 2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldDescriptor {
    /// Identically zero.
    Zero,
    /// `value` everywhere.
    Constant { value: f64 },
    /// `alpha + beta x`.
    Linear { alpha: f64, beta: f64 },
    /// `Σ coeffs[j] x^j`.
    Polynomial { coeffs: Vec<f64> },
    /// `amplitude · sin(harmonic π x / L)`.
    Sine { amplitude: f64, harmonic: u32 },
    /// `Σ amplitudes[j] · sin((j + 1) π x / L)`.
    SineSeries { amplitudes: Vec<f64> },
    /// Clamped bump `scale · x² (L − x)²`.
    Bump { scale: f64 },
    /// `base + amplitude · cos(harmonic π x / L)`.
    Cosine {
        base: f64,
        amplitude: f64,
        harmonic: u32,
    },
    /// Raw node values; only accepted for tracking references.
    Values { values: Vec<f64> },
}

impl FieldDescriptor {
    /// Point evaluation. `None` for raw arrays, which have no closed form.
    pub fn eval(&self, x: f64, length: f64) -> Option<f64> {
        let value = match self {
            FieldDescriptor::Zero => 0.0,
            FieldDescriptor::Constant { value } => *value,
            FieldDescriptor::Linear { alpha, beta } => alpha + beta * x,
            FieldDescriptor::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            FieldDescriptor::Sine {
                amplitude,
                harmonic,
            } => amplitude * (f64::from(*harmonic) * PI * x / length).sin(),
            FieldDescriptor::SineSeries { amplitudes } => amplitudes
                .iter()
                .enumerate()
                .map(|(j, a)| a * ((j + 1) as f64 * PI * x / length).sin())
                .sum(),
            FieldDescriptor::Bump { scale } => {
                let y = x * (length - x);
                scale * y * y
            }
            FieldDescriptor::Cosine {
                base,
                amplitude,
                harmonic,
            } => base + amplitude * (f64::from(*harmonic) * PI * x / length).cos(),
            FieldDescriptor::Values { .. } => return None,
        };
        Some(value)
    }

    /// Kinds whose closed form vanishes at both ends; their boundary nodes are
    /// set to exactly zero when sampled.
    pub fn vanishes_at_boundary(&self) -> bool {
        matches!(
            self,
            FieldDescriptor::Zero
                | FieldDescriptor::Sine { .. }
                | FieldDescriptor::SineSeries { .. }
                | FieldDescriptor::Bump { .. }
        )
    }

    pub fn is_raw(&self) -> bool {
        matches!(self, FieldDescriptor::Values { .. })
    }

    fn tag(&self) -> &'static str {
        match self {
            FieldDescriptor::Zero => "zero",
            FieldDescriptor::Constant { .. } => "constant",
            FieldDescriptor::Linear { .. } => "linear",
            FieldDescriptor::Polynomial { .. } => "polynomial",
            FieldDescriptor::Sine { .. } => "sine",
            FieldDescriptor::SineSeries { .. } => "sine_series",
            FieldDescriptor::Bump { .. } => "bump",
            FieldDescriptor::Cosine { .. } => "cosine",
            FieldDescriptor::Values { .. } => "values",
        }
    }
}

/// Sample a descriptor on the grid nodes.
///
/// Raw arrays must match the node count. Boundary-vanishing kinds get exact
/// zeros at both end nodes.
pub fn sample_field(descriptor: &FieldDescriptor, grid: &Grid) -> Result<Vec<f64>> {
    if let FieldDescriptor::Values { values } = descriptor {
        if values.len() != grid.points() {
            return Err(RiserError::LengthMismatch {
                expected: grid.points(),
                actual: values.len(),
            });
        }
        return Ok(values.clone());
    }
    let length = grid.length();
    let mut field: Vec<f64> = (0..grid.points())
        .map(|i| descriptor.eval(grid.x(i), length).unwrap_or(0.0))
        .collect();
    if descriptor.vanishes_at_boundary() {
        field[0] = 0.0;
        *field.last_mut().expect("grid has at least 7 nodes") = 0.0;
    }
    Ok(field)
}

/// Sample a closed-form descriptor at the cell midpoints `x_{i+1/2}`
/// (`M − 1` values). Used for the flux-form tension coefficient.
pub fn sample_midpoints(descriptor: &FieldDescriptor, grid: &Grid) -> Result<Vec<f64>> {
    let length = grid.length();
    (0..grid.points() - 1)
        .map(|i| {
            let x = 0.5 * (grid.x(i) + grid.x(i + 1));
            descriptor.eval(x, length).ok_or_else(|| RiserError::Descriptor {
                field: "tension".into(),
                reason: format!("`{}` has no closed form to sample", descriptor.tag()),
            })
        })
        .collect()
}

/// Nonlinear restoring source `f(u)` together with its primitive
/// `F(s) = ∫₀ˢ f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceTerm {
    /// `f(s) = coeff · s`
    Linear { coeff: f64 },
    /// `f(s) = coeff · s³`
    Cubic { coeff: f64 },
    /// `f(s) = coeff · |s|^(exponent−1) s`
    Power { coeff: f64, exponent: f64 },
    /// `f(s) = coeff · sin s`. Violates `f(s)s − F(s) ≥ 0`; kept so the
    /// spot check has a concrete failing case.
    Sine { coeff: f64 },
}

impl SourceTerm {
    pub fn force(&self, s: f64) -> f64 {
        match *self {
            SourceTerm::Linear { coeff } => coeff * s,
            SourceTerm::Cubic { coeff } => coeff * s * s * s,
            SourceTerm::Power { coeff, exponent } => coeff * s.abs().powf(exponent - 1.0) * s,
            SourceTerm::Sine { coeff } => coeff * s.sin(),
        }
    }

    pub fn potential(&self, s: f64) -> f64 {
        match *self {
            SourceTerm::Linear { coeff } => 0.5 * coeff * s * s,
            SourceTerm::Cubic { coeff } => 0.25 * coeff * s.powi(4),
            SourceTerm::Power { coeff, exponent } => {
                coeff * s.abs().powf(exponent + 1.0) / (exponent + 1.0)
            }
            SourceTerm::Sine { coeff } => coeff * (1.0 - s.cos()),
        }
    }

    /// Checks `f(0) = 0`, `F(s) ≥ 0` and `f(s)s − F(s) ≥ 0` on 401 points of
    /// `[-10, 10]`. Returns one message per violated condition.
    pub fn spot_check(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if let SourceTerm::Power { exponent, .. } = *self {
            if !(exponent >= 1.0) {
                violations.push(format!("source exponent {exponent} must be >= 1"));
                return violations;
            }
        }
        if self.force(0.0) != 0.0 {
            violations.push("source f(0) != 0".to_string());
        }
        let samples = (0..=400).map(|i| -10.0 + 0.05 * f64::from(i));
        let mut worst_potential: Option<f64> = None;
        let mut worst_growth: Option<f64> = None;
        for s in samples {
            let f = self.force(s);
            let big_f = self.potential(s);
            let scale = 1e-12 * (1.0 + big_f.abs() + (f * s).abs());
            if big_f < -scale {
                worst_potential = Some(worst_potential.map_or(s, |w: f64| w.min(s)));
            }
            if f * s - big_f < -scale {
                worst_growth.get_or_insert(s);
            }
        }
        if let Some(s) = worst_potential {
            violations.push(format!("source potential F(s) < 0 at s = {s}"));
        }
        if let Some(s) = worst_growth {
            violations.push(format!("source f(s)s - F(s) < 0 at s = {s}"));
        }
        violations
    }
}
