//! Randomized checks of the functional inequalities behind the feedback
//! design, evaluated by composite Gauss–Legendre quadrature on analytic test
//! functions:
//!
//! * finite-volume approximation `‖φ − Σ φ̄_k χ_k‖ ≤ h ‖φ_x‖`
//! * finite-volume norm bound `‖φ‖² ≤ h Σ φ̄_k² + h² ‖φ_x‖²`
//! * Poincaré `‖φ‖² ≤ λ₁⁻¹ ‖φ_x‖²`, `λ₁ = (π/L)²`
//! * interpolation `‖u_x‖² ≤ ‖u‖ ‖u_xx‖` (clamped functions)

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative slack allowed for quadrature rounding.
pub const MARGIN_TOL: f64 = 1e-8;
/// Default number of sine harmonics.
pub const HARMONIC_CUTOFF: usize = 16;
const MIN_PANELS: usize = 64;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SineSeries,
    ClampedPolynomial,
    Bump,
    /// Constants; no boundary constraint, used only by the finite-volume checks.
    Constant,
}

impl Family {
    pub fn is_clamped(self) -> bool {
        matches!(self, Family::ClampedPolynomial | Family::Bump)
    }

    pub fn vanishes_at_boundary(self) -> bool {
        self != Family::Constant
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::SineSeries => "sine-series",
            Family::ClampedPolynomial => "clamped-polynomial",
            Family::Bump => "bump",
            Family::Constant => "constant",
        }
    }
}

/// A test function with exact first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `Σ a_j sin(jπx/L)`, `j = 1, 2, …`
    SineSeries { amplitudes: Vec<f64>, length: f64 },
    /// Polynomial in `x`, coefficients from the constant term upward.
    Polynomial { coeffs: Vec<f64> },
    /// `c (x − a)²(b − x)²` on `[a, b]`, zero elsewhere.
    Bump { a: f64, b: f64, scale: f64 },
    Constant { value: f64 },
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl TestFunction {
    /// `x²(L − x)² q(x/L)` for `q` given by `q_coeffs`.
    pub fn clamped_polynomial(q_coeffs: &[f64], length: f64) -> Self {
        let base = [0.0, 0.0, length * length, -2.0 * length, 1.0];
        let q: Vec<f64> = q_coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c / length.powi(j as i32))
            .collect();
        TestFunction::Polynomial {
            coeffs: poly_mul(&base, &q),
        }
    }

    /// Returns `(φ, φ_x, φ_xx)` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            TestFunction::SineSeries { amplitudes, length } => {
                // sin(jθ), cos(jθ) by the angle-addition recurrence
                let base = PI / length;
                let (s1, c1) = (base * x).sin_cos();
                let (mut s, mut c) = (s1, c1);
                let mut out = (0.0, 0.0, 0.0);
                for (j, a) in amplitudes.iter().enumerate() {
                    let w = (j + 1) as f64 * base;
                    out.0 += a * s;
                    out.1 += a * w * c;
                    out.2 -= a * w * w * s;
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                }
                out
            }
            TestFunction::Polynomial { coeffs } => {
                // Horner for the value and both derivatives at once
                let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    d2 = d2 * x + 2.0 * d1;
                    d1 = d1 * x + p;
                    p = p * x + c;
                }
                (p, d1, d2)
            }
            TestFunction::Bump { a, b, scale } => {
                if x <= *a || x >= *b {
                    return (0.0, 0.0, 0.0);
                }
                let (p, q) = (x - a, b - x);
                (
                    scale * p * p * q * q,
                    scale * 2.0 * p * q * (q - p),
                    scale * 2.0 * (q * q - 4.0 * p * q + p * p),
                )
            }
            TestFunction::Constant { value } => (*value, 0.0, 0.0),
        }
    }

    /// Points where the function is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            TestFunction::Bump { a, b, .. } => vec![*a, *b],
            _ => Vec::new(),
        }
    }

    /// Draws one member of `family` on `[0, length]`.
    pub fn sample(family: Family, length: f64, cutoff: usize, rng: &mut impl Rng) -> Self {
        match family {
            Family::SineSeries => {
                let active = rng.gen_range(1..=cutoff.max(1));
                let mut amplitudes: Vec<f64> =
                    (0..active).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                // occasionally a single high harmonic, the near-extremal case
                if rng.gen_bool(0.1) {
                    amplitudes.iter_mut().for_each(|a| *a = 0.0);
                    amplitudes[active - 1] = 1.0;
                }
                TestFunction::SineSeries { amplitudes, length }
            }
            Family::ClampedPolynomial => {
                let degree = rng.gen_range(0..=4);
                let q: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                TestFunction::clamped_polynomial(&q, length)
            }
            Family::Bump => {
                let mut a = rng.gen_range(0.0..length);
                let mut b = rng.gen_range(0.0..length);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                if b - a < 1e-3 * length {
                    b = (a + 1e-3 * length).min(length);
                    a = b - 1e-3 * length;
                }
                let scale = 16.0 / (b - a).powi(4);
                TestFunction::Bump { a, b, scale }
            }
            Family::Constant => TestFunction::Constant {
                value: rng.gen_range(-1.0..=1.0),
            },
        }
    }
}

/// Quadrature panels `(lo, hi, volume)` covering `[0, L]`: each of the `n`
/// volumes is split into equal pieces (at least 64 in total) and further at
/// the breakpoints.
fn panels(n: usize, length: f64, breaks: &[f64]) -> Vec<(f64, f64, usize)> {
    let per = MIN_PANELS.div_ceil(n);
    let h = length / n as f64;
    let mut out = Vec::with_capacity(n * per + 2 * breaks.len());
    for k in 0..n {
        let lo = k as f64 * h;
        for j in 0..per {
            let a = lo + h * j as f64 / per as f64;
            let b = if j + 1 == per && k + 1 == n {
                length
            } else {
                lo + h * (j + 1) as f64 / per as f64
            };
            let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
            cuts.sort_by(f64::total_cmp);
            let mut start = a;
            for c in cuts.into_iter().chain(std::iter::once(b)) {
                out.push((start, c, k));
                start = c;
            }
        }
    }
    out
}

/// Quadrature values a check needs for one function and partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantities {
    pub h: f64,
    pub norm_sq: f64,
    pub dx_norm_sq: f64,
    pub dxx_norm_sq: f64,
    /// `Σ φ̄_k²`
    pub bn: f64,
    /// `‖φ − Σ φ̄_k χ_k‖²`
    pub deviation_sq: f64,
}

pub fn quantities(f: &TestFunction, n_volumes: usize, length: f64) -> Quantities {
    let h = length / n_volumes as f64;
    // (weight, volume, φ) per quadrature node; each node is evaluated once
    let mut nodes = Vec::new();
    let mut sums = vec![0.0; n_volumes];
    let (mut norm_sq, mut dx_norm_sq, mut dxx_norm_sq) = (0.0, 0.0, 0.0);
    for (a, b, k) in panels(n_volumes, length, &f.breakpoints()) {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            for point in [mid - half * x, mid + half * x] {
                let (v, d1, d2) = f.eval(point);
                let weight = half * w;
                sums[k] += weight * v;
                norm_sq += weight * v * v;
                dx_norm_sq += weight * d1 * d1;
                dxx_norm_sq += weight * d2 * d2;
                nodes.push((weight, k, v));
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / h).collect();
    Quantities {
        h,
        norm_sq,
        dx_norm_sq,
        dxx_norm_sq,
        bn: means.iter().map(|m| m * m).sum(),
        deviation_sq: nodes.iter().map(|&(w, k, v)| w * (v - means[k]).powi(2)).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    FvApproximation,
    FvNormBound,
    Poincare,
    Interpolation,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::FvApproximation => "fv-approximation",
            Check::FvNormBound => "fv-norm-bound",
            Check::Poincare => "poincare",
            Check::Interpolation => "interpolation",
        }
    }

    pub fn applies_to(self, family: Family) -> bool {
        match self {
            Check::FvApproximation | Check::FvNormBound => true,
            Check::Poincare => family.vanishes_at_boundary(),
            Check::Interpolation => family.is_clamped(),
        }
    }

    /// `(lhs, rhs, scale)`; `scale` is the size used for the absolute floor
    /// when `rhs` vanishes.
    pub fn sides(self, q: &Quantities, length: f64) -> (f64, f64, f64) {
        match self {
            Check::FvApproximation => (
                q.deviation_sq.max(0.0).sqrt(),
                q.h * q.dx_norm_sq.sqrt(),
                q.norm_sq.sqrt(),
            ),
            Check::FvNormBound => (
                q.norm_sq,
                q.h * q.bn + q.h * q.h * q.dx_norm_sq,
                q.norm_sq,
            ),
            Check::Poincare => {
                let lambda1 = (PI / length).powi(2);
                (q.norm_sq, q.dx_norm_sq / lambda1, q.norm_sq)
            }
            Check::Interpolation => (
                q.dx_norm_sq,
                (q.norm_sq * q.dxx_norm_sq).sqrt(),
                q.dx_norm_sq,
            ),
        }
    }
}

/// Relative margin `(rhs − lhs)/rhs`, with an absolute floor when both sides vanish.
pub fn relative_margin(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if rhs > 0.0 {
        (rhs - lhs) / rhs
    } else if lhs <= 1e-12 * scale.max(f64::MIN_POSITIVE) || lhs == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: Check,
    pub family: Family,
    /// Number of volumes; absent for checks that do not involve the partition.
    pub n_volumes: Option<usize>,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Largest `lhs / rhs` seen (0 when every `rhs` vanished).
    pub max_ratio: f64,
    pub passed: bool,
}

fn summarize(
    check: Check,
    family: Family,
    n_volumes: Option<usize>,
    quantities: &[Quantities],
    length: f64,
) -> CheckSummary {
    let mut worst = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut violations = 0;
    for q in quantities {
        let (lhs, rhs, scale) = check.sides(q, length);
        let margin = relative_margin(lhs, rhs, scale);
        if margin < -MARGIN_TOL {
            violations += 1;
        }
        worst = worst.min(margin);
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }
    if quantities.is_empty() {
        worst = 0.0;
    }
    CheckSummary {
        check,
        family,
        n_volumes,
        samples: quantities.len(),
        violations,
        worst_margin: worst,
        max_ratio,
        passed: violations == 0,
    }
}

fn all_quantities(functions: &[TestFunction], n_volumes: usize, length: f64) -> Vec<Quantities> {
    functions.iter().map(|f| quantities(f, n_volumes, length)).collect()
}

/// Draws `samples` functions of one family; deterministic in `seed`.
pub fn sample_family(family: Family, samples: usize, seed: u64, length: f64, cutoff: usize) -> Vec<TestFunction> {
    let stream = match family {
        Family::SineSeries => 1,
        Family::ClampedPolynomial => 2,
        Family::Bump => 3,
        Family::Constant => 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..samples)
        .map(|_| TestFunction::sample(family, length, cutoff, &mut rng))
        .collect()
}

pub fn check_fv_approximation(functions: &[TestFunction], family: Family, n_volumes: usize, length: f64) -> CheckSummary {
    summarize(Check::FvApproximation, family, Some(n_volumes), &all_quantities(functions, n_volumes, length), length)
}

pub fn check_fv_norm_bound(functions: &[TestFunction], family: Family, n_volumes: usize, length: f64) -> CheckSummary {
    summarize(Check::FvNormBound, family, Some(n_volumes), &all_quantities(functions, n_volumes, length), length)
}

pub fn check_poincare(functions: &[TestFunction], family: Family, length: f64) -> CheckSummary {
    summarize(Check::Poincare, family, None, &all_quantities(functions, 1, length), length)
}

pub fn check_interpolation(functions: &[TestFunction], family: Family, length: f64) -> CheckSummary {
    summarize(Check::Interpolation, family, None, &all_quantities(functions, 1, length), length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub samples: usize,
    pub seed: u64,
    pub length: f64,
    pub volumes: Vec<usize>,
    pub harmonic_cutoff: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            length: 1.0,
            volumes: vec![1, 2, 4, 8, 16],
            harmonic_cutoff: HARMONIC_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub config: SuiteConfig,
    pub summaries: Vec<CheckSummary>,
    pub total_violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

/// Runs every applicable (check, family, N) combination.
pub fn run_suite(cfg: &SuiteConfig) -> LemmaReport {
    let families = [
        Family::SineSeries,
        Family::ClampedPolynomial,
        Family::Bump,
        Family::Constant,
    ];
    let pools: Vec<(Family, Vec<TestFunction>)> = families
        .iter()
        .map(|&f| (f, sample_family(f, cfg.samples, cfg.seed, cfg.length, cfg.harmonic_cutoff)))
        .collect();
    let mut jobs = Vec::new();
    for fi in 0..pools.len() {
        for (ni, &n) in cfg.volumes.iter().enumerate() {
            jobs.push((fi, n, ni == 0));
        }
    }
    // Norm-only checks ride along with the first partition of each family.
    let summaries: Vec<CheckSummary> = jobs
        .par_iter()
        .flat_map_iter(|&(fi, n, first)| {
            let (family, functions) = (pools[fi].0, &pools[fi].1);
            let q = all_quantities(functions, n, cfg.length);
            let mut out = vec![
                summarize(Check::FvApproximation, family, Some(n), &q, cfg.length),
                summarize(Check::FvNormBound, family, Some(n), &q, cfg.length),
            ];
            if first {
                for check in [Check::Poincare, Check::Interpolation] {
                    if check.applies_to(family) {
                        out.push(summarize(check, family, None, &q, cfg.length));
                    }
                }
            }
            out
        })
        .collect();
    let total_violations = summaries.iter().map(|s| s.violations).sum();
    let worst_margin = summaries
        .iter()
        .map(|s| s.worst_margin)
        .fold(f64::INFINITY, f64::min);
    LemmaReport {
        config: cfg.clone(),
        passed: total_violations == 0,
        total_violations,
        worst_margin,
        summaries,
    }
}
