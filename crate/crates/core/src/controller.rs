//! Nudging feedback built from finite-volume averages, the observable
//! `B_N(u) = Σ ū_k²`, and the explicit admissibility thresholds on the volume
//! width `h` and gain `μ`.
//!
//! Two threshold sets are evaluated:
//!
//! * nonlinear damping: `h ≤ √λ₁ min{k/(2a₀), k/√(2a₀), D₀/(2a₀)}` and
//!   `μ ≥ a₀² max{1/k, 1/D₀}`, with `δ = min{λ₁√k/(4√m), kλ₁/γ²}` and
//!   `D₀ = k − δγ²/(2λ₁)`;
//! * linear damping: `h ≤ min{(k/a₀)√(λ₁/2), k√(3λ₁/8)}` and
//!   `μ ≥ (a₀²/k) max{1/2, 2/ε²}`, with `ε = min{mb/2, b/(2m)}`.
//!
//! The individual conditions these combined bounds are assembled from do not
//! always agree with them; they are evaluated separately and reported, while
//! the combined bounds decide `satisfied`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::{ControlConfig, RiserParams};
use crate::spatial::{first_dirichlet_eigenvalue, fv_averages, fv_inject, Grid, VolumePartition};

/// Relative slack for threshold comparisons; `h = L/N` rarely lands exactly
/// on a bound in floating point.
const THRESHOLD_RTOL: f64 = 1e-12;

/// `−μ Σ_k ū_k χ_{J_k}` on the grid nodes.
pub fn feedback_term(
    u: &[f64],
    cfg: &ControlConfig,
    part: &VolumePartition,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let ubar = fv_averages(u, part, grid)?;
    if cfg.mu == 0.0 {
        return Ok(vec![0.0; grid.points()]);
    }
    let mut out = fv_inject(&ubar, part, grid)?;
    out.iter_mut().for_each(|v| *v *= -cfg.mu);
    Ok(out)
}

/// `B_N(u) = Σ_k ū_k²`.
pub fn b_n(u: &[f64], part: &VolumePartition, grid: &Grid) -> Result<f64> {
    Ok(fv_averages(u, part, grid)?.iter().map(|v| v * v).sum())
}

/// One named inequality, evaluated as `value ≤ bound` or `value ≥ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl ConditionCheck {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value <= bound * (1.0 + THRESHOLD_RTOL),
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value >= bound * (1.0 - THRESHOLD_RTOL),
        }
    }
}

/// Stated `h`/`μ` thresholds of one theorem and whether the controller meets them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub h: f64,
    pub mu: f64,
    /// `+∞` (serialized as `null`) when there is no destabilizing tension.
    pub h_max: f64,
    pub mu_min: f64,
    pub h_ok: bool,
    pub mu_ok: bool,
    pub satisfied: bool,
    /// The individual conditions behind the combined bounds.
    pub intermediate: Vec<ConditionCheck>,
}

impl ThresholdSet {
    fn new(h: f64, mu: f64, h_max: f64, mu_min: f64, intermediate: Vec<ConditionCheck>) -> Self {
        let h_ok = h <= h_max * (1.0 + THRESHOLD_RTOL);
        let mu_ok = mu >= mu_min * (1.0 - THRESHOLD_RTOL);
        Self {
            applicable: true,
            reason: None,
            h,
            mu,
            h_max,
            mu_min,
            h_ok,
            mu_ok,
            satisfied: h_ok && mu_ok,
            intermediate,
        }
    }

    fn inapplicable(h: f64, mu: f64, reason: &str) -> Self {
        Self {
            applicable: false,
            reason: Some(reason.into()),
            h,
            mu,
            h_max: f64::NAN,
            mu_min: f64::NAN,
            h_ok: false,
            mu_ok: false,
            satisfied: false,
            intermediate: Vec::new(),
        }
    }
}

/// Derived constants and threshold checks for one `(params, control)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub lambda1: f64,
    pub delta: f64,
    /// `δ` came from a user override instead of the theorem's formula.
    pub delta_off_theorem: bool,
    pub d0: f64,
    /// `D₁ = min{2, δD₀ / (2(k + a₁/λ₁))}`.
    pub d1: f64,
    /// `M₀ = m(δ + 1) + 1/2`.
    pub m0: f64,
    /// `ε = min{mb/2, b/(2m)}`; absent when `b ≤ 0`.
    pub eps: Option<f64>,
    pub nonlinear: Option<ThresholdSet>,
    pub linear: Option<ThresholdSet>,
    /// Derivation-level conditions of the linear case that differ from the
    /// combined bounds (they do not govern `satisfied`).
    pub derivation_variant_flags: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn satisfied_nonlinear(&self) -> bool {
        self.nonlinear.as_ref().is_some_and(|t| t.satisfied)
    }

    pub fn satisfied_linear(&self) -> bool {
        self.linear.as_ref().is_some_and(|t| t.satisfied)
    }

    /// True when the tension is never destabilizing (`a₀ = 0`).
    pub fn control_optional(params: &RiserParams) -> bool {
        params.a0 == 0.0
    }
}

fn theorem_delta(params: &RiserParams, lambda1: f64) -> f64 {
    let first = lambda1 * params.k.sqrt() / (4.0 * params.m.sqrt());
    let second = if params.gamma == 0.0 {
        f64::INFINITY
    } else {
        params.k * lambda1 / (params.gamma * params.gamma)
    };
    first.min(second)
}

fn base_report(params: &RiserParams, delta_override: Option<f64>) -> ConditionReport {
    let lambda1 = first_dirichlet_eigenvalue(params.length);
    let delta = delta_override.unwrap_or_else(|| theorem_delta(params, lambda1));
    let d0 = params.k - delta * params.gamma * params.gamma / (2.0 * lambda1);
    let d1 = (delta * d0 / (2.0 * (params.k + params.a1 / lambda1))).min(2.0);
    let m0 = params.m * (delta + 1.0) + 0.5;
    let eps = (params.b > 0.0).then(|| (params.m * params.b / 2.0).min(params.b / (2.0 * params.m)));
    ConditionReport {
        lambda1,
        delta,
        delta_off_theorem: delta_override.is_some(),
        d0,
        d1,
        m0,
        eps,
        nonlinear: None,
        linear: None,
        derivation_variant_flags: Vec::new(),
    }
}

fn nonlinear_thresholds(params: &RiserParams, cfg: &ControlConfig, r: &ConditionReport) -> ThresholdSet {
    let h = cfg.h(params.length);
    let (k, a0, l1, d0, delta) = (params.k, params.a0, r.lambda1, r.d0, r.delta);
    if !(d0 > 0.0) {
        return ThresholdSet::inapplicable(h, cfg.mu, "D0 <= 0: delta violates 0 < delta < 2k lambda1 / gamma^2");
    }
    let delta_cap = if params.gamma == 0.0 {
        f64::INFINITY
    } else {
        2.0 * k * l1 / (params.gamma * params.gamma)
    };
    let mut checks = vec![
        ConditionCheck::at_most(
            "delta <= lambda1 sqrt(k) / (4 sqrt(m))",
            delta,
            l1 * k.sqrt() / (4.0 * params.m.sqrt()),
        ),
        ConditionCheck {
            name: "delta < 2 k lambda1 / gamma^2".into(),
            value: delta,
            bound: delta_cap,
            passed: delta < delta_cap,
        },
    ];
    if a0 == 0.0 {
        return ThresholdSet::new(h, cfg.mu, f64::INFINITY, 0.0, checks);
    }
    checks.extend([
        ConditionCheck::at_most("h <= k sqrt(lambda1) / (2 a0)", h, k * l1.sqrt() / (2.0 * a0)),
        ConditionCheck::at_least("mu >= a0^2 / (2k)", cfg.mu, a0 * a0 / (2.0 * k)),
        ConditionCheck::at_most(
            "h <= k sqrt(lambda1 / (2 a0))",
            h,
            k * (l1 / (2.0 * a0)).sqrt(),
        ),
        ConditionCheck::at_least("mu >= a0^2 / k", cfg.mu, a0 * a0 / k),
        ConditionCheck::at_most(
            "h <= D0 sqrt(lambda1 / 2) / a0",
            h,
            d0 * (l1 / 2.0).sqrt() / a0,
        ),
        ConditionCheck::at_least("mu >= a0^2 / D0", cfg.mu, a0 * a0 / d0),
    ]);
    let h_max = l1.sqrt() * (k / (2.0 * a0)).min(k / (2.0 * a0).sqrt()).min(d0 / (2.0 * a0));
    let mu_min = a0 * a0 * (1.0 / k).max(1.0 / d0);
    ThresholdSet::new(h, cfg.mu, h_max, mu_min, checks)
}

fn linear_thresholds(
    params: &RiserParams,
    cfg: &ControlConfig,
    r: &ConditionReport,
) -> (ThresholdSet, Vec<ConditionCheck>) {
    let h = cfg.h(params.length);
    let Some(eps) = r.eps else {
        return (
            ThresholdSet::inapplicable(h, cfg.mu, "b <= 0: eps undefined"),
            Vec::new(),
        );
    };
    let (m, b, k, a0, l1) = (params.m, params.b, params.k, params.a0, r.lambda1);
    let bending_bound = k * (3.0 * l1 / 8.0).sqrt();
    let (h_max, mu_min) = if a0 == 0.0 {
        (bending_bound, 0.0)
    } else {
        (
            ((k / a0) * (l1 / 2.0).sqrt()).min(bending_bound),
            (a0 * a0 / k) * 0.5f64.max(2.0 / (eps * eps)),
        )
    };
    let variants = vec![
        ConditionCheck::at_most(
            "h <= eps k sqrt(3 lambda1 / (8 a0))",
            h,
            if a0 == 0.0 {
                f64::INFINITY
            } else {
                eps * k * (3.0 * l1 / (8.0 * a0)).sqrt()
            },
        ),
        ConditionCheck::at_least("mu >= 2 a0^2 / (k eps^2)", cfg.mu, 2.0 * a0 * a0 / (k * eps * eps)),
        ConditionCheck::at_most(
            "h <= (k / a0) sqrt(lambda1 / 2)",
            h,
            if a0 == 0.0 {
                f64::INFINITY
            } else {
                (k / a0) * (l1 / 2.0).sqrt()
            },
        ),
        ConditionCheck::at_least("mu >= a0^2 / k", cfg.mu, a0 * a0 / k),
        ConditionCheck::at_most("eps <= m b / 2", eps, m * b / 2.0),
        ConditionCheck::at_most("eps <= b / (2m)", eps, b / (2.0 * m)),
    ];
    (ThresholdSet::new(h, cfg.mu, h_max, mu_min, Vec::new()), variants)
}

/// Thresholds of the nonlinear-damping theorem.
pub fn check_conditions_nonlinear(params: &RiserParams, cfg: &ControlConfig) -> ConditionReport {
    check_conditions_nonlinear_with(params, cfg, None)
}

pub fn check_conditions_nonlinear_with(
    params: &RiserParams,
    cfg: &ControlConfig,
    delta_override: Option<f64>,
) -> ConditionReport {
    let mut r = base_report(params, delta_override);
    r.nonlinear = Some(nonlinear_thresholds(params, cfg, &r));
    r
}

/// Thresholds of the linear-damping theorem.
pub fn check_conditions_linear(params: &RiserParams, cfg: &ControlConfig) -> ConditionReport {
    let mut r = base_report(params, None);
    let (set, variants) = linear_thresholds(params, cfg, &r);
    r.linear = Some(set);
    r.derivation_variant_flags = variants;
    r
}

/// Both threshold sets in one report.
pub fn check_conditions(
    params: &RiserParams,
    cfg: &ControlConfig,
    delta_override: Option<f64>,
) -> ConditionReport {
    let mut r = base_report(params, delta_override);
    r.nonlinear = Some(nonlinear_thresholds(params, cfg, &r));
    let (set, variants) = linear_thresholds(params, cfg, &r);
    r.linear = Some(set);
    r.derivation_variant_flags = variants;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::FieldDescriptor;
    use crate::spatial::{gradient_norm_sq, norm_sq};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(m: f64, k: f64, b: f64, gamma: f64, a0: f64, length: f64) -> RiserParams {
        RiserParams {
            m,
            k,
            b,
            gamma,
            p: 1.0,
            length,
            tension: FieldDescriptor::Constant { value: -a0 },
            a0,
            a1: 1.0,
        }
    }

    fn ctl(n: usize, mu: f64) -> ControlConfig {
        ControlConfig { n_volumes: n, mu }
    }

    #[test]
    fn feedback_examples() {
        let g = Grid::new(101, 1.0).unwrap();
        let two = VolumePartition::new(2, &g).unwrap();
        let x: Vec<f64> = (0..101).map(|i| g.x(i)).collect();
        let zero = feedback_term(&x, &ctl(2, 0.0), &two, &g).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let seven = VolumePartition::new(7, &g).unwrap();
        let c = feedback_term(&vec![0.3; 101], &ctl(7, 1.0), &seven, &g).unwrap();
        assert!(c.iter().all(|v| (v + 0.3).abs() < 1e-13));

        let f = feedback_term(&x, &ctl(2, 2.0), &two, &g).unwrap();
        assert!((f[20] + 0.5).abs() < 1e-13);
        assert!((f[80] + 1.5).abs() < 1e-13);
        // node 50 is the shared boundary of the two volumes
        assert!((f[50] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn b_n_examples() {
        let g = Grid::new(101, 1.0).unwrap();
        let two = VolumePartition::new(2, &g).unwrap();
        assert_eq!(b_n(&vec![0.0; 101], &two, &g).unwrap(), 0.0);
        let five = VolumePartition::new(5, &g).unwrap();
        assert!((b_n(&vec![2.0; 101], &five, &g).unwrap() - 20.0).abs() < 1e-12);
        let x: Vec<f64> = (0..101).map(|i| g.x(i)).collect();
        assert!((b_n(&x, &two, &g).unwrap() - 0.625).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_reference_values() {
        let r = check_conditions_nonlinear(&params(1.0, 1.0, 1.0, 2.0, 1.0, PI), &ctl(20, 3.0));
        assert_eq!(r.lambda1, 1.0);
        assert_eq!(r.delta, 0.25);
        assert_eq!(r.d0, 0.5);
        let t = r.nonlinear.as_ref().unwrap();
        assert_eq!(t.h_max, 0.25);
        assert_eq!(t.mu_min, 2.0);
        // h = π/20 ≈ 0.157 ≤ 0.25, μ = 3 ≥ 2
        assert!(r.satisfied_nonlinear());
        assert_eq!(t.intermediate.len(), 8);
    }

    #[test]
    fn nonlinear_without_tension_is_vacuous() {
        let r = check_conditions_nonlinear(&params(1.0, 1.0, 1.0, 2.0, 0.0, PI), &ctl(1, 0.0));
        let t = r.nonlinear.unwrap();
        assert_eq!(t.h_max, f64::INFINITY);
        assert_eq!(t.mu_min, 0.0);
        assert!(t.satisfied);
    }

    #[test]
    fn nonlinear_gamma_zero_limit() {
        let r = check_conditions_nonlinear(&params(1.0, 1.0, 1.0, 0.0, 1.0, PI), &ctl(4, 1.0));
        assert_eq!(r.delta, 0.25);
        assert_eq!(r.d0, 1.0);
    }

    #[test]
    fn delta_override_can_make_theorem_inapplicable() {
        let p = params(1.0, 1.0, 1.0, 2.0, 1.0, PI);
        let r = check_conditions_nonlinear_with(&p, &ctl(20, 3.0), Some(1.0));
        assert!(r.delta_off_theorem);
        assert!(r.d0 <= 0.0);
        assert!(!r.nonlinear.as_ref().unwrap().applicable);
        assert!(!r.satisfied_nonlinear());
    }

    #[test]
    fn linear_reference_values() {
        let r = check_conditions_linear(&params(1.0, 1.0, 1.0, 0.0, 1.0, PI), &ctl(20, 8.0));
        assert_eq!(r.eps, Some(0.5));
        let t = r.linear.as_ref().unwrap();
        assert_eq!(t.h_max, (3.0f64 / 8.0).sqrt());
        assert_eq!(t.mu_min, 8.0);
        assert!(t.satisfied);
        assert_eq!(r.derivation_variant_flags.len(), 6);
    }

    #[test]
    fn linear_symmetric_eps_and_no_tension() {
        let r = check_conditions_linear(&params(1.0, 1.0, 2.0, 0.0, 1.0, PI), &ctl(4, 1.0));
        assert_eq!(r.eps, Some(1.0));
        let r = check_conditions_linear(&params(1.0, 1.0, 1.0, 0.0, 0.0, PI), &ctl(4, 0.0));
        let t = r.linear.unwrap();
        assert_eq!(t.h_max, (3.0f64 / 8.0).sqrt());
        assert_eq!(t.mu_min, 0.0);
    }

    #[test]
    fn linear_needs_damping() {
        let r = check_conditions_linear(&params(1.0, 1.0, 0.0, 0.0, 1.0, PI), &ctl(4, 100.0));
        assert!(r.eps.is_none());
        assert!(!r.linear.unwrap().applicable);
    }

    #[test]
    fn checks_are_pure() {
        let p = params(2.0, 0.7, 1.3, 1.1, 0.9, 3.0);
        assert_eq!(check_conditions(&p, &ctl(9, 5.0), None), check_conditions(&p, &ctl(9, 5.0), None));
    }

    proptest! {
        #[test]
        fn thresholds_monotone_in_a0(
            a0 in 0.01f64..5.0,
            bump in 0.0f64..5.0,
            m in 0.2f64..3.0,
            k in 0.2f64..3.0,
            gamma in -2.0f64..2.0,
        ) {
            let lo = check_conditions(&params(m, k, 1.0, gamma, a0, 4.0), &ctl(10, 1.0), None);
            let hi = check_conditions(&params(m, k, 1.0, gamma, a0 + bump, 4.0), &ctl(10, 1.0), None);
            for (a, b) in [(lo.nonlinear.unwrap(), hi.nonlinear.unwrap()), (lo.linear.unwrap(), hi.linear.unwrap())] {
                prop_assert!(b.h_max <= a.h_max);
                prop_assert!(b.mu_min >= a.mu_min);
            }
        }

        #[test]
        fn delta_keeps_d0_positive(m in 0.1f64..5.0, k in 0.1f64..5.0, gamma in -5.0f64..5.0, l in 0.5f64..10.0) {
            let r = check_conditions_nonlinear(&params(m, k, 1.0, gamma, 1.0, l), &ctl(4, 1.0));
            prop_assert!(r.d0 > 0.0);
            prop_assert!(r.d0 >= 0.5 * k - 1e-12);
        }

        #[test]
        fn feedback_is_linear(
            u in prop::collection::vec(-1.0f64..1.0, 31),
            w in prop::collection::vec(-1.0f64..1.0, 31),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let g = Grid::new(31, 2.0).unwrap();
            let part = VolumePartition::new(4, &g).unwrap();
            let c = ctl(4, 2.5);
            let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = feedback_term(&combo, &c, &part, &g).unwrap();
            let fu = feedback_term(&u, &c, &part, &g).unwrap();
            let fw = feedback_term(&w, &c, &part, &g).unwrap();
            for i in 0..31 {
                prop_assert!((lhs[i] - alpha * fu[i] - beta * fw[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn b_n_nonnegative_and_bounds_norm(
            mut u in prop::collection::vec(-1.0f64..1.0, 41),
            n in 1usize..12,
        ) {
            u[0] = 0.0;
            u[40] = 0.0;
            let g = Grid::new(41, 1.0).unwrap();
            let part = VolumePartition::new(n, &g).unwrap();
            let bn = b_n(&u, &part, &g).unwrap();
            prop_assert!(bn >= 0.0);
            let h = part.h();
            let lhs = norm_sq(&u, &g).unwrap();
            let rhs = h * bn + h * h * gradient_norm_sq(&u, &g).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
