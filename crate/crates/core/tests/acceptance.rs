//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed:
//! `cargo test -p riser-stab --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use riser_stab::diagnostics::{
    bounded_product_check, claimed_polynomial_rate, derivation_polynomial_rate,
    energy_balance_residual, fit_exponential, fit_polynomial,
};
use riser_stab::lemmas::{run_suite, SuiteConfig, MARGIN_TOL};
use riser_stab::params::ReferenceInitial;
use riser_stab::spatial::{biharmonic_apply, discrete_dirichlet_eigenvalue, first_dirichlet_eigenvalue};
use riser_stab::sweep::{run_sweep, SweepSpec};
use riser_stab::{
    check_conditions_linear, check_conditions_nonlinear, simulate, ControlConfig, FieldDescriptor,
    Grid, RiserParams, ScenarioConfig, Trajectory,
};

const LINEAR: &str = include_str!("../../../scenarios/linear.json");
const NONLINEAR: &str = include_str!("../../../scenarios/nonlinear.json");
const NONLINEAR_LONG: &str = include_str!("../../../scenarios/nonlinear_long.json");
const TRACKING: &str = include_str!("../../../scenarios/tracking.json");
const SWEEP: &str = include_str!("../../../scenarios/sweep.json");

/// Relative tolerance for sample-to-sample monotonicity.
const MONOTONE_TOL: f64 = 1e-10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn scenario(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_json_str(text).expect("bundled scenario parses")
}

fn run(cfg: &ScenarioConfig) -> Trajectory {
    let traj = simulate(cfg).expect("bundled scenario is valid");
    if let Some(f) = &traj.failure {
        panic!("step failure at t = {}: {}", f.t, f.message);
    }
    traj
}

/// Largest increase between consecutive samples relative to the first value.
fn max_relative_increase(values: &[f64]) -> f64 {
    let rise = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    rise / values[0].abs()
}

fn lemma_suite() -> Outcome {
    let start = Instant::now();
    let report = run_suite(&SuiteConfig {
        samples: 1000,
        seed: 2024,
        ..SuiteConfig::default()
    });
    let secs = start.elapsed().as_secs_f64();
    let passed = report.total_violations == 0 && report.worst_margin >= -MARGIN_TOL && secs < 10.0;
    outcome(
        passed,
        format!(
            "{} checks, violations {}, worst margin {:.3e} (>= -1e-8), {:.2} s (< 10 s)",
            report.summaries.len(),
            report.total_violations,
            report.worst_margin,
            secs
        ),
    )
}

fn operators() -> Outcome {
    let grid = Grid::new(101, 1.0).unwrap();
    let u: Vec<f64> = (0..101)
        .map(|i| {
            let x = grid.x(i);
            (x * (1.0 - x)).powi(2)
        })
        .collect();
    let b = biharmonic_apply(&u, &grid).unwrap();
    // stencil-interior nodes: the five-point stencil touches no ghost value
    let worst = (2..99).map(|i| (b[i] - 24.0).abs()).fold(0.0f64, f64::max);
    let bih_ok = worst < 1e-6;

    let length = 2.0;
    let exact = first_dirichlet_eigenvalue(length);
    let errors: Vec<f64> = [21, 41, 81, 161]
        .iter()
        .map(|&m| (discrete_dirichlet_eigenvalue(&Grid::new(m, length).unwrap()) - exact).abs())
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.1);
    outcome(
        bih_ok && order_ok,
        format!(
            "max |B(x^2(1-x)^2) - 24| on nodes 2..M-3 = {worst:.2e}; eigenvalue orders {}",
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn energy_equality() -> (Outcome, Trajectory) {
    let coarse_cfg = scenario(NONLINEAR);
    let mut fine_cfg = coarse_cfg.clone();
    fine_cfg.grid_points = 2 * coarse_cfg.grid_points - 1;
    fine_cfg.dt = coarse_cfg.dt / 2.0;
    fine_cfg.sample_every = 2 * coarse_cfg.sample_every;
    let coarse = run(&coarse_cfg);
    let fine = run(&fine_cfg);
    let r0 = energy_balance_residual(&coarse);
    let r1 = energy_balance_residual(&fine);
    let ratio = r0.residual / r1.residual;
    let theorem = coarse.conditions.satisfied_nonlinear();
    let passed = theorem && !r0.absolute && r0.residual <= 1e-3 && (3.0..=5.0).contains(&ratio);
    (
        outcome(
            passed,
            format!(
                "residual {:.3e} (<= 1e-3) at M={}, dt={}; refined {:.3e}; ratio {ratio:.3} in [3, 5]; theorem conditions {}",
                r0.residual,
                coarse_cfg.grid_points,
                coarse_cfg.dt,
                r1.residual,
                if theorem { "met" } else { "NOT met" }
            ),
        ),
        coarse,
    )
}

fn monotonicity(nonlinear: &Trajectory, linear: &Trajectory) -> Outcome {
    let e: Vec<f64> = nonlinear.samples.iter().map(|s| s.energy.script_e).collect();
    let w: Vec<f64> = linear.samples.iter().map(|s| s.energy.w).collect();
    let (de, dw) = (max_relative_increase(&e), max_relative_increase(&w));
    let linear_ok = linear.conditions.satisfied_linear();
    outcome(
        de <= MONOTONE_TOL && dw <= MONOTONE_TOL && linear_ok,
        format!("max relative rise of energy {de:.2e}, of W {dw:.2e} (<= 1e-10)"),
    )
}

fn exponential(linear: &Trajectory, secs: f64) -> Outcome {
    let open_cfg = ScenarioConfig {
        control: ControlConfig {
            mu: 0.0,
            ..scenario(LINEAR).control
        },
        ..scenario(LINEAR)
    };
    let start = Instant::now();
    let open = run(&open_cfg);
    let secs = secs + start.elapsed().as_secs_f64();
    let params = &open_cfg.params;
    let d0 = params.k - params.a0 * params.length.powi(2) / (PI * PI);
    let window = (5.0, 50.0);
    let closed = fit_exponential(&linear.norm_series(), window).unwrap();
    let open = fit_exponential(&open.norm_series(), window).unwrap();
    let passed = d0 < 0.0
        && linear.conditions.satisfied_linear()
        && closed.rate > 1e-3
        && closed.r_squared > 0.9
        && open.rate <= 0.0
        && secs < 60.0;
    outcome(
        passed,
        format!(
            "d0 = {d0:.3}; controlled rate {:.4} (r^2 {:.4}); mu = 0 rate {:.4}; {:.1} s (< 60 s)",
            closed.rate, closed.r_squared, open.rate, secs
        ),
    )
}

fn polynomial() -> Outcome {
    let cfg = scenario(NONLINEAR_LONG);
    let traj = run(&cfg);
    let window = cfg.default_window();
    let series = traj.norm_series();
    let exponent = claimed_polynomial_rate(cfg.params.p);
    let check = bounded_product_check(&series, exponent, window);
    let fit = fit_polynomial(&series, window, cfg.params.p).unwrap();
    outcome(
        check.is_bounded && traj.conditions.satisfied_nonlinear() && cfg.t_final == 200.0,
        format!(
            "sup t^(2/3)(|u_t|^2+|u_xx|^2) = {:.4}, tail sup {:.4}; fitted rate {:.4} vs p/(p+2) = {:.4}, (p+1)/(p+2) = {:.4}",
            check.sup,
            check.tail_sup,
            fit.rate,
            derivation_polynomial_rate(cfg.params.p),
            exponent
        ),
    )
}

fn tracking() -> Outcome {
    let cfg = scenario(TRACKING);
    let traj = run(&cfg);
    let fit = fit_exponential(&traj.norm_series(), (5.0, 50.0)).unwrap();
    let mut same = cfg.clone();
    same.reference_initial = Some(ReferenceInitial {
        u: cfg.initial_u.clone(),
        v: cfg.initial_v.clone(),
    });
    let identical = run(&same);
    let worst = identical
        .norm_series()
        .iter()
        .map(|&(_, y)| y.sqrt())
        .fold(0.0f64, f64::max);
    outcome(
        fit.rate > 1e-3 && fit.r_squared > 0.9 && worst < 1e-12 && traj.conditions.satisfied_linear(),
        format!(
            "difference rate {:.4} (r^2 {:.4}); identical data max difference {worst:.1e}",
            fit.rate, fit.r_squared
        ),
    )
}

fn thresholds() -> Outcome {
    let params = |gamma: f64| RiserParams {
        m: 1.0,
        k: 1.0,
        b: 1.0,
        gamma,
        p: 1.0,
        length: PI,
        tension: FieldDescriptor::Constant { value: -1.0 },
        a0: 1.0,
        a1: 1.0,
    };
    let control = ControlConfig { n_volumes: 16, mu: 2.0 };
    let nl = check_conditions_nonlinear(&params(2.0), &control);
    let t = nl.nonlinear.clone().unwrap();
    let lin = check_conditions_linear(&params(0.0), &control);
    let l = lin.linear.clone().unwrap();
    let passed = nl.delta == 0.25
        && nl.d0 == 0.5
        && t.h_max == 0.25
        && t.mu_min == 2.0
        && lin.eps == Some(0.5)
        && l.h_max == (3.0f64 / 8.0).sqrt()
        && l.mu_min == 8.0;
    outcome(
        passed,
        format!(
            "nonlinear delta {}, D0 {}, h_max {}, mu_min {}; linear eps {:?}, h_max {}, mu_min {}",
            nl.delta, nl.d0, t.h_max, t.mu_min, lin.eps, l.h_max, l.mu_min
        ),
    )
}

fn sweep() -> Outcome {
    let spec = SweepSpec::from_json_str(SWEEP).unwrap();
    let start = Instant::now();
    let result = run_sweep(&spec, Some(4)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let theorem = result.rows.iter().filter(|r| r.theorem_satisfied).count();
    let errors = result.rows.iter().filter(|r| r.error.is_some()).count();
    let unsound = result.unsound_rows().len();
    outcome(
        result.rows.len() == 36 && unsound == 0 && secs < 600.0,
        format!(
            "{} points, {theorem} theorem-satisfied, {unsound} unsound, {errors} errors, {secs:.1} s (< 600 s)",
            result.rows.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "acceptance {n} {name}: {} - {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report(1, "lemma suite", lemma_suite());
    report(2, "operator correctness", operators());
    let (equality, nonlinear) = energy_equality();
    report(3, "energy equality", equality);
    let start = Instant::now();
    let linear = run(&scenario(LINEAR));
    let linear_secs = start.elapsed().as_secs_f64();
    report(4, "lyapunov monotonicity", monotonicity(&nonlinear, &linear));
    report(5, "exponential stabilization", exponential(&linear, linear_secs));
    report(6, "polynomial decay", polynomial());
    report(7, "tracking", tracking());
    report(8, "threshold arithmetic", thresholds());
    report(9, "sweep soundness", sweep());

    let failed = results.iter().filter(|r| !r.2.passed).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
