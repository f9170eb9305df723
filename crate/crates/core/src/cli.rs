//! The `riser-stab` command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::controller::{check_conditions, ConditionReport, ThresholdSet};
use crate::diagnostics::{
    bounded_product_check, claimed_polynomial_rate, derivation_polynomial_rate,
    energy_balance_residual, fit_exponential, fit_polynomial, BoundedProduct, DecayFit,
    EnergyBalance, EnergyReport,
};
use crate::integrator::{simulate_from, State, StepFailure, Trajectory};
use crate::lemmas::{run_suite, SuiteConfig};
use crate::output::{plot_svg, read_column, write_json, write_timeseries, ReferenceSlope};
use crate::params::{Mode, ScenarioConfig};
use crate::sweep::{run_sweep, SweepSpec};

/// Environment variable capping sweep concurrency.
pub const THREADS_ENV: &str = "RISER_STAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "riser-stab", version, about = "Feedback stabilization of the clamped riser equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the derived constants and admissibility thresholds of a scenario.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Integrate a scenario and write time series, reports and a plot.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the final state as a binary dump.
        #[arg(long)]
        dump_state: Option<PathBuf>,
        /// Start from a binary dump instead of the configured initial data
        /// and integrate for a further `t_final`.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Run a parameter sweep and classify every grid point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Concurrency cap; overrides RISER_STAB_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the functional inequalities on random test functions.
    VerifyLemmas {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
        volumes: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a decay law to one column of a time-series CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "norm_sum")]
        column: String,
        #[arg(long, value_enum, default_value_t = FitKind::Exponential)]
        kind: FitKind,
        /// `LO HI`; defaults to `[max(1, T/10), T]` with `T` the last time.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        window: Option<Vec<f64>>,
        /// Damping exponent, for the claimed polynomial rate.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Exponential,
    Polynomial,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Check { config, report } => cmd_check(&config, report.as_deref()),
        Command::Simulate {
            config,
            out,
            dump_state,
            restart,
        } => cmd_simulate(&config, &out, dump_state.as_deref(), restart.as_deref()),
        Command::Sweep {
            config,
            out,
            threads,
        } => cmd_sweep(&config, &out, threads),
        Command::VerifyLemmas {
            samples,
            seed,
            length,
            volumes,
            report,
        } => cmd_verify_lemmas(
            SuiteConfig {
                samples,
                seed,
                length,
                volumes,
                ..SuiteConfig::default()
            },
            report.as_deref(),
        ),
        Command::Fit {
            csv,
            column,
            kind,
            window,
            p,
            out,
        } => cmd_fit(&csv, &column, kind, window, p, out.as_deref()),
    }
}

fn load_scenario(path: &Path) -> anyhow::Result<ScenarioConfig> {
    ScenarioConfig::from_path(path).with_context(|| format!("reading scenario {}", path.display()))
}

fn format_thresholds(label: &str, t: &ThresholdSet) -> String {
    let mut s = format!("{label} case:\n");
    if !t.applicable {
        s.push_str(&format!(
            "  not applicable: {}\n",
            t.reason.as_deref().unwrap_or("conditions undefined")
        ));
        return s;
    }
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    s.push_str(&format!("  h = {}  h_max = {}  [{}]\n", t.h, t.h_max, mark(t.h_ok)));
    s.push_str(&format!("  mu = {}  mu_min = {}  [{}]\n", t.mu, t.mu_min, mark(t.mu_ok)));
    for c in &t.intermediate {
        s.push_str(&format!("  {}: {} vs {} [{}]\n", c.name, c.value, c.bound, mark(c.passed)));
    }
    s.push_str(&format!(
        "  theorem conditions: {}\n",
        if t.satisfied { "satisfied" } else { "NOT satisfied" }
    ));
    s
}

/// Human-readable condition report.
pub fn format_conditions(cfg: &ScenarioConfig, r: &ConditionReport) -> String {
    let mut s = String::new();
    if ConditionReport::control_optional(&cfg.params) {
        s.push_str("no destabilizing tension; control optional\n");
    }
    s.push_str(&format!("lambda1 = {}\n", r.lambda1));
    s.push_str(&format!(
        "delta = {}{}\n",
        r.delta,
        if r.delta_off_theorem { " (override)" } else { "" }
    ));
    s.push_str(&format!("D0 = {}\nD1 = {}\nM0 = {}\n", r.d0, r.d1, r.m0));
    match r.eps {
        Some(e) => s.push_str(&format!("eps = {e}\n")),
        None => s.push_str("eps = undefined (b = 0)\n"),
    }
    if let Some(t) = &r.nonlinear {
        s.push_str(&format_thresholds("nonlinear", t));
    }
    if let Some(t) = &r.linear {
        s.push_str(&format_thresholds("linear", t));
    }
    if !r.derivation_variant_flags.is_empty() {
        s.push_str("derivation variants (informational):\n");
        for c in &r.derivation_variant_flags {
            s.push_str(&format!(
                "  {}: {} vs {} [{}]\n",
                c.name,
                c.value,
                c.bound,
                if c.passed { "pass" } else { "differs" }
            ));
        }
    }
    s
}

fn cmd_check(config: &Path, report: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_scenario(config)?;
    let r = check_conditions(&cfg.params, &cfg.control, cfg.delta_override);
    print!("{}", format_conditions(&cfg, &r));
    if let Some(path) = report {
        write_json(path, &r)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationReport<'a> {
    mode: Mode,
    steps_completed: usize,
    samples: usize,
    conditions: &'a ConditionReport,
    energy_balance: EnergyBalance,
    /// Largest increase of 𝓔 between consecutive samples, relative to 𝓔(0).
    max_energy_increase: f64,
    max_w_increase: f64,
    initial: Option<&'a EnergyReport>,
    last: Option<&'a EnergyReport>,
    failure: Option<&'a StepFailure>,
}

/// Largest sample-to-sample increase of `f`, relative to `|f(0)|` when nonzero.
pub fn max_increase(traj: &Trajectory, f: impl Fn(&EnergyReport) -> f64) -> f64 {
    let vals: Vec<f64> = traj.samples.iter().map(|s| f(&s.energy)).collect();
    let rise = vals
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    match vals.first() {
        Some(&v0) if v0 != 0.0 => rise / v0.abs(),
        _ => rise,
    }
}

#[derive(Debug, Serialize)]
pub struct DecayReport {
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounded_product: Option<BoundedProduct>,
}

/// Decay analysis of `‖u_t‖² + ‖u_xx‖²`: polynomial with the bounded-product
/// check in nonlinear-damping mode, exponential otherwise.
pub fn decay_report(traj: &Trajectory, window: (f64, f64)) -> DecayReport {
    let series = traj.norm_series();
    if series.iter().all(|&(_, y)| y == 0.0) {
        return DecayReport {
            skipped: true,
            reason: Some("zero energy".into()),
            fit: None,
            bounded_product: None,
        };
    }
    let (fit, bounded) = if traj.mode.is_nonlinear() {
        let b = bounded_product_check(&series, claimed_polynomial_rate(traj.p), window);
        (fit_polynomial(&series, window, traj.p), Some(b))
    } else {
        (fit_exponential(&series, window), None)
    };
    match fit {
        Ok(f) => DecayReport {
            skipped: false,
            reason: None,
            fit: Some(f),
            bounded_product: bounded,
        },
        Err(e) => DecayReport {
            skipped: true,
            reason: Some(e.to_string()),
            fit: None,
            bounded_product: bounded,
        },
    }
}

fn cmd_simulate(
    config: &Path,
    out: &Path,
    dump_state: Option<&Path>,
    restart: Option<&Path>,
) -> anyhow::Result<()> {
    let cfg = load_scenario(config)?;
    let restart_state = match restart {
        Some(path) => {
            if cfg.mode == Mode::Tracking {
                bail!("restart is not supported in tracking mode");
            }
            Some(State::load(path).with_context(|| format!("reading state dump {}", path.display()))?)
        }
        None => None,
    };
    let traj = simulate_from(&cfg, restart_state)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let csv = std::fs::File::create(out.join("timeseries.csv"))?;
    write_timeseries(&traj, std::io::BufWriter::new(csv))?;

    let report = SimulationReport {
        mode: cfg.mode,
        steps_completed: ((traj.final_state.t - traj.samples[0].energy.t) / cfg.dt).round() as usize,
        samples: traj.samples.len(),
        conditions: &traj.conditions,
        energy_balance: energy_balance_residual(&traj),
        max_energy_increase: max_increase(&traj, |e| e.script_e),
        max_w_increase: max_increase(&traj, |e| e.w),
        initial: traj.samples.first().map(|s| &s.energy),
        last: traj.samples.last().map(|s| &s.energy),
        failure: traj.failure.as_ref(),
    };
    write_json(out.join("energy_report.json"), &report)?;

    let t_start = traj.samples[0].energy.t;
    let (lo, hi) = cfg.default_window();
    let window = (t_start + lo, t_start + hi);
    let decay = decay_report(&traj, window);
    write_json(out.join("decay_fit.json"), &decay)?;

    let reference = if traj.mode.is_nonlinear() {
        Some(ReferenceSlope::Polynomial {
            rate: claimed_polynomial_rate(traj.p),
        })
    } else {
        decay
            .fit
            .as_ref()
            .map(|f| ReferenceSlope::Exponential { rate: f.rate })
    };
    let svg = plot_svg(
        &format!("{} mode: |u_t|^2 + |u_xx|^2", cfg.mode.as_str()),
        &traj.norm_series(),
        reference.map(|r| (r, window.0)),
    );
    std::fs::write(out.join("plot.svg"), svg)?;

    if let Some(path) = dump_state {
        traj.final_state.save(path)?;
    }

    if let Some(f) = &traj.failure {
        write_json(out.join("failure.json"), f)?;
        bail!("simulation failed at t = {}: {}", f.t, f.message);
    }
    let balance = report.energy_balance;
    println!(
        "{} samples written to {}; energy balance residual {:e}{}",
        traj.samples.len(),
        out.display(),
        balance.residual,
        if balance.absolute { " (absolute)" } else { "" }
    );
    match (&decay.fit, &decay.reason) {
        (Some(f), _) => println!(
            "fitted {:?} rate {:.6} (r^2 = {:.4}) over [{}, {}]",
            f.kind, f.rate, f.r_squared, f.window[0], f.window[1]
        ),
        (None, Some(reason)) => println!("decay fit skipped: {reason}"),
        _ => {}
    }
    Ok(())
}

fn thread_cap(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

fn cmd_sweep(config: &Path, out: &Path, threads: Option<usize>) -> anyhow::Result<()> {
    let spec = SweepSpec::from_path(config)
        .with_context(|| format!("reading sweep {}", config.display()))?;
    let result = run_sweep(&spec, thread_cap(threads)?)?;
    std::fs::create_dir_all(out)?;
    let file = std::fs::File::create(out.join("sweep.csv"))?;
    result.write_csv(std::io::BufWriter::new(file))?;
    write_json(out.join("sweep.json"), &result)?;
    let passed = result.rows.iter().filter(|r| r.theorem_satisfied).count();
    let stabilized = result.rows.iter().filter(|r| r.verdict.stabilized).count();
    println!(
        "{} points: {} satisfy the theorem, {} stabilized empirically",
        result.rows.len(),
        passed,
        stabilized
    );
    let unsound = result.unsound_rows();
    if !unsound.is_empty() {
        let idx: Vec<String> = unsound.iter().map(|r| r.index.to_string()).collect();
        bail!(
            "soundness violated: rows {} satisfy the theorem but did not stabilize",
            idx.join(", ")
        );
    }
    println!("soundness: ok");
    Ok(())
}

fn cmd_verify_lemmas(cfg: SuiteConfig, report: Option<&Path>) -> anyhow::Result<()> {
    if cfg.samples == 0 {
        bail!("--samples must be at least 1");
    }
    if cfg.volumes.contains(&0) {
        bail!("--volumes entries must be positive");
    }
    let r = run_suite(&cfg);
    for s in &r.summaries {
        let n = s.n_volumes.map(|n| format!(" N={n}")).unwrap_or_default();
        println!(
            "{:<17} {:<19}{:<6} samples={} violations={} worst_margin={:.3e} max_ratio={:.6}",
            s.check.as_str(),
            s.family.as_str(),
            n,
            s.samples,
            s.violations,
            s.worst_margin,
            s.max_ratio
        );
    }
    if let Some(path) = report {
        write_json(path, &r)?;
    }
    if !r.passed {
        bail!("{} inequality violations", r.total_violations);
    }
    println!("all inequalities hold (worst relative margin {:.3e})", r.worst_margin);
    Ok(())
}

fn cmd_fit(
    csv: &Path,
    column: &str,
    kind: FitKind,
    window: Option<Vec<f64>>,
    p: f64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let series = read_column(csv, column).with_context(|| format!("reading {}", csv.display()))?;
    let last = series.last().map(|s| s.0).ok_or_else(|| anyhow!("empty series"))?;
    let window = match window.as_deref() {
        Some([lo, hi]) => (*lo, *hi),
        _ => crate::diagnostics::default_window(last),
    };
    let fit = match kind {
        FitKind::Exponential => fit_exponential(&series, window)?,
        FitKind::Polynomial => fit_polynomial(&series, window, p)?,
    };
    let report = DecayReport {
        skipped: false,
        reason: None,
        bounded_product: (kind == FitKind::Polynomial)
            .then(|| bounded_product_check(&series, claimed_polynomial_rate(p), window)),
        fit: Some(fit),
    };
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if kind == FitKind::Polynomial {
        eprintln!(
            "claimed exponents: theorem {:.6}, derivation {:.6}",
            claimed_polynomial_rate(p),
            derivation_polynomial_rate(p)
        );
    }
    Ok(())
}
