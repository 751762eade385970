//! Command-line driver: reads a TOML problem description and runs one of the
//! library workflows — a single state/adjoint solve, the projected-gradient
//! optimizer, optimality checks for a stored control, the numerical
//! self-check suite, or a sweep over regularization weights.
//!
//! All numeric output goes through the library's fixed-precision formatting,
//! so re-running a subcommand with the same config and seed reproduces every
//! file byte for byte. Exit codes: 1 for configuration problems, 2 for
//! solver failures, 3 for a failed verification run.

mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use config::RawConfig;
use nonlocal_control::io::{
    control_csv, fmt_float, history_csv, read_control_csv, to_json_string, trajectory_csv,
};
use nonlocal_control::objective::CostBreakdown;
use nonlocal_control::state::{solve_state, Control, ProblemSpec};
use nonlocal_control::{
    critical_cone_sample, diagnostics, kkt_residual, objective, projected_gradient,
    run_verification, solve_adjoint, ssc_check, OptimizeOptions, SolveError,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nlc",
    version,
    about = "Optimal control of a reaction-diffusion equation with a mass-dependent reaction"
)]
struct Cli {
    /// TOML problem description.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for emitted files (created if absent).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state and adjoint equations once; write both trajectories as CSV.
    Solve {
        /// Control table (CSV as written by `optimize`); zero control when omitted.
        #[arg(long, value_name = "FILE")]
        control: Option<PathBuf>,
    },
    /// Projected gradient descent from the zero control; write report, control, history.
    Optimize,
    /// First- and second-order optimality measures for a stored control.
    Check {
        /// Control table (CSV as written by `optimize`).
        #[arg(long, value_name = "FILE")]
        control: PathBuf,
        /// Number of random probes of the first-order variational inequality.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Number of sampled critical-cone directions for the curvature figure.
        #[arg(long, default_value_t = 20)]
        directions: usize,
    },
    /// Run the numerical self-checks against independent oracles.
    Verify,
    /// Re-optimize for each value in a list of regularization weights.
    Sweep {
        /// Comma-separated weights, e.g. `0.01,0.1,1`.
        #[arg(long, value_name = "LIST")]
        mu_grid: String,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Verification { failed: usize, total: usize },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Verification { .. } => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "{msg}"),
            Failure::Solver(msg) => write!(f, "solver failure: {msg}"),
            Failure::Verification { failed, total } => {
                write!(f, "{failed} of {total} verification checks failed")
            }
        }
    }
}

fn solver(e: SolveError) -> Failure {
    Failure::Solver(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(cli);
    for warning in diagnostics::drain() {
        eprintln!("warning: {warning}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_path = cli
        .config
        .ok_or_else(|| Failure::Config("missing required option `--config <FILE>`".into()))?;
    let raw = RawConfig::load(&config_path).map_err(Failure::Config)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| {
        Failure::Config(format!("cannot create {}: {e}", cli.out.display()))
    })?;

    // `sweep` supplies its own regularization weights, so it resolves the
    // config per weight instead of once up front.
    if let Command::Sweep { mu_grid } = &cli.command {
        return cmd_sweep(&raw, mu_grid, &cli.out);
    }

    let (p, opts) = raw.build().map_err(Failure::Config)?;
    match cli.command {
        Command::Solve { control } => cmd_solve(&p, control.as_deref(), &cli.out),
        Command::Optimize => cmd_optimize(&p, &opts, &cli.out),
        Command::Check {
            control,
            samples,
            directions,
        } => cmd_check(&p, &opts, &control, samples, directions, &cli.out),
        Command::Verify => cmd_verify(&p, &cli.out),
        Command::Sweep { .. } => unreachable!("handled above"),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn read_control_file(p: &ProblemSpec, path: &Path) -> Result<Control, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    read_control_csv(p, &text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn cmd_solve(p: &ProblemSpec, control: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let u = match control {
        Some(path) => read_control_file(p, path)?,
        None => Control::zeros(p),
    };
    let y = solve_state(p, &u).map_err(solver)?;
    let q = solve_adjoint(p, &y).map_err(solver)?;
    write_file(out, "state.csv", &trajectory_csv(p.grid(), &y))?;
    write_file(out, "adjoint.csv", &trajectory_csv(p.grid(), &q))?;
    let cost = objective::cost_of_state(p, &y, &u);
    println!(
        "solved {} time steps on {} nodes: state sup {:.6e}, adjoint sup {:.6e}, cost {:.6e}",
        p.nt(),
        p.grid().n(),
        y.max_abs(),
        q.max_abs(),
        cost.total
    );
    Ok(())
}

fn cmd_optimize(p: &ProblemSpec, opts: &OptimizeOptions, out: &Path) -> Result<(), Failure> {
    let (u, report) = projected_gradient(p, &Control::zeros(p), opts).map_err(solver)?;
    write_file(out, "report.json", &to_json_string(&report))?;
    write_file(out, "control.csv", &control_csv(p.grid(), &u))?;
    write_file(out, "history.csv", &history_csv(&report))?;
    let residual = report.residual_history.last().copied().unwrap_or(f64::NAN);
    if report.converged {
        println!(
            "converged in {} iterations: cost {:.6e}, residual {:.3e}",
            report.iterations, report.final_cost.total, residual
        );
    } else {
        println!(
            "stopped after {} iterations without reaching tol {:.1e}: cost {:.6e}, residual {:.3e}",
            report.iterations, opts.tol, report.final_cost.total, residual
        );
        eprintln!("warning: optimizer did not reach its tolerance; see report.json");
    }
    Ok(())
}

/// What `check` writes: the cost split plus the first-order measures from
/// [`kkt_residual`] and the sampled cone curvature. `min_curvature` is absent
/// when the critical cone at the control has no sampleable directions.
#[derive(Serialize)]
struct CheckReport {
    cost: CostBreakdown,
    stationarity: f64,
    vi_min: f64,
    vi_samples: usize,
    cone_directions: usize,
    min_curvature: Option<f64>,
}

fn cmd_check(
    p: &ProblemSpec,
    opts: &OptimizeOptions,
    control: &Path,
    samples: usize,
    directions: usize,
    out: &Path,
) -> Result<(), Failure> {
    let u = read_control_file(p, control)?;
    let ge = objective::gradient(p, &u).map_err(solver)?;
    let kkt = kkt_residual(p, &u, samples, opts.seed).map_err(solver)?;
    let cone = critical_cone_sample(p, &u, &ge.adjoint, directions, opts.seed);
    let min_curvature = if cone.is_empty() {
        None
    } else {
        Some(ssc_check(p, &u, &cone).map_err(solver)?)
    };
    let report = CheckReport {
        cost: ge.cost,
        stationarity: kkt.stationarity,
        vi_min: kkt.vi_min,
        vi_samples: kkt.vi_samples,
        cone_directions: cone.len(),
        min_curvature,
    };
    write_file(out, "check.json", &to_json_string(&report))?;
    println!("cost {:.6e}", report.cost.total);
    println!("stationarity {:.3e}", report.stationarity);
    println!(
        "variational inequality min {:.3e} over {} samples",
        report.vi_min, report.vi_samples
    );
    match report.min_curvature {
        Some(c) => println!(
            "min curvature {:.3e} over {} cone directions",
            c, report.cone_directions
        ),
        None => println!("critical cone empty at this control; no curvature figure"),
    }
    Ok(())
}

fn cmd_verify(p: &ProblemSpec, out: &Path) -> Result<(), Failure> {
    let report = run_verification(p).map_err(solver)?;
    for check in &report.checks {
        let tag = if check.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", check.name, check.detail);
    }
    write_file(out, "verification.json", &to_json_string(&report))?;
    if report.passed {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Verification {
            failed,
            total: report.checks.len(),
        })
    }
}

fn parse_mu_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let mut values = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        let mu: f64 = piece.parse().map_err(|_| {
            Failure::Config(format!("bad value {piece:?} in --mu-grid"))
        })?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Failure::Config(format!(
                "--mu-grid values must be positive, got {piece}"
            )));
        }
        values.push(mu);
    }
    if values.is_empty() {
        return Err(Failure::Config("--mu-grid is empty".into()));
    }
    Ok(values)
}

fn cmd_sweep(raw: &RawConfig, mu_grid: &str, out: &Path) -> Result<(), Failure> {
    let mus = parse_mu_grid(mu_grid)?;
    let mut summary = String::from("mu,tracking,regularization,kkt_residual\n");
    for (i, &mu) in mus.iter().enumerate() {
        let (p, opts) = raw.build_with_mu(mu).map_err(Failure::Config)?;
        let (u, report) = projected_gradient(&p, &Control::zeros(&p), &opts).map_err(solver)?;
        let kkt = kkt_residual(&p, &u, 20, opts.seed).map_err(solver)?;
        write_file(out, &format!("mu_{i:02}.json"), &to_json_string(&report))?;
        write_file(out, &format!("mu_{i:02}_control.csv"), &control_csv(p.grid(), &u))?;
        summary.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(mu),
            fmt_float(report.final_cost.tracking),
            fmt_float(report.final_cost.regularization),
            fmt_float(kkt.stationarity)
        ));
        println!(
            "mu {:.3e}: {} in {} iterations, tracking {:.6e}, stationarity {:.3e}",
            mu,
            if report.converged { "converged" } else { "stopped" },
            report.iterations,
            report.final_cost.tracking,
            kkt.stationarity
        );
        if !report.converged {
            eprintln!(
                "warning: run {i} (mu {mu:.3e}) did not reach its tolerance; see mu_{i:02}.json"
            );
        }
    }
    write_file(out, "summary.csv", &summary)?;
    println!("wrote summary.csv with {} rows", mus.len());
    Ok(())
}
