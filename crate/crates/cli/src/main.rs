//! `paroc`: command line front end for the parabolic optimal control
//! solver. Three subcommands: `run` solves one instance and writes its
//! artifacts, `diagnose` runs one of the empirical check suites, and
//! `sweep` repeats the run across several penalty weights.
//!
//! Exit codes: 0 converged (or a diagnostic/sweep completed), 1 bad
//! configuration or usage, 2 iteration budget exhausted, 3 numerical
//! blow-up.

mod config;
mod csv;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::Config;
use paroc_core::diagnostics::{
    amplitude_stability_study, convergence_study, default_spatial_levels, default_temporal_levels,
    gradient_check, BoundKind, RefinementAxis,
};
use paroc_core::grid::{BoundaryField, Field};
use paroc_core::msa::{
    run_augmented_msa_observed, run_basic_msa_observed, IterationRecord, RunResult,
};
use paroc_core::{CoreError, Termination};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "paroc",
    version,
    about = "Optimal control of semilinear parabolic equations by successive approximations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write run artifacts
    Run(RunArgs),
    /// Run one of the empirical check suites
    Diagnose(DiagnoseArgs),
    /// Solve repeatedly across penalty weights and tabulate the outcomes
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Which checks to run
    #[arg(value_enum)]
    suite: Suite,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma separated penalty weights, e.g. --rhos 0,0.5,1,2
    #[arg(long, value_delimiter = ',', required = true)]
    rhos: Vec<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Copy, Clone, ValueEnum)]
enum Suite {
    /// Adjoint gradient against finite differences
    Gradient,
    /// State perturbation bound across amplitudes
    Stability,
    /// Cost-gap bound across amplitudes
    Costgap,
    /// Mesh refinement orders of the time stepper
    Convergence,
}

/// Command line values that override the config file and environment.
/// Every configuration key has a flag of the same name.
#[derive(Args)]
struct Overrides {
    /// Configuration file with `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Penalty weight anchoring each update at the previous iterate
    #[arg(long)]
    rho: Option<f64>,
    /// Stop once the cost moves by less than this between iterations
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Run the classical sweep (no proximity penalty)
    #[arg(long)]
    basic: bool,
    /// `auto` or `gradient_descent`
    #[arg(long)]
    minimizer_mode: Option<String>,
    #[arg(long)]
    initial_lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Constant initial distributed control
    #[arg(long)]
    u0_const: Option<f64>,
    /// Constant initial boundary control
    #[arg(long)]
    v0_const: Option<f64>,
    /// Seed for diagnostic direction sampling
    #[arg(long)]
    seed: Option<u64>,
    /// Write snapshots every N iterations (0 disables)
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure {
            message: message.into(),
            code: 1,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Failure {
        let code = match e {
            CoreError::StateBlowUp { .. }
            | CoreError::NonFinite { .. }
            | CoreError::LinearSolveFailed { .. } => 3,
            _ => 1,
        };
        Failure {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure {
            message: format!("io error: {e}"),
            code: 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => resolve(&args.overrides).and_then(|cfg| cmd_run(&cfg)),
        Command::Diagnose(args) => {
            resolve(&args.overrides).and_then(|cfg| cmd_diagnose(args.suite, &cfg))
        }
        Command::Sweep(args) => {
            resolve(&args.overrides).and_then(|cfg| cmd_sweep(&args.rhos, &cfg))
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Layers configuration sources: defaults, file, environment, flags.
fn resolve(o: &Overrides) -> Result<Config, Failure> {
    let mut cfg = Config::default();
    if let Some(path) = &o.config {
        cfg.apply_file(path).map_err(Failure::config)?;
    }
    cfg.apply_env().map_err(Failure::config)?;

    if let Some(v) = &o.problem {
        cfg.set("problem", v).map_err(Failure::config)?;
    }
    if let Some(v) = &o.minimizer_mode {
        cfg.set("minimizer_mode", v).map_err(Failure::config)?;
    }
    if let Some(v) = o.nx {
        cfg.nx = v;
    }
    if let Some(v) = o.ny {
        cfg.ny = v;
    }
    if let Some(v) = o.nt {
        cfg.nt = v;
    }
    if let Some(v) = o.t_final {
        cfg.t_final = v;
    }
    if let Some(v) = o.rho {
        cfg.rho = v;
    }
    if let Some(v) = o.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = o.max_iters {
        cfg.max_iters = v;
    }
    if o.basic {
        cfg.basic = true;
    }
    if let Some(v) = o.initial_lr {
        cfg.initial_lr = v;
    }
    if let Some(v) = o.decay {
        cfg.decay = v;
    }
    if let Some(v) = o.decay_every {
        cfg.decay_every = v;
    }
    if let Some(v) = o.max_inner_iters {
        cfg.max_inner_iters = v;
    }
    if let Some(v) = o.grad_tol {
        cfg.grad_tol = v;
    }
    if let Some(v) = o.u0_const {
        cfg.u0_const = v;
    }
    if let Some(v) = o.v0_const {
        cfg.v0_const = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.snapshot_every {
        cfg.snapshot_every = v;
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }

    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Epsilon => 0,
        Termination::MaxIters => 2,
        Termination::BlowUp => 3,
    }
}

/// Solves one instance into `dir` and writes the artifact set.
fn solve_into(cfg: &Config, rho: f64, basic: bool, dir: &Path) -> Result<RunResult, Failure> {
    std::fs::create_dir_all(dir)?;
    let problem = cfg.build_problem();
    let g = cfg.grid()?;
    let u0 = Field::constant(&g, cfg.u0_const);
    let v0 = BoundaryField::constant(&g, cfg.v0_const);
    let solver_cfg = cfg.solver_config();

    let mut snapshot_err: Option<std::io::Error> = None;
    let every = cfg.snapshot_every;
    let mut observer = |record: &IterationRecord,
                        state: &paroc_core::StateSolution,
                        u: &Field,
                        _v: &BoundaryField| {
        println!(
            "iter {:4}  J = {:.12e}  dJ = {:+.6e}  |du|^2 = {:.6e}",
            record.index, record.cost, record.delta_cost, record.du_norm_sq
        );
        if every > 0 && record.index.is_multiple_of(every) && snapshot_err.is_none() {
            let state_path = dir.join(format!("snapshot_state_{:04}.csv", record.index));
            let control_path = dir.join(format!("snapshot_control_{:04}.csv", record.index));
            if let Err(e) = csv::write_state_slice(&state_path, &state.y, g.nt(), &g)
                .and_then(|()| csv::write_space_time(&control_path, u, &g))
            {
                snapshot_err = Some(e);
            }
        }
    };

    let result = if basic {
        run_basic_msa_observed(&problem, &u0, &v0, &solver_cfg, &g, &mut observer)?
    } else {
        run_augmented_msa_observed(&problem, &u0, &v0, rho, &solver_cfg, &g, &mut observer)?
    };
    if let Some(e) = snapshot_err {
        return Err(e.into());
    }

    csv::write_history(&dir.join("history.csv"), &result.history)?;
    csv::write_state_slice(&dir.join("final_state.csv"), &result.state.y, g.nt(), &g)?;
    csv::write_space_time(&dir.join("final_control.csv"), &result.u, &g)?;
    csv::write_boundary(&dir.join("final_boundary_control.csv"), &result.v, &g)?;
    std::fs::write(dir.join("manifest.cfg"), cfg.manifest())?;
    Ok(result)
}

fn cmd_run(cfg: &Config) -> Result<u8, Failure> {
    let sweep_kind = if cfg.basic {
        "classical"
    } else {
        "penalty-anchored"
    };
    println!(
        "solving {} problem on a {}x{} grid with {} time steps ({} sweep, rho = {})",
        cfg.problem.as_str(),
        cfg.nx,
        cfg.ny,
        cfg.nt,
        sweep_kind,
        if cfg.basic { 0.0 } else { cfg.rho },
    );
    let result = solve_into(cfg, cfg.rho, cfg.basic, &cfg.output_dir)?;
    println!(
        "terminated by {} after {} iterations, final cost {:e}",
        result.terminated_by.as_str(),
        result.history.len(),
        result.final_cost()
    );
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(termination_code(result.terminated_by))
}

fn cmd_sweep(rhos: &[f64], cfg: &Config) -> Result<u8, Failure> {
    if rhos.is_empty() {
        return Err(Failure::config("sweep needs at least one rho"));
    }
    for &rho in rhos {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Failure::config(format!(
                "sweep rho values must be nonnegative, got {rho}"
            )));
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let dir = cfg.output_dir.join(format!("rho_{rho}"));
        println!("--- rho = {rho} ---");
        let mut member = cfg.clone();
        member.rho = rho;
        member.output_dir = dir.clone();
        let result = solve_into(&member, rho, false, &dir)?;
        let descent_steps = result
            .history
            .iter()
            .filter(|r| r.delta_cost <= 1e-10)
            .count();
        let fraction = if result.history.is_empty() {
            0.0
        } else {
            descent_steps as f64 / result.history.len() as f64
        };
        println!(
            "rho = {rho}: {} after {} iterations, final cost {:e}, descent fraction {fraction}",
            result.terminated_by.as_str(),
            result.history.len(),
            result.final_cost()
        );
        rows.push(csv::SweepRow {
            rho,
            terminated_by: result.terminated_by.as_str(),
            iterations: result.history.len(),
            final_j: result.final_cost(),
            fraction_of_descent_steps: fraction,
        });
    }
    csv::write_sweep(&cfg.output_dir.join("sweep.csv"), &rows)?;
    println!(
        "sweep table in {}",
        cfg.output_dir.join("sweep.csv").display()
    );
    Ok(0)
}

fn cmd_diagnose(suite: Suite, cfg: &Config) -> Result<u8, Failure> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let problem = cfg.build_problem();
    match suite {
        Suite::Gradient => {
            let g = cfg.grid()?;
            let u = Field::constant(&g, cfg.u0_const);
            let v = BoundaryField::constant(&g, cfg.v0_const);
            let report = gradient_check(&problem, &u, &v, &g, 5, cfg.seed)?;
            for (k, c) in report.directions.iter().enumerate() {
                println!(
                    "direction {}: adjoint {:+.12e}  fd {:+.12e}  rel error {:.3e}",
                    k + 1,
                    c.adjoint_side,
                    c.fd_side,
                    c.rel_error
                );
            }
            println!(
                "max rel error {:.3e} (seed {})",
                report.max_rel_error, report.seed
            );
            csv::write_gradient(&cfg.output_dir.join("gradient.csv"), &report)?;
        }
        Suite::Stability | Suite::Costgap => {
            let (kind, name) = match suite {
                Suite::Stability => (BoundKind::StateStability, "stability"),
                _ => (BoundKind::CostGap, "costgap"),
            };
            let g = cfg.grid()?;
            let study =
                amplitude_stability_study(&problem, &g, cfg.seed, 50, &[1e-1, 1e-2, 1e-3], kind)?;
            for row in &study.rows {
                println!(
                    "amplitude {:e}: max ratio {:.6e}, median {:.6e}",
                    row.amplitude, row.max_ratio, row.median_ratio
                );
            }
            println!(
                "constant spread across amplitudes: {:.4}",
                study.max_ratio_spread()
            );
            csv::write_amplitude(&cfg.output_dir.join(format!("{name}.csv")), &study)?;
        }
        Suite::Convergence => {
            let spatial = convergence_study(RefinementAxis::Spatial, &default_spatial_levels())?;
            let temporal = convergence_study(RefinementAxis::Temporal, &default_temporal_levels())?;
            for (label, report) in [("spatial", &spatial), ("temporal", &temporal)] {
                for level in &report.levels {
                    println!(
                        "{label}: {}x{} grid, {} steps, step {:.6e}, rel error {:.6e}",
                        level.nx, level.nx, level.nt, level.step, level.rel_error
                    );
                }
                println!("{label} observed orders: {:?}", report.observed_orders);
            }
            csv::write_convergence(&cfg.output_dir.join("convergence.csv"), &spatial, &temporal)?;
        }
    }
    println!("diagnostic artifacts in {}", cfg.output_dir.display());
    Ok(0)
}
