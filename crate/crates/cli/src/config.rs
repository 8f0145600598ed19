//! Flat `key = value` configuration with `#` comments. Values layer in
//! precedence order: compiled defaults, then the config file, then
//! `PAROC_*` environment variables, then command line flags.

use paroc_core::hamiltonian::MinimizerConfig;
use paroc_core::msa::{MinimizerMode, SolverConfig};
use paroc_core::problem::{
    builtin_nonlinear, builtin_tracking, builtin_with_boundary_control, ProblemDefinition,
};
use paroc_core::{CoreError, Grid};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Distributed-control tracking problem; the default experiment.
    Reference,
    /// Tracking problem with an additional free Neumann boundary control.
    Boundary,
    /// Cubic reaction variant of the reference problem.
    Nonlinear,
}

impl ProblemKind {
    fn parse(value: &str) -> Result<ProblemKind, String> {
        match value {
            "reference" => Ok(ProblemKind::Reference),
            "boundary" => Ok(ProblemKind::Boundary),
            "nonlinear" => Ok(ProblemKind::Nonlinear),
            other => Err(format!(
                "unknown problem `{other}` (expected reference, boundary, or nonlinear)"
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Reference => "reference",
            ProblemKind::Boundary => "boundary",
            ProblemKind::Nonlinear => "nonlinear",
        }
    }
}

fn parse_mode(value: &str) -> Result<MinimizerMode, String> {
    match value {
        "auto" => Ok(MinimizerMode::Auto),
        "gradient_descent" => Ok(MinimizerMode::GradientDescent),
        other => Err(format!(
            "unknown minimizer_mode `{other}` (expected auto or gradient_descent)"
        )),
    }
}

fn mode_str(mode: MinimizerMode) -> &'static str {
    match mode {
        MinimizerMode::Auto => "auto",
        MinimizerMode::GradientDescent => "gradient_descent",
    }
}

/// Every recognized configuration key, in manifest order.
pub const KEYS: &[&str] = &[
    "problem",
    "nx",
    "ny",
    "nt",
    "t_final",
    "rho",
    "epsilon",
    "max_iters",
    "basic",
    "minimizer_mode",
    "initial_lr",
    "decay",
    "decay_every",
    "max_inner_iters",
    "grad_tol",
    "u0_const",
    "v0_const",
    "seed",
    "snapshot_every",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub problem: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Run the classical sweep (no proximity penalty) instead of the
    /// penalty-anchored one.
    pub basic: bool,
    pub minimizer_mode: MinimizerMode,
    pub initial_lr: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub max_inner_iters: usize,
    pub grad_tol: f64,
    pub u0_const: f64,
    pub v0_const: f64,
    pub seed: u64,
    /// Write state and control snapshots every this many iterations
    /// (0 disables snapshots).
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Config {
        let minimizer = MinimizerConfig::default();
        Config {
            problem: ProblemKind::Reference,
            nx: 100,
            ny: 100,
            nt: 25,
            t_final: 1.0,
            rho: 1.0,
            epsilon: 1e-4,
            max_iters: 10_000,
            basic: false,
            minimizer_mode: MinimizerMode::Auto,
            initial_lr: minimizer.initial_lr,
            decay: minimizer.decay,
            decay_every: minimizer.decay_every,
            max_inner_iters: minimizer.max_inner_iters,
            grad_tol: minimizer.grad_tol,
            u0_const: 0.01,
            v0_const: 0.0,
            seed: 0,
            snapshot_every: 0,
            output_dir: PathBuf::from("paroc-out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, kind: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("key `{key}` expects {kind}, got `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("key `{key}` expects true or false, got `{other}`")),
    }
}

impl Config {
    /// Sets one key from its string form; the single parser behind file,
    /// environment, and flag values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "problem" => self.problem = ProblemKind::parse(value)?,
            "nx" => self.nx = parse_num(key, value, "a positive integer")?,
            "ny" => self.ny = parse_num(key, value, "a positive integer")?,
            "nt" => self.nt = parse_num(key, value, "a positive integer")?,
            "t_final" => self.t_final = parse_num(key, value, "a number")?,
            "rho" => self.rho = parse_num(key, value, "a number")?,
            "epsilon" => self.epsilon = parse_num(key, value, "a number")?,
            "max_iters" => self.max_iters = parse_num(key, value, "a positive integer")?,
            "basic" => self.basic = parse_bool(key, value)?,
            "minimizer_mode" => self.minimizer_mode = parse_mode(value)?,
            "initial_lr" => self.initial_lr = parse_num(key, value, "a number")?,
            "decay" => self.decay = parse_num(key, value, "a number")?,
            "decay_every" => self.decay_every = parse_num(key, value, "a positive integer")?,
            "max_inner_iters" => {
                self.max_inner_iters = parse_num(key, value, "a positive integer")?
            }
            "grad_tol" => self.grad_tol = parse_num(key, value, "a number")?,
            "u0_const" => self.u0_const = parse_num(key, value, "a number")?,
            "v0_const" => self.v0_const = parse_num(key, value, "a number")?,
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "snapshot_every" => self.snapshot_every = parse_num(key, value, "an integer")?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(format!("unknown configuration key `{other}`")),
        }
        Ok(())
    }

    /// Applies a config file. Lines hold `key = value`; `#` starts a
    /// comment; blank lines are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!(
                    "{} line {}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                )
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("{} line {}: {e}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    /// Applies `PAROC_<KEY>` environment variables for every known key.
    pub fn apply_env(&mut self) -> Result<(), String> {
        for key in KEYS {
            let var = format!("PAROC_{}", key.to_uppercase());
            if let Ok(value) = std::env::var(&var) {
                self.set(key, value.trim())
                    .map_err(|e| format!("environment {var}: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.nx < 4 || self.ny < 4 {
            return Err(format!(
                "grid too coarse: nx and ny must be at least 4, got {}x{}",
                self.nx, self.ny
            ));
        }
        if self.nt < 2 {
            return Err(format!("need at least 2 time steps, got {}", self.nt));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(format!("rho must be nonnegative, got {}", self.rho));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be at least 1".into());
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(format!(
                "initial_lr must be positive, got {}",
                self.initial_lr
            ));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if self.decay_every == 0 || self.max_inner_iters == 0 {
            return Err("decay_every and max_inner_iters must be at least 1".into());
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return Err(format!(
                "grad_tol must be nonnegative, got {}",
                self.grad_tol
            ));
        }
        if !self.u0_const.is_finite() || !self.v0_const.is_finite() {
            return Err("initial control constants must be finite".into());
        }
        Ok(())
    }

    /// The manifest body: every key in fixed order, reloadable through
    /// [`Config::apply_file`]. Contains nothing run-dependent, so reruns
    /// from a manifest reproduce the original byte for byte.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# effective configuration; reload with --config");
        let _ = writeln!(out, "problem = {}", self.problem.as_str());
        let _ = writeln!(out, "nx = {}", self.nx);
        let _ = writeln!(out, "ny = {}", self.ny);
        let _ = writeln!(out, "nt = {}", self.nt);
        let _ = writeln!(out, "t_final = {}", self.t_final);
        let _ = writeln!(out, "rho = {}", self.rho);
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "max_iters = {}", self.max_iters);
        let _ = writeln!(out, "basic = {}", self.basic);
        let _ = writeln!(out, "minimizer_mode = {}", mode_str(self.minimizer_mode));
        let _ = writeln!(out, "initial_lr = {}", self.initial_lr);
        let _ = writeln!(out, "decay = {}", self.decay);
        let _ = writeln!(out, "decay_every = {}", self.decay_every);
        let _ = writeln!(out, "max_inner_iters = {}", self.max_inner_iters);
        let _ = writeln!(out, "grad_tol = {}", self.grad_tol);
        let _ = writeln!(out, "u0_const = {}", self.u0_const);
        let _ = writeln!(out, "v0_const = {}", self.v0_const);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        out
    }

    pub fn build_problem(&self) -> ProblemDefinition {
        match self.problem {
            ProblemKind::Reference => builtin_tracking(self.t_final),
            ProblemKind::Boundary => builtin_with_boundary_control(1.0, 1.0),
            ProblemKind::Nonlinear => builtin_nonlinear(),
        }
    }

    pub fn grid(&self) -> Result<Grid, CoreError> {
        Grid::new(self.nx, self.ny, self.nt, 1.0, 1.0, self.t_final)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            minimizer: MinimizerConfig {
                initial_lr: self.initial_lr,
                decay: self.decay,
                decay_every: self.decay_every,
                max_inner_iters: self.max_inner_iters,
                grad_tol: self.grad_tol,
            },
            minimizer_mode: self.minimizer_mode,
            stepper: Default::default(),
        }
    }
}
