//! Successive-approximation sweeps for the control problem, with and
//! without the proximity penalty, plus the cost functional and the descent
//! certificate built from a run's history.
//!
//! One iteration: solve the adjoint for the current controls, minimize the
//! (augmented) pointwise Hamiltonian at every space-time node to get new
//! controls, re-solve the state, and record the cost movement. The penalty
//! `rho (anchor - u)^2` anchors each update at the previous iterate; with
//! `rho = 0` the sweep is the classical method, running through the very
//! same code path.
//!
//! Update rule details that matter for exactness: the minimization at time
//! level `m` reads the discrete multiplier of that level
//! ([`AdjointSolution::multiplier_level`], which at the final level is the
//! smoothed terminal multiplier, not the raw terminal slice), and controls
//! at level 0 are never updated because neither the dynamics nor the cost
//! quadrature reads them.

use crate::error::{CoreError, Result};
use crate::grid::{inner_product_omega_t, inner_product_sigma_t, BoundaryField, Field, Grid};
use crate::hamiltonian::{
    h_omega_aug, h_sigma_aug, minimize_pointwise, minimize_quadratic_closed_form,
    AugmentationParams, MinimizerConfig,
};
use crate::pde_solvers::{
    solve_adjoint_with, solve_state_with, uniform_bound_check, AdjointSolution, StateSolution,
    StepperConfig,
};
use crate::problem::ProblemDefinition;
use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// How the pointwise minimization is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinimizerMode {
    /// Closed form whenever the problem declares quadratic control
    /// structure, projected gradient descent otherwise.
    #[default]
    Auto,
    /// Always projected gradient descent with the configured schedule.
    GradientDescent,
}

/// Outer-loop settings of the sweep drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Terminate once `|J_{i} - J_{i-1}| < epsilon` (checked from the
    /// second iteration on, so the decision always compares two completed
    /// sweeps).
    pub epsilon: f64,
    pub max_iters: usize,
    pub minimizer: MinimizerConfig,
    pub minimizer_mode: MinimizerMode,
    pub stepper: StepperConfig,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            epsilon: 1e-4,
            max_iters: 10_000,
            minimizer: MinimizerConfig::default(),
            minimizer_mode: MinimizerMode::Auto,
            stepper: StepperConfig::default(),
        }
    }
}

/// One completed outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub index: usize,
    /// Cost after this iteration's control update.
    pub cost: f64,
    /// `cost - previous cost` (previous = initial guess for index 1).
    pub delta_cost: f64,
    /// Squared space-time norm of the distributed control increment.
    pub du_norm_sq: f64,
    /// Squared lateral-surface norm of the boundary control increment.
    pub dv_norm_sq: f64,
    /// Max-norm of the updated state trajectory.
    pub max_state: f64,
    /// Max-norm of the adjoint used for this iteration's update.
    pub max_adjoint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `|delta cost|` fell below epsilon.
    Epsilon,
    /// The iteration budget ran out.
    MaxIters,
    /// A control update sent the state past the blow-up threshold; the
    /// result holds the last completed iterate.
    BlowUp,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Epsilon => "epsilon",
            Termination::MaxIters => "max_iters",
            Termination::BlowUp => "blow_up",
        }
    }
}

/// Final iterate of a sweep run. State and adjoint are consistent with the
/// returned controls (the adjoint is recomputed for them after the loop).
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub u: Field,
    pub v: BoundaryField,
    pub state: StateSolution,
    pub adjoint: AdjointSolution,
    pub history: Vec<IterationRecord>,
    pub terminated_by: Termination,
}

impl RunResult {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.cost)
    }
}

/// Evaluates the discrete cost functional for a given trajectory. The time
/// integral uses the right-endpoint rectangle rule on every step, matching
/// the dynamics discretization (which never reads level-0 controls); the
/// spatial and boundary integrals use the grid's trapezoid weights.
pub fn eval_cost(
    problem: &ProblemDefinition,
    state: &StateSolution,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
) -> Result<f64> {
    state.y.check("state trajectory", g)?;
    state.boundary_trace.check("state boundary trace", g)?;
    u.check("distributed control", g)?;
    v.check("boundary control", g)?;
    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let stride = ny + 1;
    let dt = g.dt();
    let mut total = 0.0;
    for n in 1..=nt {
        let t = g.t(n);
        let ylev = state.y.level(n);
        let ulev = u.level(n);
        let mut level_sum = 0.0;
        for i in 0..=nx {
            let x = g.x(i);
            for j in 0..=ny {
                let idx = i * stride + j;
                level_sum +=
                    g.space_weight(i, j) * problem.running_cost(x, g.y(j), t, ylev[idx], ulev[idx]);
            }
        }
        let trl = state.boundary_trace.level(n);
        let vlev = v.level(n);
        for k in 0..g.n_boundary() {
            level_sum += g.boundary_weight(k)
                * problem.boundary_cost(g.boundary_arclength(k), t, trl[k], vlev[k]);
        }
        if !level_sum.is_finite() {
            return Err(CoreError::NonFinite {
                what: "cost integrand",
                time_level: Some(n),
            });
        }
        total += dt * level_sum;
    }
    let ylast = state.y.level(nt);
    let mut terminal = 0.0;
    for i in 0..=nx {
        let x = g.x(i);
        for j in 0..=ny {
            terminal +=
                g.space_weight(i, j) * problem.terminal_cost(x, g.y(j), ylast[i * stride + j]);
        }
    }
    if !terminal.is_finite() {
        return Err(CoreError::NonFinite {
            what: "terminal cost integrand",
            time_level: Some(nt),
        });
    }
    Ok(total + terminal)
}

/// The classical sweep: control updates minimize the raw Hamiltonians.
pub fn run_basic_msa(
    problem: &ProblemDefinition,
    u0: &Field,
    v0: &BoundaryField,
    cfg: &SolverConfig,
    g: &Grid,
) -> Result<RunResult> {
    drive(problem, u0, v0, 0.0, cfg, g, &mut |_, _, _, _| {})
}

/// The penalty-anchored sweep with weight `rho >= 0`; `rho = 0` reproduces
/// [`run_basic_msa`] exactly.
pub fn run_augmented_msa(
    problem: &ProblemDefinition,
    u0: &Field,
    v0: &BoundaryField,
    rho: f64,
    cfg: &SolverConfig,
    g: &Grid,
) -> Result<RunResult> {
    drive(problem, u0, v0, rho, cfg, g, &mut |_, _, _, _| {})
}

/// Observer signature: called after every completed iteration with the
/// fresh record, state, and controls.
pub type IterationObserver<'a> =
    &'a mut dyn FnMut(&IterationRecord, &StateSolution, &Field, &BoundaryField);

/// [`run_basic_msa`] with a per-iteration observer.
pub fn run_basic_msa_observed(
    problem: &ProblemDefinition,
    u0: &Field,
    v0: &BoundaryField,
    cfg: &SolverConfig,
    g: &Grid,
    observer: IterationObserver<'_>,
) -> Result<RunResult> {
    drive(problem, u0, v0, 0.0, cfg, g, observer)
}

/// [`run_augmented_msa`] with a per-iteration observer.
pub fn run_augmented_msa_observed(
    problem: &ProblemDefinition,
    u0: &Field,
    v0: &BoundaryField,
    rho: f64,
    cfg: &SolverConfig,
    g: &Grid,
    observer: IterationObserver<'_>,
) -> Result<RunResult> {
    drive(problem, u0, v0, rho, cfg, g, observer)
}

fn drive(
    problem: &ProblemDefinition,
    u0: &Field,
    v0: &BoundaryField,
    rho: f64,
    cfg: &SolverConfig,
    g: &Grid,
    observer: IterationObserver<'_>,
) -> Result<RunResult> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(CoreError::InvalidParameter {
            what: "penalty weight",
            detail: format!("rho must be finite and nonnegative, got {rho}"),
        });
    }
    if !(cfg.epsilon.is_finite() && cfg.epsilon > 0.0) {
        return Err(CoreError::InvalidParameter {
            what: "epsilon",
            detail: format!(
                "termination threshold must be positive, got {}",
                cfg.epsilon
            ),
        });
    }
    if cfg.max_iters == 0 {
        return Err(CoreError::InvalidParameter {
            what: "max_iters",
            detail: format!("need at least one iteration, got {}", cfg.max_iters),
        });
    }
    u0.check("initial distributed control", g)?;
    v0.check("initial boundary control", g)?;

    // initial controls projected into the admissible boxes
    let mut u = u0.clone();
    for val in u.values_mut() {
        *val = problem.u_box().project(*val);
    }
    let mut v = v0.clone();
    for val in v.values_mut() {
        *val = problem.v_box().project(*val);
    }

    let mut state = solve_state_with(problem, &u, &v, g, &cfg.stepper)?;
    let mut cost = eval_cost(problem, &state, &u, &v, g)?;

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut termination = None;

    for iter in 1..=cfg.max_iters {
        let adjoint = solve_adjoint_with(problem, &state, &u, &v, g, &cfg.stepper)?;
        let max_adjoint = uniform_bound_check(&adjoint);

        let (new_u, new_v) = updated_controls(problem, &state, &adjoint, &u, &v, rho, cfg, g)?;
        let du = new_u.minus(&u);
        let dv = new_v.minus(&v);
        let du_norm_sq = inner_product_omega_t(&du, &du, g)?;
        let dv_norm_sq = inner_product_sigma_t(&dv, &dv, g)?;

        let new_state = match solve_state_with(problem, &new_u, &new_v, g, &cfg.stepper) {
            Ok(s) => s,
            Err(CoreError::StateBlowUp { .. }) if iter >= 2 => {
                // keep the last completed iterate and record the outcome
                termination = Some(Termination::BlowUp);
                break;
            }
            Err(e) => return Err(e),
        };
        let new_cost = eval_cost(problem, &new_state, &new_u, &new_v, g)?;
        let delta = new_cost - cost;

        u = new_u;
        v = new_v;
        state = new_state;
        cost = new_cost;

        let record = IterationRecord {
            index: iter,
            cost,
            delta_cost: delta,
            du_norm_sq,
            dv_norm_sq,
            max_state: state.y.max_abs(),
            max_adjoint,
        };
        history.push(record.clone());
        observer(&record, &state, &u, &v);

        if iter >= 2 && delta.abs() < cfg.epsilon {
            termination = Some(Termination::Epsilon);
            break;
        }
    }

    let adjoint = solve_adjoint_with(problem, &state, &u, &v, g, &cfg.stepper)?;
    Ok(RunResult {
        u,
        v,
        state,
        adjoint,
        history,
        terminated_by: termination.unwrap_or(Termination::MaxIters),
    })
}

/// Audit band for "the update never worsens the augmented objective at its
/// own node". A violation means the declared problem structure and the
/// actual callbacks disagree, or the minimizer is broken; both are bugs
/// worth failing loudly on.
fn audit_descent(new_val: f64, anchor_val: f64, what: &'static str, level: usize) -> Result<()> {
    if new_val <= anchor_val + 1e-9 * (1.0 + anchor_val.abs()) {
        Ok(())
    } else {
        Err(CoreError::MinimizerFailed {
            detail: format!(
                "{what} update at time level {level} raised its augmented objective \
                 from {anchor_val} to {new_val}; declared problem structure is inconsistent"
            ),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn updated_controls(
    problem: &ProblemDefinition,
    state: &StateSolution,
    adjoint: &AdjointSolution,
    u: &Field,
    v: &BoundaryField,
    rho: f64,
    cfg: &SolverConfig,
    g: &Grid,
) -> Result<(Field, BoundaryField)> {
    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let stride = ny + 1;
    let quad = problem.quadratic_control();
    let closed_form = cfg.minimizer_mode == MinimizerMode::Auto && quad.is_some();
    let update_u = !problem.u_box().is_singleton();
    let update_v = !problem.v_box().is_singleton();

    let mut new_u = u.clone();
    let mut new_v = v.clone();
    if !(update_u || update_v) {
        return Ok((new_u, new_v));
    }

    let xs: Vec<f64> = (0..=nx).map(|i| g.x(i)).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| g.y(j)).collect();
    let arcs: Vec<f64> = (0..g.n_boundary())
        .map(|k| g.boundary_arclength(k))
        .collect();
    let bnodes: Vec<usize> = (0..g.n_boundary())
        .map(|k| {
            let (i, j) = g.boundary_node(k);
            i * stride + j
        })
        .collect();

    for m in 1..=nt {
        let t = g.t(m);
        let lam = adjoint.multiplier_level(g, m);
        let ylev = state.y.level(m);

        if update_u {
            for i in 0..=nx {
                for j in 0..=ny {
                    let idx = i * stride + j;
                    let anchor = u.level(m)[idx];
                    let p = lam[idx];
                    let aug = AugmentationParams { rho, anchor };
                    let next = if closed_form {
                        minimize_quadratic_closed_form(
                            quad.expect("checked").alpha,
                            p,
                            &aug,
                            problem.u_box(),
                        )?
                    } else {
                        let (x, yc, yval) = (xs[i], ys[j], ylev[idx]);
                        minimize_pointwise(
                            |cand| h_omega_aug(problem, x, yc, t, yval, cand, p, &aug),
                            problem.u_box(),
                            anchor,
                            &cfg.minimizer,
                        )?
                    };
                    audit_descent(
                        h_omega_aug(problem, xs[i], ys[j], t, ylev[idx], next, p, &aug),
                        h_omega_aug(problem, xs[i], ys[j], t, ylev[idx], anchor, p, &aug),
                        "distributed control",
                        m,
                    )?;
                    new_u.level_mut(m)[idx] = next;
                }
            }
        }

        if update_v {
            let trl = state.boundary_trace.level(m);
            for k in 0..g.n_boundary() {
                let anchor = v.level(m)[k];
                let p = lam[bnodes[k]];
                let aug = AugmentationParams { rho, anchor };
                let next = if closed_form {
                    // boundary Hamiltonian carries -p v, hence the sign flip
                    minimize_quadratic_closed_form(
                        quad.expect("checked").beta,
                        -p,
                        &aug,
                        problem.v_box(),
                    )?
                } else {
                    let (s, yval) = (arcs[k], trl[k]);
                    minimize_pointwise(
                        |cand| h_sigma_aug(problem, s, t, yval, cand, p, &aug),
                        problem.v_box(),
                        anchor,
                        &cfg.minimizer,
                    )?
                };
                audit_descent(
                    h_sigma_aug(problem, arcs[k], t, trl[k], next, p, &aug),
                    h_sigma_aug(problem, arcs[k], t, trl[k], anchor, p, &aug),
                    "boundary control",
                    m,
                )?;
                new_v.level_mut(m)[k] = next;
            }
        }
    }
    Ok((new_u, new_v))
}

/// Smallest penalty-shifted slope consistent with a history: the maximum of
/// `delta_cost / increment + rho` over iterations with positive increments.
/// `None` when no iteration moved the controls.
pub fn fit_c_tilde(history: &[IterationRecord], rho: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for r in history {
        let inc = r.du_norm_sq + r.dv_norm_sq;
        if inc > 0.0 {
            let ratio = r.delta_cost / inc + rho;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
    }
    best
}

/// Per-iteration audit row of [`descent_certificate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub index: usize,
    pub delta_cost: f64,
    /// `du_norm_sq + dv_norm_sq`.
    pub increment_sq: f64,
    /// `delta_cost - (c_tilde - rho) * increment_sq`; the inequality holds
    /// when this is nonpositive (up to roundoff).
    pub slack: f64,
    pub satisfied: bool,
}

/// Flattening check over the last quarter of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub tail_sum: f64,
    pub total: f64,
    pub fraction: f64,
    pub threshold: f64,
    pub ok: bool,
}

/// Telescoped upper bound on the summed squared increments implied by the
/// fitted slope, available once `c_tilde < rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBound {
    pub bound: f64,
    pub total: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentCertificate {
    pub rho: f64,
    pub c_tilde: f64,
    pub rows: Vec<CertificateRow>,
    pub all_satisfied: bool,
    /// `None` for histories too short to have a meaningful quarter.
    pub tail: Option<TailReport>,
    pub increment_bound: Option<IncrementBound>,
}

/// Audits a run history against the per-iteration descent inequality
/// `delta_cost <= (c_tilde - rho) * (du_norm_sq + dv_norm_sq)` and reports
/// whether the squared increments flatten: the last-quarter share of their
/// sum must stay below `tail_threshold`.
pub fn descent_certificate(
    history: &[IterationRecord],
    rho: f64,
    c_tilde: f64,
    tail_threshold: f64,
) -> DescentCertificate {
    let slope = c_tilde - rho;
    let mut rows = Vec::with_capacity(history.len());
    let mut total = 0.0;
    for r in history {
        let inc = r.du_norm_sq + r.dv_norm_sq;
        total += inc;
        let slack = r.delta_cost - slope * inc;
        let tol = 1e-12 * (1.0 + r.delta_cost.abs() + inc.abs());
        rows.push(CertificateRow {
            index: r.index,
            delta_cost: r.delta_cost,
            increment_sq: inc,
            slack,
            satisfied: slack <= tol,
        });
    }
    let all_satisfied = rows.iter().all(|r| r.satisfied);

    let tail = if history.len() >= 4 {
        let count = (history.len() / 4).max(1);
        let tail_sum: f64 = rows[rows.len() - count..]
            .iter()
            .map(|r| r.increment_sq)
            .sum();
        let fraction = if total > 0.0 { tail_sum / total } else { 0.0 };
        Some(TailReport {
            tail_sum,
            total,
            fraction,
            threshold: tail_threshold,
            ok: fraction < tail_threshold,
        })
    } else {
        None
    };

    let increment_bound = if c_tilde < rho && !history.is_empty() {
        let first = &history[0];
        let initial_cost = first.cost - first.delta_cost;
        let min_cost = history.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
        let bound = (initial_cost - min_cost) / (rho - c_tilde);
        Some(IncrementBound {
            bound,
            total,
            within: total <= bound * 1.1 + 1e-30,
        })
    } else {
        None
    };

    DescentCertificate {
        rho,
        c_tilde,
        rows,
        all_satisfied,
        tail,
        increment_bound,
    }
}
