//! Empirical checks of the properties the solver relies on: adjoint-based
//! gradients against finite differences, the stability and cost-gap
//! perturbation bounds with their constants, and mesh-refinement
//! convergence orders of the underlying time stepper.
//!
//! All checks run the steppers at a tighter linear-solve tolerance than the
//! sweep drivers use, so quadrature and roundoff, not CG, dominate the
//! reported residuals.

use crate::error::{CoreError, Result};
use crate::grid::{inner_product_omega_t, inner_product_sigma_t, BoundaryField, Field, Grid};
use crate::hamiltonian::{h_omega, h_sigma};
use crate::msa::eval_cost;
use crate::pde_solvers::{
    solve_adjoint_with, solve_state_with, uniform_bound_check, AdjointSolution, StateSolution,
    StepperConfig,
};
use crate::problem::{ProblemBuilder, ProblemDefinition};
use crate::stencil::EllipticStencil;
use alloc::format;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

fn tight_stepper() -> StepperConfig {
    StepperConfig {
        cg_rel_tol: 1e-12,
        cg_max_iters: 20_000,
        ..StepperConfig::default()
    }
}

/// Reproducible generator of smooth space-time perturbation directions.
///
/// Directions are random low-frequency cosine/sine combinations, exactly
/// zero at the first and last time level, and normalized to unit space-time
/// norm. Zeroing the endpoints keeps the trapezoid-in-time inner product
/// identical to the rectangle rule the cost uses, so the adjoint side of a
/// gradient check carries no quadrature mismatch.
pub struct DirectionSampler {
    rng: ChaCha8Rng,
}

impl DirectionSampler {
    pub fn new(seed: u64) -> DirectionSampler {
        DirectionSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn coefficient(&mut self) -> f64 {
        let magnitude = self.rng.random_range(0.5..1.0);
        if self.rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Random unit-norm distributed direction with zeroed time endpoints.
    pub fn field_direction(&mut self, g: &Grid) -> Field {
        let pi = core::f64::consts::PI;
        let (lx, ly, t_final) = (g.lx(), g.ly(), g.t_final());
        let mut field = Field::zeros(g);
        for k in 0..3_usize {
            for l in 0..3_usize {
                for m in 1..=2_usize {
                    let c = self.coefficient();
                    for n in 0..g.n_levels() {
                        let tw = (m as f64 * pi * g.t(n) / t_final).sin();
                        if tw == 0.0 {
                            continue;
                        }
                        let level = field.level_mut(n);
                        for i in 0..=g.nx() {
                            let xw = (k as f64 * pi * g.x(i) / lx).cos();
                            for j in 0..=g.ny() {
                                let yw = (l as f64 * pi * g.y(j) / ly).cos();
                                level[i * (g.ny() + 1) + j] += c * xw * yw * tw;
                            }
                        }
                    }
                }
            }
        }
        zero_field_endpoints(&mut field, g);
        let norm_sq = inner_product_omega_t(&field, &field, g)
            .expect("freshly built direction matches the grid");
        assert!(norm_sq > 0.0, "direction degenerated to zero");
        let scale = 1.0 / norm_sq.sqrt();
        for val in field.values_mut() {
            *val *= scale;
        }
        field
    }

    /// Random unit-norm boundary direction, periodic in arclength, with
    /// zeroed time endpoints.
    pub fn boundary_direction(&mut self, g: &Grid) -> BoundaryField {
        let pi = core::f64::consts::PI;
        let perimeter = 2.0 * (g.lx() + g.ly());
        let t_final = g.t_final();
        let mut field = BoundaryField::zeros(g);
        for k in 0..3_usize {
            for m in 1..=2_usize {
                let c = self.coefficient();
                for n in 0..g.n_levels() {
                    let tw = (m as f64 * pi * g.t(n) / t_final).sin();
                    if tw == 0.0 {
                        continue;
                    }
                    let level = field.level_mut(n);
                    for (slot, val) in level.iter_mut().enumerate() {
                        let sw =
                            (2.0 * pi * k as f64 * g.boundary_arclength(slot) / perimeter).cos();
                        *val += c * sw * tw;
                    }
                }
            }
        }
        zero_boundary_endpoints(&mut field, g);
        let norm_sq = inner_product_sigma_t(&field, &field, g)
            .expect("freshly built direction matches the grid");
        assert!(norm_sq > 0.0, "direction degenerated to zero");
        let scale = 1.0 / norm_sq.sqrt();
        for val in field.values_mut() {
            *val *= scale;
        }
        field
    }
}

fn zero_field_endpoints(field: &mut Field, g: &Grid) {
    let nt = g.nt();
    for val in field.level_mut(0) {
        *val = 0.0;
    }
    for val in field.level_mut(nt) {
        *val = 0.0;
    }
}

fn zero_boundary_endpoints(field: &mut BoundaryField, g: &Grid) {
    let nt = g.nt();
    for val in field.level_mut(0) {
        *val = 0.0;
    }
    for val in field.level_mut(nt) {
        *val = 0.0;
    }
}

fn add_scaled_field(base: &Field, dir: &Field, scale: f64) -> Field {
    let mut out = base.clone();
    for (o, d) in out.values_mut().iter_mut().zip(dir.values()) {
        *o += scale * d;
    }
    out
}

fn add_scaled_boundary(base: &BoundaryField, dir: &BoundaryField, scale: f64) -> BoundaryField {
    let mut out = base.clone();
    for (o, d) in out.values_mut().iter_mut().zip(dir.values()) {
        *o += scale * d;
    }
    out
}

/// One sampled direction of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCheck {
    /// Directional derivative predicted by the adjoint representation.
    pub adjoint_side: f64,
    /// Central finite difference of the cost along the same direction.
    pub fd_side: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub directions: Vec<DirectionCheck>,
    pub max_rel_error: f64,
    pub seed: u64,
    pub fd_step: f64,
}

/// Compares the adjoint-side directional derivative of the cost with a
/// central finite difference along seeded random directions, at the default
/// probe step `1e-3`.
pub fn gradient_check(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
    n_directions: usize,
    seed: u64,
) -> Result<GradientCheckReport> {
    gradient_check_with_step(problem, u, v, g, n_directions, seed, 1e-3)
}

/// [`gradient_check`] with an explicit finite-difference step.
pub fn gradient_check_with_step(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
    n_directions: usize,
    seed: u64,
    fd_step: f64,
) -> Result<GradientCheckReport> {
    if n_directions == 0 {
        return Err(CoreError::InvalidParameter {
            what: "n_directions",
            detail: format!("need at least one direction, got {n_directions}"),
        });
    }
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(CoreError::InvalidParameter {
            what: "fd_step",
            detail: format!("probe step must be positive, got {fd_step}"),
        });
    }
    let stepper = tight_stepper();
    let state = solve_state_with(problem, u, v, g, &stepper)?;
    let adjoint = solve_adjoint_with(problem, &state, u, v, g, &stepper)?;
    let (gu, gv) = gradient_densities(problem, &state, &adjoint, u, v, g)?;

    let mut sampler = DirectionSampler::new(seed);
    let mut directions = Vec::with_capacity(n_directions);
    let mut max_rel_error = 0.0_f64;
    for _ in 0..n_directions {
        let du = sampler.field_direction(g);
        let dv = sampler.boundary_direction(g);
        let adjoint_side =
            inner_product_omega_t(&gu, &du, g)? + inner_product_sigma_t(&gv, &dv, g)?;

        let j_plus = eval_cost(
            problem,
            &solve_state_with(
                problem,
                &add_scaled_field(u, &du, fd_step),
                &add_scaled_boundary(v, &dv, fd_step),
                g,
                &stepper,
            )?,
            &add_scaled_field(u, &du, fd_step),
            &add_scaled_boundary(v, &dv, fd_step),
            g,
        )?;
        let j_minus = eval_cost(
            problem,
            &solve_state_with(
                problem,
                &add_scaled_field(u, &du, -fd_step),
                &add_scaled_boundary(v, &dv, -fd_step),
                g,
                &stepper,
            )?,
            &add_scaled_field(u, &du, -fd_step),
            &add_scaled_boundary(v, &dv, -fd_step),
            g,
        )?;
        let fd_side = (j_plus - j_minus) / (2.0 * fd_step);
        let denom = adjoint_side.abs().max(fd_side.abs()).max(1e-14);
        let rel_error = (adjoint_side - fd_side).abs() / denom;
        max_rel_error = max_rel_error.max(rel_error);
        directions.push(DirectionCheck {
            adjoint_side,
            fd_side,
            rel_error,
        });
    }
    Ok(GradientCheckReport {
        directions,
        max_rel_error,
        seed,
        fd_step,
    })
}

/// Pointwise densities of the discrete cost gradient. The dynamics step
/// from level `m-1` to `m` reads the control of level `m` together with the
/// state and time of level `m-1`, so the adjoint term pairs the level-`m`
/// multiplier with `f_u` evaluated at the earlier level.
fn gradient_densities(
    problem: &ProblemDefinition,
    state: &StateSolution,
    adjoint: &AdjointSolution,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
) -> Result<(Field, BoundaryField)> {
    let stencil = EllipticStencil::build(problem.diffusion(), g)?;
    let inject = stencil.injection_weights();
    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let stride = ny + 1;
    let mut gu = Field::zeros(g);
    let mut gv = BoundaryField::zeros(g);
    for m in 1..=nt {
        let (t, t_prev) = (g.t(m), g.t(m - 1));
        let lam = adjoint.multiplier_level(g, m);
        let ylev = state.y.level(m);
        let yprev = state.y.level(m - 1);
        let ulev = u.level(m);
        let glevel = gu.level_mut(m);
        for i in 0..=nx {
            let x = g.x(i);
            for j in 0..=ny {
                let idx = i * stride + j;
                let yc = g.y(j);
                glevel[idx] = problem.running_cost_u(x, yc, t, ylev[idx], ulev[idx])
                    - lam[idx] * problem.f_u(x, yc, t_prev, yprev[idx], ulev[idx]);
            }
        }
        let trl = state.boundary_trace.level(m);
        let vlev = v.level(m);
        let gblevel = gv.level_mut(m);
        for k in 0..g.n_boundary() {
            let (i, j) = g.boundary_node(k);
            let node = i * stride + j;
            gblevel[k] = problem.boundary_cost_v(g.boundary_arclength(k), t, trl[k], vlev[k])
                - (inject[k] / g.boundary_weight(k)) * lam[node];
        }
    }
    Ok((gu, gv))
}

/// Outcome of a perturbation-bound check: the bound holds with constant
/// `C` whenever `lhs <= C * rhs`; `ratio` is the smallest such `C` for
/// this sample (zero when the right side vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn ratio_of(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else {
        0.0
    }
}

/// Checks the state-stability bound: the worst-over-time squared spatial
/// distance between the perturbed and base trajectories against the
/// squared data distance (boundary control difference plus the dynamics
/// mismatch along the base trajectory).
pub fn check_state_stability(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    u_pert: &Field,
    v_pert: &BoundaryField,
    g: &Grid,
) -> Result<BoundCheck> {
    let stepper = tight_stepper();
    let base = solve_state_with(problem, u, v, g, &stepper)?;
    state_stability_with_base(problem, &base, u, v, u_pert, v_pert, g, &stepper)
}

#[allow(clippy::too_many_arguments)]
fn state_stability_with_base(
    problem: &ProblemDefinition,
    base: &StateSolution,
    u: &Field,
    v: &BoundaryField,
    u_pert: &Field,
    v_pert: &BoundaryField,
    g: &Grid,
    stepper: &StepperConfig,
) -> Result<BoundCheck> {
    let perturbed = solve_state_with(problem, u_pert, v_pert, g, stepper)?;
    let (nx, ny) = (g.nx(), g.ny());
    let stride = ny + 1;

    let mut lhs = 0.0_f64;
    for n in 0..g.n_levels() {
        let (a, b) = (perturbed.y.level(n), base.y.level(n));
        let mut level = 0.0;
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = i * stride + j;
                let d = a[idx] - b[idx];
                level += g.space_weight(i, j) * d * d;
            }
        }
        lhs = lhs.max(level);
    }

    let dv = v_pert.minus(v);
    let mut rhs = inner_product_sigma_t(&dv, &dv, g)?;
    let mut mismatch = Field::zeros(g);
    for n in 0..g.n_levels() {
        let t = g.t(n);
        let ylev = base.y.level(n);
        let (ua, ub) = (u_pert.level(n), u.level(n));
        let out = mismatch.level_mut(n);
        for i in 0..=nx {
            let x = g.x(i);
            for j in 0..=ny {
                let idx = i * stride + j;
                let yc = g.y(j);
                out[idx] = problem.f(x, yc, t, ylev[idx], ua[idx])
                    - problem.f(x, yc, t, ylev[idx], ub[idx]);
            }
        }
    }
    rhs += inner_product_omega_t(&mismatch, &mismatch, g)?;
    Ok(BoundCheck {
        lhs,
        rhs,
        ratio: ratio_of(lhs, rhs),
    })
}

/// Checks the cost-gap bound: the cost change minus the summed Hamiltonian
/// gaps along the frozen base trajectory, against the squared control
/// distance. The gaps use the same multiplier levels and rectangle-in-time
/// quadrature as the sweep's cost functional.
pub fn check_cost_gap(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    u_pert: &Field,
    v_pert: &BoundaryField,
    g: &Grid,
) -> Result<BoundCheck> {
    let stepper = tight_stepper();
    let base = solve_state_with(problem, u, v, g, &stepper)?;
    let adjoint = solve_adjoint_with(problem, &base, u, v, g, &stepper)?;
    let j_base = eval_cost(problem, &base, u, v, g)?;
    cost_gap_with_base(
        problem, &base, &adjoint, j_base, u, v, u_pert, v_pert, g, &stepper,
    )
}

#[allow(clippy::too_many_arguments)]
fn cost_gap_with_base(
    problem: &ProblemDefinition,
    base: &StateSolution,
    adjoint: &AdjointSolution,
    j_base: f64,
    u: &Field,
    v: &BoundaryField,
    u_pert: &Field,
    v_pert: &BoundaryField,
    g: &Grid,
    stepper: &StepperConfig,
) -> Result<BoundCheck> {
    let perturbed = solve_state_with(problem, u_pert, v_pert, g, stepper)?;
    let j_pert = eval_cost(problem, &perturbed, u_pert, v_pert, g)?;

    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let stride = ny + 1;
    let dt = g.dt();
    let mut gap_sum = 0.0;
    for m in 1..=nt {
        let t = g.t(m);
        let lam = adjoint.multiplier_level(g, m);
        let ylev = base.y.level(m);
        let (ua, ub) = (u_pert.level(m), u.level(m));
        let mut level = 0.0;
        for i in 0..=nx {
            let x = g.x(i);
            for j in 0..=ny {
                let idx = i * stride + j;
                let yc = g.y(j);
                level += g.space_weight(i, j)
                    * (h_omega(problem, x, yc, t, ylev[idx], ua[idx], lam[idx])
                        - h_omega(problem, x, yc, t, ylev[idx], ub[idx], lam[idx]));
            }
        }
        let trl = base.boundary_trace.level(m);
        let (va, vb) = (v_pert.level(m), v.level(m));
        for k in 0..g.n_boundary() {
            let (i, j) = g.boundary_node(k);
            let p = lam[i * stride + j];
            let s = g.boundary_arclength(k);
            level += g.boundary_weight(k)
                * (h_sigma(problem, s, t, trl[k], va[k], p)
                    - h_sigma(problem, s, t, trl[k], vb[k], p));
        }
        gap_sum += dt * level;
    }

    let du = u_pert.minus(u);
    let dv = v_pert.minus(v);
    let rhs = inner_product_omega_t(&du, &du, g)? + inner_product_sigma_t(&dv, &dv, g)?;
    let lhs = (j_pert - j_base) - gap_sum;
    Ok(BoundCheck {
        lhs,
        rhs,
        ratio: ratio_of(lhs, rhs),
    })
}

/// Which perturbation bound an amplitude study exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    StateStability,
    CostGap,
}

/// Ratio statistics of one amplitude row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeRow {
    pub amplitude: f64,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeStudy {
    pub kind: BoundKind,
    pub seed: u64,
    pub samples: usize,
    pub rows: Vec<AmplitudeRow>,
}

impl AmplitudeStudy {
    /// Largest pairwise spread of the per-row max ratios, as a factor
    /// `>= 1`. A bound with a genuinely amplitude-independent constant
    /// keeps this factor small.
    pub fn max_ratio_spread(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for row in &self.rows {
            lo = lo.min(row.max_ratio);
            hi = hi.max(row.max_ratio);
        }
        if lo > 0.0 {
            hi / lo
        } else if hi == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }
}

/// Samples one of the perturbation bounds at several perturbation
/// amplitudes, reusing the same seeded directions for every amplitude so
/// the rows are directly comparable. The base point is the constant
/// control pair `u = 0.01`, `v = 0` projected into the admissible boxes.
pub fn amplitude_stability_study(
    problem: &ProblemDefinition,
    g: &Grid,
    seed: u64,
    n_samples: usize,
    amplitudes: &[f64],
    kind: BoundKind,
) -> Result<AmplitudeStudy> {
    if n_samples == 0 || amplitudes.is_empty() {
        return Err(CoreError::InvalidParameter {
            what: "amplitude study",
            detail: format!(
                "need samples and amplitudes, got {n_samples} samples, {} amplitudes",
                amplitudes.len()
            ),
        });
    }
    for &a in amplitudes {
        if !(a.is_finite() && a > 0.0) {
            return Err(CoreError::InvalidParameter {
                what: "amplitude study",
                detail: format!("amplitudes must be positive, got {a}"),
            });
        }
    }

    let mut u = Field::constant(g, 0.01);
    for val in u.values_mut() {
        *val = problem.u_box().project(*val);
    }
    let mut v = BoundaryField::zeros(g);
    for val in v.values_mut() {
        *val = problem.v_box().project(*val);
    }

    let stepper = tight_stepper();
    let base = solve_state_with(problem, &u, &v, g, &stepper)?;
    let adjoint = solve_adjoint_with(problem, &base, &u, &v, g, &stepper)?;
    let j_base = eval_cost(problem, &base, &u, &v, g)?;

    let mut sampler = DirectionSampler::new(seed);
    let directions: Vec<(Field, BoundaryField)> = (0..n_samples)
        .map(|_| (sampler.field_direction(g), sampler.boundary_direction(g)))
        .collect();

    let mut rows = Vec::with_capacity(amplitudes.len());
    for &amplitude in amplitudes {
        let mut ratios = Vec::with_capacity(n_samples);
        for (du, dv) in &directions {
            let up = add_scaled_field(&u, du, amplitude);
            let vp = add_scaled_boundary(&v, dv, amplitude);
            let check = match kind {
                BoundKind::StateStability => {
                    state_stability_with_base(problem, &base, &u, &v, &up, &vp, g, &stepper)?
                }
                BoundKind::CostGap => cost_gap_with_base(
                    problem, &base, &adjoint, j_base, &u, &v, &up, &vp, g, &stepper,
                )?,
            };
            ratios.push(check.ratio);
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
        let median = if ratios.len() % 2 == 1 {
            ratios[ratios.len() / 2]
        } else {
            0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
        };
        rows.push(AmplitudeRow {
            amplitude,
            max_ratio: ratios[ratios.len() - 1],
            median_ratio: median,
        });
    }
    Ok(AmplitudeStudy {
        kind,
        seed,
        samples: n_samples,
        rows,
    })
}

/// Which discretization parameter a convergence study refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementAxis {
    /// Mesh width shrinks; the time step shrinks quadratically with it so
    /// the first-order-in-time error never masks the spatial order.
    Spatial,
    /// Time step shrinks on a fixed mesh fine enough that spatial error is
    /// negligible.
    Temporal,
}

/// One refinement level: resolution, the refined step, and the relative
/// final-time error against the separable heat benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceLevel {
    pub nx: usize,
    pub nt: usize,
    pub step: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub axis: RefinementAxis,
    pub levels: Vec<ConvergenceLevel>,
    /// Observed order between consecutive levels;
    /// `len() == levels.len() - 1`.
    pub observed_orders: Vec<f64>,
}

/// Default spatial refinement ladder `(nx, nt)` with `dt` tied to `h^2`.
pub fn default_spatial_levels() -> Vec<(usize, usize)> {
    alloc::vec![(8, 8), (16, 32), (32, 128)]
}

/// Default temporal refinement ladder on a fixed fine mesh.
pub fn default_temporal_levels() -> Vec<(usize, usize)> {
    alloc::vec![(48, 8), (48, 16), (48, 32)]
}

const BENCHMARK_HORIZON: f64 = 0.1;

/// Runs the time stepper on a pure-diffusion benchmark with a known
/// separable solution and reports relative final-time errors and observed
/// orders. The benchmark has homogeneous conormal flux, so it exercises
/// the boundary closure of the scheme as well as the interior stencil.
pub fn convergence_study(
    axis: RefinementAxis,
    levels: &[(usize, usize)],
) -> Result<ConvergenceReport> {
    if levels.len() < 2 {
        return Err(CoreError::InvalidParameter {
            what: "convergence levels",
            detail: format!("need at least two levels, got {}", levels.len()),
        });
    }
    let pi = core::f64::consts::PI;
    let problem = ProblemBuilder::default()
        .dynamics(
            alloc::boxed::Box::new(|_, _, _, _, _| 0.0),
            alloc::boxed::Box::new(|_, _, _, _, _| 0.0),
        )
        .initial_state(alloc::boxed::Box::new(move |x: f64, y: f64| {
            (pi * x).cos() * (pi * y).cos()
        }))
        .build()?;

    let stepper = tight_stepper();
    let mut out = Vec::with_capacity(levels.len());
    for &(nx, nt) in levels {
        let g = Grid::new(nx, nx, nt, 1.0, 1.0, BENCHMARK_HORIZON)?;
        let u = Field::zeros(&g);
        let v = BoundaryField::zeros(&g);
        let solved = solve_state_with(&problem, &u, &v, &g, &stepper)?;
        let decay = (-2.0 * pi * pi * BENCHMARK_HORIZON).exp();
        let mut err_sq = 0.0;
        let mut ref_sq = 0.0;
        let last = solved.y.level(nt);
        for i in 0..=nx {
            let x = g.x(i);
            for j in 0..=nx {
                let exact = decay * (pi * x).cos() * (pi * g.y(j)).cos();
                let d = last[i * (nx + 1) + j] - exact;
                let w = g.space_weight(i, j);
                err_sq += w * d * d;
                ref_sq += w * exact * exact;
            }
        }
        let step = match axis {
            RefinementAxis::Spatial => g.hx().max(g.hy()),
            RefinementAxis::Temporal => g.dt(),
        };
        out.push(ConvergenceLevel {
            nx,
            nt,
            step,
            rel_error: (err_sq / ref_sq).sqrt(),
        });
    }
    let mut observed_orders = Vec::with_capacity(out.len() - 1);
    for pair in out.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        observed_orders
            .push((coarse.rel_error / fine.rel_error).ln() / (coarse.step / fine.step).ln());
    }
    Ok(ConvergenceReport {
        axis,
        levels: out,
        observed_orders,
    })
}

/// Max-norm of the adjoint for the fixed control pair `u = 0.01`, `v = 0`
/// on the given grid; refinement studies compare this across meshes.
pub fn adjoint_uniform_bound(problem: &ProblemDefinition, g: &Grid) -> Result<f64> {
    let u = Field::constant(g, 0.01);
    let v = BoundaryField::zeros(g);
    let stepper = tight_stepper();
    let state = solve_state_with(problem, &u, &v, g, &stepper)?;
    let adjoint = solve_adjoint_with(problem, &state, &u, &v, g, &stepper)?;
    Ok(uniform_bound_check(&adjoint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_nonlinear, builtin_reference, builtin_with_boundary_control};

    #[test]
    fn directions_are_unit_norm_zero_ended_and_reproducible() {
        let g = Grid::unit(7, 5, 6).unwrap();
        let mut sampler = DirectionSampler::new(11);
        let d = sampler.field_direction(&g);
        let b = sampler.boundary_direction(&g);
        assert!((inner_product_omega_t(&d, &d, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((inner_product_sigma_t(&b, &b, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!(d.level(0).iter().all(|&x| x == 0.0));
        assert!(d.level(g.nt()).iter().all(|&x| x == 0.0));
        assert!(b.level(0).iter().all(|&x| x == 0.0));
        assert!(b.level(g.nt()).iter().all(|&x| x == 0.0));
        assert!(d.level(3).iter().any(|&x| x != 0.0));

        let mut replay = DirectionSampler::new(11);
        assert_eq!(replay.field_direction(&g), d);
        assert_eq!(replay.boundary_direction(&g), b);
        let mut other = DirectionSampler::new(12);
        assert_ne!(other.field_direction(&g), d);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences_on_the_reference_problem() {
        let problem = builtin_with_boundary_control(1.0, 1.0);
        let g = Grid::unit(6, 6, 5).unwrap();
        let u = Field::constant(&g, 0.01);
        let v = BoundaryField::constant(&g, -0.02);
        let report = gradient_check(&problem, &u, &v, &g, 3, 7).unwrap();
        assert_eq!(report.directions.len(), 3);
        for c in &report.directions {
            assert!(c.adjoint_side.abs() > 1e-8, "degenerate direction");
        }
        assert!(
            report.max_rel_error < 1e-6,
            "max rel error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn fd_error_shrinks_with_the_probe_step_on_a_nonlinear_problem() {
        let problem = builtin_nonlinear();
        let g = Grid::unit(5, 5, 4).unwrap();
        let u = Field::constant(&g, 0.4);
        let v = BoundaryField::zeros(&g);
        let coarse = gradient_check_with_step(&problem, &u, &v, &g, 2, 3, 0.5).unwrap();
        let fine = gradient_check_with_step(&problem, &u, &v, &g, 2, 3, 0.05).unwrap();
        assert!(
            fine.max_rel_error < coarse.max_rel_error,
            "fd error did not shrink: {} -> {}",
            coarse.max_rel_error,
            fine.max_rel_error
        );
        assert!(fine.max_rel_error < 1e-3);
    }

    #[test]
    fn stability_check_is_zero_for_identical_controls() {
        let problem = builtin_reference();
        let g = Grid::unit(6, 6, 4).unwrap();
        let u = Field::constant(&g, 0.01);
        let v = BoundaryField::zeros(&g);
        let check = check_state_stability(&problem, &u, &v, &u, &v, &g).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert_eq!(check.ratio, 0.0);
    }

    #[test]
    fn stability_ratio_is_amplitude_invariant_for_linear_dynamics() {
        let problem = builtin_reference();
        let g = Grid::unit(6, 6, 5).unwrap();
        let u = Field::constant(&g, 0.01);
        let v = BoundaryField::zeros(&g);
        let mut sampler = DirectionSampler::new(5);
        let du = sampler.field_direction(&g);
        let dv = sampler.boundary_direction(&g);
        let mut ratios = [0.0; 2];
        for (slot, amp) in [1e-1, 1e-3].into_iter().enumerate() {
            let up = add_scaled_field(&u, &du, amp);
            let vp = add_scaled_boundary(&v, &dv, amp);
            let check = check_state_stability(&problem, &u, &v, &up, &vp, &g).unwrap();
            assert!(check.lhs > 0.0);
            ratios[slot] = check.ratio;
        }
        let rel = (ratios[0] - ratios[1]).abs() / ratios[0].abs();
        assert!(rel < 1e-6, "ratios drifted: {ratios:?}");
    }

    #[test]
    fn cost_gap_is_nonnegative_and_amplitude_invariant_for_the_reference_problem() {
        let problem = builtin_reference();
        let g = Grid::unit(6, 6, 5).unwrap();
        let u = Field::constant(&g, 0.01);
        let v = BoundaryField::zeros(&g);
        let mut sampler = DirectionSampler::new(9);
        let du = sampler.field_direction(&g);
        let dv = sampler.boundary_direction(&g);
        let mut ratios = [0.0; 2];
        for (slot, amp) in [1e-1, 1e-2].into_iter().enumerate() {
            let up = add_scaled_field(&u, &du, amp);
            let vp = add_scaled_boundary(&v, &dv, amp);
            let check = check_cost_gap(&problem, &u, &v, &up, &vp, &g).unwrap();
            assert!(check.lhs >= -1e-12, "gap went negative: {}", check.lhs);
            ratios[slot] = check.ratio;
        }
        let rel = (ratios[0] - ratios[1]).abs() / ratios[0].abs().max(1e-30);
        assert!(rel < 1e-4, "ratios drifted: {ratios:?}");
    }

    #[test]
    fn amplitude_study_rows_are_flat_for_the_reference_problem() {
        let problem = builtin_reference();
        let g = Grid::unit(6, 6, 5).unwrap();
        for kind in [BoundKind::StateStability, BoundKind::CostGap] {
            let study =
                amplitude_stability_study(&problem, &g, 21, 4, &[1e-1, 1e-3], kind).unwrap();
            assert_eq!(study.rows.len(), 2);
            assert_eq!(study.samples, 4);
            let spread = study.max_ratio_spread();
            assert!(spread < 1.001, "{kind:?} spread {spread}");
            for row in &study.rows {
                assert!(row.max_ratio >= row.median_ratio);
                assert!(row.max_ratio > 0.0);
            }
        }
    }

    #[test]
    fn heat_benchmark_converges_at_second_order_in_space() {
        let report = convergence_study(RefinementAxis::Spatial, &[(8, 8), (16, 32)]).unwrap();
        assert_eq!(report.levels.len(), 2);
        assert!(report.levels[0].rel_error > report.levels[1].rel_error);
        assert!(
            report.observed_orders[0] > 1.9,
            "spatial order {}",
            report.observed_orders[0]
        );
    }

    #[test]
    fn heat_benchmark_converges_at_first_order_in_time() {
        let report = convergence_study(RefinementAxis::Temporal, &[(48, 8), (48, 16)]).unwrap();
        assert!(
            report.observed_orders[0] > 0.9 && report.observed_orders[0] < 1.2,
            "temporal order {}",
            report.observed_orders[0]
        );
    }

    #[test]
    fn adjoint_bound_is_stable_under_spatial_refinement() {
        let problem = builtin_reference();
        let coarse = adjoint_uniform_bound(&problem, &Grid::unit(10, 10, 8).unwrap()).unwrap();
        let fine = adjoint_uniform_bound(&problem, &Grid::unit(20, 20, 8).unwrap()).unwrap();
        assert!(coarse > 0.0);
        assert!(
            (fine / coarse - 1.0).abs() < 0.05,
            "bound moved: {coarse} -> {fine}"
        );
    }

    #[test]
    fn degenerate_study_requests_are_rejected() {
        assert!(matches!(
            convergence_study(RefinementAxis::Spatial, &[(8, 8)]),
            Err(CoreError::InvalidParameter { .. })
        ));
        let problem = builtin_reference();
        let g = Grid::unit(5, 5, 4).unwrap();
        let u = Field::zeros(&g);
        let v = BoundaryField::zeros(&g);
        assert!(matches!(
            gradient_check(&problem, &u, &v, &g, 0, 1),
            Err(CoreError::InvalidParameter { .. })
        ));
        assert!(matches!(
            amplitude_stability_study(&problem, &g, 1, 0, &[0.1], BoundKind::CostGap),
            Err(CoreError::InvalidParameter { .. })
        ));
        assert!(matches!(
            amplitude_stability_study(&problem, &g, 1, 2, &[-0.1], BoundKind::CostGap),
            Err(CoreError::InvalidParameter { .. })
        ));
    }
}
