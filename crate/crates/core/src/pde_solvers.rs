//! Time steppers for the state and adjoint equations, and the matrix-free
//! elliptic operator.
//!
//! One forward step solves the weighted symmetric system
//!
//! ```text
//!   (W + dt K) y^{n+1} = W (y^n - dt f(., t_n, y^n, u^{n+1})) - dt Inj v^{n+1},
//! ```
//!
//! diffusion implicit, nonlinearity explicit, with `W`, `K`, and the
//! conormal injection `Inj` from the stencil assembly. The adjoint sweep
//! solves the transpose of the same linearized dynamics backwards, so the
//! discrete cost gradient computed from it is exact for this scheme:
//!
//! ```text
//!   (W + dt K) p^m = W [(1 - dt f_y(., t_m, y^m, u^{m+1})) p^{m+1}]
//!                  + dt W F_y(., t_m, y^m, u^m) + dt Tr^T [B G_y(., t_m, v^m)],
//! ```
//!
//! where `B` holds the arclength quadrature weights of the boundary cost.
//! The stored terminal slice of the adjoint is the pointwise condition
//! `p^N = L_y(., y^N)`; the backward sweep itself is seeded by the smoothed
//! terminal multiplier of the discrete system, kept separately on
//! [`AdjointSolution`] for algorithms that need the discrete-consistent
//! value at the final time.
//!
//! Both solves share the same SPD matrix `W + dt K`, solved by
//! Jacobi-preconditioned conjugate gradients warm-started from the previous
//! time level.

use crate::cg;
use crate::error::{CoreError, Result};
use crate::grid::{BoundaryField, Field, Grid};
use crate::problem::{DiffusionCoefficients, ProblemDefinition};
use crate::stencil::EllipticStencil;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Numerical knobs of the time steppers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    /// Relative residual target of the inner conjugate-gradient solves.
    pub cg_rel_tol: f64,
    pub cg_max_iters: usize,
    /// A state whose max-norm passes this threshold aborts the solve.
    pub blow_up_threshold: f64,
}

impl Default for StepperConfig {
    fn default() -> StepperConfig {
        StepperConfig {
            cg_rel_tol: 1e-10,
            cg_max_iters: 10_000,
            blow_up_threshold: 1e12,
        }
    }
}

/// Forward trajectory with its boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSolution {
    pub y: Field,
    pub boundary_trace: BoundaryField,
}

/// Backward trajectory with its boundary trace. The field's terminal slice
/// is the nodal condition `L_y(., y(T))`; `terminal_multiplier` is the
/// discrete-consistent final-time value, differing from the slice by one
/// implicit smoothing step (an `O(dt)` correction).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub p: Field,
    pub boundary_trace: BoundaryField,
    terminal_multiplier: Vec<f64>,
}

impl AdjointSolution {
    pub fn terminal_multiplier(&self) -> &[f64] {
        &self.terminal_multiplier
    }

    /// The discrete multiplier at time level `m`: the stored field except at
    /// the final level, where the smoothed terminal value applies. Control
    /// updates and exact gradients must read this, not the raw field.
    pub fn multiplier_level(&self, g: &Grid, m: usize) -> &[f64] {
        if m == g.nt() {
            &self.terminal_multiplier
        } else {
            self.p.level(m)
        }
    }
}

fn max_abs_slice(s: &[f64]) -> f64 {
    s.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn ensure_finite_slice(s: &[f64], what: &'static str, level: usize) -> Result<()> {
    if s.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            what,
            time_level: Some(level),
        })
    }
}

/// Applies the elliptic operator `A y = -div(a grad y)` with homogeneous
/// conormal boundary closure (mirrored ghost values) to one spatial slice.
/// Diagonal tensors use the same half-coefficient scheme as the time
/// steppers; full tensors add a wide-centered mixed-derivative term and are
/// second order at interior nodes.
pub fn apply_elliptic(a: &DiffusionCoefficients, y: &[f64], g: &Grid) -> Result<Vec<f64>> {
    if y.len() != g.n_space() {
        return Err(CoreError::ShapeMismatch {
            what: "spatial slice",
            expected: g.n_space(),
            got: y.len(),
        });
    }
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let stride = ny + 1;
    let mut out = vec![0.0; y.len()];

    let mirror = |k: isize, n: usize| -> usize {
        if k < 0 {
            (-k) as usize
        } else if k as usize > n {
            2 * n - k as usize
        } else {
            k as usize
        }
    };

    for i in 0..=nx {
        let x = g.x(i);
        for j in 0..=ny {
            let yc = g.y(j);
            let idx = i * stride + j;
            let (aw, ae) = {
                let half = 0.5 * hx;
                let aw = if i > 0 {
                    a.a11(x - half, yc)
                } else {
                    a.a11(x + half, yc)
                };
                let ae = if i < nx {
                    a.a11(x + half, yc)
                } else {
                    a.a11(x - half, yc)
                };
                (aw, ae)
            };
            let yw = y[mirror(i as isize - 1, nx) * stride + j];
            let yeast = y[mirror(i as isize + 1, nx) * stride + j];
            let xpart = (aw * (y[idx] - yw) + ae * (y[idx] - yeast)) / (hx * hx);

            let (a_s, a_n) = {
                let half = 0.5 * hy;
                let a_s = if j > 0 {
                    a.a22(x, yc - half)
                } else {
                    a.a22(x, yc + half)
                };
                let a_n = if j < ny {
                    a.a22(x, yc + half)
                } else {
                    a.a22(x, yc - half)
                };
                (a_s, a_n)
            };
            let ys = y[i * stride + mirror(j as isize - 1, ny)];
            let yn = y[i * stride + mirror(j as isize + 1, ny)];
            let ypart = (a_s * (y[idx] - ys) + a_n * (y[idx] - yn)) / (hy * hy);

            out[idx] = xpart + ypart;
        }
    }

    if !a.is_diagonal() {
        // wide-centered cross term -d_x(a12 d_y y) - d_y(a12 d_x y)
        let mut flux_x = vec![0.0; y.len()]; // a12 * d_y y
        let mut flux_y = vec![0.0; y.len()]; // a12 * d_x y
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = i * stride + j;
                let a12 = a.a12(g.x(i), g.y(j));
                let dyv = (y[i * stride + mirror(j as isize + 1, ny)]
                    - y[i * stride + mirror(j as isize - 1, ny)])
                    / (2.0 * hy);
                let dxv = (y[mirror(i as isize + 1, nx) * stride + j]
                    - y[mirror(i as isize - 1, nx) * stride + j])
                    / (2.0 * hx);
                flux_x[idx] = a12 * dyv;
                flux_y[idx] = a12 * dxv;
            }
        }
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = i * stride + j;
                let t1 = (flux_x[mirror(i as isize + 1, nx) * stride + j]
                    - flux_x[mirror(i as isize - 1, nx) * stride + j])
                    / (2.0 * hx);
                let t2 = (flux_y[i * stride + mirror(j as isize + 1, ny)]
                    - flux_y[i * stride + mirror(j as isize - 1, ny)])
                    / (2.0 * hy);
                out[idx] -= t1 + t2;
            }
        }
    }

    Ok(out)
}

/// Solves the state equation forward with default stepper settings.
pub fn solve_state(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
) -> Result<StateSolution> {
    solve_state_with(problem, u, v, g, &StepperConfig::default())
}

pub fn solve_state_with(
    problem: &ProblemDefinition,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
    cfg: &StepperConfig,
) -> Result<StateSolution> {
    u.check("distributed control", g)?;
    v.check("boundary control", g)?;
    let st = EllipticStencil::build(problem.diffusion(), g)?;
    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let dt = g.dt();
    let n = g.n_space();
    let stride = ny + 1;
    let xs: Vec<f64> = (0..=nx).map(|i| g.x(i)).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| g.y(j)).collect();

    let mut y = Field::zeros(g);
    {
        let y0 = y.level_mut(0);
        for i in 0..=nx {
            for j in 0..=ny {
                y0[i * stride + j] = problem.initial_state(xs[i], ys[j]);
            }
        }
        ensure_finite_slice(y0, "initial state", 0)?;
    }

    let diag = st.system_diagonal(dt);
    let mut rhs = vec![0.0; n];
    let mut x = y.level(0).to_vec();

    for step in 0..nt {
        let t = g.t(step);
        {
            let ylev = y.level(step);
            let ulev = u.level(step + 1);
            let w = st.weights();
            for i in 0..=nx {
                for j in 0..=ny {
                    let idx = i * stride + j;
                    let fv = problem.f(xs[i], ys[j], t, ylev[idx], ulev[idx]);
                    rhs[idx] = w[idx] * (ylev[idx] - dt * fv);
                }
            }
        }
        st.scatter_conormal(g, v.level(step + 1), -dt, &mut rhs);
        ensure_finite_slice(&rhs, "state update right-hand side", step + 1)?;

        cg::solve_spd(
            |z, out| st.apply_system(dt, z, out),
            &diag,
            &rhs,
            &mut x,
            cfg.cg_rel_tol,
            cfg.cg_max_iters,
            step + 1,
        )?;
        let m = max_abs_slice(&x);
        if !m.is_finite() || m > cfg.blow_up_threshold {
            return Err(CoreError::StateBlowUp {
                time_level: step + 1,
                max_abs: m,
            });
        }
        y.level_mut(step + 1).copy_from_slice(&x);
    }

    let boundary_trace = y.boundary_trace(g);
    Ok(StateSolution { y, boundary_trace })
}

/// Solves the adjoint equation backward with default stepper settings.
pub fn solve_adjoint(
    problem: &ProblemDefinition,
    state: &StateSolution,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
) -> Result<AdjointSolution> {
    solve_adjoint_with(problem, state, u, v, g, &StepperConfig::default())
}

pub fn solve_adjoint_with(
    problem: &ProblemDefinition,
    state: &StateSolution,
    u: &Field,
    v: &BoundaryField,
    g: &Grid,
    cfg: &StepperConfig,
) -> Result<AdjointSolution> {
    state.y.check("state trajectory", g)?;
    state.boundary_trace.check("state boundary trace", g)?;
    u.check("distributed control", g)?;
    v.check("boundary control", g)?;
    let st = EllipticStencil::build(problem.diffusion(), g)?;
    let (nx, ny, nt) = (g.nx(), g.ny(), g.nt());
    let dt = g.dt();
    let n = g.n_space();
    let stride = ny + 1;
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

    let mut p = Field::zeros(g);
    {
        let yn = state.y.level(nt);
        let pn = p.level_mut(nt);
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = i * stride + j;
                pn[idx] = problem.terminal_cost_y(xs[i], ys[j], yn[idx]);
            }
        }
        ensure_finite_slice(pn, "terminal cost derivative", nt)?;
    }

    let diag = st.system_diagonal(dt);
    let w = st.weights();
    let mut rhs = vec![0.0; n];

    // smoothed terminal multiplier of the discrete system
    let mut x = p.level(nt).to_vec();
    {
        let t = g.t(nt);
        let yn = state.y.level(nt);
        let un = u.level(nt);
        let pn = p.level(nt);
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = i * stride + j;
                let fy = problem.running_cost_y(xs[i], ys[j], t, yn[idx], un[idx]);
                rhs[idx] = w[idx] * (pn[idx] + dt * fy);
            }
        }
        let trn = state.boundary_trace.level(nt);
        let vn = v.level(nt);
        for k in 0..g.n_boundary() {
            let gy = problem.boundary_cost_y(arcs[k], t, trn[k], vn[k]);
            rhs[bnodes[k]] += dt * g.boundary_weight(k) * gy;
        }
        ensure_finite_slice(&rhs, "adjoint terminal right-hand side", nt)?;
        cg::solve_spd(
            |z, out| st.apply_system(dt, z, out),
            &diag,
            &rhs,
            &mut x,
            cfg.cg_rel_tol,
            cfg.cg_max_iters,
            nt,
        )?;
    }
    let terminal_multiplier = x.clone();

    for m in (0..nt).rev() {
        let t = g.t(m);
        {
            let ylev = state.y.level(m);
            let unext = u.level(m + 1);
            let ucur = u.level(m);
            // x still holds the multiplier at level m + 1
            for i in 0..=nx {
                for j in 0..=ny {
                    let idx = i * stride + j;
                    let fy = problem.f_y(xs[i], ys[j], t, ylev[idx], unext[idx]);
                    let source = problem.running_cost_y(xs[i], ys[j], t, ylev[idx], ucur[idx]);
                    rhs[idx] = w[idx] * ((1.0 - dt * fy) * x[idx] + dt * source);
                }
            }
            let trm = state.boundary_trace.level(m);
            let vcur = v.level(m);
            for k in 0..g.n_boundary() {
                let gy = problem.boundary_cost_y(arcs[k], t, trm[k], vcur[k]);
                rhs[bnodes[k]] += dt * g.boundary_weight(k) * gy;
            }
        }
        ensure_finite_slice(&rhs, "adjoint right-hand side", m)?;
        cg::solve_spd(
            |z, out| st.apply_system(dt, z, out),
            &diag,
            &rhs,
            &mut x,
            cfg.cg_rel_tol,
            cfg.cg_max_iters,
            m,
        )?;
        ensure_finite_slice(&x, "adjoint", m)?;
        p.level_mut(m).copy_from_slice(&x);
    }

    let boundary_trace = p.boundary_trace(g);
    Ok(AdjointSolution {
        p,
        boundary_trace,
        terminal_multiplier,
    })
}

/// Largest `|p|` over the whole trajectory, terminal multiplier included.
pub fn uniform_bound_check(adjoint: &AdjointSolution) -> f64 {
    adjoint
        .p
        .max_abs()
        .max(max_abs_slice(&adjoint.terminal_multiplier))
}
