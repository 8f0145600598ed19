//! Finite-difference assembly of the elliptic operator on the tensor grid.
//!
//! The time steppers work with the weighted form of the five-point scheme:
//! `W` is the diagonal of trapezoid quadrature weights and `K` the stiffness
//! matrix assembled from one term per grid edge,
//!
//! ```text
//!   K = sum over x-edges  wy(j) hy a11(mid) / hx * (e_a - e_b)(e_a - e_b)^T
//!     + sum over y-edges  wx(i) hx a22(mid) / hy * (e_a - e_b)(e_a - e_b)^T,
//! ```
//!
//! with each coefficient sampled at the edge midpoint. `K` is symmetric
//! positive semidefinite with `K 1 = 0`, so `W^{-1} K` reproduces the usual
//! second-order scheme at interior nodes and closes the boundary with
//! mirrored ghost values (zero conormal flux). Inhomogeneous flux data
//! enters through [`EllipticStencil::scatter_conormal`], whose per-slot
//! weights are arclength weights scaled by the ratio of the midpoint to the
//! node coefficient; for the identity tensor they equal
//! `Grid::boundary_weight` exactly.
//!
//! Only diagonal tensors are assembled here; full tensors are rejected and
//! handled by the matrix-free application in `pde_solvers`.

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::problem::DiffusionCoefficients;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

pub(crate) struct EllipticStencil {
    nx: usize,
    ny: usize,
    /// Node quadrature weights, the diagonal of `W`.
    w: Vec<f64>,
    /// Coupling of each node to its east neighbor (zero at `i = nx`).
    ce: Vec<f64>,
    /// Coupling of each node to its north neighbor (zero at `j = ny`).
    cn: Vec<f64>,
    /// Diagonal of `K`: sum of the couplings of all incident edges.
    cdiag: Vec<f64>,
    /// Weight of prescribed conormal-flux data per boundary slot.
    inject: Vec<f64>,
}

fn sample_coefficient(value: f64, what: &'static str, x: f64, y: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CoreError::InvalidProblem {
            what: "diffusion",
            detail: format!("{what} = {value} at ({x}, {y}) is not positive"),
        })
    }
}

impl EllipticStencil {
    pub(crate) fn build(a: &DiffusionCoefficients, g: &Grid) -> Result<EllipticStencil> {
        if !a.is_diagonal() {
            return Err(CoreError::UnsupportedDiffusion(
                "the time steppers require a diagonal diffusion tensor; \
                 apply_elliptic handles full tensors",
            ));
        }
        let (nx, ny) = (g.nx(), g.ny());
        let (hx, hy) = (g.hx(), g.hy());
        let n = g.n_space();
        let mut w = vec![0.0; n];
        let mut ce = vec![0.0; n];
        let mut cn = vec![0.0; n];
        let mut cdiag = vec![0.0; n];

        let axis_weight = |k: usize, last: usize| if k == 0 || k == last { 0.5 } else { 1.0 };

        for i in 0..=nx {
            for j in 0..=ny {
                let idx = g.node(i, j);
                w[idx] = g.space_weight(i, j);
                if i < nx {
                    let xm = (i as f64 + 0.5) * hx;
                    let am = sample_coefficient(a.a11(xm, g.y(j)), "a11", xm, g.y(j))?;
                    ce[idx] = axis_weight(j, ny) * hy * am / hx;
                }
                if j < ny {
                    let ym = (j as f64 + 0.5) * hy;
                    let am = sample_coefficient(a.a22(g.x(i), ym), "a22", g.x(i), ym)?;
                    cn[idx] = axis_weight(i, nx) * hx * am / hy;
                }
            }
        }
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = g.node(i, j);
                let mut d = ce[idx] + cn[idx];
                if i > 0 {
                    d += ce[g.node(i - 1, j)];
                }
                if j > 0 {
                    d += cn[g.node(i, j - 1)];
                }
                cdiag[idx] = d;
            }
        }

        // Conormal-data weights: each boundary edge contributes its arclength
        // share scaled by a(midpoint toward the interior) / a(node).
        let mut inject = vec![0.0; g.n_boundary()];
        for k in 0..g.n_boundary() {
            let (i, j) = g.boundary_node(k);
            let (x, y) = (g.x(i), g.y(j));
            let mut acc = 0.0;
            if j == 0 || j == ny {
                let ym = if j == 0 { 0.5 * hy } else { g.ly() - 0.5 * hy };
                let ratio = a.a22(x, ym) / sample_coefficient(a.a22(x, y), "a22", x, y)?;
                acc += axis_weight(i, nx) * hx * ratio;
            }
            if i == 0 || i == nx {
                let xm = if i == 0 { 0.5 * hx } else { g.lx() - 0.5 * hx };
                let ratio = a.a11(xm, y) / sample_coefficient(a.a11(x, y), "a11", x, y)?;
                acc += axis_weight(j, ny) * hy * ratio;
            }
            inject[k] = acc;
        }

        Ok(EllipticStencil {
            nx,
            ny,
            w,
            ce,
            cn,
            cdiag,
            inject,
        })
    }

    /// `out = K y`.
    pub(crate) fn apply_stiffness(&self, y: &[f64], out: &mut [f64]) {
        let stride = self.ny + 1;
        for i in 0..=self.nx {
            for j in 0..=self.ny {
                let idx = i * stride + j;
                let mut acc = self.cdiag[idx] * y[idx];
                if i < self.nx {
                    acc -= self.ce[idx] * y[idx + stride];
                }
                if i > 0 {
                    acc -= self.ce[idx - stride] * y[idx - stride];
                }
                if j < self.ny {
                    acc -= self.cn[idx] * y[idx + 1];
                }
                if j > 0 {
                    acc -= self.cn[idx - 1] * y[idx - 1];
                }
                out[idx] = acc;
            }
        }
    }

    /// `out = (W + dt K) y`, the implicit system matrix of one time step.
    pub(crate) fn apply_system(&self, dt: f64, y: &[f64], out: &mut [f64]) {
        self.apply_stiffness(y, out);
        for idx in 0..y.len() {
            out[idx] = self.w[idx] * y[idx] + dt * out[idx];
        }
    }

    pub(crate) fn system_diagonal(&self, dt: f64) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.cdiag)
            .map(|(w, d)| w + dt * d)
            .collect()
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Flux injection weight per boundary slot: the arclength share scaled
    /// by the coefficient ratio between edge midpoints and the node.
    pub(crate) fn injection_weights(&self) -> &[f64] {
        &self.inject
    }

    /// Adds `scale * inject[k] * data[k]` into the nodal slot of every
    /// boundary node; `data` holds prescribed conormal flux per slot.
    pub(crate) fn scatter_conormal(&self, g: &Grid, data: &[f64], scale: f64, out: &mut [f64]) {
        for (k, &d) in data.iter().enumerate() {
            let (i, j) = g.boundary_node(k);
            out[g.node(i, j)] += scale * self.inject[k] * d;
        }
    }
}
