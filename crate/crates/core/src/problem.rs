//! Problem data: integrands, dynamics nonlinearity, admissible control
//! boxes, initial state, and diffusion coefficients.
//!
//! The continuous problem being discretized is
//!
//! ```text
//!   minimize  J(u, v) = int_{Omega_T} F(x, t, y, u) + int_{Sigma_T} G(s, t, y, v)
//!                     + int_Omega L(x, y(., T))
//!   subject to  y_t + A y + f(x, t, y, u) = 0      in Omega_T,
//!               dy/dn_A + v = 0                    on Sigma_T,
//!               y(., 0) = y0                       in Omega,
//! ```
//!
//! with `A y = -sum_ij d_xj(a_ij(x) d_xi y)` uniformly elliptic and the
//! controls constrained to intervals (`u_box`, `v_box`) pointwise.
//!
//! All callbacks take plain `f64` arguments with the spatial point unpacked:
//! volume callbacks are `(x, y_coord, t, state, control)`, boundary callbacks
//! `(s, t, state, control)` with `s` the arclength along the boundary
//! traversal, terminal callbacks `(x, y_coord, state)`. Callbacks must be
//! pure; a `ProblemDefinition` is immutable and can be shared across threads.

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Volume callback `(x, y_coord, t, state, control) -> value`; used for the
/// dynamics nonlinearity `f` and the running cost `F`.
pub type ScalarFn4 = Box<dyn Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync>;
/// Boundary callback `(s, t, state, control) -> value`; used for `G`.
pub type ScalarFn3 = Box<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// Terminal callback `(x, y_coord, state) -> value`; used for `L`.
pub type ScalarFn2 = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Spatial callback `(x, y_coord) -> value`; used for `y0` and coefficients.
pub type SpatialFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Central finite-difference step for control derivatives.
pub(crate) fn fd_step(at: f64) -> f64 {
    1e-6 * (1.0 + at.abs())
}

/// Closed interval of admissible control values; either endpoint may be
/// infinite, and a degenerate interval pins the control to one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox {
    lower: f64,
    upper: f64,
}

impl ControlBox {
    pub const UNBOUNDED: ControlBox = ControlBox {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Result<ControlBox> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(CoreError::InvalidParameter {
                what: "control box",
                detail: format!("[{lower}, {upper}] is not a nonempty interval"),
            });
        }
        Ok(ControlBox { lower, upper })
    }

    /// The interval `{c}`.
    pub fn singleton(c: f64) -> Result<ControlBox> {
        ControlBox::new(c, c)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Nearest admissible value: clamps into the interval, identity when
    /// unbounded. Idempotent and non-expansive.
    pub fn project(&self, x: f64) -> f64 {
        if x < self.lower {
            self.lower
        } else if x > self.upper {
            self.upper
        } else {
            x
        }
    }
}

/// Clamps `value` into `control_box`.
pub fn project_control(value: f64, control_box: &ControlBox) -> f64 {
    control_box.project(value)
}

/// Symmetric 2x2 diffusion coefficient field `a(x)` with its ellipticity
/// constant. The off-diagonal entry is optional; most of the crate (all the
/// time steppers) requires it absent.
pub struct DiffusionCoefficients {
    a11: SpatialFn,
    a22: SpatialFn,
    a12: Option<SpatialFn>,
    ellipticity: f64,
}

impl DiffusionCoefficients {
    /// The identity tensor, `A = -Laplacian`.
    pub fn identity() -> DiffusionCoefficients {
        DiffusionCoefficients::isotropic(1.0).expect("unit coefficient is valid")
    }

    /// Constant isotropic tensor `c * I`.
    pub fn isotropic(c: f64) -> Result<DiffusionCoefficients> {
        if !c.is_finite() || c <= 0.0 {
            return Err(CoreError::InvalidParameter {
                what: "diffusion coefficient",
                detail: format!("isotropic coefficient must be positive, got {c}"),
            });
        }
        Ok(DiffusionCoefficients {
            a11: Box::new(move |_, _| c),
            a22: Box::new(move |_, _| c),
            a12: None,
            ellipticity: c,
        })
    }

    /// Diagonal tensor with separate axis coefficients.
    pub fn diagonal(
        a11: SpatialFn,
        a22: SpatialFn,
        ellipticity: f64,
    ) -> Result<DiffusionCoefficients> {
        if !ellipticity.is_finite() || ellipticity <= 0.0 {
            return Err(CoreError::InvalidParameter {
                what: "ellipticity constant",
                detail: format!("must be positive, got {ellipticity}"),
            });
        }
        Ok(DiffusionCoefficients {
            a11,
            a22,
            a12: None,
            ellipticity,
        })
    }

    /// Full symmetric tensor; `a12` is the shared off-diagonal entry.
    pub fn full(
        a11: SpatialFn,
        a12: SpatialFn,
        a22: SpatialFn,
        ellipticity: f64,
    ) -> Result<DiffusionCoefficients> {
        if !ellipticity.is_finite() || ellipticity <= 0.0 {
            return Err(CoreError::InvalidParameter {
                what: "ellipticity constant",
                detail: format!("must be positive, got {ellipticity}"),
            });
        }
        Ok(DiffusionCoefficients {
            a11,
            a12: Some(a12),
            a22,
            ellipticity,
        })
    }

    pub fn is_diagonal(&self) -> bool {
        self.a12.is_none()
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn a11(&self, x: f64, y: f64) -> f64 {
        (self.a11)(x, y)
    }
    pub fn a22(&self, x: f64, y: f64) -> f64 {
        (self.a22)(x, y)
    }
    pub fn a12(&self, x: f64, y: f64) -> f64 {
        self.a12.as_ref().map_or(0.0, |f| f(x, y))
    }
}

/// Declares that the control enters the Hamiltonians quadratically:
/// `H_Omega(u) = (alpha/2) u^2 + p u + const` and
/// `H_Sigma(v) = (beta/2) v^2 - p v + const`. When present, the drivers may
/// replace the iterative pointwise minimizer with the exact formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticControlStructure {
    pub alpha: f64,
    pub beta: f64,
}

/// A complete instance of the control problem. Build with
/// [`ProblemDefinition::builder`] or use a shipped instance such as
/// [`builtin_reference`].
pub struct ProblemDefinition {
    dynamics: ScalarFn4,
    dynamics_dy: ScalarFn4,
    dynamics_dyy: Option<ScalarFn4>,
    running: ScalarFn4,
    running_dy: ScalarFn4,
    boundary: ScalarFn3,
    boundary_dy: ScalarFn3,
    terminal: ScalarFn2,
    terminal_dy: ScalarFn2,
    initial: SpatialFn,
    diffusion: DiffusionCoefficients,
    u_box: ControlBox,
    v_box: ControlBox,
    quadratic: Option<QuadraticControlStructure>,
}

impl core::fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("u_box", &self.u_box)
            .field("v_box", &self.v_box)
            .field("quadratic", &self.quadratic)
            .field("diagonal_diffusion", &self.diffusion.is_diagonal())
            .finish_non_exhaustive()
    }
}

impl ProblemDefinition {
    pub fn builder() -> ProblemBuilder {
        ProblemBuilder::default()
    }

    /// Dynamics nonlinearity `f(x, y_coord, t, state, u)`.
    pub fn f(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        (self.dynamics)(x, y, t, state, u)
    }
    /// State derivative of `f`.
    pub fn f_y(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        (self.dynamics_dy)(x, y, t, state, u)
    }
    /// Second state derivative of `f`, when supplied. Never used by the
    /// drivers; exists so boundedness can be sampled by [`validate`].
    pub fn f_yy(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> Option<f64> {
        self.dynamics_dyy.as_ref().map(|g| g(x, y, t, state, u))
    }
    /// Running cost `F(x, y_coord, t, state, u)`.
    pub fn running_cost(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        (self.running)(x, y, t, state, u)
    }
    pub fn running_cost_y(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        (self.running_dy)(x, y, t, state, u)
    }
    /// Boundary cost `G(s, t, state, v)`.
    pub fn boundary_cost(&self, s: f64, t: f64, state: f64, v: f64) -> f64 {
        (self.boundary)(s, t, state, v)
    }
    pub fn boundary_cost_y(&self, s: f64, t: f64, state: f64, v: f64) -> f64 {
        (self.boundary_dy)(s, t, state, v)
    }
    /// Terminal cost `L(x, y_coord, state)`.
    pub fn terminal_cost(&self, x: f64, y: f64, state: f64) -> f64 {
        (self.terminal)(x, y, state)
    }
    pub fn terminal_cost_y(&self, x: f64, y: f64, state: f64) -> f64 {
        (self.terminal_dy)(x, y, state)
    }
    /// Initial state `y0(x, y_coord)`.
    pub fn initial_state(&self, x: f64, y: f64) -> f64 {
        (self.initial)(x, y)
    }

    /// Control derivative of `f` by central differences.
    pub fn f_u(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        let h = fd_step(u);
        (self.f(x, y, t, state, u + h) - self.f(x, y, t, state, u - h)) / (2.0 * h)
    }
    /// Control derivative of `F` by central differences.
    pub fn running_cost_u(&self, x: f64, y: f64, t: f64, state: f64, u: f64) -> f64 {
        let h = fd_step(u);
        (self.running_cost(x, y, t, state, u + h) - self.running_cost(x, y, t, state, u - h))
            / (2.0 * h)
    }
    /// Control derivative of `G` by central differences.
    pub fn boundary_cost_v(&self, s: f64, t: f64, state: f64, v: f64) -> f64 {
        let h = fd_step(v);
        (self.boundary_cost(s, t, state, v + h) - self.boundary_cost(s, t, state, v - h))
            / (2.0 * h)
    }

    pub fn u_box(&self) -> &ControlBox {
        &self.u_box
    }
    pub fn v_box(&self) -> &ControlBox {
        &self.v_box
    }
    pub fn diffusion(&self) -> &DiffusionCoefficients {
        &self.diffusion
    }
    pub fn quadratic_control(&self) -> Option<QuadraticControlStructure> {
        self.quadratic
    }
}

/// Builder for [`ProblemDefinition`]. `f`, `f_y`, and `y0` are required;
/// cost terms default to zero, boxes to unbounded, diffusion to the identity.
pub struct ProblemBuilder {
    dynamics: Option<ScalarFn4>,
    dynamics_dy: Option<ScalarFn4>,
    dynamics_dyy: Option<ScalarFn4>,
    running: ScalarFn4,
    running_dy: ScalarFn4,
    boundary: ScalarFn3,
    boundary_dy: ScalarFn3,
    terminal: ScalarFn2,
    terminal_dy: ScalarFn2,
    initial: Option<SpatialFn>,
    diffusion: DiffusionCoefficients,
    u_box: ControlBox,
    v_box: ControlBox,
    quadratic: Option<QuadraticControlStructure>,
}

impl Default for ProblemBuilder {
    fn default() -> ProblemBuilder {
        ProblemBuilder {
            dynamics: None,
            dynamics_dy: None,
            dynamics_dyy: None,
            running: Box::new(|_, _, _, _, _| 0.0),
            running_dy: Box::new(|_, _, _, _, _| 0.0),
            boundary: Box::new(|_, _, _, _| 0.0),
            boundary_dy: Box::new(|_, _, _, _| 0.0),
            terminal: Box::new(|_, _, _| 0.0),
            terminal_dy: Box::new(|_, _, _| 0.0),
            initial: None,
            diffusion: DiffusionCoefficients::identity(),
            u_box: ControlBox::UNBOUNDED,
            v_box: ControlBox::UNBOUNDED,
            quadratic: None,
        }
    }
}

impl ProblemBuilder {
    pub fn dynamics(mut self, f: ScalarFn4, f_y: ScalarFn4) -> Self {
        self.dynamics = Some(f);
        self.dynamics_dy = Some(f_y);
        self
    }
    pub fn dynamics_second_derivative(mut self, f_yy: ScalarFn4) -> Self {
        self.dynamics_dyy = Some(f_yy);
        self
    }
    pub fn running_cost(mut self, f: ScalarFn4, f_y: ScalarFn4) -> Self {
        self.running = f;
        self.running_dy = f_y;
        self
    }
    pub fn boundary_cost(mut self, g: ScalarFn3, g_y: ScalarFn3) -> Self {
        self.boundary = g;
        self.boundary_dy = g_y;
        self
    }
    pub fn terminal_cost(mut self, l: ScalarFn2, l_y: ScalarFn2) -> Self {
        self.terminal = l;
        self.terminal_dy = l_y;
        self
    }
    pub fn initial_state(mut self, y0: SpatialFn) -> Self {
        self.initial = Some(y0);
        self
    }
    pub fn diffusion(mut self, a: DiffusionCoefficients) -> Self {
        self.diffusion = a;
        self
    }
    pub fn u_box(mut self, b: ControlBox) -> Self {
        self.u_box = b;
        self
    }
    pub fn v_box(mut self, b: ControlBox) -> Self {
        self.v_box = b;
        self
    }
    pub fn quadratic_control(mut self, alpha: f64, beta: f64) -> Self {
        self.quadratic = Some(QuadraticControlStructure { alpha, beta });
        self
    }

    pub fn build(self) -> Result<ProblemDefinition> {
        let dynamics = self.dynamics.ok_or(CoreError::InvalidProblem {
            what: "f",
            detail: String::from("dynamics nonlinearity not supplied"),
        })?;
        let dynamics_dy = self.dynamics_dy.ok_or(CoreError::InvalidProblem {
            what: "f_y",
            detail: String::from("dynamics derivative not supplied"),
        })?;
        let initial = self.initial.ok_or(CoreError::InvalidProblem {
            what: "y0",
            detail: String::from("initial state not supplied"),
        })?;
        Ok(ProblemDefinition {
            dynamics,
            dynamics_dy,
            dynamics_dyy: self.dynamics_dyy,
            running: self.running,
            running_dy: self.running_dy,
            boundary: self.boundary,
            boundary_dy: self.boundary_dy,
            terminal: self.terminal,
            terminal_dy: self.terminal_dy,
            initial,
            diffusion: self.diffusion,
            u_box: self.u_box,
            v_box: self.v_box,
            quadratic: self.quadratic,
        })
    }
}

/// The reference experiment: heat dynamics with a distributed control and
/// linear reaction, `y_t - Lap y = u + y` (in the sign convention above,
/// `f = -(u + y)`), quadratic running cost `(alpha/2) u^2` with `alpha = 1`,
/// terminal tracking cost `(1/2)(y - y_d)^2` toward
/// `y_d = exp(-2 pi) sin(pi x) sin(pi y)`, initial state
/// `y0 = sin(pi x) sin(pi y)`, horizon `T = 1` on the unit square.
///
/// The boundary control is pinned to zero (`v_box = {0}`) and carries no
/// cost: the experiment optimizes the distributed control only, and a free
/// boundary control with `G = 0` would make the boundary Hamiltonian
/// unbounded below. The initial state has nonzero conormal flux at the
/// boundary; the homogeneous Neumann condition smooths it from the first
/// step on.
pub fn builtin_reference() -> ProblemDefinition {
    builtin_tracking(1.0)
}

/// [`builtin_reference`] generalized to an arbitrary horizon `T`: the
/// tracking target becomes `y_d = exp(-2 pi T) sin(pi x) sin(pi y)`, a
/// damped copy of the initial state with the damping tied to the horizon.
pub fn builtin_tracking(horizon: f64) -> ProblemDefinition {
    const ALPHA: f64 = 1.0;
    assert!(
        horizon.is_finite() && horizon > 0.0,
        "tracking horizon must be positive, got {horizon}"
    );
    let pi = core::f64::consts::PI;
    let decay = (-2.0 * ALPHA * pi * horizon).exp();
    let y_d = move |x: f64, y: f64| decay * (pi * x).sin() * (pi * y).sin();
    ProblemDefinition::builder()
        .dynamics(
            Box::new(|_, _, _, state, u| -(u + state)),
            Box::new(|_, _, _, _, _| -1.0),
        )
        .dynamics_second_derivative(Box::new(|_, _, _, _, _| 0.0))
        .running_cost(
            Box::new(move |_, _, _, _, u| 0.5 * ALPHA * u * u),
            Box::new(|_, _, _, _, _| 0.0),
        )
        .terminal_cost(
            Box::new(move |x, y, state| {
                let d = state - y_d(x, y);
                0.5 * d * d
            }),
            Box::new(move |x, y, state| state - y_d(x, y)),
        )
        .initial_state(Box::new(move |x, y| (pi * x).sin() * (pi * y).sin()))
        .u_box(ControlBox::UNBOUNDED)
        .v_box(ControlBox::singleton(0.0).expect("degenerate box is valid"))
        .quadratic_control(ALPHA, 0.0)
        .build()
        .expect("built-in problem is complete")
}

/// Variant of [`builtin_reference`] with a free Neumann boundary control:
/// `G = (beta/2) v^2`, unbounded `v_box`. Exercises the boundary-control
/// path of the solvers and drivers.
pub fn builtin_with_boundary_control(alpha: f64, beta: f64) -> ProblemDefinition {
    let pi = core::f64::consts::PI;
    let decay = (-2.0 * pi).exp();
    let y_d = move |x: f64, y: f64| decay * (pi * x).sin() * (pi * y).sin();
    ProblemDefinition::builder()
        .dynamics(
            Box::new(|_, _, _, state, u| -(u + state)),
            Box::new(|_, _, _, _, _| -1.0),
        )
        .dynamics_second_derivative(Box::new(|_, _, _, _, _| 0.0))
        .running_cost(
            Box::new(move |_, _, _, _, u| 0.5 * alpha * u * u),
            Box::new(|_, _, _, _, _| 0.0),
        )
        .boundary_cost(
            Box::new(move |_, _, _, v| 0.5 * beta * v * v),
            Box::new(|_, _, _, _| 0.0),
        )
        .terminal_cost(
            Box::new(move |x, y, state| {
                let d = state - y_d(x, y);
                0.5 * d * d
            }),
            Box::new(move |x, y, state| state - y_d(x, y)),
        )
        .initial_state(Box::new(move |x, y| (pi * x).sin() * (pi * y).sin()))
        .quadratic_control(alpha, beta)
        .build()
        .expect("built-in problem is complete")
}

/// Variant of [`builtin_reference`] with a cubic reaction term,
/// `f = -(u + y + 0.05 y^3)`. The control still enters linearly, so the
/// closed-form pointwise minimizer remains valid, but the control-to-cost
/// map is no longer quadratic; useful for exercising genuinely nonlinear
/// behavior in finite-difference comparisons.
pub fn builtin_nonlinear() -> ProblemDefinition {
    let pi = core::f64::consts::PI;
    let decay = (-2.0 * pi).exp();
    let y_d = move |x: f64, y: f64| decay * (pi * x).sin() * (pi * y).sin();
    ProblemDefinition::builder()
        .dynamics(
            Box::new(|_, _, _, state, u| -(u + state + 0.05 * state * state * state)),
            Box::new(|_, _, _, state, _| -(1.0 + 0.15 * state * state)),
        )
        .dynamics_second_derivative(Box::new(|_, _, _, state, _| -0.3 * state))
        .running_cost(
            Box::new(move |_, _, _, _, u| 0.5 * u * u),
            Box::new(|_, _, _, _, _| 0.0),
        )
        .terminal_cost(
            Box::new(move |x, y, state| {
                let d = state - y_d(x, y);
                0.5 * d * d
            }),
            Box::new(move |x, y, state| state - y_d(x, y)),
        )
        .initial_state(Box::new(move |x, y| (pi * x).sin() * (pi * y).sin()))
        .u_box(ControlBox::UNBOUNDED)
        .v_box(ControlBox::singleton(0.0).expect("degenerate box is valid"))
        .quadratic_control(1.0, 0.0)
        .build()
        .expect("built-in problem is complete")
}

/// One row of a [`ValidationReport`]: sampled magnitude of a state
/// derivative and its finite-difference consistency with the parent
/// callback.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeRow {
    pub name: &'static str,
    /// Largest sampled `|derivative|` over the lattice.
    pub max_abs: f64,
    /// Largest sampled `|derivative - FD(parent)| / (1 + |derivative|)`;
    /// zero when no consistency check applies.
    pub max_residual: f64,
    pub consistent: bool,
}

/// Sampled ellipticity of the diffusion tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityRow {
    /// Smallest sampled `xi^T a xi` over unit directions.
    pub min_quotient: f64,
    /// The declared ellipticity constant.
    pub constant: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub derivatives: Vec<DerivativeRow>,
    pub ellipticity: EllipticityRow,
}

impl ValidationReport {
    /// True when every derivative row is consistent and the sampled
    /// ellipticity meets the declared constant.
    pub fn is_clean(&self) -> bool {
        self.derivatives.iter().all(|r| r.consistent) && self.ellipticity.satisfied
    }
}

const CONSISTENCY_BAND: f64 = 1e-5;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return alloc::vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn control_samples(b: &ControlBox, n: usize) -> Vec<f64> {
    let lo = b.lower().max(-2.0);
    let hi = b.upper().min(2.0);
    if lo > hi {
        // box entirely outside [-2, 2]; sample near its closest edge
        let edge = if b.lower() > 2.0 {
            b.lower()
        } else {
            b.upper()
        };
        return alloc::vec![edge];
    }
    linspace(lo, hi, n)
}

/// Samples every callback of `problem` on a lattice spanning the grid's
/// domain, states in `[-2, 2]`, and admissible controls: rejects non-finite
/// evaluations, checks each supplied state derivative against central finite
/// differences of its parent within `1e-5 * (1 + |derivative|)`, and samples
/// the ellipticity of the diffusion tensor. Consistency failures are
/// reported, not errors; non-finite values are errors naming the callback.
pub fn validate(
    problem: &ProblemDefinition,
    g: &Grid,
    samples_per_axis: usize,
) -> Result<ValidationReport> {
    let n = samples_per_axis.max(2);
    let xs = linspace(0.0, g.lx(), n);
    let ys = linspace(0.0, g.ly(), n);
    let ts = linspace(0.0, g.t_final(), n);
    let states = linspace(-2.0, 2.0, n);
    let us = control_samples(problem.u_box(), n);
    let vs = control_samples(problem.v_box(), n);
    let ss = linspace(0.0, 2.0 * (g.lx() + g.ly()), n);

    fn check_finite(name: &'static str, value: f64, at: &dyn core::fmt::Debug) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(CoreError::InvalidProblem {
                what: name,
                detail: format!("non-finite value {value} at {at:?}"),
            })
        }
    }

    let mut rows = Vec::new();

    // volume callbacks: f with f_y (and f_yy magnitude), F with F_y
    {
        let mut f_row = DerivativeRow {
            name: "f_y",
            max_abs: 0.0,
            max_residual: 0.0,
            consistent: true,
        };
        let mut fyy_row = DerivativeRow {
            name: "f_yy",
            max_abs: 0.0,
            max_residual: 0.0,
            consistent: true,
        };
        let mut big_f_row = DerivativeRow {
            name: "F_y",
            max_abs: 0.0,
            max_residual: 0.0,
            consistent: true,
        };
        let mut have_fyy = false;
        for &x in &xs {
            for &y in &ys {
                for &t in &ts {
                    for &state in &states {
                        for &u in &us {
                            let at = (x, y, t, state, u);
                            check_finite("f", problem.f(x, y, t, state, u), &at)?;
                            let d = check_finite("f_y", problem.f_y(x, y, t, state, u), &at)?;
                            let h = 1e-6 * (1.0 + state.abs());
                            let fd = (problem.f(x, y, t, state + h, u)
                                - problem.f(x, y, t, state - h, u))
                                / (2.0 * h);
                            accumulate(&mut f_row, d, (d - fd).abs());
                            if let Some(dd) = problem.f_yy(x, y, t, state, u) {
                                have_fyy = true;
                                check_finite("f_yy", dd, &at)?;
                                fyy_row.max_abs = fyy_row.max_abs.max(dd.abs());
                            }
                            check_finite("F", problem.running_cost(x, y, t, state, u), &at)?;
                            let d = check_finite(
                                "F_y",
                                problem.running_cost_y(x, y, t, state, u),
                                &at,
                            )?;
                            let fd = (problem.running_cost(x, y, t, state + h, u)
                                - problem.running_cost(x, y, t, state - h, u))
                                / (2.0 * h);
                            accumulate(&mut big_f_row, d, (d - fd).abs());
                        }
                    }
                }
            }
        }
        rows.push(f_row);
        if have_fyy {
            rows.push(fyy_row);
        }
        rows.push(big_f_row);
    }

    // boundary callback G with G_y
    {
        let mut row = DerivativeRow {
            name: "G_y",
            max_abs: 0.0,
            max_residual: 0.0,
            consistent: true,
        };
        for &s in &ss {
            for &t in &ts {
                for &state in &states {
                    for &v in &vs {
                        let at = (s, t, state, v);
                        check_finite("G", problem.boundary_cost(s, t, state, v), &at)?;
                        let d = check_finite("G_y", problem.boundary_cost_y(s, t, state, v), &at)?;
                        let h = 1e-6 * (1.0 + state.abs());
                        let fd = (problem.boundary_cost(s, t, state + h, v)
                            - problem.boundary_cost(s, t, state - h, v))
                            / (2.0 * h);
                        accumulate(&mut row, d, (d - fd).abs());
                    }
                }
            }
        }
        rows.push(row);
    }

    // terminal callback L with L_y, and the initial state
    {
        let mut row = DerivativeRow {
            name: "L_y",
            max_abs: 0.0,
            max_residual: 0.0,
            consistent: true,
        };
        for &x in &xs {
            for &y in &ys {
                check_finite("y0", problem.initial_state(x, y), &(x, y))?;
                for &state in &states {
                    let at = (x, y, state);
                    check_finite("L", problem.terminal_cost(x, y, state), &at)?;
                    let d = check_finite("L_y", problem.terminal_cost_y(x, y, state), &at)?;
                    let h = 1e-6 * (1.0 + state.abs());
                    let fd = (problem.terminal_cost(x, y, state + h)
                        - problem.terminal_cost(x, y, state - h))
                        / (2.0 * h);
                    accumulate(&mut row, d, (d - fd).abs());
                }
            }
        }
        rows.push(row);
    }

    // ellipticity over unit directions
    let mut min_quotient = f64::INFINITY;
    let a = problem.diffusion();
    let r = core::f64::consts::FRAC_1_SQRT_2;
    let dirs = [(1.0, 0.0), (0.0, 1.0), (r, r), (r, -r)];
    for &x in &xs {
        for &y in &ys {
            let (a11, a12, a22) = (a.a11(x, y), a.a12(x, y), a.a22(x, y));
            if !(a11.is_finite() && a12.is_finite() && a22.is_finite()) {
                return Err(CoreError::InvalidProblem {
                    what: "diffusion",
                    detail: format!("non-finite coefficient at ({x}, {y})"),
                });
            }
            for (e1, e2) in dirs {
                let q = a11 * e1 * e1 + 2.0 * a12 * e1 * e2 + a22 * e2 * e2;
                min_quotient = min_quotient.min(q);
            }
        }
    }

    Ok(ValidationReport {
        derivatives: rows,
        ellipticity: EllipticityRow {
            min_quotient,
            constant: a.ellipticity(),
            satisfied: min_quotient >= a.ellipticity() - 1e-12,
        },
    })
}

fn accumulate(row: &mut DerivativeRow, derivative: f64, residual: f64) {
    row.max_abs = row.max_abs.max(derivative.abs());
    let normalized = residual / (1.0 + derivative.abs());
    row.max_residual = row.max_residual.max(normalized);
    if normalized > CONSISTENCY_BAND {
        row.consistent = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps_and_is_nonexpansive() {
        let b = ControlBox::new(0.0, 1.0).unwrap();
        assert_eq!(project_control(5.0, &b), 1.0);
        assert_eq!(project_control(0.5, &b), 0.5);
        assert_eq!(project_control(-3.0, &ControlBox::UNBOUNDED), -3.0);
        // idempotent, non-expansive
        for (a, c) in [(-4.0, 7.0), (0.2, 0.9), (1.5, -2.0)] {
            let pa = b.project(a);
            let pc = b.project(c);
            assert_eq!(b.project(pa), pa);
            assert!((pa - pc).abs() <= (a - c).abs() + 1e-15);
        }
    }

    #[test]
    fn boxes_reject_nonsense() {
        assert!(ControlBox::new(1.0, 0.0).is_err());
        assert!(ControlBox::new(f64::NAN, 1.0).is_err());
        assert!(ControlBox::singleton(2.0).unwrap().is_singleton());
        assert!(!ControlBox::UNBOUNDED.is_singleton());
    }

    #[test]
    fn reference_problem_matches_hand_values() {
        let p = builtin_reference();
        assert_eq!(p.f(0.3, 0.7, 0.5, 2.0, 3.0), -5.0);
        assert_eq!(p.running_cost(0.0, 0.0, 0.0, 1.0, 0.0), 0.0);
        // terminal cost vanishes on the target
        let pi = core::f64::consts::PI;
        let yd = (-2.0 * pi).exp() * (pi * 0.3).sin() * (pi * 0.6).sin();
        assert!(p.terminal_cost(0.3, 0.6, yd).abs() < 1e-15);
        assert!(p.v_box().is_singleton());
        assert!(!p.u_box().is_singleton());
        let q = p.quadratic_control().unwrap();
        assert_eq!(q.alpha, 1.0);
        assert_eq!(q.beta, 0.0);
    }

    #[test]
    fn reference_dynamics_identity_is_exact() {
        let p = builtin_reference();
        for state in [-2.0, -0.5, 0.0, 1.0, 2.0] {
            for u in [-1.0, 0.0, 0.01, 3.0] {
                assert_eq!(p.f(0.1, 0.2, 0.3, state, u), -(u + state));
            }
        }
    }

    #[test]
    fn fd_control_derivatives_recover_the_linear_coefficient() {
        let p = builtin_reference();
        // f_u = -1 and F_u = alpha * u for the reference problem
        assert!((p.f_u(0.0, 0.0, 0.0, 0.5, 0.7) + 1.0).abs() < 1e-9);
        assert!((p.running_cost_u(0.0, 0.0, 0.0, 0.0, 0.7) - 0.7).abs() < 1e-9);
        let b = builtin_with_boundary_control(1.0, 2.0);
        assert!((b.boundary_cost_v(0.1, 0.2, 0.0, 0.3) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn validator_passes_the_builtins() {
        let g = Grid::unit(4, 4, 4).unwrap();
        for p in [
            builtin_reference(),
            builtin_with_boundary_control(1.0, 0.5),
            builtin_nonlinear(),
        ] {
            let report = validate(&p, &g, 5).unwrap();
            assert!(report.is_clean(), "report: {report:?}");
        }
    }

    #[test]
    fn validator_rejects_non_finite_callbacks() {
        let g = Grid::unit(4, 4, 4).unwrap();
        let p = ProblemDefinition::builder()
            .dynamics(
                Box::new(
                    |_, _, _, state, u| {
                        if state > 1.0 {
                            f64::NAN
                        } else {
                            -(u + state)
                        }
                    },
                ),
                Box::new(|_, _, _, _, _| -1.0),
            )
            .initial_state(Box::new(|_, _| 0.0))
            .build()
            .unwrap();
        let err = validate(&p, &g, 5).unwrap_err();
        assert!(matches!(err, CoreError::InvalidProblem { what: "f", .. }));
    }

    #[test]
    fn validator_flags_an_inconsistent_derivative() {
        let g = Grid::unit(4, 4, 4).unwrap();
        let p = ProblemDefinition::builder()
            .dynamics(
                Box::new(|_, _, _, state, u| -(u + state)),
                Box::new(|_, _, _, _, _| -1.1), // off by 10%
            )
            .initial_state(Box::new(|_, _| 0.0))
            .build()
            .unwrap();
        let report = validate(&p, &g, 5).unwrap();
        assert!(!report.is_clean());
        let row = report.derivatives.iter().find(|r| r.name == "f_y").unwrap();
        assert!(!row.consistent);
        assert!(row.max_residual > 0.04);
    }

    #[test]
    fn validator_flags_a_degenerate_diffusion() {
        let g = Grid::unit(4, 4, 4).unwrap();
        let a = DiffusionCoefficients::full(
            Box::new(|_, _| 1.0),
            Box::new(|_, _| 1.0), // makes xi = (r, -r) degenerate
            Box::new(|_, _| 1.0),
            1.0,
        )
        .unwrap();
        let p = ProblemDefinition::builder()
            .dynamics(
                Box::new(|_, _, _, state, u| -(u + state)),
                Box::new(|_, _, _, _, _| -1.0),
            )
            .initial_state(Box::new(|_, _| 0.0))
            .diffusion(a)
            .build()
            .unwrap();
        let report = validate(&p, &g, 4).unwrap();
        assert!(!report.ellipticity.satisfied);
        assert!(report.ellipticity.min_quotient < 0.1);
    }

    #[test]
    fn missing_required_pieces_fail_the_build() {
        let err = ProblemDefinition::builder().build().unwrap_err();
        assert!(matches!(err, CoreError::InvalidProblem { .. }));
    }
}
