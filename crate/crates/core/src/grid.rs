//! Space-time grid, nodal fields, and the trapezoidal quadrature used for
//! every integral in the crate.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * The domain is the rectangle `[0, lx] x [0, ly]`, discretized with `nx`
//!   and `ny` uniform cells, so axis `x` carries `nx + 1` nodes. Time runs
//!   over `[0, t_final]` with `nt` steps and `nt + 1` levels.
//! * [`Field`] stores one value per space-time node, time level outermost,
//!   then `x`, then `y` (index `j` fastest).
//! * [`BoundaryField`] stores each of the `2 (nx + ny)` distinct boundary
//!   nodes once per time level, walking the south edge west to east, the east
//!   edge south to north, the north edge east to west, and the west edge
//!   north to south. Each corner is stored exactly once, at the start of an
//!   edge; its quadrature weight is the sum of the half-weights of both
//!   adjacent edges.
//! * All integrals are composite trapezoidal rules in every axis: endpoint
//!   nodes carry half weight.

use crate::error::{CoreError, Result};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Uniform tensor grid on a space-time cylinder over a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub(crate) nt: usize,
    pub(crate) hx: f64,
    pub(crate) hy: f64,
    pub(crate) dt: f64,
    pub(crate) lx: f64,
    pub(crate) ly: f64,
    pub(crate) t_final: f64,
}

impl Grid {
    /// Builds a grid with `nx * ny` spatial cells on `[0, lx] x [0, ly]` and
    /// `nt` time steps on `[0, t_final]`. Steps are derived from the extents,
    /// so `nx * hx` reproduces `lx` exactly.
    pub fn new(nx: usize, ny: usize, nt: usize, lx: f64, ly: f64, t_final: f64) -> Result<Grid> {
        fn check_extent(what: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(CoreError::InvalidParameter {
                    what,
                    detail: alloc::format!("must be positive and finite, got {v}"),
                });
            }
            Ok(())
        }
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(CoreError::InvalidParameter {
                what: "grid resolution",
                detail: alloc::format!("nx, ny, nt must all be at least 1, got ({nx}, {ny}, {nt})"),
            });
        }
        check_extent("lx", lx)?;
        check_extent("ly", ly)?;
        check_extent("t_final", t_final)?;
        Ok(Grid {
            nx,
            ny,
            nt,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            dt: t_final / nt as f64,
            lx,
            ly,
            t_final,
        })
    }

    /// Unit square, unit horizon.
    pub fn unit(nx: usize, ny: usize, nt: usize) -> Result<Grid> {
        Grid::new(nx, ny, nt, 1.0, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Nodes per spatial slice.
    pub fn n_space(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Distinct boundary nodes per time level.
    pub fn n_boundary(&self) -> usize {
        2 * (self.nx + self.ny)
    }

    /// Time levels, including both endpoints.
    pub fn n_levels(&self) -> usize {
        self.nt + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Flat index of spatial node `(i, j)` within one level.
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    /// Trapezoidal weight of spatial node `(i, j)`.
    pub fn space_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    /// Trapezoidal weight of time level `n`.
    pub fn time_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.nt {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Lattice coordinates `(i, j)` of boundary slot `k` in traversal order.
    pub fn boundary_node(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.n_boundary());
        let (nx, ny) = (self.nx, self.ny);
        if k < nx {
            (k, 0)
        } else if k < nx + ny {
            (nx, k - nx)
        } else if k < 2 * nx + ny {
            (nx - (k - nx - ny), ny)
        } else {
            (0, ny - (k - 2 * nx - ny))
        }
    }

    /// Arclength coordinate of boundary slot `k`, measured along the
    /// traversal from the south-west corner.
    pub fn boundary_arclength(&self, k: usize) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let (i, j) = self.boundary_node(k);
        if k < nx {
            self.x(i)
        } else if k < nx + ny {
            self.lx + self.y(j)
        } else if k < 2 * nx + ny {
            self.lx + self.ly + (self.lx - self.x(i))
        } else {
            2.0 * self.lx + self.ly + (self.ly - self.y(j))
        }
    }

    /// Trapezoidal arclength weight of boundary slot `k`. Corners collect one
    /// half-weight from each adjacent edge.
    pub fn boundary_weight(&self, k: usize) -> f64 {
        let (i, j) = self.boundary_node(k);
        let x_end = i == 0 || i == self.nx;
        let y_end = j == 0 || j == self.ny;
        if x_end && y_end {
            0.5 * (self.hx + self.hy)
        } else if y_end {
            // south or north edge interior
            self.hx
        } else {
            self.hy
        }
    }

    /// Evaluates `f(x, y)` at every node of one spatial slice.
    pub fn spatial_nodes<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_space());
        for i in 0..=self.nx {
            for j in 0..=self.ny {
                out.push(f(self.x(i), self.y(j)));
            }
        }
        out
    }
}

/// Nodal values over the whole space-time cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    nt: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(g: &Grid) -> Field {
        Field {
            nx: g.nx,
            ny: g.ny,
            nt: g.nt,
            values: vec![0.0; g.n_levels() * g.n_space()],
        }
    }

    pub fn constant(g: &Grid, c: f64) -> Field {
        Field {
            nx: g.nx,
            ny: g.ny,
            nt: g.nt,
            values: vec![c; g.n_levels() * g.n_space()],
        }
    }

    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(g: &Grid, f: F) -> Field {
        let mut out = Field::zeros(g);
        for n in 0..=g.nt {
            let t = g.t(n);
            let level = out.level_mut(n);
            for i in 0..=g.nx {
                for j in 0..=g.ny {
                    level[i * (g.ny + 1) + j] = f(g.x(i), g.y(j), t);
                }
            }
        }
        out
    }

    fn n_space(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn matches(&self, g: &Grid) -> bool {
        self.nx == g.nx && self.ny == g.ny && self.nt == g.nt
    }

    pub(crate) fn check(&self, what: &'static str, g: &Grid) -> Result<()> {
        if self.matches(g) {
            Ok(())
        } else {
            Err(CoreError::ShapeMismatch {
                what,
                expected: g.n_levels() * g.n_space(),
                got: self.values.len(),
            })
        }
    }

    pub fn at(&self, n: usize, i: usize, j: usize) -> f64 {
        self.values[(n * (self.nx + 1) + i) * (self.ny + 1) + j]
    }

    pub fn set(&mut self, n: usize, i: usize, j: usize, v: f64) {
        self.values[(n * (self.nx + 1) + i) * (self.ny + 1) + j] = v;
    }

    /// One spatial slice, `j` fastest.
    pub fn level(&self, n: usize) -> &[f64] {
        let m = self.n_space();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let m = self.n_space();
        &mut self.values[n * m..(n + 1) * m]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Flat storage, level-major with `j` fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Pointwise difference `self - other`.
    pub fn minus(&self, other: &Field) -> Field {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Field {
            nx: self.nx,
            ny: self.ny,
            nt: self.nt,
            values,
        }
    }

    /// Restriction to the boundary traversal, one row per time level.
    pub fn boundary_trace(&self, g: &Grid) -> BoundaryField {
        let nb = g.n_boundary();
        let mut out = BoundaryField::zeros(g);
        for n in 0..=g.nt {
            let level = self.level(n);
            let row = out.level_mut(n);
            for k in 0..nb {
                let (i, j) = g.boundary_node(k);
                row[k] = level[i * (g.ny + 1) + j];
            }
        }
        out
    }
}

/// Nodal values on the lateral boundary over time, in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    nb: usize,
    nt: usize,
    values: Vec<f64>,
}

impl BoundaryField {
    pub fn zeros(g: &Grid) -> BoundaryField {
        BoundaryField {
            nb: g.n_boundary(),
            nt: g.nt,
            values: vec![0.0; (g.nt + 1) * g.n_boundary()],
        }
    }

    pub fn constant(g: &Grid, c: f64) -> BoundaryField {
        BoundaryField {
            nb: g.n_boundary(),
            nt: g.nt,
            values: vec![c; (g.nt + 1) * g.n_boundary()],
        }
    }

    /// Evaluates `f(s, t)` with `s` the boundary arclength coordinate.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(g: &Grid, f: F) -> BoundaryField {
        let mut out = BoundaryField::zeros(g);
        for n in 0..=g.nt {
            let t = g.t(n);
            let row = out.level_mut(n);
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = f(g.boundary_arclength(k), t);
            }
        }
        out
    }

    pub fn matches(&self, g: &Grid) -> bool {
        self.nb == g.n_boundary() && self.nt == g.nt
    }

    pub(crate) fn check(&self, what: &'static str, g: &Grid) -> Result<()> {
        if self.matches(g) {
            Ok(())
        } else {
            Err(CoreError::ShapeMismatch {
                what,
                expected: (g.nt + 1) * g.n_boundary(),
                got: self.values.len(),
            })
        }
    }

    pub fn at(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.nb + k]
    }

    pub fn set(&mut self, n: usize, k: usize, v: f64) {
        self.values[n * self.nb + k] = v;
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.values[n * self.nb..(n + 1) * self.nb]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.nb..(n + 1) * self.nb]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat storage, level-major in traversal order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn minus(&self, other: &BoundaryField) -> BoundaryField {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        BoundaryField {
            nb: self.nb,
            nt: self.nt,
            values,
        }
    }
}

/// `L2` inner product of two fields over the space-time cylinder, by the
/// product trapezoidal rule.
pub fn inner_product_omega_t(a: &Field, b: &Field, g: &Grid) -> Result<f64> {
    a.check("inner_product_omega_t lhs", g)?;
    b.check("inner_product_omega_t rhs", g)?;
    let mut total = 0.0;
    for n in 0..=g.nt {
        let tw = g.time_weight(n);
        let (la, lb) = (a.level(n), b.level(n));
        let mut level_sum = 0.0;
        for i in 0..=g.nx {
            let wx = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
            let row = i * (g.ny + 1);
            let mut row_sum = 0.0;
            for j in 0..=g.ny {
                let wy = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
                row_sum += wy * la[row + j] * lb[row + j];
            }
            level_sum += wx * row_sum;
        }
        total += tw * level_sum * g.hx * g.hy;
    }
    Ok(total)
}

/// `L2` inner product of two boundary fields over the lateral surface, by the
/// trapezoidal rule in arclength and time.
pub fn inner_product_sigma_t(a: &BoundaryField, b: &BoundaryField, g: &Grid) -> Result<f64> {
    a.check("inner_product_sigma_t lhs", g)?;
    b.check("inner_product_sigma_t rhs", g)?;
    let nb = g.n_boundary();
    let mut total = 0.0;
    for n in 0..=g.nt {
        let tw = g.time_weight(n);
        let (la, lb) = (a.level(n), b.level(n));
        let mut level_sum = 0.0;
        for k in 0..nb {
            level_sum += g.boundary_weight(k) * la[k] * lb[k];
        }
        total += tw * level_sum;
    }
    Ok(total)
}

/// `L2(Omega)` norm of one spatial slice (used for terminal-time quantities).
pub fn norm_l2_omega_final(slice: &[f64], g: &Grid) -> Result<f64> {
    if slice.len() != g.n_space() {
        return Err(CoreError::ShapeMismatch {
            what: "norm_l2_omega_final slice",
            expected: g.n_space(),
            got: slice.len(),
        });
    }
    let mut total = 0.0;
    for i in 0..=g.nx {
        let wx = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
        let row = i * (g.ny + 1);
        for j in 0..=g.ny {
            let wy = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
            total += wx * wy * slice[row + j] * slice[row + j];
        }
    }
    Ok((total * g.hx * g.hy).sqrt())
}

/// Squared cylinder norm, `inner_product_omega_t(a, a, g)`.
pub fn norm_sq_omega_t(a: &Field, g: &Grid) -> Result<f64> {
    inner_product_omega_t(a, a, g)
}

/// Squared lateral-surface norm, `inner_product_sigma_t(a, a, g)`.
pub fn norm_sq_sigma_t(a: &BoundaryField, g: &Grid) -> Result<f64> {
    inner_product_sigma_t(a, a, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(0, 4, 4, 1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 4, -1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 4, 1.0, f64::NAN, 1.0).is_err());
        assert!(Grid::new(4, 4, 0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn steps_span_the_extents() {
        let g = Grid::new(7, 13, 11, 2.5, 0.3, 4.0).unwrap();
        assert!((g.nx as f64 * g.hx - g.lx).abs() <= 1e-12 * g.lx);
        assert!((g.ny as f64 * g.hy - g.ly).abs() <= 1e-12 * g.ly);
        assert!((g.nt as f64 * g.dt - g.t_final).abs() <= 1e-12 * g.t_final);
    }

    #[test]
    fn boundary_traversal_covers_each_node_once() {
        let g = Grid::unit(5, 3, 1).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for k in 0..g.n_boundary() {
            let (i, j) = g.boundary_node(k);
            assert!(i == 0 || i == g.nx || j == 0 || j == g.ny);
            assert!(seen.insert((i, j)), "node ({i}, {j}) visited twice");
        }
        assert_eq!(seen.len(), 2 * (g.nx + g.ny));
        // corners sit at the start of each edge
        assert_eq!(g.boundary_node(0), (0, 0));
        assert_eq!(g.boundary_node(g.nx), (g.nx, 0));
        assert_eq!(g.boundary_node(g.nx + g.ny), (g.nx, g.ny));
        assert_eq!(g.boundary_node(2 * g.nx + g.ny), (0, g.ny));
    }

    #[test]
    fn boundary_arclength_is_monotone_and_closes() {
        let g = Grid::new(4, 6, 1, 2.0, 1.5, 1.0).unwrap();
        let perimeter = 2.0 * (g.lx + g.ly);
        let mut prev = -1.0;
        for k in 0..g.n_boundary() {
            let s = g.boundary_arclength(k);
            assert!(s > prev, "arclength not increasing at slot {k}");
            assert!(s < perimeter);
            prev = s;
        }
    }

    #[test]
    fn boundary_weights_sum_to_perimeter() {
        let g = Grid::new(9, 4, 1, 2.0, 0.5, 1.0).unwrap();
        let total: f64 = (0..g.n_boundary()).map(|k| g.boundary_weight(k)).sum();
        assert!((total - 2.0 * (g.lx + g.ly)).abs() < 1e-12);
    }

    #[test]
    fn cylinder_inner_product_measures_the_unit_cylinder() {
        let g = Grid::unit(10, 7, 4).unwrap();
        let ones = Field::constant(&g, 1.0);
        let q = inner_product_omega_t(&ones, &ones, &g).unwrap();
        assert!((q - 1.0).abs() < 1e-12, "unit cylinder measure: {q}");
    }

    #[test]
    fn cylinder_inner_product_integrates_x_squared() {
        // Reference value 1/3; the composite trapezoidal error for x^2 is
        // exactly hx^2 / 6.
        let g = Grid::unit(100, 100, 25).unwrap();
        let x = Field::from_fn(&g, |x, _, _| x);
        let q = inner_product_omega_t(&x, &x, &g).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 2.0e-5, "got {q}");
        assert!((q - (1.0 / 3.0 + g.hx * g.hx / 6.0)).abs() < 1e-9);
    }

    #[test]
    fn cylinder_inner_product_is_exact_for_multilinear_integrands() {
        let g = Grid::new(6, 5, 4, 1.0, 2.0, 3.0).unwrap();
        // a * b is affine in each coordinate separately, so the product
        // trapezoidal rule integrates it exactly.
        let a = Field::from_fn(&g, |x, y, _| (1.0 + 2.0 * x) * (2.0 - y));
        let b = Field::from_fn(&g, |_, _, t| 3.0 + t);
        // int_0^1 (1+2x) dx = 2, int_0^2 (2-y) dy = 2, int_0^3 (3+t) dt = 13.5
        let exact = 2.0 * 2.0 * 13.5;
        let q = inner_product_omega_t(&a, &b, &g).unwrap();
        assert!((q - exact).abs() < 1e-12 * exact, "got {q}, want {exact}");
    }

    #[test]
    fn boundary_inner_product_measures_the_lateral_surface() {
        let g = Grid::unit(8, 12, 5).unwrap();
        let ones = BoundaryField::constant(&g, 1.0);
        let q = inner_product_sigma_t(&ones, &ones, &g).unwrap();
        assert!((q - 4.0).abs() < 1e-12, "perimeter x horizon: {q}");
    }

    #[test]
    fn boundary_inner_product_is_exact_for_edgewise_affine_integrands() {
        let g = Grid::unit(9, 7, 3).unwrap();
        // x + y restricted to each edge is affine in arclength; against the
        // constant 1 the rule is exact: south 1/2, east 3/2, north 3/2,
        // west 1/2, total 4, times the unit horizon.
        let mut a = BoundaryField::zeros(&g);
        for n in 0..=g.nt {
            for k in 0..g.n_boundary() {
                let (i, j) = g.boundary_node(k);
                a.set(n, k, g.x(i) + g.y(j));
            }
        }
        let ones = BoundaryField::constant(&g, 1.0);
        let q = inner_product_sigma_t(&a, &ones, &g).unwrap();
        assert!((q - 4.0).abs() < 1e-12, "got {q}");
    }

    #[test]
    fn edge_quadrature_integrates_a_single_edge_profile() {
        let g = Grid::unit(100, 100, 1).unwrap();
        // Arclength coordinate on the south edge, zero elsewhere. The nodal
        // function is discontinuous at the south-east corner, where the east
        // edge picks up a piecewise-linear tent of exact integral hy / 2; the
        // south edge itself integrates x^2 with trapezoidal error hx^2 / 6.
        let mut s_profile = BoundaryField::zeros(&g);
        for n in 0..=g.nt {
            for k in 0..=g.nx {
                // slots 0..=nx are the south edge plus the SE corner
                s_profile.set(n, k, g.boundary_arclength(k));
            }
        }
        let q = inner_product_sigma_t(&s_profile, &s_profile, &g).unwrap();
        let expected = (1.0 / 3.0 + g.hy / 2.0) * g.t_final;
        assert!(
            (q - expected).abs() < g.hx * g.hx,
            "got {q}, want {expected}"
        );

        // A profile that vanishes at the corners converges cleanly at second
        // order: sin(pi s) on the south edge, integral of sin^2 = 1/2.
        let smooth = BoundaryField::from_fn(&g, |s, _| if s <= 1.0 { (PI * s).sin() } else { 0.0 });
        let q = inner_product_sigma_t(&smooth, &smooth, &g).unwrap();
        assert!((q - 0.5).abs() < 1e-3, "got {q}");
    }

    #[test]
    fn final_norm_of_the_double_sine_mode() {
        let g = Grid::unit(100, 100, 2).unwrap();
        let slice = g.spatial_nodes(|x, y| (PI * x).sin() * (PI * y).sin());
        // int sin^2(pi x) sin^2(pi y) = 1/4, so the norm is 1/2.
        let norm = norm_l2_omega_final(&slice, &g).unwrap();
        assert!((norm - 0.5).abs() < 1e-3, "got {norm}");
    }

    #[test]
    fn inner_products_are_positive_definite() {
        let g = Grid::unit(6, 6, 3).unwrap();
        let a = Field::from_fn(&g, |x, y, t| (3.1 * x - y + 0.5 * t).sin() - 0.3);
        assert!(inner_product_omega_t(&a, &a, &g).unwrap() > 0.0);
        let z = Field::zeros(&g);
        assert_eq!(inner_product_omega_t(&z, &z, &g).unwrap(), 0.0);
        let b = BoundaryField::from_fn(&g, |s, t| s * t + 0.1);
        assert!(inner_product_sigma_t(&b, &b, &g).unwrap() > 0.0);
    }

    #[test]
    fn quadrature_error_shrinks_at_second_order() {
        // Fixed smooth integrand; halving every step should cut the error by
        // about four.
        let exact = (core::f64::consts::E - 1.0) * 1.0_f64.sin() * (1.0 + 1.0 / 3.0);
        let mut errors = Vec::new();
        for n in [8usize, 16, 32] {
            let g = Grid::unit(n, n, n).unwrap();
            let a = Field::from_fn(&g, |x, y, t| x.exp() * y.cos() * (1.0 + t * t));
            let ones = Field::constant(&g, 1.0);
            let q = inner_product_omega_t(&a, &ones, &g).unwrap();
            errors.push((q - exact).abs());
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "observed order {order}, errors {errors:?}");
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g1 = Grid::unit(4, 4, 2).unwrap();
        let g2 = Grid::unit(5, 4, 2).unwrap();
        let a = Field::zeros(&g1);
        let b = Field::zeros(&g2);
        assert!(matches!(
            inner_product_omega_t(&a, &b, &g1),
            Err(CoreError::ShapeMismatch { .. })
        ));
        let s = alloc::vec![0.0; 7];
        assert!(norm_l2_omega_final(&s, &g1).is_err());
    }

    #[test]
    fn traces_pick_up_boundary_values() {
        let g = Grid::unit(4, 3, 2).unwrap();
        let f = Field::from_fn(&g, |x, y, t| x + 10.0 * y + 100.0 * t);
        let tr = f.boundary_trace(&g);
        for n in 0..=g.nt {
            for k in 0..g.n_boundary() {
                let (i, j) = g.boundary_node(k);
                assert_eq!(tr.at(n, k), f.at(n, i, j));
            }
        }
    }
}
