//! Randomized invariants of the small algebraic pieces: box projection,
//! trapezoid quadrature, and the pointwise quadratic minimizer.

use paroc_core::grid::{inner_product_omega_t, Field, Grid};
use paroc_core::hamiltonian::{minimize_quadratic_closed_form, AugmentationParams};
use paroc_core::problem::ControlBox;
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = ControlBox> {
    (-1e6..1e6_f64, 0.0..1e6_f64).prop_map(|(lo, width)| ControlBox::new(lo, lo + width).unwrap())
}

/// The augmented quadratic objective the closed form minimizes.
fn phi(u: f64, alpha: f64, p: f64, aug: &AugmentationParams) -> f64 {
    0.5 * alpha * u * u + p * u + aug.penalty(u)
}

proptest! {
    #[test]
    fn projection_lands_in_the_box_idempotently(
        control_box in boxes(),
        x in -1e7..1e7_f64,
        y in -1e7..1e7_f64,
    ) {
        let px = control_box.project(x);
        prop_assert!(control_box.contains(px));
        prop_assert_eq!(control_box.project(px), px);
        // nonexpansive
        let py = control_box.project(y);
        prop_assert!((px - py).abs() <= (x - y).abs() * (1.0 + 1e-15));
    }

    #[test]
    fn trapezoid_rule_is_exact_on_trilinear_products(
        a in -5.0..5.0_f64,
        b in -5.0..5.0_f64,
        c in -5.0..5.0_f64,
        d in -5.0..5.0_f64,
        e in -5.0..5.0_f64,
        f in -5.0..5.0_f64,
        nx in 4..10_usize,
        ny in 4..10_usize,
        nt in 3..8_usize,
    ) {
        let g = Grid::unit(nx, ny, nt).unwrap();
        let field = Field::from_fn(&g, |x, y, t| (a + b * x) * (c + d * y) * (e + f * t));
        let ones = Field::constant(&g, 1.0);
        let got = inner_product_omega_t(&field, &ones, &g).unwrap();
        let exact = (a + b / 2.0) * (c + d / 2.0) * (e + f / 2.0);
        prop_assert!((got - exact).abs() < 1e-11 * (1.0 + exact.abs()), "{} vs {}", got, exact);
    }

    #[test]
    fn squared_norms_are_nonnegative(
        b in -3.0..3.0_f64,
        d in -3.0..3.0_f64,
    ) {
        let g = Grid::unit(6, 5, 4).unwrap();
        let field = Field::from_fn(&g, |x, y, t| b * x - d * y * t + 0.1);
        let norm_sq = inner_product_omega_t(&field, &field, &g).unwrap();
        prop_assert!(norm_sq >= 0.0);
        prop_assert!(norm_sq > 0.0); // positive weights, nonzero field
    }

    #[test]
    fn closed_form_minimizes_over_the_box(
        alpha in 0.1..10.0_f64,
        rho in 0.0..10.0_f64,
        p in -100.0..100.0_f64,
        anchor in -100.0..100.0_f64,
        control_box in boxes(),
        probe in -1.5..1.5_f64,
    ) {
        let anchor = control_box.project(anchor);
        let aug = AugmentationParams { rho, anchor };
        let best = minimize_quadratic_closed_form(alpha, p, &aug, &control_box).unwrap();
        prop_assert!(control_box.contains(best));
        let best_val = phi(best, alpha, p, &aug);
        let tol = 1e-9 * (1.0 + best_val.abs());
        // never worse than the anchor it starts from
        prop_assert!(best_val <= phi(anchor, alpha, p, &aug) + tol);
        // never worse than an arbitrary admissible point near or far
        let other = control_box.project(best + probe * 100.0);
        prop_assert!(best_val <= phi(other, alpha, p, &aug) + tol);
        for endpoint in [control_box.lower(), control_box.upper()] {
            if endpoint.is_finite() {
                prop_assert!(best_val <= phi(endpoint, alpha, p, &aug) + tol);
            }
        }
    }

    #[test]
    fn stronger_anchoring_shrinks_the_step(
        alpha in 0.1..10.0_f64,
        rho in 0.0..10.0_f64,
        extra in 0.0..50.0_f64,
        p in -100.0..100.0_f64,
        anchor in -100.0..100.0_f64,
    ) {
        let weak = minimize_quadratic_closed_form(
            alpha,
            p,
            &AugmentationParams { rho, anchor },
            &ControlBox::UNBOUNDED,
        )
        .unwrap();
        let strong = minimize_quadratic_closed_form(
            alpha,
            p,
            &AugmentationParams { rho: rho + extra, anchor },
            &ControlBox::UNBOUNDED,
        )
        .unwrap();
        prop_assert!((strong - anchor).abs() <= (weak - anchor).abs() * (1.0 + 1e-12) + 1e-12);
    }
}
