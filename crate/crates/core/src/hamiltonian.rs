//! Pointwise Hamiltonians and their minimizers.
//!
//! The volume Hamiltonian is `H_Omega = F - p f`, the boundary one
//! `H_Sigma = G - p v`; the augmented variants add the proximity penalty
//! `rho (anchor - u)^2` that keeps a control update close to its anchor.
//! Minimization over the admissible interval happens one space-time node at
//! a time, either by projected gradient descent on the supplied objective or
//! by the exact formula when the problem declares quadratic control
//! structure.

use crate::error::{CoreError, Result};
use crate::problem::{fd_step, ControlBox, ProblemDefinition};
use alloc::format;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Volume Hamiltonian `F(x, y, t, state, u) - p * f(x, y, t, state, u)`.
pub fn h_omega(
    problem: &ProblemDefinition,
    x: f64,
    y: f64,
    t: f64,
    state: f64,
    u: f64,
    p: f64,
) -> f64 {
    problem.running_cost(x, y, t, state, u) - p * problem.f(x, y, t, state, u)
}

/// Boundary Hamiltonian `G(s, t, state, v) - p * v`.
pub fn h_sigma(problem: &ProblemDefinition, s: f64, t: f64, state: f64, v: f64, p: f64) -> f64 {
    problem.boundary_cost(s, t, state, v) - p * v
}

/// Penalty weight and anchor of one augmented pointwise problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    pub rho: f64,
    pub anchor: f64,
}

impl AugmentationParams {
    pub fn penalty(&self, u: f64) -> f64 {
        let d = self.anchor - u;
        self.rho * d * d
    }
}

/// `h_omega` plus the proximity penalty.
#[allow(clippy::too_many_arguments)]
pub fn h_omega_aug(
    problem: &ProblemDefinition,
    x: f64,
    y: f64,
    t: f64,
    state: f64,
    u: f64,
    p: f64,
    aug: &AugmentationParams,
) -> f64 {
    h_omega(problem, x, y, t, state, u, p) + aug.penalty(u)
}

/// `h_sigma` plus the proximity penalty.
pub fn h_sigma_aug(
    problem: &ProblemDefinition,
    s: f64,
    t: f64,
    state: f64,
    v: f64,
    p: f64,
    aug: &AugmentationParams,
) -> f64 {
    h_sigma(problem, s, t, state, v, p) + aug.penalty(v)
}

/// Schedule and stopping rules of the projected-gradient pointwise
/// minimizer. The default learning-rate schedule (1e-3, decayed by 0.9
/// every 100 steps) is deliberately conservative: it suits warm starts near
/// the previous iterate, which is how the sweep drivers call it. Searches
/// from far starts should configure a larger rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerConfig {
    pub initial_lr: f64,
    /// Multiplicative decay applied to the rate every `decay_every` steps.
    pub decay: f64,
    pub decay_every: usize,
    pub max_inner_iters: usize,
    /// Stop once `|u - P(u - grad)| <= grad_tol`.
    pub grad_tol: f64,
}

impl Default for MinimizerConfig {
    fn default() -> MinimizerConfig {
        MinimizerConfig {
            initial_lr: 1e-3,
            decay: 0.9,
            decay_every: 100,
            max_inner_iters: 200,
            grad_tol: 1e-6,
        }
    }
}

impl MinimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(CoreError::InvalidParameter {
                what: "minimizer learning rate",
                detail: format!("must be positive, got {}", self.initial_lr),
            });
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(CoreError::InvalidParameter {
                what: "minimizer decay",
                detail: format!("must lie in (0, 1), got {}", self.decay),
            });
        }
        if self.decay_every == 0 || self.max_inner_iters == 0 {
            return Err(CoreError::InvalidParameter {
                what: "minimizer iteration counts",
                detail: format!(
                    "decay_every = {}, max_inner_iters = {} must be positive",
                    self.decay_every, self.max_inner_iters
                ),
            });
        }
        if !(self.grad_tol.is_finite() && self.grad_tol >= 0.0) {
            return Err(CoreError::InvalidParameter {
                what: "minimizer gradient tolerance",
                detail: format!("must be nonnegative, got {}", self.grad_tol),
            });
        }
        Ok(())
    }
}

/// Minimizes `objective` over `control_box` by projected gradient descent
/// from `start`, gradients by central differences with step
/// `1e-6 (1 + |u|)`. The best candidate seen wins, and the (projected)
/// start always counts as a candidate, so the result never has a larger
/// objective than the start; exact ties keep the candidate nearest the
/// start. The objective must be evaluable in a small neighborhood of the
/// box. Stops early at projected-gradient stationarity below `grad_tol`.
pub fn minimize_pointwise<F: Fn(f64) -> f64>(
    objective: F,
    control_box: &ControlBox,
    start: f64,
    cfg: &MinimizerConfig,
) -> Result<f64> {
    cfg.validate()?;
    let check = |u: f64, val: f64| -> Result<f64> {
        if val.is_finite() {
            Ok(val)
        } else {
            Err(CoreError::MinimizerFailed {
                detail: format!("objective evaluated to {val} at u = {u}"),
            })
        }
    };

    let anchor = control_box.project(start);
    let mut u = anchor;
    let mut best_u = u;
    let mut best_val = check(u, objective(u))?;

    let consider = |cand: f64, val: f64, best_u: &mut f64, best_val: &mut f64| {
        let better = val < *best_val
            || (val == *best_val && (cand - anchor).abs() < (*best_u - anchor).abs());
        if better {
            *best_u = cand;
            *best_val = val;
        }
    };

    let mut lr = cfg.initial_lr;
    for it in 0..cfg.max_inner_iters {
        let h = fd_step(u);
        let grad = (check(u + h, objective(u + h))? - check(u - h, objective(u - h))?) / (2.0 * h);
        let stationarity = (u - control_box.project(u - grad)).abs();
        if stationarity <= cfg.grad_tol {
            break;
        }
        u = control_box.project(u - lr * grad);
        let val = check(u, objective(u))?;
        consider(u, val, &mut best_u, &mut best_val);
        if (it + 1) % cfg.decay_every == 0 {
            lr *= cfg.decay;
        }
    }
    Ok(best_u)
}

/// Exact minimizer of `(alpha/2) u^2 + p u + rho (u - anchor)^2` over the
/// box: the projection of `(2 rho anchor - p) / (alpha + 2 rho)`. For the
/// boundary Hamiltonian `(beta/2) v^2 - p v`, call with the multiplier
/// negated. A degenerate box short-circuits to its single value; otherwise
/// `alpha + 2 rho` must be positive for a minimizer to exist.
pub fn minimize_quadratic_closed_form(
    alpha: f64,
    p: f64,
    aug: &AugmentationParams,
    control_box: &ControlBox,
) -> Result<f64> {
    if control_box.is_singleton() {
        return Ok(control_box.lower());
    }
    let curvature = alpha + 2.0 * aug.rho;
    if !(curvature.is_finite() && curvature > 0.0) {
        return Err(CoreError::InvalidParameter {
            what: "quadratic curvature",
            detail: format!(
                "alpha + 2 rho = {curvature} must be positive for an unconstrained minimizer"
            ),
        });
    }
    Ok(control_box.project((2.0 * aug.rho * aug.anchor - p) / curvature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_reference, ProblemDefinition};
    use alloc::boxed::Box;

    fn quadratic_boundary_cost() -> ProblemDefinition {
        ProblemDefinition::builder()
            .dynamics(
                Box::new(|_, _, _, state, u| -(u + state)),
                Box::new(|_, _, _, _, _| -1.0),
            )
            .boundary_cost(Box::new(|_, _, _, v| v * v), Box::new(|_, _, _, _| 0.0))
            .initial_state(Box::new(|_, _| 0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn hamiltonians_match_hand_values() {
        let p = builtin_reference();
        assert_eq!(h_omega(&p, 0.1, 0.2, 0.3, 0.0, 1.0, 0.0), 0.5);
        // F = 0.5, f = -(1 + 1) = -2, so H = 0.5 - 1 * (-2) = 2.5
        assert_eq!(h_omega(&p, 0.1, 0.2, 0.3, 1.0, 1.0, 1.0), 2.5);
        assert_eq!(h_sigma(&p, 0.0, 0.0, 0.0, 3.0, 2.0), -6.0);
        let q = quadratic_boundary_cost();
        assert_eq!(h_sigma(&q, 0.0, 0.0, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn augmentation_adds_the_proximity_penalty() {
        let p = builtin_reference();
        let aug = AugmentationParams {
            rho: 1.0,
            anchor: 0.0,
        };
        assert_eq!(h_omega_aug(&p, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, &aug), 1.5);
        let none = AugmentationParams {
            rho: 0.0,
            anchor: 0.4,
        };
        assert_eq!(
            h_omega_aug(&p, 0.0, 0.0, 0.0, 0.7, 1.0, 0.2, &none),
            h_omega(&p, 0.0, 0.0, 0.0, 0.7, 1.0, 0.2)
        );
        assert_eq!(h_sigma_aug(&p, 0.0, 0.0, 0.0, 2.0, 0.0, &aug), 4.0);
    }

    #[test]
    fn closed_form_matches_hand_value_and_dense_search() {
        let aug = AugmentationParams {
            rho: 1.0,
            anchor: 0.01,
        };
        let u = minimize_quadratic_closed_form(1.0, 1.0, &aug, &ControlBox::UNBOUNDED).unwrap();
        assert!((u - (-0.98 / 3.0)).abs() < 1e-14);

        // dense search over [-2, 2] at 1e-5 resolution on the same objective
        let obj = |uu: f64| 0.5 * uu * uu + 1.0 * uu + aug.penalty(uu);
        let mut best = (f64::INFINITY, 0.0);
        let n = 400_000;
        for k in 0..=n {
            let cand = -2.0 + 4.0 * k as f64 / n as f64;
            let val = obj(cand);
            if val < best.0 {
                best = (val, cand);
            }
        }
        assert!((u - best.1).abs() <= 1.5e-5, "{u} vs grid {}", best.1);
    }

    #[test]
    fn closed_form_respects_boxes() {
        let aug = AugmentationParams {
            rho: 0.5,
            anchor: 0.0,
        };
        let b = ControlBox::new(0.0, 0.5).unwrap();
        // unconstrained minimizer -p/(alpha + 2 rho) = -1.5, clamped to 0
        let u = minimize_quadratic_closed_form(1.0, 3.0, &aug, &b).unwrap();
        assert_eq!(u, 0.0);
        let s = ControlBox::singleton(0.25).unwrap();
        // degenerate boxes bypass the curvature requirement entirely
        let aug0 = AugmentationParams {
            rho: 0.0,
            anchor: 0.1,
        };
        assert_eq!(
            minimize_quadratic_closed_form(0.0, 2.0, &aug0, &s).unwrap(),
            0.25
        );
    }

    #[test]
    fn closed_form_rejects_flat_curvature() {
        let aug = AugmentationParams {
            rho: 0.0,
            anchor: 0.0,
        };
        assert!(matches!(
            minimize_quadratic_closed_form(0.0, 1.0, &aug, &ControlBox::UNBOUNDED),
            Err(CoreError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn descent_reaches_an_unconstrained_quadratic_minimum() {
        let cfg = MinimizerConfig {
            initial_lr: 0.3,
            decay: 0.9,
            decay_every: 200,
            max_inner_iters: 500,
            grad_tol: 1e-8,
        };
        let u = minimize_pointwise(|x| (x - 2.0) * (x - 2.0), &ControlBox::UNBOUNDED, 0.0, &cfg)
            .unwrap();
        assert!((u - 2.0).abs() < 1e-6, "got {u}");
    }

    #[test]
    fn descent_on_a_linear_objective_stops_at_the_face() {
        let cfg = MinimizerConfig {
            initial_lr: 0.2,
            decay: 0.9,
            decay_every: 100,
            max_inner_iters: 200,
            grad_tol: 1e-10,
        };
        let b = ControlBox::new(0.0, 1.0).unwrap();
        let u = minimize_pointwise(|x| 3.0 * x, &b, 0.9, &cfg).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn start_is_always_a_candidate() {
        // schedule far too weak to move anywhere useful: result must still
        // not be worse than the start
        let cfg = MinimizerConfig {
            max_inner_iters: 3,
            ..MinimizerConfig::default()
        };
        let obj = |x: f64| (x - 5.0) * (x - 5.0) + (3.0 * x).sin();
        let start = 0.3;
        let u = minimize_pointwise(obj, &ControlBox::UNBOUNDED, start, &cfg).unwrap();
        assert!(obj(u) <= obj(start) + 1e-12);
    }

    #[test]
    fn iterative_and_closed_form_agree_on_random_instances() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let cfg = MinimizerConfig {
            initial_lr: 0.1,
            decay: 0.95,
            decay_every: 1000,
            max_inner_iters: 3000,
            grad_tol: 1e-9,
        };
        for _ in 0..100 {
            let p: f64 = rng.random_range(-2.0..2.0);
            let anchor: f64 = rng.random_range(-2.0..2.0);
            let rho: f64 = rng.random_range(0.0..2.0);
            let aug = AugmentationParams { rho, anchor };
            let exact =
                minimize_quadratic_closed_form(1.0, p, &aug, &ControlBox::UNBOUNDED).unwrap();
            let obj = |u: f64| 0.5 * u * u + p * u + aug.penalty(u);
            let gd = minimize_pointwise(obj, &ControlBox::UNBOUNDED, anchor, &cfg).unwrap();
            assert!(
                (gd - exact).abs() < 1e-4,
                "p={p} anchor={anchor} rho={rho}: {gd} vs {exact}"
            );
        }
    }

    #[test]
    fn larger_rho_pulls_the_minimizer_toward_the_anchor() {
        for &(alpha, p, anchor) in &[(1.0, 1.0, 0.01), (2.0, -0.7, 0.5), (0.5, 3.0, -1.0)] {
            let mut last = f64::INFINITY;
            for &rho in &[0.0, 0.5, 1.0, 4.0, 50.0] {
                let aug = AugmentationParams { rho, anchor };
                let u =
                    minimize_quadratic_closed_form(alpha, p, &aug, &ControlBox::UNBOUNDED).unwrap();
                let dist = (u - anchor).abs();
                assert!(dist <= last + 1e-14, "rho={rho}: {dist} > {last}");
                last = dist;
            }
        }
    }

    #[test]
    fn bad_configs_and_objectives_are_rejected() {
        let bad = MinimizerConfig {
            decay: 1.5,
            ..MinimizerConfig::default()
        };
        assert!(minimize_pointwise(|x| x * x, &ControlBox::UNBOUNDED, 0.0, &bad).is_err());
        let err = minimize_pointwise(
            |_| f64::NAN,
            &ControlBox::UNBOUNDED,
            0.0,
            &MinimizerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::MinimizerFailed { .. }));
    }
}
