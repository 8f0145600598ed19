//! Matrix-free preconditioned conjugate gradient for the symmetric positive
//! definite systems assembled by the implicit time stepper.

use crate::error::{CoreError, Result};
use alloc::vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` with Jacobi-preconditioned CG. `apply` must implement a
/// symmetric positive definite operator; `diag` is its diagonal. `x` carries
/// the initial guess in and the solution out. Convergence is relative to
/// `||b||`; a zero right-hand side returns the zero solution.
pub(crate) fn solve_spd<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
    time_level: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(diag.len(), n);

    let norm_b = norm(b);
    if norm_b == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    apply(x, &mut ap);
    for k in 0..n {
        r[k] = b[k] - ap[k];
    }

    let mut res = norm(&r);
    if res <= rel_tol * norm_b {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: res / norm_b,
        });
    }

    for k in 0..n {
        z[k] = r[k] / diag[k];
    }
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);

    for iter in 1..=max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(CoreError::LinearSolveFailed {
                time_level,
                relative_residual: res / norm_b,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = norm(&r);
        if !res.is_finite() {
            return Err(CoreError::LinearSolveFailed {
                time_level,
                relative_residual: f64::INFINITY,
            });
        }
        if res <= rel_tol * norm_b {
            return Ok(CgOutcome {
                iterations: iter,
                relative_residual: res / norm_b,
            });
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }

    Err(CoreError::LinearSolveFailed {
        time_level,
        relative_residual: res / norm_b,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(m: &[Vec<f64>]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |x, out| {
            for (i, row) in m.iter().enumerate() {
                out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        }
    }

    #[test]
    fn solves_a_small_spd_system() {
        // diagonally dominant tridiagonal, exact solution chosen first
        let n = 12;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 4.0;
            if i > 0 {
                m[i][i - 1] = -1.0;
            }
            if i + 1 < n {
                m[i][i + 1] = -1.0;
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; n];
        dense_apply(&m)(&x_true, &mut b);
        let diag: Vec<f64> = (0..n).map(|i| m[i][i]).collect();

        let mut x = vec![0.0; n];
        let out = solve_spd(dense_apply(&m), &diag, &b, &mut x, 1e-12, 200, 0).unwrap();
        assert!(out.relative_residual <= 1e-12);
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-10, "got {a}, want {e}");
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let diag = vec![2.0; 5];
        let b = vec![0.0; 5];
        let mut x = vec![1.0; 5];
        let out = solve_spd(
            |x, out| {
                for k in 0..5 {
                    out[k] = 2.0 * x[k];
                }
            },
            &diag,
            &b,
            &mut x,
            1e-10,
            10,
            3,
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn warm_start_that_already_solves_costs_nothing() {
        let diag = vec![3.0; 4];
        let b = vec![3.0, 6.0, 9.0, 12.0];
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        let out = solve_spd(
            |x, out| {
                for k in 0..4 {
                    out[k] = 3.0 * x[k];
                }
            },
            &diag,
            &b,
            &mut x,
            1e-10,
            10,
            0,
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn indefinite_operator_is_rejected() {
        let diag = vec![1.0; 2];
        let b = vec![1.0, 1.0];
        let mut x = vec![0.0; 2];
        let err = solve_spd(
            |x, out| {
                out[0] = x[0];
                out[1] = -x[1];
            },
            &diag,
            &b,
            &mut x,
            1e-10,
            10,
            7,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CoreError::LinearSolveFailed { time_level: 7, .. }
        ));
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let n = 50;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 2.0;
            if i > 0 {
                m[i][i - 1] = -1.0;
            }
            if i + 1 < n {
                m[i][i + 1] = -1.0;
            }
        }
        let diag = vec![2.0; n];
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = solve_spd(dense_apply(&m), &diag, &b, &mut x, 1e-14, 3, 0).unwrap_err();
        assert!(matches!(err, CoreError::LinearSolveFailed { .. }));
    }
}
