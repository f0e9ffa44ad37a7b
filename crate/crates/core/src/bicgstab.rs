//! Unpreconditioned BiCGSTAB (van der Vorst, 1992).
//!
//! Stopping rule is the right-hand-side relative residual,
//! `||b - Mx|| / ||b|| <= tol`, verified against the true residual (one extra
//! matvec) before a solve is reported converged. A scalar breakdown triggers
//! one restart from the current iterate before the solve fails.

use crate::ensemble::CyclicTridiagonalMatrix;
use crate::error::{Error, Result};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default iteration cap as a multiple of the dimension.
pub const DEFAULT_MAX_ITER_FACTOR: usize = 10;

pub fn default_max_iter(l: usize) -> usize {
    DEFAULT_MAX_ITER_FACTOR * l
}

/// A converged solve: the solution, iterations used, and the true relative
/// residual at exit.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub restarted: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `M x = b` (or `M^T x = b` with `transpose`) from `x0 = 0`.
pub fn bicgstab_solve(
    m: &CyclicTridiagonalMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    transpose: bool,
) -> Result<SolveOutcome> {
    if b.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: b.len() });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("solver tol must be positive, got {tol}")));
    }
    let n = m.dim();
    let matvec = |v: &[f64], out: &mut [f64]| {
        if transpose {
            m.apply_transpose_into(v, out).expect("matching dimensions");
        } else {
            m.apply_into(v, out).expect("matching dimensions");
        }
    };

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(SolveOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0, restarted: false });
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mut rho_prev = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut first = true;
    let mut restarted = false;
    let mut iterations = 0usize;

    // True residual of the current iterate; used both for the convergence
    // confirmation and for restarts.
    let true_residual = |x: &[f64], scratch: &mut [f64]| -> f64 {
        matvec(x, scratch);
        let mut acc = 0.0;
        for i in 0..n {
            let d = b[i] - scratch[i];
            acc += d * d;
        }
        acc.sqrt() / b_norm
    };

    macro_rules! restart_or_fail {
        () => {{
            if restarted {
                let res = true_residual(&x, &mut scratch);
                return Err(Error::SolverFailure { iterations, residual: res });
            }
            restarted = true;
            matvec(&x, &mut scratch);
            for i in 0..n {
                r[i] = b[i] - scratch[i];
            }
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|z| *z = 0.0);
            v.iter_mut().for_each(|z| *z = 0.0);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            first = true;
            continue;
        }};
    }

    while iterations < max_iter {
        iterations += 1;

        let rho = dot(&r_hat, &r);
        if rho == 0.0 || !rho.is_finite() {
            restart_or_fail!();
        }
        if first {
            p.copy_from_slice(&r);
            first = false;
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            if !beta.is_finite() {
                restart_or_fail!();
            }
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }

        matvec(&p, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            restart_or_fail!();
        }
        alpha = rho / denom;

        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            let res = true_residual(&x, &mut scratch);
            if res <= tol {
                return Ok(SolveOutcome { x, iterations, residual: res, restarted });
            }
            // Recursive residual drifted from the true one; rebuild and keep
            // iterating.
            restart_or_fail!();
        }

        matvec(&s, &mut t);
        let t_norm_sq = dot(&t, &t);
        if t_norm_sq == 0.0 || !t_norm_sq.is_finite() {
            restart_or_fail!();
        }
        omega = dot(&t, &s) / t_norm_sq;

        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
        }
        for i in 0..n {
            r[i] = s[i] - omega * t[i];
        }

        if norm(&r) / b_norm <= tol {
            let res = true_residual(&x, &mut scratch);
            if res <= tol {
                return Ok(SolveOutcome { x, iterations, residual: res, restarted });
            }
            restart_or_fail!();
        }
        if omega == 0.0 || !omega.is_finite() {
            restart_or_fail!();
        }
        rho_prev = rho;
    }

    let res = true_residual(&x, &mut scratch);
    Err(Error::SolverFailure { iterations, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::dense_realize;
    use crate::rng::SplitMix64;

    #[test]
    fn ones_solve_zero_noise() {
        // M * ones = ones for the noiseless ensemble, so the solution of
        // M x = ones is the ones vector.
        let m = CyclicTridiagonalMatrix::generate(20, 1, 0.0).unwrap();
        let b = vec![1.0; 20];
        let out = bicgstab_solve(&m, &b, 1e-12, 200, false).unwrap();
        for xi in &out.x {
            assert!((xi - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_dense_solve() {
        let m = CyclicTridiagonalMatrix::generate(16, 12, 0.1).unwrap();
        let dense = dense_realize(&m).unwrap();
        let mut rng = SplitMix64::new(5);
        let tol = 1e-10;
        for transpose in [false, true] {
            let b: Vec<f64> = (0..16).map(|_| rng.next_normal()).collect();
            let got = bicgstab_solve(&m, &b, tol, 160, transpose).unwrap();
            let want = if transpose {
                dense.transpose().solve(&b).unwrap()
            } else {
                dense.solve(&b).unwrap()
            };
            let scale = want.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            for i in 0..16 {
                assert!(
                    (got.x[i] - want[i]).abs() <= 10.0 * tol * scale,
                    "component {i}: {} vs {}",
                    got.x[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn residual_contract_holds() {
        let m = CyclicTridiagonalMatrix::generate(100, 77, 0.1).unwrap();
        let mut rng = SplitMix64::new(6);
        let b: Vec<f64> = (0..100).map(|_| rng.next_normal()).collect();
        let tol = 1e-10;
        let out = bicgstab_solve(&m, &b, tol, 1000, false).unwrap();
        // Recompute the residual from scratch.
        let mut mx = vec![0.0; 100];
        m.apply_into(&out.x, &mut mx).unwrap();
        let num: f64 = b.iter().zip(&mx).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den <= tol, "residual {}", num / den);
        assert!(out.iterations > 0);
    }

    #[test]
    fn zero_rhs_is_trivial() {
        let m = CyclicTridiagonalMatrix::generate(8, 2, 0.1).unwrap();
        let out = bicgstab_solve(&m, &[0.0; 8], 1e-10, 80, false).unwrap();
        assert_eq!(out.x, vec![0.0; 8]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let m = CyclicTridiagonalMatrix::generate(64, 3, 0.1).unwrap();
        let mut rng = SplitMix64::new(8);
        let b: Vec<f64> = (0..64).map(|_| rng.next_normal()).collect();
        match bicgstab_solve(&m, &b, 1e-13, 2, false) {
            Err(Error::SolverFailure { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = CyclicTridiagonalMatrix::generate(8, 2, 0.1).unwrap();
        assert!(bicgstab_solve(&m, &[1.0; 7], 1e-10, 80, false).is_err());
        assert!(bicgstab_solve(&m, &[1.0; 8], 0.0, 80, false).is_err());
    }
}
