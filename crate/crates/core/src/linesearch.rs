//! Exact one-dimensional minimization for the bootstrap learning rate.
//!
//! The candidate update at rate `gamma` moves every probing vector to
//! `p_l - gamma g_l - eta m_l` (gradient `g`, previous update `m`). The probe
//! estimate is quadratic in `gamma`, so the cost is the square of the
//! quadratic `r(gamma) = a gamma^2 + b gamma + c` and the global minimizer
//! lies in the finite candidate set {real roots of r, vertex -b/(2a), 0}.
//! No iterative scalar search is needed; the coefficients cost one operator
//! application per gradient direction (plus one per momentum direction when
//! momentum is active).

use crate::error::Result;
use crate::operator::LinearOperator;
use crate::probing::{ProbeProducts, ProbingVectorSet};

/// The chosen rate and bookkeeping about how it was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub gamma: f64,
    /// Cost value at the chosen rate (exact zeros for root candidates).
    pub phi_at_gamma: f64,
    /// Cost value at `gamma = 0`, i.e. after the momentum-only move.
    pub phi_at_zero: f64,
    /// Both leading coefficients vanished; `gamma = 0` was returned.
    pub degenerate: bool,
    /// Operator applications consumed computing the coefficients.
    pub applications: usize,
}

/// Minimize `phi(gamma) = (a gamma^2 + b gamma + c)^2` over the candidate
/// set. Roots of `r` get `phi = 0` assigned exactly; positive candidates are
/// preferred on ties, then smaller magnitude.
pub fn minimize_squared_quadratic(a: f64, b: f64, c: f64) -> LineSearchOutcome {
    let phi_zero = c * c;
    let degenerate_outcome = |degenerate| LineSearchOutcome {
        gamma: 0.0,
        phi_at_gamma: phi_zero,
        phi_at_zero: phi_zero,
        degenerate,
        applications: 0,
    };
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return degenerate_outcome(true);
    }
    if a == 0.0 && b == 0.0 {
        return degenerate_outcome(true);
    }

    let r = |gamma: f64| (a * gamma + b) * gamma + c;
    let mut candidates: Vec<(f64, f64)> = vec![(0.0, phi_zero)];
    if a != 0.0 {
        let vertex = -b / (2.0 * a);
        let rv = r(vertex);
        candidates.push((vertex, rv * rv));
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            // Citardauq-stable pair: s carries the large-magnitude root.
            let s = -(b + b.signum() * disc.sqrt()) / 2.0;
            if s != 0.0 {
                candidates.push((s / a, 0.0));
                candidates.push((c / s, 0.0));
            } else {
                // b = 0 and disc = 0 imply c = 0; the double root is 0.
                candidates.push((0.0, 0.0));
            }
        }
    } else {
        candidates.push((-c / b, 0.0));
    }

    let best = candidates
        .into_iter()
        .filter(|(gamma, _)| gamma.is_finite())
        .min_by(|(g1, p1), (g2, p2)| {
            p1.partial_cmp(p2)
                .unwrap()
                .then_with(|| (*g1 <= 0.0).cmp(&(*g2 <= 0.0)))
                .then_with(|| g1.abs().partial_cmp(&g2.abs()).unwrap())
        })
        .unwrap_or((0.0, phi_zero));

    LineSearchOutcome {
        gamma: best.0,
        phi_at_gamma: best.1,
        phi_at_zero: phi_zero,
        degenerate: false,
        applications: 0,
    }
}

/// Choose the bootstrap learning rate by exact minimization of
/// `Q(w - (gamma grad + eta delta_prev))`.
///
/// `products` must hold `A p_l` for the current vectors. Momentum should be
/// passed only when it actually moves the vectors (`eta != 0` and a nonzero
/// previous update); each momentum direction then costs one extra operator
/// application for its product.
pub fn line_search_gamma<A: LinearOperator + ?Sized>(
    w: &ProbingVectorSet,
    gradient: &ProbingVectorSet,
    momentum: Option<&ProbingVectorSet>,
    eta: f64,
    op: &A,
    trace_target: f64,
    products: &ProbeProducts,
) -> Result<LineSearchOutcome> {
    let n_p = w.n_p();
    let len = w.l();
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = -trace_target;
    let mut applications = 0usize;

    for idx in 0..n_p {
        let p = w.vector(idx);
        let g = gradient.vector(idx);
        let u = products.applied_vector(idx, len);
        let h = op.apply(g)?;
        applications += 1;

        let (q_dot_aq, g_dot_aq, q_dot_h) = match momentum {
            Some(m) => {
                let mv = m.vector(idx);
                let am = op.apply(mv)?;
                applications += 1;
                let mut q_dot_aq = 0.0;
                let mut g_dot_aq = 0.0;
                let mut q_dot_h = 0.0;
                for k in 0..len {
                    let qk = p[k] - eta * mv[k];
                    let aqk = u[k] - eta * am[k];
                    q_dot_aq += qk * aqk;
                    g_dot_aq += g[k] * aqk;
                    q_dot_h += qk * h[k];
                }
                (q_dot_aq, g_dot_aq, q_dot_h)
            }
            None => {
                let mut q_dot_aq = 0.0;
                let mut g_dot_aq = 0.0;
                let mut q_dot_h = 0.0;
                for k in 0..len {
                    q_dot_aq += p[k] * u[k];
                    g_dot_aq += g[k] * u[k];
                    q_dot_h += p[k] * h[k];
                }
                (q_dot_aq, g_dot_aq, q_dot_h)
            }
        };

        a += g.iter().zip(&h).map(|(x, y)| x * y).sum::<f64>();
        b -= g_dot_aq + q_dot_h;
        c += q_dot_aq;
    }

    let mut outcome = minimize_squared_quadratic(a, b, c);
    outcome.applications = applications;
    Ok(outcome)
}
