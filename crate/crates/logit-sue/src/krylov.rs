//! Restarted GMRES for the Newton systems.
//!
//! The systems are square, nonsymmetric, and applied matrix-free. Arnoldi
//! uses modified Gram-Schmidt with a conditional second pass, the
//! least-squares problem is carried by Givens rotations, and the reported
//! residual is always recomputed from the returned iterate rather than
//! trusted from the rotation recurrence.

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct GmresConfig {
    /// Target relative residual.
    pub tol: f64,
    /// Krylov dimension per cycle, clamped to the system size.
    pub max_dim: usize,
    /// Additional cycles after the first.
    pub max_restarts: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig {
            tol: 1e-10,
            max_dim: 200,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub solution: Vec<f64>,
    /// True residual of `solution`, relative to the right-hand side norm.
    pub relative_residual: f64,
    /// Matrix applications across all cycles, excluding residual recomputes.
    pub iterations: usize,
    pub converged: bool,
    /// Rotation-recurrence residual estimates, one per iteration.
    pub residual_history: Vec<f64>,
}

/// Solve `A x = b` from a zero start. The zero start matters to callers
/// whose right-hand sides live in a subspace `A` preserves: every Krylov
/// vector, and so the solution, stays in that subspace.
pub fn gmres<F>(apply: F, b: &[f64], cfg: &GmresConfig) -> Result<GmresResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Err(Error::ZeroRhs);
    }
    // Slack on the target keeps a recomputed residual that matches the
    // recurrence to roundoff from flipping the converged flag.
    let accept = cfg.tol * (1.0 + 1e-10);
    let m = cfg.max_dim.min(n).max(1);

    let mut x = vec![0.0; n];
    let mut iterations = 0usize;
    let mut history = Vec::new();
    let mut relative = 1.0;

    for cycle in 0..=cfg.max_restarts {
        let r: Vec<f64> = if cycle == 0 {
            b.to_vec()
        } else {
            let ax = apply(&x);
            b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
        };
        let beta = norm2(&r);
        relative = beta / bnorm;
        if relative <= accept {
            break;
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|ri| ri / beta).collect());
        // Columns of the rotated Hessenberg matrix; column j has j + 1
        // entries and is upper triangular after the rotations.
        let mut rcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut steps = 0usize;
        let mut breakdown = false;

        for j in 0..m {
            let mut w = apply(&basis[j]);
            iterations += 1;
            let w_in = norm2(&w);
            let mut hcol = Vec::with_capacity(j + 2);
            for v in &basis {
                let c = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
                hcol.push(c);
            }
            // Second orthogonalization pass when the first one cancelled
            // enough to leave visible components along the basis.
            let w_mid = norm2(&w);
            let corr: Vec<f64> = basis.iter().map(|v| dot(&w, v)).collect();
            let corr_max = corr.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            if corr_max > 1e-8 * w_mid {
                for (c, v) in corr.iter().zip(&basis) {
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= c * vi;
                    }
                }
                for (h, c) in hcol.iter_mut().zip(&corr) {
                    *h += c;
                }
            }
            let hnext = norm2(&w);

            for i in 0..j {
                let t = cs[i] * hcol[i] + sn[i] * hcol[i + 1];
                hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = t;
            }
            let (c, s) = givens(hcol[j], hnext);
            cs.push(c);
            sn.push(s);
            hcol[j] = c * hcol[j] + s * hnext;
            g.push(-s * g[j]);
            g[j] *= c;
            rcols.push(hcol);
            steps = j + 1;
            let est = g[j + 1].abs() / bnorm;
            history.push(est);

            if hnext <= 1e-14 * w_in.max(f64::MIN_POSITIVE) {
                breakdown = true;
                break;
            }
            if est <= accept {
                break;
            }
            basis.push(w.iter().map(|wi| wi / hnext).collect());
        }

        // Back substitution on the triangular system of the steps taken.
        let mut y = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                acc -= rcols[k][i] * yk;
            }
            y[i] = acc / rcols[i][i];
        }
        for (yk, v) in y.iter().zip(&basis) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += yk * vi;
            }
        }

        let ax = apply(&x);
        let true_res: f64 = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (bi - ai) * (bi - ai))
            .sum::<f64>()
            .sqrt();
        relative = true_res / bnorm;
        if relative <= accept || breakdown {
            break;
        }
    }

    Ok(GmresResult {
        solution: x,
        relative_residual: relative,
        iterations,
        converged: relative <= accept,
        residual_history: history,
    })
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}
