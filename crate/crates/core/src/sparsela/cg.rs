use crate::error::{Error, Result};

use super::csr::SparseMatrix;

/// A symmetric linear map applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        SparseMatrix::apply(self, x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub diag_precond: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            diag_precond: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `‖b − A x‖ / ‖b‖`, recomputed after convergence.
    pub residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients on a sparse matrix; Jacobi preconditioning when requested.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], opts: CgOptions) -> Result<CgOutcome> {
    if a.n_rows() != a.n_cols() || b.len() != a.n_rows() {
        return Err(Error::Dimension(format!(
            "cg on {} x {} matrix with rhs of length {}",
            a.n_rows(),
            a.n_cols(),
            b.len()
        )));
    }
    let inv_diag: Option<Vec<f64>> = if opts.diag_precond {
        let d = a.diagonal();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Singular("Jacobi preconditioner needs a positive diagonal".into()));
        }
        Some(d.iter().map(|v| 1.0 / v).collect())
    } else {
        None
    };
    cg_solve_operator(a, b, None, inv_diag.as_deref(), opts.tol, opts.max_iter)
}

/// Preconditioned CG for a generic operator with optional initial guess.
/// The returned residual is re-verified with an explicit application of `op`.
pub fn cg_solve_operator(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    inv_diag: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) || inv_diag.is_some_and(|d| d.len() != n) {
        return Err(Error::Dimension("cg operand lengths differ from operator dimension".into()));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut z = vec![0.0; n];
    let precond = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (r, d))| *z = r * d),
        None => z.copy_from_slice(r),
    };
    let true_residual = |x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        op.apply(x, ap);
        r.iter_mut().zip(b.iter().zip(ap.iter())).for_each(|(r, (b, a))| *r = b - a);
    };
    true_residual(&x, &mut r, &mut ap);
    let mut iterations = 0;
    loop {
        if norm2(&r) <= tol * bnorm {
            return Ok(CgOutcome {
                residual: norm2(&r) / bnorm,
                x,
                iterations,
            });
        }
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut converged = false;
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Singular(format!("cg breakdown: pᵀAp = {pap:e}")));
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
            iterations += 1;
            if norm2(&r) <= tol * bnorm {
                converged = true;
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        // replace the recursive residual by the true one and restart if it drifted
        true_residual(&x, &mut r, &mut ap);
        let res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok(CgOutcome {
                x,
                iterations,
                residual: res,
            });
        }
        if !converged || iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
            });
        }
    }
}
