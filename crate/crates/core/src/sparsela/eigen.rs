//! Largest eigenvalue of `D⁻¹A` for symmetric positive semi-definite `A` and
//! positive diagonal `D`, computed on the symmetrized operator `D^{-1/2} A D^{-1/2}`.
//!
//! The iteration is a Krylov (Lanczos) acceleration of the power method with full
//! reorthogonalization; the returned residual is the true Ritz residual.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::cg::{dot, norm2};
use super::csr::SparseMatrix;

/// Inflation applied to estimates that failed to reach the requested accuracy.
pub const UNCONVERGED_INFLATION: f64 = 1.05;

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iter: 400,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenEstimate {
    /// Estimate of λ_max; inflated by [`UNCONVERGED_INFLATION`] when `converged` is false.
    pub value: f64,
    /// `‖Sy − θy‖ / θ` for the final Ritz pair.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn lambda_max(a: &SparseMatrix, dinv: &[f64], opts: EigenOptions) -> Result<EigenEstimate> {
    let n = a.n_rows();
    if a.n_cols() != n || dinv.len() != n {
        return Err(Error::Dimension("lambda_max operands do not conform".into()));
    }
    if dinv.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::Domain("lambda_max needs a positive diagonal scaling".into()));
    }
    if n == 0 {
        return Ok(EigenEstimate {
            value: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let s: Vec<f64> = dinv.iter().map(|d| d.sqrt()).collect();
    let mut scratch = vec![0.0; n];
    let mut apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            scratch[i] = s[i] * x[i];
        }
        a.apply(&scratch, y);
        for i in 0..n {
            y[i] *= s[i];
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let max_k = opts.max_iter.clamp(1, n);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best = (0.0, f64::INFINITY);
    let mut k = 0;
    while k < max_k {
        apply(&basis[k], &mut w);
        let alpha = dot(&w, &basis[k]);
        alphas.push(alpha);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(w, q)| *w -= c * q);
            }
        }
        let beta = norm2(&w);
        k += 1;
        let check = k == max_k || k % 10 == 0 || beta <= f64::EPSILON * alpha.abs().max(1.0);
        if check {
            let (theta, ritz) = ritz_pair(&alphas, &betas);
            let y = combine(&basis, &ritz);
            let mut sy = vec![0.0; n];
            apply(&y, &mut sy);
            let res: Vec<f64> = sy.iter().zip(&y).map(|(a, b)| a - theta * b).collect();
            let rel = if theta > 0.0 { norm2(&res) / theta } else { norm2(&res) };
            best = (theta, rel);
            if rel <= opts.rel_tol {
                return Ok(EigenEstimate {
                    value: theta,
                    residual: rel,
                    iterations: k,
                    converged: true,
                });
            }
        }
        if beta <= f64::EPSILON * alpha.abs().max(1.0) || k == max_k {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    let (theta, rel) = best;
    // the invariant subspace was exhausted exactly
    if k < max_k && rel <= opts.rel_tol.max(1e-8) {
        return Ok(EigenEstimate {
            value: theta,
            residual: rel,
            iterations: k,
            converged: true,
        });
    }
    log::warn!("lambda_max did not reach {:.1e} after {k} iterations (residual {rel:.3e})", opts.rel_tol);
    Ok(EigenEstimate {
        value: theta * UNCONVERGED_INFLATION,
        residual: rel,
        iterations: k,
        converged: false,
    })
}

fn ritz_pair(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, theta) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    (theta, eig.eigenvectors.column(idx).iter().copied().collect())
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let n = basis[0].len();
    let mut y = vec![0.0; n];
    for (q, &c) in basis.iter().zip(coeffs) {
        y.iter_mut().zip(q).for_each(|(y, q)| *y += c * q);
    }
    let ny = norm2(&y);
    y.iter_mut().for_each(|x| *x /= ny);
    y
}
