//! Small dense kernels: element-level SPD solves and the rank-revealing
//! Cholesky used on Schur complements.

use crate::error::{Error, Result};

/// Solves `A x = b` for a small SPD matrix stored row-major; `b` holds `m`
/// right-hand sides row-major (`n x m`) and is overwritten with the solution.
pub fn spd_solve_in_place(a: &[f64], n: usize, b: &mut [f64], m: usize) -> Result<()> {
    let mut l = a.to_vec();
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Singular(format!("dense Cholesky pivot {j} is {d:e}")));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    for c in 0..m {
        for i in 0..n {
            let mut s = b[i * m + c];
            for k in 0..i {
                s -= l[i * n + k] * b[k * m + c];
            }
            b[i * m + c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i * m + c];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k * m + c];
            }
            b[i * m + c] = s / l[i * n + i];
        }
    }
    Ok(())
}

/// Cholesky with diagonal pivoting for symmetric positive semi-definite
/// matrices. Pivots below `rel_tol` times the largest initial diagonal are
/// treated as zero and the corresponding unknowns are fixed to zero.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    n: usize,
    rank: usize,
    perm: Vec<usize>,
    /// Lower factor in permuted ordering, `n x rank`, row-major with stride `n`.
    l: Vec<f64>,
}

impl PivotedCholesky {
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension(format!("expected {n}x{n} dense matrix")));
        }
        let mut w = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        if (0..n).any(|i| a[i * n + i] < -rel_tol * max_diag.max(f64::MIN_POSITIVE)) {
            return Err(Error::Singular("negative diagonal in semi-definite factorization".into()));
        }
        let threshold = rel_tol * max_diag;
        let mut rank = 0;
        for j in 0..n {
            // choose the largest remaining diagonal
            let (p, best) = (j..n)
                .map(|i| (i, w[i * n + i]))
                .fold((j, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(best > threshold) || best <= 0.0 {
                break;
            }
            if p != j {
                perm.swap(j, p);
                for c in 0..n {
                    w.swap(j * n + c, p * n + c);
                }
                for r in 0..n {
                    w.swap(r * n + j, r * n + p);
                }
            }
            let d = w[j * n + j].sqrt();
            w[j * n + j] = d;
            for i in (j + 1)..n {
                w[i * n + j] /= d;
            }
            for i in (j + 1)..n {
                let lij = w[i * n + j];
                if lij == 0.0 {
                    continue;
                }
                for k in (j + 1)..=i {
                    w[i * n + k] -= lij * w[k * n + j];
                }
            }
            // keep the trailing block symmetric (lower part is authoritative)
            for i in (j + 1)..n {
                for k in (j + 1)..i {
                    w[k * n + i] = w[i * n + k];
                }
            }
            rank += 1;
        }
        Ok(Self { n, rank, perm, l: w })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Original indices of the pivots that were kept.
    pub fn kept(&self) -> Vec<usize> {
        let mut k = self.perm[..self.rank].to_vec();
        k.sort_unstable();
        k
    }

    /// Solves with `m` right-hand sides stored row-major `n x m`, in place.
    pub fn solve_in_place(&self, b: &mut [f64], m: usize) {
        let n = self.n;
        let r = self.rank;
        let mut y = vec![0.0; n * m];
        for i in 0..n {
            y[i * m..(i + 1) * m].copy_from_slice(&b[self.perm[i] * m..(self.perm[i] + 1) * m]);
        }
        for c in 0..m {
            for i in 0..r {
                let mut s = y[i * m + c];
                for k in 0..i {
                    s -= self.l[i * n + k] * y[k * m + c];
                }
                y[i * m + c] = s / self.l[i * n + i];
            }
            for i in (0..r).rev() {
                let mut s = y[i * m + c];
                for k in (i + 1)..r {
                    s -= self.l[k * n + i] * y[k * m + c];
                }
                y[i * m + c] = s / self.l[i * n + i];
            }
            for i in r..n {
                y[i * m + c] = 0.0;
            }
        }
        for i in 0..n {
            b[self.perm[i] * m..(self.perm[i] + 1) * m].copy_from_slice(&y[i * m..(i + 1) * m]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spd_solve() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        for i in 0..3 {
            b[i] = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
        }
        spd_solve_in_place(&a, 3, &mut b, 1).unwrap();
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
        assert!(spd_solve_in_place(&[1.0, 2.0, 2.0, 1.0], 2, &mut [1.0, 1.0], 1).is_err());
    }

    #[test]
    fn pivoted_cholesky_handles_redundant_rows() {
        // rank-2 Gram matrix of vectors u, v, u+v
        let u = [1.0, 0.0, 2.0];
        let v = [0.0, 1.0, -1.0];
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let vecs = [u.to_vec(), v.to_vec(), w];
        let mut g = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                g[i * 3 + j] = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            }
        }
        let f = PivotedCholesky::factor(&g, 3, 1e-12).unwrap();
        assert_eq!(f.rank(), 2);
        // consistent right-hand side g * [1, 2, 0]
        let mut b: Vec<f64> = (0..3).map(|i| g[i * 3] + 2.0 * g[i * 3 + 1]).collect();
        let rhs = b.clone();
        f.solve_in_place(&mut b, 1);
        for i in 0..3 {
            let gx: f64 = (0..3).map(|j| g[i * 3 + j] * b[j]).sum();
            assert!((gx - rhs[i]).abs() < 1e-12 * rhs[i].abs().max(1.0));
        }
    }
}
