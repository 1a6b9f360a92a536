//! Symmetric banded storage and Cholesky factorization.
//!
//! Patch stiffness matrices in row-major node order have half-bandwidth equal
//! to the patch width plus one, so a band factorization is the natural direct
//! solver for them.

use crate::error::{Error, Result};

use super::csr::SparseMatrix;

/// Lower band of a symmetric matrix: row `i` stores columns `i-bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Lower band of a symmetric sparse matrix; entries above the diagonal are ignored.
    pub fn from_sparse(a: &SparseMatrix) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::Dimension("banded storage needs a square matrix".into()));
        }
        let bw = (0..a.n_rows())
            .flat_map(|i| a.row(i).filter(move |&(j, _)| j <= i).map(move |(j, _)| i - j))
            .max()
            .unwrap_or(0);
        let mut b = Self::zeros(a.n_rows(), bw);
        for i in 0..a.n_rows() {
            for (j, v) in a.row(i) {
                if j <= i {
                    b.set(i, j, v);
                }
            }
        }
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Sets entry `(i, j)` with `j <= i`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// `y = A x` for `m` vectors stored row-major `n x m`.
    pub fn matvec_many(&self, x: &[f64], m: usize) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut y = vec![0.0; n * m];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let a = self.data[i * (bw + 1) + (j + bw - i)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..m {
                    y[i * m + c] += a * x[j * m + c];
                }
                if j != i {
                    for c in 0..m {
                        y[j * m + c] += a * x[i * m + c];
                    }
                }
            }
        }
        y
    }

    /// `|A| |x|` entrywise, used as a rounding-scale reference for residuals.
    pub fn abs_matvec_many(&self, x: &[f64], m: usize) -> Vec<f64> {
        let abs = BandedMatrix {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|v| v.abs()).collect(),
        };
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        abs.matvec_many(&ax, m)
    }
}

/// Cholesky factor `L` of a banded SPD matrix; `L` has the same band.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedMatrix,
}

impl BandedCholesky {
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let mut l = a.clone();
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(bw));
                let mut s = l.data[i * w + (j + bw - i)];
                {
                    let li = &l.data[i * w + (k0 + bw - i)..i * w + (j + bw - i)];
                    let lj = &l.data[j * w + (k0 + bw - j)..j * w + bw];
                    s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Singular(format!("banded Cholesky pivot {i} is {s:e}")));
                    }
                    l.data[i * w + bw] = s.sqrt();
                } else {
                    l.data[i * w + (j + bw - i)] = s / l.data[j * w + bw];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn n(&self) -> usize {
        self.l.n
    }

    /// Solves `A X = B` in place for `m` right-hand sides stored row-major `n x m`.
    pub fn solve_many(&self, b: &mut [f64], m: usize) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let data = &self.l.data;
        debug_assert_eq!(b.len(), n * m);
        // forward: L y = b
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            let (head, tail) = b.split_at_mut(i * m);
            let row = &mut tail[..m];
            for k in i0..i {
                let lik = data[i * w + (k + bw - i)];
                if lik == 0.0 {
                    continue;
                }
                let yk = &head[k * m..(k + 1) * m];
                for (r, y) in row.iter_mut().zip(yk) {
                    *r -= lik * y;
                }
            }
            let d = 1.0 / data[i * w + bw];
            row.iter_mut().for_each(|r| *r *= d);
        }
        // backward: Lᵀ x = y, sweeping rows of L
        for i in (0..n).rev() {
            let d = 1.0 / data[i * w + bw];
            let (head, tail) = b.split_at_mut(i * m);
            let xi = &mut tail[..m];
            xi.iter_mut().for_each(|r| *r *= d);
            let i0 = i.saturating_sub(bw);
            for k in i0..i {
                let lik = data[i * w + (k + bw - i)];
                if lik == 0.0 {
                    continue;
                }
                let yk = &mut head[k * m..(k + 1) * m];
                for (y, x) in yk.iter_mut().zip(xi.iter()) {
                    *y -= lik * x;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_many(&mut x, 1);
        x
    }
}
