//! Localized multiscale basis: element correctors, the corrected basis matrix
//! `B = E − Q`, the coarse stiffness `K = Bᵀ A B` and the lumped operator.

mod cache;
mod corrector;

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{lumped_mass_from_values, mass_from_values, stiffness_from_values, Norms};
use crate::coeff::{values_on_fine, CoefficientField};
use crate::error::{Error, Result};
use crate::grid::{level_ratio, MeshLevel};
use crate::interp::{build_pi_from_values, AveragingMode, InterpOperator};
use crate::sparsela::SparseMatrix;

pub use cache::{load_basis, save_basis, BasisKey};
pub use corrector::{element_corrector, CorrectorContext, ElementCorrector};

/// Localization order; `Infinite` means every patch is the whole domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ell {
    Finite(usize),
    Infinite,
}

impl Ell {
    /// Patch order on `mesh`; infinite saturates at the mesh diameter.
    pub fn order(&self, mesh: &MeshLevel) -> usize {
        match *self {
            Ell::Finite(l) => l,
            Ell::Infinite => mesh.n_elems_per_axis(),
        }
    }
}

impl fmt::Display for Ell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ell::Finite(l) => write!(f, "{l}"),
            Ell::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Ell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" => Ok(Ell::Infinite),
            t => match t.parse::<usize>() {
                Ok(l) if l >= 1 => Ok(Ell::Finite(l)),
                _ => Err(Error::Config(format!("invalid localization order '{t}'"))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiscaleBasis {
    pub ell: Ell,
    pub mode: AveragingMode,
    pub coarse: MeshLevel,
    pub fine: MeshLevel,
    /// Fine dofs × coarse dofs; column `i` holds the corrected basis function `Sφ_i`.
    pub b: SparseMatrix,
    /// `Bᵀ A_h B`, exactly symmetric.
    pub k: SparseMatrix,
    /// `∫ β φ_i` on the coarse level.
    pub m: Vec<f64>,
    /// `Bᵀ M_h B`.
    pub m_ms: SparseMatrix,
    pub interp: InterpOperator,
    pub offline_seconds: f64,
}

/// Fine-level data shared by every basis built on one coefficient pair.
#[derive(Debug, Clone)]
pub struct FineProblem {
    pub fine: MeshLevel,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub a_fine: SparseMatrix,
    pub m_fine: SparseMatrix,
    pub alpha_digest: String,
    pub beta_digest: String,
}

impl FineProblem {
    pub fn new(fine: &MeshLevel, alpha: &CoefficientField, beta: &CoefficientField) -> Result<Self> {
        let a = values_on_fine(alpha, fine)?;
        let b = values_on_fine(beta, fine)?;
        Ok(Self {
            fine: *fine,
            a_fine: stiffness_from_values(fine, fine, &a)?,
            m_fine: mass_from_values(fine, fine, &b)?,
            alpha: a,
            beta: b,
            alpha_digest: alpha.digest(),
            beta_digest: beta.digest(),
        })
    }
}

pub fn build_basis(
    coarse: &MeshLevel,
    fine: &MeshLevel,
    alpha: &CoefficientField,
    beta: &CoefficientField,
    ell: Ell,
    mode: AveragingMode,
) -> Result<MultiscaleBasis> {
    let problem = FineProblem::new(fine, alpha, beta)?;
    build_basis_on(&problem, coarse, ell, mode)
}

pub fn build_basis_on(problem: &FineProblem, coarse: &MeshLevel, ell: Ell, mode: AveragingMode) -> Result<MultiscaleBasis> {
    let start = Instant::now();
    let fine = problem.fine;
    let ratio = level_ratio(coarse, &fine)?;
    let interp = build_pi_from_values(coarse, &fine, &problem.beta, mode, problem.beta_digest.clone())?;
    let m = lumped_mass_from_values(coarse, &fine, &problem.beta)?;
    let b = if ratio == 1 {
        SparseMatrix::identity(fine.n_dofs())
    } else {
        let ctx = CorrectorContext::new(coarse, &fine, &problem.a_fine, &interp.p, &problem.alpha)?;
        let correctors: Vec<ElementCorrector> = (0..coarse.n_elems())
            .into_par_iter()
            .map(|e| element_corrector(&ctx, e, ell))
            .collect::<Result<_>>()?;
        assemble_b(&interp.e, &correctors)?
    };
    let (k, m_ms) = if ratio == 1 {
        (problem.a_fine.clone(), problem.m_fine.clone())
    } else {
        (
            SparseMatrix::triple_product(&b, &problem.a_fine)?,
            SparseMatrix::triple_product(&b, &problem.m_fine)?,
        )
    };
    Ok(MultiscaleBasis {
        ell,
        mode,
        coarse: *coarse,
        fine,
        b,
        k,
        m,
        m_ms,
        interp,
        offline_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `B = E − Σ_e Q_e`, accumulated in canonical element order.
fn assemble_b(e: &SparseMatrix, correctors: &[ElementCorrector]) -> Result<SparseMatrix> {
    let nnz: usize = correctors.iter().map(|c| c.columns.len() * c.patch_dofs.len()).sum();
    let mut triplets = Vec::with_capacity(e.nnz() + nnz);
    for i in 0..e.n_rows() {
        for (j, v) in e.row(i) {
            triplets.push((i, j, v));
        }
    }
    for c in correctors {
        for (j, q) in &c.columns {
            for (&d, &v) in c.patch_dofs.iter().zip(q) {
                if v != 0.0 {
                    triplets.push((d, *j, -v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(e.n_rows(), e.n_cols(), &triplets)
}

impl MultiscaleBasis {
    /// `m⁻¹ K u`; a matvec and a diagonal scaling only.
    pub fn lumped_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.k.matvec(u)?;
        y.iter_mut().zip(&self.m).for_each(|(y, m)| *y /= m);
        Ok(y)
    }

    /// Fine nodal values of `S u`.
    pub fn prolong(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.b.matvec(u)
    }
}

/// `lumped_apply` as a free function for symmetry with the other operations.
pub fn lumped_apply(basis: &MultiscaleBasis, u: &[f64]) -> Result<Vec<f64>> {
    basis.lumped_apply(u)
}

#[derive(Debug, Clone)]
pub struct DecayStudy {
    pub ells: Vec<usize>,
    /// `gaps[v][ℓ]`: `|S v − S^ℓ v|₁` for each probe vector.
    pub gaps: Vec<Vec<f64>>,
    /// Least-squares slope of `ln gap` per unit ℓ, averaged over probes.
    pub log_rate: f64,
}

pub fn decay_study(
    problem: &FineProblem,
    coarse: &MeshLevel,
    mode: AveragingMode,
    probes: &[Vec<f64>],
    ells: &[usize],
) -> Result<DecayStudy> {
    if ells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("localization orders must be strictly ascending".into()));
    }
    let norms = Norms::new(&problem.fine)?;
    let global = build_basis_on(problem, coarse, Ell::Infinite, mode)?;
    let exact: Vec<Vec<f64>> = probes.iter().map(|v| global.b.matvec(v)).collect::<Result<_>>()?;
    let mut gaps = vec![Vec::with_capacity(ells.len()); probes.len()];
    for &l in ells {
        let basis = build_basis_on(problem, coarse, Ell::Finite(l), mode)?;
        for (p, v) in probes.iter().enumerate() {
            let sv = basis.b.matvec(v)?;
            let diff: Vec<f64> = sv.iter().zip(&exact[p]).map(|(a, b)| a - b).collect();
            gaps[p].push(norms.h1_semi(&diff)?);
        }
    }
    let mut slopes = Vec::new();
    for g in &gaps {
        let pts: Vec<(f64, f64)> = ells
            .iter()
            .zip(g)
            .filter(|p| *p.1 > 0.0)
            .map(|(&l, &v)| (l as f64, v.ln()))
            .collect();
        if pts.len() >= 2 {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            slopes.push(sxy / sxx);
        }
    }
    let log_rate = if slopes.is_empty() {
        f64::NEG_INFINITY
    } else {
        slopes.iter().sum::<f64>() / slopes.len() as f64
    };
    Ok(DecayStudy {
        ells: ells.to_vec(),
        gaps,
        log_rate,
    })
}
