//! Error functionals between a fine reference trajectory and a prolonged
//! coarse trajectory, and the experimental order of convergence.
//!
//! All functionals work on fine nodal vectors over interior dofs. Relative
//! errors are normalized by the maximum over time of the reference norm. Two
//! spatial norms are tracked: the full H¹ norm and the energy norm
//! `‖v‖_a = a(v, v)^{1/2}` of the stiffness matrix.

use std::fmt;
use std::str::FromStr;

use crate::assembly::Norms;
use crate::dynamics::WaveTrajectory;
use crate::error::{Error, Result};
use crate::lod::MultiscaleBasis;
use crate::sparsela::SparseMatrix;

/// Fine vectors `B u^n` for every stored snapshot.
pub fn prolong(basis: &MultiscaleBasis, traj: &WaveTrajectory) -> Result<Vec<Vec<f64>>> {
    traj.snapshots.iter().map(|(_, u)| basis.prolong(u)).collect()
}

fn check_aligned(reference: &[Vec<f64>], other: &[Vec<f64>]) -> Result<()> {
    if reference.len() != other.len() {
        return Err(Error::Dimension(format!(
            "{} reference snapshots against {} snapshots",
            reference.len(),
            other.len()
        )));
    }
    Ok(())
}

fn difference(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// `max_n ‖u_ref^n − u^n‖₁ / max_n ‖u_ref^n‖₁`.
pub fn linf_h1_error(reference: &[Vec<f64>], approx: &[Vec<f64>], norms: &Norms) -> Result<f64> {
    check_aligned(reference, approx)?;
    let mut acc = ErrorAccumulator::new(norms, None, 1.0);
    for (r, a) in reference.iter().zip(approx) {
        acc.observe(r, a)?;
    }
    acc.relative_h1()
}

/// `max_n ‖u_ref^n − u^n‖_a / max_n ‖u_ref^n‖_a` for the stiffness matrix `a`.
pub fn linf_energy_error(reference: &[Vec<f64>], approx: &[Vec<f64>], a: &SparseMatrix) -> Result<f64> {
    check_aligned(reference, approx)?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (r, u) in reference.iter().zip(approx) {
        num = num.max(energy(a, &difference(r, u)?)?);
        den = den.max(energy(a, r)?);
    }
    if den == 0.0 {
        return Err(Error::UndefinedRelative);
    }
    Ok(num / den)
}

fn energy(a: &SparseMatrix, v: &[f64]) -> Result<f64> {
    let av = a.matvec(v)?;
    Ok(crate::sparsela::dot(v, &av).max(0.0).sqrt())
}

/// `max_{n≥1} ‖P (D_Δt u_ref^n − D_Δt u^n)‖₀` with the coarse unit-weight L² Gram.
pub fn dt_l2_error(reference: &[Vec<f64>], approx: &[Vec<f64>], dt: f64, p: &SparseMatrix, coarse_gram: &SparseMatrix) -> Result<f64> {
    check_aligned(reference, approx)?;
    if reference.len() < 2 {
        return Err(Error::Domain("time-difference error needs at least two snapshots".into()));
    }
    let mut worst = 0.0f64;
    let mut prev = difference(&reference[0], &approx[0])?;
    for (r, a) in reference.iter().zip(approx).skip(1) {
        let cur = difference(r, a)?;
        worst = worst.max(projected_rate(&prev, &cur, dt, p, coarse_gram)?);
        prev = cur;
    }
    Ok(worst)
}

fn projected_rate(prev: &[f64], cur: &[f64], dt: f64, p: &SparseMatrix, gram: &SparseMatrix) -> Result<f64> {
    let rate: Vec<f64> = cur.iter().zip(prev).map(|(c, p)| (c - p) / dt).collect();
    let coarse = p.matvec(&rate)?;
    let g = gram.matvec(&coarse)?;
    Ok(crate::sparsela::dot(&coarse, &g).max(0.0).sqrt())
}

/// `log2(e_H / e_{H/2})`.
pub fn eoc(coarse_error: f64, fine_error: f64) -> Result<f64> {
    if !(coarse_error > 0.0 && fine_error > 0.0) {
        return Err(Error::Domain(format!(
            "order of convergence needs positive errors, got {coarse_error} and {fine_error}"
        )));
    }
    Ok((coarse_error / fine_error).log2())
}

/// Mean of the orders between consecutive entries of an error sequence.
pub fn mean_eoc(errors: &[f64]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::Domain("mean order needs at least two errors".into()));
    }
    let orders = errors.windows(2).map(|w| eoc(w[0], w[1])).collect::<Result<Vec<_>>>()?;
    Ok(orders.iter().sum::<f64>() / orders.len() as f64)
}

/// Running maxima for a lockstep comparison; sees each aligned pair once.
pub struct ErrorAccumulator<'a> {
    norms: &'a Norms,
    /// `(P, coarse L² Gram)` for the time-difference term.
    projection: Option<(&'a SparseMatrix, &'a SparseMatrix)>,
    dt: f64,
    stiffness: Option<&'a SparseMatrix>,
    prev_diff: Option<Vec<f64>>,
    max_diff_h1: f64,
    max_ref_h1: f64,
    max_diff_energy: f64,
    max_ref_energy: f64,
    max_dt_l2: f64,
    observed: usize,
}

impl<'a> ErrorAccumulator<'a> {
    pub fn new(norms: &'a Norms, projection: Option<(&'a SparseMatrix, &'a SparseMatrix)>, dt: f64) -> Self {
        Self {
            norms,
            projection,
            dt,
            stiffness: None,
            prev_diff: None,
            max_diff_h1: 0.0,
            max_ref_h1: 0.0,
            max_diff_energy: 0.0,
            max_ref_energy: 0.0,
            max_dt_l2: 0.0,
            observed: 0,
        }
    }

    /// Also tracks the energy norm of `a`.
    pub fn with_energy(mut self, a: &'a SparseMatrix) -> Self {
        self.stiffness = Some(a);
        self
    }

    pub fn observe(&mut self, reference: &[f64], approx: &[f64]) -> Result<()> {
        let diff = difference(reference, approx)?;
        self.max_diff_h1 = self.max_diff_h1.max(self.norms.h1(&diff)?);
        self.max_ref_h1 = self.max_ref_h1.max(self.norms.h1(reference)?);
        if let Some(a) = self.stiffness {
            self.max_diff_energy = self.max_diff_energy.max(energy(a, &diff)?);
            self.max_ref_energy = self.max_ref_energy.max(energy(a, reference)?);
        }
        if let Some((p, gram)) = self.projection {
            if let Some(prev) = &self.prev_diff {
                self.max_dt_l2 = self.max_dt_l2.max(projected_rate(prev, &diff, self.dt, p, gram)?);
            }
            self.prev_diff = Some(diff);
        }
        self.observed += 1;
        Ok(())
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn absolute_h1(&self) -> f64 {
        self.max_diff_h1
    }

    pub fn relative_h1(&self) -> Result<f64> {
        if self.max_ref_h1 == 0.0 {
            return Err(Error::UndefinedRelative);
        }
        Ok(self.max_diff_h1 / self.max_ref_h1)
    }

    /// `None` unless the energy norm is tracked.
    pub fn relative_energy(&self) -> Option<Result<f64>> {
        self.stiffness.map(|_| {
            if self.max_ref_energy == 0.0 {
                Err(Error::UndefinedRelative)
            } else {
                Ok(self.max_diff_energy / self.max_ref_energy)
            }
        })
    }

    /// `None` without a projection or with fewer than two observations.
    pub fn dt_l2(&self) -> Option<f64> {
        (self.projection.is_some() && self.observed >= 2).then_some(self.max_dt_l2)
    }
}

/// Discretization variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    MllodWeighted,
    LodWeighted,
    MllodNaive,
    LodNaive,
    Fem,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::MllodWeighted,
        Variant::LodWeighted,
        Variant::MllodNaive,
        Variant::LodNaive,
        Variant::Fem,
    ];

    pub fn is_lumped(&self) -> bool {
        !matches!(self, Variant::LodWeighted | Variant::LodNaive)
    }

    pub fn uses_ell(&self) -> bool {
        !matches!(self, Variant::Fem)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::MllodWeighted => "mllod_weighted",
            Variant::LodWeighted => "lod_weighted",
            Variant::MllodNaive => "mllod_naive",
            Variant::LodNaive => "lod_naive",
            Variant::Fem => "fem",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub h_exponent: u32,
    /// `None` for the FEM baseline.
    pub ell: Option<String>,
    pub variant: Variant,
    pub rel_err_h1: f64,
    /// Relative error in the energy norm of the fine stiffness matrix.
    pub rel_err_energy: Option<f64>,
    pub err_dt_l2: f64,
    /// Order of `rel_err_h1` against the next coarser H.
    pub eoc: Option<f64>,
    pub eoc_energy: Option<f64>,
    pub offline_seconds: Option<f64>,
    pub online_seconds: Option<f64>,
}

/// Fills the orders of each record from the record of the same curve at the next coarser H.
pub fn attach_eocs(records: &mut [ErrorRecord]) {
    let keys: Vec<(Variant, Option<String>, u32, f64, Option<f64>)> = records
        .iter()
        .map(|r| (r.variant, r.ell.clone(), r.h_exponent, r.rel_err_h1, r.rel_err_energy))
        .collect();
    for r in records.iter_mut() {
        let prev = keys
            .iter()
            .find(|(v, l, k, _, _)| *v == r.variant && *l == r.ell && *k + 1 == r.h_exponent);
        r.eoc = prev.and_then(|p| eoc(p.3, r.rel_err_h1).ok());
        r.eoc_energy = prev.and_then(|p| eoc(p.4?, r.rel_err_energy?).ok());
    }
}
