//! Element correctors: for coarse element `e` and each interior vertex `j` of
//! `e`, the fine function `q` on the patch `N^ℓ(e)` with `Pq = 0` and
//! `a(q, w) = ∫_e α∇φ_j·∇w` for every patch function `w` in the kernel of `P`.

use crate::assembly::{sub_element_ids, SubElementTables, Q1_STIFFNESS};
use crate::error::{Error, Result};
use crate::grid::{element_patch, level_ratio, ElemRect, MeshLevel, CORNERS};
use crate::sparsela::{schur_direct, verify_saddle, BandedCholesky, BandedMatrix, SparseMatrix};

use super::Ell;

/// Shared read-only data of all corrector problems on one level pair.
pub struct CorrectorContext<'a> {
    pub coarse: MeshLevel,
    pub fine: MeshLevel,
    /// Fine stiffness over fine interior dofs.
    pub a_fine: &'a SparseMatrix,
    /// The quasi-interpolation, coarse dofs × fine dofs.
    pub p: &'a SparseMatrix,
    /// Per-fine-element α.
    pub alpha: &'a [f64],
    ratio: usize,
    tables: SubElementTables,
}

impl<'a> CorrectorContext<'a> {
    pub fn new(coarse: &MeshLevel, fine: &MeshLevel, a_fine: &'a SparseMatrix, p: &'a SparseMatrix, alpha: &'a [f64]) -> Result<Self> {
        let ratio = level_ratio(coarse, fine)?;
        if a_fine.n_rows() != fine.n_dofs() || p.n_rows() != coarse.n_dofs() || p.n_cols() != fine.n_dofs() || alpha.len() != fine.n_elems() {
            return Err(Error::Dimension("corrector operands do not match the mesh pair".into()));
        }
        Ok(Self {
            coarse: *coarse,
            fine: *fine,
            a_fine,
            p,
            alpha,
            ratio,
            tables: SubElementTables::new(ratio),
        })
    }
}

/// Correctors of one coarse element, one column per interior vertex.
#[derive(Debug, Clone)]
pub struct ElementCorrector {
    pub element: usize,
    /// Global fine dofs of the patch interior, row-major.
    pub patch_dofs: Vec<usize>,
    /// `(coarse dof j, values of q_{e,j} on patch_dofs)`.
    pub columns: Vec<(usize, Vec<f64>)>,
    pub constraints: usize,
    pub kept_constraints: usize,
}

/// Patch region on the fine level and a map from fine grid coordinates to local indices.
struct FinePatch {
    rect: ElemRect,
    inner_w: usize,
}

impl FinePatch {
    fn local(&self, ix: usize, iy: usize) -> Option<usize> {
        let r = &self.rect;
        if ix > r.x0 && ix < r.x1 && iy > r.y0 && iy < r.y1 {
            Some((iy - r.y0 - 1) * self.inner_w + (ix - r.x0 - 1))
        } else {
            None
        }
    }
}

pub fn element_corrector(ctx: &CorrectorContext<'_>, e: usize, ell: Ell) -> Result<ElementCorrector> {
    let (coarse, fine) = (&ctx.coarse, &ctx.fine);
    let patch = element_patch(coarse, e, ell.order(coarse))?;
    let patch_dofs = patch.fine_interior_dofs(coarse, fine)?;
    let frect = patch.rect.refined(ctx.ratio);
    let fp = FinePatch {
        rect: frect,
        inner_w: frect.width() - 1,
    };
    let n = patch_dofs.len();
    let local_of_dof = |d: usize| {
        let (ix, iy) = fine.dof_coords(d);
        fp.local(ix, iy)
    };

    let a_p = ctx.a_fine.select(&patch_dofs, &local_of_dof, n);
    // coarse nodes whose basis support meets the patch
    let crect = patch.rect;
    let mut rows = Vec::new();
    for iy in crect.y0..=crect.y1 {
        for ix in crect.x0..=crect.x1 {
            if let Some(d) = coarse.dof_at(ix, iy) {
                rows.push(d);
            }
        }
    }
    let c = ctx.p.select(&rows, &local_of_dof, n);

    // right-hand sides ∫_e α∇φ_a·∇ψ_k for the interior corners of e
    let coarse_dofs = coarse.elem_dofs(e);
    let active: Vec<(usize, usize)> = (0..4).filter_map(|a| coarse_dofs[a].map(|j| (a, j))).collect();
    let m = active.len();
    let mut columns = Vec::with_capacity(m);
    if m == 0 || n == 0 {
        return Ok(ElementCorrector {
            element: e,
            patch_dofs,
            columns: active.into_iter().map(|(_, j)| (j, vec![0.0; n])).collect(),
            constraints: rows.len(),
            kept_constraints: 0,
        });
    }
    let r = ctx.ratio;
    let (ex, ey) = coarse.elem_coords(e);
    let mut rhs = vec![0.0; n * m];
    for (s, t) in sub_element_ids(coarse, fine, r, e).enumerate() {
        let (fx, fy) = (ex * r + s % r, ey * r + s / r);
        let alpha = ctx.alpha[t];
        for (k, &(dx, dy)) in CORNERS.iter().enumerate() {
            let Some(li) = fp.local(fx + dx, fy + dy) else { continue };
            for (col, &(a, _)) in active.iter().enumerate() {
                let mut v = 0.0;
                for l in 0..4 {
                    v += ctx.tables.transfer[s][a][l] * Q1_STIFFNESS[l][k];
                }
                rhs[li * m + col] += alpha * v;
            }
        }
    }

    let flag = |err: Error| Error::Singular(format!("corrector patch of coarse element {e}: {err}"));
    let band = BandedMatrix::from_sparse(&a_p).map_err(flag)?;
    let chol = BandedCholesky::factor(&band).map_err(flag)?;
    let (q, lambda, kept) = schur_direct(&chol, &c, &rhs, m).map_err(flag)?;
    verify_saddle(
        &|x, m| band.matvec_many(x, m),
        &|x, m| band.abs_matvec_many(x, m),
        &c,
        &q,
        &lambda,
        &rhs,
        m,
    )
    .map_err(flag)?;
    for (col, &(_, j)) in active.iter().enumerate() {
        columns.push((j, (0..n).map(|i| q[i * m + col]).collect()));
    }
    Ok(ElementCorrector {
        element: e,
        patch_dofs,
        columns,
        constraints: rows.len(),
        kept_constraints: kept.len(),
    })
}
