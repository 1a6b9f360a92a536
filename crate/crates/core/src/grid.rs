//! Structured dyadic meshes of the unit square.
//!
//! A level `k` mesh has `2^k x 2^k` square elements of width `2^-k`. Nodes and
//! elements are numbered row-major starting at the bottom-left corner, and the
//! local vertex order of an element is counter-clockwise from its lower-left
//! vertex. Interior nodes additionally carry a compact "dof" numbering that is
//! again row-major; every matrix in the crate acts on that numbering.

use crate::error::{Error, Result};

/// Largest supported exponent. `4^14` elements is already far beyond desk scale.
pub const MAX_EXPONENT: u32 = 14;

/// Local vertex offsets `(dx, dy)` in counter-clockwise order.
pub const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshLevel {
    exponent: u32,
    n: usize,
}

impl MeshLevel {
    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    /// Elements per axis, `2^k`.
    pub fn n_elems_per_axis(&self) -> usize {
        self.n
    }

    pub fn n_nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Mesh width `2^-k`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn n_elems(&self) -> usize {
        self.n * self.n
    }

    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// Number of interior nodes, i.e. degrees of freedom with zero Dirichlet data.
    pub fn n_dofs(&self) -> usize {
        let m = self.n.saturating_sub(1);
        m * m
    }

    pub fn elem_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    pub fn elem_coords(&self, e: usize) -> (usize, usize) {
        (e % self.n, e / self.n)
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.n + 1) + ix
    }

    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        (node % (self.n + 1), node / (self.n + 1))
    }

    pub fn node_position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.h(), iy as f64 * self.h())
    }

    pub fn is_boundary_node(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.n || iy == self.n
    }

    /// Dof number of an interior node given by grid coordinates.
    pub fn dof_at(&self, ix: usize, iy: usize) -> Option<usize> {
        if self.is_boundary_node(ix, iy) {
            None
        } else {
            Some((iy - 1) * (self.n - 1) + (ix - 1))
        }
    }

    /// Grid coordinates of a dof.
    pub fn dof_coords(&self, dof: usize) -> (usize, usize) {
        let m = self.n - 1;
        (dof % m + 1, dof / m + 1)
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        let (ix, iy) = self.node_coords(node);
        self.dof_at(ix, iy)
    }

    /// Interior node ids in row-major order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_dofs())
            .map(|d| {
                let (ix, iy) = self.dof_coords(d);
                self.node_index(ix, iy)
            })
            .collect()
    }

    /// The four vertex node ids of element `e`, counter-clockwise.
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = self.elem_coords(e);
        CORNERS.map(|(dx, dy)| self.node_index(ex + dx, ey + dy))
    }

    /// Vertex dofs of element `e`; `None` for vertices on the boundary.
    pub fn elem_dofs(&self, e: usize) -> [Option<usize>; 4] {
        let (ex, ey) = self.elem_coords(e);
        CORNERS.map(|(dx, dy)| self.dof_at(ex + dx, ey + dy))
    }

    /// Elements whose closure contains the node `(ix, iy)`, with the local
    /// vertex number of the node in each.
    pub fn elems_around_node(&self, ix: usize, iy: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        for (local, &(dx, dy)) in CORNERS.iter().enumerate() {
            if ix >= dx && iy >= dy {
                let (ex, ey) = (ix - dx, iy - dy);
                if ex < self.n && ey < self.n {
                    out.push((self.elem_index(ex, ey), local));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn build_level(k: u32) -> Result<MeshLevel> {
    if k > MAX_EXPONENT {
        return Err(Error::Bounds {
            what: "mesh exponent",
            value: k as i64,
            lo: 0,
            hi: MAX_EXPONENT as i64,
        });
    }
    Ok(MeshLevel {
        exponent: k,
        n: 1usize << k,
    })
}

/// Half-open rectangle of elements `[x0, x1) x [y0, y1)` in element coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElemRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl ElemRect {
    pub fn contains(&self, ex: usize, ey: usize) -> bool {
        ex >= self.x0 && ex < self.x1 && ey >= self.y0 && ey < self.y1
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    /// Same region expressed in elements of a level refined by `ratio` per axis.
    pub fn refined(&self, ratio: usize) -> ElemRect {
        ElemRect {
            x0: self.x0 * ratio,
            x1: self.x1 * ratio,
            y0: self.y0 * ratio,
            y1: self.y1 * ratio,
        }
    }
}

/// The order-`ℓ` element neighbourhood `N^ℓ(e)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchIndexSet {
    pub center: usize,
    pub order: usize,
    pub rect: ElemRect,
    pub elements: Vec<usize>,
}

impl PatchIndexSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, mesh: &MeshLevel, e: usize) -> bool {
        let (ex, ey) = mesh.elem_coords(e);
        self.rect.contains(ex, ey)
    }

    /// Dofs of `fine` strictly inside the patch region. Functions supported on
    /// the patch vanish on its boundary, so these are exactly the free values
    /// of a fine function living on the patch.
    pub fn fine_interior_dofs(&self, coarse: &MeshLevel, fine: &MeshLevel) -> Result<Vec<usize>> {
        let ratio = level_ratio(coarse, fine)?;
        let r = self.rect.refined(ratio);
        let mut dofs = Vec::with_capacity((r.width().saturating_sub(1)) * (r.height().saturating_sub(1)));
        for iy in (r.y0 + 1)..r.y1 {
            for ix in (r.x0 + 1)..r.x1 {
                if let Some(d) = fine.dof_at(ix, iy) {
                    dofs.push(d);
                }
            }
        }
        Ok(dofs)
    }
}

/// All elements within Chebyshev index distance `order` of `e`, clipped to the domain.
/// On a tensor mesh this coincides with the closure-overlap recursion `N(N^{ℓ-1}(e))`.
pub fn element_patch(mesh: &MeshLevel, e: usize, order: usize) -> Result<PatchIndexSet> {
    if e >= mesh.n_elems() {
        return Err(Error::Bounds {
            what: "element id",
            value: e as i64,
            lo: 0,
            hi: mesh.n_elems() as i64 - 1,
        });
    }
    if order == 0 {
        return Err(Error::Bounds {
            what: "patch order",
            value: 0,
            lo: 1,
            hi: i64::MAX,
        });
    }
    let n = mesh.n_elems_per_axis();
    let (ex, ey) = mesh.elem_coords(e);
    let rect = ElemRect {
        x0: ex.saturating_sub(order),
        x1: (ex.saturating_add(order).saturating_add(1)).min(n),
        y0: ey.saturating_sub(order),
        y1: (ey.saturating_add(order).saturating_add(1)).min(n),
    };
    let mut elements = Vec::with_capacity(rect.width() * rect.height());
    for iy in rect.y0..rect.y1 {
        for ix in rect.x0..rect.x1 {
            elements.push(mesh.elem_index(ix, iy));
        }
    }
    Ok(PatchIndexSet {
        center: e,
        order,
        rect,
        elements,
    })
}

/// Per-axis refinement factor `2^(k_fine - k_coarse)`; requires `fine` at least as fine.
pub fn level_ratio(coarse: &MeshLevel, fine: &MeshLevel) -> Result<usize> {
    if fine.exponent() < coarse.exponent() {
        return Err(Error::Nesting(format!(
            "level {} is coarser than level {}",
            fine.exponent(),
            coarse.exponent()
        )));
    }
    Ok(1usize << (fine.exponent() - coarse.exponent()))
}

/// Map from each coarse element to the fine elements it contains (row-major).
pub fn refine_map(coarse: &MeshLevel, fine: &MeshLevel) -> Result<Vec<Vec<usize>>> {
    if fine.exponent() <= coarse.exponent() {
        return Err(Error::Nesting(format!(
            "fine level {} must be strictly finer than coarse level {}",
            fine.exponent(),
            coarse.exponent()
        )));
    }
    let ratio = level_ratio(coarse, fine)?;
    Ok((0..coarse.n_elems())
        .map(|e| sub_elements(coarse, fine, ratio, e))
        .collect())
}

/// Fine elements inside coarse element `e` in row-major order.
pub(crate) fn sub_elements(coarse: &MeshLevel, fine: &MeshLevel, ratio: usize, e: usize) -> Vec<usize> {
    let (ex, ey) = coarse.elem_coords(e);
    let mut out = Vec::with_capacity(ratio * ratio);
    for sy in 0..ratio {
        for sx in 0..ratio {
            out.push(fine.elem_index(ex * ratio + sx, ey * ratio + sy));
        }
    }
    out
}
