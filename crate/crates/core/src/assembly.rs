//! Exact Q1 assembly on any mesh level with coefficients resolved on a finer
//! level. Every integral is a sum over fine elements of closed-form reference
//! matrices scaled by the constant coefficient value on that fine element.

use crate::coeff::{values_on_fine, CoefficientField};
use crate::error::{Error, Result};
use crate::grid::{level_ratio, MeshLevel, CORNERS};
use crate::sparsela::SparseMatrix;

/// Q1 stiffness on a square (size independent in 2D), counter-clockwise corners.
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 mass on a square of width `h`, divided by `h²`.
pub const Q1_MASS_UNIT: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Value of the local bilinear shape function `a` at reference point `(x, y)` in `[0,1]²`.
pub fn shape_value(a: usize, x: f64, y: f64) -> f64 {
    let (ax, ay) = CORNERS[a];
    let fx = if ax == 1 { x } else { 1.0 - x };
    let fy = if ay == 1 { y } else { 1.0 - y };
    fx * fy
}

/// Per-sub-element integrals of products of coarse shape functions, for a
/// coarse element split into `ratio x ratio` fine elements (row-major offsets).
#[derive(Debug, Clone)]
pub(crate) struct SubElementTables {
    pub ratio: usize,
    /// `T[s][a][k]`: coarse shape `a` at fine corner `k` of sub-element `s`.
    pub transfer: Vec<[[f64; 4]; 4]>,
    /// `T Kref Tᵀ` per sub-element.
    pub stiffness: Vec<[[f64; 4]; 4]>,
    /// `T Mref Tᵀ / h²` per sub-element.
    pub mass_unit: Vec<[[f64; 4]; 4]>,
    /// `∫ φ_a / h²` over each sub-element.
    pub load_unit: Vec<[f64; 4]>,
}

impl SubElementTables {
    pub fn new(ratio: usize) -> Self {
        let r = ratio as f64;
        let mut transfer = Vec::with_capacity(ratio * ratio);
        let mut stiffness = Vec::with_capacity(ratio * ratio);
        let mut mass_unit = Vec::with_capacity(ratio * ratio);
        let mut load_unit = Vec::with_capacity(ratio * ratio);
        for sy in 0..ratio {
            for sx in 0..ratio {
                let mut t = [[0.0; 4]; 4];
                for (a, row) in t.iter_mut().enumerate() {
                    for (k, &(dx, dy)) in CORNERS.iter().enumerate() {
                        row[k] = shape_value(a, (sx + dx) as f64 / r, (sy + dy) as f64 / r);
                    }
                }
                stiffness.push(congruence(&t, &Q1_STIFFNESS));
                mass_unit.push(congruence(&t, &Q1_MASS_UNIT));
                load_unit.push(t.map(|row| row.iter().sum::<f64>() / 4.0));
                transfer.push(t);
            }
        }
        Self {
            ratio,
            transfer,
            stiffness,
            mass_unit,
            load_unit,
        }
    }
}

fn congruence(t: &[[f64; 4]; 4], m: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for k in 0..4 {
                for l in 0..4 {
                    s += t[a][k] * m[k][l] * t[b][l];
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Fine element indices of coarse element `e`, aligned with [`SubElementTables`].
pub(crate) fn sub_element_ids(mesh: &MeshLevel, fine: &MeshLevel, ratio: usize, e: usize) -> impl Iterator<Item = usize> {
    let (ex, ey) = mesh.elem_coords(e);
    let fine = *fine;
    (0..ratio * ratio).map(move |s| fine.elem_index(ex * ratio + s % ratio, ey * ratio + s / ratio))
}

#[derive(Debug, Clone, Copy)]
enum Form {
    Stiffness,
    Mass,
}

fn checked_ratio(mesh: &MeshLevel, fine: &MeshLevel, values: &[f64]) -> Result<usize> {
    let ratio = level_ratio(mesh, fine)?;
    if values.len() != fine.n_elems() {
        return Err(Error::Dimension(format!(
            "{} coefficient values for {} fine elements",
            values.len(),
            fine.n_elems()
        )));
    }
    Ok(ratio)
}

/// Element matrices of `mesh`, each accumulated exactly over its fine sub-elements.
fn element_matrix(tables: &SubElementTables, form: Form, fine_ids: impl Iterator<Item = usize>, values: &[f64], h2: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (s, t) in fine_ids.enumerate() {
        let (local, scale) = match form {
            Form::Stiffness => (&tables.stiffness[s], values[t]),
            Form::Mass => (&tables.mass_unit[s], values[t] * h2),
        };
        for a in 0..4 {
            for b in 0..4 {
                out[a][b] += scale * local[a][b];
            }
        }
    }
    out
}

fn assemble(mesh: &MeshLevel, fine: &MeshLevel, values: &[f64], form: Form) -> Result<SparseMatrix> {
    let ratio = checked_ratio(mesh, fine, values)?;
    let tables = SubElementTables::new(ratio);
    let h2 = fine.h() * fine.h();
    let n = mesh.n_dofs();
    let mut triplets = Vec::with_capacity(16 * mesh.n_elems());
    for e in 0..mesh.n_elems() {
        let local = element_matrix(&tables, form, sub_element_ids(mesh, fine, ratio, e), values, h2);
        let dofs = mesh.elem_dofs(e);
        for a in 0..4 {
            let Some(i) = dofs[a] else { continue };
            for b in 0..4 {
                if let Some(j) = dofs[b] {
                    triplets.push((i, j, local[a][b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)?.mark_symmetric()
}

/// `∫ α ∇φ_i · ∇φ_j` over interior nodes of `mesh`, given per-fine-element α.
pub fn stiffness_from_values(mesh: &MeshLevel, fine: &MeshLevel, alpha: &[f64]) -> Result<SparseMatrix> {
    assemble(mesh, fine, alpha, Form::Stiffness)
}

/// `∫ β φ_i φ_j` over interior nodes of `mesh`, given per-fine-element β.
pub fn mass_from_values(mesh: &MeshLevel, fine: &MeshLevel, beta: &[f64]) -> Result<SparseMatrix> {
    assemble(mesh, fine, beta, Form::Mass)
}

/// `∫ β φ_i` for every node of `mesh` (boundary included), given per-fine-element β.
pub fn node_loads_from_values(mesh: &MeshLevel, fine: &MeshLevel, beta: &[f64]) -> Result<Vec<f64>> {
    let ratio = checked_ratio(mesh, fine, beta)?;
    let tables = SubElementTables::new(ratio);
    let h2 = fine.h() * fine.h();
    let mut out = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elems() {
        let nodes = mesh.elem_nodes(e);
        for (s, t) in sub_element_ids(mesh, fine, ratio, e).enumerate() {
            for a in 0..4 {
                out[nodes[a]] += beta[t] * h2 * tables.load_unit[s][a];
            }
        }
    }
    Ok(out)
}

/// `m_i = ∫ β φ_i` restricted to interior nodes.
pub fn lumped_mass_from_values(mesh: &MeshLevel, fine: &MeshLevel, beta: &[f64]) -> Result<Vec<f64>> {
    let loads = node_loads_from_values(mesh, fine, beta)?;
    Ok(mesh.interior_nodes().into_iter().map(|node| loads[node]).collect())
}

pub fn assemble_stiffness(mesh: &MeshLevel, fine: &MeshLevel, alpha: &CoefficientField) -> Result<SparseMatrix> {
    level_ratio(mesh, fine)?;
    stiffness_from_values(mesh, fine, &values_on_fine(alpha, fine)?)
}

pub fn assemble_mass(mesh: &MeshLevel, fine: &MeshLevel, beta: &CoefficientField) -> Result<SparseMatrix> {
    level_ratio(mesh, fine)?;
    mass_from_values(mesh, fine, &values_on_fine(beta, fine)?)
}

pub fn assemble_lumped_mass(mesh: &MeshLevel, fine: &MeshLevel, beta: &CoefficientField) -> Result<Vec<f64>> {
    level_ratio(mesh, fine)?;
    lumped_mass_from_values(mesh, fine, &values_on_fine(beta, fine)?)
}

/// Nodal values `g(x_i, t)` at interior nodes of `mesh`.
pub fn nodal_function(mesh: &MeshLevel, g: &dyn Fn(f64, f64, f64) -> f64, t: f64) -> Vec<f64> {
    (0..mesh.n_dofs())
        .map(|d| {
            let (ix, iy) = mesh.dof_coords(d);
            let (x, y) = mesh.node_position(ix, iy);
            g(x, y, t)
        })
        .collect()
}

/// Stiffness, consistent mass and lumped mass of one mesh level.
#[derive(Debug, Clone)]
pub struct FemOperatorSet {
    pub mesh: MeshLevel,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub lumped: Vec<f64>,
    /// Human-readable description of the coefficient sources.
    pub provenance: String,
}

impl FemOperatorSet {
    pub fn build(mesh: &MeshLevel, fine: &MeshLevel, alpha: &CoefficientField, beta: &CoefficientField) -> Result<Self> {
        let a = values_on_fine(alpha, fine)?;
        let b = values_on_fine(beta, fine)?;
        Ok(Self {
            mesh: *mesh,
            stiffness: stiffness_from_values(mesh, fine, &a)?,
            mass: mass_from_values(mesh, fine, &b)?,
            lumped: lumped_mass_from_values(mesh, fine, &b)?,
            provenance: format!(
                "alpha {} [{}], beta {} [{}]",
                alpha.provenance(),
                &alpha.digest()[..12],
                beta.provenance(),
                &beta.digest()[..12]
            ),
        })
    }
}

/// Unit-coefficient Gram matrices of a mesh level and the norms they induce.
#[derive(Debug, Clone)]
pub struct Norms {
    pub mesh: MeshLevel,
    pub l2_gram: SparseMatrix,
    pub h1_gram: SparseMatrix,
}

impl Norms {
    pub fn new(mesh: &MeshLevel) -> Result<Self> {
        let ones = vec![1.0; mesh.n_elems()];
        Ok(Self {
            mesh: *mesh,
            l2_gram: mass_from_values(mesh, mesh, &ones)?,
            h1_gram: stiffness_from_values(mesh, mesh, &ones)?,
        })
    }

    fn quadratic(g: &SparseMatrix, v: &[f64]) -> Result<f64> {
        if v.len() != g.n_rows() {
            return Err(Error::Dimension(format!("vector of length {} for {} dofs", v.len(), g.n_rows())));
        }
        let gv = g.matvec(v)?;
        Ok(crate::sparsela::dot(v, &gv).max(0.0))
    }

    pub fn l2_squared(&self, v: &[f64]) -> Result<f64> {
        Self::quadratic(&self.l2_gram, v)
    }

    pub fn h1_semi_squared(&self, v: &[f64]) -> Result<f64> {
        Self::quadratic(&self.h1_gram, v)
    }

    pub fn l2(&self, v: &[f64]) -> Result<f64> {
        Ok(self.l2_squared(v)?.sqrt())
    }

    pub fn h1_semi(&self, v: &[f64]) -> Result<f64> {
        Ok(self.h1_semi_squared(v)?.sqrt())
    }

    pub fn h1(&self, v: &[f64]) -> Result<f64> {
        Ok((self.l2_squared(v)? + self.h1_semi_squared(v)?).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{random_field, structured_field, Pattern};
    use crate::grid::build_level;
    use proptest::prelude::*;

    /// Two-point Gauss rule per axis; exact for the bilinear-by-bilinear integrands here.
    const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

    /// Dense oracle: integrates coarse shape functions and their gradients by
    /// Gauss quadrature over every fine element, independently of the tables.
    fn dense_oracle(mesh: &MeshLevel, fine: &MeshLevel, vals: &[f64], stiff: bool) -> Vec<Vec<f64>> {
        let n = mesh.n_dofs();
        let mut out = vec![vec![0.0; n]; n];
        let hc = mesh.h();
        let hf = fine.h();
        let basis = |d: usize, x: f64, y: f64| -> (f64, f64, f64) {
            let (ix, iy) = mesh.dof_coords(d);
            let (xi, yi) = (ix as f64 * hc, iy as f64 * hc);
            let px = (1.0 - (x - xi).abs() / hc).max(0.0);
            let py = (1.0 - (y - yi).abs() / hc).max(0.0);
            let dpx = if px > 0.0 { -(x - xi).signum() / hc } else { 0.0 };
            let dpy = if py > 0.0 { -(y - yi).signum() / hc } else { 0.0 };
            (px * py, dpx * py, px * dpy)
        };
        for t in 0..fine.n_elems() {
            let (fx, fy) = fine.elem_coords(t);
            for gx in GAUSS {
                for gy in GAUSS {
                    let x = (fx as f64 + gx) * hf;
                    let y = (fy as f64 + gy) * hf;
                    let w = 0.25 * hf * hf * vals[t];
                    let evals: Vec<_> = (0..n).map(|d| basis(d, x, y)).collect();
                    for i in 0..n {
                        for j in 0..n {
                            let (vi, xi, yi) = evals[i];
                            let (vj, xj, yj) = evals[j];
                            out[i][j] += w * if stiff { xi * xj + yi * yj } else { vi * vj };
                        }
                    }
                }
            }
        }
        out
    }

    fn assert_close(a: &SparseMatrix, b: &[Vec<f64>], tol: f64) {
        let d = a.to_dense();
        let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (ra, rb) in d.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn unit_stiffness_single_node() {
        let m = build_level(1).unwrap();
        let a = assemble_stiffness(&m, &m, &CoefficientField::constant(0, 1.0).unwrap()).unwrap();
        assert_eq!(a.n_rows(), 1);
        assert!((a.get(0, 0) - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unit_mass_single_node() {
        let m = build_level(1).unwrap();
        let mm = assemble_mass(&m, &m, &CoefficientField::constant(0, 1.0).unwrap()).unwrap();
        assert!((mm.get(0, 0) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn lumped_mass_interior_and_partition_of_unity() {
        let mesh = build_level(3).unwrap();
        let fine = build_level(5).unwrap();
        let ones = vec![1.0; fine.n_elems()];
        let m = lumped_mass_from_values(&mesh, &fine, &ones).unwrap();
        let h2 = mesh.h() * mesh.h();
        assert!(m.iter().all(|v| (v - h2).abs() < 1e-15));
        let all = node_loads_from_values(&mesh, &fine, &ones).unwrap();
        assert!((all.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn checkerboard_stiffness_against_dense_oracle() {
        let mesh = build_level(2).unwrap();
        let fine = build_level(4).unwrap();
        let alpha = structured_field(
            3,
            &Pattern::Checkerboard {
                block: 1,
                lo: 1.0,
                hi: 7.0,
            },
        )
        .unwrap();
        let vals = values_on_fine(&alpha, &fine).unwrap();
        let a = assemble_stiffness(&mesh, &fine, &alpha).unwrap();
        assert_close(&a, &dense_oracle(&mesh, &fine, &vals, true), 1e-14);
        let same = assemble_stiffness(&fine, &fine, &alpha).unwrap();
        assert_close(&same, &dense_oracle(&fine, &fine, &vals, true), 1e-14);
    }

    #[test]
    fn random_mass_and_lumped_against_dense_oracle() {
        let mesh = build_level(2).unwrap();
        let fine = build_level(4).unwrap();
        let beta = random_field(4, 0.5, 4.0, 9).unwrap();
        let vals = values_on_fine(&beta, &fine).unwrap();
        let mm = assemble_mass(&mesh, &fine, &beta).unwrap();
        assert_close(&mm, &dense_oracle(&mesh, &fine, &vals, false), 1e-14);
        // Q1 shape functions sum to one, so the full-mesh mass row sums equal ∫βφ_i
        let lumped = assemble_lumped_mass(&mesh, &fine, &beta).unwrap();
        let n = mesh.n_nodes();
        let mut full = vec![0.0; n];
        let hc = mesh.h();
        let hf = fine.h();
        for t in 0..fine.n_elems() {
            let (fx, fy) = fine.elem_coords(t);
            for gx in GAUSS {
                for gy in GAUSS {
                    let x = (fx as f64 + gx) * hf;
                    let y = (fy as f64 + gy) * hf;
                    for (node, slot) in full.iter_mut().enumerate() {
                        let (ix, iy) = mesh.node_coords(node);
                        let px = (1.0 - (x - ix as f64 * hc).abs() / hc).max(0.0);
                        let py = (1.0 - (y - iy as f64 * hc).abs() / hc).max(0.0);
                        *slot += 0.25 * hf * hf * vals[t] * px * py;
                    }
                }
            }
        }
        for (d, v) in lumped.iter().enumerate() {
            let (ix, iy) = mesh.dof_coords(d);
            assert!((v - full[mesh.node_index(ix, iy)]).abs() < 1e-15);
        }
    }

    #[test]
    fn row_sums_match_lumping_for_elementwise_constant_beta() {
        let mesh = build_level(3).unwrap();
        let beta = random_field(3, 0.5, 4.0, 2).unwrap();
        let vals = values_on_fine(&beta, &mesh).unwrap();
        let loads = node_loads_from_values(&mesh, &mesh, &vals).unwrap();
        let lumped = lumped_mass_from_values(&mesh, &mesh, &vals).unwrap();
        for (d, &m) in lumped.iter().enumerate() {
            let (ix, iy) = mesh.dof_coords(d);
            assert_eq!(m, loads[mesh.node_index(ix, iy)]);
        }
        let mm = mass_from_values(&mesh, &mesh, &vals).unwrap();
        for d in 0..mesh.n_dofs() {
            let (ix, iy) = mesh.dof_coords(d);
            if ix >= 2 && iy >= 2 && ix + 2 <= mesh.n_elems_per_axis() && iy + 2 <= mesh.n_elems_per_axis() {
                let s: f64 = mm.row(d).map(|(_, v)| v).sum();
                assert!((s - lumped[d]).abs() <= 1e-12 * lumped[d]);
            }
        }
    }

    #[test]
    fn nodal_function_examples() {
        let m = build_level(1).unwrap();
        let f = |x: f64, y: f64, t: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin() * (0.5 * std::f64::consts::PI * t).cos();
        assert!((nodal_function(&m, &f, 0.0)[0] - 1.0).abs() < 1e-15);
        let m3 = build_level(3).unwrap();
        let g = |x: f64, y: f64, t: f64| (3.0 * std::f64::consts::PI * x).sin() * y * (1.0 - y) * t * t;
        assert!(nodal_function(&m3, &g, 0.0).iter().all(|&v| v == 0.0));
        assert!(nodal_function(&m3, &|_, _, _| 0.0, 1.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norms_of_sine_mode() {
        let m = build_level(6).unwrap();
        let norms = Norms::new(&m).unwrap();
        let pi = std::f64::consts::PI;
        let v = nodal_function(&m, &|x, y, _| (pi * x).sin() * (pi * y).sin(), 0.0);
        assert!((norms.l2(&v).unwrap() - 0.5).abs() < 1e-3);
        assert!((norms.h1_semi(&v).unwrap() - pi / 2f64.sqrt()).abs() < 1e-2);
        let h1 = norms.h1(&v).unwrap();
        let split = norms.l2_squared(&v).unwrap() + norms.h1_semi_squared(&v).unwrap();
        assert!((h1 * h1 - split).abs() <= 1e-14 * split);
        assert_eq!(norms.h1(&vec![0.0; m.n_dofs()]).unwrap(), 0.0);
        assert!(norms.l2(&[1.0]).is_err());
    }

    #[test]
    fn under_resolved_fine_level_is_rejected() {
        let mesh = build_level(2).unwrap();
        let beta = random_field(4, 1.0, 2.0, 0).unwrap();
        assert!(assemble_mass(&mesh, &build_level(3).unwrap(), &beta).is_err());
        assert!(assemble_mass(&build_level(4).unwrap(), &mesh, &beta).is_err());
    }

    fn quad(m: &SparseMatrix, v: &[f64]) -> f64 {
        crate::sparsela::dot(v, &m.matvec(v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn assembly_is_linear_in_the_coefficient(s1 in 0u64..1000, s2 in 0u64..1000, c in 0.1f64..5.0) {
            let mesh = build_level(2).unwrap();
            let fine = build_level(3).unwrap();
            let a = random_field(3, 1.0, 2.0, s1).unwrap();
            let b = random_field(3, 0.5, 3.0, s2).unwrap();
            let va = values_on_fine(&a, &fine).unwrap();
            let vb = values_on_fine(&b, &fine).unwrap();
            let sum: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x + c * y).collect();
            for stiff in [true, false] {
                let f = |v: &[f64]| if stiff { stiffness_from_values(&mesh, &fine, v) } else { mass_from_values(&mesh, &fine, v) }.unwrap();
                let lhs = f(&sum).to_dense();
                let rhs = f(&va).add_scaled(&f(&vb), c).unwrap().to_dense();
                for (x, y) in lhs.iter().flatten().zip(rhs.iter().flatten()) {
                    prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
                }
            }
        }

        #[test]
        fn mass_and_lumping_bracket_the_unit_mass(seed in 0u64..1000, v in prop::collection::vec(-1.0f64..1.0, 49)) {
            let mesh = build_level(3).unwrap();
            let fine = build_level(4).unwrap();
            let beta = random_field(4, 0.5, 4.0, seed).unwrap();
            let vals = values_on_fine(&beta, &fine).unwrap();
            let unit = mass_from_values(&mesh, &fine, &vec![1.0; fine.n_elems()]).unwrap();
            let mm = mass_from_values(&mesh, &fine, &vals).unwrap();
            let m = lumped_mass_from_values(&mesh, &fine, &vals).unwrap();
            let (bmin, bmax) = (beta.min_value(), beta.max_value());
            let q0 = quad(&unit, &v);
            let qb = quad(&mm, &v);
            let ql: f64 = m.iter().zip(&v).map(|(m, v)| m * v * v).sum();
            prop_assert!(bmin * q0 <= qb * (1.0 + 1e-12));
            prop_assert!(qb <= bmax * q0 * (1.0 + 1e-12));
            prop_assert!(bmin * q0 / 3.0 <= ql);
            prop_assert!(ql <= 3.0 * bmax * q0);
        }
    }
}
