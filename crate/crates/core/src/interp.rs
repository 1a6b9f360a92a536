//! The β-weighted quasi-interpolation `Π_H = Π^av ∘ Π^D` as an explicit sparse
//! matrix from fine interior values to coarse interior values, and the
//! coarse-to-fine embedding of Q1 functions.

use std::fmt;

use rayon::prelude::*;

use crate::assembly::{sub_element_ids, Norms, SubElementTables, Q1_MASS_UNIT};
use crate::coeff::{values_on_fine, CoefficientField};
use crate::error::{Error, Result};
use crate::grid::{level_ratio, MeshLevel, CORNERS};
use crate::sparsela::{spd_solve_in_place, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AveragingMode {
    /// Node values averaged with weights `∫_e βφ_i / ∫_Ω βφ_i`.
    Weighted,
    /// Equal weights over adjacent elements.
    Naive,
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AveragingMode::Weighted => "weighted",
            AveragingMode::Naive => "naive",
        })
    }
}

impl std::str::FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(AveragingMode::Weighted),
            "naive" => Ok(AveragingMode::Naive),
            other => Err(Error::Config(format!("unknown averaging mode '{other}'"))),
        }
    }
}

/// Elementwise weighted L² projection of a fine function onto the four local bilinears.
#[derive(Debug, Clone)]
pub struct LocalProjection {
    /// Fine node ids of the closed coarse element, row-major.
    pub nodes: Vec<usize>,
    /// `4 x nodes.len()` row-major: coefficient of local corner `a` per unit fine nodal value.
    pub block: Vec<f64>,
}

pub fn local_projection(coarse: &MeshLevel, fine: &MeshLevel, beta: &[f64], e: usize) -> Result<LocalProjection> {
    let ratio = level_ratio(coarse, fine)?;
    if beta.len() != fine.n_elems() {
        return Err(Error::Dimension("coefficient values do not match the fine mesh".into()));
    }
    Ok(project_element(coarse, fine, &SubElementTables::new(ratio), beta, e)?)
}

fn project_element(
    coarse: &MeshLevel,
    fine: &MeshLevel,
    tables: &SubElementTables,
    beta: &[f64],
    e: usize,
) -> Result<LocalProjection> {
    let r = tables.ratio;
    let (ex, ey) = coarse.elem_coords(e);
    let w = r + 1;
    let nodes: Vec<usize> = (0..w * w)
        .map(|k| fine.node_index(ex * r + k % w, ey * r + k / w))
        .collect();
    let h2 = fine.h() * fine.h();
    let mut g = [0.0; 16];
    let mut rhs = vec![0.0; 4 * w * w];
    for (s, t) in sub_element_ids(coarse, fine, r, e).enumerate() {
        let scale = beta[t] * h2;
        let (sx, sy) = (s % r, s / r);
        for a in 0..4 {
            for b in 0..4 {
                g[a * 4 + b] += scale * tables.mass_unit[s][a][b];
            }
            for (k, &(dx, dy)) in CORNERS.iter().enumerate() {
                let local = (sy + dy) * w + sx + dx;
                let mut v = 0.0;
                for l in 0..4 {
                    v += tables.transfer[s][a][l] * Q1_MASS_UNIT[l][k];
                }
                rhs[a * w * w + local] += scale * v;
            }
        }
    }
    spd_solve_in_place(&g, 4, &mut rhs, w * w)
        .map_err(|err| Error::Singular(format!("local projection on coarse element {e}: {err}")))?;
    Ok(LocalProjection { nodes, block: rhs })
}

/// `(element, local corner, weight)` for every element adjacent to a coarse interior dof.
pub type NodeWeights = Vec<(usize, usize, f64)>;

pub fn averaging_weights(coarse: &MeshLevel, fine: &MeshLevel, beta: &[f64], mode: AveragingMode) -> Result<Vec<NodeWeights>> {
    let ratio = level_ratio(coarse, fine)?;
    if beta.len() != fine.n_elems() {
        return Err(Error::Dimension("coefficient values do not match the fine mesh".into()));
    }
    let tables = SubElementTables::new(ratio);
    let h2 = fine.h() * fine.h();
    // ∫_e β φ_a for each element and local corner
    let elem_loads: Vec<[f64; 4]> = (0..coarse.n_elems())
        .map(|e| {
            let mut out = [0.0; 4];
            for (s, t) in sub_element_ids(coarse, fine, ratio, e).enumerate() {
                for a in 0..4 {
                    out[a] += beta[t] * h2 * tables.load_unit[s][a];
                }
            }
            out
        })
        .collect();
    Ok((0..coarse.n_dofs())
        .map(|d| {
            let (ix, iy) = coarse.dof_coords(d);
            let adj = coarse.elems_around_node(ix, iy);
            let total: f64 = adj.iter().map(|&(e, a)| elem_loads[e][a]).sum();
            let count = adj.len() as f64;
            adj.into_iter()
                .map(|(e, a)| {
                    let w = match mode {
                        AveragingMode::Weighted => elem_loads[e][a] / total,
                        AveragingMode::Naive => 1.0 / count,
                    };
                    (e, a, w)
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct InterpOperator {
    /// Coarse interior dofs × fine interior dofs.
    pub p: SparseMatrix,
    /// Fine interior dofs × coarse interior dofs.
    pub e: SparseMatrix,
    pub mode: AveragingMode,
    pub coarse: MeshLevel,
    pub fine: MeshLevel,
    pub beta_digest: String,
}

/// Prolongation of coarse Q1 functions to fine nodal values.
pub fn embedding(coarse: &MeshLevel, fine: &MeshLevel) -> Result<SparseMatrix> {
    let r = level_ratio(coarse, fine)?;
    if r == 1 {
        return Ok(SparseMatrix::identity(fine.n_dofs()));
    }
    let mut triplets = Vec::new();
    let rf = r as f64;
    for d in 0..fine.n_dofs() {
        let (fx, fy) = fine.dof_coords(d);
        let (cx, cy) = (fx / r, fy / r);
        let (ox, oy) = ((fx % r) as f64 / rf, (fy % r) as f64 / rf);
        for (dx, wx) in [(0, 1.0 - ox), (1, ox)] {
            for (dy, wy) in [(0, 1.0 - oy), (1, oy)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                if let Some(c) = coarse.dof_at(cx + dx, cy + dy) {
                    triplets.push((d, c, w));
                }
            }
        }
    }
    SparseMatrix::from_triplets(fine.n_dofs(), coarse.n_dofs(), &triplets)
}

pub fn build_pi(coarse: &MeshLevel, fine: &MeshLevel, beta: &CoefficientField, mode: AveragingMode) -> Result<InterpOperator> {
    let values = values_on_fine(beta, fine)?;
    build_pi_from_values(coarse, fine, &values, mode, beta.digest())
}

pub(crate) fn build_pi_from_values(
    coarse: &MeshLevel,
    fine: &MeshLevel,
    beta: &[f64],
    mode: AveragingMode,
    beta_digest: String,
) -> Result<InterpOperator> {
    let ratio = level_ratio(coarse, fine)?;
    let e = embedding(coarse, fine)?;
    if ratio == 1 {
        // both factors are the identity on a single level
        return Ok(InterpOperator {
            p: SparseMatrix::identity(coarse.n_dofs()),
            e,
            mode,
            coarse: *coarse,
            fine: *fine,
            beta_digest,
        });
    }
    let weights = averaging_weights(coarse, fine, beta, mode)?;
    let tables = SubElementTables::new(ratio);
    let blocks: Vec<LocalProjection> = (0..coarse.n_elems())
        .into_par_iter()
        .map(|el| project_element(coarse, fine, &tables, beta, el))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<(usize, usize, f64)>> = weights
        .par_iter()
        .enumerate()
        .map(|(i, adj)| {
            let mut out = Vec::new();
            for &(el, a, w) in adj {
                let blk = &blocks[el];
                let width = blk.nodes.len();
                for (k, &node) in blk.nodes.iter().enumerate() {
                    let v = blk.block[a * width + k];
                    if v == 0.0 {
                        continue;
                    }
                    if let Some(j) = fine.dof_of_node(node) {
                        out.push((i, j, w * v));
                    }
                }
            }
            out
        })
        .collect();
    let triplets: Vec<_> = rows.into_iter().flatten().collect();
    let p = SparseMatrix::from_triplets(coarse.n_dofs(), fine.n_dofs(), &triplets)?;
    Ok(InterpOperator {
        p,
        e,
        mode,
        coarse: *coarse,
        fine: *fine,
        beta_digest,
    })
}

/// Empirical maxima over the probe set of
/// `‖(1 − EP)v‖₀ / (H |v|₁)` and `|EPv|₁ / |v|₁`.
#[derive(Debug, Clone, Copy)]
pub struct InterpConstants {
    pub approximation: f64,
    pub stability: f64,
    pub probes: usize,
}

/// Probe set: the first `3 x 3` sine modes plus eight seeded random vectors.
pub fn measure_interp_constants(op: &InterpOperator) -> Result<InterpConstants> {
    use rand::{Rng, SeedableRng};
    let fine = op.fine;
    let norms = Norms::new(&fine)?;
    let pi = std::f64::consts::PI;
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for kx in 1..=3 {
        for ky in 1..=3 {
            probes.push(crate::assembly::nodal_function(
                &fine,
                &|x, y, _| (kx as f64 * pi * x).sin() * (ky as f64 * pi * y).sin(),
                0.0,
            ));
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..8 {
        probes.push((0..fine.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let h = op.coarse.h();
    let mut approximation: f64 = 0.0;
    let mut stability: f64 = 0.0;
    for v in &probes {
        let semi = norms.h1_semi(v)?;
        if semi == 0.0 {
            continue;
        }
        let epv = op.e.matvec(&op.p.matvec(v)?)?;
        let diff: Vec<f64> = v.iter().zip(&epv).map(|(a, b)| a - b).collect();
        approximation = approximation.max(norms.l2(&diff)? / (h * semi));
        stability = stability.max(norms.h1_semi(&epv)? / semi);
    }
    Ok(InterpConstants {
        approximation,
        stability,
        probes: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{lumped_mass_from_values, mass_from_values, nodal_function};
    use crate::coeff::{random_field, structured_field, Pattern};
    use crate::grid::build_level;
    use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

    const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

    fn hat(mesh: &MeshLevel, ix: usize, iy: usize, x: f64, y: f64) -> f64 {
        let h = mesh.h();
        let px = (1.0 - (x - ix as f64 * h).abs() / h).max(0.0);
        let py = (1.0 - (y - iy as f64 * h).abs() / h).max(0.0);
        px * py
    }

    /// Fine Q1 function evaluated pointwise from interior nodal values.
    fn eval_fine(fine: &MeshLevel, u: &[f64], x: f64, y: f64) -> f64 {
        let h = fine.h();
        let ex = ((x / h) as usize).min(fine.n_elems_per_axis() - 1);
        let ey = ((y / h) as usize).min(fine.n_elems_per_axis() - 1);
        let mut s = 0.0;
        for (dx, dy) in CORNERS {
            if let Some(d) = fine.dof_at(ex + dx, ey + dy) {
                s += u[d] * hat(fine, ex + dx, ey + dy, x, y);
            }
        }
        s
    }

    /// Two-stage definition evaluated by quadrature: local weighted projections
    /// per element followed by weighted averaging at each coarse dof.
    fn dense_pi_oracle(coarse: &MeshLevel, fine: &MeshLevel, beta: &[f64], u: &[f64]) -> Vec<f64> {
        let hf = fine.h();
        let mut coeffs = vec![Vector4::<f64>::zeros(); coarse.n_elems()];
        let mut loads = vec![[0.0; 4]; coarse.n_elems()];
        for e in 0..coarse.n_elems() {
            let (ex, ey) = coarse.elem_coords(e);
            let corners = CORNERS.map(|(dx, dy)| (ex + dx, ey + dy));
            let mut g = Matrix4::<f64>::zeros();
            let mut r = Vector4::<f64>::zeros();
            for t in 0..fine.n_elems() {
                let (fx, fy) = fine.elem_coords(t);
                let (x0, y0) = (fx as f64 * hf, fy as f64 * hf);
                let hc = coarse.h();
                if x0 < ex as f64 * hc - 1e-14 || x0 >= (ex + 1) as f64 * hc - 1e-14 || y0 < ey as f64 * hc - 1e-14 || y0 >= (ey + 1) as f64 * hc - 1e-14 {
                    continue;
                }
                for gx in GAUSS {
                    for gy in GAUSS {
                        let (x, y) = (x0 + gx * hf, y0 + gy * hf);
                        let w = 0.25 * hf * hf * beta[t];
                        let phi: Vec<f64> = corners.iter().map(|&(i, j)| hat(coarse, i, j, x, y)).collect();
                        let uv = eval_fine(fine, u, x, y);
                        for a in 0..4 {
                            r[a] += w * phi[a] * uv;
                            loads[e][a] += w * phi[a];
                            for b in 0..4 {
                                g[(a, b)] += w * phi[a] * phi[b];
                            }
                        }
                    }
                }
            }
            coeffs[e] = g.lu().solve(&r).unwrap();
        }
        (0..coarse.n_dofs())
            .map(|d| {
                let (ix, iy) = coarse.dof_coords(d);
                let adj = coarse.elems_around_node(ix, iy);
                let total: f64 = adj.iter().map(|&(e, a)| loads[e][a]).sum();
                adj.iter().map(|&(e, a)| loads[e][a] * coeffs[e][a]).sum::<f64>() / total
            })
            .collect()
    }

    #[test]
    fn composition_matches_dense_oracle() {
        let coarse = build_level(1).unwrap();
        let fine = build_level(2).unwrap();
        let ones = vec![1.0; fine.n_elems()];
        let op = build_pi_from_values(&coarse, &fine, &ones, AveragingMode::Weighted, String::new()).unwrap();
        let u = nodal_function(&fine, &|x, y, _| x * (1.0 - x) * y * (1.0 - y), 0.0);
        let pu = op.p.matvec(&u).unwrap();
        let oracle = dense_pi_oracle(&coarse, &fine, &ones, &u);
        assert!((pu[0] - oracle[0]).abs() < 1e-12);
    }

    #[test]
    fn composition_matches_dense_oracle_for_rough_beta() {
        let coarse = build_level(2).unwrap();
        let fine = build_level(4).unwrap();
        let beta = values_on_fine(&random_field(3, 0.5, 4.0, 5).unwrap(), &fine).unwrap();
        let op = build_pi_from_values(&coarse, &fine, &beta, AveragingMode::Weighted, String::new()).unwrap();
        let u = nodal_function(&fine, &|x, y, _| (3.0 * x).sin() * y * (1.0 - y) + x * x, 0.0);
        let pu = op.p.matvec(&u).unwrap();
        let oracle = dense_pi_oracle(&coarse, &fine, &beta, &u);
        for (a, b) in pu.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn projection_property_in_both_modes() {
        let coarse = build_level(3).unwrap();
        let fine = build_level(6).unwrap();
        let beta = random_field(5, 0.5, 4.0, 3).unwrap();
        for mode in [AveragingMode::Weighted, AveragingMode::Naive] {
            let op = build_pi(&coarse, &fine, &beta, mode).unwrap();
            let pe = op.p.matmul(&op.e).unwrap().to_dense();
            for (i, row) in pe.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_level_is_identity() {
        let m = build_level(3).unwrap();
        let op = build_pi(&m, &m, &random_field(3, 1.0, 2.0, 0).unwrap(), AveragingMode::Weighted).unwrap();
        assert_eq!(op.p, SparseMatrix::identity(m.n_dofs()));
        assert_eq!(op.e, SparseMatrix::identity(m.n_dofs()));
    }

    #[test]
    fn modes_coincide_for_constant_beta() {
        let coarse = build_level(2).unwrap();
        let fine = build_level(4).unwrap();
        let beta = CoefficientField::constant(0, 2.5).unwrap();
        let w = build_pi(&coarse, &fine, &beta, AveragingMode::Weighted).unwrap().p.to_dense();
        let n = build_pi(&coarse, &fine, &beta, AveragingMode::Naive).unwrap().p.to_dense();
        for (a, b) in w.iter().flatten().zip(n.iter().flatten()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn averaging_weight_examples() {
        let coarse = build_level(1).unwrap();
        let fine = build_level(2).unwrap();
        let ones = vec![1.0; fine.n_elems()];
        for mode in [AveragingMode::Weighted, AveragingMode::Naive] {
            let w = averaging_weights(&coarse, &fine, &ones, mode).unwrap();
            assert_eq!(w[0].len(), 4);
            assert!(w[0].iter().all(|&(_, _, v)| (v - 0.25).abs() < 1e-15));
        }
        let field = CoefficientField::new(1, vec![1.0, 1.0, 2.0, 4.0], 1.0, 4.0, crate::coeff::Provenance::Constant).unwrap();
        let beta = values_on_fine(&field, &fine).unwrap();
        let w = averaging_weights(&coarse, &fine, &beta, AveragingMode::Weighted).unwrap();
        let expect = [1.0 / 8.0, 1.0 / 8.0, 2.0 / 8.0, 4.0 / 8.0];
        for (&(e, _, v), x) in w[0].iter().zip(expect) {
            assert_eq!(e, w[0].iter().position(|t| t.0 == e).unwrap());
            assert!((v - x).abs() < 1e-15);
        }
        let naive = averaging_weights(&coarse, &fine, &beta, AveragingMode::Naive).unwrap();
        assert!(naive[0].iter().all(|&(_, _, v)| v == 0.25));
        // weights sum to one everywhere
        let c3 = build_level(3).unwrap();
        let f5 = build_level(5).unwrap();
        let rough = values_on_fine(&random_field(4, 0.5, 4.0, 1).unwrap(), &f5).unwrap();
        for node in averaging_weights(&c3, &f5, &rough, AveragingMode::Weighted).unwrap() {
            assert!((node.iter().map(|t| t.2).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn local_projection_examples() {
        let coarse = build_level(1).unwrap();
        let fine = build_level(3).unwrap();
        // bilinear data is reproduced, even with a split coefficient
        let split = structured_field(1, &Pattern::Stripes { width: 1, values: vec![0.5, 2.0] }).unwrap();
        let beta = values_on_fine(&split, &fine).unwrap();
        let lp = local_projection(&coarse, &fine, &beta, 3).unwrap();
        let width = lp.nodes.len();
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 3.0 * x * y;
        for (fun, expect) in [(&f as &dyn Fn(f64, f64) -> f64, [f(0.5, 0.5), f(1.0, 0.5), f(1.0, 1.0), f(0.5, 1.0)]), (&|_, _| 1.0, [1.0; 4])] {
            for a in 0..4 {
                let c: f64 = lp
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(k, &node)| {
                        let (ix, iy) = fine.node_coords(node);
                        let (x, y) = fine.node_position(ix, iy);
                        lp.block[a * width + k] * fun(x, y)
                    })
                    .sum();
                assert!((c - expect[a]).abs() < 1e-13, "{c} vs {}", expect[a]);
            }
        }
    }

    #[test]
    fn local_projection_of_fine_hat_against_dense_solve() {
        let coarse = build_level(1).unwrap();
        let fine = build_level(3).unwrap();
        let ones = vec![1.0; fine.n_elems()];
        let lp = local_projection(&coarse, &fine, &ones, 0).unwrap();
        let width = lp.nodes.len();
        // fine hat at the center (2,2) of element 0, which spans fine nodes 0..=4
        let center = fine.node_index(2, 2);
        let k = lp.nodes.iter().position(|&n| n == center).unwrap();
        let got: Vec<f64> = (0..4).map(|a| lp.block[a * width + k]).collect();
        let hf = fine.h();
        let mut g = DMatrix::<f64>::zeros(4, 4);
        let mut r = DVector::<f64>::zeros(4);
        for fy in 0..4 {
            for fx in 0..4 {
                for gx in GAUSS {
                    for gy in GAUSS {
                        let (x, y) = ((fx as f64 + gx) * hf, (fy as f64 + gy) * hf);
                        let w = 0.25 * hf * hf;
                        let phi: Vec<f64> = CORNERS.iter().map(|&(i, j)| hat(&coarse, i, j, x, y)).collect();
                        let u = hat(&fine, 2, 2, x, y);
                        for a in 0..4 {
                            r[a] += w * phi[a] * u;
                            for b in 0..4 {
                                g[(a, b)] += w * phi[a] * phi[b];
                            }
                        }
                    }
                }
            }
        }
        let c = g.lu().solve(&r).unwrap();
        for a in 0..4 {
            assert!((got[a] - c[a]).abs() < 1e-13);
        }
    }

    #[test]
    fn constants_preserved_away_from_the_boundary() {
        let coarse = build_level(3).unwrap();
        let fine = build_level(5).unwrap();
        let beta = random_field(4, 0.5, 4.0, 8).unwrap();
        let op = build_pi(&coarse, &fine, &beta, AveragingMode::Weighted).unwrap();
        let ones = vec![1.0; fine.n_dofs()];
        let p1 = op.p.matvec(&ones).unwrap();
        let n = coarse.n_elems_per_axis();
        for (d, v) in p1.iter().enumerate() {
            let (ix, iy) = coarse.dof_coords(d);
            if ix >= 2 && iy >= 2 && ix + 2 <= n && iy + 2 <= n {
                assert!((v - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn measured_constants_are_stable_under_refinement() {
        let fine = build_level(5).unwrap();
        let beta = CoefficientField::constant(0, 1.0).unwrap();
        for mode in [AveragingMode::Weighted, AveragingMode::Naive] {
            let mut prev: Option<InterpConstants> = None;
            for k in 1..=4 {
                let op = build_pi(&build_level(k).unwrap(), &fine, &beta, mode).unwrap();
                let c = measure_interp_constants(&op).unwrap();
                assert!(c.approximation.is_finite() && c.stability.is_finite());
                if let Some(p) = prev {
                    let r1 = c.approximation / p.approximation;
                    let r2 = c.stability / p.stability;
                    assert!((0.5..=2.0).contains(&r1), "approximation ratio {r1}");
                    assert!((0.5..=2.0).contains(&r2), "stability ratio {r2}");
                }
                prev = Some(c);
            }
        }
        let coarse = build_level(2).unwrap();
        let op = build_pi(&coarse, &fine, &beta, AveragingMode::Weighted).unwrap();
        let v = op.e.matvec(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.25, 2.0]).unwrap();
        let back = op.e.matvec(&op.p.matvec(&v).unwrap()).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lumped_form_error_decays_quadratically() {
        let fine = build_level(8).unwrap();
        let field = random_field(2, 0.5, 4.0, 21).unwrap();
        let beta = values_on_fine(&field, &fine).unwrap();
        let mh = mass_from_values(&fine, &fine, &beta).unwrap();
        let pi = std::f64::consts::PI;
        let u = nodal_function(&fine, &|x, y, _| (pi * x).sin() * (2.0 * pi * y).sin(), 0.0);
        let w = nodal_function(&fine, &|x, y, _| x * (1.0 - x) * (pi * y).sin() * (1.0 + x), 0.0);
        let exact = crate::sparsela::dot(&u, &mh.matvec(&w).unwrap());
        let mut errs = Vec::new();
        for k in 2..=5 {
            let coarse = build_level(k).unwrap();
            let op = build_pi_from_values(&coarse, &fine, &beta, AveragingMode::Weighted, String::new()).unwrap();
            let m = lumped_mass_from_values(&coarse, &fine, &beta).unwrap();
            let pu = op.p.matvec(&u).unwrap();
            let pw = op.p.matvec(&w).unwrap();
            let lumped: f64 = m.iter().zip(pu.iter().zip(&pw)).map(|(m, (a, b))| m * a * b).sum();
            errs.push((exact - lumped).abs());
        }
        for pair in errs.windows(2) {
            let rate = (pair[0] / pair[1]).log2();
            assert!(rate >= 1.7, "rate {rate} from {errs:?}");
        }
    }
}
