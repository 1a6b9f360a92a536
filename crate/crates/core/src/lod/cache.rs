//! Binary cache of multiscale bases.
//!
//! Layout: a UTF-8 header of `key = value` lines terminated by a `---` line,
//! then a little-endian payload holding `B`, `K`, `M_ms` (each as
//! `n_rows, n_cols, nnz, row_ptr, col_idx, values`), the lumped mass and the
//! offline time. The header records the SHA-256 of the payload.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::MeshLevel;
use crate::interp::{build_pi_from_values, AveragingMode};
use crate::sparsela::SparseMatrix;

use super::{Ell, FineProblem, MultiscaleBasis};

const MAGIC: &str = "LODWAVE-BASIS 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisKey {
    pub coarse: u32,
    pub fine: u32,
    pub ell: String,
    pub mode: String,
    pub alpha: String,
    pub beta: String,
}

impl BasisKey {
    pub fn new(problem: &FineProblem, coarse: &MeshLevel, ell: Ell, mode: AveragingMode) -> Self {
        Self {
            coarse: coarse.exponent(),
            fine: problem.fine.exponent(),
            ell: ell.to_string(),
            mode: mode.to_string(),
            alpha: problem.alpha_digest.clone(),
            beta: problem.beta_digest.clone(),
        }
    }

    fn lines(&self) -> Vec<(&'static str, String)> {
        vec![
            ("coarse", self.coarse.to_string()),
            ("fine", self.fine.to_string()),
            ("ell", self.ell.clone()),
            ("mode", self.mode.clone()),
            ("alpha", self.alpha.clone()),
            ("beta", self.beta.clone()),
        ]
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, a: &SparseMatrix) {
    put_u64(out, a.n_rows() as u64);
    put_u64(out, a.n_cols() as u64);
    put_u64(out, a.nnz() as u64);
    a.row_ptr().iter().for_each(|&v| put_u64(out, v as u64));
    a.col_idx().iter().for_each(|&v| put_u64(out, v as u64));
    a.values().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u64(&mut self) -> Result<u64> {
        let bytes = self
            .data
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Cache("payload truncated".into()))?;
        self.pos += 8;
        Ok(u64::from_le_bytes(bytes.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Cache("index overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn matrix(&mut self) -> Result<SparseMatrix> {
        let (rows, cols, nnz) = (self.usize()?, self.usize()?, self.usize()?);
        if nnz > self.data.len() / 8 || rows > self.data.len() / 8 {
            return Err(Error::Cache("implausible matrix size".into()));
        }
        let row_ptr = (0..=rows).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        let col_idx = (0..nnz).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        let values = (0..nnz).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        SparseMatrix::from_csr(rows, cols, row_ptr, col_idx, values).map_err(|e| Error::Cache(e.to_string()))
    }
}

pub fn save_basis(basis: &MultiscaleBasis, key: &BasisKey, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut payload = Vec::new();
    put_matrix(&mut payload, &basis.b);
    put_matrix(&mut payload, &basis.k);
    put_matrix(&mut payload, &basis.m_ms);
    put_u64(&mut payload, basis.m.len() as u64);
    basis.m.iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes()));
    payload.extend_from_slice(&basis.offline_seconds.to_le_bytes());
    let mut text = format!("{MAGIC}\n");
    for (k, v) in key.lines() {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&format!("payload_sha256 = {:x}\n", Sha256::digest(&payload)));
    text.push_str(&format!("payload_bytes = {}\n---\n", payload.len()));
    let mut out = text.into_bytes();
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a cached basis, checking that its key matches `problem`, `coarse`,
/// `ell`, `mode` and that the payload digest is intact.
pub fn load_basis(path: impl AsRef<Path>, problem: &FineProblem, coarse: &MeshLevel, ell: Ell, mode: AveragingMode) -> Result<MultiscaleBasis> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sep = b"\n---\n";
    let split = raw
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or_else(|| Error::Cache("missing header terminator".into()))?;
    let header = std::str::from_utf8(&raw[..split]).map_err(|_| Error::Cache("header is not UTF-8".into()))?;
    let payload = &raw[split + sep.len()..];
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Cache("unrecognized cache format".into()));
    }
    let fields: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect();
    let get = |k: &str| {
        fields
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Cache(format!("header lacks '{k}'")))
    };
    let expected = BasisKey::new(problem, coarse, ell, mode);
    for (k, v) in expected.lines() {
        let found = get(k)?;
        if found != v {
            return Err(Error::Cache(format!("{k} is '{found}', expected '{v}'")));
        }
    }
    if get("payload_bytes")?.parse::<usize>().ok() != Some(payload.len()) {
        return Err(Error::Cache("payload length differs from header".into()));
    }
    if get("payload_sha256")? != format!("{:x}", Sha256::digest(payload)) {
        return Err(Error::Cache("payload digest mismatch".into()));
    }
    let mut r = Reader { data: payload, pos: 0 };
    let b = r.matrix()?;
    let k = r.matrix()?.mark_symmetric()?;
    let m_ms = r.matrix()?.mark_symmetric()?;
    let n = r.usize()?;
    let m = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let offline_seconds = r.f64()?;
    if b.n_rows() != problem.fine.n_dofs() || b.n_cols() != coarse.n_dofs() || m.len() != coarse.n_dofs() {
        return Err(Error::Cache("cached dimensions do not match the mesh pair".into()));
    }
    let interp = build_pi_from_values(coarse, &problem.fine, &problem.beta, mode, problem.beta_digest.clone())?;
    Ok(MultiscaleBasis {
        ell,
        mode,
        coarse: *coarse,
        fine: problem.fine,
        b,
        k,
        m,
        m_ms,
        interp,
        offline_seconds,
    })
}
