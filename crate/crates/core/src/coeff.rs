//! Piecewise-constant coefficient fields on the coefficient mesh `T_ε`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{level_ratio, MeshLevel};

/// Name of the seeded generator used for random fields; recorded in reports.
pub const GENERATOR: &str = "ChaCha8Rng::seed_from_u64";

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Random { seed: u64 },
    Structured(String),
    File(PathBuf),
    Constant,
    Rescaled { source: Box<Provenance>, lo: f64, hi: f64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Random { seed } => write!(f, "uniform({GENERATOR}, seed={seed})"),
            Provenance::Structured(desc) => write!(f, "structured({desc})"),
            Provenance::File(p) => write!(f, "file({})", p.display()),
            Provenance::Constant => write!(f, "constant"),
            Provenance::Rescaled { source, lo, hi } => write!(f, "rescaled({source} -> [{lo}, {hi}])"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    eps_exponent: u32,
    values: Vec<f64>,
    lo: f64,
    hi: f64,
    provenance: Provenance,
}

impl CoefficientField {
    /// Validates positivity, bounds and the `4^eps` value count.
    pub fn new(eps_exponent: u32, values: Vec<f64>, lo: f64, hi: f64, provenance: Provenance) -> Result<Self> {
        let n = 1usize << eps_exponent;
        if values.len() != n * n {
            return Err(Error::Dimension(format!(
                "coefficient field at level {eps_exponent} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("invalid coefficient bounds [{lo}, {hi}]")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= lo && **v <= hi)) {
            return Err(Error::Domain(format!("value {v} at cell {i} outside [{lo}, {hi}]")));
        }
        Ok(Self {
            eps_exponent,
            values,
            lo,
            hi,
            provenance,
        })
    }

    pub fn constant(eps_exponent: u32, value: f64) -> Result<Self> {
        let n = 1usize << eps_exponent;
        Self::new(eps_exponent, vec![value; n * n], value, value, Provenance::Constant)
    }

    pub fn eps_exponent(&self) -> u32 {
        self.eps_exponent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Declared bounds `(lo, hi)`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Hex SHA-256 of the little-endian value bytes, prefixed with the exponent.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.eps_exponent.to_le_bytes());
        for v in &self.values {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// i.i.d. uniform values on `[lo, hi]`, one per ε-cell, from a seeded generator.
pub fn random_field(eps_exponent: u32, lo: f64, hi: f64, seed: u64) -> Result<CoefficientField> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Domain(format!("random field needs 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let n = 1usize << eps_exponent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(lo, hi);
    let values = (0..n * n).map(|_| dist.sample(&mut rng)).collect();
    CoefficientField::new(eps_exponent, values, lo, hi, Provenance::Random { seed })
}

/// Deterministic structured coefficient layouts.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// Square blocks of `block` cells alternating between `lo` and `hi`.
    Checkerboard { block: usize, lo: f64, hi: f64 },
    /// Horizontal bands `width` cells tall cycling through `values`.
    Stripes { width: usize, values: Vec<f64> },
    /// `count` square inclusions of side `size` cells, laid out on a regular
    /// lattice over the unit square, on a constant background.
    Inclusions {
        count: usize,
        size: usize,
        background: f64,
        value: f64,
    },
}

impl Pattern {
    /// Parses `checkerboard:BLOCK:LO:HI`, `stripes:WIDTH:V1,V2,...` or
    /// `inclusions:COUNT:SIZE:BACKGROUND:VALUE`.
    pub fn parse(spec: &str) -> Result<Pattern> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {s:?} in pattern {spec:?}")))
        };
        let int = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer {s:?} in pattern {spec:?}")))
        };
        match parts.as_slice() {
            ["checkerboard", b, lo, hi] => Ok(Pattern::Checkerboard {
                block: int(b)?,
                lo: num(lo)?,
                hi: num(hi)?,
            }),
            ["stripes", w, vals] => Ok(Pattern::Stripes {
                width: int(w)?,
                values: vals.split(',').map(num).collect::<Result<_>>()?,
            }),
            ["inclusions", c, s, bg, v] => Ok(Pattern::Inclusions {
                count: int(c)?,
                size: int(s)?,
                background: num(bg)?,
                value: num(v)?,
            }),
            _ => Err(Error::Config(format!("unknown coefficient pattern {spec:?}"))),
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Pattern::Checkerboard { lo, hi, .. } => (lo.min(*hi), lo.max(*hi)),
            Pattern::Stripes { values, .. } => (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            Pattern::Inclusions {
                count,
                background,
                value,
                ..
            } => {
                if *count == 0 {
                    (*background, *background)
                } else {
                    (background.min(*value), background.max(*value))
                }
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Checkerboard { block, lo, hi } => write!(f, "checkerboard:{block}:{lo}:{hi}"),
            Pattern::Stripes { width, values } => {
                let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "stripes:{width}:{}", vals.join(","))
            }
            Pattern::Inclusions {
                count,
                size,
                background,
                value,
            } => write!(f, "inclusions:{count}:{size}:{background}:{value}"),
        }
    }
}

pub fn structured_field(eps_exponent: u32, pattern: &Pattern) -> Result<CoefficientField> {
    let n = 1usize << eps_exponent;
    let mut values = vec![0.0; n * n];
    match pattern {
        Pattern::Checkerboard { block, lo, hi } => {
            if *block == 0 {
                return Err(Error::Config("checkerboard block must be positive".into()));
            }
            for iy in 0..n {
                for ix in 0..n {
                    values[iy * n + ix] = if (ix / block + iy / block) % 2 == 0 { *lo } else { *hi };
                }
            }
        }
        Pattern::Stripes { width, values: bands } => {
            if *width == 0 || bands.is_empty() {
                return Err(Error::Config("stripes need a positive width and at least one value".into()));
            }
            for iy in 0..n {
                let v = bands[(iy / width) % bands.len()];
                values[iy * n..(iy + 1) * n].fill(v);
            }
        }
        Pattern::Inclusions {
            count,
            size,
            background,
            value,
        } => {
            values.fill(*background);
            if *count > 0 {
                let per_axis = (*count as f64).sqrt().ceil() as usize;
                let pitch = n / per_axis;
                if *size == 0 || *size > pitch {
                    return Err(Error::Config(format!(
                        "inclusion size {size} does not fit lattice pitch {pitch}"
                    )));
                }
                let offset = (pitch - size) / 2;
                for c in 0..*count {
                    let (cx, cy) = (c % per_axis, c / per_axis);
                    for iy in cy * pitch + offset..cy * pitch + offset + size {
                        for ix in cx * pitch + offset..cx * pitch + offset + size {
                            values[iy * n + ix] = *value;
                        }
                    }
                }
            }
        }
    }
    let (lo, hi) = pattern.range();
    CoefficientField::new(eps_exponent, values, lo, hi, Provenance::Structured(pattern.to_string()))
}

/// Affine map of the declared range `[lo, hi]` onto `[new_lo, new_hi]`.
/// A field with a degenerate declared range maps to the constant `new_lo`.
pub fn rescale_field(field: &CoefficientField, new_lo: f64, new_hi: f64) -> Result<CoefficientField> {
    if !(new_lo > 0.0 && new_lo < new_hi && new_hi.is_finite()) {
        return Err(Error::Domain(format!("invalid target range [{new_lo}, {new_hi}]")));
    }
    let (lo, hi) = field.bounds();
    let values = if hi > lo {
        let scale = (new_hi - new_lo) / (hi - lo);
        field
            .values
            .iter()
            .map(|v| (new_lo + (v - lo) * scale).clamp(new_lo, new_hi))
            .collect()
    } else {
        vec![new_lo; field.values.len()]
    };
    CoefficientField::new(
        field.eps_exponent,
        values,
        new_lo,
        new_hi,
        Provenance::Rescaled {
            source: Box::new(field.provenance.clone()),
            lo: new_lo,
            hi: new_hi,
        },
    )
}

/// Writes the raster format: `nx ny` header, then values row-major from the
/// bottom-left cell with 17 significant digits.
pub fn save_field(field: &CoefficientField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = 1usize << field.eps_exponent;
    let mut out = String::with_capacity(field.values.len() * 25 + 16);
    out.push_str(&format!("{n} {n}\n"));
    for row in field.values.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<CoefficientField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text, Provenance::File(path.to_path_buf()))
}

pub fn parse_field(text: &str, provenance: Provenance) -> Result<CoefficientField> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: 1,
            msg: format!("malformed header {header:?}"),
        })?;
    let (nx, ny) = match dims.as_slice() {
        [nx, ny] => (*nx, *ny),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header must be \"nx ny\", got {header:?}"),
            })
        }
    };
    if nx != ny || !nx.is_power_of_two() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("raster must be square with power-of-two side, got {nx} x {ny}"),
        });
    }
    let mut values = Vec::with_capacity(nx * ny);
    let mut last_line = 1;
    for (i, line) in lines {
        last_line = i + 1;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("not a number: {tok:?}"),
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("coefficient values must be positive and finite, got {v}"),
                });
            }
            values.push(v);
        }
    }
    if values.len() != nx * ny {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("expected {} values, found {}", nx * ny, values.len()),
        });
    }
    let eps_exponent = nx.trailing_zeros();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    CoefficientField::new(eps_exponent, values, lo, hi, provenance)
}

/// Per-fine-element coefficient values (row-major over `fine` elements).
pub fn values_on_fine(field: &CoefficientField, fine: &MeshLevel) -> Result<Vec<f64>> {
    let eps = crate::grid::build_level(field.eps_exponent)?;
    let ratio = level_ratio(&eps, fine).map_err(|_| {
        Error::Resolution(format!(
            "fine level {} does not resolve coefficient level {}",
            fine.exponent(),
            field.eps_exponent
        ))
    })?;
    let n = fine.n_elems_per_axis();
    let ne = eps.n_elems_per_axis();
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            out.push(field.values[(iy / ratio) * ne + ix / ratio]);
        }
    }
    Ok(out)
}
