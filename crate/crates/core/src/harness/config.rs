//! Experiment configuration: per-example defaults, flat `key = value` files
//! and overrides, validation, and a complete echo for replay.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coeff::{load_field, random_field, rescale_field, structured_field, CoefficientField, Pattern};
use crate::error::{Error, Result};
use crate::lod::Ell;
use crate::metrics::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleId {
    Example1,
    Example2,
    Example3,
    Custom,
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleId::Example1 => "example1",
            ExampleId::Example2 => "example2",
            ExampleId::Example3 => "example3",
            ExampleId::Custom => "custom",
        })
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "example1" => Ok(ExampleId::Example1),
            "example2" => Ok(ExampleId::Example2),
            "example3" => Ok(ExampleId::Example3),
            "custom" => Ok(ExampleId::Custom),
            other => Err(Error::Config(format!("unknown example '{other}'"))),
        }
    }
}

/// Mesh the step-size factor multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtScale {
    /// `Δt = factor · h` for every scheme.
    Fine,
    /// `Δt = factor · H` for coarse schemes; the reference picks its own stable divisor.
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtRule {
    pub factor: f64,
    pub scale: DtScale,
}

impl DtRule {
    /// Step count on `[0, T]` for mesh width `width`: the smallest `N` with `T/N ≤ factor·width`.
    pub fn steps(&self, final_time: f64, width: f64) -> usize {
        let n = final_time / (self.factor * width);
        ((n * (1.0 - 1e-12)).ceil() as usize).max(2)
    }
}

/// Where a coefficient field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Random { lo: f64, hi: f64 },
    Pattern(Pattern),
    File(PathBuf),
}

impl fmt::Display for FieldSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSource::Random { lo, hi } => write!(f, "random:{lo}:{hi}"),
            FieldSource::Pattern(p) => write!(f, "{p}"),
            FieldSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for FieldSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(FieldSource::File(PathBuf::from(path)));
        }
        if let Some(range) = s.strip_prefix("random:") {
            let (lo, hi) = parse_pair(range, ':')?;
            return Ok(FieldSource::Random { lo, hi });
        }
        Ok(FieldSource::Pattern(Pattern::parse(s)?))
    }
}

/// Source term `f(x, t) = g(x) c(t)` of the examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKind {
    /// `sin(πx₁) sin(πx₂) cos(πt/2)`.
    Smooth,
    /// `sin(3πx₁) x₂(1 − x₂) t²`.
    Polynomial,
}

impl ForcingKind {
    pub fn spatial(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            ForcingKind::Smooth => (PI * x).sin() * (PI * y).sin(),
            ForcingKind::Polynomial => (3.0 * PI * x).sin() * y * (1.0 - y),
        }
    }

    pub fn temporal(&self, t: f64) -> f64 {
        match self {
            ForcingKind::Smooth => (0.5 * std::f64::consts::PI * t).cos(),
            ForcingKind::Polynomial => t * t,
        }
    }

    /// `max |c(t)|` on `[0, T]`.
    pub fn temporal_max(&self, final_time: f64) -> f64 {
        match self {
            ForcingKind::Smooth => 1.0,
            ForcingKind::Polynomial => final_time * final_time,
        }
    }
}

impl fmt::Display for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForcingKind::Smooth => "smooth",
            ForcingKind::Polynomial => "polynomial",
        })
    }
}

impl FromStr for ForcingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "smooth" => Ok(ForcingKind::Smooth),
            "polynomial" => Ok(ForcingKind::Polynomial),
            other => Err(Error::Config(format!("unknown forcing '{other}'"))),
        }
    }
}

/// Mass matrix of the fine reference scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMass {
    Lumped,
    Consistent,
}

impl fmt::Display for ReferenceMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMass::Lumped => "lumped",
            ReferenceMass::Consistent => "consistent",
        })
    }
}

impl FromStr for ReferenceMass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lumped" => Ok(ReferenceMass::Lumped),
            "consistent" => Ok(ReferenceMass::Consistent),
            other => Err(Error::Config(format!("unknown reference mass '{other}'"))),
        }
    }
}

/// Coarse load vector of the mass-lumped multiscale rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LumpedLoad {
    /// Π_H applied to the fine nodal forcing.
    Projected,
    /// Forcing sampled at the coarse nodes.
    Nodal,
}

impl fmt::Display for LumpedLoad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LumpedLoad::Projected => "projected",
            LumpedLoad::Nodal => "nodal",
        })
    }
}

impl FromStr for LumpedLoad {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "projected" => Ok(LumpedLoad::Projected),
            "nodal" => Ok(LumpedLoad::Nodal),
            other => Err(Error::Config(format!("unknown lumped load '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: ExampleId,
    pub h_exponents: Vec<u32>,
    pub ells: Vec<Ell>,
    pub fine: u32,
    pub eps: u32,
    pub seed: u64,
    pub final_time: f64,
    pub dt: DtRule,
    pub variants: Vec<Variant>,
    pub alpha: FieldSource,
    pub beta: FieldSource,
    /// Affine rescaling of both fields onto this range.
    pub rescale: Option<(f64, f64)>,
    pub forcing: ForcingKind,
    pub reference_mass: ReferenceMass,
    pub lumped_load: LumpedLoad,
    pub cfl_delta: f64,
    pub allow_cfl_violation: bool,
    pub energy_check: bool,
    pub timing: bool,
    pub timing_h: Vec<u32>,
    pub out: PathBuf,
    pub deterministic: bool,
    pub threads: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

/// Every key accepted in config files and `--set`, in echo order.
pub const KEYS: &[&str] = &[
    "example",
    "hmin",
    "hmax",
    "ell",
    "fine",
    "eps",
    "seed",
    "final_time",
    "dt_factor",
    "dt_scale",
    "variants",
    "alpha",
    "beta",
    "alpha_file",
    "beta_file",
    "rescale",
    "forcing",
    "reference_mass",
    "lumped_load",
    "cfl_delta",
    "allow_cfl_violation",
    "energy_check",
    "timing",
    "timing_h",
    "out",
    "deterministic",
    "threads",
    "cache_dir",
];

fn parse_pair(s: &str, sep: char) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(sep).collect();
    match parts.as_slice() {
        [a, b] => Ok((parse_num(a)?, parse_num(b)?)),
        _ => Err(Error::Config(format!("expected two numbers separated by '{sep}', got '{s}'"))),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("cannot parse '{}'", s.trim())))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("expected a boolean, got '{other}'"))),
    }
}

fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Settings of the published experiments; seed and output directory are artifact choices.
    pub fn defaults(example: ExampleId) -> Self {
        let mut cfg = Self {
            example,
            h_exponents: (1..=6).collect(),
            ells: vec![Ell::Finite(2), Ell::Finite(3), Ell::Finite(4)],
            fine: 7,
            eps: 6,
            seed: 20_240_601,
            final_time: 1.0,
            dt: DtRule {
                factor: 0.25,
                scale: DtScale::Fine,
            },
            variants: Variant::ALL.to_vec(),
            alpha: FieldSource::Random { lo: 1.0, hi: 2.5 },
            beta: FieldSource::Random { lo: 0.5, hi: 4.0 },
            rescale: None,
            forcing: ForcingKind::Smooth,
            reference_mass: ReferenceMass::Lumped,
            lumped_load: LumpedLoad::Projected,
            cfl_delta: 0.1,
            allow_cfl_violation: false,
            energy_check: true,
            timing: example == ExampleId::Example1,
            timing_h: vec![4, 5, 6],
            out: PathBuf::from(format!("out/{example}")),
            deterministic: false,
            threads: None,
            cache_dir: None,
        };
        match example {
            ExampleId::Example2 => {
                cfg.dt = DtRule {
                    factor: 0.15,
                    scale: DtScale::Coarse,
                };
                cfg.alpha = FieldSource::Pattern(Pattern::Checkerboard {
                    block: 8,
                    lo: 1.0,
                    hi: 18.0,
                });
                cfg.beta = FieldSource::Pattern(Pattern::Stripes {
                    width: 4,
                    values: vec![1.0, 18.0],
                });
                cfg.forcing = ForcingKind::Polynomial;
            }
            ExampleId::Example3 => {
                cfg.dt = DtRule {
                    factor: 0.01,
                    scale: DtScale::Coarse,
                };
                cfg.rescale = Some((0.01, 100.0));
            }
            ExampleId::Example1 | ExampleId::Custom => {}
        }
        cfg
    }

    /// Applies one `key = value` setting; `example` is handled by the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "example" => {
                let id: ExampleId = value.parse()?;
                if id != self.example {
                    return Err(Error::Config(format!(
                        "config names example '{id}' but '{}' was selected",
                        self.example
                    )));
                }
            }
            "hmin" => {
                let lo: u32 = parse_num(value)?;
                let hi = self.h_exponents.last().copied().unwrap_or(lo);
                self.h_exponents = (lo..=hi.max(lo)).collect();
            }
            "hmax" => {
                let hi: u32 = parse_num(value)?;
                let lo = self.h_exponents.first().copied().unwrap_or(hi);
                self.h_exponents = (lo.min(hi)..=hi).collect();
            }
            "ell" => self.ells = parse_list(value)?,
            "fine" => self.fine = parse_num(value)?,
            "eps" => self.eps = parse_num(value)?,
            "seed" => self.seed = parse_num(value)?,
            "final_time" => self.final_time = parse_num(value)?,
            "dt_factor" => self.dt.factor = parse_num(value)?,
            "dt_scale" => {
                self.dt.scale = match value {
                    "fine" => DtScale::Fine,
                    "coarse" => DtScale::Coarse,
                    other => return Err(Error::Config(format!("unknown dt scale '{other}'"))),
                }
            }
            "variants" => self.variants = parse_list(value)?,
            "alpha" => self.alpha = value.parse()?,
            "beta" => self.beta = value.parse()?,
            "alpha_file" => self.alpha = FieldSource::File(PathBuf::from(value)),
            "beta_file" => self.beta = FieldSource::File(PathBuf::from(value)),
            "rescale" => {
                self.rescale = if value == "none" { None } else { Some(parse_pair(value, ',')?) };
            }
            "forcing" => self.forcing = value.parse()?,
            "reference_mass" => self.reference_mass = value.parse()?,
            "lumped_load" => self.lumped_load = value.parse()?,
            "cfl_delta" => self.cfl_delta = parse_num(value)?,
            "allow_cfl_violation" => self.allow_cfl_violation = parse_bool(value)?,
            "energy_check" => self.energy_check = parse_bool(value)?,
            "timing" => self.timing = parse_bool(value)?,
            "timing_h" => self.timing_h = value.split(',').map(parse_num).collect::<Result<_>>()?,
            "out" => self.out = PathBuf::from(value),
            "deterministic" => self.deterministic = parse_bool(value)?,
            "threads" => {
                self.threads = if value == "auto" { None } else { Some(parse_num(value)?) };
            }
            "cache_dir" => {
                self.cache_dir = if value == "none" { None } else { Some(PathBuf::from(value)) };
            }
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let hmax = *self
            .h_exponents
            .iter()
            .max()
            .ok_or_else(|| Error::Config("empty coarse mesh list".into()))?;
        if self.h_exponents.iter().any(|&k| k == 0) {
            return Err(Error::Config("coarse exponents must be at least 1".into()));
        }
        if self.fine < hmax || self.fine < self.eps {
            return Err(Error::Config(format!(
                "fine exponent {} must be at least the coarsest-resolution exponents (H up to {hmax}, eps {})",
                self.fine, self.eps
            )));
        }
        if self.ells.is_empty() && self.variants.iter().any(|v| v.uses_ell()) {
            return Err(Error::Config("multiscale variants need at least one localization order".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants selected".into()));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::Config(format!("final time must be positive, got {}", self.final_time)));
        }
        if !(self.dt.factor > 0.0 && self.dt.factor.is_finite()) {
            return Err(Error::Config(format!("step factor must be positive, got {}", self.dt.factor)));
        }
        if !(0.0..1.0).contains(&self.cfl_delta) {
            return Err(Error::Config(format!("cfl_delta must lie in [0, 1), got {}", self.cfl_delta)));
        }
        if let Some((lo, hi)) = self.rescale {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!("invalid rescale range [{lo}, {hi}]")));
            }
        }
        if self.timing && self.timing_h.iter().any(|&k| k == 0 || k > self.fine) {
            return Err(Error::Config("timing exponents must lie in [1, fine]".into()));
        }
        if self.example == ExampleId::Custom
            && !(matches!(self.alpha, FieldSource::File(_)) && matches!(self.beta, FieldSource::File(_)))
        {
            return Err(Error::Config("the custom example needs alpha_file and beta_file".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    /// Every setting as `key = value` lines; feeding them back reproduces the config.
    pub fn echo(&self) -> String {
        let hmin = self.h_exponents.iter().min().copied().unwrap_or(1);
        let hmax = self.h_exponents.iter().max().copied().unwrap_or(1);
        let lines = [
            ("example", self.example.to_string()),
            ("hmin", hmin.to_string()),
            ("hmax", hmax.to_string()),
            ("ell", join(&self.ells)),
            ("fine", self.fine.to_string()),
            ("eps", self.eps.to_string()),
            ("seed", self.seed.to_string()),
            ("final_time", self.final_time.to_string()),
            ("dt_factor", self.dt.factor.to_string()),
            (
                "dt_scale",
                match self.dt.scale {
                    DtScale::Fine => "fine".into(),
                    DtScale::Coarse => "coarse".into(),
                },
            ),
            ("variants", join(&self.variants)),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            (
                "rescale",
                self.rescale.map_or("none".into(), |(lo, hi)| format!("{lo},{hi}")),
            ),
            ("forcing", self.forcing.to_string()),
            ("reference_mass", self.reference_mass.to_string()),
            ("lumped_load", self.lumped_load.to_string()),
            ("cfl_delta", self.cfl_delta.to_string()),
            ("allow_cfl_violation", self.allow_cfl_violation.to_string()),
            ("energy_check", self.energy_check.to_string()),
            ("timing", self.timing.to_string()),
            ("timing_h", join(&self.timing_h)),
            ("out", self.out.display().to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("threads", self.threads.map_or("auto".into(), |t| t.to_string())),
            (
                "cache_dir",
                self.cache_dir.as_ref().map_or("none".into(), |p| p.display().to_string()),
            ),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Materializes α and β; the random β stream uses `seed + 1`.
    pub fn fields(&self) -> Result<(CoefficientField, CoefficientField)> {
        let make = |src: &FieldSource, seed: u64| -> Result<CoefficientField> {
            match src {
                FieldSource::Random { lo, hi } => random_field(self.eps, *lo, *hi, seed),
                FieldSource::Pattern(p) => structured_field(self.eps, p),
                FieldSource::File(path) => load_field(path),
            }
        };
        let mut alpha = make(&self.alpha, self.seed)?;
        let mut beta = make(&self.beta, self.seed.wrapping_add(1))?;
        if let Some((lo, hi)) = self.rescale {
            alpha = rescale_field(&alpha, lo, hi)?;
            beta = rescale_field(&beta, lo, hi)?;
        }
        for f in [&alpha, &beta] {
            if f.eps_exponent() > self.fine {
                return Err(Error::Config(format!(
                    "coefficient level {} is finer than the fine mesh {}",
                    f.eps_exponent(),
                    self.fine
                )));
            }
        }
        Ok((alpha, beta))
    }

    /// Localization order used by the naive-averaging ablation: the largest requested.
    pub fn naive_ell(&self) -> Option<Ell> {
        self.ells.iter().copied().max_by_key(|e| match e {
            Ell::Finite(n) => *n,
            Ell::Infinite => usize::MAX,
        })
    }
}

/// Parses flat `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unknown key '{key}'"),
            });
        }
        pairs.push((key.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

/// Defaults of `example`, then the file settings, then the overrides.
pub fn resolve_config(example: ExampleId, file: &[(String, String)], overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(example);
    // hmin/hmax are applied after the rest so that their order does not matter
    let mut range = (None, None);
    for (k, v) in file.iter().chain(overrides) {
        match k.as_str() {
            "hmin" => range.0 = Some(parse_num::<u32>(v)?),
            "hmax" => range.1 = Some(parse_num::<u32>(v)?),
            _ => cfg.set(k, v)?,
        }
    }
    let lo = range.0.unwrap_or(cfg.h_exponents[0]);
    let hi = range.1.unwrap_or(*cfg.h_exponents.last().unwrap());
    if lo > hi {
        return Err(Error::Config(format!("hmin {lo} exceeds hmax {hi}")));
    }
    cfg.h_exponents = (lo..=hi).collect();
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_defaults_encode_the_experiments() {
        let e1 = ExperimentConfig::defaults(ExampleId::Example1);
        assert_eq!(e1.h_exponents, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(e1.dt.steps(1.0, 1.0 / 128.0), 512);
        let e2 = ExperimentConfig::defaults(ExampleId::Example2);
        assert_eq!(e2.forcing, ForcingKind::Polynomial);
        assert_eq!(e2.dt.steps(1.0, 0.5), 14);
        let e3 = ExperimentConfig::defaults(ExampleId::Example3);
        assert_eq!(e3.rescale, Some((0.01, 100.0)));
        assert_eq!(e3.dt.steps(1.0, 1.0 / 64.0), 6400);
        assert!(e1.validate().is_ok());
        assert!(ExperimentConfig::defaults(ExampleId::Custom).validate().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::defaults(ExampleId::Example2);
        cfg.ells = vec![Ell::Finite(1), Ell::Infinite];
        cfg.cache_dir = Some(PathBuf::from("/tmp/x"));
        cfg.lumped_load = LumpedLoad::Nodal;
        let pairs = parse_config_text(&cfg.echo()).unwrap();
        let back = resolve_config(ExampleId::Example2, &pairs, &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_win_and_errors_are_reported() {
        let file = parse_config_text("# comment\nhmax = 3\nseed = 5\n").unwrap();
        let over = vec![("seed".to_string(), "9".to_string()), ("hmin".to_string(), "2".to_string())];
        let cfg = resolve_config(ExampleId::Example1, &file, &over).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.h_exponents, vec![2, 3]);
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
        let bad = vec![("fine".to_string(), "5".to_string())];
        assert!(matches!(resolve_config(ExampleId::Example1, &[], &bad), Err(Error::Config(_))));
        let other = vec![("example".to_string(), "example3".to_string())];
        assert!(resolve_config(ExampleId::Example1, &other, &[]).is_err());
    }

    #[test]
    fn fields_follow_sources() {
        let mut cfg = ExperimentConfig::defaults(ExampleId::Example3);
        cfg.eps = 3;
        let (a, b) = cfg.fields().unwrap();
        assert_eq!(a.bounds(), (0.01, 100.0));
        assert!(b.values().iter().all(|&v| (0.01..=100.0).contains(&v)));
        assert_ne!(a.digest(), b.digest());
        assert_eq!(cfg.naive_ell(), Some(Ell::Finite(4)));
        assert_eq!("random:1:2.5".parse::<FieldSource>().unwrap(), FieldSource::Random { lo: 1.0, hi: 2.5 });
    }
}
