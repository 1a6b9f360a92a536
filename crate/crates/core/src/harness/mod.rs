//! Experiment orchestration: the fine reference, the coarse schemes of a
//! sweep advanced in lockstep with it, the timing study and report files.
//!
//! Rows sharing a reference step advance together: the reference moves one
//! step at a time and each row steps whenever its own time grid reaches the
//! current reference time, so no trajectory is ever stored.

mod config;
mod report;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{lumped_mass_from_values, nodal_function, stiffness_from_values, Norms};
use crate::coeff::CoefficientField;
use crate::dynamics::{
    cfl_bound, homogeneous_energy_check, ConsistentOperator, Forcing, Leapfrog, LumpedOperator, SeparableForcing, TimeGrid,
};
use crate::error::{Error, Result};
use crate::grid::{build_level, MeshLevel};
use crate::interp::{build_pi_from_values, embedding, AveragingMode};
use crate::lod::{build_basis_on, load_basis, save_basis, BasisKey, Ell, FineProblem, MultiscaleBasis};
use crate::metrics::{attach_eocs, ErrorAccumulator, ErrorRecord, Variant};
use crate::sparsela::SparseMatrix;

pub use config::{
    parse_config_text, read_config_file, resolve_config, DtRule, DtScale, ExampleId, ExperimentConfig, FieldSource, ForcingKind,
    LumpedLoad, ReferenceMass, KEYS,
};
pub use report::{emit_report, format_float};

/// CG tolerance of the consistent-mass schemes.
pub const CONSISTENT_TOL: f64 = 1e-8;

/// Timed repetitions per online run in the timing study.
pub const TIMING_REPEATS: usize = 5;
/// Seconds after which no further repetitions are started.
pub const TIMING_BUDGET: f64 = 3.0;

/// One curve point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSpec {
    pub variant: Variant,
    pub h_exponent: u32,
    pub ell: Option<Ell>,
}

impl RowSpec {
    pub fn label(&self) -> String {
        match self.ell {
            Some(l) => format!("{} ell={} H=2^-{}", self.variant, l, self.h_exponent),
            None => format!("{} H=2^-{}", self.variant, self.h_exponent),
        }
    }

    fn mode(&self) -> AveragingMode {
        match self.variant {
            Variant::MllodNaive | Variant::LodNaive => AveragingMode::Naive,
            _ => AveragingMode::Weighted,
        }
    }
}

/// Weighted variants run for every ℓ, naive ones only at the largest ℓ, FEM once per H.
pub fn plan_rows(config: &ExperimentConfig) -> Vec<RowSpec> {
    let mut rows = Vec::new();
    for &k in &config.h_exponents {
        for &variant in &config.variants {
            match variant {
                Variant::MllodWeighted | Variant::LodWeighted => {
                    rows.extend(config.ells.iter().map(|&l| RowSpec {
                        variant,
                        h_exponent: k,
                        ell: Some(l),
                    }));
                }
                Variant::MllodNaive | Variant::LodNaive => {
                    if let Some(l) = config.naive_ell() {
                        rows.push(RowSpec {
                            variant,
                            h_exponent: k,
                            ell: Some(l),
                        });
                    }
                }
                Variant::Fem => rows.push(RowSpec {
                    variant,
                    h_exponent: k,
                    ell: None,
                }),
            }
        }
    }
    rows
}

/// Step-size bound and homogeneous energy diagnostics of one lumped row.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub label: String,
    pub dt: f64,
    pub dt_max: f64,
    pub min_energy: Option<f64>,
    pub max_energy_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub h_exponent: u32,
    pub steps: usize,
    pub offline_seconds: f64,
    pub lumped_seconds: f64,
    pub consistent_seconds: f64,
    pub lumped_iterations: usize,
    pub consistent_iterations: usize,
}

impl TimingRow {
    pub fn speedup(&self) -> f64 {
        self.consistent_seconds / self.lumped_seconds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub steps: usize,
    pub dt: f64,
    pub mass: ReferenceMass,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_echo: String,
    /// `(name, provenance, sha256)` of each coefficient field.
    pub digests: Vec<(String, String, String)>,
    pub records: Vec<ErrorRecord>,
    pub stability: Vec<StabilityRow>,
    pub timing: Vec<TimingRow>,
    pub references: Vec<ReferenceRun>,
    pub failures: Vec<RowFailure>,
    pub environment: String,
}

impl ExperimentReport {
    pub fn record(&self, variant: Variant, ell: Option<Ell>, h_exponent: u32) -> Option<&ErrorRecord> {
        let ell = ell.map(|l| l.to_string());
        self.records
            .iter()
            .find(|r| r.variant == variant && r.ell == ell && r.h_exponent == h_exponent)
    }

    /// Errors of one curve ordered from coarse to fine H.
    pub fn curve(&self, variant: Variant, ell: Option<Ell>) -> Vec<(u32, f64)> {
        let ell = ell.map(|l| l.to_string());
        let mut pts: Vec<(u32, f64)> = self
            .records
            .iter()
            .filter(|r| r.variant == variant && r.ell == ell)
            .map(|r| (r.h_exponent, r.rel_err_h1))
            .collect();
        pts.sort_by_key(|p| p.0);
        pts
    }

    /// Energy-norm errors of one curve ordered from coarse to fine H.
    pub fn energy_curve(&self, variant: Variant, ell: Option<Ell>) -> Vec<(u32, f64)> {
        let ell = ell.map(|l| l.to_string());
        let mut pts: Vec<(u32, f64)> = self
            .records
            .iter()
            .filter(|r| r.variant == variant && r.ell == ell)
            .filter_map(|r| Some((r.h_exponent, r.rel_err_energy?)))
            .collect();
        pts.sort_by_key(|p| p.0);
        pts
    }
}

/// Operators of one coarse level shared by its rows.
struct LevelData {
    coarse: MeshLevel,
    p_weighted: SparseMatrix,
    embedding: SparseMatrix,
    gram: SparseMatrix,
    fem: Option<(SparseMatrix, Vec<f64>, f64)>,
    bases: Vec<MultiscaleBasis>,
}

impl LevelData {
    fn basis(&self, ell: Ell, mode: AveragingMode) -> Option<&MultiscaleBasis> {
        self.bases.iter().find(|b| b.ell == ell && b.mode == mode)
    }
}

fn obtain_basis(config: &ExperimentConfig, problem: &FineProblem, coarse: &MeshLevel, ell: Ell, mode: AveragingMode) -> Result<MultiscaleBasis> {
    let Some(dir) = &config.cache_dir else {
        return build_basis_on(problem, coarse, ell, mode);
    };
    let key = BasisKey::new(problem, coarse, ell, mode);
    let path = dir.join(format!(
        "basis_H{}_h{}_ell{}_{}_{}.bin",
        coarse.exponent(),
        problem.fine.exponent(),
        ell,
        mode,
        &problem.alpha_digest[..16]
    ));
    if path.exists() {
        match load_basis(&path, problem, coarse, ell, mode) {
            Ok(b) => return Ok(b),
            Err(e) => log::warn!("ignoring cached basis {}: {e}", path.display()),
        }
    }
    let basis = build_basis_on(problem, coarse, ell, mode)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_basis(&basis, &key, &path)?;
    Ok(basis)
}

fn build_level_data(
    config: &ExperimentConfig,
    problem: &FineProblem,
    k: u32,
    rows: &[RowSpec],
    failures: &mut Vec<RowFailure>,
) -> Result<LevelData> {
    let coarse = build_level(k)?;
    let fine = problem.fine;
    let p_weighted = build_pi_from_values(&coarse, &fine, &problem.beta, AveragingMode::Weighted, problem.beta_digest.clone())?.p;
    let mut bases: Vec<MultiscaleBasis> = Vec::new();
    let mut fem = None;
    for row in rows.iter().filter(|r| r.h_exponent == k) {
        match row.ell {
            Some(ell) => {
                let mode = row.mode();
                if bases.iter().any(|b| b.ell == ell && b.mode == mode)
                    || failures.iter().any(|f| f.label.starts_with(&basis_label(k, ell, mode)))
                {
                    continue;
                }
                log::info!("building basis H=2^-{k} ell={ell} {mode}");
                match obtain_basis(config, problem, &coarse, ell, mode) {
                    Ok(b) => bases.push(b),
                    Err(e) => failures.push(RowFailure {
                        label: basis_label(k, ell, mode),
                        message: e.to_string(),
                    }),
                }
            }
            None => {
                if fem.is_none() {
                    let start = Instant::now();
                    let kk = stiffness_from_values(&coarse, &fine, &problem.alpha)?;
                    let m = lumped_mass_from_values(&coarse, &fine, &problem.beta)?;
                    fem = Some((kk, m, start.elapsed().as_secs_f64()));
                }
            }
        }
    }
    Ok(LevelData {
        coarse,
        p_weighted,
        embedding: embedding(&coarse, &fine)?,
        gram: Norms::new(&coarse)?.l2_gram,
        fem,
        bases,
    })
}

fn basis_label(k: u32, ell: Ell, mode: AveragingMode) -> String {
    format!("basis H=2^-{k} ell={ell} {mode}")
}

enum Stepper<'a> {
    Lumped(Leapfrog<LumpedOperator<'a>>),
    Consistent(Leapfrog<ConsistentOperator<'a>>),
}

impl Stepper<'_> {
    fn step(&mut self, f: &dyn Forcing) -> Result<()> {
        match self {
            Stepper::Lumped(s) => s.step(f),
            Stepper::Consistent(s) => s.step(f),
        }
    }

    fn index(&self) -> usize {
        match self {
            Stepper::Lumped(s) => s.index(),
            Stepper::Consistent(s) => s.index(),
        }
    }

    fn current(&self) -> &[f64] {
        match self {
            Stepper::Lumped(s) => s.current(),
            Stepper::Consistent(s) => s.current(),
        }
    }
}

/// A coarse scheme advancing in lockstep with the reference.
struct Track<'a> {
    spec: RowSpec,
    /// Reference steps per row step.
    ratio: usize,
    stepper: Stepper<'a>,
    forcing: SeparableForcing<'a>,
    prolong: &'a SparseMatrix,
    acc: ErrorAccumulator<'a>,
    offline: f64,
    online: Duration,
    failure: Option<String>,
}

impl Track<'_> {
    fn advance_to(&mut self, j: usize, reference: &[f64]) {
        if self.failure.is_some() {
            return;
        }
        let result = (|| -> Result<()> {
            let start = Instant::now();
            while self.stepper.index() < j {
                self.stepper.step(&self.forcing)?;
            }
            self.online += start.elapsed();
            let approx = self.prolong.matvec(self.stepper.current())?;
            self.acc.observe(reference, &approx)
        })();
        if let Err(e) = result {
            self.failure = Some(e.to_string());
        }
    }
}

/// Largest stable reference step for the configured mass.
fn reference_dt_max(config: &ExperimentConfig, problem: &FineProblem, lumped: &[f64]) -> Result<f64> {
    let bound = cfl_bound(&problem.a_fine, lumped, config.cfl_delta)?;
    Ok(match config.reference_mass {
        ReferenceMass::Lumped => bound.dt_max,
        // the consistent Q1 mass dominates one ninth of the lumped one
        ReferenceMass::Consistent => bound.dt_max / 3.0,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Splits row step counts into groups sharing one reference step count.
fn reference_groups(row_steps: &[usize], min_ref_steps: usize) -> Vec<(usize, Vec<usize>)> {
    let mut distinct: Vec<usize> = row_steps.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let round_up = |n: usize, base: usize| base * n.div_ceil(base).max(1);
    let per_group: Vec<usize> = distinct.iter().map(|&n| round_up(min_ref_steps, n)).collect();
    let lcm = distinct
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n / gcd(acc, n)));
    if let Some(l) = lcm {
        let joint = round_up(min_ref_steps, l);
        let budget = 2 * per_group.iter().copied().max().unwrap_or(1);
        if joint <= budget {
            return vec![(joint, distinct)];
        }
    }
    distinct.into_iter().zip(per_group).map(|(n, r)| (r, vec![n])).collect()
}

fn environment_note(config: &ExperimentConfig) -> String {
    format!(
        "os={} arch={} threads={} deterministic={} profile={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        rayon::current_num_threads(),
        config.deterministic,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

pub fn run_example1(config: &ExperimentConfig) -> Result<ExperimentReport> {
    expect_example(config, ExampleId::Example1)?;
    run_experiment(config)
}

pub fn run_example2(config: &ExperimentConfig) -> Result<ExperimentReport> {
    expect_example(config, ExampleId::Example2)?;
    run_experiment(config)
}

pub fn run_example3(config: &ExperimentConfig) -> Result<ExperimentReport> {
    expect_example(config, ExampleId::Example3)?;
    run_experiment(config)
}

fn expect_example(config: &ExperimentConfig, id: ExampleId) -> Result<()> {
    if config.example != id {
        return Err(Error::Config(format!("expected an {id} configuration, got {}", config.example)));
    }
    Ok(())
}

/// Runs the sweep (and the timing study if enabled). Row failures are
/// recorded in the report; only setup errors abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let (alpha, beta) = config.fields()?;
    let fine = build_level(config.fine)?;
    let problem = FineProblem::new(&fine, &alpha, &beta)?;
    let rows = plan_rows(config);
    let mut failures = Vec::new();

    let levels: Vec<LevelData> = config
        .h_exponents
        .iter()
        .map(|&k| build_level_data(config, &problem, k, &rows, &mut failures))
        .collect::<Result<_>>()?;
    let (records, stability, references) = run_sweep(config, &problem, &levels, &rows, &mut failures)?;
    drop(levels);

    let timing = if config.timing { timing_study_on(config, &problem)? } else { Vec::new() };
    Ok(ExperimentReport {
        config: config.clone(),
        config_echo: config.echo(),
        digests: digests(&alpha, &beta),
        records,
        stability,
        timing,
        references,
        failures,
        environment: environment_note(config),
    })
}

fn digests(alpha: &CoefficientField, beta: &CoefficientField) -> Vec<(String, String, String)> {
    vec![
        ("alpha".into(), alpha.provenance().to_string(), alpha.digest()),
        ("beta".into(), beta.provenance().to_string(), beta.digest()),
    ]
}

type SweepOutput = (Vec<ErrorRecord>, Vec<StabilityRow>, Vec<ReferenceRun>);

fn run_sweep(
    config: &ExperimentConfig,
    problem: &FineProblem,
    levels: &[LevelData],
    rows: &[RowSpec],
    failures: &mut Vec<RowFailure>,
) -> Result<SweepOutput> {
    let fine = problem.fine;
    let norms = Norms::new(&fine)?;
    let lumped_fine = lumped_mass_from_values(&fine, &fine, &problem.beta)?;
    let g_fine = nodal_function(&fine, &|x, y, _| config.forcing.spatial(x, y), 0.0);
    let forcing = config.forcing;
    let temporal = move |t: f64| forcing.temporal(t);
    let temporal_max = config.forcing.temporal_max(config.final_time);
    let m_g = problem.m_fine.matvec(&g_fine)?;

    let row_steps = |spec: &RowSpec| -> usize {
        let width = match config.dt.scale {
            DtScale::Fine => fine.h(),
            DtScale::Coarse => build_level(spec.h_exponent).map(|m| m.h()).unwrap_or(1.0),
        };
        config.dt.steps(config.final_time, width)
    };
    let ref_dt_max = reference_dt_max(config, problem, &lumped_fine)?;
    let min_ref = match config.dt.scale {
        DtScale::Fine => config.dt.steps(config.final_time, fine.h()),
        DtScale::Coarse => (config.final_time / ref_dt_max * (1.0 - 1e-12)).ceil() as usize,
    };
    if config.dt.scale == DtScale::Fine && config.final_time / min_ref as f64 > ref_dt_max {
        log::warn!("the fine step rule exceeds the reference stability bound");
        if !config.allow_cfl_violation {
            return Err(Error::Config(format!(
                "reference step {:.3e} exceeds the stability bound {:.3e}",
                config.final_time / min_ref as f64,
                ref_dt_max
            )));
        }
    }

    let mut stability = Vec::new();
    let mut records = Vec::new();
    let mut references = Vec::new();
    let steps_of: Vec<usize> = rows.iter().map(row_steps).collect();

    for (n_ref, members) in reference_groups(&steps_of, min_ref.max(2)) {
        let ref_grid = TimeGrid::new(config.final_time, n_ref)?;
        let mut tracks: Vec<Track> = Vec::new();
        for (spec, &steps) in rows.iter().zip(&steps_of).filter(|(_, s)| members.contains(s)) {
            let level = levels
                .iter()
                .find(|l| l.coarse.exponent() == spec.h_exponent)
                .expect("level data exists for every planned row");
            match make_track(config, spec, steps, n_ref, level, &norms, &problem.a_fine, &g_fine, &m_g, &temporal, temporal_max) {
                Ok((track, stab)) => {
                    stability.extend(stab);
                    tracks.push(track);
                }
                Err(e) => failures.push(RowFailure {
                    label: spec.label(),
                    message: e.to_string(),
                }),
            }
        }
        if tracks.is_empty() {
            continue;
        }
        log::info!("reference with {n_ref} steps for {} rows", tracks.len());
        let ref_result = run_group(config, problem, &lumped_fine, &g_fine, &m_g, &temporal, temporal_max, ref_grid, &mut tracks);
        references.push(ReferenceRun {
            steps: n_ref,
            dt: ref_grid.dt(),
            mass: config.reference_mass,
            rows: tracks.len(),
        });
        if let Err(e) = ref_result {
            for t in &tracks {
                failures.push(RowFailure {
                    label: t.spec.label(),
                    message: format!("reference run failed: {e}"),
                });
            }
            continue;
        }
        for t in tracks {
            let outcome = match &t.failure {
                Some(msg) => Err(msg.clone()),
                None => t
                    .acc
                    .relative_h1()
                    .and_then(|h1| Ok((h1, t.acc.relative_energy().transpose()?)))
                    .map_err(|e| e.to_string()),
            };
            match outcome {
                Ok((rel, energy)) => records.push(ErrorRecord {
                    h_exponent: t.spec.h_exponent,
                    ell: t.spec.ell.map(|l| l.to_string()),
                    variant: t.spec.variant,
                    rel_err_h1: rel,
                    rel_err_energy: energy,
                    err_dt_l2: t.acc.dt_l2().unwrap_or(0.0),
                    eoc: None,
                    eoc_energy: None,
                    offline_seconds: Some(t.offline),
                    online_seconds: Some(t.online.as_secs_f64()),
                }),
                Err(message) => failures.push(RowFailure {
                    label: t.spec.label(),
                    message,
                }),
            }
        }
    }
    records.sort_by(|a, b| {
        (a.variant, ell_rank(&a.ell), a.h_exponent).cmp(&(b.variant, ell_rank(&b.ell), b.h_exponent))
    });
    attach_eocs(&mut records);
    Ok((records, stability, references))
}

fn ell_rank(ell: &Option<String>) -> usize {
    match ell.as_deref() {
        None => 0,
        Some("inf") => usize::MAX,
        Some(s) => s.parse().unwrap_or(0),
    }
}

#[allow(clippy::too_many_arguments)]
fn make_track<'a>(
    config: &ExperimentConfig,
    spec: &RowSpec,
    steps: usize,
    n_ref: usize,
    level: &'a LevelData,
    norms: &'a Norms,
    a_fine: &'a SparseMatrix,
    g_fine: &[f64],
    m_g: &[f64],
    temporal: &'a (dyn Fn(f64) -> f64 + Sync),
    temporal_max: f64,
) -> Result<(Track<'a>, Option<StabilityRow>)> {
    let grid = TimeGrid::new(config.final_time, steps)?;
    let (k, m, mass, prolong, spatial, offline): (&SparseMatrix, &[f64], Option<&SparseMatrix>, &SparseMatrix, Vec<f64>, f64) =
        match spec.ell {
            None => {
                let (k, m, t) = level.fem.as_ref().ok_or_else(|| Error::Config("FEM operators missing".into()))?;
                let g = nodal_function(&level.coarse, &|x, y, _| config.forcing.spatial(x, y), 0.0);
                (k, m, None, &level.embedding, g, *t)
            }
            Some(ell) => {
                let basis = level
                    .basis(ell, spec.mode())
                    .ok_or_else(|| Error::Config(format!("basis for {} was not built", spec.label())))?;
                if spec.variant.is_lumped() {
                    let g = match config.lumped_load {
                        LumpedLoad::Projected => basis.interp.p.matvec(g_fine)?,
                        LumpedLoad::Nodal => nodal_function(&level.coarse, &|x, y, _| config.forcing.spatial(x, y), 0.0),
                    };
                    (&basis.k, &basis.m, None, &basis.b, g, basis.offline_seconds)
                } else {
                    let g = basis.b.matvec_transpose(m_g)?;
                    (&basis.k, &basis.m, Some(&basis.m_ms), &basis.b, g, basis.offline_seconds)
                }
            }
        };

    let forcing = SeparableForcing {
        spatial,
        temporal,
        temporal_max,
    };
    let scale = forcing.scale();
    let mut stability = None;
    let stepper = match mass {
        None => {
            let bound = cfl_bound(k, m, config.cfl_delta)?;
            let dt = grid.dt();
            if dt > bound.dt_max {
                let msg = format!("step {dt:.4e} exceeds the stability bound {:.4e}", bound.dt_max);
                if config.allow_cfl_violation {
                    log::warn!("{}: {msg}", spec.label());
                } else {
                    return Err(Error::Config(msg));
                }
            }
            let (min_energy, drift) = if config.energy_check {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
                let start: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let check = homogeneous_energy_check(k, m, grid, &start)?;
                (Some(check.min_energy), Some(check.max_relative_drift))
            } else {
                (None, None)
            };
            stability = Some(StabilityRow {
                label: spec.label(),
                dt,
                dt_max: bound.dt_max,
                min_energy,
                max_energy_drift: drift,
            });
            Stepper::Lumped(Leapfrog::new(LumpedOperator::new(k, m)?, grid, scale))
        }
        Some(mass) => Stepper::Consistent(Leapfrog::new(ConsistentOperator::new(k, mass, CONSISTENT_TOL)?, grid, scale)),
    };
    let track = Track {
        spec: *spec,
        ratio: n_ref / steps,
        stepper,
        forcing,
        prolong,
        acc: ErrorAccumulator::new(norms, Some((&level.p_weighted, &level.gram)), grid.dt()).with_energy(a_fine),
        offline,
        online: Duration::ZERO,
        failure: None,
    };
    Ok((track, stability))
}

#[allow(clippy::too_many_arguments)]
fn run_group(
    config: &ExperimentConfig,
    problem: &FineProblem,
    lumped_fine: &[f64],
    g_fine: &[f64],
    m_g: &[f64],
    temporal: &(dyn Fn(f64) -> f64 + Sync),
    temporal_max: f64,
    grid: TimeGrid,
    tracks: &mut [Track],
) -> Result<()> {
    let zero = vec![0.0; problem.fine.n_dofs()];
    let spatial = match config.reference_mass {
        ReferenceMass::Lumped => g_fine.to_vec(),
        ReferenceMass::Consistent => m_g.to_vec(),
    };
    let forcing = SeparableForcing {
        spatial,
        temporal,
        temporal_max,
    };
    let mut reference = match config.reference_mass {
        ReferenceMass::Lumped => Stepper::Lumped(Leapfrog::new(
            LumpedOperator::new(&problem.a_fine, lumped_fine)?,
            grid,
            forcing.scale(),
        )),
        ReferenceMass::Consistent => Stepper::Consistent(Leapfrog::new(
            ConsistentOperator::new(&problem.a_fine, &problem.m_fine, CONSISTENT_TOL)?,
            grid,
            forcing.scale(),
        )),
    };
    for t in tracks.iter_mut() {
        let _ = t.acc.observe(&zero, &zero);
    }
    for n in 1..=grid.steps() {
        if n >= 2 {
            reference.step(&forcing)?;
        }
        let current = reference.current();
        let due = |t: &&mut Track| n % t.ratio == 0;
        if config.deterministic {
            tracks.iter_mut().filter(due).for_each(|t| t.advance_to(n / t.ratio, current));
        } else {
            tracks.par_iter_mut().filter(due).for_each(|t| t.advance_to(n / t.ratio, current));
        }
    }
    Ok(())
}

/// Offline and online cost of the lumped and consistent schemes on a shared
/// weighted basis at the largest ℓ. Rows run serially; after an untimed
/// warm-up each scheme reports its fastest repetition.
pub fn timing_study(config: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    config.validate()?;
    let (alpha, beta) = config.fields()?;
    let fine = build_level(config.fine)?;
    let problem = FineProblem::new(&fine, &alpha, &beta)?;
    timing_study_on(config, &problem)
}

fn timing_study_on(config: &ExperimentConfig, problem: &FineProblem) -> Result<Vec<TimingRow>> {
    let ell = config.naive_ell().unwrap_or(Ell::Finite(4));
    let fine = problem.fine;
    let g_fine = nodal_function(&fine, &|x, y, _| config.forcing.spatial(x, y), 0.0);
    let m_g = problem.m_fine.matvec(&g_fine)?;
    let forcing_kind = config.forcing;
    let temporal = move |t: f64| forcing_kind.temporal(t);
    let temporal_max = config.forcing.temporal_max(config.final_time);
    let mut rows = Vec::new();
    for &k in &config.timing_h {
        let coarse = build_level(k)?;
        let basis = obtain_basis(config, problem, &coarse, ell, AveragingMode::Weighted)?;
        let width = match config.dt.scale {
            DtScale::Fine => fine.h(),
            DtScale::Coarse => coarse.h(),
        };
        let grid = TimeGrid::new(config.final_time, config.dt.steps(config.final_time, width))?;
        let lumped_forcing = SeparableForcing {
            spatial: basis.interp.p.matvec(&g_fine)?,
            temporal: &temporal,
            temporal_max,
        };
        let consistent_forcing = SeparableForcing {
            spatial: basis.b.matvec_transpose(&m_g)?,
            temporal: &temporal,
            temporal_max,
        };
        let run_lumped = || -> Result<(f64, usize)> {
            let mut lf = Leapfrog::new(LumpedOperator::new(&basis.k, &basis.m)?, grid, lumped_forcing.scale());
            let start = Instant::now();
            while !lf.is_done() {
                lf.step(&lumped_forcing)?;
            }
            Ok((start.elapsed().as_secs_f64(), lf.solve_iterations))
        };
        let run_consistent = || -> Result<(f64, usize)> {
            let op = ConsistentOperator::new(&basis.k, &basis.m_ms, CONSISTENT_TOL)?;
            let mut lf = Leapfrog::new(op, grid, consistent_forcing.scale());
            let start = Instant::now();
            while !lf.is_done() {
                lf.step(&consistent_forcing)?;
            }
            Ok((start.elapsed().as_secs_f64(), lf.solve_iterations))
        };
        run_lumped()?;
        run_consistent()?;
        let (lumped_seconds, lumped_iterations) = best_of(&run_lumped)?;
        let (consistent_seconds, consistent_iterations) = best_of(&run_consistent)?;
        rows.push(TimingRow {
            h_exponent: k,
            steps: grid.steps(),
            offline_seconds: basis.offline_seconds,
            lumped_seconds,
            consistent_seconds,
            lumped_iterations,
            consistent_iterations,
        });
    }
    Ok(rows)
}

/// Fastest of up to [`TIMING_REPEATS`] runs, stopping once [`TIMING_BUDGET`] seconds are spent.
fn best_of(run: &dyn Fn() -> Result<(f64, usize)>) -> Result<(f64, usize)> {
    let mut best = run()?;
    let mut spent = best.0;
    for _ in 1..TIMING_REPEATS {
        if spent >= TIMING_BUDGET {
            break;
        }
        let next = run()?;
        spent += next.0;
        if next.0 < best.0 {
            best = next;
        }
    }
    Ok(best)
}

/// Writes the report and returns the process exit status: 0 on a clean
/// sweep, 2 if some rows failed.
pub fn finish(report: &ExperimentReport, dir: &Path) -> Result<i32> {
    emit_report(report, dir)?;
    Ok(if report.failures.is_empty() { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(example: ExampleId) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(example);
        cfg.h_exponents = vec![1, 2];
        cfg.ells = vec![Ell::Finite(1), Ell::Finite(2)];
        cfg.fine = 4;
        cfg.eps = 3;
        cfg.timing = false;
        cfg.deterministic = true;
        cfg
    }

    #[test]
    fn full_sweep_row_count() {
        let cfg = ExperimentConfig::defaults(ExampleId::Example1);
        assert_eq!(plan_rows(&cfg).len(), 6 * (3 * 2 + 2 + 1));
    }

    #[test]
    fn reference_grouping() {
        assert_eq!(reference_groups(&[512, 512], 512), vec![(512, vec![512])]);
        let g = reference_groups(&[200, 400, 800], 1000);
        assert_eq!(g, vec![(1600, vec![200, 400, 800])]);
        let g = reference_groups(&[14, 27, 107], 700);
        assert_eq!(g.len(), 3);
        for (r, ns) in g {
            assert!(r >= 700 && r % ns[0] == 0);
        }
    }

    #[test]
    fn small_sweep_produces_every_row() {
        let cfg = small(ExampleId::Example1);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert_eq!(report.records.len(), plan_rows(&cfg).len());
        assert_eq!(report.references.len(), 1);
        assert!(report.records.iter().all(|r| r.rel_err_h1 > 0.0 && r.rel_err_h1.is_finite()));
        let stab = &report.stability;
        assert!(stab.iter().all(|s| s.min_energy.unwrap() >= 0.0 && s.dt <= s.dt_max));
    }

    #[test]
    fn coarse_step_rule_uses_reference_divisors() {
        let mut cfg = small(ExampleId::Example2);
        cfg.variants = vec![Variant::MllodWeighted];
        cfg.ells = vec![Ell::Finite(2)];
        let report = run_experiment(&cfg).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert_eq!(report.records.len(), 2);
        for r in &report.references {
            assert!(r.steps >= 2);
        }
    }

    #[test]
    fn wrong_example_is_rejected() {
        let cfg = small(ExampleId::Example1);
        assert!(run_example2(&cfg).is_err());
    }
}
