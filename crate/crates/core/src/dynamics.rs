//! Explicit leapfrog time stepping
//!
//! ```text
//!   u^{n+1} = 2u^n − u^{n−1} + Δt² a(u^n, t^n)
//! ```
//!
//! where the acceleration `a` is `m⁻¹(−K u) + g(t)` for the lumped schemes and
//! `M⁻¹(F(t) − K u)` for the consistent-mass baseline. Also the step-size
//! bound and discrete-energy diagnostics.

use crate::error::{Error, Result};
use crate::sparsela::{cg_solve_operator, dot, lambda_max, EigenEstimate, EigenOptions, SparseMatrix};

/// Growth factor of the state over its initial scale that counts as a blow-up.
pub const BLOWUP_FACTOR: f64 = 1e12;

/// Uniform time grid `t^n = n Δt`, `Δt = T / N_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::Domain(format!("final time must be positive, got {final_time}")));
        }
        if steps < 2 {
            return Err(Error::Bounds {
                what: "step count",
                value: steps as i64,
                lo: 2,
                hi: i64::MAX,
            });
        }
        Ok(Self { final_time, steps })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.final_time * n as f64 / self.steps as f64
    }
}

/// Spectral step-size bound `Δt_max = 2√(1−δ) / √λ_max(m⁻¹K)`.
#[derive(Debug, Clone, Copy)]
pub struct CflBound {
    pub lambda_max: f64,
    pub dt_max: f64,
    pub delta: f64,
    /// `None` when the eigenvalue estimate failed and the Gershgorin bound was used.
    pub estimate: Option<EigenEstimate>,
}

impl CflBound {
    /// The sharp stability limit `2 / √λ_max` (the bound at δ = 0).
    pub fn dt_limit(&self) -> f64 {
        2.0 / self.lambda_max.sqrt()
    }
}

/// Upper bound of `λ_max(m⁻¹K)` from Gershgorin discs of `m⁻¹K`.
pub fn gershgorin_bound(k: &SparseMatrix, m: &[f64]) -> f64 {
    (0..k.n_rows())
        .map(|i| k.row(i).map(|(_, v)| v.abs()).sum::<f64>() / m[i])
        .fold(0.0, f64::max)
}

pub fn cfl_bound(k: &SparseMatrix, m: &[f64], delta: f64) -> Result<CflBound> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("CFL safety δ must lie in [0, 1), got {delta}")));
    }
    if m.len() != k.n_rows() || m.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("lumped mass must be positive and match K".into()));
    }
    let inv: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
    let (lambda, estimate) = match lambda_max(k, &inv, EigenOptions::default()) {
        Ok(e) if e.value > 0.0 => (e.value, Some(e)),
        _ => {
            log::warn!("eigenvalue estimate failed; using the Gershgorin bound");
            (gershgorin_bound(k, m), None)
        }
    };
    Ok(CflBound {
        lambda_max: lambda,
        dt_max: 2.0 * (1.0 - delta).sqrt() / lambda.sqrt(),
        delta,
        estimate,
    })
}

/// Coarsest grid on `[0, T]` whose step respects the bound; at least two steps.
pub fn cfl_dt(k: &SparseMatrix, m: &[f64], delta: f64, final_time: f64) -> Result<TimeGrid> {
    let bound = cfl_bound(k, m, delta)?;
    let steps = ((final_time / bound.dt_max) * (1.0 - 1e-12)).ceil().max(2.0) as usize;
    TimeGrid::new(final_time, steps)
}

/// Source term evaluated into a vector at time `t`.
pub trait Forcing {
    fn eval(&self, t: f64, out: &mut [f64]);
    /// Bound on `max_t ‖f(t)‖_∞`, used to scale the blow-up detector.
    fn scale(&self) -> f64;
}

/// `g · c(t)` with a fixed spatial vector.
pub struct SeparableForcing<'a> {
    pub spatial: Vec<f64>,
    pub temporal: &'a (dyn Fn(f64) -> f64 + Sync),
    /// `max |c(t)|` over the time interval.
    pub temporal_max: f64,
}

impl Forcing for SeparableForcing<'_> {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let c = (self.temporal)(t);
        out.iter_mut().zip(&self.spatial).for_each(|(o, g)| *o = g * c);
    }

    fn scale(&self) -> f64 {
        self.spatial.iter().fold(0.0f64, |m, v| m.max(v.abs())) * self.temporal_max
    }
}

pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn scale(&self) -> f64 {
        0.0
    }
}

/// Maps `(u, f)` to the acceleration; returns the linear-solve iterations spent.
pub trait Acceleration {
    fn dim(&self) -> usize;
    fn accelerate(&mut self, u: &[f64], f: &[f64], out: &mut [f64]) -> Result<usize>;
}

/// `a = −m⁻¹ K u + f`. Holds only a matrix and a diagonal, so it cannot solve.
pub struct LumpedOperator<'a> {
    k: &'a SparseMatrix,
    inv_m: Vec<f64>,
}

impl<'a> LumpedOperator<'a> {
    pub fn new(k: &'a SparseMatrix, m: &[f64]) -> Result<Self> {
        if k.n_rows() != k.n_cols() || m.len() != k.n_rows() {
            return Err(Error::Dimension("lumped operator blocks do not conform".into()));
        }
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("lumped mass must be positive".into()));
        }
        Ok(Self {
            k,
            inv_m: m.iter().map(|v| 1.0 / v).collect(),
        })
    }
}

impl Acceleration for LumpedOperator<'_> {
    fn dim(&self) -> usize {
        self.k.n_rows()
    }

    fn accelerate(&mut self, u: &[f64], f: &[f64], out: &mut [f64]) -> Result<usize> {
        self.k.matvec_into(u, out)?;
        for ((o, w), g) in out.iter_mut().zip(&self.inv_m).zip(f) {
            *o = g - *o * w;
        }
        Ok(0)
    }
}

/// `M a = f − K u`, solved by warm-started Jacobi-preconditioned CG.
pub struct ConsistentOperator<'a> {
    k: &'a SparseMatrix,
    mass: &'a SparseMatrix,
    inv_diag: Vec<f64>,
    tol: f64,
    max_iter: usize,
    previous: Vec<f64>,
    rhs: Vec<f64>,
    pub total_iterations: usize,
}

impl<'a> ConsistentOperator<'a> {
    pub fn new(k: &'a SparseMatrix, mass: &'a SparseMatrix, tol: f64) -> Result<Self> {
        let n = k.n_rows();
        if k.n_cols() != n || mass.n_rows() != n || mass.n_cols() != n {
            return Err(Error::Dimension("consistent operator blocks do not conform".into()));
        }
        let d = mass.diagonal();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Singular("mass matrix needs a positive diagonal".into()));
        }
        Ok(Self {
            k,
            mass,
            inv_diag: d.iter().map(|v| 1.0 / v).collect(),
            tol,
            max_iter: 10 * n + 100,
            previous: vec![0.0; n],
            rhs: vec![0.0; n],
            total_iterations: 0,
        })
    }
}

impl Acceleration for ConsistentOperator<'_> {
    fn dim(&self) -> usize {
        self.k.n_rows()
    }

    fn accelerate(&mut self, u: &[f64], f: &[f64], out: &mut [f64]) -> Result<usize> {
        self.k.matvec_into(u, &mut self.rhs)?;
        self.rhs.iter_mut().zip(f).for_each(|(r, g)| *r = g - *r);
        let sol = cg_solve_operator(self.mass, &self.rhs, Some(&self.previous), Some(&self.inv_diag), self.tol, self.max_iter)?;
        out.copy_from_slice(&sol.x);
        self.previous = sol.x;
        self.total_iterations += sol.iterations;
        Ok(sol.iterations)
    }
}

/// Leapfrog state `(u^{n−1}, u^n)` advanced one step at a time.
pub struct Leapfrog<A: Acceleration> {
    op: A,
    grid: TimeGrid,
    n: usize,
    prev: Vec<f64>,
    cur: Vec<f64>,
    accel: Vec<f64>,
    load: Vec<f64>,
    limit: f64,
    pub solve_iterations: usize,
}

impl<A: Acceleration> Leapfrog<A> {
    /// Zero initial data `u⁰ = u¹ = 0`; the state starts at `n = 1`.
    pub fn new(op: A, grid: TimeGrid, forcing_scale: f64) -> Self {
        let n = op.dim();
        Self::with_state(op, grid, vec![0.0; n], vec![0.0; n], forcing_scale)
    }

    /// Arbitrary initial pair `(u⁰, u¹)`.
    pub fn with_state(op: A, grid: TimeGrid, u0: Vec<f64>, u1: Vec<f64>, forcing_scale: f64) -> Self {
        let n = op.dim();
        let init = u0.iter().chain(&u1).fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = forcing_scale.max(init);
        Self {
            op,
            grid,
            n: 1,
            prev: u0,
            cur: u1,
            accel: vec![0.0; n],
            load: vec![0.0; n],
            limit: BLOWUP_FACTOR * if scale > 0.0 { scale } else { 1.0 },
            solve_iterations: 0,
        }
    }

    /// Index of the current state `u^n`.
    pub fn index(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.grid.time(self.n)
    }

    pub fn current(&self) -> &[f64] {
        &self.cur
    }

    pub fn previous(&self) -> &[f64] {
        &self.prev
    }

    pub fn is_done(&self) -> bool {
        self.n >= self.grid.steps()
    }

    pub fn operator(&self) -> &A {
        &self.op
    }

    pub fn step(&mut self, forcing: &dyn Forcing) -> Result<()> {
        let dt = self.grid.dt();
        forcing.eval(self.grid.time(self.n), &mut self.load);
        self.solve_iterations += self.op.accelerate(&self.cur, &self.load, &mut self.accel)?;
        let dt2 = dt * dt;
        let mut peak = 0.0f64;
        for ((p, c), a) in self.prev.iter_mut().zip(&self.cur).zip(&self.accel) {
            // p becomes u^{n+1}
            *p = 2.0 * c - *p + dt2 * a;
            peak = peak.max(p.abs());
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
        self.n += 1;
        if !(peak <= self.limit) {
            return Err(Error::Instability {
                step: self.n,
                norm: peak,
                limit: self.limit,
            });
        }
        Ok(())
    }

    /// Swaps `u^{n−1}` and `u^n`; stepping then runs the recursion backwards in time.
    pub fn reverse(&mut self) {
        std::mem::swap(&mut self.prev, &mut self.cur);
    }

    pub fn into_operator(self) -> A {
        self.op
    }
}

/// Snapshots of a completed run.
#[derive(Debug, Clone)]
pub struct WaveTrajectory {
    pub grid: TimeGrid,
    pub stride: usize,
    /// `(n, u^n)` for `n = 0, stride, 2·stride, …` and always the final step.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub solve_iterations: usize,
}

/// Runs `op` over the whole grid with zero initial data, calling
/// `observer(n, t^n, u^n)` at every stored snapshot.
pub fn run_leapfrog<A: Acceleration>(
    op: A,
    forcing: &dyn Forcing,
    grid: TimeGrid,
    stride: usize,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<WaveTrajectory> {
    let stride = stride.max(1);
    let mut lf = Leapfrog::new(op, grid, forcing.scale());
    let mut snapshots = Vec::new();
    let mut record = |n: usize, u: &[f64], snaps: &mut Vec<(usize, Vec<f64>)>| {
        if n % stride == 0 || n == grid.steps() {
            observer(n, grid.time(n), u);
            snaps.push((n, u.to_vec()));
        }
    };
    record(0, lf.previous(), &mut snapshots);
    record(1, lf.current(), &mut snapshots);
    while !lf.is_done() {
        lf.step(forcing)?;
        let n = lf.index();
        record(n, lf.current(), &mut snapshots);
    }
    Ok(WaveTrajectory {
        grid,
        stride,
        snapshots,
        solve_iterations: lf.solve_iterations,
    })
}

/// Mass-lumped leapfrog: one matvec and a diagonal scaling per step.
pub fn leapfrog_lumped(
    k: &SparseMatrix,
    m: &[f64],
    forcing: &dyn Forcing,
    grid: TimeGrid,
    stride: usize,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<WaveTrajectory> {
    run_leapfrog(LumpedOperator::new(k, m)?, forcing, grid, stride, observer)
}

/// Consistent-mass leapfrog with a CG solve per step.
pub fn leapfrog_consistent(
    mass: &SparseMatrix,
    k: &SparseMatrix,
    forcing: &dyn Forcing,
    grid: TimeGrid,
    tol: f64,
    stride: usize,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<WaveTrajectory> {
    let traj = run_leapfrog(ConsistentOperator::new(k, mass, tol)?, forcing, grid, stride, observer)?;
    log::debug!(
        "consistent leapfrog: {} steps, {} CG iterations",
        grid.steps(),
        traj.solve_iterations
    );
    Ok(traj)
}

/// `E^n = ½‖(u^n − u^{n−1})/Δt‖²_m + ½ (u^{n−1})ᵀ K u^n`.
pub fn discrete_energy(prev: &[f64], cur: &[f64], dt: f64, k: &SparseMatrix, m: &[f64]) -> Result<f64> {
    let kinetic: f64 = prev
        .iter()
        .zip(cur)
        .zip(m)
        .map(|((p, c), m)| {
            let v = (c - p) / dt;
            m * v * v
        })
        .sum();
    let ku = k.matvec(cur)?;
    Ok(0.5 * kinetic + 0.5 * dot(prev, &ku))
}

/// Outcome of a homogeneous run started from `u⁰ = 0`, `u¹ = v`.
#[derive(Debug, Clone, Copy)]
pub struct EnergyCheck {
    pub min_energy: f64,
    pub max_relative_drift: f64,
    pub steps: usize,
}

pub fn homogeneous_energy_check(k: &SparseMatrix, m: &[f64], grid: TimeGrid, start: &[f64]) -> Result<EnergyCheck> {
    let dt = grid.dt();
    let zero = vec![0.0; start.len()];
    let e0 = discrete_energy(&zero, start, dt, k, m)?;
    let mut lf = Leapfrog::with_state(LumpedOperator::new(k, m)?, grid, zero, start.to_vec(), 0.0);
    let mut min_energy = e0;
    let mut drift = 0.0f64;
    while !lf.is_done() {
        lf.step(&ZeroForcing)?;
        let e = discrete_energy(lf.previous(), lf.current(), dt, k, m)?;
        min_energy = min_energy.min(e);
        drift = drift.max((e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
    }
    Ok(EnergyCheck {
        min_energy,
        max_relative_drift: drift,
        steps: grid.steps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{lumped_mass_from_values, stiffness_from_values};
    use crate::grid::build_level;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fem(k: u32, seed: u64) -> (SparseMatrix, Vec<f64>) {
        let mesh = build_level(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha: Vec<f64> = (0..mesh.n_elems()).map(|_| rng.gen_range(1.0..2.5)).collect();
        let beta: Vec<f64> = (0..mesh.n_elems()).map(|_| rng.gen_range(0.5..4.0)).collect();
        (
            stiffness_from_values(&mesh, &mesh, &alpha).unwrap(),
            lumped_mass_from_values(&mesh, &mesh, &beta).unwrap(),
        )
    }

    #[test]
    fn time_grid_basics() {
        let g = TimeGrid::new(1.0, 512).unwrap();
        assert_eq!(g.dt(), 1.0 / 512.0);
        assert_eq!(g.time(512), 1.0);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn scalar_cfl_example() {
        let k = SparseMatrix::from_diagonal(&[4.0]);
        let b = cfl_bound(&k, &[1.0], 0.0).unwrap();
        assert!((b.dt_max - 1.0).abs() < 1e-12);
        assert_eq!(cfl_dt(&k, &[1.0], 0.0, 1.0).unwrap().steps(), 2);
    }

    #[test]
    fn cfl_against_dense_eigen_oracle() {
        let mesh = build_level(5).unwrap();
        let ones = vec![1.0; mesh.n_elems()];
        let k = stiffness_from_values(&mesh, &mesh, &ones).unwrap();
        let m = lumped_mass_from_values(&mesh, &mesh, &ones).unwrap();
        let b = cfl_bound(&k, &m, 0.1).unwrap();
        let n = m.len();
        let kd = k.to_dense();
        let sym = DMatrix::from_fn(n, n, |i, j| kd[i][j] / (m[i] * m[j]).sqrt());
        let lam = sym.symmetric_eigenvalues().max();
        let exact = 2.0 * 0.9f64.sqrt() / lam.sqrt();
        assert!((b.dt_max - exact).abs() <= 0.05 * exact);
        let h = mesh.h();
        assert!(b.lambda_max <= 8.0 / (h * h) * (1.0 + 1e-3));
        // λ_max is linear in α
        let k2 = k.scaled(2.0);
        let b2 = cfl_bound(&k2, &m, 0.1).unwrap();
        assert!((b2.dt_max - b.dt_max / 2f64.sqrt()).abs() <= 1e-6 * b.dt_max);
        assert!(gershgorin_bound(&k, &m) >= lam * (1.0 - 1e-12));
    }

    #[test]
    fn lumped_eigen_oracle_on_small_meshes() {
        for level in 2..=4 {
            let (k, m) = fem(level, level as u64);
            let n = m.len();
            let kd = k.to_dense();
            let sym = DMatrix::from_fn(n, n, |i, j| kd[i][j] / (m[i] * m[j]).sqrt());
            let lam = sym.symmetric_eigenvalues().max();
            let inv: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
            let est = lambda_max(&k, &inv, EigenOptions::default()).unwrap();
            assert!((est.value - lam).abs() <= 1e-6 * lam);
        }
    }

    #[test]
    fn zero_forcing_gives_zero_trajectory() {
        let (k, m) = fem(3, 1);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let t = leapfrog_lumped(&k, &m, &ZeroForcing, grid, 8, &mut |_, _, _| {}).unwrap();
        assert!(t.snapshots.iter().all(|(_, u)| u.iter().all(|&v| v == 0.0)));
        let mass = SparseMatrix::from_diagonal(&m);
        let t = leapfrog_consistent(&mass, &k, &ZeroForcing, grid, 1e-8, 8, &mut |_, _, _| {}).unwrap();
        assert!(t.snapshots.iter().all(|(_, u)| u.iter().all(|&v| v == 0.0)));
        assert_eq!(t.snapshots.last().unwrap().0, 64);
    }

    #[test]
    fn scalar_recurrence_oracle() {
        let (omega, dt, eps) = (3.0f64, 0.1f64, 0.01f64);
        let k = SparseMatrix::from_diagonal(&[omega * omega * 2.0]);
        let m = [2.0];
        let grid = TimeGrid::new(dt * 200.0, 200).unwrap();
        let mut lf = Leapfrog::with_state(LumpedOperator::new(&k, &m).unwrap(), grid, vec![0.0], vec![eps], 0.0);
        let theta = (1.0 - 0.5 * (omega * dt).powi(2)).acos();
        while !lf.is_done() {
            lf.step(&ZeroForcing).unwrap();
            let n = lf.index() as f64;
            let expect = eps * (n * theta).sin() / theta.sin();
            assert!((lf.current()[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_scalar_recurrence() {
        // u'' + ω² u = c(t): compare with the recursion evaluated by hand
        let omega2 = 5.0;
        let k = SparseMatrix::from_diagonal(&[omega2]);
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let c = |t: f64| (2.0 * t).cos();
        let forcing = SeparableForcing {
            spatial: vec![1.0],
            temporal: &c,
            temporal_max: 1.0,
        };
        let traj = leapfrog_lumped(&k, &[1.0], &forcing, grid, 1, &mut |_, _, _| {}).unwrap();
        let dt = grid.dt();
        let (mut p, mut u) = (0.0f64, 0.0f64);
        for n in 1..50 {
            let next = 2.0 * u - p + dt * dt * (-omega2 * u + c(n as f64 * dt));
            p = u;
            u = next;
            assert!((traj.snapshots[n + 1].1[0] - u).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_is_conserved_under_cfl() {
        let (k, m) = fem(4, 3);
        let b = cfl_bound(&k, &m, 0.1).unwrap();
        let steps = (1.0 / b.dt_max).ceil() as usize;
        let grid = TimeGrid::new(1.0, steps.max(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let check = homogeneous_energy_check(&k, &m, grid, &start).unwrap();
        assert!(check.min_energy >= 0.0);
        assert!(check.max_relative_drift <= 1e-10, "{}", check.max_relative_drift);
        assert_eq!(discrete_energy(&vec![0.0; m.len()], &vec![0.0; m.len()], 0.1, &k, &m).unwrap(), 0.0);
    }

    #[test]
    fn step_beyond_the_limit_is_detected() {
        let (k, m) = fem(4, 4);
        let b = cfl_bound(&k, &m, 0.1).unwrap();
        let dt = 1.05 * b.dt_limit();
        let steps = 2000;
        let grid = TimeGrid::new(dt * steps as f64, steps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let start: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = homogeneous_energy_check(&k, &m, grid, &start).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
        // scalar threshold 2/ω
        let kk = SparseMatrix::from_diagonal(&[1.0]);
        for (factor, unstable) in [(0.99, false), (1.01, true)] {
            let grid = TimeGrid::new(2.0 * factor * 5000.0, 5000).unwrap();
            let r = homogeneous_energy_check(&kk, &[1.0], grid, &[1.0]);
            assert_eq!(r.is_err(), unstable);
        }
    }

    #[test]
    fn consistent_with_diagonal_mass_matches_lumped() {
        let (k, m) = fem(3, 5);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let c = |t: f64| (0.5 * std::f64::consts::PI * t).cos();
        let forcing = SeparableForcing {
            spatial: vec![1.0; m.len()],
            temporal: &c,
            temporal_max: 1.0,
        };
        let lumped = leapfrog_lumped(&k, &m, &forcing, grid, 10, &mut |_, _, _| {}).unwrap();
        // consistent form takes the load vector m ⊙ f
        let loads = SeparableForcing {
            spatial: m.clone(),
            temporal: &c,
            temporal_max: 1.0,
        };
        let mass = SparseMatrix::from_diagonal(&m);
        let cons = leapfrog_consistent(&mass, &k, &loads, grid, 1e-12, 10, &mut |_, _, _| {}).unwrap();
        for ((_, a), (_, b)) in lumped.snapshots.iter().zip(&cons.snapshots) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn consistent_against_dense_direct_solve() {
        let mesh = build_level(3).unwrap();
        let ones = vec![1.0; mesh.n_elems()];
        let k = stiffness_from_values(&mesh, &mesh, &ones).unwrap();
        let mass = crate::assembly::mass_from_values(&mesh, &mesh, &ones).unwrap();
        let n = k.n_rows();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let c = |t: f64| t * t;
        let g: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 * 0.01).collect();
        let forcing = SeparableForcing {
            spatial: g.clone(),
            temporal: &c,
            temporal_max: 1.0,
        };
        let traj = leapfrog_consistent(&mass, &k, &forcing, grid, 1e-12, 1, &mut |_, _, _| {}).unwrap();
        let md = mass.to_dense();
        let lu = DMatrix::from_fn(n, n, |i, j| md[i][j]).lu();
        let dt = grid.dt();
        let mut p = nalgebra::DVector::zeros(n);
        let mut u = nalgebra::DVector::zeros(n);
        let kd = k.to_dense();
        let kmat = DMatrix::from_fn(n, n, |i, j| kd[i][j]);
        let gv = nalgebra::DVector::from_vec(g);
        for step in 1..100 {
            let rhs = &gv * c(step as f64 * dt) - &kmat * &u;
            let a = lu.solve(&rhs).unwrap();
            let next = &u * 2.0 - &p + a * (dt * dt);
            p = u;
            u = next;
            let got = &traj.snapshots[step + 1].1;
            let scale = u.amax().max(1e-300);
            for i in 0..n {
                assert!((got[i] - u[i]).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn snapshots_follow_the_stride_and_observer() {
        let (k, m) = fem(2, 1);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let c = |_t: f64| 1.0;
        let forcing = SeparableForcing {
            spatial: vec![1.0; m.len()],
            temporal: &c,
            temporal_max: 1.0,
        };
        let mut seen = Vec::new();
        let t = leapfrog_lumped(&k, &m, &forcing, grid, 4, &mut |n, _, _| seen.push(n)).unwrap();
        assert_eq!(seen, vec![0, 4, 8, 10]);
        assert_eq!(t.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), seen);
        assert!(t.snapshots[0].1.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn time_reversal_recovers_the_initial_pair(seed in 0u64..1000, steps in 5usize..60) {
            let (k, m) = fem(3, seed);
            let b = cfl_bound(&k, &m, 0.1).unwrap();
            let grid = TimeGrid::new(b.dt_max * steps as f64, steps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u0: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u1: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut lf = Leapfrog::with_state(LumpedOperator::new(&k, &m).unwrap(), grid, u0.clone(), u1.clone(), 0.0);
            for _ in 0..steps - 1 {
                lf.step(&ZeroForcing).unwrap();
            }
            lf.reverse();
            let back = TimeGrid::new(grid.final_time(), steps).unwrap();
            let mut rev = Leapfrog::with_state(LumpedOperator::new(&k, &m).unwrap(), back, lf.previous().to_vec(), lf.current().to_vec(), 0.0);
            for _ in 0..steps - 1 {
                rev.step(&ZeroForcing).unwrap();
            }
            for (a, b) in rev.current().iter().zip(&u0) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            for (a, b) in rev.previous().iter().zip(&u1) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
