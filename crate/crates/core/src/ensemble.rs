//! Brownian-trajectory ensembles: parallel execution, averages with standard
//! errors, factorization diagnostics and the comparison against the
//! Fokker-Planck average.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::bath::{sample_thermal_bath, CoupledState, CoupledStepper};
use crate::environment::{NoiseProcess, SpectralDensity};
use crate::error::{Error, Result};
use crate::fokker_planck::{solve_fpe, FpeConfig, FpeParams, FpeSeries, MAX_STEP_RATE};
use crate::langevin::{run_two_level, LangevinConfig, RecordStates, Scheme, TrajectoryRecord, TwoLevelKernel, TwoLevelModel};
use crate::quantum::{two_level_operators, BlochVector, QuantumState, Spinor};
use crate::stats::{derive_seed, mean, pairwise_sum, sample_cov, std_error};

const MODULE: &str = "ensemble";

/// Fraction of the grid (from the end) averaged for the equilibrium estimate.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub scheme: Scheme,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, master_seed: u64, dt: f64, t_end: f64) -> Self {
        Self { n_traj, master_seed, dt, t_end, record_every: 1, scheme: Scheme::ExactExponential2x2 }
    }

    pub fn seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    fn langevin(&self) -> LangevinConfig {
        LangevinConfig { dt: self.dt, t_end: self.t_end, scheme: self.scheme, include_w0: false, record_every: self.record_every }
    }

    fn validate(&self) -> Result<()> {
        if self.n_traj < 2 {
            return Err(Error::contract(MODULE, "an ensemble needs at least two trajectories"));
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) || self.record_every == 0 {
            return Err(Error::contract(MODULE, "dt and t_end must be positive and record_every >= 1"));
        }
        Ok(())
    }
}

/// Ensemble means and standard errors on the recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub mean: Vec<BlochVector>,
    pub stderr: Vec<BlochVector>,
    /// Tail-averaged `<<b1>>` over the final [`TAIL_FRACTION`] of the grid.
    pub b1eq: f64,
    /// Standard error of `b1eq` from per-trajectory tail means.
    pub b1eq_err: f64,
    pub n_traj: usize,
}

impl EnsembleStats {
    /// CSV with columns `t, mean_b1..3, stderr_b1..3`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> Result<()> {
        crate::io::write_table(
            &mut w,
            comment,
            &["t", "mean_b1", "mean_b2", "mean_b3", "stderr_b1", "stderr_b2", "stderr_b3"],
            (0..self.t.len()).map(|k| {
                let (m, s) = (self.mean[k], self.stderr[k]);
                vec![self.t[k], m.b1, m.b2, m.b3, s.b1, s.b2, s.b3]
            }),
        )
    }
}

fn trajectory_bloch(r: &TrajectoryRecord) -> &[BlochVector] {
    match &r.states {
        RecordStates::Bloch(b) => b,
        RecordStates::Density(_) => unreachable!("ensembles are two-level"),
    }
}

/// Reduces records in index order; independent of how they were computed.
pub fn stats_from_records(records: &[TrajectoryRecord]) -> Result<EnsembleStats> {
    let n = records.len();
    if n < 2 {
        return Err(Error::contract(MODULE, "need at least two trajectories"));
    }
    let t = records[0].t.clone();
    if records.iter().any(|r| r.t.len() != t.len()) {
        return Err(Error::contract(MODULE, "records live on different grids"));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut means = Vec::with_capacity(t.len());
    let mut errs = Vec::with_capacity(t.len());
    let mut column = vec![0.0; n];
    for k in 0..t.len() {
        let mut m = [0.0; 3];
        let mut e = [0.0; 3];
        for c in 0..3 {
            for (i, r) in records.iter().enumerate() {
                column[i] = trajectory_bloch(r)[k].as_array()[c];
            }
            if column.iter().all(|v| *v == column[0]) {
                m[c] = column[0];
                continue;
            }
            m[c] = mean(&column);
            let sq: Vec<f64> = column.iter().map(|v| (v - m[c]) * (v - m[c])).collect();
            e[c] = (pairwise_sum(&sq) / (n - 1) as f64).sqrt() / sqrt_n;
        }
        means.push(BlochVector::from_array(m));
        errs.push(BlochVector::from_array(e));
    }
    let t_last = *t.last().unwrap_or(&0.0);
    let tail_start = t_last * (1.0 - TAIL_FRACTION);
    let tail: Vec<usize> = (0..t.len()).filter(|&k| t[k] >= tail_start - 1e-12 * t_last).collect();
    let tails: Vec<f64> = records
        .iter()
        .map(|r| {
            let b = trajectory_bloch(r);
            let v: Vec<f64> = tail.iter().map(|&k| b[k].b1).collect();
            mean(&v)
        })
        .collect();
    Ok(EnsembleStats { t, mean: means, stderr: errs, b1eq: mean(&tails), b1eq_err: std_error(&tails), n_traj: n })
}

fn collect_in_order<T: Send>(results: Vec<Result<T>>, cfg: &EnsembleConfig) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => return Err(Error::Trajectory { seed: cfg.seed(i), source: Box::new(e) }),
        }
    }
    Ok(out)
}

/// Runs every trajectory of the Langevin ensemble and keeps the records.
pub fn run_ensemble_records(psi0: &QuantumState, model: &TwoLevelModel, cfg: &EnsembleConfig) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    if psi0.dim() != 2 {
        return Err(Error::contract(MODULE, "ensembles are two-level"));
    }
    let lcfg = cfg.langevin();
    let kernel = TwoLevelKernel::new(&model.ops())?;
    let spinor = Spinor::from_state(psi0);
    let results: Vec<Result<TrajectoryRecord>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut noise = NoiseProcess::new(cfg.dt, model.kt, model.gamma, cfg.seed(i))?;
            run_two_level(&spinor, &mut noise, &lcfg, &kernel)
        })
        .collect();
    collect_in_order(results, cfg)
}

/// Ensemble averages of the Bloch vector over `n_traj` Brownian trajectories.
pub fn run_ensemble(psi0: &QuantumState, model: &TwoLevelModel, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    stats_from_records(&run_ensemble_records(psi0, model, cfg)?)
}

/// Noise/state correlation defects per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    pub t: Vec<f64>,
    /// `<<xi b_i>> - <<xi>><<b_i>>`.
    pub first: Vec<[f64; 3]>,
    pub first_err: Vec<[f64; 3]>,
    /// `<<xi^2 b_i>> - <<xi^2>><<b_i>>`.
    pub second: Vec<[f64; 3]>,
    pub second_err: Vec<[f64; 3]>,
    /// Largest `|defect| / stderr` over the grid (zero where both vanish).
    pub max_first_z: f64,
    pub max_second_z: f64,
}

fn cov_with_error(a: &[f64], b: &[f64]) -> (f64, f64) {
    if a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]) {
        return (0.0, 0.0);
    }
    let (ma, mb) = (mean(a), mean(b));
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    (sample_cov(a, b), std_error(&prod))
}

fn z_score(v: f64, err: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if err == 0.0 {
        f64::INFINITY
    } else {
        (v / err).abs()
    }
}

/// Estimates how far the noise at `t_k` correlates with the state at `t_k`.
pub fn factorization_diagnostic(records: &[TrajectoryRecord]) -> Result<FactorizationReport> {
    if records.len() < 2 {
        return Err(Error::contract(MODULE, "need at least two trajectories"));
    }
    let t = records[0].t.clone();
    let mut rep = FactorizationReport {
        t: t.clone(),
        first: Vec::new(),
        first_err: Vec::new(),
        second: Vec::new(),
        second_err: Vec::new(),
        max_first_z: 0.0,
        max_second_z: 0.0,
    };
    for k in 0..t.len() {
        let xi: Vec<f64> = records.iter().map(|r| r.xi[k]).collect();
        let xi2: Vec<f64> = xi.iter().map(|x| x * x).collect();
        let mut f = [0.0; 3];
        let mut fe = [0.0; 3];
        let mut s = [0.0; 3];
        let mut se = [0.0; 3];
        for c in 0..3 {
            let b: Vec<f64> = records.iter().map(|r| trajectory_bloch(r)[k].as_array()[c]).collect();
            (f[c], fe[c]) = cov_with_error(&xi, &b);
            (s[c], se[c]) = cov_with_error(&xi2, &b);
            rep.max_first_z = rep.max_first_z.max(z_score(f[c], fe[c]));
            rep.max_second_z = rep.max_second_z.max(z_score(s[c], se[c]));
        }
        rep.first.push(f);
        rep.first_err.push(fe);
        rep.second.push(s);
        rep.second_err.push(se);
    }
    Ok(rep)
}

/// Ensemble against the Fokker-Planck average on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub stats: EnsembleStats,
    pub fpe: FpeSeries,
    /// Per-component `max_t |<<b_k>> - P_k|`.
    pub max_dev: [f64; 3],
    /// Per-component `max_t |<<b_k>> - P_k| / stderr_k`.
    pub max_z: [f64; 3],
    /// Per-component fraction of grid points within 3 standard errors.
    pub within_3: [f64; 3],
    /// First grid time with `|<<b1>> - P1| > 3 stderr`.
    pub first_p1_crossing: Option<f64>,
    pub fpe_p1_end: f64,
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trajectories: {}", self.stats.n_traj)?;
        for c in 0..3 {
            writeln!(
                f,
                "b{}: max |dev| = {:.6e}, max |dev|/stderr = {:.3}, within 3 stderr = {:.1}%",
                c + 1,
                self.max_dev[c],
                self.max_z[c],
                100.0 * self.within_3[c]
            )?;
        }
        match self.first_p1_crossing {
            Some(t) => writeln!(f, "first |dP1| > 3 stderr at t = {t}")?,
            None => writeln!(f, "|dP1| stays within 3 stderr")?,
        }
        writeln!(f, "ensemble b1eq = {:.6} +- {:.6}", self.stats.b1eq, self.stats.b1eq_err)?;
        writeln!(f, "Fokker-Planck P1(t_end) = {:.6e}", self.fpe_p1_end)
    }
}

/// Propagates the same initial state through the ensemble and the
/// Fokker-Planck equation and reports where they part.
pub fn compare_lle_fpe(psi0: &QuantumState, model: &TwoLevelModel, cfg: &EnsembleConfig) -> Result<DivergenceReport> {
    let stats = run_ensemble(psi0, model, cfg)?;
    let fpe = fpe_on_grid(&psi0.bloch()?, model, cfg)?;
    Ok(divergence(stats, fpe))
}

/// Fokker-Planck series sampled on the ensemble grid, subdividing the step
/// when needed for the RK4 stability bound.
pub fn fpe_on_grid(p0: &BlochVector, model: &TwoLevelModel, cfg: &EnsembleConfig) -> Result<FpeSeries> {
    let (lambda, a0) = model.rates();
    let params = FpeParams { omega0: model.params.omega0, lambda, a0 };
    let rate = params.omega0.max(2.0 * lambda).max(a0);
    let sub = ((cfg.dt * rate / (0.8 * MAX_STEP_RATE)).ceil() as usize).max(1);
    let n = (cfg.t_end / cfg.dt).round() as usize;
    let fcfg = FpeConfig { dt: cfg.dt / sub as f64, t_end: (n * sub) as f64 * (cfg.dt / sub as f64), record_every: cfg.record_every * sub };
    let mut s = solve_fpe(p0, &fcfg, &params)?;
    // Report on the ensemble's own time values.
    for (k, t) in s.t.iter_mut().enumerate() {
        *t = (k * cfg.record_every) as f64 * cfg.dt;
    }
    Ok(s)
}

fn divergence(stats: EnsembleStats, fpe: FpeSeries) -> DivergenceReport {
    let mut max_dev = [0.0f64; 3];
    let mut max_z = [0.0f64; 3];
    let mut within = [0usize; 3];
    let mut first = None;
    let n = stats.t.len().min(fpe.t.len());
    for k in 0..n {
        let (m, s, p) = (stats.mean[k].as_array(), stats.stderr[k].as_array(), fpe.p[k].as_array());
        for c in 0..3 {
            let d = (m[c] - p[c]).abs();
            let z = z_score(d, s[c]);
            max_dev[c] = max_dev[c].max(d);
            max_z[c] = max_z[c].max(z);
            if z <= 3.0 {
                within[c] += 1;
            } else if c == 0 && first.is_none() {
                first = Some(stats.t[k]);
            }
        }
    }
    let fpe_p1_end = fpe.last().b1;
    DivergenceReport {
        max_dev,
        max_z,
        within_3: within.map(|w| w as f64 / n as f64),
        first_p1_crossing: first,
        fpe_p1_end,
        stats,
        fpe,
    }
}

/// Settings for the microscopic-bath ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BathEnsembleConfig {
    pub spectral: SpectralDensity,
    pub n_osc: usize,
    pub kt: f64,
    /// Add the mean-field counterterm `Gamma(0) <x>^2 / 2`.
    pub counterterm: bool,
    /// Start each bath thermal around the equilibrium for the initial `<x>`.
    pub displaced: bool,
}

/// Two-level ensemble with an explicit oscillator bath per realization.
/// Records carry the free bath force `xi(t)` as their noise column.
pub fn run_microscopic_ensemble(
    psi0: &QuantumState,
    params: &crate::quantum::TwoLevelParams,
    bath: &BathEnsembleConfig,
    cfg: &EnsembleConfig,
) -> Result<EnsembleStats> {
    cfg.validate()?;
    let (h0, x) = two_level_operators(params);
    let n = (cfg.t_end / cfg.dt).round() as usize;
    let probe = sample_thermal_bath(&bath.spectral, bath.n_osc, bath.kt, 0)?;
    if cfg.t_end >= probe.recurrence_time() {
        return Err(Error::domain(
            MODULE,
            format!("t_end = {} reaches the bath recurrence time {}", cfg.t_end, probe.recurrence_time()),
        ));
    }
    let stepper = CoupledStepper::new(&h0, &x, params.hbar, cfg.dt, &probe, bath.counterterm)?;
    let results: Vec<Result<TrajectoryRecord>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed(i);
            let mut realization = sample_thermal_bath(&bath.spectral, bath.n_osc, bath.kt, seed)?;
            let mut state = CoupledState::new(psi0.clone(), realization.clone(), &x)?;
            if bath.displaced {
                realization.displace_for(state.x0);
                state.bath = realization;
            }
            let mut t = Vec::new();
            let mut b = Vec::new();
            let mut xi = Vec::new();
            for k in 0..=n {
                if k % cfg.record_every == 0 {
                    let v = state.psi.bloch()?;
                    if !v.is_finite() {
                        return Err(Error::numerical(MODULE, format!("non-finite state at step {k}")));
                    }
                    t.push(k as f64 * cfg.dt);
                    b.push(v);
                    xi.push(state.bath.free_force(k as f64 * cfg.dt));
                }
                if k < n {
                    stepper.step(&mut state);
                }
            }
            Ok(TrajectoryRecord { t, states: RecordStates::Bloch(b), xi, seed, defects: Default::default() })
        })
        .collect();
    stats_from_records(&collect_in_order(results, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::TwoLevelParams;
    use std::f64::consts::PI;

    fn model(lambda: f64, a0: f64) -> TwoLevelModel {
        TwoLevelModel::from_rates(5.0, lambda, a0, 1.0).unwrap()
    }

    #[test]
    fn zero_temperature_has_no_spread() {
        let cfg = EnsembleConfig { record_every: 10, ..EnsembleConfig::new(8, 1, 0.005, 2.0) };
        let s = run_ensemble(&QuantumState::two_level(PI / 4.0), &model(0.0, 1.0), &cfg).unwrap();
        assert!(s.stderr.iter().all(|e| e.as_array() == [0.0; 3]));
        let recs = run_ensemble_records(&QuantumState::two_level(PI / 4.0), &model(0.0, 1.0), &cfg).unwrap();
        let f = factorization_diagnostic(&recs).unwrap();
        assert_eq!(f.max_first_z, 0.0);
        assert_eq!(f.max_second_z, 0.0);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let cfg = EnsembleConfig { record_every: 5, ..EnsembleConfig::new(40, 99, 0.01, 1.0) };
        let psi = QuantumState::two_level(0.3);
        let m = model(1.0, 1.0);
        let a = run_ensemble(&psi, &m, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_ensemble(&psi, &m, &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_are_order_independent() {
        let cfg = EnsembleConfig { record_every: 5, ..EnsembleConfig::new(16, 3, 0.01, 1.0) };
        let mut recs = run_ensemble_records(&QuantumState::two_level(0.3), &model(1.0, 1.0), &cfg).unwrap();
        let a = stats_from_records(&recs).unwrap();
        recs.reverse();
        let b = stats_from_records(&recs).unwrap();
        for k in 0..a.t.len() {
            assert!(a.mean[k].max_abs_diff(&b.mean[k]) < 1e-15);
        }
    }

    #[test]
    fn stderr_shrinks_with_ensemble_size() {
        let psi = QuantumState::two_level(PI / 4.0);
        let m = model(1.0, 1.0);
        let run = |n| run_ensemble(&psi, &m, &EnsembleConfig { record_every: 50, ..EnsembleConfig::new(n, 5, 0.01, 2.0) }).unwrap();
        let (a, b) = (run(400), run(800));
        let ratio: Vec<f64> = (1..a.t.len()).map(|k| a.stderr[k].b2 / b.stderr[k].b2).collect();
        let r = mean(&ratio);
        assert!((r / 2f64.sqrt() - 1.0).abs() < 0.15, "ratio {r}");
    }

    #[test]
    fn initial_correlations_vanish() {
        let cfg = EnsembleConfig { record_every: 10, ..EnsembleConfig::new(200, 5, 0.01, 1.0) };
        let recs = run_ensemble_records(&QuantumState::two_level(PI / 4.0), &model(2.0, 1.0), &cfg).unwrap();
        let f = factorization_diagnostic(&recs).unwrap();
        assert_eq!(f.first[0], [0.0; 3]);
        assert_eq!(f.second[0], [0.0; 3]);
    }

    #[test]
    fn fpe_grid_alignment() {
        let cfg = EnsembleConfig { record_every: 4, ..EnsembleConfig::new(2, 5, 0.02, 1.0) };
        let s = fpe_on_grid(&BlochVector::from_theta(0.2), &model(0.5, 1.0), &cfg).unwrap();
        assert_eq!(s.t.len(), 1000 / 80 + 1);
        assert!((s.t[1] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn failure_names_the_seed() {
        let mut cfg = EnsembleConfig::new(3, 5, 0.01, 1.0);
        cfg.record_every = 0;
        assert!(run_ensemble(&QuantumState::two_level(0.1), &model(1.0, 1.0), &cfg).is_err());
        let err = collect_in_order::<()>(vec![Ok(()), Err(Error::numerical("x", "boom"))], &EnsembleConfig::new(2, 5, 0.01, 1.0)).unwrap_err();
        assert_eq!(err, Error::Trajectory { seed: derive_seed(5, 1), source: Box::new(Error::numerical("x", "boom")) });
    }

    #[test]
    fn microscopic_ensemble_runs_below_recurrence() {
        let params = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
        let bath = BathEnsembleConfig {
            spectral: SpectralDensity::ohmic(0.1, 20.0).unwrap(),
            n_osc: 40,
            kt: 1.0,
            counterterm: true,
            displaced: true,
        };
        let cfg = EnsembleConfig { record_every: 20, ..EnsembleConfig::new(4, 1, 0.002, 1.0) };
        let s = run_microscopic_ensemble(&QuantumState::two_level(0.3), &params, &bath, &cfg).unwrap();
        assert_eq!(s.t.len(), 26);
        let long = EnsembleConfig { t_end: 20.0, ..cfg };
        assert!(matches!(run_microscopic_ensemble(&QuantumState::two_level(0.3), &params, &bath, &long), Err(Error::Domain { .. })));
    }
}
