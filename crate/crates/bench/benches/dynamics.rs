use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cqsim_core::bath::{sample_thermal_bath, CoupledState, CoupledStepper};
use cqsim_core::ensemble::{run_ensemble, EnsembleConfig};
use cqsim_core::environment::SpectralDensity;
use cqsim_core::fokker_planck::{solve_fpe, FpeConfig, FpeParams};
use cqsim_core::langevin::{run_trajectory, Initial, LangevinConfig, Scheme, TwoLevelModel};
use cqsim_core::{two_level_operators, BlochVector, QuantumState, TwoLevelParams};

fn trajectories(c: &mut Criterion) {
    let model = TwoLevelModel::from_rates(5.0, 2.0, 1.0, 1.0).unwrap();
    let ops = model.ops();
    let psi = Initial::State(QuantumState::two_level(PI / 4.0));
    let mut g = c.benchmark_group("trajectory_10k_steps");
    for scheme in [Scheme::ExactExponential2x2, Scheme::RenormalizedRK4] {
        let cfg = LangevinConfig { scheme, record_every: 100, ..LangevinConfig::new(0.002, 20.0) };
        let noise = model.noise(cfg.dt, 1).unwrap();
        g.bench_function(BenchmarkId::from_parameter(format!("{scheme:?}")), |b| b.iter(|| run_trajectory(&psi, &noise, &cfg, &ops).unwrap()));
    }
    let rho = Initial::Density(QuantumState::two_level(PI / 4.0).density());
    let cfg = LangevinConfig { record_every: 100, ..LangevinConfig::new(0.002, 20.0) };
    let noise = model.noise(cfg.dt, 1).unwrap();
    g.bench_function("density", |b| b.iter(|| run_trajectory(&rho, &noise, &cfg, &ops).unwrap()));
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let model = TwoLevelModel::from_rates(5.0, 2.0, 1.0, 1.0).unwrap();
    let cfg = EnsembleConfig { record_every: 25, ..EnsembleConfig::new(64, 1, 0.002, 20.0) };
    let psi = QuantumState::two_level(PI / 4.0);
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    g.bench_function("64_trajectories_10k_steps", |b| b.iter(|| run_ensemble(&psi, &model, &cfg).unwrap()));
    g.finish();
}

fn fokker_planck(c: &mut Criterion) {
    let params = FpeParams { omega0: 5.0, lambda: 2.0, a0: 1.0 };
    let cfg = FpeConfig { record_every: 10, ..FpeConfig::new(1e-3, 20.0) };
    c.bench_function("fpe_bloch_20k_steps", |b| b.iter(|| solve_fpe(&BlochVector::from_theta(PI / 4.0), &cfg, &params).unwrap()));
}

fn bath(c: &mut Criterion) {
    let tl = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
    let (h0, x) = two_level_operators(&tl);
    let mut g = c.benchmark_group("coupled_bath_1k_steps");
    for n_osc in [50, 200, 800] {
        let realization = sample_thermal_bath(&SpectralDensity::ohmic(0.05, 40.0).unwrap(), n_osc, 5.0, 3).unwrap();
        let stepper = CoupledStepper::new(&h0, &x, 1.0, 0.002, &realization, true).unwrap();
        let start = CoupledState::new(QuantumState::two_level(PI / 4.0), realization, &x).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n_osc), &start, |b, start| {
            b.iter(|| {
                let mut s = start.clone();
                for _ in 0..1000 {
                    stepper.step(&mut s);
                }
                s
            })
        });
    }
    g.finish();
}

criterion_group!(benches, trajectories, ensemble, fokker_planck, bath);
criterion_main!(benches);
