use std::f64::consts::PI;

use cqsim_core::analytic::{nonstationary_solution, stationary_solution};
use cqsim_core::ensemble::{run_ensemble, EnsembleConfig};
use cqsim_core::fokker_planck::{fit_asymptotic_rate, pfr_flow, solve_fpe, FpeConfig, FpeParams};
use cqsim_core::langevin::TwoLevelModel;
use cqsim_core::{BlochVector, QuantumState};

#[test]
fn fpe_matches_dephasing_closed_forms() {
    let w0 = 5.0;
    for lambda in [0.1 * w0, 0.5 * w0] {
        let cfg = FpeConfig { record_every: 10, ..FpeConfig::new(1e-3, 10.0 / lambda) };
        let params = FpeParams { omega0: w0, lambda, a0: 0.0 };
        let pop = solve_fpe(&BlochVector::new(1.0, 0.0, 0.0), &cfg, &params).unwrap();
        let coh = solve_fpe(&BlochVector::from_theta(PI / 4.0), &cfg, &params).unwrap();
        for k in 0..pop.t.len() {
            let t = pop.t[k];
            assert!(pop.p[k].max_abs_diff(&stationary_solution(1, lambda, t).unwrap()) < 1e-6);
            assert!(coh.p[k].max_abs_diff(&nonstationary_solution(w0, lambda, t).unwrap()) < 1e-6, "t = {t}");
        }
    }
}

/// First recorded time with `P1 < -0.5`.
fn departure(theta: f64) -> f64 {
    let cfg = FpeConfig { record_every: 10, ..FpeConfig::new(1e-3, 40.0) };
    let r = pfr_flow(&BlochVector::from_theta(theta), 5.0, 1.0, &cfg).unwrap();
    r.series.t.iter().zip(&r.series.p).find(|(_, p)| p.b1 < -0.5).map(|(t, _)| *t).unwrap()
}

#[test]
fn smaller_angles_dwell_longer() {
    let d: Vec<f64> = [PI / 4.0, PI / 12.0, PI / 50.0].into_iter().map(departure).collect();
    assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
}

#[test]
fn zero_temperature_decay_rate() {
    let cfg = FpeConfig { record_every: 1, ..FpeConfig::new(1e-3, 30.0) };
    let r = pfr_flow(&BlochVector::from_theta(PI / 12.0), 5.0, 1.0, &cfg).unwrap();
    let entry = r.entry.unwrap();
    let rate = fit_asymptotic_rate(&r.series, &entry, 5.0, 1.0).unwrap();
    assert!((rate - 1.0).abs() < 0.05, "rate {rate}");
}

#[test]
fn ensemble_is_reproducible_across_thread_counts() {
    let model = TwoLevelModel::from_rates(5.0, 2.0, 1.0, 1.0).unwrap();
    let cfg = EnsembleConfig { record_every: 20, ..EnsembleConfig::new(16, 99, 0.005, 2.0) };
    let psi = QuantumState::two_level(PI / 4.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_ensemble(&psi, &model, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
