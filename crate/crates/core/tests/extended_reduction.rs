use cqsim_core::bath::{sample_thermal_bath, CoupledState, CoupledStepper};
use cqsim_core::environment::SpectralDensity;
use cqsim_core::extended::{extended_flow, ExtendedState, ExtendedSystem};
use cqsim_core::{two_level_operators, QuantumState, TwoLevelParams};

/// Largest deviation in (psi, q, canonical p) between the bath integrator
/// and the extended flow after `t_end`, both at step `dt`.
fn deviation(dt: f64, t_end: f64) -> (f64, f64, f64) {
    let tl = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
    let (h0, x) = two_level_operators(&tl);
    let j = SpectralDensity::ohmic(0.3, 20.0).unwrap();
    let bath = sample_thermal_bath(&j, 40, 1.0, 7).unwrap();
    let mut coupled = CoupledState::new(QuantumState::two_level(0.4), bath.clone(), &x).unwrap();
    let stepper = CoupledStepper::new(&h0, &x, 1.0, dt, &bath, false).unwrap();

    let sys = ExtendedSystem::from_bath(&bath, h0, x, 1.0, 50.0);
    let mut ext = ExtendedState::from_coupled(&sys, &coupled, 1.0).unwrap();
    let e0 = ext.point.p0;

    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        stepper.step(&mut coupled);
        ext = extended_flow(&ext, &sys, dt).unwrap();
    }
    // t = tau = u
    assert!((ext.packet.tau - coupled.t).abs() < 1e-9);
    assert!((ext.classical_time(50.0) - coupled.t).abs() < 1e-9);
    assert_eq!(ext.point.p0, e0);

    let psi = (coupled.psi.amplitudes() - ext.psi.amplitudes()).norm();
    let w = &coupled.bath.weight;
    let dq = coupled.bath.q.iter().zip(&ext.point.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dp = coupled.bath.p.iter().zip(w).zip(&ext.point.p).map(|((a, w), b)| (a * w - b).abs()).fold(0.0, f64::max);
    (psi, dq, dp)
}

#[test]
fn extended_flow_reduces_to_coupled_flow() {
    let coarse = deviation(0.004, 2.0);
    let fine = deviation(0.002, 2.0);
    assert!(fine.0 < 1e-4 && fine.1 < 1e-4 && fine.2 < 1e-4, "{fine:?}");
    // Both integrators are second order, so their gap shrinks about fourfold.
    assert!(coarse.0 / fine.0 > 3.0, "{coarse:?} vs {fine:?}");
}
