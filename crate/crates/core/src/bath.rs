//! A finite classical oscillator bath bilinearly coupled to an N-level
//! quantum system, integrated jointly with the Schrödinger equation.
//!
//! Oscillator `i` sits at frequency `w_i = (i - 1/2) dw` with quadrature
//! weight `dw` and enters the Hamiltonian as
//!
//! ```text
//! H = sum_i dw (p_i^2 / 2m + m w_i^2 q_i^2 / 2) + <x> sum_i dw C_i q_i
//! ```
//!
//! so `(q_i, dw p_i)` is the canonical pair and `dp_i/dt = -m w_i^2 q_i - C_i <x>`.
//! Thermal sampling uses the Boltzmann weight of the weighted oscillator,
//! which makes the free bath force `xi(t) = -sum_i dw C_i q_i(t)` satisfy
//! `<<xi(t) xi(t')>> = kT Gamma(t - t')` with
//! `Gamma(t) = sum_i dw C_i^2 / (m w_i^2) cos(w_i t)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::environment::SpectralDensity;
use crate::error::{Error, Result};
use crate::quantum::{unitary_propagator, HermitianOperator, QuantumState, C64};

const MODULE: &str = "bath";

/// Largest accepted `dt * max(w_i)` and `dt * w_system`.
pub const MAX_STEP_PHASE: f64 = 0.1;

/// Oscillators stored as parallel arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct BathRealization {
    pub omega: Vec<f64>,
    pub mass: Vec<f64>,
    pub coupling: Vec<f64>,
    pub weight: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Initial conditions, kept for the free-evolution force.
    pub q_init: Vec<f64>,
    pub p_init: Vec<f64>,
}

/// Draws a thermal bath discretizing `J` on `n_osc` midpoint frequencies over
/// `(0, cutoff]` with unit masses and `C_i = sqrt(2 m w_i J(w_i) / pi)`.
pub fn sample_thermal_bath(j: &SpectralDensity, n_osc: usize, kt: f64, seed: u64) -> Result<BathRealization> {
    if n_osc < 2 {
        return Err(Error::contract(MODULE, "need at least two oscillators"));
    }
    if !(kt >= 0.0) || !kt.is_finite() {
        return Err(Error::domain(MODULE, "kT must be non-negative"));
    }
    let dw = j.cutoff / n_osc as f64;
    let omega: Vec<f64> = (0..n_osc).map(|i| (i as f64 + 0.5) * dw).collect();
    let mass = vec![1.0; n_osc];
    let coupling = omega.iter().zip(&mass).map(|(w, m)| (2.0 * m * w * j.eval(*w) / std::f64::consts::PI).sqrt()).collect();
    let weight = vec![dw; n_osc];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::with_capacity(n_osc);
    let mut p = Vec::with_capacity(n_osc);
    for i in 0..n_osc {
        let (zq, zp): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        let (w, m, wt) = (omega[i], mass[i], weight[i]);
        q.push(zq * (kt / (wt * m * w * w)).sqrt());
        p.push(zp * (m * kt / wt).sqrt());
    }
    Ok(BathRealization { omega, mass, coupling, weight, q_init: q.clone(), p_init: p.clone(), q, p })
}

impl BathRealization {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Frequency spacing `dw`.
    pub fn spacing(&self) -> f64 {
        self.weight[0]
    }

    /// Recurrence horizon `2 pi / dw`.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing()
    }

    /// Shifts every oscillator (current and initial) so it is thermal around
    /// the equilibrium `-C_i x0 / (m w_i^2)` of a system held at `<x> = x0`.
    pub fn displace_for(&mut self, x0: f64) {
        for i in 0..self.len() {
            let shift = -self.coupling[i] * x0 / (self.mass[i] * self.omega[i] * self.omega[i]);
            self.q[i] += shift;
            self.q_init[i] += shift;
        }
    }

    /// `sum_i w_i C_i q_i`; the system feels `H0 + x * coupling_sum`.
    pub fn coupling_sum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            s += self.weight[i] * self.coupling[i] * self.q[i];
        }
        s
    }

    /// Oscillator energy `sum_i w_i (p^2/2m + m w^2 q^2 / 2)`.
    pub fn energy(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (m, w) = (self.mass[i], self.omega[i]);
                self.weight[i] * (0.5 * self.p[i] * self.p[i] / m + 0.5 * m * w * w * self.q[i] * self.q[i])
            })
            .sum()
    }

    /// Memory kernel of the discretized bath.
    pub fn kernel(&self, t: f64) -> f64 {
        (0..self.len())
            .map(|i| {
                let (m, w) = (self.mass[i], self.omega[i]);
                self.weight[i] * self.coupling[i] * self.coupling[i] / (m * w * w) * (w * t).cos()
            })
            .sum()
    }

    /// Free-evolution force `xi(t) = -sum_i w_i C_i (q_i(0) cos w_i t + p_i(0)/(m w_i) sin w_i t)`.
    pub fn free_force(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            let (m, w) = (self.mass[i], self.omega[i]);
            let (sn, cs) = (w * t).sin_cos();
            s -= self.weight[i] * self.coupling[i] * (self.q_init[i] * cs + self.p_init[i] / (m * w) * sn);
        }
        s
    }

    /// L1 distance between `J` and the piecewise-constant reconstruction
    /// `pi C_i^2 / (2 m w_i)` on each frequency bin, relative to the L1 norm of `J`.
    pub fn spectral_density_l1_error(&self, j: &SpectralDensity) -> f64 {
        let dw = self.spacing();
        let sub = 64;
        let h = dw / sub as f64;
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 0..self.len() {
            let rec = std::f64::consts::PI * self.coupling[i] * self.coupling[i] / (2.0 * self.mass[i] * self.omega[i]);
            let lo = self.omega[i] - 0.5 * dw;
            for k in 0..sub {
                let w = lo + (k as f64 + 0.5) * h;
                let jw = j.eval(w);
                err += (jw - rec).abs() * h;
                norm += jw.abs() * h;
            }
        }
        err / norm
    }

    fn kick(&mut self, x: f64, h: f64) {
        for i in 0..self.len() {
            self.p[i] -= self.coupling[i] * x * h;
        }
    }

    fn rotate(&mut self, cos: &[f64], sin: &[f64]) {
        for i in 0..self.len() {
            let mw = self.mass[i] * self.omega[i];
            let (q, p) = (self.q[i], self.p[i]);
            self.q[i] = q * cos[i] + p / mw * sin[i];
            self.p[i] = p * cos[i] - mw * q * sin[i];
        }
    }

    /// Advances the bath by `dt` with the system held at `<x> = x`, using the
    /// same kick / rotate / kick splitting as the coupled integrator.
    pub fn step_driven(&mut self, x: f64, dt: f64) {
        let (cos, sin): (Vec<f64>, Vec<f64>) = self.omega.iter().map(|w| ((w * dt).cos(), (w * dt).sin())).unzip();
        self.kick(x, 0.5 * dt);
        self.rotate(&cos, &sin);
        self.kick(x, 0.5 * dt);
    }

    /// Splits the bath force `-sum_i w_i C_i q_i(t)` into
    /// `xi + f + Gamma(0) x_t - Gamma(t) x_0` and returns `(xi, f)`.
    pub fn force_split(&self, t: f64, x_t: f64, x_0: f64) -> (f64, f64) {
        let total = -self.coupling_sum();
        let xi = self.free_force(t);
        let w0 = self.kernel(0.0) * x_t - self.kernel(t) * x_0;
        (xi, total - xi - w0)
    }

    /// CSV of `xi(t)` on `t_k = k dt`, `k = 0..=n`.
    pub fn write_noise_csv<W: Write>(&self, mut w: W, dt: f64, n: usize, comment: &str) -> Result<()> {
        crate::io::write_table(&mut w, comment, &["t", "xi"], (0..=n).map(|k| vec![k as f64 * dt, self.free_force(k as f64 * dt)]))
    }
}

/// Joint state of system and bath.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub psi: QuantumState,
    pub bath: BathRealization,
    pub t: f64,
    /// Classical action accumulated by the trapezoid rule (diagnostic).
    pub s_cl: f64,
    /// `<x>` at `t = 0`.
    pub x0: f64,
}

impl CoupledState {
    pub fn new(psi: QuantumState, bath: BathRealization, x: &HermitianOperator) -> Result<Self> {
        let x0 = psi.expectation(x)?;
        Ok(Self { psi, bath, t: 0.0, s_cl: 0.0, x0 })
    }
}

/// Precomputed propagators for one step size.
#[derive(Debug, Clone)]
pub struct CoupledStepper {
    h0: HermitianOperator,
    x: HermitianOperator,
    hbar: f64,
    dt: f64,
    /// Adds the mean-field counterterm `Gamma(0) <x>^2 / 2` to the energy.
    counterterm: bool,
    gamma0: f64,
    u_free: DMatrix<C64>,
    x_vecs: DMatrix<C64>,
    x_vals: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl CoupledStepper {
    pub fn new(h0: &HermitianOperator, x: &HermitianOperator, hbar: f64, dt: f64, bath: &BathRealization, counterterm: bool) -> Result<Self> {
        if h0.dim() != x.dim() {
            return Err(Error::contract(MODULE, "H0 and x dimensions differ"));
        }
        let w_max = bath.omega.iter().cloned().fold(0.0, f64::max);
        let e = SymmetricEigen::new(h0.entries().clone()).eigenvalues;
        let w_sys = (e.max() - e.min()) / hbar;
        if !(dt > 0.0) || dt * w_max >= MAX_STEP_PHASE || dt * w_sys >= MAX_STEP_PHASE {
            return Err(Error::contract(
                MODULE,
                format!("step {dt} violates dt * max(w_bath, w_system) < {MAX_STEP_PHASE} (w_bath = {w_max}, w_system = {w_sys})"),
            ));
        }
        let xe = SymmetricEigen::new(x.entries().clone());
        let (cos, sin) = bath.omega.iter().map(|w| ((w * dt).cos(), (w * dt).sin())).unzip();
        Ok(Self {
            h0: h0.clone(),
            x: x.clone(),
            hbar,
            dt,
            counterterm,
            gamma0: bath.kernel(0.0),
            u_free: unitary_propagator(h0.entries(), dt / hbar),
            x_vecs: xe.eigenvectors,
            x_vals: xe.eigenvalues.iter().cloned().collect(),
            cos,
            sin,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn x_expect(&self, psi: &DVector<C64>) -> f64 {
        psi.dotc(&(self.x.entries() * psi)).re
    }

    /// Exact flow of the interaction for `h`: `<x>` is conserved, so the
    /// system rotates under `x * F` and every momentum gets the same kick.
    fn interaction(&self, psi: &mut DVector<C64>, bath: &mut BathRealization, h: f64) {
        let xv = self.x_expect(psi);
        let mut force = bath.coupling_sum();
        if self.counterterm {
            force += self.gamma0 * xv;
        }
        let mut c = self.x_vecs.adjoint() * &*psi;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= C64::from_polar(1.0, -self.x_vals[k] * force * h / self.hbar);
        }
        *psi = &self.x_vecs * c;
        bath.kick(xv, h);
    }

    fn lagrangian(bath: &BathRealization) -> f64 {
        let pqdot: f64 = (0..bath.len()).map(|i| bath.weight[i] * bath.p[i] * bath.p[i] / bath.mass[i]).sum();
        pqdot - bath.energy()
    }

    /// One Strang step: half interaction, exact free flow, half interaction.
    pub fn step(&self, state: &mut CoupledState) {
        let l0 = Self::lagrangian(&state.bath);
        let mut psi = state.psi.amplitudes().clone();
        self.interaction(&mut psi, &mut state.bath, 0.5 * self.dt);
        state.bath.rotate(&self.cos, &self.sin);
        psi = &self.u_free * psi;
        self.interaction(&mut psi, &mut state.bath, 0.5 * self.dt);
        state.psi = QuantumState::from_vector_unchecked(psi);
        state.s_cl += 0.5 * self.dt * (l0 + Self::lagrangian(&state.bath));
        state.t += self.dt;
    }

    /// Bath + system + interaction (+ counterterm) energy.
    pub fn total_energy(&self, state: &CoupledState) -> f64 {
        let psi = state.psi.amplitudes();
        let xv = self.x_expect(psi);
        let e_sys = psi.dotc(&(self.h0.entries() * psi)).re;
        let mut e = state.bath.energy() + e_sys + xv * state.bath.coupling_sum();
        if self.counterterm {
            e += 0.5 * self.gamma0 * xv * xv;
        }
        e
    }

    /// `(xi, f)` at the current time; see [`BathRealization::force_split`].
    pub fn effective_force(&self, state: &CoupledState) -> (f64, f64) {
        let xv = self.x_expect(state.psi.amplitudes());
        state.bath.force_split(state.t, xv, state.x0)
    }
}

/// One coupled step with freshly built propagators.
pub fn step_coupled(state: &CoupledState, h0: &HermitianOperator, x: &HermitianOperator, dt: f64, hbar: f64) -> Result<CoupledState> {
    let stepper = CoupledStepper::new(h0, x, hbar, dt, &state.bath, false)?;
    let mut next = state.clone();
    stepper.step(&mut next);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{two_level_operators, BlochVector, TwoLevelParams};
    use crate::stats::{mean, std_error};
    use std::f64::consts::PI;

    fn ohmic(gamma: f64, cutoff: f64) -> SpectralDensity {
        SpectralDensity::ohmic(gamma, cutoff).unwrap()
    }

    #[test]
    fn zero_temperature_bath_is_at_rest() {
        let b = sample_thermal_bath(&ohmic(0.1, 10.0), 50, 0.0, 1).unwrap();
        assert!(b.q.iter().chain(&b.p).all(|v| *v == 0.0));
    }

    #[test]
    fn equipartition() {
        let n = 400;
        let kt = 2.5;
        let b = sample_thermal_bath(&ohmic(0.1, 10.0), n, kt, 9).unwrap();
        let e = b.energy() / n as f64;
        assert!((e - kt).abs() < 3.0 / (n as f64).sqrt() * kt, "mean energy {e}");
    }

    #[test]
    fn reconstruction_matches_target_density() {
        let j = ohmic(0.3, 20.0);
        let b = sample_thermal_bath(&j, 200, 1.0, 1).unwrap();
        assert!(b.spectral_density_l1_error(&j) < 0.02);
    }

    #[test]
    fn ohmic_kernel_at_zero() {
        let b = sample_thermal_bath(&ohmic(0.1, 50.0), 200, 1.0, 1).unwrap();
        assert!((b.kernel(0.0) - 2.0 * 0.1 * 50.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn noise_variance_at_equal_times() {
        let (kt, j) = (1.5, ohmic(0.2, 20.0));
        let xi0: Vec<f64> = (0..1000).map(|s| sample_thermal_bath(&j, 100, kt, s).unwrap().free_force(0.0)).collect();
        let var: Vec<f64> = xi0.iter().map(|x| x * x).collect();
        let g0 = sample_thermal_bath(&j, 100, kt, 0).unwrap().kernel(0.0);
        assert!((mean(&var) / (kt * g0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn uncoupled_oscillators_trace_circles() {
        let mut b = sample_thermal_bath(&ohmic(0.0, 10.0), 20, 1.0, 3).unwrap();
        // Zero J gives zero couplings; give the oscillators a state anyway.
        for i in 0..b.len() {
            b.q[i] = 0.1 * i as f64;
            b.p[i] = 0.3;
            b.q_init[i] = b.q[i];
            b.p_init[i] = b.p[i];
        }
        let init = b.clone();
        let dt = 0.005;
        let n = (10.0 * 2.0 * PI / init.omega[0] / dt) as usize;
        let tl = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
        let (h0, x) = two_level_operators(&tl);
        let stepper = CoupledStepper::new(&h0, &x, 1.0, dt, &b, false).unwrap();
        let mut st = CoupledState::new(QuantumState::two_level(PI / 4.0), b, &x).unwrap();
        for _ in 0..n {
            stepper.step(&mut st);
        }
        let t = st.t;
        for i in 0..init.len() {
            let w = init.omega[i];
            let expect = init.q[i] * (w * t).cos() + init.p[i] / w * (w * t).sin();
            assert!((st.bath.q[i] - expect).abs() < 1e-6);
        }
        let b = st.psi.bloch().unwrap();
        assert!(b.max_abs_diff(&BlochVector::new(0.0, -(5.0 * t).sin(), (5.0 * t).cos())) < 1e-6);
    }

    #[test]
    fn driven_oscillator_matches_closed_form_at_second_order() {
        let j = ohmic(0.5, 4.0);
        let mut b0 = sample_thermal_bath(&j, 2, 1.0, 5).unwrap();
        b0.omega.truncate(1);
        for v in [&mut b0.mass, &mut b0.coupling, &mut b0.weight, &mut b0.q, &mut b0.p, &mut b0.q_init, &mut b0.p_init] {
            v.truncate(1);
        }
        let (w, m, c) = (b0.omega[0], b0.mass[0], b0.coupling[0]);
        let xv = 0.8;
        let t_end = 5.0;
        let err = |dt: f64| {
            let mut b = b0.clone();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                b.step_driven(xv, dt);
            }
            let qs = -c * xv / (m * w * w);
            let expect = qs + (b0.q[0] - qs) * (w * t_end).cos() + b0.p[0] / (m * w) * (w * t_end).sin();
            (b.q[0] - expect).abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e1 < 1e-4, "{e1}");
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    fn coupled_setup(counterterm: bool, kt: f64, seed: u64) -> (CoupledStepper, CoupledState) {
        let tl = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
        let (h0, x) = two_level_operators(&tl);
        let bath = sample_thermal_bath(&ohmic(0.1, 10.0), 100, kt, seed).unwrap();
        let dt = 0.05 / 10.0;
        let stepper = CoupledStepper::new(&h0, &x, 1.0, dt, &bath, counterterm).unwrap();
        let st = CoupledState::new(QuantumState::two_level(PI / 4.0), bath, &x).unwrap();
        (stepper, st)
    }

    #[test]
    fn energy_is_conserved() {
        for ct in [false, true] {
            let (stepper, mut st) = coupled_setup(ct, 1.0, 11);
            let e0 = stepper.total_energy(&st);
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                stepper.step(&mut st);
                worst = worst.max((stepper.total_energy(&st) - e0).abs());
            }
            assert!(worst / e0.abs() < 1e-5, "relative drift {} (counterterm {ct})", worst / e0.abs());
            assert!((st.psi.norm() - 1.0).abs() < 1e-10, "norm defect {}", st.psi.norm() - 1.0);
        }
    }

    #[test]
    fn force_split_at_start_and_for_fixed_position() {
        let (stepper, st) = coupled_setup(false, 1.0, 2);
        let (xi, f) = stepper.effective_force(&st);
        assert!((xi + st.bath.coupling_sum()).abs() < 1e-12);
        assert!(f.abs() < 1e-12);
        // <x> = 0 along the driven path: no backreaction.
        let mut b = st.bath.clone();
        for k in 1..=400 {
            b.step_driven(0.0, 0.005);
            let (_, f) = b.force_split(k as f64 * 0.005, 0.0, 0.0);
            assert!(f.abs() < 1e-9);
        }
    }

    #[test]
    fn slow_driving_gives_ohmic_friction() {
        let gamma = 0.2;
        let mut b = sample_thermal_bath(&ohmic(gamma, 40.0), 400, 0.0, 0).unwrap();
        let nu = 0.5;
        let dt = 0.002;
        let x_at = |t: f64| (nu * t).sin();
        let mut worst: f64 = 0.0;
        let n = 5000;
        for k in 0..n {
            let t = k as f64 * dt;
            // Midpoint value of the drive over the step.
            b.step_driven(x_at(t + 0.5 * dt), dt);
            let t1 = t + dt;
            if t1 > 2.0 {
                let (_, f) = b.force_split(t1, x_at(t1), x_at(0.0));
                let expect = -gamma * nu * (nu * t1).cos();
                worst = worst.max((f - expect).abs() / (gamma * nu));
            }
        }
        assert!(worst < 0.1, "relative deviation {worst}");
    }

    #[test]
    fn step_size_precondition() {
        let tl = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
        let (h0, x) = two_level_operators(&tl);
        let bath = sample_thermal_bath(&ohmic(0.1, 50.0), 10, 1.0, 1).unwrap();
        assert!(matches!(CoupledStepper::new(&h0, &x, 1.0, 0.01, &bath, false), Err(Error::Contract { .. })));
    }

    #[test]
    fn displaced_bath_cancels_initial_slip() {
        // With the counterterm and the displaced start, the total bath force
        // minus the counterterm equals xi_thermal + f exactly.
        let (_, st) = coupled_setup(true, 1.0, 4);
        let mut b = st.bath.clone();
        let thermal = b.clone();
        b.displace_for(0.7);
        for t in [0.0, 0.3, 1.1] {
            let diff = b.free_force(t) - thermal.free_force(t);
            assert!((diff - 0.7 * b.kernel(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn fdt_over_realizations() {
        let (kt, j) = (2.0, ohmic(0.2, 20.0));
        let lags = [0.0, 0.05, 0.1, 0.3, 1.0];
        let n = 2000;
        let g = sample_thermal_bath(&j, 100, kt, 0).unwrap();
        for lag in lags {
            let prod: Vec<f64> = (0..n)
                .map(|s| {
                    let b = sample_thermal_bath(&j, 100, kt, 1000 + s).unwrap();
                    b.free_force(0.7) * b.free_force(0.7 + lag)
                })
                .collect();
            let expect = kt * g.kernel(lag);
            assert!((mean(&prod) - expect).abs() < 5.0 * std_error(&prod), "lag {lag}");
        }
    }
}
