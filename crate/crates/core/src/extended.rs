//! Extended phase space with time as a dynamical pair: classical coordinates
//! `(q0, p0) = (c t, -E/c)` and Gaussian time wave-packets as coherent states
//! labelled by a centroid `tau` and an energy `eps`.
//!
//! A packet with width parameter `W` is
//!
//! ```text
//! chi(T) = (W / sqrt(pi))^(1/2) exp(-W^2 (T - tau)^2 / 2 - i eps T / hbar + i eps tau / (2 hbar))
//! ```
//!
//! i.e. the coherent state of label `z = (W tau - i eps / (hbar W)) / sqrt(2)`.
//! Two packets with the same `W` overlap as
//! `<chi_z'|chi_z> = exp(-|z|^2/2 - |z'|^2/2 + conj(z') z)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;

use crate::bath::{BathRealization, CoupledState};
use crate::error::{Error, Result};
use crate::quantum::{unitary_propagator, HermitianOperator, QuantumState, C64, I};

const MODULE: &str = "extended";

/// Gaussian time wave-packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWavePacket {
    pub tau: f64,
    pub eps: f64,
    /// Width parameter (inverse time).
    pub omega: f64,
    pub hbar: f64,
}

impl TimeWavePacket {
    pub fn new(tau: f64, eps: f64, omega: f64, hbar: f64) -> Result<Self> {
        if !(omega > 0.0 && hbar > 0.0) || !tau.is_finite() || !eps.is_finite() {
            return Err(Error::domain(MODULE, "packet needs finite (tau, eps) and positive width and hbar"));
        }
        Ok(Self { tau, eps, omega, hbar })
    }

    pub fn z(&self) -> C64 {
        C64::new(self.omega * self.tau, -self.eps / (self.hbar * self.omega)) / 2f64.sqrt()
    }

    /// Packet with the given label, inverting `z`.
    pub fn from_z(z: C64, omega: f64, hbar: f64) -> Result<Self> {
        let s = 2f64.sqrt();
        Self::new(s * z.re / omega, -s * z.im * hbar * omega, omega, hbar)
    }

    pub fn wavefunction(&self, t: f64) -> C64 {
        let amp = (self.omega / PI.sqrt()).sqrt() * (-0.5 * self.omega * self.omega * (t - self.tau).powi(2)).exp();
        C64::from_polar(amp, -self.eps * t / self.hbar + 0.5 * self.eps * self.tau / self.hbar)
    }

    /// `<self|other>` from the coherent-state formula.
    pub fn overlap(&self, other: &TimeWavePacket) -> Result<C64> {
        if self.omega != other.omega || self.hbar != other.hbar {
            return Err(Error::contract(MODULE, "overlap formula needs a common width and hbar"));
        }
        let (a, b) = (self.z(), other.z());
        Ok((-0.5 * a.norm_sqr() - 0.5 * b.norm_sqr() + a.conj() * b).exp())
    }

    /// `<Pi> = -eps / c` for `Pi = -i hbar d/(c dT)`.
    pub fn momentum_expectation(&self, light_speed: f64) -> f64 {
        -self.eps / light_speed
    }

    /// `(norm, <Pi>)` by trapezoid quadrature of the wavefunction over
    /// `tau +- span / W` with `n` intervals.
    pub fn quadrature(&self, light_speed: f64, span: f64, n: usize) -> (f64, f64) {
        let lo = self.tau - span / self.omega;
        let h = 2.0 * span / self.omega / n as f64;
        let (mut norm, mut pi) = (0.0, 0.0);
        for k in 0..=n {
            let t = lo + k as f64 * h;
            let chi = self.wavefunction(t);
            // d chi / dT
            let d = chi * C64::new(-self.omega * self.omega * (t - self.tau), -self.eps / self.hbar);
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            norm += w * chi.norm_sqr();
            pi += w * (chi.conj() * (-I * self.hbar / light_speed) * d).re;
        }
        (norm * h, pi * h)
    }
}

/// Symplectic coefficients `w_jk = 2 hbar Im <d_j chi|d_k chi>` in the chart
/// `(x1, x2) -> (tau, eps)`, from central mixed differences of the overlap
/// with one Richardson extrapolation.
pub fn symplectic_form_coeffs(
    chart: impl Fn(f64, f64) -> (f64, f64),
    at: (f64, f64),
    steps: (f64, f64),
    omega: f64,
    hbar: f64,
) -> Result<[[f64; 2]; 2]> {
    let (h1, h2) = steps;
    if !(h1 > 0.0 && h2 > 0.0 && h1.is_finite() && h2.is_finite()) {
        return Err(Error::contract(MODULE, "stencil steps must be positive"));
    }
    let packet = |x1: f64, x2: f64| {
        let (tau, eps) = chart(x1, x2);
        TimeWavePacket::new(tau, eps, omega, hbar)
    };
    // Degenerate charts collapse the stencil.
    let (t0, e0) = chart(at.0, at.1);
    let (t1, e1) = chart(at.0 + h1, at.1);
    let (t2, e2) = chart(at.0, at.1 + h2);
    let jac = ((t1 - t0) * omega) * ((e2 - e0) / (hbar * omega)) - ((t2 - t0) * omega) * ((e1 - e0) / (hbar * omega));
    if jac.abs() < 1e-12 * h1 * h2 / (1.0 + h1 * h2) && jac.abs() < 1e-14 {
        return Err(Error::contract(MODULE, "chart is degenerate on the stencil"));
    }
    let mixed = |h1: f64, h2: f64| -> Result<f64> {
        // d^2/dx'_1 dx_2 of <chi(x')|chi(x)>
        let mut acc = C64::new(0.0, 0.0);
        for (s1, s2, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let bra = packet(at.0 + s1 * h1, at.1)?;
            let ket = packet(at.0, at.1 + s2 * h2)?;
            acc += bra.overlap(&ket)? * w;
        }
        Ok((acc / (4.0 * h1 * h2)).im)
    };
    let coarse = mixed(h1, h2)?;
    let fine = mixed(0.5 * h1, 0.5 * h2)?;
    let w12 = 2.0 * hbar * (4.0 * fine - coarse) / 3.0;
    if !w12.is_finite() {
        return Err(Error::numerical(MODULE, "non-finite symplectic coefficient"));
    }
    Ok([[0.0, w12], [-w12, 0.0]])
}

/// Classical point in the extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `c t`.
    pub q0: f64,
    /// `-E / c`.
    pub p0: f64,
}

/// Harmonic classical sector coupled through `h_C = x * sum_k g_k q_k`.
#[derive(Debug, Clone)]
pub struct ExtendedSystem {
    pub mass: Vec<f64>,
    pub frequency: Vec<f64>,
    pub coupling: Vec<f64>,
    pub h0: HermitianOperator,
    pub x: HermitianOperator,
    pub hbar: f64,
    pub light_speed: f64,
    /// Whether the coupling depends explicitly on `tau`; unsupported.
    pub explicit_time_dependence: bool,
}

impl ExtendedSystem {
    /// Same dynamics as a weighted oscillator bath: masses `w_i m_i`,
    /// couplings `w_i C_i`, canonical momenta `w_i p_i`.
    pub fn from_bath(bath: &BathRealization, h0: HermitianOperator, x: HermitianOperator, hbar: f64, light_speed: f64) -> Self {
        Self {
            mass: bath.weight.iter().zip(&bath.mass).map(|(w, m)| w * m).collect(),
            frequency: bath.omega.clone(),
            coupling: bath.weight.iter().zip(&bath.coupling).map(|(w, c)| w * c).collect(),
            h0,
            x,
            hbar,
            light_speed,
            explicit_time_dependence: false,
        }
    }

    fn check(&self) -> Result<()> {
        if self.explicit_time_dependence {
            return Err(Error::contract(MODULE, "couplings with explicit time dependence are not supported (energy drift undefined)"));
        }
        let n = self.mass.len();
        if self.frequency.len() != n || self.coupling.len() != n {
            return Err(Error::contract(MODULE, "oscillator arrays differ in length"));
        }
        if self.h0.dim() != self.x.dim() {
            return Err(Error::contract(MODULE, "H0 and x dimensions differ"));
        }
        Ok(())
    }

    /// `sum_k (p_k^2 / 2m_k + m_k w_k^2 q_k^2 / 2)`.
    pub fn classical_energy(&self, q: &[f64], p: &[f64]) -> f64 {
        (0..q.len())
            .map(|k| 0.5 * p[k] * p[k] / self.mass[k] + 0.5 * self.mass[k] * self.frequency[k].powi(2) * q[k] * q[k])
            .sum()
    }

    fn force_sum(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.coupling).map(|(q, g)| q * g).sum()
    }

    /// Total energy `H_cl + <psi|H0 + h_C|psi>`.
    pub fn energy(&self, point: &ExtendedPhasePoint, psi: &QuantumState) -> Result<f64> {
        let h = self.h0.entries() + self.x.entries().scale(self.force_sum(&point.q));
        let v = psi.amplitudes();
        Ok(self.classical_energy(&point.q, &point.p) + v.dotc(&(h * v)).re)
    }
}

/// Joint state advanced by [`extended_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub point: ExtendedPhasePoint,
    pub psi: QuantumState,
    pub packet: TimeWavePacket,
    /// Steps taken; drifts are applied as `initial + n du`.
    pub steps: u64,
    pub q0_init: f64,
    pub tau_init: f64,
}

impl ExtendedState {
    /// Starts at `t = tau` with `p0 = -E/c` from the current energy.
    pub fn new(sys: &ExtendedSystem, q: Vec<f64>, p: Vec<f64>, psi: QuantumState, packet: TimeWavePacket) -> Result<Self> {
        sys.check()?;
        let mut point = ExtendedPhasePoint { q, p, q0: sys.light_speed * packet.tau, p0: 0.0 };
        point.p0 = -sys.energy(&point, &psi)? / sys.light_speed;
        Ok(Self { q0_init: point.q0, tau_init: packet.tau, point, psi, packet, steps: 0 })
    }

    /// Extended state matching a bath-coupled state, with `tau = t`.
    pub fn from_coupled(sys: &ExtendedSystem, state: &CoupledState, omega: f64) -> Result<Self> {
        let p = state.bath.p.iter().zip(&state.bath.weight).map(|(p, w)| p * w).collect();
        let packet = TimeWavePacket::new(state.t, 0.0, omega, sys.hbar)?;
        let mut st = Self::new(sys, state.bath.q.clone(), p, state.psi.clone(), packet)?;
        st.packet.eps = -sys.light_speed * st.point.p0;
        Ok(st)
    }

    /// Classical time `q0 / c`.
    pub fn classical_time(&self, light_speed: f64) -> f64 {
        self.point.q0 / light_speed
    }
}

fn quantum_half(sys: &ExtendedSystem, psi: &QuantumState, q: &[f64], h: f64) -> QuantumState {
    let ham: DMatrix<C64> = sys.h0.entries() + sys.x.entries().scale(sys.force_sum(q));
    let u = unitary_propagator(&ham, h / sys.hbar);
    QuantumState::from_vector_unchecked(u * psi.amplitudes())
}

fn classical_flow(sys: &ExtendedSystem, q: &mut [f64], p: &mut [f64], xv: f64, du: f64) {
    for k in 0..q.len() {
        let (m, w) = (sys.mass[k], sys.frequency[k]);
        p[k] -= sys.coupling[k] * xv * 0.5 * du;
        let (s, c) = (w * du).sin_cos();
        let (qk, pk) = (q[k], p[k]);
        q[k] = qk * c + pk / (m * w) * s;
        p[k] = pk * c - m * w * qk * s;
        p[k] -= sys.coupling[k] * xv * 0.5 * du;
    }
}

/// One step of universal time `du`.
///
/// The `(q, p, psi)` sector uses a Strang split between the Schrödinger
/// flow under `H0 + h_C(q)` (classical sector frozen) and the classical flow
/// under `H_cl + <h_C>` (state frozen). Time drifts are applied exactly:
/// `q0 = q0(0) + c n du`, `tau = tau(0) + n du`; `p0` and `eps` are constant
/// because the coupling has no explicit time dependence.
pub fn extended_flow(state: &ExtendedState, sys: &ExtendedSystem, du: f64) -> Result<ExtendedState> {
    sys.check()?;
    if !(du > 0.0 && du.is_finite()) {
        return Err(Error::contract(MODULE, "du must be positive"));
    }
    let mut next = state.clone();
    next.psi = quantum_half(sys, &state.psi, &state.point.q, 0.5 * du);
    let xv = next.psi.expectation(&sys.x)?;
    classical_flow(sys, &mut next.point.q, &mut next.point.p, xv, du);
    next.psi = quantum_half(sys, &next.psi, &next.point.q, 0.5 * du);
    next.steps += 1;
    let u = next.steps as f64 * du;
    next.point.q0 = next.q0_init + sys.light_speed * u;
    next.packet.tau = next.tau_init + u;
    Ok(next)
}

/// `(u, q0, p0, tau, eps)` rows.
pub fn write_extended_csv<W: Write>(mut w: W, rows: &[[f64; 5]], comment: &str) -> Result<()> {
    crate::io::write_table(&mut w, comment, &["u", "q0", "p0", "tau", "eps"], rows.iter().map(|r| r.to_vec()))
}

/// Results of the broken-symmetry construction with `P = Pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenSymmetryReport {
    /// `w_(zeta, wp)` in the chart `zeta = -c tau`, `wp = -eps / c`.
    pub omega_zeta_wp: f64,
    /// `-d<H_I>/d wp` with `H_I = c Pi`.
    pub multiplier: f64,
    /// `(zeta(u) - zeta(0)) / u` along the flow.
    pub zeta_rate: f64,
    /// `max |zeta(u) - zeta(0) - multiplier u|`.
    pub zeta_error: f64,
    /// `max |wp(u) - wp(0)|`.
    pub wp_drift: f64,
    /// `d<H_I>/d zeta`, the generator of `wp` motion.
    pub wp_rate: f64,
}

/// Checks the symmetry-breaking picture on the packet family generated by
/// `Pi` from `packet`, following its time sector for `n` steps of `du`.
pub fn broken_symmetry_check(packet: &TimeWavePacket, light_speed: f64, du: f64, n: usize) -> Result<BrokenSymmetryReport> {
    let c = light_speed;
    let (w, hbar) = (packet.omega, packet.hbar);
    let chart = move |zeta: f64, wp: f64| (-zeta / c, -c * wp);
    let zeta0 = -c * packet.tau;
    let wp0 = -packet.eps / c;
    let steps = (1e-3 * c / w, 1e-3 * hbar * w / c);
    let omega = symplectic_form_coeffs(chart, (zeta0, wp0), steps, w, hbar)?;
    // <H_I> = c <Pi> in the chart.
    let h_i = |zeta: f64, wp: f64| -> Result<f64> {
        let (tau, eps) = chart(zeta, wp);
        Ok(c * TimeWavePacket::new(tau, eps, w, hbar)?.momentum_expectation(c))
    };
    let d_wp = (h_i(zeta0, wp0 + steps.1)? - h_i(zeta0, wp0 - steps.1)?) / (2.0 * steps.1);
    let d_zeta = (h_i(zeta0 + steps.0, wp0)? - h_i(zeta0 - steps.0, wp0)?) / (2.0 * steps.0);
    let multiplier = -d_wp;

    // Time sector of the extended flow; with no coupling the sector is free.
    let sys = ExtendedSystem {
        mass: vec![],
        frequency: vec![],
        coupling: vec![],
        h0: HermitianOperator::zeros(2),
        x: HermitianOperator::zeros(2),
        hbar,
        light_speed: c,
        explicit_time_dependence: false,
    };
    let mut st = ExtendedState::new(&sys, vec![], vec![], QuantumState::basis(2, 0)?, *packet)?;
    let (mut zeta_error, mut wp_drift) = (0.0f64, 0.0f64);
    for _ in 0..n {
        st = extended_flow(&st, &sys, du)?;
        let u = st.steps as f64 * du;
        let zeta = -c * st.packet.tau;
        let wp = -st.packet.eps / c;
        zeta_error = zeta_error.max((zeta - zeta0 - multiplier * u).abs());
        wp_drift = wp_drift.max((wp - wp0).abs());
    }
    let u_end = n as f64 * du;
    let zeta_rate = if n > 0 { (-c * st.packet.tau - zeta0) / u_end } else { multiplier };
    Ok(BrokenSymmetryReport { omega_zeta_wp: omega[0][1], multiplier, zeta_rate, zeta_error, wp_drift, wp_rate: d_zeta })
}
