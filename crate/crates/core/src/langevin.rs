//! Integrators for the stochastic nonlinear Schrödinger-Langevin equation
//! (state vectors) and the nonlinear Liouville-Langevin equation (density
//! matrices), plus the two-level Bloch form.
//!
//! The noise is piecewise constant over each grid step, so with the friction
//! frozen at the start of a step the effective Hamiltonian
//! `H0 - x (xi + f)` is Hermitian and constant on the step and the update is
//! a unitary map.

use std::io::Write;

use nalgebra::DMatrix;

use crate::environment::{markovian_friction, transition_rates, w0_correction, FrictionState, MemoryKernel, NoiseProcess};
use crate::error::{Error, Result};
use crate::quantum::{
    bloch_from_entries, commutator, exp_hermitian_2x2, two_level_operators, unitary_propagator, BlochVector, DensityMatrix,
    HermitianOperator, Mat2, QuantumState, Spinor, TwoLevelParams, C64, I,
};

const MODULE: &str = "langevin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact exponential of the frozen Hermitian generator (closed form for 2x2).
    ExactExponential2x2,
    /// Classical RK4 on the frozen generator followed by renormalization.
    RenormalizedRK4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinConfig {
    /// Step; must equal the noise grid step.
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Keep the kernel-renormalization term in the effective Hamiltonian.
    pub include_w0: bool,
    /// Record every n-th grid point (1 = every step).
    pub record_every: usize,
}

impl LangevinConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, scheme: Scheme::ExactExponential2x2, include_w0: false, record_every: 1 }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::contract(MODULE, "dt must be positive and t_end non-negative"));
        }
        if self.record_every == 0 {
            return Err(Error::contract(MODULE, "record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Friction {
    /// Linear (Ohmic, memory-free) friction `f = -gamma dQ/dt`.
    Ohmic { gamma: f64 },
    /// Retarded friction with an explicit memory kernel.
    Memory(MemoryKernel),
}

/// Operators and friction model driving the Langevin equations.
#[derive(Debug, Clone)]
pub struct LangevinOps {
    pub h0: HermitianOperator,
    pub x: HermitianOperator,
    pub hbar: f64,
    pub friction: Friction,
}

impl LangevinOps {
    pub fn new(h0: HermitianOperator, x: HermitianOperator, hbar: f64, friction: Friction) -> Result<Self> {
        if h0.dim() != x.dim() {
            return Err(Error::contract(MODULE, "H0 and x dimensions differ"));
        }
        if !(hbar > 0.0) {
            return Err(Error::domain(MODULE, "hbar must be positive"));
        }
        Ok(Self { h0, x, hbar, friction })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    fn ohmic_gamma(&self) -> Result<f64> {
        match self.friction {
            Friction::Ohmic { gamma } => Ok(gamma),
            Friction::Memory(_) => Err(Error::contract(
                MODULE,
                "memory friction needs a history; use run_trajectory or the explicit-force step",
            )),
        }
    }

    fn effective_hamiltonian(&self, force: f64) -> DMatrix<C64> {
        self.h0.entries() - self.x.entries().scale(force)
    }
}

/// Two-level system coupled to an Ohmic environment at thermal energy `kt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelModel {
    pub params: TwoLevelParams,
    pub gamma: f64,
    pub kt: f64,
}

impl TwoLevelModel {
    pub fn new(params: TwoLevelParams, gamma: f64, kt: f64) -> Result<Self> {
        if gamma < 0.0 || kt < 0.0 || !gamma.is_finite() || !kt.is_finite() {
            return Err(Error::domain(MODULE, "gamma and kT must be non-negative"));
        }
        Ok(Self { params, gamma, kt })
    }

    /// Model with `Q = 1` reproducing the rates `(lambda, A0)`.
    pub fn from_rates(omega0: f64, lambda: f64, a0: f64, hbar: f64) -> Result<Self> {
        let params = TwoLevelParams::new(omega0, 1.0, hbar)?;
        if a0 <= 0.0 {
            if lambda > 0.0 {
                return Err(Error::domain(MODULE, "lambda > 0 with A0 = 0 has no (gamma, T) realization"));
            }
            return Self::new(params, 0.0, 0.0);
        }
        if lambda < 0.0 {
            return Err(Error::domain(MODULE, "lambda must be non-negative"));
        }
        let gamma = a0 * hbar * hbar / (2.0 * params.delta);
        Self::new(params, gamma, lambda / a0 * params.delta)
    }

    /// `(lambda, A0)`.
    pub fn rates(&self) -> (f64, f64) {
        transition_rates(&self.params, self.gamma, self.kt)
    }

    pub fn ops(&self) -> LangevinOps {
        let (h0, x) = two_level_operators(&self.params);
        LangevinOps { h0, x, hbar: self.params.hbar, friction: Friction::Ohmic { gamma: self.gamma } }
    }

    pub fn noise(&self, dt: f64, seed: u64) -> Result<NoiseProcess> {
        NoiseProcess::new(dt, self.kt, self.gamma, seed)
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(MODULE, format!("noise value {xi} is not finite")))
    }
}

/// RK4 polynomial of the constant generator `a = -i h tau`.
fn rk4_propagator(h: &DMatrix<C64>, tau: f64) -> DMatrix<C64> {
    let n = h.nrows();
    let a = h.scale(tau).map(|z| -I * z);
    let a2 = &a * &a;
    let a3 = &a2 * &a;
    let a4 = &a3 * &a;
    DMatrix::identity(n, n) + &a + a2.unscale(2.0) + a3.unscale(6.0) + a4.unscale(24.0)
}

fn propagator(h: &DMatrix<C64>, cfg: &LangevinConfig, hbar: f64) -> DMatrix<C64> {
    match cfg.scheme {
        Scheme::ExactExponential2x2 => unitary_propagator(h, cfg.dt / hbar),
        Scheme::RenormalizedRK4 => rk4_propagator(h, cfg.dt / hbar),
    }
}

/// One step of the Schrödinger-Langevin equation with Ohmic friction
/// evaluated from `psi` at the start of the step.
pub fn sle_step(psi: &QuantumState, xi: f64, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<QuantumState> {
    let gamma = ops.ohmic_gamma()?;
    let f = markovian_friction(gamma, &ops.x, &ops.h0, &psi.density(), ops.hbar);
    sle_step_with_force(psi, xi + f, cfg, ops)
}

/// One step under `H0 - x * force`, where `force` already combines noise,
/// friction and any renormalization term.
pub fn sle_step_with_force(psi: &QuantumState, force: f64, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<QuantumState> {
    check_xi(force)?;
    if psi.dim() != ops.dim() {
        return Err(Error::contract(MODULE, "state/operator dimension mismatch"));
    }
    let u = propagator(&ops.effective_hamiltonian(force), cfg, ops.hbar);
    let mut out = QuantumState::from_vector_unchecked(u * psi.amplitudes());
    if cfg.scheme == Scheme::RenormalizedRK4 {
        out.renormalize();
    }
    Ok(out)
}

/// One step of the Liouville-Langevin equation: `rho' = U rho U^dagger` with
/// the friction `f_rho = (i/hbar) gamma Tr([x, H0] rho)`.
pub fn lle_step(rho: &DensityMatrix, xi: f64, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<DensityMatrix> {
    let gamma = ops.ohmic_gamma()?;
    let f = markovian_friction(gamma, &ops.x, &ops.h0, rho, ops.hbar);
    lle_step_with_force(rho, xi + f, cfg, ops)
}

pub fn lle_step_with_force(rho: &DensityMatrix, force: f64, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<DensityMatrix> {
    check_xi(force)?;
    if rho.dim() != ops.dim() {
        return Err(Error::contract(MODULE, "density/operator dimension mismatch"));
    }
    let u = propagator(&ops.effective_hamiltonian(force), cfg, ops.hbar);
    let mut m = &u * rho.entries() * u.adjoint();
    if cfg.scheme == Scheme::RenormalizedRK4 {
        let tr = m.trace().re;
        m.unscale_mut(tr);
    }
    // Exact Hermitian symmetrization; the conjugation is Hermitian up to roundoff.
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Rate-form parameters of the two-level Bloch equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochParams {
    pub q_scale: f64,
    pub hbar: f64,
    pub omega0: f64,
    pub a0: f64,
}

/// Right-hand side of the single-trajectory Bloch equations:
/// `(2Q xi b2/hbar - A0 b2^2, -w0 b3 - 2Q xi b1/hbar + A0 b1 b2, w0 b2)`.
pub fn bloch_sle_rhs(b: &BlochVector, xi: f64, p: &BlochParams) -> BlochVector {
    let k = 2.0 * p.q_scale * xi / p.hbar;
    BlochVector::new(
        k * b.b2 - p.a0 * b.b2 * b.b2,
        -p.omega0 * b.b3 - k * b.b1 + p.a0 * b.b1 * b.b2,
        p.omega0 * b.b2,
    )
}

#[derive(Debug, Clone)]
pub enum Initial {
    State(QuantumState),
    Density(DensityMatrix),
}

impl Initial {
    fn dim(&self) -> usize {
        match self {
            Initial::State(s) => s.dim(),
            Initial::Density(r) => r.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordStates {
    Bloch(Vec<BlochVector>),
    Density(Vec<DensityMatrix>),
}

/// Worst conservation defects seen over every step of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservationDefects {
    /// `| |psi| - 1 |` for states, `|Tr rho - 1|` for density matrices.
    pub norm: f64,
    /// `| |b| - 1 |` (two-level pure-state propagation only).
    pub bloch_norm: f64,
    pub hermiticity: f64,
    /// `|Tr rho^2 - Tr rho0^2|`.
    pub purity: f64,
}

impl ConservationDefects {
    fn absorb(&mut self, other: ConservationDefects) {
        self.norm = self.norm.max(other.norm);
        self.bloch_norm = self.bloch_norm.max(other.bloch_norm);
        self.hermiticity = self.hermiticity.max(other.hermiticity);
        self.purity = self.purity.max(other.purity);
    }
}

/// One Brownian trajectory on the recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: Vec<f64>,
    pub states: RecordStates,
    /// Noise value acting on `[t_k, t_k + dt)`.
    pub xi: Vec<f64>,
    pub seed: u64,
    pub defects: ConservationDefects,
}

impl TrajectoryRecord {
    pub fn bloch(&self) -> Option<&[BlochVector]> {
        match &self.states {
            RecordStates::Bloch(b) => Some(b),
            RecordStates::Density(_) => None,
        }
    }

    /// CSV with columns `t, b1, b2, b3, xi` (two-level records only).
    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> Result<()> {
        let b = self.bloch().ok_or_else(|| Error::contract(MODULE, "CSV export needs a two-level record"))?;
        crate::io::write_comment(&mut w, comment)?;
        writeln!(w, "t,b1,b2,b3,xi")?;
        for ((t, b), xi) in self.t.iter().zip(b).zip(&self.xi) {
            crate::io::write_row(&mut w, &[*t, b.b1, b.b2, b.b3, *xi])?;
        }
        Ok(())
    }
}

/// Inline two-level stepping for Ohmic friction.
pub(crate) struct TwoLevelKernel {
    h0: Mat2,
    x: Mat2,
    /// `i [x, H0]`, Hermitian; `f = (gamma/hbar) <psi|c|psi>`.
    c: Mat2,
    gamma: f64,
    hbar: f64,
}

fn to_mat2(m: &DMatrix<C64>) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn expect2(m: &Mat2, psi: &Spinor) -> f64 {
    let v = psi.apply(m);
    (psi.0[0].conj() * v.0[0] + psi.0[1].conj() * v.0[1]).re
}

impl TwoLevelKernel {
    pub(crate) fn new(ops: &LangevinOps) -> Result<Self> {
        let gamma = ops.ohmic_gamma()?;
        if ops.dim() != 2 {
            return Err(Error::contract(MODULE, "two-level kernel needs 2x2 operators"));
        }
        let c = commutator(ops.x.entries(), ops.h0.entries()).map(|z| I * z);
        Ok(Self { h0: to_mat2(ops.h0.entries()), x: to_mat2(ops.x.entries()), c: to_mat2(&c), gamma, hbar: ops.hbar })
    }

    #[inline]
    pub(crate) fn step(&self, psi: &Spinor, xi: f64, dt: f64, scheme: Scheme) -> Spinor {
        let f = self.gamma / self.hbar * expect2(&self.c, psi);
        let g = xi + f;
        let h = [
            [self.h0[0][0] - self.x[0][0] * g, self.h0[0][1] - self.x[0][1] * g],
            [self.h0[1][0] - self.x[1][0] * g, self.h0[1][1] - self.x[1][1] * g],
        ];
        let tau = dt / self.hbar;
        match scheme {
            Scheme::ExactExponential2x2 => psi.apply(&exp_hermitian_2x2(&h, tau)),
            Scheme::RenormalizedRK4 => {
                let deriv = |v: &Spinor| {
                    let hv = v.apply(&h);
                    Spinor([-I * hv.0[0] * tau, -I * hv.0[1] * tau])
                };
                let add = |a: &Spinor, b: &Spinor, s: f64| Spinor([a.0[0] + b.0[0] * s, a.0[1] + b.0[1] * s]);
                let k1 = deriv(psi);
                let k2 = deriv(&add(psi, &k1, 0.5));
                let k3 = deriv(&add(psi, &k2, 0.5));
                let k4 = deriv(&add(psi, &k3, 1.0));
                let mut out = Spinor([
                    psi.0[0] + (k1.0[0] + (k2.0[0] + k3.0[0]) * 2.0 + k4.0[0]) / 6.0,
                    psi.0[1] + (k1.0[1] + (k2.0[1] + k3.0[1]) * 2.0 + k4.0[1]) / 6.0,
                ]);
                let n = out.norm_sqr().sqrt();
                out.0[0] /= n;
                out.0[1] /= n;
                out
            }
        }
    }
}

/// Two-level Ohmic trajectory recorded as Bloch vectors only at the stride.
pub(crate) fn run_two_level(
    psi0: &Spinor,
    noise: &mut NoiseProcess,
    cfg: &LangevinConfig,
    kernel: &TwoLevelKernel,
) -> Result<TrajectoryRecord> {
    let n = cfg.n_steps();
    let cap = n / cfg.record_every + 1;
    let mut t = Vec::with_capacity(cap);
    let mut bloch = Vec::with_capacity(cap);
    let mut xis = Vec::with_capacity(cap);
    let mut psi = *psi0;
    let mut defects = ConservationDefects::default();
    for k in 0..=n {
        let xi = noise.next_value();
        if k % cfg.record_every == 0 {
            let b = psi.bloch();
            if !b.is_finite() {
                return Err(Error::numerical(MODULE, format!("non-finite state at step {k}")));
            }
            defects.bloch_norm = defects.bloch_norm.max((b.norm() - 1.0).abs());
            t.push(k as f64 * cfg.dt);
            bloch.push(b);
            xis.push(xi);
        }
        defects.norm = defects.norm.max((psi.norm_sqr().sqrt() - 1.0).abs());
        if k < n {
            psi = kernel.step(&psi, xi, cfg.dt, cfg.scheme);
        }
    }
    Ok(TrajectoryRecord { t, states: RecordStates::Bloch(bloch), xi: xis, seed: noise.seed(), defects })
}

/// Propagates one Brownian trajectory. Bit-reproducible given the noise seed
/// and configuration.
pub fn run_trajectory(initial: &Initial, noise: &NoiseProcess, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if (cfg.dt - noise.step()).abs() > 1e-12 * cfg.dt {
        return Err(Error::contract(
            MODULE,
            format!("step {} differs from the noise grid step {}", cfg.dt, noise.step()),
        ));
    }
    if initial.dim() != ops.dim() {
        return Err(Error::contract(MODULE, "initial state/operator dimension mismatch"));
    }
    // Always start from the seed so repeated calls see the same realization.
    let mut noise = NoiseProcess::new(noise.step(), noise.kt(), noise.gamma(), noise.seed())?;

    if let (Initial::State(psi), Friction::Ohmic { .. }, 2) = (initial, &ops.friction, ops.dim()) {
        let kernel = TwoLevelKernel::new(ops)?;
        return run_two_level(&Spinor::from_state(psi), &mut noise, cfg, &kernel);
    }
    run_generic(initial, &mut noise, cfg, ops)
}

fn run_generic(initial: &Initial, noise: &mut NoiseProcess, cfg: &LangevinConfig, ops: &LangevinOps) -> Result<TrajectoryRecord> {
    let n = cfg.n_steps();
    let two_level = ops.dim() == 2;
    let mut friction_state = match &ops.friction {
        Friction::Memory(k) => Some(FrictionState::new(k.clone())),
        Friction::Ohmic { .. } => None,
    };
    let mut state = initial.clone();
    let density_of = |s: &Initial| match s {
        Initial::State(psi) => psi.density(),
        Initial::Density(r) => r.clone(),
    };
    let purity0 = density_of(&state).purity();
    let q0 = crate::quantum::expectation(&ops.x, &density_of(&state))?;

    let mut t = Vec::new();
    let mut bloch = Vec::new();
    let mut dens = Vec::new();
    let mut xis = Vec::new();
    let mut defects = ConservationDefects::default();

    for k in 0..=n {
        let time = k as f64 * cfg.dt;
        let xi = noise.next_value();
        let rho = density_of(&state);
        let mut d = ConservationDefects::default();
        match &state {
            Initial::State(psi) => d.norm = (psi.norm() - 1.0).abs(),
            Initial::Density(r) => {
                d.norm = (r.trace() - 1.0).abs();
                d.hermiticity = r.hermiticity_defect();
                d.purity = (r.purity() - purity0).abs();
            }
        }
        if two_level {
            let b = bloch_from_entries(rho.entries());
            if matches!(state, Initial::State(_)) {
                d.bloch_norm = (b.norm() - 1.0).abs();
            }
            if !b.is_finite() {
                return Err(Error::numerical(MODULE, format!("non-finite state at step {k}")));
            }
        }
        defects.absorb(d);
        if k % cfg.record_every == 0 {
            t.push(time);
            xis.push(xi);
            if two_level {
                bloch.push(bloch_from_entries(rho.entries()));
            } else {
                dens.push(rho.clone());
            }
        }
        if k == n {
            break;
        }
        let force = match (&ops.friction, friction_state.as_mut()) {
            (Friction::Ohmic { gamma }, _) => xi + markovian_friction(*gamma, &ops.x, &ops.h0, &rho, ops.hbar),
            (Friction::Memory(kernel), Some(fs)) => {
                let q = crate::quantum::expectation(&ops.x, &rho)?;
                fs.push(time, q)?;
                let f = if k == 0 { 0.0 } else { fs.force(time, None)? };
                let w0 = if cfg.include_w0 { w0_correction(kernel, q, q0, time) } else { 0.0 };
                // W = -x xi - x f + x w0
                xi + f - w0
            }
            (Friction::Memory(_), None) => unreachable!(),
        };
        state = match &state {
            Initial::State(psi) => Initial::State(sle_step_with_force(psi, force, cfg, ops)?),
            Initial::Density(r) => Initial::Density(lle_step_with_force(r, force, cfg, ops)?),
        };
    }
    let states = if two_level { RecordStates::Bloch(bloch) } else { RecordStates::Density(dens) };
    Ok(TrajectoryRecord { t, states, xi: xis, seed: noise.seed(), defects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bloch_from_density, density_from_bloch};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn model(gamma: f64, kt: f64) -> TwoLevelModel {
        TwoLevelModel::new(TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap(), gamma, kt).unwrap()
    }

    #[test]
    fn free_eigenstate_keeps_its_bloch_vector() {
        let ops = model(0.0, 0.0).ops();
        let cfg = LangevinConfig::new(0.01, 1.0);
        let mut psi = QuantumState::basis(2, 0).unwrap();
        for _ in 0..100 {
            psi = sle_step(&psi, 0.0, &cfg, &ops).unwrap();
        }
        assert!(psi.bloch().unwrap().max_abs_diff(&BlochVector::new(1.0, 0.0, 0.0)) < 1e-14);
    }

    #[test]
    fn free_precession_matches_closed_form() {
        let ops = model(0.0, 0.0).ops();
        let cfg = LangevinConfig::new(0.01, 1.0);
        let mut psi = QuantumState::two_level(FRAC_PI_4);
        for k in 1..=300 {
            psi = sle_step(&psi, 0.0, &cfg, &ops).unwrap();
            let t = k as f64 * 0.01;
            let expect = BlochVector::new(0.0, -(5.0 * t).sin(), (5.0 * t).cos());
            assert!(psi.bloch().unwrap().max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn non_finite_noise_is_rejected() {
        let ops = model(0.1, 1.0).ops();
        let cfg = LangevinConfig::new(0.01, 1.0);
        let psi = QuantumState::two_level(0.3);
        assert!(matches!(sle_step(&psi, f64::NAN, &cfg, &ops), Err(Error::Domain { .. })));
        assert!(lle_step(&psi.density(), f64::INFINITY, &cfg, &ops).is_err());
    }

    #[test]
    fn maximally_mixed_state_is_a_fixed_point() {
        let ops = model(0.3, 1.0).ops();
        let cfg = LangevinConfig::new(0.01, 1.0);
        let rho = DensityMatrix::maximally_mixed(2);
        for xi in [-30.0, 0.0, 4.5] {
            let out = lle_step(&rho, xi, &cfg, &ops).unwrap();
            assert!((out.entries() - rho.entries()).camax() < 1e-15);
        }
    }

    #[test]
    fn bloch_rhs_examples() {
        let p = BlochParams { q_scale: 1.3, hbar: 1.0, omega0: 5.0, a0: 0.7 };
        for s in [1.0, -1.0] {
            let d = bloch_sle_rhs(&BlochVector::new(s, 0.0, 0.0), 2.0, &p);
            assert_eq!(d.b1, 0.0);
            assert_eq!(d.b3, 0.0);
            assert!((d.b2 + s * 2.0 * 1.3 * 2.0).abs() < 1e-14);
        }
        let d = bloch_sle_rhs(&BlochVector::new(0.0, 0.0, 1.0), 0.0, &p);
        assert_eq!(d, BlochVector::new(0.0, -5.0, 0.0));
    }

    #[test]
    fn record_csv_has_header() {
        let m = model(0.1, 1.0);
        let cfg = LangevinConfig::new(0.01, 0.05);
        let rec = run_trajectory(&Initial::State(QuantumState::two_level(0.2)), &m.noise(0.01, 3).unwrap(), &cfg, &m.ops()).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, "test").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# test");
        assert_eq!(lines[1], "t,b1,b2,b3,xi");
        assert_eq!(lines.len(), 2 + 6);
    }

    #[test]
    fn mismatched_noise_grid_is_refused() {
        let m = model(0.1, 1.0);
        let cfg = LangevinConfig::new(0.01, 1.0);
        let noise = m.noise(0.02, 1).unwrap();
        let r = run_trajectory(&Initial::State(QuantumState::two_level(0.2)), &noise, &cfg, &m.ops());
        assert!(matches!(r, Err(Error::Contract { .. })));
    }

    #[test]
    fn zero_temperature_free_run_matches_precession_for_twenty_periods() {
        let m = model(0.0, 0.0);
        let dt = 0.001;
        let t_end = 20.0 * 2.0 * PI / 5.0;
        let cfg = LangevinConfig { record_every: 10, ..LangevinConfig::new(dt, t_end) };
        let rec = run_trajectory(&Initial::State(QuantumState::two_level(FRAC_PI_4)), &m.noise(dt, 1).unwrap(), &cfg, &m.ops()).unwrap();
        for (t, b) in rec.t.iter().zip(rec.bloch().unwrap()) {
            let expect = BlochVector::new(0.0, -(5.0 * t).sin(), (5.0 * t).cos());
            assert!(b.max_abs_diff(&expect) < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn ground_state_is_stationary_under_friction() {
        let m = model(0.1, 0.0);
        let cfg = LangevinConfig::new(0.01, 10.0);
        let rec = run_trajectory(&Initial::State(QuantumState::basis(2, 1).unwrap()), &m.noise(0.01, 1).unwrap(), &cfg, &m.ops()).unwrap();
        for b in rec.bloch().unwrap() {
            assert!(b.max_abs_diff(&BlochVector::new(-1.0, 0.0, 0.0)) < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn zero_temperature_energy_decays_at_friction_rate() {
        // A0 = 1 at omega0 = 5, Q = 1: gamma = 0.1.
        let m = model(0.1, 0.0);
        let dt = 0.001;
        let cfg = LangevinConfig { record_every: 10, ..LangevinConfig::new(dt, 30.0) };
        let rec = run_trajectory(&Initial::State(QuantumState::two_level(PI / 12.0)), &m.noise(dt, 1).unwrap(), &cfg, &m.ops()).unwrap();
        let b = rec.bloch().unwrap();
        let (t, y): (Vec<f64>, Vec<f64>) = rec
            .t
            .iter()
            .zip(b)
            .filter(|(t, _)| **t >= 15.0)
            .map(|(t, b)| (*t, b.b1 + 1.0))
            .unzip();
        let rate = crate::stats::fit_decay_rate(&t, &y);
        assert!((rate - 1.0).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn fast_and_generic_paths_agree() {
        let m = model(0.1, 2.0);
        let cfg = LangevinConfig::new(0.005, 2.0);
        let noise = m.noise(0.005, 77).unwrap();
        let psi = QuantumState::two_level(0.4);
        let fast = run_trajectory(&Initial::State(psi.clone()), &noise, &cfg, &m.ops()).unwrap();
        let mut n2 = NoiseProcess::new(0.005, m.kt, m.gamma, 77).unwrap();
        let slow = run_generic(&Initial::State(psi), &mut n2, &cfg, &m.ops()).unwrap();
        for (a, b) in fast.bloch().unwrap().iter().zip(slow.bloch().unwrap()) {
            assert!(a.max_abs_diff(b) < 1e-11);
        }
        assert_eq!(fast.xi, slow.xi);
    }

    #[test]
    fn trajectory_is_bit_reproducible() {
        let m = model(0.1, 2.0);
        let cfg = LangevinConfig::new(0.01, 5.0);
        let run = || run_trajectory(&Initial::State(QuantumState::two_level(0.4)), &m.noise(0.01, 5).unwrap(), &cfg, &m.ops()).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn memory_kernel_path_runs_and_conserves_norm() {
        let p = TwoLevelParams::with_unit_hbar(5.0, 1.0).unwrap();
        let (h0, x) = two_level_operators(&p);
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let vals = grid.iter().map(|t| 0.2 * (-t * 10.0f64).exp()).collect();
        let kernel = MemoryKernel::sampled(grid, vals).unwrap();
        let ops = LangevinOps::new(h0, x, 1.0, Friction::Memory(kernel)).unwrap();
        let cfg = LangevinConfig { include_w0: true, ..LangevinConfig::new(0.01, 2.0) };
        let noise = NoiseProcess::new(0.01, 1.0, 0.1, 4).unwrap();
        let rec = run_trajectory(&Initial::State(QuantumState::two_level(0.3)), &noise, &cfg, &ops).unwrap();
        assert!(rec.defects.norm < 1e-12);
        assert!(rec.defects.bloch_norm < 1e-10);
    }

    #[test]
    fn scheme_agreement_is_fourth_order() {
        // Identical noise function: values held on a coarse grid, refined steps subdivide it.
        let m = model(0.1, 2.0);
        let ops = m.ops();
        let coarse = 0.05;
        let noise = crate::environment::sample_noise(&m.noise(coarse, 9).unwrap(), 40);
        let diff_at = |sub: usize| {
            let dt = coarse / sub as f64;
            let mut a = QuantumState::two_level(0.3);
            let mut b = a.clone();
            let ce = LangevinConfig::new(dt, 2.0);
            let cr = LangevinConfig { scheme: Scheme::RenormalizedRK4, ..ce.clone() };
            for xi in &noise {
                for _ in 0..sub {
                    a = sle_step(&a, *xi, &ce, &ops).unwrap();
                    b = sle_step(&b, *xi, &cr, &ops).unwrap();
                }
            }
            (a.bloch().unwrap().max_abs_diff(&b.bloch().unwrap())).max(1e-300)
        };
        let d = [diff_at(2), diff_at(4), diff_at(8)];
        for w in d.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.5, "observed order {order} from {d:?}");
        }
    }

    fn arb_state() -> impl Strategy<Value = QuantumState> {
        (0.0..PI, 0.0..2.0 * PI).prop_map(|(th, ph)| {
            QuantumState::new(vec![C64::new((th / 2.0).cos(), 0.0), C64::from_polar((th / 2.0).sin(), ph)]).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sle_step_is_unitary(psi in arb_state(), xi in -50.0..50.0f64, dt in 1e-4..0.1f64) {
            let ops = model(0.1, 1.0).ops();
            for scheme in [Scheme::ExactExponential2x2, Scheme::RenormalizedRK4] {
                let cfg = LangevinConfig { scheme, ..LangevinConfig::new(dt, 1.0) };
                let out = sle_step(&psi, xi, &cfg, &ops).unwrap();
                prop_assert!((out.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn lle_matches_sle_on_pure_states(psi in arb_state(), xi in -20.0..20.0f64) {
            let ops = model(0.15, 1.0).ops();
            for scheme in [Scheme::ExactExponential2x2, Scheme::RenormalizedRK4] {
                let cfg = LangevinConfig { scheme, ..LangevinConfig::new(0.01, 1.0) };
                let via_state = sle_step(&psi, xi, &cfg, &ops).unwrap().density();
                let via_rho = lle_step(&psi.density(), xi, &cfg, &ops).unwrap();
                prop_assert!((via_state.entries() - via_rho.entries()).camax() < 1e-12);
            }
        }

        #[test]
        fn lle_preserves_trace_and_hermiticity(b in (-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64), xis in prop::collection::vec(-10.0..10.0f64, 100)) {
            let ops = model(0.2, 1.0).ops();
            let cfg = LangevinConfig::new(0.01, 1.0);
            let mut rho = density_from_bloch(&BlochVector::new(b.0, b.1, b.2)).unwrap();
            let p0 = rho.purity();
            for xi in xis {
                rho = lle_step(&rho, xi, &cfg, &ops).unwrap();
                prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
                prop_assert_eq!(rho.hermiticity_defect(), 0.0);
            }
            prop_assert!((rho.purity() - p0).abs() < 1e-12);
            prop_assert!(bloch_from_density(&rho).is_ok());
        }

        #[test]
        fn bloch_rhs_preserves_norm(th in 0.0..PI, ph in 0.0..2.0 * PI, r in 0.0..=1.0f64, xi in -10.0..10.0f64, a0 in 0.0..3.0f64) {
            let b = BlochVector::new(r * th.cos(), r * th.sin() * ph.cos(), r * th.sin() * ph.sin());
            let p = BlochParams { q_scale: 0.8, hbar: 1.0, omega0: 5.0, a0 };
            let d = bloch_sle_rhs(&b, xi, &p);
            // d|b|^2/dt = 2 b . db/dt
            prop_assert!(b.dot(&d).abs() < 1e-12);
        }
    }
}
