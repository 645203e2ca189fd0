//! Classical thermal environment: spectral densities, memory kernels, the
//! grid-normalized thermal noise, the friction functional and the
//! kernel-renormalization term.
//!
//! Units: temperatures enter only as the thermal energy `kt = k_B T`.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quantum::{commutator, trace_product, DensityMatrix, HermitianOperator, TwoLevelParams, I};
use crate::stats::simpson_uniform;

const MODULE: &str = "environment";

/// Piecewise-linear table `(omega, value)` on a sorted grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    omega: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(omega: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omega.len() != values.len() || omega.len() < 2 {
            return Err(Error::contract(MODULE, "table needs at least two (omega, value) rows of equal length"));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) || omega[0] < 0.0 {
            return Err(Error::contract(MODULE, "table frequencies must be non-negative and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(MODULE, "table values must be finite"));
        }
        Ok(Self { omega, values })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation; zero outside the tabulated range.
    pub fn eval(&self, w: f64) -> f64 {
        let n = self.omega.len();
        if w < self.omega[0] || w > self.omega[n - 1] {
            return 0.0;
        }
        let k = self.omega.partition_point(|&x| x <= w).clamp(1, n - 1);
        let (x0, x1) = (self.omega[k - 1], self.omega[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        y0 + (y1 - y0) * (w - x0) / (x1 - x0)
    }

    /// Parses two whitespace- or comma-separated columns; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Parse { line: i + 1, message: format!("expected 2 columns, found {}", cols.len()) });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, message: format!("bad number {s:?}: {e}") })
            };
            omega.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::new(omega, values)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralKind {
    /// `J(w) = gamma * w`.
    Ohmic { gamma: f64 },
    /// Thermal radiation field: `J(w) = 2 pi^2 e^2 w u(w) / (3 kT)`.
    Electromagnetic { charge: f64, energy_density: Table, kt: f64 },
    Tabulated(Table),
}

/// Spectral density `J(w)` with a finite cutoff; zero above `cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub kind: SpectralKind,
    pub cutoff: f64,
}

impl SpectralDensity {
    pub fn ohmic(gamma: f64, cutoff: f64) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(Error::domain(MODULE, "friction coefficient must be non-negative"));
        }
        Self::with_cutoff(SpectralKind::Ohmic { gamma }, cutoff)
    }

    pub fn electromagnetic(charge: f64, energy_density: Table, kt: f64, cutoff: f64) -> Result<Self> {
        if kt <= 0.0 {
            return Err(Error::domain(MODULE, "electromagnetic spectral density needs kT > 0"));
        }
        Self::with_cutoff(SpectralKind::Electromagnetic { charge, energy_density, kt }, cutoff)
    }

    /// Electromagnetic density with the classical (Rayleigh-Jeans) energy
    /// density `u(w) = w^2 kT / (pi^2 c^3)`, tabulated on `n` points.
    pub fn electromagnetic_rayleigh_jeans(charge: f64, light_speed: f64, kt: f64, cutoff: f64, n: usize) -> Result<Self> {
        let omega: Vec<f64> = (0..n).map(|i| cutoff * i as f64 / (n - 1) as f64).collect();
        let u = omega.iter().map(|w| w * w * kt / (PI * PI * light_speed.powi(3))).collect();
        Self::electromagnetic(charge, Table::new(omega, u)?, kt, cutoff)
    }

    pub fn tabulated(table: Table) -> Result<Self> {
        let cutoff = *table.omega.last().unwrap_or(&0.0);
        if table.values.iter().any(|v| *v < 0.0) {
            return Err(Error::domain(MODULE, "tabulated J must be non-negative"));
        }
        Self::with_cutoff(SpectralKind::Tabulated(table), cutoff)
    }

    fn with_cutoff(kind: SpectralKind, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::domain(MODULE, format!("cutoff must be positive and finite, got {cutoff}")));
        }
        Ok(Self { kind, cutoff })
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w < 0.0 || w > self.cutoff {
            return 0.0;
        }
        match &self.kind {
            SpectralKind::Ohmic { gamma } => gamma * w,
            SpectralKind::Electromagnetic { charge, energy_density, kt } => {
                2.0 * PI * PI * charge * charge * w * energy_density.eval(w) / (3.0 * kt)
            }
            SpectralKind::Tabulated(t) => t.eval(w),
        }
    }

    /// `J(w)/w`, with its `w -> 0` limit. Errors when `J(0) != 0`.
    pub fn eval_over_omega(&self, w: f64) -> Result<f64> {
        if w > 0.0 {
            return Ok(self.eval(w) / w);
        }
        match &self.kind {
            SpectralKind::Ohmic { gamma } => Ok(*gamma),
            SpectralKind::Electromagnetic { charge, energy_density, kt } => {
                Ok(2.0 * PI * PI * charge * charge * energy_density.eval(0.0) / (3.0 * kt))
            }
            SpectralKind::Tabulated(t) => {
                let j0 = t.eval(0.0);
                if j0.abs() > 1e-14 || t.omega[0] > 0.0 {
                    if t.omega[0] > 0.0 && j0 == 0.0 {
                        // Zero below the first tabulated frequency.
                        return Ok(0.0);
                    }
                    return Err(Error::domain(MODULE, format!("J(0) = {j0} != 0: J(w)/w is not integrable at 0")));
                }
                Ok(t.values[1] / t.omega[1])
            }
        }
    }
}

/// Memory function `Gamma(t)` of the friction functional.
#[derive(Debug, Clone, PartialEq)]
pub enum MemoryKernel {
    /// `Gamma(t) = 2 gamma delta(t)`.
    Delta { gamma: f64 },
    /// Samples on a sorted grid starting at `t = 0`; zero beyond the last sample.
    Sampled { t: Vec<f64>, values: Vec<f64> },
}

impl MemoryKernel {
    pub fn sampled(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.len() != values.len() || t.len() < 2 || t[0] != 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract(MODULE, "sampled kernel needs a strictly increasing grid starting at t = 0"));
        }
        Ok(Self::Sampled { t, values })
    }

    /// `Gamma(|t|)`; the delta kernel reports 0 away from the origin.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MemoryKernel::Delta { .. } => 0.0,
            MemoryKernel::Sampled { t: grid, values } => {
                let t = t.abs();
                let n = grid.len();
                if t > grid[n - 1] {
                    return 0.0;
                }
                let k = grid.partition_point(|&x| x <= t).clamp(1, n - 1);
                let (x0, x1) = (grid[k - 1], grid[k]);
                values[k - 1] + (values[k] - values[k - 1]) * (t - x0) / (x1 - x0)
            }
        }
    }

    /// Largest lag with non-zero weight.
    pub fn support(&self) -> f64 {
        match self {
            MemoryKernel::Delta { .. } => 0.0,
            MemoryKernel::Sampled { t, .. } => *t.last().unwrap(),
        }
    }

    /// Integral over the full line; `2 gamma` for the delta kernel.
    pub fn integral(&self) -> f64 {
        match self {
            MemoryKernel::Delta { gamma } => 2.0 * gamma,
            MemoryKernel::Sampled { t, values } => 2.0 * crate::stats::trapezoid(t, values),
        }
    }
}

/// Minimum number of Simpson points per period of `cos(w t)` on `[0, cutoff]`.
const POINTS_PER_PERIOD: f64 = 64.0;
const MIN_POINTS: usize = 2001;

/// `Gamma(t) = (2/pi) int_0^cutoff J(w) cos(w t) / w dw` by composite Simpson.
pub fn kernel_from_spectral_density(j: &SpectralDensity, t_grid: &[f64]) -> Result<MemoryKernel> {
    if t_grid.is_empty() || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract(MODULE, "t grid must be strictly increasing and start at 0"));
    }
    let t_max = *t_grid.last().unwrap();
    let periods = j.cutoff * t_max / (2.0 * PI);
    let mut n = ((periods * POINTS_PER_PERIOD).ceil() as usize + 1).max(MIN_POINTS);
    if n.is_multiple_of(2) {
        n += 1;
    }
    let h = j.cutoff / (n - 1) as f64;
    let weight: Vec<f64> = (0..n).map(|i| j.eval_over_omega(i as f64 * h)).collect::<Result<_>>()?;
    let mut buf = vec![0.0; n];
    let values = t_grid
        .iter()
        .map(|&t| {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = weight[i] * (i as f64 * h * t).cos();
            }
            2.0 / PI * simpson_uniform(&buf, h)
        })
        .collect();
    MemoryKernel::sampled(t_grid.to_vec(), values)
}

/// Grid-normalized thermal noise: i.i.d. Gaussian values, one per step of
/// width `s`, with variance `2 kT gamma / s`.
#[derive(Debug, Clone)]
pub struct NoiseProcess {
    step: f64,
    kt: f64,
    gamma: f64,
    seed: u64,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoiseProcess {
    pub fn new(step: f64, kt: f64, gamma: f64, seed: u64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::domain(MODULE, "noise grid step must be positive"));
        }
        if kt < 0.0 || gamma < 0.0 || !kt.is_finite() || !gamma.is_finite() {
            return Err(Error::domain(MODULE, "temperature and friction must be non-negative"));
        }
        Ok(Self {
            step,
            kt,
            gamma,
            seed,
            sigma: (2.0 * kt * gamma / step).sqrt(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `2 kT gamma / s`.
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    #[inline]
    pub fn next_value(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sigma * z
    }

    /// Draws the next `n` values.
    pub fn sample(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_value()).collect()
    }
}

/// `n_steps` values of a fresh process `p` (the generator is restarted from its seed).
pub fn sample_noise(p: &NoiseProcess, n_steps: usize) -> Vec<f64> {
    let mut fresh = p.clone();
    fresh.rng = ChaCha8Rng::seed_from_u64(p.seed);
    fresh.sample(n_steps)
}

/// Linear-friction force `(i/hbar) gamma Tr([x, H0] rho) = -gamma dQ/dt`.
pub fn markovian_friction(gamma: f64, x: &HermitianOperator, h0: &HermitianOperator, rho: &DensityMatrix, hbar: f64) -> f64 {
    let c = commutator(x.entries(), h0.entries());
    (I * trace_product(&c, rho.entries())).re * gamma / hbar
}

/// Friction functional `f(t) = -int_0^t Gamma(t - t') dQ/dt' dt'` over a
/// recorded history of `Q(t) = <x>`.
#[derive(Debug, Clone)]
pub struct FrictionState {
    kernel: MemoryKernel,
    history: VecDeque<(f64, f64)>,
}

impl FrictionState {
    pub fn new(kernel: MemoryKernel) -> Self {
        Self { kernel, history: VecDeque::new() }
    }

    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    pub fn history(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.history.iter()
    }

    /// Appends `(t, Q(t))`; times must increase. Samples older than the
    /// kernel support (plus one spare) are dropped.
    pub fn push(&mut self, t: f64, q: f64) -> Result<()> {
        if let Some(&(last, _)) = self.history.back() {
            if t <= last {
                return Err(Error::contract(MODULE, "friction history times must increase"));
            }
        }
        self.history.push_back((t, q));
        let support = self.kernel.support();
        if matches!(self.kernel, MemoryKernel::Delta { .. }) {
            while self.history.len() > 3 {
                self.history.pop_front();
            }
        } else {
            while self.history.len() > 2 && t - self.history[1].0 > support {
                self.history.pop_front();
            }
        }
        Ok(())
    }

    /// Friction at the latest recorded time `t`.
    ///
    /// Delta kernel: `-gamma dQ/dt`, using `rho` through the commutator form when
    /// supplied and a backward difference of the history otherwise.
    /// Sampled kernel: trapezoid rule on the Stieltjes sum
    /// `sum_k (Gamma(t - t_k) + Gamma(t - t_{k+1}))/2 (Q_{k+1} - Q_k)`.
    pub fn force(&self, t: f64, rho: Option<(&DensityMatrix, &HermitianOperator, &HermitianOperator, f64)>) -> Result<f64> {
        let latest = self.history.back().map(|h| h.0);
        if let MemoryKernel::Delta { gamma } = self.kernel {
            if let Some((rho, x, h0, hbar)) = rho {
                return Ok(markovian_friction(gamma, x, h0, rho, hbar));
            }
            let n = self.history.len();
            if n < 2 || latest != Some(t) {
                return Err(Error::contract(MODULE, "insufficient history for a finite-difference velocity"));
            }
            let (t1, q1) = self.history[n - 1];
            let (t0, q0) = self.history[n - 2];
            let qdot = if n >= 3 {
                // Second-order backward difference on a possibly non-uniform grid.
                let (tm, qm) = self.history[n - 3];
                let (h1, h2) = (t1 - t0, t0 - tm);
                let a = (2.0 * h1 + h2) / (h1 * (h1 + h2));
                let b = -(h1 + h2) / (h1 * h2);
                let c = h1 / (h2 * (h1 + h2));
                a * q1 + b * q0 + c * qm
            } else {
                (q1 - q0) / (t1 - t0)
            };
            return Ok(-gamma * qdot);
        }
        if latest != Some(t) {
            return Err(Error::contract(MODULE, "friction requested at a time not matching the history"));
        }
        let start = self.history.front().unwrap().0;
        if start > 0.0 && t - start < self.kernel.support() {
            return Err(Error::contract(MODULE, "history does not cover the kernel support"));
        }
        let mut f = 0.0;
        let mut prev: Option<(f64, f64, f64)> = None;
        for &(tk, qk) in &self.history {
            let g = self.kernel.eval(t - tk);
            if let Some((_, qp, gp)) = prev {
                f -= 0.5 * (g + gp) * (qk - qp);
            }
            prev = Some((tk, qk, g));
        }
        Ok(f)
    }
}

/// Scalar multiplying `x` in the renormalization term:
/// `-(Q_t Gamma(0) - Q_0 Gamma(t))`, zero for the delta kernel.
pub fn w0_correction(kernel: &MemoryKernel, q_t: f64, q_0: f64, t: f64) -> f64 {
    match kernel {
        MemoryKernel::Delta { .. } => 0.0,
        MemoryKernel::Sampled { .. } => -(q_t * kernel.eval(0.0) - q_0 * kernel.eval(t)),
    }
}

/// Noise-induced transition rate and friction rate of the two-level model:
/// `lambda = 2 gamma Q^2 kT / hbar^2`, `A0 = 2 gamma Q^2 delta / hbar^2`.
pub fn transition_rates(p: &TwoLevelParams, gamma: f64, kt: f64) -> (f64, f64) {
    let base = 2.0 * gamma * p.q_scale * p.q_scale / (p.hbar * p.hbar);
    (base * kt, base * p.delta)
}
