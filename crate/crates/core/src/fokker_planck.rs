//! Deterministic propagation of the average density matrix under the
//! nonlinear quantum Fokker-Planck equation, its Bloch form, and the
//! zero-temperature friction flow.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quantum::{commutator, trace_product, BlochVector, DensityMatrix, HermitianOperator, C64, I};

const MODULE: &str = "fokker_planck";

/// Largest accepted `dt * max(omega0, 2 lambda, A0)`.
pub const MAX_STEP_RATE: f64 = 0.05;

/// Entry threshold of the asymptotic region: `P1 < -1 + eps`, `|P2| < eps`.
pub const ASYMPTOTIC_THRESHOLD: f64 = 0.02;

/// Fixed-step classical RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl FpeConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, record_every: 1 }
    }

    fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn check(&self, rate: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.dt.is_finite() && self.t_end.is_finite()) || self.record_every == 0 {
            return Err(Error::contract(MODULE, "dt must be positive, t_end non-negative, record_every >= 1"));
        }
        if self.dt * rate >= MAX_STEP_RATE {
            return Err(Error::domain(
                MODULE,
                format!("dt * max rate = {} exceeds {MAX_STEP_RATE}", self.dt * rate),
            ));
        }
        Ok(())
    }
}

/// Rate form of the two-level equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpeParams {
    pub omega0: f64,
    pub lambda: f64,
    pub a0: f64,
}

impl FpeParams {
    fn max_rate(&self) -> f64 {
        self.omega0.max(2.0 * self.lambda).max(self.a0)
    }
}

/// `dP/dt = (-2 lambda P1 - A0 P2^2, -w0 P3 - 2 lambda P2 + A0 P1 P2, w0 P2)`.
pub fn bloch_fpe_rhs(p: &BlochVector, omega0: f64, lambda: f64, a0: f64) -> BlochVector {
    BlochVector::new(
        -2.0 * lambda * p.b1 - a0 * p.b2 * p.b2,
        -omega0 * p.b3 - 2.0 * lambda * p.b2 + a0 * p.b1 * p.b2,
        omega0 * p.b2,
    )
}

/// `d rho/dt = -(i/hbar)[H0 - x f_rho, rho] - (gamma kT/hbar^2)[x, [x, rho]]`
/// with `f_rho = (i gamma/hbar) Tr([x, H0] rho)`.
pub fn fpe_rhs(rho: &DensityMatrix, h0: &HermitianOperator, x: &HermitianOperator, gamma: f64, kt: f64, hbar: f64) -> Result<DMatrix<C64>> {
    if rho.dim() != h0.dim() || rho.dim() != x.dim() {
        return Err(Error::contract(MODULE, "density/operator dimension mismatch"));
    }
    Ok(fpe_rhs_entries(rho.entries(), h0.entries(), x.entries(), gamma, kt, hbar))
}

fn fpe_rhs_entries(rho: &DMatrix<C64>, h0: &DMatrix<C64>, x: &DMatrix<C64>, gamma: f64, kt: f64, hbar: f64) -> DMatrix<C64> {
    let f = (I * trace_product(&commutator(x, h0), rho)).re * gamma / hbar;
    let h = h0 - x.scale(f);
    let coherent = commutator(&h, rho).map(|z| -I * z / hbar);
    let diffusive = commutator(x, &commutator(x, rho)).scale(gamma * kt / (hbar * hbar));
    coherent - diffusive
}

fn rk4_bloch(p: &BlochVector, dt: f64, params: &FpeParams) -> BlochVector {
    let f = |q: &BlochVector| bloch_fpe_rhs(q, params.omega0, params.lambda, params.a0);
    let k1 = f(p);
    let k2 = f(&p.axpy(0.5 * dt, &k1));
    let k3 = f(&p.axpy(0.5 * dt, &k2));
    let k4 = f(&p.axpy(dt, &k3));
    let a = p.as_array();
    let (k1, k2, k3, k4) = (k1.as_array(), k2.as_array(), k3.as_array(), k4.as_array());
    BlochVector::from_array(std::array::from_fn(|i| a[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])))
}

/// Time series of the average polarization `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpeSeries {
    pub t: Vec<f64>,
    pub p: Vec<BlochVector>,
}

impl FpeSeries {
    /// CSV with columns `t, P1, P2, P3`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> Result<()> {
        crate::io::write_table(
            &mut w,
            comment,
            &["t", "P1", "P2", "P3"],
            self.t.iter().zip(&self.p).map(|(t, p)| vec![*t, p.b1, p.b2, p.b3]),
        )
    }

    pub fn last(&self) -> BlochVector {
        *self.p.last().expect("series is never empty")
    }
}

fn check_norm(p: &BlochVector, k: usize) -> Result<()> {
    if !p.is_finite() || p.norm() > 1.0 + 1e-8 {
        return Err(Error::numerical(MODULE, format!("|P| = {} exceeds 1 at step {k}", p.norm())));
    }
    Ok(())
}

/// Integrates the two-level equations from `p0`.
pub fn solve_fpe(p0: &BlochVector, cfg: &FpeConfig, params: &FpeParams) -> Result<FpeSeries> {
    cfg.check(params.max_rate())?;
    if p0.norm() > 1.0 + 1e-12 {
        return Err(Error::contract(MODULE, "initial |P| exceeds 1"));
    }
    let n = cfg.n_steps();
    let mut series = FpeSeries { t: Vec::with_capacity(n / cfg.record_every + 1), p: Vec::with_capacity(n / cfg.record_every + 1) };
    let mut p = *p0;
    for k in 0..=n {
        if k % cfg.record_every == 0 {
            series.t.push(k as f64 * cfg.dt);
            series.p.push(p);
        }
        if k < n {
            p = rk4_bloch(&p, cfg.dt, params);
            check_norm(&p, k + 1)?;
        }
    }
    Ok(series)
}

/// Average density matrices on the recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    pub t: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
}

fn spectral_width(op: &HermitianOperator) -> f64 {
    let e = SymmetricEigen::new(op.entries().clone()).eigenvalues;
    e.max() - e.min()
}

fn spectral_radius(op: &HermitianOperator) -> f64 {
    SymmetricEigen::new(op.entries().clone()).eigenvalues.amax()
}

/// Integrates the matrix equation for an N-level system.
pub fn solve_fpe_density(
    rho0: &DensityMatrix,
    cfg: &FpeConfig,
    h0: &HermitianOperator,
    x: &HermitianOperator,
    gamma: f64,
    kt: f64,
    hbar: f64,
) -> Result<DensitySeries> {
    if rho0.dim() != h0.dim() || rho0.dim() != x.dim() {
        return Err(Error::contract(MODULE, "density/operator dimension mismatch"));
    }
    // Analogues of (omega0, 2 lambda, A0) for general operators.
    let xr = spectral_radius(x);
    let width = spectral_width(h0);
    let rate = (width / hbar).max(4.0 * gamma * kt * xr * xr / (hbar * hbar)).max(2.0 * gamma * xr * xr * width / (hbar * hbar));
    cfg.check(rate)?;
    let n = cfg.n_steps();
    let (h, xm) = (h0.entries(), x.entries());
    let f = |r: &DMatrix<C64>| fpe_rhs_entries(r, h, xm, gamma, kt, hbar);
    let mut rho = rho0.entries().clone();
    let mut out = DensitySeries { t: Vec::new(), rho: Vec::new() };
    for k in 0..=n {
        if k % cfg.record_every == 0 {
            out.t.push(k as f64 * cfg.dt);
            out.rho.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
        }
        if k == n {
            break;
        }
        let dt = cfg.dt;
        let k1 = f(&rho);
        let k2 = f(&(&rho + k1.scale(0.5 * dt)));
        let k3 = f(&(&rho + k2.scale(0.5 * dt)));
        let k4 = f(&(&rho + k3.scale(dt)));
        rho += (k1 + (k2 + k3).scale(2.0) + k4).scale(dt / 6.0);
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical(MODULE, format!("non-finite density at step {}", k + 1)));
        }
    }
    Ok(out)
}

/// Entry into the zero-temperature asymptotic region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticEntry {
    /// First grid time meeting the threshold.
    pub t_detect: f64,
    /// First zero of `P2` at or after `t_detect`.
    pub t_a: f64,
    /// `P3(t_a)`.
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfrResult {
    pub series: FpeSeries,
    pub entry: Option<AsymptoticEntry>,
}

/// Zero-temperature flow (`lambda = 0`) with asymptotic-region detection.
pub fn pfr_flow(p0: &BlochVector, omega0: f64, a0: f64, cfg: &FpeConfig) -> Result<PfrResult> {
    if a0 < 0.0 {
        return Err(Error::domain(MODULE, "A0 must be non-negative"));
    }
    let params = FpeParams { omega0, lambda: 0.0, a0 };
    cfg.check(params.max_rate())?;
    let n = cfg.n_steps();
    let mut series = FpeSeries { t: Vec::new(), p: Vec::new() };
    let mut p = *p0;
    let mut detected: Option<f64> = None;
    let mut entry = None;
    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        if k % cfg.record_every == 0 {
            series.t.push(t);
            series.p.push(p);
        }
        if detected.is_none() && p.b1 < -1.0 + ASYMPTOTIC_THRESHOLD && p.b2.abs() < ASYMPTOTIC_THRESHOLD {
            detected = Some(t);
        }
        if k == n {
            break;
        }
        let next = rk4_bloch(&p, cfg.dt, &params);
        check_norm(&next, k + 1)?;
        if let (Some(t_detect), None) = (detected, entry) {
            if p.b2 == 0.0 {
                entry = Some(AsymptoticEntry { t_detect, t_a: t, a: p.b3 });
            } else if p.b2.signum() != next.b2.signum() {
                let h = refine_zero(&p, cfg.dt, &params);
                let at = rk4_bloch(&p, h, &params);
                entry = Some(AsymptoticEntry { t_detect, t_a: t + h, a: at.b3 });
            }
        }
        p = next;
    }
    Ok(PfrResult { series, entry })
}

/// Substep `h` in `(0, dt]` where a single RK4 step from `p` gives `P2 = 0`.
fn refine_zero(p: &BlochVector, dt: f64, params: &FpeParams) -> f64 {
    let g = |h: f64| rk4_bloch(p, h, params).b2;
    let (mut lo, mut hi) = (0.0, dt);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    // Illinois false position.
    let mut side = 0i8;
    for _ in 0..100 {
        let mid = (lo * ghi - hi * glo) / (ghi - glo);
        let gm = g(mid);
        if gm == 0.0 || (hi - lo) < 1e-15 * dt {
            return mid;
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            ghi = gm;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

/// Decay rate of `P1 + 1` fitted on `[t_a, t_a + n pi/w]` with the largest
/// whole number `n` of oscillation periods inside the series.
pub fn fit_asymptotic_rate(series: &FpeSeries, entry: &AsymptoticEntry, omega0: f64, a0: f64) -> Result<f64> {
    if !(a0 < 2.0 * omega0) {
        return Err(Error::domain(MODULE, "A0 must be below 2 omega0"));
    }
    let period = std::f64::consts::PI / (omega0 * omega0 - 0.25 * a0 * a0).sqrt();
    let t_last = *series.t.last().unwrap_or(&0.0);
    let periods = ((t_last - entry.t_a) / period).floor();
    if periods < 1.0 {
        return Err(Error::domain(MODULE, "series ends less than one period after t_a"));
    }
    let end = entry.t_a + periods * period;
    let (t, y): (Vec<f64>, Vec<f64>) = series
        .t
        .iter()
        .zip(&series.p)
        .filter(|(t, _)| **t >= entry.t_a && **t <= end)
        .map(|(t, p)| (*t, p.b1 + 1.0))
        .unzip();
    Ok(crate::stats::fit_decay_rate(&t, &y))
}
