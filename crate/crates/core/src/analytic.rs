//! Closed-form two-level solutions: pure dephasing at `A0 = 0`, the
//! asymptotic approach to the ground state at zero temperature, and the two
//! candidate equilibrium curves for `b1`.

use crate::error::{Error, Result};
use crate::quantum::BlochVector;

const MODULE: &str = "analytic";

/// Parameters shared by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    pub omega0: f64,
    pub lambda: f64,
    pub a0: f64,
    /// Initial mixing angle of `cos(theta)|1> + i sin(theta)|0>`.
    pub theta: f64,
    /// Asymptotic amplitude `P3(t_a)`.
    pub a: f64,
    pub t_a: f64,
}

impl AnalyticParams {
    /// Diagnostics for every closed form that these parameters cannot feed.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lambda >= self.omega0 {
            out.push(format!("lambda = {} >= omega0 = {}: only the underdamped branch is available", self.lambda, self.omega0));
        }
        if self.a0 >= 2.0 * self.omega0 {
            out.push(format!("A0 = {} >= 2 omega0: asymptotic decay formulas undefined", self.a0));
        }
        out
    }
}

/// Populations decaying from a level: `exp(-2 lambda t) ((-1)^(sigma+1), 0, 0)`.
pub fn stationary_solution(sigma: u8, lambda: f64, t: f64) -> Result<BlochVector> {
    if sigma > 1 {
        return Err(Error::contract(MODULE, "level index must be 0 or 1"));
    }
    if t < 0.0 {
        return Err(Error::domain(MODULE, "time must be non-negative"));
    }
    let sign = if sigma == 1 { 1.0 } else { -1.0 };
    Ok(BlochVector::new(sign * (-2.0 * lambda * t).exp(), 0.0, 0.0))
}

/// Equal superposition under pure dephasing:
/// `exp(-lambda t) (0, -(w0/w) sin wt, cos wt + (lambda/w) sin wt)`, `w = sqrt(w0^2 - lambda^2)`.
pub fn nonstationary_solution(omega0: f64, lambda: f64, t: f64) -> Result<BlochVector> {
    if !(lambda < omega0) {
        return Err(Error::domain(MODULE, format!("lambda = {lambda} >= omega0 = {omega0}: overdamped branch unsupported")));
    }
    let w = (omega0 * omega0 - lambda * lambda).sqrt();
    let (s, c) = (w * t).sin_cos();
    let e = (-lambda * t).exp();
    Ok(BlochVector::new(0.0, -e * omega0 / w * s, e * (c + lambda / w * s)))
}

/// Zero-temperature approach to the ground state after `t_a`, where
/// `P2(t_a) = 0` and `P3(t_a) = a`.
pub fn asymptotic_decay(a: f64, t_a: f64, omega0: f64, a0: f64, t: f64) -> Result<BlochVector> {
    if !(a0 < 2.0 * omega0) || a0 < 0.0 {
        return Err(Error::domain(MODULE, "asymptotic formulas need 0 <= A0 < 2 omega0"));
    }
    let w = (omega0 * omega0 - 0.25 * a0 * a0).sqrt();
    let sin_phi = w / omega0;
    let cos_phi = a0 / (2.0 * omega0);
    let phi = sin_phi.atan2(cos_phi);
    let s = t - t_a;
    let (sw, cw) = (w * s).sin_cos();
    let p1 = -1.0 + a * a * (-a0 * s).exp() * (1.0 - cos_phi * (2.0 * w * s + phi).cos()) / (2.0 * sin_phi * sin_phi);
    let half = a * (-0.5 * a0 * s).exp();
    Ok(BlochVector::new(p1, -half * sw / sin_phi, half * (cw + a0 / (2.0 * w) * sw)))
}

/// Candidate equilibrium values `(f1, f2) = (-A0/(2 lambda + A0), -A0/(4 lambda + A0))`.
pub fn equilibrium_curves(lambda: f64, a0: f64) -> Result<(f64, f64)> {
    if lambda < 0.0 || a0 < 0.0 {
        return Err(Error::domain(MODULE, "rates must be non-negative"));
    }
    if lambda == 0.0 && a0 == 0.0 {
        return Err(Error::domain(MODULE, "lambda = A0 = 0 leaves the equilibrium undefined"));
    }
    Ok((-a0 / (2.0 * lambda + a0), -a0 / (4.0 * lambda + a0)))
}
