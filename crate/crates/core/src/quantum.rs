//! Dense complex linear algebra for small N-level systems, the two-level
//! operator set and the Bloch-vector correspondence.
//!
//! Two-level basis ordering is fixed as `|1> = (1, 0)^T`, `|0> = (0, 1)^T`, so
//! the excited level sits at index 0. With this ordering the density matrix
//! of a Bloch vector `b` reads
//!
//! ```text
//! rho = 1/2 [ 1 + b1      b2 - i b3 ]
//!           [ b2 + i b3   1 - b1    ]
//! ```
//!
//! i.e. `rho = (I + b1 sz + b2 sx + b3 sy) / 2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const MODULE: &str = "quantum-core";
/// Largest dimension handled by the dense path.
pub const MAX_DIM: usize = 16;
const NORM_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Normalized complex amplitude vector over N levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<C64>,
}

impl QuantumState {
    /// Builds a state from raw amplitudes and normalizes it.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let n = amplitudes.len();
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::contract(MODULE, format!("state dimension {n} outside 2..={MAX_DIM}")));
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::domain(MODULE, "state has zero or non-finite norm"));
        }
        Ok(Self { amplitudes: v.unscale(norm) })
    }

    pub(crate) fn from_vector_unchecked(amplitudes: DVector<C64>) -> Self {
        Self { amplitudes }
    }

    /// `cos(theta)|1> + i sin(theta)|0>`, the two-level preparation used throughout.
    pub fn two_level(theta: f64) -> Self {
        Self {
            amplitudes: DVector::from_vec(vec![C64::new(theta.cos(), 0.0), C64::new(0.0, theta.sin())]),
        }
    }

    /// Basis state `|k>` in the storage ordering.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::contract(MODULE, format!("basis index {k} out of range for dim {dim}")));
        }
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn renormalize(&mut self) {
        let n = self.amplitudes.norm();
        self.amplitudes.unscale_mut(n);
    }

    /// `<psi|op|psi>`; real for Hermitian `op`.
    pub fn expectation(&self, op: &HermitianOperator) -> Result<f64> {
        if op.dim() != self.dim() {
            return Err(Error::contract(MODULE, "operator/state dimension mismatch"));
        }
        Ok(self.amplitudes.dotc(&(&op.entries * &self.amplitudes)).re)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix { entries: &self.amplitudes * self.amplitudes.adjoint() }
    }

    /// Bloch vector of a two-level pure state.
    pub fn bloch(&self) -> Result<BlochVector> {
        if self.dim() != 2 {
            return Err(Error::contract(MODULE, "Bloch vector requires a two-level state"));
        }
        Ok(Spinor([self.amplitudes[0], self.amplitudes[1]]).bloch())
    }
}

/// Complex N x N matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<C64>,
}

impl HermitianOperator {
    /// Accepts a matrix whose entries satisfy `a[i][j] == conj(a[j][i])` exactly.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        check_square(&entries)?;
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..=i {
                if entries[(i, j)] != entries[(j, i)].conj() {
                    return Err(Error::contract(MODULE, format!("operator not Hermitian at ({i}, {j})")));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Hermitian part `(a + a^dagger) / 2` of an arbitrary square matrix.
    pub fn hermitian_part(a: &DMatrix<C64>) -> Result<Self> {
        check_square(a)?;
        let mut h = (a + a.adjoint()).unscale(2.0);
        let n = h.nrows();
        for i in 0..n {
            h[(i, i)].im = 0.0;
            for j in 0..i {
                h[(j, i)] = h[(i, j)].conj();
            }
        }
        Ok(Self { entries: h })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { entries: self.entries.scale(s) }
    }

    /// Sum with another operator of the same dimension.
    pub fn plus(&self, other: &HermitianOperator) -> Self {
        Self { entries: &self.entries + &other.entries }
    }

    /// Spectral norm upper bound (Frobenius norm).
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }
}

/// Hermitian, unit-trace, positive semidefinite N x N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (tolerance 1e-10).
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let rho = Self { entries };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(entries: DMatrix<C64>) -> Self {
        Self { entries }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim).unscale(dim as f64) }
    }

    pub fn validate(&self) -> Result<()> {
        check_square(&self.entries)?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..=i {
                if (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm() > NORM_TOL {
                    return Err(Error::contract(MODULE, format!("density matrix not Hermitian at ({i}, {j})")));
                }
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > NORM_TOL {
            return Err(Error::contract(MODULE, format!("density matrix trace {tr} != 1")));
        }
        let herm = HermitianOperator::hermitian_part(&self.entries)?;
        let eig = nalgebra::SymmetricEigen::new(herm.entries.clone());
        if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
            if min < -NORM_TOL {
                return Err(Error::contract(MODULE, format!("density matrix has eigenvalue {min} < 0")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    /// Largest deviation from exact Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.entries - self.entries.adjoint()).camax()
    }
}

/// Real polarization vector `(b1, b2, b3)` of a two-level density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochVector {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl BlochVector {
    pub const fn new(b1: f64, b2: f64, b3: f64) -> Self {
        Self { b1, b2, b3 }
    }

    /// Bloch vector of `cos(theta)|1> + i sin(theta)|0>`.
    pub fn from_theta(theta: f64) -> Self {
        Self::new((2.0 * theta).cos(), 0.0, (2.0 * theta).sin())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.b1 * o.b1 + self.b2 * o.b2 + self.b3 * o.b3
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn axpy(&self, s: f64, d: &Self) -> Self {
        Self::new(self.b1 + s * d.b1, self.b2 + s * d.b2, self.b3 + s * d.b3)
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        (self.b1 - o.b1).abs().max((self.b2 - o.b2).abs()).max((self.b3 - o.b3).abs())
    }

    pub fn is_finite(&self) -> bool {
        self.b1.is_finite() && self.b2.is_finite() && self.b3.is_finite()
    }
}

/// Two-level model constants: gap `delta = hbar * omega0`, coupling length `q_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub delta: f64,
    pub omega0: f64,
    pub q_scale: f64,
    pub hbar: f64,
}

impl TwoLevelParams {
    pub fn new(omega0: f64, q_scale: f64, hbar: f64) -> Result<Self> {
        for (name, v) in [("omega0", omega0), ("q_scale", q_scale), ("hbar", hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(MODULE, format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { delta: hbar * omega0, omega0, q_scale, hbar })
    }

    /// Same as [`TwoLevelParams::new`] with `hbar = 1`.
    pub fn with_unit_hbar(omega0: f64, q_scale: f64) -> Result<Self> {
        Self::new(omega0, q_scale, 1.0)
    }
}

/// `H0 = (delta/2)(|1><1| - |0><0|)` and `x = Q i(|0><1| - |1><0|)`.
pub fn two_level_operators(p: &TwoLevelParams) -> (HermitianOperator, HermitianOperator) {
    let half = 0.5 * p.delta;
    let h0 = DMatrix::from_row_slice(2, 2, &[C64::new(half, 0.0), ZERO, ZERO, C64::new(-half, 0.0)]);
    // |0><1| sits at (row 1, col 0), |1><0| at (row 0, col 1).
    let q = p.q_scale;
    let x = DMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -q), C64::new(0.0, q), ZERO]);
    (HermitianOperator { entries: h0 }, HermitianOperator { entries: x })
}

pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::contract(MODULE, format!("Bloch map needs a 2x2 matrix, got {}x{}", rho.dim(), rho.dim())));
    }
    let e = &rho.entries;
    if (e[(1, 0)] - e[(0, 1)].conj()).norm() > NORM_TOL
        || e[(0, 0)].im.abs() > NORM_TOL
        || e[(1, 1)].im.abs() > NORM_TOL
    {
        return Err(Error::contract(MODULE, "density matrix is not Hermitian"));
    }
    if (rho.trace() - 1.0).abs() > NORM_TOL {
        return Err(Error::contract(MODULE, "density matrix trace is not 1"));
    }
    Ok(bloch_from_entries(e))
}

pub(crate) fn bloch_from_entries(e: &DMatrix<C64>) -> BlochVector {
    let off = e[(0, 1)];
    BlochVector::new(e[(0, 0)].re - e[(1, 1)].re, 2.0 * off.re, -2.0 * off.im)
}

pub fn density_from_bloch(b: &BlochVector) -> Result<DensityMatrix> {
    let n = b.norm();
    if !n.is_finite() || n > 1.0 + NORM_TOL {
        return Err(Error::domain(MODULE, format!("|b| = {n} exceeds 1")));
    }
    Ok(DensityMatrix { entries: density_entries(b) })
}

pub(crate) fn density_entries(b: &BlochVector) -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + b.b1), 0.0),
            C64::new(0.5 * b.b2, -0.5 * b.b3),
            C64::new(0.5 * b.b2, 0.5 * b.b3),
            C64::new(0.5 * (1.0 - b.b1), 0.0),
        ],
    )
}

/// `Tr(op rho)`.
pub fn expectation(op: &HermitianOperator, rho: &DensityMatrix) -> Result<f64> {
    if op.dim() != rho.dim() {
        return Err(Error::contract(MODULE, "operator/density dimension mismatch"));
    }
    let v = trace_product(&op.entries, &rho.entries);
    if v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
        return Err(Error::numerical(MODULE, format!("expectation has imaginary part {}", v.im)));
    }
    Ok(v.re)
}

/// `Tr(a b)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

/// `exp(-i h tau)` for Hermitian `h`.
///
/// Closed form via the Pauli decomposition for 2x2; otherwise scaling and
/// squaring of a truncated Taylor series.
pub fn unitary_propagator(h: &DMatrix<C64>, tau: f64) -> DMatrix<C64> {
    if h.nrows() == 2 {
        let m = [[h[(0, 0)], h[(0, 1)]], [h[(1, 0)], h[(1, 1)]]];
        let u = exp_hermitian_2x2(&m, tau);
        return DMatrix::from_row_slice(2, 2, &[u[0][0], u[0][1], u[1][0], u[1][1]]);
    }
    let a = h.scale(tau).map(|z| -I * z);
    expm_scaling_squaring(&a)
}

fn expm_scaling_squaring(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm = a.norm();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a.scale(scale);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = (&term * &a).unscale(k as f64);
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub(crate) type Mat2 = [[C64; 2]; 2];

/// `exp(-i h tau)` for a Hermitian 2x2 `h = h0 I + hx sx + hy sy + hz sz`.
pub(crate) fn exp_hermitian_2x2(h: &Mat2, tau: f64) -> Mat2 {
    let h0 = 0.5 * (h[0][0].re + h[1][1].re);
    let hz = 0.5 * (h[0][0].re - h[1][1].re);
    let hx = h[1][0].re;
    let hy = h[1][0].im;
    let r = (hx * hx + hy * hy + hz * hz).sqrt();
    let phase = C64::from_polar(1.0, -h0 * tau);
    let (c, s_over_r) = if r * tau < 1e-8 {
        let a = r * tau;
        (1.0 - 0.5 * a * a, tau * (1.0 - a * a / 6.0))
    } else {
        ((r * tau).cos(), (r * tau).sin() / r)
    };
    // cos(r tau) I - i sin(r tau)/r (hx sx + hy sy + hz sz)
    let u00 = C64::new(c, -s_over_r * hz);
    let u11 = C64::new(c, s_over_r * hz);
    let u01 = -I * s_over_r * C64::new(hx, -hy);
    let u10 = -I * s_over_r * C64::new(hx, hy);
    [[phase * u00, phase * u01], [phase * u10, phase * u11]]
}

/// Two-level state stored inline, for the trajectory hot loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Spinor(pub [C64; 2]);

impl Spinor {
    pub fn from_state(psi: &QuantumState) -> Self {
        Spinor([psi.amplitudes[0], psi.amplitudes[1]])
    }

    #[allow(dead_code)]
    pub fn to_state(self) -> QuantumState {
        QuantumState::from_vector_unchecked(DVector::from_vec(self.0.to_vec()))
    }

    pub fn apply(&self, u: &Mat2) -> Self {
        let [a, b] = self.0;
        Spinor([u[0][0] * a + u[0][1] * b, u[1][0] * a + u[1][1] * b])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn bloch(&self) -> BlochVector {
        let [a, b] = self.0;
        let off = a * b.conj();
        BlochVector::new(a.norm_sqr() - b.norm_sqr(), 2.0 * off.re, -2.0 * off.im)
    }
}

fn check_square(m: &DMatrix<C64>) -> Result<()> {
    let (r, c) = m.shape();
    if r != c || !(2..=MAX_DIM).contains(&r) {
        return Err(Error::contract(MODULE, format!("expected square matrix with 2 <= N <= {MAX_DIM}, got {r}x{c}")));
    }
    Ok(())
}
