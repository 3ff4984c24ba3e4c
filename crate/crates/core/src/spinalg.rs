//! Dense complex linear algebra for small multi-spin registers.
//!
//! Register convention: the electron slot (when present) is the leftmost
//! tensor factor, followed by the nuclei in declared order. Inside every
//! two-level slot, basis index 0 is spin-up (`I_z = +1/2`), so slot `p` of an
//! `n`-slot register is encoded by bit `n - 1 - p` of the basis index.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use matrixmultiply::CGemmOption;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Maximum allowed `max |U^dagger U - I|` for anything called a unitary.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Maximum allowed `max |A - A^dagger|` for anything called Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinAlgError {
    #[error("kron_chain needs at least one factor")]
    EmptyProduct,
    #[error("matrix data of length {len} is not square")]
    NotSquare { len: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("slot {slot:?} is not part of a register with {nuclear_count} nuclei")]
    SlotOutOfRange { slot: Slot, nuclear_count: usize },
    #[error("slot {0:?} selected more than once")]
    DuplicateSlot(Slot),
    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("eigendecomposition failed to reach tolerance (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
}

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data; the length must be a perfect square.
    pub fn from_vec(data: Vec<C64>) -> Result<Self, SpinAlgError> {
        let dim = libm::round(libm::sqrt(data.len() as f64)) as usize;
        if dim * dim != data.len() || dim == 0 {
            return Err(SpinAlgError::NotSquare { len: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Convenience constructor for 2x2 literals.
    pub fn mat2(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { dim: 2, data: vec![a, b, c, d] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix add dimension mismatch");
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matrix sub dimension mismatch");
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        zgemm(n, n, n, &self.data, CGemmOption::Standard, &other.data, CGemmOption::Standard, &mut out.data);
        out
    }

    /// `self * other^dagger`.
    pub fn matmul_adjoint(&self, other: &Self) -> Self {
        self.matmul(&other.adjoint())
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, v.len());
        (0..self.dim).map(|i| self.data[i * self.dim..(i + 1) * self.dim].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, mut exp: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.dim);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.matmul(&base);
            }
            exp >>= 1;
            if exp > 0 {
                base = base.matmul(&base);
            }
        }
        acc
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (m, n) = (self.dim, other.dim);
        let mut out = Self::zeros(m * n);
        for i in 0..m {
            for j in 0..m {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..n {
                    let row = (i * n + k) * m * n + j * n;
                    for l in 0..n {
                        out.data[row + l] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim;
        let g = self.adjoint().matmul(self);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() < tol
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() < tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Hilbert-Schmidt inner product `tr(self^dagger other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Copies the `rows x cols` block starting at (`row0`, `col0`) into a new square matrix.
    pub fn block(&self, row0: usize, col0: usize, size: usize) -> Self {
        Self::from_fn(size, |i, j| self[(row0 + i, col0 + j)])
    }
}

fn zgemm(m: usize, k: usize, n: usize, a: &[C64], fa: CGemmOption, b: &[C64], fb: CGemmOption, c: &mut [C64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: Complex64 is repr(C) {re, im}, identical in layout to [f64; 2];
    // the slices were checked to cover every element addressed by the strides.
    unsafe {
        matrixmultiply::zgemm(
            fa,
            fb,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            k as isize,
            1,
            b.as_ptr() as *const [f64; 2],
            n as isize,
            1,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            n as isize,
            1,
        );
    }
}

pub mod pauli {
    //! Single-spin operators in the `{|up>, |down>}` basis.
    use super::{ComplexMatrix, C64, I, ONE, ZERO};

    pub fn identity() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }
    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::mat2(ZERO, ONE, ONE, ZERO)
    }
    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::mat2(ZERO, -I, I, ZERO)
    }
    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::mat2(ONE, ZERO, ZERO, -ONE)
    }
    /// `I_x + i I_y`, raising `|down>` to `|up>`.
    pub fn sigma_plus() -> ComplexMatrix {
        ComplexMatrix::mat2(ZERO, ONE, ZERO, ZERO)
    }
    pub fn sigma_minus() -> ComplexMatrix {
        ComplexMatrix::mat2(ZERO, ZERO, ONE, ZERO)
    }
    pub fn spin_x() -> ComplexMatrix {
        sigma_x().scale(C64::new(0.5, 0.0))
    }
    pub fn spin_y() -> ComplexMatrix {
        sigma_y().scale(C64::new(0.5, 0.0))
    }
    pub fn spin_z() -> ComplexMatrix {
        sigma_z().scale(C64::new(0.5, 0.0))
    }
    /// `|k><k|` for basis index `k` of a two-level slot.
    pub fn projector(k: usize) -> ComplexMatrix {
        let mut p = ComplexMatrix::zeros(2);
        p[(k, k)] = ONE;
        p
    }
}

/// Tensor product of the factors, left to right.
pub fn kron_chain(factors: &[ComplexMatrix]) -> Result<ComplexMatrix, SpinAlgError> {
    let (first, rest) = factors.split_first().ok_or(SpinAlgError::EmptyProduct)?;
    Ok(rest.iter().fold(first.clone(), |acc, f| acc.kron(f)))
}

/// A slot of the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Electron,
    Nucleus(usize),
}

/// Shape of a register: an optional two-level electron followed by `nuclear_count` spin-1/2 nuclei.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterLayout {
    pub with_electron: bool,
    pub nuclear_count: usize,
}

impl RegisterLayout {
    pub fn joint(nuclear_count: usize) -> Self {
        Self { with_electron: true, nuclear_count }
    }

    pub fn nuclear(nuclear_count: usize) -> Self {
        Self { with_electron: false, nuclear_count }
    }

    pub fn electron_dim(&self) -> usize {
        if self.with_electron {
            2
        } else {
            1
        }
    }

    pub fn nuclear_dim(&self) -> usize {
        1 << self.nuclear_count
    }

    pub fn dim(&self) -> usize {
        self.electron_dim() * self.nuclear_dim()
    }

    pub fn slot_count(&self) -> usize {
        self.nuclear_count + usize::from(self.with_electron)
    }

    /// Position of the slot in tensor order (0 = leftmost factor).
    pub fn position(&self, slot: Slot) -> Result<usize, SpinAlgError> {
        let offset = usize::from(self.with_electron);
        match slot {
            Slot::Electron if self.with_electron => Ok(0),
            Slot::Nucleus(l) if l < self.nuclear_count => Ok(l + offset),
            _ => Err(SpinAlgError::SlotOutOfRange { slot, nuclear_count: self.nuclear_count }),
        }
    }

    /// Bit of the basis index that encodes the slot.
    pub fn bit(&self, slot: Slot) -> Result<usize, SpinAlgError> {
        Ok(self.slot_count() - 1 - self.position(slot)?)
    }
}

/// Places a 2x2 operator on one slot with identities elsewhere.
pub fn embed_single_spin(op: &ComplexMatrix, slot: Slot, layout: RegisterLayout) -> Result<ComplexMatrix, SpinAlgError> {
    if op.dim() != 2 {
        return Err(SpinAlgError::DimensionMismatch { expected: 2, found: op.dim() });
    }
    let pos = layout.position(slot)?;
    let factors: Vec<ComplexMatrix> =
        (0..layout.slot_count()).map(|p| if p == pos { op.clone() } else { pauli::identity() }).collect();
    kron_chain(&factors)
}

/// Entries `[u00, u01, u10, u11]` of `exp(-i (ax σx + ay σy + az σz))`.
pub fn su2_entries(ax: f64, ay: f64, az: f64) -> [C64; 4] {
    let norm = libm::sqrt(ax * ax + ay * ay + az * az);
    if norm == 0.0 {
        return [ONE, ZERO, ZERO, ONE];
    }
    let (s, c) = (libm::sin(norm), libm::cos(norm));
    let (nx, ny, nz) = (ax / norm, ay / norm, az / norm);
    // cos|a| I - i sin|a| (n . sigma)
    [C64::new(c, -s * nz), C64::new(-s * ny, -s * nx), C64::new(s * ny, -s * nx), C64::new(c, s * nz)]
}

/// `exp(-i (ax σx + ay σy + az σz))` as a 2x2 matrix.
pub fn su2_exponential(ax: f64, ay: f64, az: f64) -> Result<ComplexMatrix, SpinAlgError> {
    if !(ax.is_finite() && ay.is_finite() && az.is_finite()) {
        return Err(SpinAlgError::NonFinite);
    }
    let [a, b, c, d] = su2_entries(ax, ay, az);
    Ok(ComplexMatrix::mat2(a, b, c, d))
}

/// Reduced matrix on the kept slots, in the order they are listed in `keep`.
pub fn partial_trace(rho: &ComplexMatrix, layout: RegisterLayout, keep: &[Slot]) -> Result<ComplexMatrix, SpinAlgError> {
    if rho.dim() != layout.dim() {
        return Err(SpinAlgError::DimensionMismatch { expected: layout.dim(), found: rho.dim() });
    }
    let mut kept_bits = Vec::with_capacity(keep.len());
    for &slot in keep {
        let bit = layout.bit(slot)?;
        if kept_bits.contains(&bit) {
            return Err(SpinAlgError::DuplicateSlot(slot));
        }
        kept_bits.push(bit);
    }
    let traced_bits: Vec<usize> = (0..layout.slot_count()).filter(|b| !kept_bits.contains(b)).collect();
    let out_dim = 1usize << kept_bits.len();
    // Scatter a reduced index (MSB = first kept slot) onto the full index.
    let expand = |reduced: usize, bits: &[usize]| -> usize {
        let k = bits.len();
        bits.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | (((reduced >> (k - 1 - i)) & 1) << b))
    };
    let kept_index: Vec<usize> = (0..out_dim).map(|r| expand(r, &kept_bits)).collect();
    let traced_index: Vec<usize> = (0..1usize << traced_bits.len()).map(|r| expand(r, &traced_bits)).collect();
    let mut out = ComplexMatrix::zeros(out_dim);
    for (a, &ia) in kept_index.iter().enumerate() {
        for (b, &ib) in kept_index.iter().enumerate() {
            out[(a, b)] = traced_index.iter().map(|&t| rho[(ia | t, ib | t)]).sum();
        }
    }
    Ok(out)
}

/// Eigendecomposition `A = V diag(λ) V^dagger` of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: ComplexMatrix,
}

/// Cyclic complex Jacobi diagonalisation.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen, SpinAlgError> {
    if !a.is_finite() {
        return Err(SpinAlgError::NonFinite);
    }
    let n = a.dim();
    let mut m = a.clone();
    // symmetrise so rounding noise in the input cannot stall the sweeps
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let off_norm = |m: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        libm::sqrt(2.0 * s)
    };
    let mut sweeps = 0;
    while off_norm(&m) > 1e-15 * scale {
        sweeps += 1;
        if sweeps > 100 {
            return Err(SpinAlgError::NoConvergence { residual: off_norm(&m) / scale });
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = m[(p, q)];
                let gabs = g.norm();
                if gabs <= 1e-300 || gabs < 1e-18 * scale {
                    continue;
                }
                // phase rotation makes the (p, q) element real, then a real Jacobi rotation
                let phase = g / gabs;
                let theta = (m[(q, q)].re - m[(p, p)].re) / (2.0 * gabs);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                // G = diag(1, conj(phase)) * [[c, s], [-s, c]]
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = phase.conj() * (-s);
                let g_qq = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = akp * g_pp + akq * g_qp;
                    m[(k, q)] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    m[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].re.total_cmp(&m[(y, y)].re));
    let values = order.iter().map(|&k| m[(k, k)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

impl HermitianEigen {
    /// `V f(Λ) V^dagger` for a scalar function of the eigenvalues.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.vectors.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled.matmul_adjoint(&self.vectors)
    }
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn expm_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, SpinAlgError> {
    let eig = hermitian_eigen(h)?;
    Ok(eig.apply(|lam| C64::new(0.0, -t * lam).exp()))
}

/// Spectral form `U = V diag(exp(i φ_k)) V^dagger` of a unitary.
#[derive(Debug, Clone)]
pub struct UnitarySpectrum {
    pub phases: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl UnitarySpectrum {
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.power(1.0)
    }

    /// `U^p` (any real `p`, principal branch of each eigenphase).
    pub fn power(&self, p: f64) -> ComplexMatrix {
        let n = self.vectors.dim();
        let mut scaled = self.vectors.clone();
        for (j, &phi) in self.phases.iter().enumerate() {
            let w = C64::from_polar(1.0, p * phi);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled.matmul_adjoint(&self.vectors)
    }
}

pub fn unitary_spectral(u: &ComplexMatrix) -> Result<UnitarySpectrum, SpinAlgError> {
    let deviation = u.unitarity_deviation();
    if !(deviation < UNITARITY_TOL) {
        return Err(SpinAlgError::NotUnitary { deviation });
    }
    let adj = u.adjoint();
    let re_part = u.add(&adj).scale(C64::new(0.5, 0.0));
    let im_part = u.sub(&adj).scale(C64::new(0.0, -0.5));
    // The Hermitian and anti-Hermitian parts commute; a generic mix of the two
    // has the eigenvectors of U. A pair of eigenphases with φ1 + φ2 = 2γ would
    // collide, so a few mixing angles are tried.
    let mut best = f64::INFINITY;
    for gamma in [0.377_f64, 1.213, 2.75, 0.9046] {
        let mix = re_part.scale(C64::new(libm::cos(gamma), 0.0)).add(&im_part.scale(C64::new(libm::sin(gamma), 0.0)));
        let eig = hermitian_eigen(&mix)?;
        let uv = u.matmul(&eig.vectors);
        let n = u.dim();
        let phases: Vec<f64> = (0..n)
            .map(|k| {
                let rayleigh: C64 = (0..n).map(|i| eig.vectors[(i, k)].conj() * uv[(i, k)]).sum();
                rayleigh.arg()
            })
            .collect();
        let spectrum = UnitarySpectrum { phases, vectors: eig.vectors };
        let residual = spectrum.reconstruct().max_abs_diff(u);
        if residual < UNITARITY_TOL {
            return Ok(spectrum);
        }
        best = best.min(residual);
    }
    Err(SpinAlgError::NoConvergence { residual: best })
}

/// Real row-major GEMM `c = alpha * op(a) * op(b) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let last = |rs: usize, cs: usize, rows: usize, cols: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(a.len() > last(rsa, csa, m, k) && b.len() > last(rsb, csb, k, n) && c.len() >= m * n);
    // SAFETY: bounds of every addressed element checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_chain_identity_and_blocks() {
        let i4 = kron_chain(&[pauli::identity(), pauli::identity()]).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));

        let zx = kron_chain(&[pauli::sigma_z(), pauli::sigma_x()]).unwrap();
        let x = pauli::sigma_x();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(zx[(i, j)], x[(i, j)]);
                assert_eq!(zx[(i + 2, j + 2)], -x[(i, j)]);
                assert_eq!(zx[(i, j + 2)], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn kron_chain_bit_flip() {
        let xxx = kron_chain(&[pauli::sigma_x(), pauli::sigma_x(), pauli::sigma_x()]).unwrap();
        let mut ket = vec![c(0.0, 0.0); 8];
        ket[0] = c(1.0, 0.0);
        let out = xxx.mul_vec(&ket);
        assert_eq!(out[7], c(1.0, 0.0));
        assert!(out[..7].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn kron_chain_empty_is_error() {
        assert_eq!(kron_chain(&[]), Err(SpinAlgError::EmptyProduct));
    }

    #[test]
    fn embed_slot_zero_is_most_significant() {
        let z0 = embed_single_spin(&pauli::sigma_z(), Slot::Nucleus(0), RegisterLayout::nuclear(2)).unwrap();
        let expected = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(z0, expected);
        let id = embed_single_spin(&pauli::identity(), Slot::Electron, RegisterLayout::joint(3)).unwrap();
        assert_eq!(id, ComplexMatrix::identity(16));
    }

    #[test]
    fn embed_ladder_action() {
        // |down down> = index 3; sigma_plus on slot 1 gives |down up> = index 2
        let sp1 = embed_single_spin(&pauli::sigma_plus(), Slot::Nucleus(1), RegisterLayout::nuclear(2)).unwrap();
        let mut ket = vec![c(0.0, 0.0); 4];
        ket[3] = c(1.0, 0.0);
        let out = sp1.mul_vec(&ket);
        assert_eq!(out[2], c(1.0, 0.0));
        assert_eq!(out.iter().map(|z| z.norm()).sum::<f64>(), 1.0);
    }

    #[test]
    fn embed_out_of_range() {
        let err = embed_single_spin(&pauli::sigma_z(), Slot::Nucleus(2), RegisterLayout::nuclear(2));
        assert!(matches!(err, Err(SpinAlgError::SlotOutOfRange { .. })));
        let err = embed_single_spin(&pauli::sigma_z(), Slot::Electron, RegisterLayout::nuclear(2));
        assert!(matches!(err, Err(SpinAlgError::SlotOutOfRange { .. })));
    }

    #[test]
    fn su2_special_values() {
        assert_eq!(su2_exponential(0.0, 0.0, 0.0).unwrap(), ComplexMatrix::identity(2));
        let half_turn = su2_exponential(PI / 2.0, 0.0, 0.0).unwrap();
        let expected = pauli::sigma_x().scale(c(0.0, -1.0));
        assert!(half_turn.max_abs_diff(&expected) < 1e-15);
        assert!(su2_exponential(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn su2_matches_eigen_exponential() {
        let (ax, ay, az) = (0.3, 0.1, 1.2);
        let h =
            pauli::sigma_x().scale(c(ax, 0.0)).add(&pauli::sigma_y().scale(c(ay, 0.0))).add(&pauli::sigma_z().scale(c(az, 0.0)));
        let dense = expm_hermitian(&h, 1.0).unwrap();
        assert!(dense.max_abs_diff(&su2_exponential(ax, ay, az).unwrap()) < 1e-13);
    }

    #[test]
    fn partial_trace_product_state() {
        let rho_e =
            ComplexMatrix::from_fn(
                2,
                |i, j| if i == j { c(0.3 + 0.4 * i as f64, 0.0) } else { c(0.1, 0.2 * (j as f64 - i as f64)) },
            );
        let rho_n = ComplexMatrix::from_diagonal(&[c(0.1, 0.0), c(0.2, 0.0), c(0.3, 0.0), c(0.4, 0.0)]);
        let joint = rho_e.kron(&rho_n);
        let reduced = partial_trace(&joint, RegisterLayout::joint(2), &[Slot::Nucleus(0), Slot::Nucleus(1)]).unwrap();
        assert!(reduced.max_abs_diff(&rho_n) < 1e-15);
    }

    #[test]
    fn partial_trace_bell_state() {
        let mut bell = ComplexMatrix::zeros(4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(i, j)] = c(0.5, 0.0);
        }
        let reduced = partial_trace(&bell, RegisterLayout::nuclear(2), &[Slot::Nucleus(1)]).unwrap();
        assert!(reduced.max_abs_diff(&ComplexMatrix::identity(2).scale(c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn partial_trace_keep_order_and_errors() {
        let a = ComplexMatrix::from_diagonal(&[c(0.9, 0.0), c(0.1, 0.0)]);
        let b = ComplexMatrix::from_diagonal(&[c(0.2, 0.0), c(0.8, 0.0)]);
        let ab = a.kron(&b);
        let swapped = partial_trace(&ab, RegisterLayout::nuclear(2), &[Slot::Nucleus(1), Slot::Nucleus(0)]).unwrap();
        assert!(swapped.max_abs_diff(&b.kron(&a)) < 1e-15);
        assert!(partial_trace(&ab, RegisterLayout::nuclear(3), &[Slot::Nucleus(0)]).is_err());
        assert!(matches!(
            partial_trace(&ab, RegisterLayout::nuclear(2), &[Slot::Nucleus(0), Slot::Nucleus(0)]),
            Err(SpinAlgError::DuplicateSlot(_))
        ));
    }

    #[test]
    fn unitary_spectral_simple_cases() {
        let id = unitary_spectral(&ComplexMatrix::identity(4)).unwrap();
        assert!(id.phases.iter().all(|p| p.abs() < 1e-14));
        let d = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(0.0, 1.0)]);
        let mut phases = unitary_spectral(&d).unwrap().phases;
        phases.sort_by(f64::total_cmp);
        assert!(phases[0].abs() < 1e-14 && (phases[1] - PI / 2.0).abs() < 1e-14);
        let bad = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(unitary_spectral(&bad), Err(SpinAlgError::NotUnitary { .. })));
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let h = ComplexMatrix::from_fn(5, |i, j| {
            let (a, b) = (i.min(j) as f64, i.max(j) as f64);
            let im = if i < j {
                0.3 * (a + 1.0)
            } else if i > j {
                -0.3 * (a + 1.0)
            } else {
                0.0
            };
            c(libm::cos(a + 2.0 * b), im)
        });
        let eig = hermitian_eigen(&h).unwrap();
        let back = eig.apply(|l| c(l, 0.0));
        assert!(back.max_abs_diff(&h) < 1e-13);
        assert!(eig.vectors.unitarity_deviation() < 1e-13);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn matmul_adjoint_agrees() {
        let a = ComplexMatrix::from_fn(3, |i, j| c(i as f64 - j as f64, (i * j) as f64 + 0.5));
        let b = ComplexMatrix::from_fn(3, |i, j| c(libm::sin((i + 2 * j) as f64), 1.0 - j as f64));
        assert!(a.matmul_adjoint(&b).max_abs_diff(&a.matmul(&b.adjoint())) < 1e-14);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let u = su2_exponential(0.2, -0.7, 0.4).unwrap();
        let mut acc = ComplexMatrix::identity(2);
        for _ in 0..7 {
            acc = acc.matmul(&u);
        }
        assert!(u.pow(7).max_abs_diff(&acc) < 1e-14);
        assert_eq!(u.pow(0), ComplexMatrix::identity(2));
    }
}
