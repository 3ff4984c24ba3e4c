//! Repeated application of the per-cycle nuclear channel.
//!
//! The nuclear state after each cycle is `Σ_k K_k ρ K_k†`. Coherent runs keep
//! the full density matrix; incoherent runs keep only populations, which
//! evolve under the column-stochastic matrix `M_ij = Σ_k |(K_k)_ij|²`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use thiserror::Error;

use crate::model::{SpinSystem, MAX_NUCLEI};
use crate::sequences::{
    disentangle_product_kraus, sequence_channel, sequence_unitary, ChannelKraus, ProductKraus, SequenceError, SequenceSpec,
};
use crate::spinalg::{dgemm_strided, partial_trace, ComplexMatrix, RegisterLayout, Slot, SpinAlgError, C64};

/// Allowed `|tr ρ − 1|` after any channel application.
pub const TRACE_TOL: f64 = 1e-8;
/// Allowed negative eigenvalue of a propagated state.
pub const PSD_TOL: f64 = 1e-8;
/// Allowed deviation of a Markov column sum from one.
pub const STOCHASTIC_TOL: f64 = 1e-10;

const PSD_CHECK_EVERY: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("n_rep must be at least 1")]
    NoRepetitions,
    #[error("nuclear count {0} outside 1..={MAX_NUCLEI}")]
    NuclearCount(usize),
    #[error("disentangle mode needs a disentangle spec")]
    MissingDisentangle,
    #[error("pair indices must differ and lie below {count} (got {p}, {q})")]
    PairIndex { p: usize, q: usize, count: usize },
    #[error("dimension mismatch: state {state}, channel {channel}")]
    Dimension { state: usize, channel: usize },
    #[error("trace drifted by {0:.3e}")]
    TraceDrift(f64),
    #[error("state lost positivity (eigenvalue below -{PSD_TOL:e})")]
    NotPositive,
    #[error("Markov column {column} sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Algebra(#[from] SpinAlgError),
}

impl EngineError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical_health(&self) -> bool {
        matches!(
            self,
            Self::TraceDrift(_)
                | Self::NotPositive
                | Self::NotStochastic { .. }
                | Self::Sequence(SequenceError::Completeness(_))
                | Self::Algebra(SpinAlgError::NotUnitary { .. } | SpinAlgError::NoConvergence { .. } | SpinAlgError::NonFinite)
        )
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, EngineError> {
        if !m.is_finite() {
            return Err(SpinAlgError::NonFinite.into());
        }
        let drift = (m.trace() - C64::new(1.0, 0.0)).norm();
        if drift > TRACE_TOL {
            return Err(EngineError::TraceDrift(drift));
        }
        if !m.is_hermitian(1e-10) || !is_positive_semidefinite(&m, PSD_TOL) {
            return Err(EngineError::NotPositive);
        }
        Ok(Self(m))
    }

    pub(crate) fn from_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn nuclear_count(&self) -> usize {
        self.0.dim().trailing_zeros() as usize
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }
}

impl Deref for DensityMatrix {
    type Target = ComplexMatrix;
    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// `I / 2^n`.
pub fn initial_nuclear_state(n_nuc: usize) -> Result<DensityMatrix, EngineError> {
    if n_nuc == 0 || n_nuc > MAX_NUCLEI {
        return Err(EngineError::NuclearCount(n_nuc));
    }
    let d = 1usize << n_nuc;
    Ok(DensityMatrix(ComplexMatrix::identity(d).scale(C64::new(1.0 / d as f64, 0.0))))
}

/// `Σ_k K_k ρ K_k†`.
pub fn apply_channel(rho: &DensityMatrix, channel: &ChannelKraus) -> Result<DensityMatrix, EngineError> {
    if channel.dim() != rho.dim() {
        return Err(EngineError::Dimension { state: rho.dim(), channel: channel.dim() });
    }
    let mut out = ComplexMatrix::zeros(rho.dim());
    for k in &channel.operators {
        out = out.add(&k.matmul(rho).matmul_adjoint(k));
    }
    let drift = (out.trace() - rho.trace()).norm();
    if !(drift <= TRACE_TOL) {
        return Err(EngineError::TraceDrift(drift));
    }
    Ok(DensityMatrix(out))
}

/// Zeroes every off-diagonal element.
pub fn decohere_diag(rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix(ComplexMatrix::from_diagonal(&rho.diagonal()))
}

/// Column-stochastic population transfer matrix of a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    dim: usize,
    /// Row-major `M_ij`: probability of `j → i`.
    data: Vec<f64>,
}

impl MarkovMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        dgemm_strided(self.dim, self.dim, 1, 1.0, &self.data, (self.dim, 1), p, (1, 1), 0.0, &mut out);
        out
    }
}

/// `M_ij = Σ_k |(K_k)_ij|²`, with every column checked to sum to one.
pub fn incoherent_markov(channel: &ChannelKraus) -> Result<MarkovMatrix, EngineError> {
    let dim = channel.dim();
    let mut data = vec![0.0; dim * dim];
    for k in &channel.operators {
        for (m, z) in data.iter_mut().zip(k.as_slice()) {
            *m += z.norm_sqr();
        }
    }
    for column in 0..dim {
        let sum: f64 = (0..dim).map(|i| data[i * dim + column]).sum();
        if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
            return Err(EngineError::NotStochastic { column, sum });
        }
    }
    Ok(MarkovMatrix { dim, data })
}

/// Cholesky test of `ρ + tol·I`; success certifies every eigenvalue exceeds `-tol`.
pub fn is_positive_semidefinite(rho: &ComplexMatrix, tol: f64) -> bool {
    let n = rho.dim();
    let mut l = vec![C64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut diag = rho[(j, j)].re + tol;
        for k in 0..j {
            diag -= l[j * n + k].norm_sqr();
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = libm::sqrt(diag);
        l[j * n + j] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = rho[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    true
}

/// Signed `2<I_z^(l)>` of every nucleus from the populations.
pub fn signed_polarizations(populations: &[f64]) -> Vec<f64> {
    let n = populations.len().trailing_zeros() as usize;
    (0..n)
        .map(|l| {
            let mask = 1usize << (n - 1 - l);
            populations.iter().enumerate().map(|(i, p)| if i & mask == 0 { *p } else { -*p }).sum()
        })
        .collect()
}

/// `|Σ_l 2<I_z^(l)>| / N`.
pub fn total_polarization(signed: &[f64]) -> f64 {
    (signed.iter().sum::<f64>() / signed.len() as f64).abs()
}

/// Reduced state of nuclei `p` and `q`, in that tensor order.
pub fn pair_density_matrix(rho: &DensityMatrix, p: usize, q: usize) -> Result<DensityMatrix, EngineError> {
    let count = rho.nuclear_count();
    if p == q || p >= count || q >= count {
        return Err(EngineError::PairIndex { p, q, count });
    }
    let reduced = partial_trace(rho, RegisterLayout::nuclear(count), &[Slot::Nucleus(p), Slot::Nucleus(q)])?;
    Ok(DensityMatrix(reduced))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RunMode {
    Coherent,
    Incoherent,
    CoherentWithDisentangle,
}

/// Numerical-health record of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunHealth {
    pub completeness_residual: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_deviation: f64,
    /// Every positivity checkpoint passed at `PSD_TOL`.
    pub positive: bool,
    pub psd_checks: usize,
}

impl RunHealth {
    fn new(completeness_residual: f64) -> Self {
        Self { completeness_residual, max_trace_drift: 0.0, max_hermiticity_deviation: 0.0, positive: true, psd_checks: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Density(DensityMatrix),
    Populations(Vec<f64>),
}

impl FinalState {
    pub fn populations(&self) -> Vec<f64> {
        match self {
            Self::Density(rho) => rho.populations(),
            Self::Populations(p) => p.clone(),
        }
    }

    pub fn density(&self) -> Option<&DensityMatrix> {
        match self {
            Self::Density(rho) => Some(rho),
            Self::Populations(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: RunMode,
    pub spec: SequenceSpec,
    pub n_rep: usize,
    /// `[n_rep + 1][N]` signed `2<I_z^(l)>`; row 0 is the initial state.
    pub signed_polarization: Vec<Vec<f64>>,
    pub final_state: FinalState,
    pub health: RunHealth,
}

impl RunResult {
    pub fn nuclear_count(&self) -> usize {
        self.signed_polarization[0].len()
    }

    /// `|2<I_z^(l)>|` after repetition `rep`.
    pub fn per_spin_polarization(&self, rep: usize) -> Vec<f64> {
        self.signed_polarization[rep].iter().map(|x| x.abs()).collect()
    }

    pub fn total_polarization(&self, rep: usize) -> f64 {
        total_polarization(&self.signed_polarization[rep])
    }

    pub fn total_trajectory(&self) -> Vec<f64> {
        self.signed_polarization.iter().map(|s| total_polarization(s)).collect()
    }

    pub fn final_per_spin(&self) -> Vec<f64> {
        self.per_spin_polarization(self.n_rep)
    }

    pub fn final_total(&self) -> f64 {
        self.total_polarization(self.n_rep)
    }
}

/// Real and imaginary parts of a Kraus operator, plus the combinations used
/// by the three-multiplication complex product.
struct SplitOperator {
    re: Vec<f64>,
    im: Vec<f64>,
    sum: Vec<f64>,
    diff: Vec<f64>,
}

impl SplitOperator {
    fn new(k: &ComplexMatrix) -> Self {
        let re: Vec<f64> = k.as_slice().iter().map(|z| z.re).collect();
        let im: Vec<f64> = k.as_slice().iter().map(|z| z.im).collect();
        let sum = re.iter().zip(&im).map(|(a, b)| a + b).collect();
        let diff = re.iter().zip(&im).map(|(a, b)| a - b).collect();
        Self { re, im, sum, diff }
    }
}

/// Density matrix stored as separate real and imaginary planes.
#[derive(Clone)]
struct SplitState {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitState {
    fn from_matrix(m: &ComplexMatrix) -> Self {
        Self { dim: m.dim(), re: m.as_slice().iter().map(|z| z.re).collect(), im: m.as_slice().iter().map(|z| z.im).collect() }
    }

    fn to_matrix(&self) -> ComplexMatrix {
        let data = self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)).collect();
        ComplexMatrix::from_vec(data).expect("square by construction")
    }

    fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.re[i * self.dim + i]).sum()
    }

    fn populations(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.re[i * self.dim + i]).collect()
    }

    /// Restores exact Hermiticity; returns the deviation removed.
    fn hermitize(&mut self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            dev = dev.max(self.im[i * n + i].abs());
            self.im[i * n + i] = 0.0;
            for j in i + 1..n {
                let (a, b) = (i * n + j, j * n + i);
                let (re, im) = ((self.re[a] + self.re[b]) / 2.0, (self.im[a] - self.im[b]) / 2.0);
                dev = dev.max((self.re[a] - self.re[b]).abs()).max((self.im[a] + self.im[b]).abs());
                self.re[a] = re;
                self.re[b] = re;
                self.im[a] = im;
                self.im[b] = -im;
            }
        }
        dev
    }
}

/// Coherent channel iteration on real GEMM kernels.
///
/// `(A + iB)(C + iD)` is formed from `AC`, `BD` and `(A + B)(C + D)`.
pub struct KrausPropagator {
    dim: usize,
    ops: Vec<SplitOperator>,
    y_re: Vec<f64>,
    y_im: Vec<f64>,
    y_sum: Vec<f64>,
    rho_sum: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    t3: Vec<f64>,
}

impl KrausPropagator {
    pub fn new(channel: &ChannelKraus) -> Self {
        let dim = channel.dim();
        let buf = || vec![0.0; dim * dim];
        Self {
            dim,
            ops: channel.operators.iter().map(SplitOperator::new).collect(),
            y_re: buf(),
            y_im: buf(),
            y_sum: buf(),
            rho_sum: buf(),
            t1: buf(),
            t2: buf(),
            t3: buf(),
        }
    }

    fn apply(&mut self, rho: &mut SplitState) {
        let n = self.dim;
        let row = (n, 1);
        let transposed = (1, n);
        for (s, (r, i)) in self.rho_sum.iter_mut().zip(rho.re.iter().zip(&rho.im)) {
            *s = r + i;
        }
        let mut out_re = vec![0.0; n * n];
        let mut out_im = vec![0.0; n * n];
        for op in &self.ops {
            // Y = K ρ
            dgemm_strided(n, n, n, 1.0, &op.re, row, &rho.re, row, 0.0, &mut self.t1);
            dgemm_strided(n, n, n, 1.0, &op.im, row, &rho.im, row, 0.0, &mut self.t2);
            dgemm_strided(n, n, n, 1.0, &op.sum, row, &self.rho_sum, row, 0.0, &mut self.t3);
            for x in 0..n * n {
                self.y_re[x] = self.t1[x] - self.t2[x];
                self.y_im[x] = self.t3[x] - self.t1[x] - self.t2[x];
                self.y_sum[x] = self.y_re[x] + self.y_im[x];
            }
            // out += Y K†, with K† = Aᵀ − i Bᵀ
            dgemm_strided(n, n, n, 1.0, &self.y_re, row, &op.re, transposed, 0.0, &mut self.t1);
            dgemm_strided(n, n, n, 1.0, &self.y_im, row, &op.im, transposed, 0.0, &mut self.t2);
            dgemm_strided(n, n, n, 1.0, &self.y_sum, row, &op.diff, transposed, 0.0, &mut self.t3);
            for x in 0..n * n {
                out_re[x] += self.t1[x] + self.t2[x];
                out_im[x] += self.t3[x] - self.t1[x] + self.t2[x];
            }
        }
        rho.re = out_re;
        rho.im = out_im;
    }
}

/// Applies `Σ_k W_k ρ W_k†` for product-form Kraus operators by per-nucleus 2x2 updates.
fn apply_product_channel(ops: &[ProductKraus], rho: &mut SplitState) {
    let n = rho.dim;
    let count = n.trailing_zeros() as usize;
    let mut out_re = vec![0.0; n * n];
    let mut out_im = vec![0.0; n * n];
    for op in ops {
        let mut work = rho.clone();
        for (l, g) in op.factors.iter().enumerate() {
            let mask = 1usize << (count - 1 - l);
            apply_local_rows(&mut work, mask, g);
            let conj = [g[0].conj(), g[1].conj(), g[2].conj(), g[3].conj()];
            apply_local_cols(&mut work, mask, &conj);
        }
        let w = op.weight.norm_sqr();
        for x in 0..n * n {
            out_re[x] += w * work.re[x];
            out_im[x] += w * work.im[x];
        }
    }
    rho.re = out_re;
    rho.im = out_im;
}

fn apply_local_rows(s: &mut SplitState, mask: usize, g: &[C64; 4]) {
    let n = s.dim;
    for r in (0..n).filter(|r| r & mask == 0) {
        let (a, b) = (r * n, (r | mask) * n);
        for c in 0..n {
            let x = C64::new(s.re[a + c], s.im[a + c]);
            let y = C64::new(s.re[b + c], s.im[b + c]);
            let (u, v) = (g[0] * x + g[1] * y, g[2] * x + g[3] * y);
            s.re[a + c] = u.re;
            s.im[a + c] = u.im;
            s.re[b + c] = v.re;
            s.im[b + c] = v.im;
        }
    }
}

/// Right-multiplies by the transpose of `g`, i.e. by `W†` when `g` holds conj(W).
fn apply_local_cols(s: &mut SplitState, mask: usize, g: &[C64; 4]) {
    let n = s.dim;
    for r in 0..n {
        let base = r * n;
        for c in (0..n).filter(|c| c & mask == 0) {
            let (a, b) = (base + c, base + (c | mask));
            let x = C64::new(s.re[a], s.im[a]);
            let y = C64::new(s.re[b], s.im[b]);
            let (u, v) = (x * g[0] + y * g[1], x * g[2] + y * g[3]);
            s.re[a] = u.re;
            s.im[a] = u.im;
            s.re[b] = v.re;
            s.im[b] = v.im;
        }
    }
}

/// Per-cycle channels of one system and sequence, reusable across modes.
pub struct Propagation {
    pub spec: SequenceSpec,
    pub channel: ChannelKraus,
    pub disentangle: Option<Vec<ProductKraus>>,
    nuclear_count: usize,
}

impl Propagation {
    pub fn new(system: &SpinSystem, spec: &SequenceSpec) -> Result<Self, EngineError> {
        spec.validate()?;
        let u = sequence_unitary(system, spec)?;
        let channel = sequence_channel(&u, &system.electron)?;
        let disentangle = match (spec.disentangle, spec.disentangle_wait()) {
            (Some(d), Some(wait)) => Some(disentangle_product_kraus(system, d.theta_e, wait)?),
            _ => None,
        };
        Ok(Self { spec: spec.clone(), channel, disentangle, nuclear_count: system.nuclear_count() })
    }

    pub fn run(&self, mode: RunMode, n_rep: usize) -> Result<RunResult, EngineError> {
        if n_rep == 0 {
            return Err(EngineError::NoRepetitions);
        }
        let residual = self.channel.completeness_residual();
        if !(residual <= crate::sequences::COMPLETENESS_TOL) {
            return Err(SequenceError::Completeness(residual).into());
        }
        let rho0 = initial_nuclear_state(self.nuclear_count)?;
        let mut health = RunHealth::new(residual);
        let mut trajectory = Vec::with_capacity(n_rep + 1);
        trajectory.push(signed_polarizations(&rho0.populations()));

        let final_state = match mode {
            RunMode::Incoherent => {
                let markov = incoherent_markov(&self.channel)?;
                let mut p = rho0.populations();
                for _ in 0..n_rep {
                    p = markov.apply(&p);
                    let drift = (p.iter().sum::<f64>() - 1.0).abs();
                    health.max_trace_drift = health.max_trace_drift.max(drift);
                    if !(drift <= TRACE_TOL) {
                        return Err(EngineError::TraceDrift(drift));
                    }
                    trajectory.push(signed_polarizations(&p));
                }
                health.positive = p.iter().all(|&x| x >= -PSD_TOL);
                health.psd_checks = 1;
                FinalState::Populations(p)
            }
            RunMode::Coherent | RunMode::CoherentWithDisentangle => {
                let disentangle = match mode {
                    RunMode::CoherentWithDisentangle => Some(self.disentangle.as_deref().ok_or(EngineError::MissingDisentangle)?),
                    _ => None,
                };
                let mut propagator = KrausPropagator::new(&self.channel);
                let mut rho = SplitState::from_matrix(&rho0);
                for rep in 1..=n_rep {
                    propagator.apply(&mut rho);
                    if let Some(ops) = disentangle {
                        apply_product_channel(ops, &mut rho);
                    }
                    let herm = rho.hermitize();
                    health.max_hermiticity_deviation = health.max_hermiticity_deviation.max(herm);
                    let drift = (rho.trace() - 1.0).abs();
                    health.max_trace_drift = health.max_trace_drift.max(drift);
                    if !(drift <= TRACE_TOL) {
                        return Err(EngineError::TraceDrift(drift));
                    }
                    if rep % PSD_CHECK_EVERY == 0 || rep == n_rep {
                        health.psd_checks += 1;
                        if !is_positive_semidefinite(&rho.to_matrix(), PSD_TOL) {
                            return Err(EngineError::NotPositive);
                        }
                    }
                    trajectory.push(signed_polarizations(&rho.populations()));
                }
                FinalState::Density(DensityMatrix::from_unchecked(rho.to_matrix()))
            }
        };
        Ok(RunResult { mode, spec: self.spec.clone(), n_rep, signed_polarization: trajectory, final_state, health })
    }
}

/// Builds the channels and runs `n_rep` repetitions.
pub fn run(system: &SpinSystem, spec: &SequenceSpec, mode: RunMode, n_rep: usize) -> Result<RunResult, EngineError> {
    if mode == RunMode::CoherentWithDisentangle && spec.disentangle.is_none() {
        return Err(EngineError::MissingDisentangle);
    }
    Propagation::new(system, spec)?.run(mode, n_rep)
}

/// Describes a mode for reports.
pub fn mode_name(mode: RunMode) -> String {
    String::from(match mode {
        RunMode::Coherent => "coherent",
        RunMode::Incoherent => "incoherent",
        RunMode::CoherentWithDisentangle => "coherent_with_disentangle",
    })
}
