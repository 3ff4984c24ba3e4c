//! PulsePol, NOVEL and the disentangling step as unitaries and nuclear channels.
//!
//! Pulses are instantaneous. Operator products follow the usual composition
//! order: in `A B` the factor `B` acts first.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::model::{sector_hamiltonian, ElectronKind, ElectronModel, ModelError, SpinSystem};
use crate::spinalg::{
    embed_single_spin, expm_hermitian, kron_chain, pauli, su2_entries, ComplexMatrix, RegisterLayout, Slot, SpinAlgError, C64,
    UNITARITY_TOL,
};

/// Kraus completeness residual above which a channel is treated as broken.
pub const COMPLETENESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("invalid sequence: {0}")]
    InvalidSpec(String),
    #[error("builder for {expected:?} called with a {found:?} sequence")]
    WrongProtocol { expected: Protocol, found: Protocol },
    #[error("the disentangling step needs the NV effective electron")]
    RequiresNv,
    #[error("Kraus completeness violated (residual {0:.3e})")]
    Completeness(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algebra(#[from] SpinAlgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Protocol {
    PulsePol,
    Novel,
}

/// Electron re-preparation `exp(-i θ_e S_x)|init>` followed by a free wait.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisentangleSpec {
    pub theta_e: f64,
    /// Wait in µs; `None` means `2 n_pol tau_pol`.
    pub wait: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceSpec {
    pub protocol: Protocol,
    /// Pulse interval τ_pol in µs.
    pub tau_pol: f64,
    pub n_pol: u32,
    /// Target frequency in MHz; `None` means the resonance `3 / (2 tau_pol)`.
    pub target_frequency: Option<f64>,
    pub disentangle: Option<DisentangleSpec>,
}

impl SequenceSpec {
    pub fn new(protocol: Protocol, tau_pol: f64, n_pol: u32) -> Self {
        Self { protocol, tau_pol, n_pol, target_frequency: None, disentangle: None }
    }

    /// Sequence whose resonance `3 / (2 tau_pol)` sits at `f_t`.
    pub fn resonant(protocol: Protocol, f_t: f64, n_pol: u32) -> Self {
        Self::new(protocol, 1.5 / f_t, n_pol)
    }

    pub fn with_disentangle(mut self, theta_e: f64, wait: Option<f64>) -> Self {
        self.disentangle = Some(DisentangleSpec { theta_e, wait });
        self
    }

    pub fn target(&self) -> f64 {
        self.target_frequency.unwrap_or(1.5 / self.tau_pol)
    }

    /// Length of one polarisation cycle, `2 n_pol tau_pol`.
    pub fn cycle_duration(&self) -> f64 {
        2.0 * self.n_pol as f64 * self.tau_pol
    }

    pub fn disentangle_wait(&self) -> Option<f64> {
        self.disentangle.map(|d| d.wait.unwrap_or_else(|| self.cycle_duration()))
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if !(self.tau_pol > 0.0 && self.tau_pol.is_finite()) {
            return Err(SequenceError::InvalidSpec(format!("tau_pol must be positive, got {}", self.tau_pol)));
        }
        if self.n_pol == 0 {
            return Err(SequenceError::InvalidSpec("n_pol must be at least 1".into()));
        }
        if let Some(f_t) = self.target_frequency {
            if !(f_t > 0.0 && f_t.is_finite()) {
                return Err(SequenceError::InvalidSpec(format!("target frequency must be positive, got {f_t}")));
            }
            // PulsePol has no free drive frequency: the target is fixed by tau_pol
            let resonance = 1.5 / self.tau_pol;
            if self.protocol == Protocol::PulsePol && (f_t - resonance).abs() > 1e-9 * resonance {
                return Err(SequenceError::InvalidSpec(format!(
                    "PulsePol target {f_t} MHz inconsistent with tau_pol (resonance {resonance} MHz)"
                )));
            }
        }
        if let Some(d) = self.disentangle {
            if !d.theta_e.is_finite() {
                return Err(SequenceError::InvalidSpec("theta_e must be finite".into()));
            }
            if let Some(w) = d.wait {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(SequenceError::InvalidSpec(format!("wait must be non-negative, got {w}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseAxis {
    X,
    Y,
}

/// Entries of `exp(-i angle S_axis)` on the electron pseudo-spin.
pub fn pulse_entries(axis: PulseAxis, angle: f64) -> [C64; 4] {
    match axis {
        PulseAxis::X => su2_entries(angle / 2.0, 0.0, 0.0),
        PulseAxis::Y => su2_entries(0.0, angle / 2.0, 0.0),
    }
}

/// `exp(-i sign·angle S_axis)` on the electron slot, identity on the nuclei.
pub fn electron_pulse(axis: PulseAxis, angle: f64, sign: f64, layout: RegisterLayout) -> Result<ComplexMatrix, SpinAlgError> {
    let [a, b, c, d] = pulse_entries(axis, sign * angle);
    embed_single_spin(&ComplexMatrix::mat2(a, b, c, d), Slot::Electron, layout)
}

/// Free evolution in factored form: per electron sector, one 2x2 unitary per nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEvolution {
    pub sectors: [Vec<[C64; 4]>; 2],
}

impl FreeEvolution {
    pub fn new(system: &SpinSystem, duration: f64) -> Self {
        let sector = |m_s: f64| -> Vec<[C64; 4]> {
            (0..system.nuclear_count())
                .map(|l| {
                    let (cz, cx) = system.sector_coefficients(l, m_s);
                    su2_entries(2.0 * PI * duration * cx / 2.0, 0.0, 2.0 * PI * duration * cz / 2.0)
                })
                .collect()
        };
        let [m0, m1] = system.electron.sector_values();
        Self { sectors: [sector(m0), sector(m1)] }
    }

    pub fn nuclear_count(&self) -> usize {
        self.sectors[0].len()
    }

    /// Dense nuclear block of one sector.
    pub fn sector_block(&self, sector: usize) -> ComplexMatrix {
        product_matrix(&self.sectors[sector])
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let d = 1usize << self.nuclear_count();
        let blocks = [self.sector_block(0), self.sector_block(1)];
        let mut out = ComplexMatrix::zeros(2 * d);
        for (s, block) in blocks.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    out[(s * d + i, s * d + j)] = block[(i, j)];
                }
            }
        }
        out
    }

    /// `m ← U_t m` without forming `U_t`.
    pub fn apply_left(&self, m: &mut ComplexMatrix) {
        let n = self.nuclear_count();
        let d = 1usize << n;
        for (s, factors) in self.sectors.iter().enumerate() {
            for (l, g) in factors.iter().enumerate() {
                apply_rows(m, s * d, d, n - 1 - l, g);
            }
        }
    }
}

/// `⊗_l g_l` as a dense matrix.
pub fn product_matrix(factors: &[[C64; 4]]) -> ComplexMatrix {
    let mats: Vec<ComplexMatrix> = factors.iter().map(|&[a, b, c, d]| ComplexMatrix::mat2(a, b, c, d)).collect();
    kron_chain(&mats).unwrap_or_else(|_| ComplexMatrix::identity(1))
}

/// Applies a 2x2 operator on `bit` of the row index, restricted to rows `offset..offset+len`.
fn apply_rows(m: &mut ComplexMatrix, offset: usize, len: usize, bit: usize, g: &[C64; 4]) {
    let cols = m.dim();
    let data = m.as_mut_slice();
    let mask = 1usize << bit;
    for r in 0..len {
        if r & mask != 0 {
            continue;
        }
        let (up, down) = ((offset + r) * cols, (offset + (r | mask)) * cols);
        for c in 0..cols {
            let (x, y) = (data[up + c], data[down + c]);
            data[up + c] = g[0] * x + g[1] * y;
            data[down + c] = g[2] * x + g[3] * y;
        }
    }
}

/// `m ← (g ⊗ 1) m` for an electron-slot operator.
fn apply_electron_left(m: &mut ComplexMatrix, g: &[C64; 4]) {
    let dim = m.dim();
    apply_rows(m, 0, dim, dim.trailing_zeros() as usize - 1, g);
}

/// Joint free-evolution unitary `exp(-2πi H duration)`.
pub fn free_evolution(system: &SpinSystem, duration: f64) -> Result<ComplexMatrix, SequenceError> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SequenceError::InvalidSpec(format!("duration must be non-negative, got {duration}")));
    }
    Ok(FreeEvolution::new(system, duration).to_matrix())
}

fn ensure_protocol(spec: &SequenceSpec, expected: Protocol) -> Result<(), SequenceError> {
    spec.validate()?;
    if spec.protocol != expected {
        return Err(SequenceError::WrongProtocol { expected, found: spec.protocol });
    }
    Ok(())
}

/// One PulsePol unit `U_x U_t U_y² U_t U_x U_y U_t (U_x†)² U_t U_y` with `U_t` lasting `tau_pol / 4`.
pub fn pulsepol_unit(system: &SpinSystem, spec: &SequenceSpec) -> Result<ComplexMatrix, SequenceError> {
    ensure_protocol(spec, Protocol::PulsePol)?;
    let free = FreeEvolution::new(system, spec.tau_pol / 4.0);
    let ux = pulse_entries(PulseAxis::X, PI / 2.0);
    let ux_dag = pulse_entries(PulseAxis::X, -PI / 2.0);
    let uy = pulse_entries(PulseAxis::Y, PI / 2.0);

    enum Step<'a> {
        Pulse(&'a [C64; 4]),
        Free,
    }
    use Step::*;
    // rightmost factor first
    let steps = [
        Pulse(&uy),
        Free,
        Pulse(&ux_dag),
        Pulse(&ux_dag),
        Free,
        Pulse(&uy),
        Pulse(&ux),
        Free,
        Pulse(&uy),
        Pulse(&uy),
        Free,
        Pulse(&ux),
    ];
    let mut u = ComplexMatrix::identity(system.joint_layout().dim());
    for step in &steps {
        match step {
            Pulse(g) => apply_electron_left(&mut u, g),
            Free => free.apply_left(&mut u),
        }
    }
    Ok(u)
}

/// Full PulsePol propagator: the unit raised to `2 n_pol`.
pub fn pulsepol_total(system: &SpinSystem, spec: &SequenceSpec) -> Result<ComplexMatrix, SequenceError> {
    Ok(pulsepol_unit(system, spec)?.pow(2 * spec.n_pol))
}

/// Joint NOVEL Hamiltonian `f_t S_y + Σ_m |m><m| ⊗ H_m` in MHz.
pub fn novel_hamiltonian(system: &SpinSystem, f_t: f64) -> Result<ComplexMatrix, SequenceError> {
    let d = system.nuclear_layout().dim();
    let mut h = pauli::spin_y().scale(C64::new(f_t, 0.0)).kron(&ComplexMatrix::identity(d));
    for (k, m_s) in system.electron.sector_values().into_iter().enumerate() {
        h = h.add(&pauli::projector(k).kron(&sector_hamiltonian(system, m_s)?));
    }
    Ok(h)
}

/// `U_x exp(-2πi H_NOVEL t_dur) U_x†` with `t_dur = 2 n_pol tau_pol`.
pub fn novel_total(system: &SpinSystem, spec: &SequenceSpec) -> Result<ComplexMatrix, SequenceError> {
    ensure_protocol(spec, Protocol::Novel)?;
    let h = novel_hamiltonian(system, spec.target())?;
    let evolution = expm_hermitian(&h, 2.0 * PI * spec.cycle_duration())?;
    let ux = electron_pulse(PulseAxis::X, PI / 2.0, 1.0, system.joint_layout())?;
    Ok(ux.matmul(&evolution).matmul_adjoint(&ux))
}

/// Unitary of whichever protocol the spec names.
pub fn sequence_unitary(system: &SpinSystem, spec: &SequenceSpec) -> Result<ComplexMatrix, SequenceError> {
    match spec.protocol {
        Protocol::PulsePol => pulsepol_total(system, spec),
        Protocol::Novel => novel_total(system, spec),
    }
}

/// Nuclear-register Kraus operators of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelKraus {
    pub operators: Vec<ComplexMatrix>,
    pub source: String,
}

impl ChannelKraus {
    pub fn dim(&self) -> usize {
        self.operators.first().map_or(0, ComplexMatrix::dim)
    }

    /// `max |Σ_k K_k† K_k − 1|`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let mut sum = ComplexMatrix::zeros(d);
        for k in &self.operators {
            sum = sum.add(&k.adjoint().matmul(k));
        }
        sum.max_abs_diff(&ComplexMatrix::identity(d))
    }

    pub fn identity(dim: usize) -> Self {
        Self { operators: vec![ComplexMatrix::identity(dim)], source: "identity".into() }
    }
}

/// Splits a joint unitary into `T_α = <flip|U|init>` (first) and `T_β = <init|U|init>`.
pub fn sequence_channel(u: &ComplexMatrix, electron: &ElectronModel) -> Result<ChannelKraus, SequenceError> {
    let dim = u.dim();
    if dim < 2 || !dim.is_power_of_two() {
        return Err(SpinAlgError::DimensionMismatch { expected: dim.next_power_of_two().max(2), found: dim }.into());
    }
    let d = dim / 2;
    let channel = ChannelKraus {
        operators: vec![u.block(d, 0, d), u.block(0, 0, d)],
        source: format!("sequence (init m_S={}, flip m_S={})", electron.initial_sector(), electron.flip_sector()),
    };
    let residual = channel.completeness_residual();
    if !(residual <= COMPLETENESS_TOL) {
        return Err(SequenceError::Completeness(residual));
    }
    Ok(channel)
}

/// Kraus operator of the form `weight · ⊗_l factors[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKraus {
    pub weight: C64,
    pub factors: Vec<[C64; 4]>,
}

impl ProductKraus {
    pub fn to_matrix(&self) -> ComplexMatrix {
        product_matrix(&self.factors).scale(self.weight)
    }
}

/// Amplitudes of `exp(-i θ_e S_x)|init>` on the two electron sectors.
pub fn prepared_electron(theta_e: f64) -> [C64; 2] {
    let g = pulse_entries(PulseAxis::X, theta_e);
    [g[0], g[2]]
}

/// Disentangling step in factored form; sectors with vanishing amplitude are dropped.
pub fn disentangle_product_kraus(system: &SpinSystem, theta_e: f64, wait: f64) -> Result<Vec<ProductKraus>, SequenceError> {
    if system.electron.kind != ElectronKind::NvEffective {
        return Err(SequenceError::RequiresNv);
    }
    if !(wait >= 0.0 && wait.is_finite()) {
        return Err(SequenceError::InvalidSpec(format!("wait must be non-negative, got {wait}")));
    }
    let free = FreeEvolution::new(system, wait);
    let amplitudes = prepared_electron(theta_e);
    Ok(amplitudes
        .iter()
        .zip(free.sectors)
        .filter(|(a, _)| a.norm_sqr() > 1e-24)
        .map(|(&weight, factors)| ProductKraus { weight, factors })
        .collect())
}

/// Re-prepare the electron, wait, trace the electron out.
pub fn disentangle_channel(system: &SpinSystem, theta_e: f64, wait: f64) -> Result<ChannelKraus, SequenceError> {
    let ops = disentangle_product_kraus(system, theta_e, wait)?;
    let channel = ChannelKraus {
        operators: ops.iter().map(ProductKraus::to_matrix).collect(),
        source: format!("disentangle (theta_e={theta_e}, wait={wait} us)"),
    };
    let residual = channel.completeness_residual();
    if !(residual <= COMPLETENESS_TOL) {
        return Err(SequenceError::Completeness(residual));
    }
    Ok(channel)
}

/// Asserts the builder contract on a freshly built propagator.
pub fn check_unitary(u: &ComplexMatrix) -> Result<(), SequenceError> {
    let deviation = u.unitarity_deviation();
    if deviation < UNITARITY_TOL {
        Ok(())
    } else {
        Err(SpinAlgError::NotUnitary { deviation }.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NuclearSpinParams;

    fn spin_half(nuclei: &[(f64, f64)], f_n: f64) -> SpinSystem {
        SpinSystem::new(ElectronModel::spin_half(), nuclei.iter().map(|&(a, b)| NuclearSpinParams::new(a, b)).collect(), f_n)
            .unwrap()
    }

    /// Dense joint Hamiltonian Σ_m |m><m| ⊗ H_m.
    fn joint_hamiltonian(system: &SpinSystem) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(system.joint_layout().dim());
        for (k, m_s) in system.electron.sector_values().into_iter().enumerate() {
            h = h.add(&pauli::projector(k).kron(&sector_hamiltonian(system, m_s).unwrap()));
        }
        h
    }

    #[test]
    fn pulse_identities() {
        assert!(
            electron_pulse(PulseAxis::X, 0.0, 1.0, RegisterLayout::joint(2)).unwrap().max_abs_diff(&ComplexMatrix::identity(8))
                < 1e-15
        );
        let ux = electron_pulse(PulseAxis::X, PI / 2.0, 1.0, RegisterLayout::joint(1)).unwrap();
        let expected = pauli::sigma_x().scale(C64::new(0.0, -1.0)).kron(&ComplexMatrix::identity(2));
        assert!(ux.matmul(&ux).max_abs_diff(&expected) < 1e-15);
        let ux_dag = electron_pulse(PulseAxis::X, PI / 2.0, -1.0, RegisterLayout::joint(1)).unwrap();
        assert!(ux.matmul(&ux_dag).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        assert!(ux_dag.max_abs_diff(&ux.adjoint()) < 1e-15);
    }

    #[test]
    fn free_evolution_zero_duration_is_identity() {
        let sys = spin_half(&[(0.1, 0.3), (0.0, 0.2)], 1.0);
        assert!(free_evolution(&sys, 0.0).unwrap().max_abs_diff(&ComplexMatrix::identity(8)) < 1e-15);
        assert!(free_evolution(&sys, -1.0).is_err());
    }

    #[test]
    fn free_evolution_matches_dense_exponential() {
        let one = spin_half(&[(0.0, 0.3)], 1.0);
        let dense = expm_hermitian(&joint_hamiltonian(&one), 2.0 * PI * 0.37).unwrap();
        assert!(free_evolution(&one, 0.37).unwrap().max_abs_diff(&dense) < 1e-12);

        let nv = SpinSystem::new(
            ElectronModel::nv_effective(),
            vec![
                NuclearSpinParams::new(-0.0113, 0.0592),
                NuclearSpinParams::new(0.031, 0.013),
                NuclearSpinParams::new(-0.0486, 0.009),
            ],
            0.432,
        )
        .unwrap();
        let dense = expm_hermitian(&joint_hamiltonian(&nv), 2.0 * PI * 3.1).unwrap();
        assert!(free_evolution(&nv, 3.1).unwrap().max_abs_diff(&dense) < 1e-11);
    }

    #[test]
    fn free_evolution_semigroup() {
        let sys = spin_half(&[(0.2, 0.3), (-0.1, 0.05), (0.0, 0.4)], 0.8);
        let a = free_evolution(&sys, 0.7).unwrap();
        let b = free_evolution(&sys, 1.9).unwrap();
        let ab = free_evolution(&sys, 2.6).unwrap();
        assert!(a.matmul(&b).max_abs_diff(&ab) < 1e-11);
    }

    #[test]
    fn pulsepol_unit_matches_dense_product() {
        let sys = spin_half(&[(0.05, 0.3), (0.0, 0.2)], 1.0);
        let spec = SequenceSpec::resonant(Protocol::PulsePol, 1.0, 1);
        let ut = free_evolution(&sys, spec.tau_pol / 4.0).unwrap();
        let ux = electron_pulse(PulseAxis::X, PI / 2.0, 1.0, RegisterLayout::joint(2)).unwrap();
        let uy = electron_pulse(PulseAxis::Y, PI / 2.0, 1.0, RegisterLayout::joint(2)).unwrap();
        let ux_dag = ux.adjoint();
        let printed = [&ux, &ut, &uy, &uy, &ut, &ux, &uy, &ut, &ux_dag, &ux_dag, &ut, &uy];
        let dense = printed.iter().fold(ComplexMatrix::identity(8), |acc, f| acc.matmul(f));
        let unit = pulsepol_unit(&sys, &spec).unwrap();
        assert!(unit.max_abs_diff(&dense) < 1e-13);
        check_unitary(&unit).unwrap();
    }

    #[test]
    fn pulsepol_without_transverse_coupling_conserves_iz() {
        let sys = spin_half(&[(0.2, 0.0), (-0.1, 0.0)], 1.0);
        let spec = SequenceSpec::resonant(Protocol::PulsePol, 1.0, 1);
        let unit = pulsepol_unit(&sys, &spec).unwrap();
        let layout = RegisterLayout::joint(2);
        let iz_total = embed_single_spin(&pauli::spin_z(), Slot::Nucleus(0), layout)
            .unwrap()
            .add(&embed_single_spin(&pauli::spin_z(), Slot::Nucleus(1), layout).unwrap());
        assert!(unit.commutator(&iz_total).max_abs() < 1e-13);
        let channel = sequence_channel(&pulsepol_total(&sys, &spec).unwrap(), &sys.electron).unwrap();
        assert!(channel.operators[0].max_abs() < 1e-13);
    }

    #[test]
    fn pulsepol_total_is_power_of_unit() {
        let sys = spin_half(&[(0.0, 0.3), (0.0, 0.3)], 1.0);
        let spec = SequenceSpec::resonant(Protocol::PulsePol, 1.0, 1);
        let unit = pulsepol_unit(&sys, &spec).unwrap();
        assert!(pulsepol_total(&sys, &spec).unwrap().max_abs_diff(&unit.matmul(&unit)) < 1e-14);
        let long = SequenceSpec { n_pol: 8, ..spec };
        assert!(pulsepol_total(&sys, &long).unwrap().unitarity_deviation() < UNITARITY_TOL);
    }

    #[test]
    fn flip_probability_peaks_at_resonance() {
        // weak coupling and several cycles keep the line narrow and symmetric
        let (f_n, a_perp, n_pol) = (1.0, 0.05, 4);
        let sys = spin_half(&[(0.0, a_perp)], f_n);
        let f_p = crate::model::precession_frequency(f_n, 0.0, a_perp, 0.5);
        let resonant_tau = 1.5 / f_p;
        let step = 0.005;
        let mut best = (0.0, f64::NAN);
        for k in -40..=40 {
            let tau = resonant_tau + k as f64 * step;
            let u = pulsepol_total(&sys, &SequenceSpec::new(Protocol::PulsePol, tau, n_pol)).unwrap();
            let channel = sequence_channel(&u, &sys.electron).unwrap();
            // nucleus up (index 0) is the state the transfer flips
            let k_alpha = &channel.operators[0];
            let p = k_alpha[(0, 0)].norm_sqr() + k_alpha[(1, 0)].norm_sqr();
            if p > best.0 {
                best = (p, tau);
            }
        }
        assert!((best.1 - resonant_tau).abs() <= step, "peak at {} vs {}", best.1, resonant_tau);
    }

    #[test]
    fn novel_limits() {
        let sys = spin_half(&[(0.0, 0.0), (0.0, 0.0)], 1.0);
        let spec = SequenceSpec::resonant(Protocol::Novel, 1.0, 1);
        let u = novel_total(&sys, &spec).unwrap();
        check_unitary(&u).unwrap();
        let channel = sequence_channel(&u, &sys.electron).unwrap();
        // no coupling: populations of every nuclear basis state are untouched
        for k in &channel.operators {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!(k[(i, j)].norm() < 1e-12);
                    }
                }
            }
        }
        let zero = SequenceSpec { tau_pol: 1e-300, ..spec };
        let u0 = novel_total(&sys, &SequenceSpec { target_frequency: Some(1.0), ..zero }).unwrap();
        assert!(u0.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-12);
        assert!(matches!(
            novel_total(&sys, &SequenceSpec::new(Protocol::PulsePol, 1.0, 1)),
            Err(SequenceError::WrongProtocol { .. })
        ));
    }

    #[test]
    fn channel_of_identity() {
        let sys = spin_half(&[(0.0, 0.1)], 1.0);
        let ch = sequence_channel(&ComplexMatrix::identity(4), &sys.electron).unwrap();
        assert!(ch.operators[0].max_abs() == 0.0);
        assert_eq!(ch.operators[1], ComplexMatrix::identity(2));
    }

    #[test]
    fn channel_rejects_non_unitary() {
        let sys = spin_half(&[(0.0, 0.1)], 1.0);
        let bad = ComplexMatrix::identity(4).scale(C64::new(1.1, 0.0));
        assert!(matches!(sequence_channel(&bad, &sys.electron), Err(SequenceError::Completeness(_))));
    }

    #[test]
    fn disentangle_special_angles() {
        let nv = SpinSystem::new(
            ElectronModel::nv_effective(),
            vec![NuclearSpinParams::new(-0.02, 0.05), NuclearSpinParams::new(0.01, 0.02)],
            0.43,
        )
        .unwrap();
        let zero = disentangle_channel(&nv, 0.0, 2.5).unwrap();
        assert_eq!(zero.operators.len(), 1);
        // bare Larmor: diagonal, populations untouched
        let k = &zero.operators[0];
        for i in 0..4 {
            assert!((k[(i, i)].norm() - 1.0).abs() < 1e-14);
        }
        let pi = disentangle_channel(&nv, PI, 2.5).unwrap();
        assert_eq!(pi.operators.len(), 1);
        assert!(pi.operators[0].unitarity_deviation() < 1e-13);
        let half = disentangle_channel(&nv, PI / 2.0, 2.5).unwrap();
        assert_eq!(half.operators.len(), 2);
        assert!(half.completeness_residual() < 1e-10);

        let s12 = SpinSystem::new(ElectronModel::spin_half(), vec![NuclearSpinParams::new(0.0, 0.1)], 1.0).unwrap();
        assert_eq!(disentangle_channel(&s12, PI, 1.0), Err(SequenceError::RequiresNv));
    }

    #[test]
    fn spec_validation() {
        assert!(SequenceSpec::new(Protocol::PulsePol, 0.0, 1).validate().is_err());
        assert!(SequenceSpec::new(Protocol::PulsePol, 1.0, 0).validate().is_err());
        let mut s = SequenceSpec::new(Protocol::PulsePol, 1.0, 1);
        s.target_frequency = Some(1.5);
        assert!(s.validate().is_ok());
        s.target_frequency = Some(1.2);
        assert!(s.validate().is_err());
        let spec = SequenceSpec::new(Protocol::PulsePol, 3.488, 2).with_disentangle(PI, None);
        assert!((spec.disentangle_wait().unwrap() - 2.0 * 2.0 * 3.488).abs() < 1e-12);
    }
}
