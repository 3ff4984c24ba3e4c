//! Electron-nuclear system description and the secular Hamiltonian.
//!
//! Units throughout: MHz for frequencies, µs for times, mT for fields, nm for
//! distances, radians for angles.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::spinalg::{embed_single_spin, pauli, ComplexMatrix, RegisterLayout, Slot, C64};

/// Largest nuclear register accepted (dense 2^12 matrices).
pub const MAX_NUCLEI: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("nuclear count {0} outside 1..={MAX_NUCLEI}")]
    NuclearCount(usize),
    #[error("Larmor frequency must be positive and finite, got {0}")]
    Larmor(f64),
    #[error("nucleus {label}: hyperfine values must be finite with a_perp >= 0")]
    Hyperfine { label: String },
    #[error("m_S = {0} is not a sector of this electron model")]
    UnknownSector(f64),
    #[error("magnetic field must be non-negative and finite, got {0} mT")]
    Field(f64),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
}

/// Hyperfine couplings of one nucleus, in MHz.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NuclearSpinParams {
    pub a_par: f64,
    pub a_perp: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub label: String,
}

impl NuclearSpinParams {
    pub fn new(a_par: f64, a_perp: f64) -> Self {
        Self { a_par, a_perp, label: String::new() }
    }

    pub fn labeled(a_par: f64, a_perp: f64, label: impl Into<String>) -> Self {
        Self { a_par, a_perp, label: label.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ElectronKind {
    /// S = 1/2 with sectors (+1/2, -1/2), initialised into +1/2.
    SpinHalf,
    /// NV centre restricted to (0, -1), initialised into 0.
    NvEffective,
}

/// Two-level effective electron.
///
/// Electron-slot basis index 0 is the optically initialised sector and index 1
/// is the sector reached by a polarisation-transferring flip. Pulses treat the
/// pair as a pseudo spin-1/2 with index 0 as "up".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronModel {
    pub kind: ElectronKind,
    sectors: [f64; 2],
}

impl ElectronModel {
    pub fn new(kind: ElectronKind) -> Self {
        let sectors = match kind {
            ElectronKind::SpinHalf => [0.5, -0.5],
            ElectronKind::NvEffective => [0.0, -1.0],
        };
        Self { kind, sectors }
    }

    pub fn spin_half() -> Self {
        Self::new(ElectronKind::SpinHalf)
    }

    pub fn nv_effective() -> Self {
        Self::new(ElectronKind::NvEffective)
    }

    /// m_S values in electron-slot order.
    pub fn sector_values(&self) -> [f64; 2] {
        self.sectors
    }

    pub fn initial_sector(&self) -> f64 {
        self.sectors[0]
    }

    pub fn flip_sector(&self) -> f64 {
        self.sectors[1]
    }

    /// Electron-slot index of an m_S value.
    pub fn sector_index(&self, m_s: f64) -> Result<usize, ModelError> {
        self.sectors.iter().position(|&s| s == m_s).ok_or(ModelError::UnknownSector(m_s))
    }
}

/// Electron plus nuclear bath.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub electron: ElectronModel,
    nuclei: Vec<NuclearSpinParams>,
    larmor: f64,
}

impl SpinSystem {
    pub fn new(electron: ElectronModel, nuclei: Vec<NuclearSpinParams>, larmor_mhz: f64) -> Result<Self, ModelError> {
        if nuclei.is_empty() || nuclei.len() > MAX_NUCLEI {
            return Err(ModelError::NuclearCount(nuclei.len()));
        }
        if !(larmor_mhz > 0.0 && larmor_mhz.is_finite()) {
            return Err(ModelError::Larmor(larmor_mhz));
        }
        for n in &nuclei {
            if !(n.a_par.is_finite() && n.a_perp.is_finite() && n.a_perp >= 0.0) {
                return Err(ModelError::Hyperfine { label: n.label.clone() });
            }
        }
        Ok(Self { electron, nuclei, larmor: larmor_mhz })
    }

    pub fn nuclei(&self) -> &[NuclearSpinParams] {
        &self.nuclei
    }

    pub fn nuclear_count(&self) -> usize {
        self.nuclei.len()
    }

    /// Nuclear Larmor frequency f_n in MHz.
    pub fn larmor(&self) -> f64 {
        self.larmor
    }

    pub fn joint_layout(&self) -> RegisterLayout {
        RegisterLayout::joint(self.nuclei.len())
    }

    pub fn nuclear_layout(&self) -> RegisterLayout {
        RegisterLayout::nuclear(self.nuclei.len())
    }

    /// Copy of the system with every nucleus replaced.
    pub fn with_nuclei(&self, nuclei: Vec<NuclearSpinParams>) -> Result<Self, ModelError> {
        Self::new(self.electron, nuclei, self.larmor)
    }

    /// Mean A⊥ over the nuclei.
    pub fn mean_a_perp(&self) -> f64 {
        self.nuclei.iter().map(|n| n.a_perp).sum::<f64>() / self.nuclei.len() as f64
    }

    /// `(z, x)` coefficients of `c_z I_z + c_x I_x` for nucleus `l` in sector `m_s`.
    pub fn sector_coefficients(&self, l: usize, m_s: f64) -> (f64, f64) {
        let n = &self.nuclei[l];
        (-self.larmor + m_s * n.a_par, m_s * n.a_perp)
    }
}

/// `Σ_l (−f_n + m_S A∥) I_z^(l) + m_S A⊥ I_x^(l)` on the nuclear register, in MHz.
pub fn sector_hamiltonian(system: &SpinSystem, m_s: f64) -> Result<ComplexMatrix, ModelError> {
    system.electron.sector_index(m_s)?;
    let layout = system.nuclear_layout();
    let mut h = ComplexMatrix::zeros(layout.dim());
    for l in 0..system.nuclear_count() {
        let (cz, cx) = system.sector_coefficients(l, m_s);
        let iz = embed_single_spin(&pauli::spin_z(), Slot::Nucleus(l), layout).expect("slot in range");
        let ix = embed_single_spin(&pauli::spin_x(), Slot::Nucleus(l), layout).expect("slot in range");
        h = h.add(&iz.scale(C64::new(cz, 0.0))).add(&ix.scale(C64::new(cx, 0.0)));
    }
    Ok(h)
}

/// Precession frequency `sqrt((f_n − m_S A∥)² + (m_S A⊥)²)` of one nucleus in one sector.
///
/// For S = 1/2 the sectors m_S = ∓1/2 give the two `f_n ± A∥/2` branches.
pub fn precession_frequency(f_n: f64, a_par: f64, a_perp: f64, m_s: f64) -> f64 {
    libm::hypot(f_n - m_s * a_par, m_s * a_perp)
}

/// Tilt of the nuclear quantisation axis away from B0.
pub fn tilt_angle(f_n: f64, a_perp: f64, kind: ElectronKind) -> f64 {
    match kind {
        ElectronKind::SpinHalf => libm::atan(a_perp / (2.0 * f_n)),
        ElectronKind::NvEffective => libm::atan(a_perp / f_n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Species {
    #[cfg_attr(feature = "serde", serde(rename = "e"))]
    Electron,
    #[cfg_attr(feature = "serde", serde(rename = "13C"))]
    C13,
    #[cfg_attr(feature = "serde", serde(rename = "1H"))]
    H1,
}

impl core::str::FromStr for Species {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "electron" => Ok(Species::Electron),
            "13C" | "C13" | "c13" => Ok(Species::C13),
            "1H" | "H1" | "h1" | "proton" => Ok(Species::H1),
            other => Err(ModelError::UnknownSpecies(other.into())),
        }
    }
}

/// Gyromagnetic ratios (γ/2π) in MHz/mT and the dipolar prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub gamma_e: f64,
    pub gamma_c13: f64,
    pub gamma_h1: f64,
    /// `μ0 h / 4π` in SI units (J·m/A² · J·s → T·m³·Hz² scale).
    pub mu0_h_over_4pi: f64,
}

impl PhysicalConstants {
    pub const CODATA: Self =
        Self { gamma_e: 28.0249, gamma_c13: 10.7084e-3, gamma_h1: 42.5775e-3, mu0_h_over_4pi: 1e-7 * 6.626_070_15e-34 };

    pub fn gamma(&self, species: Species) -> f64 {
        match species {
            Species::Electron => self.gamma_e,
            Species::C13 => self.gamma_c13,
            Species::H1 => self.gamma_h1,
        }
    }

    /// `μ0 h γ_e γ_n / (4π r³)` in MHz for a distance in nm.
    pub fn dipolar_prefactor(&self, nuclear: Species, r_nm: f64) -> f64 {
        // γ in MHz/mT == 1e9 Hz/T
        let gamma_e_si = self.gamma_e * 1e9;
        let gamma_n_si = self.gamma(nuclear) * 1e9;
        let r_m = r_nm * 1e-9;
        self.mu0_h_over_4pi * gamma_e_si * gamma_n_si / (r_m * r_m * r_m) * 1e-6
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Larmor frequency `γ B0` in MHz.
pub fn larmor_from_field(b0_mt: f64, species: Species) -> Result<f64, ModelError> {
    if !(b0_mt >= 0.0 && b0_mt.is_finite()) {
        return Err(ModelError::Field(b0_mt));
    }
    Ok(PhysicalConstants::CODATA.gamma(species) * b0_mt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::hermitian_eigen;
    use alloc::vec;

    fn single(a_par: f64, a_perp: f64, f_n: f64, kind: ElectronKind) -> SpinSystem {
        SpinSystem::new(ElectronModel::new(kind), vec![NuclearSpinParams::new(a_par, a_perp)], f_n).unwrap()
    }

    #[test]
    fn hyperfine_free_sector_is_bare_larmor() {
        let sys = SpinSystem::new(
            ElectronModel::nv_effective(),
            vec![NuclearSpinParams::new(-0.0113, 0.0592), NuclearSpinParams::new(0.02, 0.01)],
            0.428,
        )
        .unwrap();
        let h = sector_hamiltonian(&sys, 0.0).unwrap();
        let expected =
            ComplexMatrix::from_diagonal(&[C64::new(-0.428, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.428, 0.0)]);
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn single_nucleus_hand_expansion() {
        let sys = single(0.0, 0.3, 1.0, ElectronKind::SpinHalf);
        let h = sector_hamiltonian(&sys, 0.5).unwrap();
        let expected = ComplexMatrix::mat2(C64::new(-0.5, 0.0), C64::new(0.075, 0.0), C64::new(0.075, 0.0), C64::new(0.5, 0.0));
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn unknown_sector_rejected() {
        let sys = single(0.0, 0.3, 1.0, ElectronKind::SpinHalf);
        assert_eq!(sector_hamiltonian(&sys, -1.0), Err(ModelError::UnknownSector(-1.0)));
    }

    #[test]
    fn sector_eigenvalues_match_precession() {
        for &(kind, a_par, a_perp) in &[
            (ElectronKind::SpinHalf, 0.2, 0.3),
            (ElectronKind::NvEffective, -0.0113, 0.0592),
            (ElectronKind::SpinHalf, -0.4, 0.0),
        ] {
            let sys = single(a_par, a_perp, 0.9, kind);
            for m_s in sys.electron.sector_values() {
                let eig = hermitian_eigen(&sector_hamiltonian(&sys, m_s).unwrap()).unwrap();
                let f_p = precession_frequency(0.9, a_par, a_perp, m_s);
                assert!((eig.values[0] + f_p / 2.0).abs() < 1e-10);
                assert!((eig.values[1] - f_p / 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn precession_examples() {
        assert_eq!(precession_frequency(1.0, 0.0, 0.0, 0.5), 1.0);
        assert!((precession_frequency(1.0, 0.0, 0.3, 0.5) - 1.011_187).abs() < 1e-6);
        let nv = precession_frequency(0.428, -0.0113, 0.0592, -1.0);
        assert!((nv - libm::sqrt((0.428 - 0.0113f64).powi(2) + 0.0592f64.powi(2))).abs() < 1e-15);
        // printed branches f_n ± A∥/2
        let (f_n, a_par, a_perp) = (1.0, 0.2, 0.3);
        let plus = libm::sqrt((f_n + a_par / 2.0f64).powi(2) + (a_perp / 2.0f64).powi(2));
        let minus = libm::sqrt((f_n - a_par / 2.0f64).powi(2) + (a_perp / 2.0f64).powi(2));
        assert!((precession_frequency(f_n, a_par, a_perp, -0.5) - plus).abs() < 1e-15);
        assert!((precession_frequency(f_n, a_par, a_perp, 0.5) - minus).abs() < 1e-15);
    }

    #[test]
    fn tilt_examples() {
        assert_eq!(tilt_angle(1.0, 0.0, ElectronKind::SpinHalf), 0.0);
        assert!((tilt_angle(1.0, 0.3, ElectronKind::SpinHalf) - 0.148_889_947_609_497).abs() < 1e-12);
        assert!((tilt_angle(0.428, 0.0135, ElectronKind::NvEffective) - libm::atan(0.0135 / 0.428)).abs() < 1e-15);
        let mut last = -1.0;
        for k in 0..50 {
            let t = tilt_angle(0.5, k as f64 * 0.05, ElectronKind::NvEffective);
            assert!(t > last && t < core::f64::consts::FRAC_PI_2);
            last = t;
        }
    }

    #[test]
    fn larmor_calibration_points() {
        assert!((larmor_from_field(23.4866, Species::H1).unwrap() - 1.0).abs() < 1e-3);
        assert!((larmor_from_field(40.0, Species::C13).unwrap() - 0.428).abs() < 0.005 * 0.428);
        assert_eq!(larmor_from_field(0.0, Species::C13).unwrap(), 0.0);
        assert!(larmor_from_field(-1.0, Species::C13).is_err());
        assert!("14N".parse::<Species>().is_err());
    }

    #[test]
    fn system_validation() {
        let e = ElectronModel::spin_half();
        assert_eq!(SpinSystem::new(e, vec![], 1.0), Err(ModelError::NuclearCount(0)));
        assert_eq!(SpinSystem::new(e, vec![NuclearSpinParams::new(0.0, 0.1); 13], 1.0), Err(ModelError::NuclearCount(13)));
        assert!(SpinSystem::new(e, vec![NuclearSpinParams::new(0.0, -0.1)], 1.0).is_err());
        assert!(SpinSystem::new(e, vec![NuclearSpinParams::new(0.0, 0.1)], 0.0).is_err());
    }

    #[test]
    fn dipolar_prefactor_order_of_magnitude() {
        let p = PhysicalConstants::CODATA.dipolar_prefactor(Species::C13, 1.0);
        assert!((p - 0.0199).abs() < 0.0005, "prefactor {p}");
        let half = PhysicalConstants::CODATA.dipolar_prefactor(Species::C13, 2.0);
        assert!((p / half - 8.0).abs() < 1e-12);
    }
}
