//! Transition amplitudes of two identical nuclei.
//!
//! The nuclear blocks of a two-nucleus propagator expand as
//! `T_α = α_+ Σ⁺ + α_- Σ⁻ + α_{+,z} Z⁺ + α_{-,z} Z⁻` and
//! `T_β = β_e 1 + β_z S_z + β_zz σ_z⊗σ_z + β_{+,-} F + β_{+,+} G`, where
//! `Σ^± = σ_±⊗1 + 1⊗σ_±`, `Z^± = σ_±⊗σ_z + σ_z⊗σ_±`, `S_z = σ_z⊗1 + 1⊗σ_z`,
//! `F = σ_+⊗σ_- + σ_-⊗σ_+` and `G = σ_+⊗σ_+ + σ_-⊗σ_-`, with
//! `σ_+ = [[0, 1], [0, 0]]` in the up/down basis.
//!
//! For spin-1/2 electrons, `A_∥ = 0` and `N_pol = 1` the amplitudes depend only
//! on the tilt `θ = atan(A_⊥ / 2 f_n)` and the phase `φ = 2π f_p τ / 4`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use libm::{cos, sin, tan};
use thiserror::Error;

use crate::model::{precession_frequency, ElectronModel, NuclearSpinParams, SpinSystem};
use crate::sequences::{sequence_unitary, Protocol, SequenceError, SequenceSpec};
use crate::spinalg::{pauli, ComplexMatrix, C64};

/// Reconstruction residual above which the two-nucleus expansion is rejected.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmplitudeError {
    #[error("amplitude expansion needs exactly two nuclei (register dimension {0})")]
    NotTwoNuclei(usize),
    #[error("amplitude expansion incomplete (residual {0:.3e}); nuclei not identical?")]
    Incomplete(f64),
    #[error("scan grid is empty or not finite")]
    BadGrid,
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionAmplitudeSet {
    pub alpha_plus: C64,
    pub alpha_minus: C64,
    pub alpha_plus_z: C64,
    pub alpha_minus_z: C64,
    pub beta_e: C64,
    pub beta_z: C64,
    pub beta_zz: C64,
    pub beta_pm: C64,
    pub beta_pp: C64,
}

/// Column labels matching [`TransitionAmplitudeSet::magnitudes`].
pub const MAGNITUDE_LABELS: [&str; 9] = [
    "abs_alpha_minus",
    "abs_alpha_plus",
    "abs_alpha_plus_z",
    "abs_alpha_minus_z",
    "abs_beta_pm",
    "abs_beta_pp",
    "abs_beta_e",
    "abs_beta_z",
    "abs_beta_zz",
];

impl TransitionAmplitudeSet {
    pub fn magnitudes(&self) -> [f64; 9] {
        [
            self.alpha_minus.norm(),
            self.alpha_plus.norm(),
            self.alpha_plus_z.norm(),
            self.alpha_minus_z.norm(),
            self.beta_pm.norm(),
            self.beta_pp.norm(),
            self.beta_e.norm(),
            self.beta_z.norm(),
            self.beta_zz.norm(),
        ]
    }

    pub fn values(&self) -> [C64; 9] {
        [
            self.alpha_plus,
            self.alpha_minus,
            self.alpha_plus_z,
            self.alpha_minus_z,
            self.beta_e,
            self.beta_z,
            self.beta_zz,
            self.beta_pm,
            self.beta_pp,
        ]
    }

    /// Operator pairs in the order of [`values`](Self::values).
    pub fn basis() -> [ComplexMatrix; 9] {
        let one = pauli::identity();
        let (sp, sm, sz) = (pauli::sigma_plus(), pauli::sigma_minus(), pauli::sigma_z());
        let sym = |a: &ComplexMatrix, b: &ComplexMatrix| a.kron(b).add(&b.kron(a));
        [
            sym(&sp, &one),
            sym(&sm, &one),
            sym(&sp, &sz),
            sym(&sm, &sz),
            ComplexMatrix::identity(4),
            sym(&sz, &one),
            sz.kron(&sz),
            sym(&sp, &sm),
            sp.kron(&sp).add(&sm.kron(&sm)),
        ]
    }

    /// `(T_α, T_β)` rebuilt from the coefficients.
    pub fn reconstruct(&self) -> (ComplexMatrix, ComplexMatrix) {
        let basis = Self::basis();
        let values = self.values();
        let mut t_alpha = ComplexMatrix::zeros(4);
        let mut t_beta = ComplexMatrix::zeros(4);
        for (k, (b, v)) in basis.iter().zip(values).enumerate() {
            let term = b.scale(v);
            if k < 4 {
                t_alpha = t_alpha.add(&term);
            } else {
                t_beta = t_beta.add(&term);
            }
        }
        (t_alpha, t_beta)
    }
}

/// Expansion together with what it failed to capture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction {
    pub amplitudes: TransitionAmplitudeSet,
    /// `max |T − reconstruction|` over both blocks.
    pub residual: f64,
    /// `max |T_α − P T_α P|` with `P` the nuclear swap.
    pub antisymmetric: f64,
}

/// Hilbert–Schmidt projection of the nuclear blocks of a two-nucleus propagator.
pub fn extract_with_residuals(u: &ComplexMatrix) -> Result<Extraction, AmplitudeError> {
    if u.dim() != 8 {
        return Err(AmplitudeError::NotTwoNuclei(u.dim()));
    }
    let t_alpha = u.block(4, 0, 4);
    let t_beta = u.block(0, 0, 4);
    let basis = TransitionAmplitudeSet::basis();
    let coeff: Vec<C64> = basis
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let block = if k < 4 { &t_alpha } else { &t_beta };
            b.hs_inner(block) / b.hs_inner(b)
        })
        .collect();
    let amplitudes = TransitionAmplitudeSet {
        alpha_plus: coeff[0],
        alpha_minus: coeff[1],
        alpha_plus_z: coeff[2],
        alpha_minus_z: coeff[3],
        beta_e: coeff[4],
        beta_z: coeff[5],
        beta_zz: coeff[6],
        beta_pm: coeff[7],
        beta_pp: coeff[8],
    };
    let (ra, rb) = amplitudes.reconstruct();
    let residual = ra.max_abs_diff(&t_alpha).max(rb.max_abs_diff(&t_beta));
    let swap = ComplexMatrix::from_fn(4, |i, j| {
        let swapped = ((j & 1) << 1) | (j >> 1);
        C64::new(if i == swapped { 1.0 } else { 0.0 }, 0.0)
    });
    let antisymmetric = swap.matmul(&t_alpha).matmul(&swap).max_abs_diff(&t_alpha);
    Ok(Extraction { amplitudes, residual, antisymmetric })
}

/// Coefficients of the two-nucleus expansion; rejects incomplete expansions.
pub fn extract_amplitudes(u: &ComplexMatrix) -> Result<TransitionAmplitudeSet, AmplitudeError> {
    let e = extract_with_residuals(u)?;
    if !(e.residual <= RECONSTRUCTION_TOL) {
        return Err(AmplitudeError::Incomplete(e.residual));
    }
    Ok(e.amplitudes)
}

/// `φ = 2π f_p τ / 4`.
pub fn phase_angle(f_p: f64, tau_pol: f64) -> f64 {
    2.0 * PI * f_p * tau_pol / 4.0
}

/// Two identical spin-1/2-coupled nuclei at `f_n = 1 MHz` realising `(φ, θ)` with `N_pol = 1`.
pub fn phase_tilt_setup(phi: f64, theta: f64) -> Result<(SpinSystem, SequenceSpec), AmplitudeError> {
    let a_perp = 2.0 * tan(theta);
    let f_p = 1.0 / cos(theta);
    let nuclei = vec![NuclearSpinParams::new(0.0, a_perp); 2];
    let system = SpinSystem::new(ElectronModel::spin_half(), nuclei, 1.0).map_err(SequenceError::from)?;
    let tau = 4.0 * phi / (2.0 * PI * f_p);
    Ok((system, SequenceSpec::new(Protocol::PulsePol, tau, 1)))
}

/// Amplitudes extracted from the numerically built PulsePol propagator at `(φ, θ)`.
pub fn numeric_amplitudes(phi: f64, theta: f64) -> Result<TransitionAmplitudeSet, AmplitudeError> {
    let (system, spec) = phase_tilt_setup(phi, theta)?;
    extract_amplitudes(&sequence_unitary(&system, &spec)?)
}

fn pw(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}

/// Exact trigonometric components of the amplitudes with closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormAmplitudes {
    pub alpha_x: C64,
    pub alpha_y: C64,
    pub alpha_xz: C64,
    pub alpha_yz: C64,
    pub beta_xx: C64,
    pub beta_yy: C64,
}

impl ClosedFormAmplitudes {
    pub fn alpha_plus(&self) -> C64 {
        self.alpha_x - C64::i() * self.alpha_y
    }

    pub fn alpha_minus(&self) -> C64 {
        self.alpha_x + C64::i() * self.alpha_y
    }

    /// `α_yz − i α_xz`: the z-components combine with their roles exchanged.
    pub fn alpha_plus_z(&self) -> C64 {
        self.alpha_yz - C64::i() * self.alpha_xz
    }

    pub fn alpha_minus_z(&self) -> C64 {
        self.alpha_yz + C64::i() * self.alpha_xz
    }

    pub fn beta_pm(&self) -> C64 {
        self.beta_xx + self.beta_yy
    }

    pub fn beta_pp(&self) -> C64 {
        self.beta_xx - self.beta_yy
    }

    /// `[α_+, α_-, α_{+,z}, α_{-,z}, β_{+,-}, β_{+,+}]`.
    pub fn combined(&self) -> [C64; 6] {
        [self.alpha_plus(), self.alpha_minus(), self.alpha_plus_z(), self.alpha_minus_z(), self.beta_pm(), self.beta_pp()]
    }
}

/// Exact closed forms at phase `phi` and tilt `theta` (`0 ≤ θ < π/2`).
#[rustfmt::skip]
pub fn analytic_amplitudes(phi: f64, theta: f64) -> ClosedFormAmplitudes {
    let (p, t) = (phi, theta);
    let c = cos;
    let s = sin;
    let h = p / 2.0;

    let ax = 8.0*c(h)*pw(s(h), 5)*(-((2958.0+5514.0*c(p)+4520.0*c(2.0*p)+3325.0*c(3.0*p)+1610.0*c(4.0*p)+505.0*c(5.0*p))*s(5.0*t))
        + 8.0*(889.0+1596.0*c(p)+1096.0*c(2.0*p)+532.0*c(3.0*p)+175.0*c(4.0*p))*pw(s(h), 2)*s(7.0*t)
        - 64.0*c(p)*(153.0+222.0*c(p)+73.0*c(2.0*p))*pw(s(h), 4)*s(9.0*t)
        + 64.0*(67.0+96.0*c(p)+33.0*c(2.0*p))*pw(s(h), 6)*s(11.0*t))
        + pw(s(p), 3)*(4.0*(302.0-398.0*c(p)+464.0*c(2.0*p)-29.0*c(3.0*p)+130.0*c(4.0*p)+43.0*c(5.0*p))*s(t)
        + (598.0-1258.0*c(p)+1592.0*c(2.0*p)+47.0*c(3.0*p)+626.0*c(4.0*p)+443.0*c(5.0*p))*s(3.0*t)
        - 1536.0*pw(s(h), 10)*s(13.0*t));

    let ay = pw(s(h), 4)*(pw(c(h), 2)*((-278.0+2042.0*c(p)+2984.0*c(2.0*p)+6001.0*c(3.0*p)+3182.0*c(4.0*p)+2453.0*c(5.0*p))*s(2.0*t)
        + (-1542.0+1646.0*c(p)-856.0*c(2.0*p)+4099.0*c(3.0*p)+1886.0*c(4.0*p)+2959.0*c(5.0*p))*s(4.0*t)
        - 64.0*(115.0+156.0*c(p)+65.0*c(2.0*p))*pw(s(h), 6)*s(10.0*t)
        - 768.0*(3.0+7.0*c(p))*pw(s(h), 8)*s(12.0*t))
        + pw(s(p), 2)*((-2775.0-4168.0*c(p)-4812.0*c(2.0*p)-2808.0*c(3.0*p)-1821.0*c(4.0*p))*s(6.0*t)
        + 896.0*pw(s(h), 8)*s(14.0*t))
        + 4.0*pw(s(h), 4)*((4331.0+7496.0*c(p)+5116.0*c(2.0*p)+2424.0*c(3.0*p)+601.0*c(4.0*p))*s(8.0*t)
        - 64.0*pw(s(h), 8)*s(16.0*t)));

    let axz = c(h)*pw(c(t), 4)*pw(s(h), 5)*(18.0+61.0*c(p)+30.0*c(2.0*p)+19.0*c(3.0*p)
        - 4.0*(1.0+3.0*c(p))*(17.0+11.0*c(p))*c(2.0*t)*pw(s(h), 2)
        - 16.0*(5.0+3.0*c(p))*c(4.0*t)*pw(s(h), 4)
        + 16.0*c(6.0*t)*pw(s(h), 6))*s(t)*pw(c(p)*pw(c(t), 2)+pw(s(t), 2), 2);

    let ayz = (1.0+3.0*c(p))*(823.0+1408.0*c(p)+956.0*c(2.0*p)+704.0*c(3.0*p)+205.0*c(4.0*p))*s(2.0*t)
        + 4.0*((1.0+3.0*c(p))*(25.0+142.0*c(p)+120.0*c(2.0*p)+146.0*c(3.0*p)+79.0*c(4.0*p))*s(4.0*t)
        - (1.0+3.0*c(p))*(326.0+659.0*c(p)+522.0*c(2.0*p)+285.0*c(3.0*p))*pw(s(h), 2)*s(6.0*t)
        + 32.0*(64.0+121.0*c(p)+72.0*c(2.0*p)+31.0*c(3.0*p))*pw(s(h), 4)*s(8.0*t)
        - 8.0*(233.0+356.0*c(p)+179.0*c(2.0*p))*pw(s(h), 6)*s(10.0*t)
        + 384.0*(2.0+3.0*c(p))*pw(s(h), 8)*s(12.0*t)
        - 192.0*pw(s(h), 10)*s(14.0*t));

    let bxx_re = 4.0*(481.0+744.0*c(p)+436.0*c(2.0*p)+216.0*c(3.0*p)+43.0*c(4.0*p))
        + (653.0+952.0*c(p)+1316.0*c(2.0*p)+648.0*c(3.0*p)+271.0*c(4.0*p))*c(2.0*t)
        - 2.0*(931.0+1784.0*c(p)+700.0*c(2.0*p)+456.0*c(3.0*p)-31.0*c(4.0*p))*c(4.0*t)
        - (497.0+1176.0*c(p)+1076.0*c(2.0*p)+936.0*c(3.0*p)+155.0*c(4.0*p))*c(6.0*t)
        + 16.0*(114.0+221.0*c(p)+126.0*c(2.0*p)+51.0*c(3.0*p))*c(8.0*t)*pw(s(h), 2)
        - 16.0*(115.0+188.0*c(p)+113.0*c(2.0*p))*c(10.0*t)*pw(s(h), 4)
        + 384.0*(3.0+5.0*c(p))*c(12.0*t)*pw(s(h), 6)
        - 384.0*c(14.0*t)*pw(s(h), 8);
    let bxx_im = 256.0*(2.0+c(2.0*t)-2.0*c(4.0*t)-c(6.0*t));

    let byy_re = 167.0-24.0*c(p)-340.0*c(2.0*p)-40.0*c(3.0*p)+109.0*c(4.0*p)
        + 256.0*pw(c(h), 2)*((30.0+34.0*c(p))*c(2.0*t)+(9.0+5.0*c(p))*c(4.0*t))*pw(s(h), 4)
        + 1024.0*pw(c(h), 2)*c(6.0*t)*pw(s(h), 6)
        - 128.0*c(8.0*t)*pw(s(h), 8);
    let byy_factor = -2.0*pw(c(h), 2)*s(2.0*t)+pw(s(h), 2)*s(4.0*t);

    let z = |re: f64, im: f64| C64::new(re, im);
    ClosedFormAmplitudes {
        alpha_x: z(-1.0, 1.0) / 4096.0 * ax,
        alpha_y: z(-1.0, -1.0) / 2048.0 * ay,
        alpha_xz: z(2.0, -2.0) * axz,
        alpha_yz: z(0.0, -1.0) / 512.0 * z(1.0, -1.0) * pw(c(h), 2) * pw(s(h), 4) * ayz,
        beta_xx: z(1.0, -1.0) / 256.0 * pw(c(h), 2) * pw(s(h), 6) * z(bxx_re, bxx_im),
        beta_yy: z(1.0, 1.0) / 256.0 * pw(s(h), 4) * z(byy_re, -128.0) * pw(byy_factor, 2),
    }
}

/// Expansions to third order in `θ` (second order for the β's).
#[rustfmt::skip]
pub fn series_amplitudes(phi: f64, theta: f64) -> TransitionAmplitudeSet {
    let (p, t) = (phi, theta);
    let c = cos;
    let s = sin;
    let h = p / 2.0;
    let z = |re: f64, im: f64| C64::new(re, im);
    let t3 = t * t * t;

    let a_cos = 19.0*c(3.0*h)-53.0*c(5.0*h)+38.0*c(7.0*h)+38.0*c(9.0*h)-29.0*c(11.0*h)+43.0*c(13.0*h);
    let a_sin = 20.0*s(3.0*h)-64.0*s(5.0*h)+60.0*s(7.0*h)-60.0*s(9.0*h)+16.0*s(11.0*h)+28.0*s(13.0*h);
    let a_lead = c(2.0*p)+2.0*c(4.0*p)+c(6.0*p);
    let a_skew = s(2.0*p)-s(6.0*p);
    let a1 = z(-4.0, 4.0)*t*c(h)*pw(s(h), 3);
    let a3 = z(1.0, -1.0)/3.0*t3*pw(s(h), 3);
    let alpha_plus = a1*(a_lead-a_skew) + a3*(a_cos+a_sin);
    let alpha_minus = a1*(a_lead+a_skew) + a3*(a_cos-a_sin);

    let z_cos = 8.0*c(h)+8.0*c(3.0*h)+56.0*c(5.0*h)-38.0*c(7.0*h)+46.0*c(9.0*h);
    let z_sin = 36.0*s(3.0*h)-60.0*s(5.0*h)+25.0*(s(7.0*h)+s(9.0*h));
    let z1 = z(-32.0, -32.0)*t*pw(c(h), 2)*pw(s(h), 4);
    let z3 = z(8.0, 8.0)/3.0*t3*c(h)*c(p)*pw(s(h), 4);
    let alpha_plus_z = z1*(c(p)-s(p))*pw(1.0+c(2.0*p)+s(2.0*p), 2) + z3*(z_cos+z_sin);
    let alpha_minus_z = z1*(c(p)+s(p))*pw(1.0+c(2.0*p)-s(2.0*p), 2) + z3*(z_cos-z_sin);

    let t2 = t * t;
    let beta_e = -pw(c(4.0*p), 2) + z(0.0, 2.0)*t2*(z(1.0, 6.0)*c(p)-z(2.0, -4.0)*c(2.0*p)+z(1.0, 2.0)*c(3.0*p)
        + z(0.0, 8.0)*c(4.0*p)+z(1.0, 2.0)*c(5.0*p)-z(2.0, -4.0)*c(6.0*p)+z(1.0, 6.0)*c(7.0*p))*pw(s(h), 2);
    // coefficient of the sum σ_z⊗1 + 1⊗σ_z
    let beta_z = 0.5*(z(0.0, -1.0)*s(8.0*p) + t2*(2.0*s(p)-z(3.0, 1.0)*s(2.0*p)+z(2.0, 4.0)*s(3.0*p)+z(1.0, -6.0)*s(4.0*p)
        - z(6.0, -4.0)*s(5.0*p)+z(9.0, 1.0)*s(6.0*p)-z(6.0, 8.0)*s(7.0*p)+z(1.5, 6.0)*s(8.0*p)));
    let beta_zz = z(0.0, -1.0)*t2*(z(4.0, 4.0)*c(p)-z(6.0, 1.0)*c(2.0*p)+4.0*c(3.0*p)-4.0*c(5.0*p)
        + z(6.0, 1.0)*c(6.0*p)-z(4.0, 4.0)*c(7.0*p)+z(1.0, 3.0)*(c(8.0*p)-1.0)) + pw(s(4.0*p), 2);
    let beta_pm = 8.0*t2*(2.0-z(0.0, 3.0)*c(2.0*p)-2.0*c(4.0*p)+z(0.0, 1.0)*c(6.0*p))*pw(s(h), 4);
    let beta_pp = 8.0*t2*(c(2.0*p)+z(0.0, 2.0)*c(4.0*p)-c(6.0*p))*pw(s(h), 4);

    TransitionAmplitudeSet { alpha_plus, alpha_minus, alpha_plus_z, alpha_minus_z, beta_e, beta_z, beta_zz, beta_pm, beta_pp }
}

/// Small-`θ` amplitudes at the resonance `φ = 3π/4`.
pub fn resonance_limits(theta: f64) -> TransitionAmplitudeSet {
    let z = |re: f64, im: f64| C64::new(re, im);
    let (t, t2, t3) = (theta, theta * theta, theta * theta * theta);
    TransitionAmplitudeSet {
        alpha_plus: z(-1.0, 1.0) / 2.0 * (5.0 + 3.0 * SQRT_2) * t3,
        alpha_minus: 2.0 * z(1.0, -1.0) * (1.0 + SQRT_2) * t - z(1.0, -1.0) / 6.0 * (239.0 + 173.0 * SQRT_2) * t3,
        alpha_plus_z: -2.0 * z(1.0, 1.0) * (7.0 + 5.0 * SQRT_2) * t3,
        alpha_minus_z: -2.0 * z(1.0, 1.0) * (5.0 + 3.0 * SQRT_2) * t3,
        beta_e: z(-1.0 + (12.0 + 8.0 * SQRT_2) * t2, 0.0),
        beta_z: (z(6.0, 1.0) + z(4.0, 2.0) * SQRT_2) * t2,
        beta_zz: z(0.0, 0.0),
        beta_pm: z((12.0 + 8.0 * SQRT_2) * t2, 0.0),
        beta_pp: z(0.0, -2.0 * (3.0 + 2.0 * SQRT_2) * t2),
    }
}

/// Quantity varied along an amplitude spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum ScanVariable {
    /// Pulse interval in µs.
    Tau,
    /// Target frequency in MHz; sets `τ = 3 / (2 f)`.
    TargetFrequency,
    /// Common `A_⊥` of both nuclei in MHz; with `track_resonance`, `τ = 3 / (2 f_p(A_⊥))`.
    APerp { track_resonance: bool },
}

/// Point of a spectrum: the system and sequence at one scan value.
pub fn scan_point(
    template: &SpinSystem,
    spec: &SequenceSpec,
    variable: ScanVariable,
    value: f64,
) -> Result<(SpinSystem, SequenceSpec), AmplitudeError> {
    if !value.is_finite() {
        return Err(AmplitudeError::BadGrid);
    }
    let mut spec = spec.clone();
    let mut system = template.clone();
    match variable {
        ScanVariable::Tau => spec.tau_pol = value,
        ScanVariable::TargetFrequency => {
            spec.tau_pol = 1.5 / value;
            spec.target_frequency = None;
        }
        ScanVariable::APerp { track_resonance } => {
            let nuclei: Vec<NuclearSpinParams> =
                template.nuclei().iter().map(|n| NuclearSpinParams { a_perp: value, ..n.clone() }).collect();
            system = template.with_nuclei(nuclei).map_err(SequenceError::from)?;
            if track_resonance {
                // the initial sector's field sets the precession frequency
                let m = system.electron.initial_sector();
                let f_p = precession_frequency(system.larmor(), system.nuclei()[0].a_par, value, m);
                spec.tau_pol = 1.5 / f_p;
                spec.target_frequency = None;
            }
        }
    }
    Ok((system, spec))
}

/// Amplitudes at one scan value.
pub fn spectrum_point(
    template: &SpinSystem,
    spec: &SequenceSpec,
    variable: ScanVariable,
    value: f64,
) -> Result<TransitionAmplitudeSet, AmplitudeError> {
    let (system, spec) = scan_point(template, spec, variable, value)?;
    extract_amplitudes(&sequence_unitary(&system, &spec)?)
}

/// `(value, amplitudes)` for every grid value.
pub fn amplitude_spectrum(
    template: &SpinSystem,
    spec: &SequenceSpec,
    variable: ScanVariable,
    grid: &[f64],
) -> Result<Vec<(f64, TransitionAmplitudeSet)>, AmplitudeError> {
    if grid.is_empty() {
        return Err(AmplitudeError::BadGrid);
    }
    grid.iter().map(|&v| spectrum_point(template, spec, variable, v).map(|a| (v, a))).collect()
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

/// Refined location of an extremum of `|amplitude|`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Extremum {
    pub position: f64,
    pub magnitude: f64,
    /// Grid index of the raw extremum.
    pub index: usize,
    /// Local grid spacing, reported as the position uncertainty.
    pub uncertainty: f64,
}

/// Extremum of `magnitudes` over `grid`, refined by a parabola through `|·|²` at the
/// three surrounding points; `|·|²` is smooth at both peaks and simple zeros.
pub fn locate_extremum(grid: &[f64], magnitudes: &[f64], kind: ExtremumKind) -> Option<Extremum> {
    if grid.len() != magnitudes.len() || grid.is_empty() {
        return None;
    }
    let better = |a: f64, b: f64| match kind {
        ExtremumKind::Maximum => a > b,
        ExtremumKind::Minimum => a < b,
    };
    let mut index = 0;
    for (k, &m) in magnitudes.iter().enumerate() {
        if better(m, magnitudes[index]) {
            index = k;
        }
    }
    let spacing = if grid.len() > 1 {
        let k = index.min(grid.len() - 2);
        (grid[k + 1] - grid[k]).abs()
    } else {
        0.0
    };
    let raw = Extremum { position: grid[index], magnitude: magnitudes[index], index, uncertainty: spacing };
    if index == 0 || index + 1 == grid.len() {
        return Some(raw);
    }
    let (x0, x1, x2) = (grid[index - 1], grid[index], grid[index + 1]);
    let (y0, y1, y2) = (pw(magnitudes[index - 1], 2), pw(magnitudes[index], 2), pw(magnitudes[index + 1], 2));
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a == 0.0 || !a.is_finite() {
        return Some(raw);
    }
    let vertex = -b / (2.0 * a);
    if !(vertex >= x0 && vertex <= x2) {
        return Some(raw);
    }
    let c = y1 - a * x1 * x1 - b * x1;
    let y = (a * vertex * vertex + b * vertex + c).max(0.0);
    Some(Extremum { position: vertex, magnitude: libm::sqrt(y), ..raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_4;

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn no_coupling_has_no_alphas() {
        let set = numeric_amplitudes(1.1, 0.0).unwrap();
        for a in [set.alpha_plus, set.alpha_minus, set.alpha_plus_z, set.alpha_minus_z, set.beta_pm, set.beta_pp] {
            assert!(a.norm() < 1e-14);
        }
        let closed = analytic_amplitudes(1.1, 0.0);
        assert!(closed.combined()[..4].iter().all(|a| a.norm() < 1e-14));
    }

    #[test]
    fn extraction_matches_closed_forms_at_samples() {
        for (phi, theta) in [(3.0 * FRAC_PI_4, 0.15), (1.1, 0.2), (2.5, 0.05), (4.0, 0.25)] {
            let e = extract_with_residuals(&{
                let (sys, spec) = phase_tilt_setup(phi, theta).unwrap();
                sequence_unitary(&sys, &spec).unwrap()
            })
            .unwrap();
            assert!(e.residual < 1e-12 && e.antisymmetric < 1e-12);
            let a = e.amplitudes;
            let numeric = [a.alpha_plus, a.alpha_minus, a.alpha_plus_z, a.alpha_minus_z, a.beta_pm, a.beta_pp];
            assert!(max_diff(&numeric, &analytic_amplitudes(phi, theta).combined()) < 1e-12);
        }
    }

    #[test]
    fn extraction_rejects_distinct_nuclei() {
        let sys = SpinSystem::new(
            ElectronModel::spin_half(),
            vec![NuclearSpinParams::new(0.0, 0.3), NuclearSpinParams::new(0.1, 0.05)],
            1.0,
        )
        .unwrap();
        let u = sequence_unitary(&sys, &SequenceSpec::new(Protocol::PulsePol, 1.4, 1)).unwrap();
        assert!(matches!(extract_amplitudes(&u), Err(AmplitudeError::Incomplete(_))));
        assert!(matches!(extract_amplitudes(&ComplexMatrix::identity(4)), Err(AmplitudeError::NotTwoNuclei(4))));
    }

    #[test]
    fn resonance_forms_at_zero_and_leading_moduli() {
        let r = resonance_limits(0.0);
        assert_eq!(r.beta_e, C64::new(-1.0, 0.0));
        assert_eq!(r.beta_zz, C64::new(0.0, 0.0));
        let t = 1e-6;
        let r = resonance_limits(t);
        assert!((r.alpha_minus.norm() / t - 2.0 * SQRT_2 * (1.0 + SQRT_2)).abs() < 1e-6);
        assert!((r.beta_pp.norm() / (t * t) - 2.0 * (3.0 + 2.0 * SQRT_2)).abs() < 1e-9);
    }

    #[test]
    fn series_hand_values() {
        let s = series_amplitudes(1.3, 0.0);
        assert!((s.beta_e - C64::new(-pw(cos(5.2), 2), 0.0)).norm() < 1e-15);
        assert!(s.alpha_minus.norm() == 0.0 && s.alpha_plus_z.norm() == 0.0);
        let (phi, t) = (PI / 2.0, 0.1);
        let expected =
            8.0 * t * t * (C64::new(cos(PI), 0.0) + C64::new(0.0, 2.0) * cos(2.0 * PI) - cos(3.0 * PI)) * pw(sin(PI / 4.0), 4);
        assert!((series_amplitudes(phi, t).beta_pp - expected).norm() < 1e-15);
    }

    #[test]
    fn series_agrees_with_resonance_forms() {
        for t in [0.002, 0.004] {
            let s = series_amplitudes(3.0 * FRAC_PI_4, t);
            let r = resonance_limits(t);
            for (a, b) in s.values().iter().zip(r.values()) {
                assert!((a - b).norm() < 40.0 * pw(t, 4), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn extremum_refinement() {
        let grid = linspace(0.0, 2.0, 21);
        let peak: Vec<f64> = grid.iter().map(|x| 1.0 - (x - 1.03) * (x - 1.03)).map(|y: f64| libm::sqrt(y.max(0.0))).collect();
        let m = locate_extremum(&grid, &peak, ExtremumKind::Maximum).unwrap();
        assert!((m.position - 1.03).abs() < 1e-9 && (m.uncertainty - 0.1).abs() < 1e-12);
        let node: Vec<f64> = grid.iter().map(|x| (x - 0.77).abs()).collect();
        let n = locate_extremum(&grid, &node, ExtremumKind::Minimum).unwrap();
        assert!((n.position - 0.77).abs() < 1e-9 && n.magnitude < 1e-6);
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }
}
