//! Experiment configuration: TOML surface, validation and hashing.
//!
//! The contract is committed as `schema/config.schema.json`.

use crate::units::{Angle, Dimension, Field, Frequency, Length, Time};
use crate::CliError;
use nucpol_core::clusters::{CapMode, ClusterOptions, LatticeOptions, NATURAL_ABUNDANCE};
use nucpol_core::engine::RunMode;
use nucpol_core::model::{ElectronKind, Species};
use nucpol_core::sequences::Protocol;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

pub const MAX_REPETITIONS: usize = 10_000_000;
pub const MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemConfig,
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amplitudes: Vec<AmplitudeScanConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub electron: ElectronKind,
    /// Bare nuclear Larmor frequency; exclusive with `field`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub larmor: Option<Frequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Field>,
    #[serde(default = "default_species")]
    pub species: Species,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuclei: Option<Vec<NucleusConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<UniformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<ClusterBlock>,
}

fn default_species() -> Species {
    Species::C13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    pub a_par: Frequency,
    pub a_perp: Frequency,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// `count` identical nuclei.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformConfig {
    pub count: usize,
    pub a_par: Frequency,
    pub a_perp: Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    pub count: usize,
    #[serde(default = "default_n_nuc")]
    pub n_nuc: usize,
    #[serde(default = "default_radius")]
    pub radius: Length,
    #[serde(default = "default_abundance")]
    pub abundance: f64,
    #[serde(default = "default_cap")]
    pub a_perp_cap: Frequency,
    #[serde(default)]
    pub cap_mode: CapMode,
    #[serde(default = "default_bond")]
    pub bond_length: Length,
    #[serde(default)]
    pub include_nitrogen: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_n_nuc() -> usize {
    6
}
fn default_radius() -> Length {
    Length(2.0)
}
fn default_abundance() -> f64 {
    NATURAL_ABUNDANCE
}
fn default_cap() -> Frequency {
    Frequency(nucpol_core::clusters::A_PERP_CAP_MHZ)
}
fn default_bond() -> Length {
    Length(nucpol_core::clusters::BOND_LENGTH_NM)
}
fn default_attempts() -> usize {
    100_000
}

impl ClusterBlock {
    pub fn options(&self) -> ClusterOptions {
        ClusterOptions {
            radius: self.radius.0,
            abundance: self.abundance,
            n_nuc: self.n_nuc,
            a_perp_cap: self.a_perp_cap.0,
            cap_mode: self.cap_mode,
            lattice: LatticeOptions { bond_length: self.bond_length.0, include_nitrogen: self.include_nitrogen },
            max_attempts: self.max_attempts,
        }
    }
}

/// `"resonant"` or a pulse interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSetting {
    Resonant,
    Fixed(Time),
}

impl Serialize for TauSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TauSetting::Resonant => s.serialize_str("resonant"),
            TauSetting::Fixed(t) => t.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for TauSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text.trim() == "resonant" {
            return Ok(TauSetting::Resonant);
        }
        crate::units::parse_quantity(&text, Dimension::Time).map(|t| TauSetting::Fixed(Time(t))).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub protocol: Protocol,
    pub tau: TauSetting,
    /// Target frequency for `tau = "resonant"`; defaults to the first nucleus' precession frequency
    /// in the initial electron sector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Frequency>,
    #[serde(default = "one")]
    pub n_pol: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disentangle: Option<DisentangleConfig>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisentangleConfig {
    pub theta_e: Angle,
    /// Defaults to `2 N_pol τ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wait: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_modes")]
    pub modes: Vec<RunMode>,
    #[serde(default = "default_n_rep")]
    pub n_rep: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; excluded from the config hash.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Write the total polarization every `trajectory_stride` repetitions; 0 disables.
    #[serde(default)]
    pub trajectory_stride: usize,
}

fn default_modes() -> Vec<RunMode> {
    vec![RunMode::Coherent, RunMode::Incoherent]
}
fn default_n_rep() -> usize {
    1000
}
fn default_jobs() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { modes: default_modes(), n_rep: default_n_rep(), seed: 0, jobs: default_jobs(), trajectory_stride: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats() }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }
    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Common `A_⊥` of every nucleus; a resonant `tau` follows it.
    APerp,
    Tau,
    TargetFrequency,
    Field,
    Larmor,
    ThetaE,
}

impl SweepVariable {
    pub fn dimension(self) -> Dimension {
        match self {
            SweepVariable::APerp | SweepVariable::TargetFrequency | SweepVariable::Larmor => Dimension::Frequency,
            SweepVariable::Tau => Dimension::Time,
            SweepVariable::Field => Dimension::Field,
            SweepVariable::ThetaE => Dimension::Angle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub start: String,
    pub stop: String,
    pub points: usize,
}

impl RangeConfig {
    pub fn values(&self, dim: Dimension) -> Result<Vec<f64>, CliError> {
        let start = crate::units::parse_quantity(&self.start, dim).map_err(CliError::Config)?;
        let stop = crate::units::parse_quantity(&self.stop, dim).map_err(CliError::Config)?;
        if self.points == 0 || self.points > MAX_POINTS {
            return Err(CliError::Config(format!("range.points must be in 1..={MAX_POINTS}, got {}", self.points)));
        }
        Ok(nucpol_core::amplitudes::linspace(start, stop, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<SweepVariable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeConfig>,
    /// Repetitions per value, overriding `run.n_rep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rep: Option<Vec<usize>>,
    /// Replaces `system.uniform.count` with each entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuclear_counts: Option<Vec<usize>>,
}

impl SweepConfig {
    /// Canonical-unit values of the swept variable, or `None` when only counts vary.
    pub fn grid(&self) -> Result<Option<(SweepVariable, Vec<f64>)>, CliError> {
        let Some(variable) = self.variable else {
            if self.values.is_some() || self.range.is_some() {
                return Err(CliError::Config("sweep.values/range need sweep.variable".into()));
            }
            return Ok(None);
        };
        let dim = variable.dimension();
        let values = match (&self.values, &self.range) {
            (Some(v), None) => v
                .iter()
                .map(|s| crate::units::parse_quantity(s, dim).map_err(|e| CliError::Config(format!("sweep.values: {e}"))))
                .collect::<Result<Vec<_>, _>>()?,
            (None, Some(r)) => r.values(dim)?,
            _ => return Err(CliError::Config("sweep needs exactly one of `values` or `range`".into())),
        };
        if values.is_empty() {
            return Err(CliError::Config("sweep grid is empty".into()));
        }
        if let Some(n) = &self.n_rep {
            if n.len() != values.len() {
                return Err(CliError::Config(format!("sweep.n_rep has {} entries for {} values", n.len(), values.len())));
            }
        }
        Ok(Some((variable, values)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeVariable {
    Tau,
    TargetFrequency,
    APerp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeScanConfig {
    pub name: String,
    pub variable: AmplitudeVariable,
    /// For `a_perp`: keep the sequence resonant with the initial-sector precession frequency.
    #[serde(default)]
    pub track_resonance: bool,
    pub range: RangeConfig,
}

impl AmplitudeScanConfig {
    pub fn dimension(&self) -> Dimension {
        match self.variable {
            AmplitudeVariable::Tau => Dimension::Time,
            AmplitudeVariable::TargetFrequency | AmplitudeVariable::APerp => Dimension::Frequency,
        }
    }
}

/// Where the nuclei come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NucleiSource {
    Inline,
    Uniform,
    Clusters,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn nuclei_source(&self) -> Result<NucleiSource, CliError> {
        let s = &self.system;
        match (&s.nuclei, &s.uniform, &s.clusters) {
            (Some(_), None, None) => Ok(NucleiSource::Inline),
            (None, Some(_), None) => Ok(NucleiSource::Uniform),
            (None, None, Some(_)) => Ok(NucleiSource::Clusters),
            _ => Err(CliError::Config("system: exactly one of `nuclei`, `uniform` or `clusters` must be given".into())),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        let s = &self.system;
        if s.larmor.is_some() == s.field.is_some() {
            return cfg("system: exactly one of `larmor` or `field` must be given".into());
        }
        match self.nuclei_source()? {
            NucleiSource::Inline => {
                if s.nuclei.as_ref().is_some_and(|n| n.is_empty()) {
                    return cfg("system.nuclei: the nuclei list is empty".into());
                }
            }
            NucleiSource::Uniform => {
                if s.uniform.as_ref().is_some_and(|u| u.count == 0) {
                    return cfg("system.uniform.count must be positive".into());
                }
            }
            NucleiSource::Clusters => {
                let c = s.clusters.as_ref().expect("checked");
                if c.n_nuc == 0 || c.n_nuc > nucpol_core::model::MAX_NUCLEI {
                    return cfg(format!("system.clusters.n_nuc must be in 1..={}", nucpol_core::model::MAX_NUCLEI));
                }
                if !(0.0..=1.0).contains(&c.abundance) {
                    return cfg(format!("system.clusters.abundance {} outside [0, 1]", c.abundance));
                }
                if c.count > MAX_POINTS {
                    return cfg(format!("system.clusters.count exceeds {MAX_POINTS}"));
                }
            }
        }
        if self.sequence.n_pol == 0 {
            return cfg("sequence.n_pol must be positive".into());
        }
        if self.run.n_rep == 0 || self.run.n_rep > MAX_REPETITIONS {
            return cfg(format!("run.n_rep must be in 1..={MAX_REPETITIONS}"));
        }
        if self.run.modes.is_empty() {
            return cfg("run.modes is empty".into());
        }
        if self.run.jobs == 0 {
            return cfg("run.jobs must be positive".into());
        }
        if self.run.modes.contains(&RunMode::CoherentWithDisentangle) && self.sequence.disentangle.is_none() {
            let swept = self.sweep.as_ref().and_then(|s| s.variable) == Some(SweepVariable::ThetaE);
            if !swept {
                return cfg("run.modes: coherent_with_disentangle needs sequence.disentangle".into());
            }
        }
        if let Some(sweep) = &self.sweep {
            let grid = sweep.grid()?;
            if let Some(counts) = &sweep.nuclear_counts {
                if self.nuclei_source()? != NucleiSource::Uniform {
                    return cfg("sweep.nuclear_counts requires system.uniform".into());
                }
                if counts.is_empty() || counts.iter().any(|&c| c == 0 || c > nucpol_core::model::MAX_NUCLEI) {
                    return cfg(format!("sweep.nuclear_counts entries must be in 1..={}", nucpol_core::model::MAX_NUCLEI));
                }
            }
            if let Some((v, _)) = grid {
                if v == SweepVariable::ThetaE && s.electron != ElectronKind::NvEffective {
                    return cfg("sweep.variable = theta_e requires the NV electron".into());
                }
            }
            if let Some(n) = &sweep.n_rep {
                if n.iter().any(|&r| r == 0 || r > MAX_REPETITIONS) {
                    return cfg(format!("sweep.n_rep entries must be in 1..={MAX_REPETITIONS}"));
                }
            }
        }
        for scan in &self.amplitudes {
            scan.range.values(scan.dimension())?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring worker count and output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.jobs = default_jobs();
        canonical.output = OutputConfig::default();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Bare Larmor frequency in MHz.
    pub fn larmor(&self) -> Result<f64, CliError> {
        match (self.system.larmor, self.system.field) {
            (Some(f), None) => Ok(f.0),
            (None, Some(b)) => larmor_at(b.0, self.system.species),
            _ => Err(CliError::Config("system: exactly one of `larmor` or `field` must be given".into())),
        }
    }
}

pub fn larmor_at(field_mt: f64, species: Species) -> Result<f64, CliError> {
    nucpol_core::model::larmor_from_field(field_mt, species).map_err(|e| CliError::Config(format!("system.field: {e}")))
}
