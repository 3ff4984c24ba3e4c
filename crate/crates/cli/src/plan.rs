//! Expansion of a configuration into independent simulation points.

use crate::config::{larmor_at, ExperimentConfig, NucleiSource, SweepVariable, TauSetting};
use crate::CliError;
use nucpol_core::clusters::{ClusterConfig, ClusterGenerator};
use nucpol_core::model::{precession_frequency, ElectronModel, NuclearSpinParams, SpinSystem};
use nucpol_core::sequences::{DisentangleSpec, SequenceSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Coordinates of a point within the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointKey {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variable: Option<SweepVariable>,
    /// Swept value in canonical units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub n_nuc: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Point {
    pub key: PointKey,
    /// Hash of the config hash and the key; names the resumable result file.
    pub hash: String,
    pub system: SpinSystem,
    pub spec: SequenceSpec,
    pub n_rep: usize,
}

impl Point {
    pub fn mean_a_perp(&self) -> f64 {
        self.system.mean_a_perp()
    }
}

pub fn point_hash(config_hash: &str, key: &PointKey) -> String {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    h.update(serde_json::to_vec(key).expect("key serializes"));
    hex::encode(h.finalize())
}

/// Accepted configurations for `system.clusters`, in index order.
pub fn generate_clusters(config: &ExperimentConfig) -> Result<Vec<ClusterConfig>, CliError> {
    let block = config.system.clusters.as_ref().ok_or_else(|| CliError::Config("system.clusters is required".into()))?;
    let generator =
        ClusterGenerator::new(block.options(), config.run.seed).map_err(|e| CliError::Config(format!("system.clusters: {e}")))?;
    (0..block.count as u64)
        .map(|i| generator.generate(i).map_err(|e| CliError::Config(format!("system.clusters: configuration {i}: {e}"))))
        .collect()
}

fn electron(config: &ExperimentConfig) -> ElectronModel {
    ElectronModel::new(config.system.electron)
}

fn system_with(config: &ExperimentConfig, nuclei: Vec<NuclearSpinParams>, larmor: f64) -> Result<SpinSystem, CliError> {
    SpinSystem::new(electron(config), nuclei, larmor).map_err(|e| CliError::Config(format!("system: {e}")))
}

/// Sequence for `system`, resolving `tau = "resonant"`.
pub fn resolve_sequence(
    config: &ExperimentConfig,
    system: &SpinSystem,
    target: Option<f64>,
    theta_e: Option<f64>,
) -> Result<SequenceSpec, CliError> {
    let seq = &config.sequence;
    let mut spec = match seq.tau {
        TauSetting::Fixed(t) => {
            let mut spec = SequenceSpec::new(seq.protocol, t.0, seq.n_pol);
            spec.target_frequency = target.or(seq.target.map(|f| f.0));
            spec
        }
        TauSetting::Resonant => {
            let f_t = match target.or(seq.target.map(|f| f.0)) {
                Some(f) => f,
                None => {
                    let first = &system.nuclei()[0];
                    let m = system.electron.initial_sector();
                    precession_frequency(system.larmor(), first.a_par, first.a_perp, m)
                }
            };
            SequenceSpec::resonant(seq.protocol, f_t, seq.n_pol)
        }
    };
    let wait = seq.disentangle.as_ref().and_then(|d| d.wait.map(|w| w.0));
    if let Some(theta) = theta_e.or(seq.disentangle.as_ref().map(|d| d.theta_e.0)) {
        spec.disentangle = Some(DisentangleSpec { theta_e: theta, wait });
    }
    spec.validate().map_err(|e| CliError::Config(format!("sequence: {e}")))?;
    Ok(spec)
}

/// All points of the configuration, in deterministic order.
pub fn expand(config: &ExperimentConfig, config_hash: &str) -> Result<(Vec<Point>, Vec<ClusterConfig>), CliError> {
    let source = config.nuclei_source()?;
    let clusters = if source == NucleiSource::Clusters { generate_clusters(config)? } else { Vec::new() };
    let base_larmor = config.larmor()?;
    let grid = match &config.sweep {
        Some(s) => s.grid()?,
        None => None,
    };
    let values: Vec<Option<f64>> = match &grid {
        Some((_, v)) => v.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let variable = grid.as_ref().map(|(v, _)| *v);
    let counts: Vec<Option<usize>> = match config.sweep.as_ref().and_then(|s| s.nuclear_counts.clone()) {
        Some(c) => c.into_iter().map(Some).collect(),
        None => vec![None],
    };

    // nuclei sets, each with an optional cluster index
    let nuclei_sets: Vec<(Option<u64>, Vec<NuclearSpinParams>)> = match source {
        NucleiSource::Inline => {
            let list = config.system.nuclei.as_ref().expect("validated");
            vec![(
                None,
                list.iter()
                    .map(|n| match &n.label {
                        Some(l) => NuclearSpinParams::labeled(n.a_par.0, n.a_perp.0, l.clone()),
                        None => NuclearSpinParams::new(n.a_par.0, n.a_perp.0),
                    })
                    .collect(),
            )]
        }
        NucleiSource::Uniform => {
            let u = config.system.uniform.as_ref().expect("validated");
            counts.iter().map(|c| (None, vec![NuclearSpinParams::new(u.a_par.0, u.a_perp.0); c.unwrap_or(u.count)])).collect()
        }
        NucleiSource::Clusters => clusters.iter().map(|c| (Some(c.index), c.nuclear_params())).collect(),
    };

    let mut points = Vec::with_capacity(values.len() * nuclei_sets.len());
    for (vi, value) in values.iter().enumerate() {
        let n_rep = config.sweep.as_ref().and_then(|s| s.n_rep.as_ref()).map_or(config.run.n_rep, |n| n[vi]);
        for (cluster, nuclei) in &nuclei_sets {
            let mut larmor = base_larmor;
            let mut nuclei = nuclei.clone();
            let mut target = None;
            let mut theta_e = None;
            let mut tau_override = None;
            match (variable, value) {
                (Some(SweepVariable::APerp), Some(v)) => nuclei.iter_mut().for_each(|n| n.a_perp = *v),
                (Some(SweepVariable::Field), Some(v)) => larmor = larmor_at(*v, config.system.species)?,
                (Some(SweepVariable::Larmor), Some(v)) => larmor = *v,
                (Some(SweepVariable::TargetFrequency), Some(v)) => target = Some(*v),
                (Some(SweepVariable::ThetaE), Some(v)) => theta_e = Some(*v),
                (Some(SweepVariable::Tau), Some(v)) => tau_override = Some(*v),
                _ => {}
            }
            let system = system_with(config, nuclei, larmor)?;
            let mut spec = resolve_sequence(config, &system, target, theta_e)?;
            if let Some(tau) = tau_override {
                spec.tau_pol = tau;
                spec.target_frequency = None;
                spec.validate().map_err(|e| CliError::Config(format!("sweep: {e}")))?;
            }
            let key = PointKey { index: points.len(), variable, value: *value, n_nuc: system.nuclear_count(), cluster: *cluster };
            let hash = point_hash(config_hash, &key);
            points.push(Point { key, hash, system, spec, n_rep });
        }
    }
    if points.len() > crate::config::MAX_POINTS {
        return Err(CliError::Config(format!("grid has {} points, above {}", points.len(), crate::config::MAX_POINTS)));
    }
    Ok((points, clusters))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonant_tau_follows_initial_sector() {
        let text = r#"
[system]
electron = "spin_half"
larmor = "1 MHz"
uniform = { count = 2, a_par = "0 MHz", a_perp = "0.3 MHz" }
[sequence]
protocol = "pulsepol"
tau = "resonant"
[sweep]
variable = "a_perp"
values = ["0 MHz", "0.3 MHz"]
nuclear_counts = [1, 3]
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let (points, _) = expand(&c, &c.hash()).unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points.iter().map(|p| p.key.n_nuc).collect::<Vec<_>>(), vec![1, 3, 1, 3]);
        let f_p = (1.0f64 + 0.15 * 0.15).sqrt();
        assert!((points[3].spec.tau_pol - 1.5 / f_p).abs() < 1e-12);
        assert!((points[0].spec.tau_pol - 1.5).abs() < 1e-12);
        let hashes: std::collections::HashSet<_> = points.iter().map(|p| p.hash.clone()).collect();
        assert_eq!(hashes.len(), 4);
    }

    #[test]
    fn nv_resonance_uses_bare_larmor() {
        let text = r#"
[system]
electron = "nv_effective"
field = "40 mT"
nuclei = [{ a_par = "-20 kHz", a_perp = "50 kHz" }]
[sequence]
protocol = "pulsepol"
tau = "resonant"
n_pol = 2
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let (points, _) = expand(&c, &c.hash()).unwrap();
        let f_n = 10.7084e-3 * 40.0;
        assert!((points[0].spec.tau_pol - 1.5 / f_n).abs() < 1e-9);
    }
}
