//! Committed configuration files reproducing the published figures and tables.

use crate::config::ExperimentConfig;
use crate::CliError;

pub const PRESETS: [(&str, &str); 10] = [
    ("fig1c", include_str!("../presets/fig1c.toml")),
    ("fig2a", include_str!("../presets/fig2a.toml")),
    ("fig2b", include_str!("../presets/fig2b.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("figS4ab", include_str!("../presets/figS4ab.toml")),
    ("figS4c", include_str!("../presets/figS4c.toml")),
    ("table1", include_str!("../presets/table1.toml")),
    ("tableS1", include_str!("../presets/tableS1.toml")),
    ("smoke", include_str!("../presets/smoke.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let text = preset_text(name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown preset `{name}`; available: {}", names.join(", ")))
    })?;
    ExperimentConfig::from_toml(text).map_err(|e| CliError::Config(format!("preset `{name}`: {e}")))
}
