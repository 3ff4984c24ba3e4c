//! CSV/JSON emission and provenance records.

use crate::CliError;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Six significant digits, positional for moderate magnitudes and exponent form otherwise.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..6).contains(&exp) {
        return format!("{mantissa}e{exp}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().expect("round trip");
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub config_hash: String,
    pub code_version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, preset: Option<&str>, config_hash: &str, seed: u64) -> Self {
        let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            command: command.into(),
            preset: preset.map(Into::into),
            config_hash: config_hash.into(),
            code_version: env!("CARGO_PKG_VERSION"),
            timestamp,
            seed,
        }
    }
}

/// Collects written artifacts so every path is reported.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        write_json(&path, value)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// `manifest.json` listing provenance and every artifact; returns all paths.
    pub fn finish(mut self, provenance: &Provenance) -> Result<Vec<PathBuf>, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            provenance: &'a Provenance,
            artifacts: Vec<String>,
        }
        let artifacts = self.written.iter().map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string()).collect();
        let path = self.path("manifest.json");
        write_json(&path, &Manifest { provenance, artifacts })?;
        self.written.push(path);
        Ok(self.written)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.968123456), "0.968123");
        assert_eq!(sig6(0.97), "0.97");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(9.9999996), "10");
        assert_eq!(sig6(-123456.7), "-123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(0.0), "0");
    }
}
