//! Unit-annotated physical quantities as they appear in configuration files.
//!
//! Every quantity is written as `"<number> <unit>"`. Values are stored in the
//! kernel units: MHz, µs, mT, nm and radians.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    Field,
    Length,
    Angle,
}

impl Dimension {
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Dimension::Frequency => "MHz",
            Dimension::Time => "us",
            Dimension::Field => "mT",
            Dimension::Length => "nm",
            Dimension::Angle => "rad",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        let s = match (self, unit) {
            (Dimension::Frequency, "Hz") => 1e-6,
            (Dimension::Frequency, "kHz") => 1e-3,
            (Dimension::Frequency, "MHz") => 1.0,
            (Dimension::Frequency, "GHz") => 1e3,
            (Dimension::Time, "ns") => 1e-3,
            (Dimension::Time, "us" | "µs") => 1.0,
            (Dimension::Time, "ms") => 1e3,
            (Dimension::Time, "s") => 1e6,
            (Dimension::Field, "uT" | "µT") => 1e-3,
            (Dimension::Field, "mT") => 1.0,
            (Dimension::Field, "T") => 1e3,
            (Dimension::Field, "G") => 0.1,
            (Dimension::Length, "pm") => 1e-3,
            (Dimension::Length, "nm") => 1.0,
            (Dimension::Length, "A" | "Å") => 0.1,
            (Dimension::Length, "um" | "µm") => 1e3,
            (Dimension::Angle, "rad") => 1.0,
            (Dimension::Angle, "deg") => PI / 180.0,
            _ => return None,
        };
        Some(s)
    }
}

/// Parses `"<number> <unit>"` into canonical units. Angles also accept `pi`, `pi/2`, `3pi/4`.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let t = text.trim();
    if dim == Dimension::Angle {
        if let Some(v) = parse_pi_multiple(t) {
            return Ok(v);
        }
    }
    let split = t
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| format!("`{t}` has no unit; expected e.g. \"1.5 {}\"", dim.canonical_unit()))?;
    let (num, unit) = (t[..split].trim(), t[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("`{num}` is not a number in `{t}`"))?;
    let scale = dim.scale(unit).ok_or_else(|| format!("unit `{unit}` is not a {dim:?} unit in `{t}`"))?;
    if !value.is_finite() {
        return Err(format!("`{t}` is not finite"));
    }
    Ok(value * scale)
}

fn parse_pi_multiple(t: &str) -> Option<f64> {
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (t, 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim();
    let c = if coeff.is_empty() { 1.0 } else { coeff.strip_suffix('*').unwrap_or(coeff).trim().parse::<f64>().ok()? };
    Some(c * PI / den)
}

macro_rules! quantity {
    ($name:ident, $dim:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl $name {
            pub const DIMENSION: Dimension = $dim;

            pub fn value(self) -> f64 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, Self::DIMENSION.canonical_unit())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                parse_quantity(&text, Self::DIMENSION).map($name).map_err(de::Error::custom)
            }
        }
    };
}

quantity!(Frequency, Dimension::Frequency);
quantity!(Time, Dimension::Time);
quantity!(Field, Dimension::Field);
quantity!(Length, Dimension::Length);
quantity!(Angle, Dimension::Angle);
