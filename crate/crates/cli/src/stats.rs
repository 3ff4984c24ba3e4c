//! Box-chart statistics and fixed-width histograms of polarizations.

use serde::{Deserialize, Serialize};

pub const HISTOGRAM_BIN: f64 = 0.02;

/// Linear-interpolation quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Extreme values within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = s.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v)).collect();
        Some(Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            q1,
            median: quantile_sorted(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: s.len() - inside.len(),
        })
    }
}

/// Counts over `[0, 1]` in bins of `width`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], width: f64) -> Self {
        let bins = (1.0 / width).round() as usize;
        let mut counts = vec![0; bins];
        for &v in values {
            if (0.0..=1.0).contains(&v) {
                // ε guards values sitting on an edge from the 1/width rounding
                let i = (((v / width) + 1e-9).floor() as usize).min(bins - 1);
                counts[i] += 1;
            }
        }
        Self { width, counts }
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width
    }

    /// Centre of the most populated bin; ties go to the lower bin.
    pub fn peak(&self) -> Option<f64> {
        let (mut best, mut count) = (None, 0);
        for (i, &c) in self.counts.iter().enumerate() {
            if c > count {
                best = Some(i);
                count = c;
            }
        }
        best.map(|i| self.bin_center(i))
    }
}
