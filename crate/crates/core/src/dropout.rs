//! Variance-limiting sample dropout.
//!
//! Each live sample gets the statistic `φ_i = Σ_{j≠i} Ô_i·Ô_j`. Samples are
//! split by the sign of `φ` (zero counts as non-negative) and, inside each
//! part, samples whose `φ` does not exceed the part's threshold are dropped.
//! The threshold is either fixed or chosen as a per-part quantile.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Off,
    Ratio,
    Threshold,
}

impl std::fmt::Display for DropoutMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropoutMode::Off => "off",
            DropoutMode::Ratio => "ratio",
            DropoutMode::Threshold => "threshold",
        })
    }
}

impl std::str::FromStr for DropoutMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(DropoutMode::Off),
            "ratio" => Ok(DropoutMode::Ratio),
            "threshold" => Ok(DropoutMode::Threshold),
            _ => Err(Error::Input(format!("unknown dropout mode {s:?} (expected off, ratio or threshold)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutConfig {
    pub mode: DropoutMode,
    pub ratio: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            mode: DropoutMode::Ratio,
            ratio: 0.2,
            delta_plus: 0.0,
            delta_minus: f64::NEG_INFINITY,
        }
    }
}

impl DropoutConfig {
    pub fn off() -> Self {
        Self {
            mode: DropoutMode::Off,
            ..Self::default()
        }
    }

    pub fn ratio(r: f64) -> Self {
        Self {
            mode: DropoutMode::Ratio,
            ratio: r,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == DropoutMode::Ratio && !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Config("r must lie in [0,1]".into()));
        }
        if self.delta_plus.is_nan() || self.delta_minus.is_nan() {
            return Err(Error::Config("dropout thresholds must not be NaN".into()));
        }
        Ok(())
    }
}

/// Outcome of one dropout pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutReport {
    /// Surviving indices, in input order.
    pub kept_indices: Vec<usize>,
    pub delta_plus_used: Option<f64>,
    pub delta_minus_used: Option<f64>,
    pub dropped_phi_pos_mean: Option<f64>,
    pub dropped_phi_neg_mean: Option<f64>,
    pub kept_count: usize,
    pub dropped_count: usize,
    /// Partitions left intact because all their `φ` values were equal.
    pub degenerate_partitions: usize,
}

impl DropoutReport {
    fn keep_all(indices: &[usize]) -> Self {
        Self {
            kept_indices: indices.to_vec(),
            delta_plus_used: None,
            delta_minus_used: None,
            dropped_phi_pos_mean: None,
            dropped_phi_neg_mean: None,
            kept_count: indices.len(),
            dropped_count: 0,
            degenerate_partitions: 0,
        }
    }
}

/// `Δ̂_i = Ô_i·(Σ_j Ô_j) − Ô_i²` in O(n), summing left to right. Evaluated
/// as `Ô_i·(Σ_j Ô_j − Ô_i)`, which avoids cancelling two large products.
pub fn phi_values(surrogates: &[f64]) -> Vec<f64> {
    let total: f64 = surrogates.iter().sum();
    surrogates.iter().map(|&o| o * (total - o)).collect()
}

/// Splits `indices` into `(φ ≥ 0, φ < 0)`, preserving order.
pub fn partition(indices: &[usize], phi: &[f64]) -> (Vec<usize>, Vec<usize>) {
    assert_eq!(indices.len(), phi.len(), "indices and phi must align");
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (&i, &p) in indices.iter().zip(phi) {
        if p >= 0.0 {
            plus.push(i);
        } else {
            minus.push(i);
        }
    }
    (plus, minus)
}

/// Element `m` of `values` whose fraction of strictly smaller elements is
/// closest to `r`; ties go to the smaller `m`.
pub fn quantile_select(values: &[f64], r: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("quantile of an empty set".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("quantile input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut best = sorted[0];
    let mut best_gap = (0.0 - r).abs();
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            continue;
        }
        let gap = (i as f64 / n - r).abs();
        if gap < best_gap {
            best_gap = gap;
            best = sorted[i];
        }
    }
    Ok(best)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Applies per-part thresholds (`None` keeps the whole part) and gathers
/// the report statistics.
fn filter_by_thresholds(
    indices: &[usize],
    phi: &[f64],
    delta_plus: Option<f64>,
    delta_minus: Option<f64>,
) -> DropoutReport {
    let mut kept = Vec::with_capacity(indices.len());
    let mut dropped_pos = Vec::new();
    let mut dropped_neg = Vec::new();
    for (&i, &p) in indices.iter().zip(phi) {
        let threshold = if p >= 0.0 { delta_plus } else { delta_minus };
        match threshold {
            Some(d) if p <= d => {
                if p >= 0.0 {
                    dropped_pos.push(p)
                } else {
                    dropped_neg.push(p)
                }
            }
            _ => kept.push(i),
        }
    }
    let dropped_count = dropped_pos.len() + dropped_neg.len();
    DropoutReport {
        kept_count: kept.len(),
        kept_indices: kept,
        delta_plus_used: delta_plus,
        delta_minus_used: delta_minus,
        dropped_phi_pos_mean: mean(&dropped_pos),
        dropped_phi_neg_mean: mean(&dropped_neg),
        dropped_count,
        degenerate_partitions: 0,
    }
}

/// Fixed thresholds: keep `φ > δ+` among `φ ≥ 0` and `φ > δ−` among `φ < 0`.
pub fn apply_threshold_dropout(
    indices: &[usize],
    phi: &[f64],
    delta_plus: f64,
    delta_minus: f64,
) -> DropoutReport {
    assert_eq!(indices.len(), phi.len(), "indices and phi must align");
    filter_by_thresholds(indices, phi, Some(delta_plus), Some(delta_minus))
}

/// Quantile thresholds chosen per part so that roughly a fraction `r` of
/// each part is dropped. `r = 0` keeps everything. A part whose `φ` values
/// are all equal is kept intact and counted in `degenerate_partitions`.
pub fn apply_ratio_dropout(indices: &[usize], phi: &[f64], r: f64) -> Result<DropoutReport> {
    if indices.len() != phi.len() {
        return Err(Error::Input("indices and phi must align".into()));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Input(format!("r must lie in [0,1], got {r}")));
    }
    if r == 0.0 {
        return Ok(DropoutReport::keep_all(indices));
    }
    let plus: Vec<f64> = phi.iter().copied().filter(|&p| p >= 0.0).collect();
    let minus: Vec<f64> = phi.iter().copied().filter(|&p| p < 0.0).collect();
    let mut degenerate = 0;
    let mut threshold = |part: &[f64]| -> Result<Option<f64>> {
        if part.is_empty() {
            return Ok(None);
        }
        if part.iter().all(|&p| p == part[0]) {
            degenerate += 1;
            return Ok(None);
        }
        quantile_select(part, r).map(Some)
    };
    let delta_plus = threshold(&plus)?;
    let delta_minus = threshold(&minus)?;
    let mut report = filter_by_thresholds(indices, phi, delta_plus, delta_minus);
    report.degenerate_partitions = degenerate;
    Ok(report)
}

/// Dispatches on `config.mode`.
pub fn apply_dropout(config: &DropoutConfig, indices: &[usize], phi: &[f64]) -> Result<DropoutReport> {
    match config.mode {
        DropoutMode::Off => Ok(DropoutReport::keep_all(indices)),
        DropoutMode::Ratio => apply_ratio_dropout(indices, phi, config.ratio),
        DropoutMode::Threshold => {
            if indices.len() != phi.len() {
                return Err(Error::Input("indices and phi must align".into()));
            }
            Ok(apply_threshold_dropout(indices, phi, config.delta_plus, config.delta_minus))
        }
    }
}
