use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boxplot statistics of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Smallest datum at or above `q25 − 1.5·IQR`, or `q25` when that
    /// datum lies inside the box.
    pub whisker_low: f64,
    /// Largest datum at or below `q75 + 1.5·IQR`, or `q75` likewise.
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `(n − 1)·p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::EmptyCell);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    let lo_fence = q25 - 1.5 * iqr;
    let hi_fence = q75 + 1.5 * iqr;
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|x| *x >= lo_fence)
        .map_or(q25, |x| x.min(q25));
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|x| *x <= hi_fence)
        .map_or(q75, |x| x.max(q75));
    Ok(BoxStats {
        n: sorted.len(),
        median: quantile_sorted(&sorted, 0.5),
        q25,
        q75,
        whisker_low,
        whisker_high,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    })
}
