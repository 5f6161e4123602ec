//! LoS referencing and time differencing of panel phases.
//!
//! Both steps run on phase words so the common offset cancels bit-exactly.

use serde::{Deserialize, Serialize};

use crate::angle::{rad_to_word, signed_to_rad, word_sub, word_to_rad, word_to_signed};
use crate::error::{Error, Result};
use crate::phase_model::PhasePanel;

/// LoS-referenced phases, `K × (S+1)`, columns `[target, static_1..]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CancelledPhases {
    pub n_frames: usize,
    pub n_cols: usize,
    words: Vec<u64>,
}

impl CancelledPhases {
    /// Phase in `[0, 2π)`.
    pub fn phase(&self, k: usize, col: usize) -> f64 {
        word_to_rad(self.words[k * self.n_cols + col])
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_frames).map(|k| self.phase(k, col)).collect()
    }

    /// Builds from radian phases (row-major `K × cols`).
    pub fn from_radians(n_frames: usize, n_cols: usize, phases: &[f64]) -> Result<Self> {
        if phases.len() != n_frames * n_cols {
            return Err(Error::LengthMismatch {
                expected: n_frames * n_cols,
                actual: phases.len(),
            });
        }
        Ok(CancelledPhases {
            n_frames,
            n_cols,
            words: phases.iter().map(|p| rad_to_word(*p)).collect(),
        })
    }
}

/// Subtracts the LoS phase from every other path, frame by frame.
pub fn cancel_offsets(panel: &PhasePanel) -> Result<CancelledPhases> {
    if panel.n_paths < 2 {
        return Err(Error::InvalidArgument(
            "panel has no LoS/target columns".into(),
        ));
    }
    if panel.phases.len() != panel.n_frames * panel.n_paths {
        return Err(Error::LengthMismatch {
            expected: panel.n_frames * panel.n_paths,
            actual: panel.phases.len(),
        });
    }
    let n_cols = panel.n_paths - 1;
    let mut words = Vec::with_capacity(panel.n_frames * n_cols);
    for row in panel.phases.chunks_exact(panel.n_paths) {
        let los = rad_to_word(row[0]);
        words.extend(row[1..].iter().map(|p| word_sub(rad_to_word(*p), los)));
    }
    Ok(CancelledPhases {
        n_frames: panel.n_frames,
        n_cols,
        words,
    })
}

/// Wrapped first-order differences and their time average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSeries {
    pub n_diffs: usize,
    pub n_cols: usize,
    /// Row-major `(K−1) × (S+1)`, each entry in `(−π, π]`.
    pub delta: Vec<f64>,
    pub delta_bar: Vec<f64>,
    pub period_s: f64,
    /// Measured AoAs, `[target, static_1..]`.
    pub aoas: Vec<f64>,
}

impl DiffSeries {
    pub fn delta_at(&self, k: usize, col: usize) -> f64 {
        self.delta[k * self.n_cols + col]
    }

    pub fn n_static(&self) -> usize {
        self.n_cols - 1
    }

    /// Same series restricted to target plus two statics (1-based indices).
    pub fn triple(&self, first: usize, second: usize) -> ([f64; 3], [f64; 3]) {
        (
            [
                self.delta_bar[0],
                self.delta_bar[first],
                self.delta_bar[second],
            ],
            [self.aoas[0], self.aoas[first], self.aoas[second]],
        )
    }
}

/// Differences consecutive frames, re-wraps each difference into `(−π, π]`
/// and averages over time. Inputs violating `T < 1/(6 f_max)` alias silently.
pub fn difference_and_average(
    cancelled: &CancelledPhases,
    period_s: f64,
    aoas: &[f64],
) -> Result<DiffSeries> {
    if cancelled.n_frames < 2 {
        return Err(Error::InvalidArgument("need K >= 2 frames".into()));
    }
    if aoas.len() != cancelled.n_cols {
        return Err(Error::LengthMismatch {
            expected: cancelled.n_cols,
            actual: aoas.len(),
        });
    }
    let n_cols = cancelled.n_cols;
    let n_diffs = cancelled.n_frames - 1;
    let mut delta = Vec::with_capacity(n_diffs * n_cols);
    for k in 1..cancelled.n_frames {
        for c in 0..n_cols {
            let now = cancelled.words[k * n_cols + c];
            let prev = cancelled.words[(k - 1) * n_cols + c];
            delta.push(signed_to_rad(word_to_signed(word_sub(now, prev))));
        }
    }
    let mut delta_bar = vec![0.0; n_cols];
    for row in delta.chunks_exact(n_cols) {
        for (acc, d) in delta_bar.iter_mut().zip(row) {
            *acc += d;
        }
    }
    for acc in &mut delta_bar {
        *acc /= n_diffs as f64;
    }
    Ok(DiffSeries {
        n_diffs,
        n_cols,
        delta,
        delta_bar,
        period_s,
        aoas: aoas.to_vec(),
    })
}

/// Runs cancellation and differencing on a panel, using its measured AoAs.
pub fn diff_series(panel: &PhasePanel) -> Result<DiffSeries> {
    let cancelled = cancel_offsets(panel)?;
    difference_and_average(&cancelled, panel.period_s, &panel.aoa_meas[1..])
}
