//! Target Doppler estimation from a phase panel.
//!
//! The pipeline references every path to the LoS (removing the common CFO
//! and phase offset), differences consecutive frames (removing the
//! per-path reflectivity phases), averages over the window, and fits
//! `θ = (f_D,t, η, v_rx)` to the averaged differences using the measured
//! AoAs. A closed-form solution over the best static pair seeds a
//! Levenberg–Marquardt refinement over all paths.

mod cancel;
mod closed_form;
mod model;
mod nls;

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cancel::{
    cancel_offsets, diff_series, difference_and_average, CancelledPhases, DiffSeries,
};
pub use closed_form::{branch_candidates, closed_form, BranchCandidate, DENOMINATOR_EPS};
pub use model::{g_model, jacobian, Theta};
pub use nls::{nls_refine, LmConfig};

use crate::error::{Error, Result};
use crate::phase_model::PhasePanel;

/// Which heading hypothesis the closed form kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `η̂ = mod_2π(η̃)`.
    Principal,
    /// `η̂ = mod_2π(η̃ + π)`.
    Shifted,
    /// Static receiver: no heading is estimated.
    StaticRx,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub f_d_target: f64,
    /// Heading in `[0, 2π)`.
    pub eta: f64,
    pub v_rx: f64,
    /// `‖Δ̄ − g(θ̂)‖` (rad).
    pub residual_norm: f64,
    pub n_iterations: usize,
    /// Closed-form `θ` the refinement started from.
    pub init: Theta,
    pub branch: Branch,
    /// Static pair (1-based) used for the closed form.
    pub static_pair: Option<(usize, usize)>,
    pub converged: bool,
}

impl ThetaEstimate {
    pub fn theta(&self) -> Theta {
        [self.f_d_target, self.eta, self.v_rx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lm: LmConfig,
    /// Upper bound on closed-form static pairs tried before refinement.
    pub max_pairs: usize,
    /// Treat the receiver as static and use [`static_baseline`].
    pub static_rx: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lm: LmConfig::default(),
            max_pairs: 20,
            static_rx: false,
        }
    }
}

/// Static pairs tried by [`estimate`]: all of them, or a fixed
/// pseudo-random subset of `max_pairs` when there are more.
pub fn static_pairs(n_static: usize, max_pairs: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..=n_static)
        .flat_map(|i| (i + 1..=n_static).map(move |j| (i, j)))
        .collect();
    if pairs.len() > max_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5041_4952 ^ n_static as u64);
        pairs.shuffle(&mut rng);
        pairs.truncate(max_pairs);
        pairs.sort_unstable();
    }
    pairs
}

/// Best closed-form initialization over the static pairs of `diff`.
pub fn best_closed_form(
    diff: &DiffSeries,
    wavelength_m: f64,
    max_pairs: usize,
) -> Result<ThetaEstimate> {
    static_pairs(diff.n_static(), max_pairs)
        .into_iter()
        .filter_map(|(i, j)| closed_form(diff, i, j, wavelength_m).ok())
        .filter(|e| e.residual_norm.is_finite())
        .min_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm))
        .ok_or(Error::EstimationInfeasible)
}

/// Full pipeline on a panel whose period is `panel.period_s`.
pub fn estimate(
    panel: &PhasePanel,
    wavelength_m: f64,
    config: &EstimatorConfig,
) -> Result<ThetaEstimate> {
    panel.validate()?;
    if config.static_rx {
        let f = static_baseline(panel)?;
        return Ok(ThetaEstimate {
            f_d_target: f,
            eta: 0.0,
            v_rx: 0.0,
            residual_norm: 0.0,
            n_iterations: 0,
            init: [f, 0.0, 0.0],
            branch: Branch::StaticRx,
            static_pair: None,
            converged: true,
        });
    }
    let diff = diff_series(panel)?;
    let init = best_closed_form(&diff, wavelength_m, config.max_pairs)?;
    nls_refine(&diff, &init, wavelength_m, &config.lm)
}

/// Static-receiver estimate `Δ̄_t / (2πT)` from the target column alone.
pub fn static_baseline(panel: &PhasePanel) -> Result<f64> {
    let diff = diff_series(panel)?;
    Ok(diff.delta_bar[0] / (TAU * diff.period_s))
}

#[cfg(test)]
mod tests;
