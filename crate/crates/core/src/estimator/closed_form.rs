//! Closed-form inversion from the target path and two static paths.

use std::f64::consts::{PI, TAU};

use super::cancel::DiffSeries;
use super::model::{g_model, Theta};
use super::{Branch, ThetaEstimate};
use crate::angle::wrap_2pi;
use crate::error::{Error, Result};

/// Denominators below this magnitude mark the static pair as degenerate.
pub const DENOMINATOR_EPS: f64 = 1e-9;

/// One heading hypothesis with its back-substituted speed and Doppler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCandidate {
    pub branch: Branch,
    pub theta: Theta,
    /// `‖Δ̄ − g(θ)‖` over every column of the series.
    pub residual_norm: f64,
}

impl BranchCandidate {
    pub fn admissible(&self) -> bool {
        self.theta[2] >= 0.0
    }
}

fn residual_norm(diff: &DiffSeries, theta: &Theta, wavelength_m: f64) -> f64 {
    g_model(theta, &diff.aoas, wavelength_m, diff.period_s)
        .iter()
        .zip(&diff.delta_bar)
        .map(|(g, d)| (d - g).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Both heading candidates `η̃` and `η̃ + π` for the static pair
/// `(first, second)` (1-based static indices into the series columns).
pub fn branch_candidates(
    diff: &DiffSeries,
    first: usize,
    second: usize,
    wavelength_m: f64,
) -> Result<[BranchCandidate; 2]> {
    let n_static = diff.n_static();
    if first == second || first == 0 || second == 0 || first > n_static || second > n_static {
        return Err(Error::InvalidArgument(format!(
            "static pair ({first}, {second}) out of range 1..={n_static}"
        )));
    }
    let ([d_t, d_1, d_2], [a_t, a_1, a_2]) = diff.triple(first, second);
    let degenerate = |denominator: f64| Error::DegeneratePair {
        first,
        second,
        denominator,
    };

    let num = d_2 * (a_1.cos() - 1.0) - d_1 * (a_2.cos() - 1.0);
    let den = d_1 * a_2.sin() - d_2 * a_1.sin();
    if den.abs() < DENOMINATOR_EPS {
        return Err(degenerate(den));
    }
    let eta_tilde = (num / den).atan();
    let scale = TAU * diff.period_s;

    let mut out = [BranchCandidate {
        branch: Branch::Principal,
        theta: [f64::NAN; 3],
        residual_norm: f64::INFINITY,
    }; 2];
    for (slot, (branch, eta)) in out.iter_mut().zip([
        (Branch::Principal, wrap_2pi(eta_tilde)),
        (Branch::Shifted, wrap_2pi(eta_tilde + PI)),
    ]) {
        let cos_eta = eta.cos();
        let geo_1 = (a_1 - eta).cos() - cos_eta;
        if geo_1.abs() < DENOMINATOR_EPS {
            return Err(degenerate(geo_1));
        }
        let geo_t = (a_t - eta).cos() - cos_eta;
        let f = (d_t - d_1 * geo_t / geo_1) / scale;
        let v = wavelength_m * d_1 / (scale * geo_1);
        let theta = [f, eta, v];
        *slot = BranchCandidate {
            branch,
            theta,
            residual_norm: residual_norm(diff, &theta, wavelength_m),
        };
    }
    Ok(out)
}

/// Closed-form `θ` from the pair `(first, second)`: the admissible branch
/// (non-negative speed) with the smaller residual wins.
pub fn closed_form(
    diff: &DiffSeries,
    first: usize,
    second: usize,
    wavelength_m: f64,
) -> Result<ThetaEstimate> {
    let candidates = branch_candidates(diff, first, second, wavelength_m)?;
    let best = candidates
        .iter()
        .filter(|c| c.admissible())
        .min_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm))
        .ok_or(Error::BranchInconsistency)?;
    Ok(ThetaEstimate {
        f_d_target: best.theta[0],
        eta: best.theta[1],
        v_rx: best.theta[2],
        residual_norm: best.residual_norm,
        n_iterations: 0,
        init: best.theta,
        branch: best.branch,
        static_pair: Some((first, second)),
        converged: true,
    })
}
