//! Levenberg–Marquardt refinement of `θ` against the averaged differences.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::cancel::DiffSeries;
use super::model::{g_model_into, jacobian_into, Theta};
use super::ThetaEstimate;
use crate::angle::wrap_2pi;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub max_iterations: usize,
    /// Stop when the cosine between the residual and the Jacobian columns,
    /// `‖Jᵀr‖ / (‖J‖_F·‖r‖)`, falls below this.
    pub gradient_tol: f64,
    /// Stop when a step is smaller than this relative to `‖θ‖`.
    pub step_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_iterations: 200,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

const MAX_DAMPING: f64 = 1e20;

struct Workspace<'a> {
    diff: &'a DiffSeries,
    wavelength_m: f64,
    model: Vec<f64>,
    jac: Vec<[f64; 3]>,
}

impl Workspace<'_> {
    /// Residuals `Δ̄ − g(θ)` into `out`; returns the squared norm.
    fn residuals(&mut self, theta: &Theta, out: &mut [f64]) -> f64 {
        g_model_into(
            theta,
            &self.diff.aoas,
            self.wavelength_m,
            self.diff.period_s,
            &mut self.model,
        );
        let mut cost = 0.0;
        for ((o, d), g) in out.iter_mut().zip(&self.diff.delta_bar).zip(&self.model) {
            *o = d - g;
            cost += *o * *o;
        }
        cost
    }

    /// Normal matrix `JᵀJ` and gradient `Jᵀr` at `θ`, in O(9·(S+1)).
    fn normal_equations(&mut self, theta: &Theta, resid: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
        jacobian_into(
            theta,
            &self.diff.aoas,
            self.wavelength_m,
            self.diff.period_s,
            &mut self.jac,
        );
        let mut a = Matrix3::zeros();
        let mut b = Vector3::zeros();
        for (row, r) in self.jac.iter().zip(resid) {
            for i in 0..3 {
                b[i] += row[i] * r;
                for j in 0..3 {
                    a[(i, j)] += row[i] * row[j];
                }
            }
        }
        (a, b)
    }
}

fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Local minimizer of `‖Δ̄ − g(θ)‖²` starting from `init`.
///
/// Only cost-decreasing steps are accepted, so the returned residual never
/// exceeds the initial one. Hitting the iteration cap returns the best
/// iterate with `converged = false`.
pub fn nls_refine(
    diff: &DiffSeries,
    init: &ThetaEstimate,
    wavelength_m: f64,
    config: &LmConfig,
) -> Result<ThetaEstimate> {
    let m = diff.delta_bar.len();
    let mut ws = Workspace {
        diff,
        wavelength_m,
        model: vec![0.0; m],
        jac: vec![[0.0; 3]; m],
    };
    let mut theta: Theta = [init.f_d_target, init.eta, init.v_rx];
    let mut resid = vec![0.0; m];
    let mut trial_resid = vec![0.0; m];
    let mut cost = ws.residuals(&theta, &mut resid);
    if !cost.is_finite() {
        return Err(Error::NonFiniteResidual {
            iteration: 0,
            theta,
        });
    }

    let mut damping = config.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        let (a, b) = ws.normal_equations(&theta, &resid);
        if !b.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteResidual {
                iteration: iterations,
                theta,
            });
        }
        let scale = a.trace().sqrt() * cost.sqrt();
        if cost == 0.0 || b.norm() <= config.gradient_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let max_diag = a.diagonal().max();
        loop {
            let mut lhs = a;
            for i in 0..3 {
                lhs[(i, i)] += damping * a[(i, i)].max(1e-12 * max_diag);
            }
            let step = lhs.cholesky().map(|c| c.solve(&b));
            let Some(step) = step.filter(|s| s.iter().all(|x| x.is_finite())) else {
                damping *= config.damping_factor;
                if damping > MAX_DAMPING {
                    break 'outer;
                }
                continue;
            };
            let step = [step[0], step[1], step[2]];
            let small_step = norm3(&step) <= config.step_tol * norm3(&theta).max(config.step_tol);
            let candidate = [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2]];
            let new_cost = ws.residuals(&candidate, &mut trial_resid);
            if new_cost.is_finite() && new_cost < cost {
                theta = candidate;
                cost = new_cost;
                std::mem::swap(&mut resid, &mut trial_resid);
                damping = (damping / config.damping_factor).max(1e-15);
                if small_step {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if small_step {
                // the model cannot decrease any further at this resolution
                converged = true;
                break 'outer;
            }
            damping *= config.damping_factor;
            if damping > MAX_DAMPING {
                break 'outer;
            }
        }
    }

    let (mut eta, mut v) = (theta[1], theta[2]);
    if v < 0.0 {
        // g is invariant under (η, v) → (η + π, −v)
        v = -v;
        eta += std::f64::consts::PI;
    }
    Ok(ThetaEstimate {
        f_d_target: theta[0],
        eta: wrap_2pi(eta),
        v_rx: v,
        residual_norm: cost.sqrt(),
        n_iterations: iterations,
        init: [init.f_d_target, init.eta, init.v_rx],
        branch: init.branch,
        static_pair: init.static_pair,
        converged,
    })
}
