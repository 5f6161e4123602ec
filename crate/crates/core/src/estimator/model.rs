//! Mean phase-difference model `g(θ)` and its Jacobian.

use std::f64::consts::TAU;

/// Unknowns `(f_D,t, η, v_rx)`.
pub type Theta = [f64; 3];

/// Predicted mean frame-to-frame phase differences (rad), ordered
/// `[target, static_1..static_S]`. `aoas` follows the same order.
///
/// Target entry: `2πT (f + v/λ (cos(α_t − η) − cos η))`;
/// static entries drop the `f` term.
pub fn g_model(theta: &Theta, aoas: &[f64], wavelength_m: f64, period_s: f64) -> Vec<f64> {
    let mut out = vec![0.0; aoas.len()];
    g_model_into(theta, aoas, wavelength_m, period_s, &mut out);
    out
}

pub(crate) fn g_model_into(
    theta: &Theta,
    aoas: &[f64],
    wavelength_m: f64,
    period_s: f64,
    out: &mut [f64],
) {
    let [f, eta, v] = *theta;
    let scale = TAU * period_s;
    let k = v / wavelength_m;
    let cos_eta = eta.cos();
    for (o, a) in out.iter_mut().zip(aoas) {
        *o = scale * k * ((a - eta).cos() - cos_eta);
    }
    if let Some(first) = out.first_mut() {
        *first += scale * f;
    }
}

/// Analytic Jacobian of [`g_model`], row-major `(S+1) × 3`.
pub fn jacobian(theta: &Theta, aoas: &[f64], wavelength_m: f64, period_s: f64) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; aoas.len()];
    jacobian_into(theta, aoas, wavelength_m, period_s, &mut out);
    out
}

pub(crate) fn jacobian_into(
    theta: &Theta,
    aoas: &[f64],
    wavelength_m: f64,
    period_s: f64,
    out: &mut [[f64; 3]],
) {
    let [_, eta, v] = *theta;
    let scale = TAU * period_s;
    let (sin_eta, cos_eta) = eta.sin_cos();
    for (row, a) in out.iter_mut().zip(aoas) {
        let (s, c) = (a - eta).sin_cos();
        row[0] = 0.0;
        row[1] = scale * v / wavelength_m * (s + sin_eta);
        row[2] = scale / wavelength_m * (c - cos_eta);
    }
    if let Some(first) = out.first_mut() {
        first[0] = scale;
    }
}
