//! Fast self-checks of the core invariants, run by the `validate` command.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle::wrap_pi;
use crate::estimator::{estimate, g_model, jacobian, EstimatorConfig};
use crate::phase_model::{synthesize_nuisance, synthesize_panel, PanelSettings, DEFAULT_SIGMA_PO};
use crate::scenario::{sample_scenario, ProfileId};
use crate::waveform::{
    autocorrelation, estimate_cir, golay_pair, make_pilot, propagate, Tap, TapChannel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<String, String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

fn profiles() -> Result<String, String> {
    for id in ProfileId::ALL {
        let p = id.profile();
        p.validate().map_err(|e| e.to_string())?;
        let worst =
            std::f64::consts::TAU * p.period_s * (p.f_max_hz + 2.0 * p.v_max_mps / p.wavelength_m);
        if worst >= std::f64::consts::PI {
            return Err(format!("{id}: worst-case phase step {worst:.3} rad"));
        }
    }
    Ok("3 profiles valid and unambiguous".into())
}

fn golay() -> Result<String, String> {
    for n in 3..=7 {
        let len = 1usize << n;
        let (a, b) = golay_pair(len).ok_or("no pair")?;
        let (ra, rb) = (autocorrelation(&a), autocorrelation(&b));
        if ra[0] + rb[0] != 2.0 * len as f64 || (1..len).any(|l| ra[l] + rb[l] != 0.0) {
            return Err(format!("length {len} not complementary"));
        }
    }
    Ok("lengths 8..128 complementary".into())
}

fn jacobian_check(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let p = ProfileId::Ghz28.profile();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta = [
            rng.random_range(-930.0..930.0),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.5..10.0),
        ];
        let aoas: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let analytic = jacobian(&theta, &aoas, p.wavelength_m, p.period_s);
        let scale = analytic
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        for j in 0..3 {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let (mut up, mut dn) = (theta, theta);
            up[j] += h;
            dn[j] -= h;
            let gu = g_model(&up, &aoas, p.wavelength_m, p.period_s);
            let gd = g_model(&dn, &aoas, p.wavelength_m, p.period_s);
            for (i, row) in analytic.iter().enumerate() {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                worst = worst.max((fd - row[j]).abs() / scale);
            }
        }
    }
    if worst < 1e-6 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

fn noiseless_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for id in ProfileId::ALL {
        let p = id.profile();
        for n_static in [2, 5] {
            for _ in 0..20 {
                let s = sample_scenario(&p, n_static, rng).map_err(|e| e.to_string())?;
                let k = 32;
                let nuis = synthesize_nuisance(&p, k, DEFAULT_SIGMA_PO, 1.0, rng)
                    .map_err(|e| e.to_string())?;
                let panel = synthesize_panel(
                    &s,
                    &p,
                    &nuis,
                    &PanelSettings::new(k, f64::INFINITY, 0.0),
                    rng,
                )
                .map_err(|e| e.to_string())?;
                let est = estimate(&panel, p.wavelength_m, &EstimatorConfig::default())
                    .map_err(|e| e.to_string())?;
                let t = s.theta();
                worst = worst
                    .max((est.f_d_target - t[0]).abs() / t[0].abs())
                    .max(wrap_pi(est.eta - t[1]).abs() / t[1].abs().max(1e-3))
                    .max((est.v_rx - t[2]).abs() / t[2]);
            }
        }
    }
    if worst < 1e-8 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

fn nuisance_invariance(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let p = ProfileId::Ghz60.profile();
    for trial in 0..30 {
        let s = sample_scenario(&p, 3, rng).map_err(|e| e.to_string())?;
        let k = 40;
        let settings = PanelSettings::new(k, f64::INFINITY, 0.0);
        let seed: u64 = rng.random();
        let run = |cfo_scale: f64, nseed: u64| {
            let nuis = synthesize_nuisance(
                &p,
                k,
                DEFAULT_SIGMA_PO,
                cfo_scale,
                &mut ChaCha8Rng::seed_from_u64(nseed),
            )?;
            let panel = synthesize_panel(
                &s,
                &p,
                &nuis,
                &settings,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            estimate(&panel, p.wavelength_m, &EstimatorConfig::default())
        };
        let a = run(1.0, 1).map_err(|e| e.to_string())?;
        let b = run(10.0, 2).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("trial {trial}: estimates differ"));
        }
    }
    Ok("30 panels bit-identical across nuisance traces".into())
}

fn waveform_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for id in ProfileId::ALL {
        let pilot = make_pilot(&id.profile(), rng).map_err(|e| e.to_string())?;
        let taps: Vec<Tap> = [0usize, 5, 11, 30]
            .iter()
            .map(|&d| Tap {
                delay_s: d as f64 / pilot.sample_rate,
                gain: Complex64::from_polar(
                    rng.random_range(0.2..1.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                ),
                doppler_hz: 0.0,
            })
            .collect();
        let chan = TapChannel::new(taps.clone(), 0.0);
        let rx = propagate(&pilot, &chan, 0, 1e-4, rng).map_err(|e| e.to_string())?;
        let cir = estimate_cir(&rx, &pilot).map_err(|e| e.to_string())?;
        for t in &taps {
            let bin = (t.delay_s * pilot.sample_rate).round() as usize;
            let err = (cir[bin] - t.gain).norm() / t.gain.norm();
            if err > 1e-6 {
                return Err(format!("{id}: bin {bin} relative error {err:.2e}"));
            }
        }
    }
    Ok("on-grid taps recovered for every pilot".into())
}

/// Runs every check with a fixed seed.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        outcome("profiles", profiles()),
        outcome("golay_complementarity", golay()),
        outcome("jacobian", jacobian_check(&mut rng)),
        outcome("noiseless_round_trip", noiseless_round_trip(&mut rng)),
        outcome("nuisance_invariance", nuisance_invariance(&mut rng)),
        outcome("waveform_round_trip", waveform_round_trip(&mut rng)),
    ]
}
