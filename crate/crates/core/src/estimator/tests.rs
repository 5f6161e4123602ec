use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::angle::wrap_pi;
use crate::phase_model::{synthesize_nuisance, synthesize_panel, NuisanceTrace, PanelSettings};
use crate::scenario::{
    sample_scenario, satisfies_margins, CarrierProfile, ProfileId, Scenario, DEFAULT_ANGLE_MARGIN,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Series whose averaged differences equal `g(θ)` exactly.
fn exact_series(theta: &Theta, aoas: &[f64], wavelength: f64, period: f64) -> DiffSeries {
    let delta_bar = g_model(theta, aoas, wavelength, period);
    DiffSeries {
        n_diffs: 1,
        n_cols: aoas.len(),
        delta: delta_bar.clone(),
        delta_bar,
        period_s: period,
        aoas: aoas.to_vec(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn noiseless_panel(s: &Scenario, p: &CarrierProfile, k: usize, seed: u64) -> crate::PhasePanel {
    let nuis = synthesize_nuisance(p, k, 1.0, 1.0, &mut rng(seed)).unwrap();
    synthesize_panel(
        s,
        p,
        &nuis,
        &PanelSettings::new(k, f64::INFINITY, 0.0),
        &mut rng(seed + 1),
    )
    .unwrap()
}

/// Central differences, independent of the analytic derivative.
fn fd_jacobian(theta: &Theta, aoas: &[f64], wl: f64, t: f64, h: f64) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; aoas.len()];
    for j in 0..3 {
        let mut hi = *theta;
        let mut lo = *theta;
        let step = h * theta[j].abs().max(1.0);
        hi[j] += step;
        lo[j] -= step;
        let gh = g_model(&hi, aoas, wl, t);
        let gl = g_model(&lo, aoas, wl, t);
        for i in 0..aoas.len() {
            out[i][j] = (gh[i] - gl[i]) / (2.0 * step);
        }
    }
    out
}

#[test]
fn jacobian_matches_central_differences() {
    let p = ProfileId::Ghz28.profile();
    let mut r = rng(21);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = sample_scenario(&p, 4, &mut r).unwrap();
        let aoas = &s.aoas()[1..];
        let th = s.theta();
        let an = jacobian(&th, aoas, p.wavelength_m, p.period_s);
        let fd = fd_jacobian(&th, aoas, p.wavelength_m, p.period_s, 1e-6);
        let scale = an.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, f) in an.iter().flatten().zip(fd.iter().flatten()) {
            worst = worst.max((a - f).abs() / scale);
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn closed_form_inverts_forward_model() {
    let p = ProfileId::Ghz28.profile();
    let theta = [500.0, PI / 6.0, 2.0];
    let mut seed = 0;
    let s = loop {
        let s = sample_scenario(&p, 2, &mut rng(seed)).unwrap();
        if satisfies_margins(s.aoa_target, &s.aoa_static, theta[1], DEFAULT_ANGLE_MARGIN) {
            break s;
        }
        seed += 1;
    };
    let diff = exact_series(&theta, &s.aoas()[1..], p.wavelength_m, p.period_s);
    let est = closed_form(&diff, 1, 2, p.wavelength_m).unwrap();
    assert!(rel(est.f_d_target, theta[0]) < 1e-9);
    assert!(rel(est.eta, theta[1]) < 1e-9);
    assert!(rel(est.v_rx, theta[2]) < 1e-9);
}

#[test]
fn zero_speed_pair_is_degenerate() {
    let diff = exact_series(&[300.0, 1.0, 0.0], &[0.5, 1.2, -2.0], 0.01, 1e-4);
    assert!(matches!(
        closed_form(&diff, 1, 2, 0.01),
        Err(Error::DegeneratePair { .. })
    ));
}

#[test]
fn selected_branch_beats_rejected_branch() {
    let p = ProfileId::Ghz60.profile();
    let theta = [-420.0, PI + 0.1, 3.0];
    let aoas = [0.9, -1.3, 2.2];
    assert!(satisfies_margins(
        aoas[0],
        &aoas[1..],
        theta[1],
        DEFAULT_ANGLE_MARGIN
    ));
    let diff = exact_series(&theta, &aoas, p.wavelength_m, p.period_s);
    let est = closed_form(&diff, 1, 2, p.wavelength_m).unwrap();
    let cands = branch_candidates(&diff, 1, 2, p.wavelength_m).unwrap();
    let rejected = cands.iter().find(|c| c.branch != est.branch).unwrap();
    // the rejected heading evaluated as a physical estimate (speed >= 0)
    let phys = [
        rejected.theta[0],
        rejected.theta[1],
        rejected.theta[2].abs(),
    ];
    let g = g_model(&phys, &aoas, p.wavelength_m, p.period_s);
    let r_rej = g
        .iter()
        .zip(&diff.delta_bar)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(
        est.residual_norm < r_rej,
        "{} vs {}",
        est.residual_norm,
        r_rej
    );
    assert!(rel(est.eta, theta[1]) < 1e-9);
}

#[test]
fn nls_fixed_point_at_truth() {
    let p = ProfileId::Ghz5.profile();
    let s = sample_scenario(&p, 5, &mut rng(31)).unwrap();
    let diff = exact_series(&s.theta(), &s.aoas()[1..], p.wavelength_m, p.period_s);
    let init = ThetaEstimate {
        f_d_target: s.f_d_target,
        eta: s.eta,
        v_rx: s.v_rx,
        residual_norm: 0.0,
        n_iterations: 0,
        init: s.theta(),
        branch: Branch::Principal,
        static_pair: None,
        converged: true,
    };
    let out = nls_refine(&diff, &init, p.wavelength_m, &LmConfig::default()).unwrap();
    assert!(out.converged);
    assert!(out.residual_norm < 1e-12);
    assert_eq!(out.f_d_target, s.f_d_target);
    assert!((out.eta - s.eta).abs() < 1e-15);
}

#[test]
fn nls_basin_of_attraction() {
    let p = ProfileId::Ghz60.profile();
    for seed in 0..20 {
        let s = sample_scenario(&p, 4, &mut rng(100 + seed)).unwrap();
        let th = s.theta();
        let diff = exact_series(&th, &s.aoas()[1..], p.wavelength_m, p.period_s);
        let init = ThetaEstimate {
            f_d_target: th[0] + 10.0,
            eta: th[1] + 0.05,
            v_rx: th[2] + 0.1,
            residual_norm: f64::NAN,
            n_iterations: 0,
            init: th,
            branch: Branch::Principal,
            static_pair: None,
            converged: false,
        };
        let out = nls_refine(&diff, &init, p.wavelength_m, &LmConfig::default()).unwrap();
        assert!(rel(out.f_d_target, th[0]) < 1e-8, "seed {seed}: {out:?}");
        assert!(wrap_pi(out.eta - th[1]).abs() / th[1] < 1e-8, "seed {seed}");
        assert!(rel(out.v_rx, th[2]) < 1e-8, "seed {seed}");
    }
}

#[test]
fn nls_never_increases_residual() {
    let p = ProfileId::Ghz28.profile();
    let mut r = rng(41);
    for _ in 0..200 {
        let s = sample_scenario(&p, 6, &mut r).unwrap();
        let nuis = NuisanceTrace::zeros(90, p.period_s);
        let panel =
            synthesize_panel(&s, &p, &nuis, &PanelSettings::new(90, 5.0, 0.05), &mut r).unwrap();
        let diff = diff_series(&panel).unwrap();
        let init = best_closed_form(&diff, p.wavelength_m, 20).unwrap();
        let out = nls_refine(&diff, &init, p.wavelength_m, &LmConfig::default()).unwrap();
        assert!(out.residual_norm <= init.residual_norm + 1e-15);
        assert!(out.v_rx >= 0.0 && (0.0..TAU).contains(&out.eta));
    }
}

#[test]
fn nls_reports_non_finite_input() {
    let mut diff = exact_series(&[100.0, 1.0, 1.0], &[0.5, 1.0, -1.0], 0.01, 1e-4);
    diff.delta_bar[1] = f64::NAN;
    let init = ThetaEstimate {
        f_d_target: 100.0,
        eta: 1.0,
        v_rx: 1.0,
        residual_norm: 0.0,
        n_iterations: 0,
        init: [100.0, 1.0, 1.0],
        branch: Branch::Principal,
        static_pair: None,
        converged: false,
    };
    assert!(matches!(
        nls_refine(&diff, &init, 0.01, &LmConfig::default()),
        Err(Error::NonFiniteResidual { .. })
    ));
}

#[test]
fn cancellation_of_zero_doppler_scene_is_constant() {
    let p = ProfileId::Ghz60.profile();
    let mut s = sample_scenario(&p, 3, &mut rng(50)).unwrap();
    s.v_rx = 0.0;
    s.f_d_target = 0.0;
    let panel = noiseless_panel(&s, &p, 40, 51);
    let c = cancel_offsets(&panel).unwrap();
    for col in 0..c.n_cols {
        let (re, im) = panel.path_gains[col + 1];
        let (re0, im0) = panel.path_gains[0];
        let expect = crate::angle::wrap_2pi(im.atan2(re) - im0.atan2(re0));
        for k in 0..c.n_frames {
            assert!(wrap_pi(c.phase(k, col) - expect).abs() < 1e-9);
        }
    }
}

#[test]
fn cancellation_independent_of_nuisance() {
    let p = ProfileId::Ghz28.profile();
    let s = sample_scenario(&p, 3, &mut rng(52)).unwrap();
    let settings = PanelSettings::new(50, f64::INFINITY, 0.0);
    let n1 = synthesize_nuisance(&p, 50, 1.0, 1.0, &mut rng(1)).unwrap();
    let n2 = synthesize_nuisance(&p, 50, 2.5, 10.0, &mut rng(2)).unwrap();
    let a = synthesize_panel(&s, &p, &n1, &settings, &mut rng(53)).unwrap();
    let b = synthesize_panel(&s, &p, &n2, &settings, &mut rng(53)).unwrap();
    assert_ne!(a.phases, b.phases);
    assert_eq!(cancel_offsets(&a).unwrap(), cancel_offsets(&b).unwrap());
}

#[test]
fn cancelled_target_slope_matches_forward_model() {
    let p = ProfileId::Ghz60.profile();
    let s = sample_scenario(&p, 2, &mut rng(5)).unwrap();
    let k = 96;
    let panel = noiseless_panel(&s, &p, k, 6);
    let c = cancel_offsets(&panel).unwrap();
    // unwrap the target column and least-squares fit a line
    let col = c.column(0);
    let mut unwrapped = vec![col[0]];
    for w in col.windows(2) {
        let last = *unwrapped.last().unwrap();
        unwrapped.push(last + wrap_pi(w[1] - w[0]));
    }
    let n = k as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = unwrapped.iter().sum::<f64>() / n;
    let sxy: f64 = unwrapped
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - xm) * (y - ym))
        .sum();
    let sxx: f64 = (0..k).map(|i| (i as f64 - xm).powi(2)).sum();
    let slope = sxy / sxx;
    let expect = TAU
        * p.period_s
        * (s.f_d_target + s.v_rx / p.wavelength_m * ((s.aoa_target - s.eta).cos() - s.eta.cos()));
    assert!((slope - expect).abs() < 1e-9, "{slope} vs {expect}");
}

#[test]
fn averaged_differences_equal_model_when_noiseless() {
    let p = ProfileId::Ghz28.profile();
    let s = sample_scenario(&p, 4, &mut rng(9)).unwrap();
    let panel = noiseless_panel(&s, &p, 90, 10);
    let diff = diff_series(&panel).unwrap();
    let g = g_model(&s.theta(), &s.aoas()[1..], p.wavelength_m, p.period_s);
    for (d, m) in diff.delta_bar.iter().zip(&g) {
        assert!((d - m).abs() < 1e-10, "{d} vs {m}");
    }
}

#[test]
fn end_to_end_noiseless() {
    for id in ProfileId::ALL {
        let p = id.profile();
        let mut r = rng(60);
        for _ in 0..25 {
            let n_static = r.random_range(2..=8);
            let s = sample_scenario(&p, n_static, &mut r).unwrap();
            let panel = noiseless_panel(&s, &p, 96, r.random());
            let est = estimate(&panel, p.wavelength_m, &EstimatorConfig::default()).unwrap();
            assert!(
                rel(est.f_d_target, s.f_d_target) < 1e-8,
                "{id}: {est:?} vs {s:?}"
            );
        }
    }
}

#[test]
fn static_receiver_paths_agree() {
    let p = ProfileId::Ghz5.profile();
    let mut s = sample_scenario(&p, 2, &mut rng(70)).unwrap();
    s.v_rx = 0.0;
    let panel = noiseless_panel(&s, &p, 32, 71);
    let baseline = static_baseline(&panel).unwrap();
    assert!(rel(baseline, s.f_d_target) < 1e-9);
    let cfg = EstimatorConfig {
        static_rx: true,
        ..EstimatorConfig::default()
    };
    let est = estimate(&panel, p.wavelength_m, &cfg).unwrap();
    assert_eq!(est.f_d_target, baseline);
    assert_eq!(est.branch, Branch::StaticRx);
}

#[test]
fn pair_cap_is_deterministic() {
    assert_eq!(static_pairs(2, 20), vec![(1, 2)]);
    assert_eq!(static_pairs(6, 20).len(), 15);
    let a = static_pairs(8, 20);
    assert_eq!(a.len(), 20);
    assert_eq!(a, static_pairs(8, 20));
}
