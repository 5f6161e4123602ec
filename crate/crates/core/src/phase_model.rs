//! Phase-domain forward model of the per-path CIR phases.
//!
//! Every frame `k` carries a common nuisance `Ψ_o(kT) = ψ_o(kT) + 2π f_o(kT) kT`
//! on top of each path's reflectivity phase, its Doppler progression and
//! Gaussian phase noise. Observations are wrapped to `[0, 2π)`.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::angle::{rad_to_word, turns_to_word, word_add, word_to_rad};
use crate::error::{Error, Result};
use crate::scenario::{bistatic_angles, CarrierProfile, Scenario};

pub const DEFAULT_SIGMA_PO: f64 = FRAC_PI_2;

/// Per-frame CFO, phase offset and their combined phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceTrace {
    pub period_s: f64,
    /// `f_o(kT)` (Hz).
    pub cfo: Vec<f64>,
    /// `ψ_o(kT)` (rad).
    pub po: Vec<f64>,
    /// `Ψ_o(kT)` (rad).
    pub combined: Vec<f64>,
}

impl NuisanceTrace {
    pub fn zeros(k: usize, period_s: f64) -> Self {
        NuisanceTrace {
            period_s,
            cfo: vec![0.0; k],
            po: vec![0.0; k],
            combined: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.cfo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cfo.is_empty()
    }

    pub fn combined_at(po: f64, cfo: f64, k: usize, period_s: f64) -> f64 {
        po + TAU * cfo * k as f64 * period_s
    }

    /// The combined offset of frame `k` as a phase word, reduced in turns so
    /// that large CFO·kT products keep their fractional precision.
    pub fn word(&self, k: usize) -> u64 {
        let turns = self.po[k] / TAU + self.cfo[k] * k as f64 * self.period_s;
        turns_to_word(turns)
    }
}

/// Draws i.i.d. Gaussian CFO (std `profile.sigma_cfo_hz`, times `cfo_scale`)
/// and PO (std `sigma_po`) for `k` frames.
pub fn synthesize_nuisance<R: Rng + ?Sized>(
    profile: &CarrierProfile,
    k: usize,
    sigma_po: f64,
    cfo_scale: f64,
    rng: &mut R,
) -> Result<NuisanceTrace> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need K >= 2 frames, got {k}"
        )));
    }
    let sigma_cfo = profile.sigma_cfo_hz * cfo_scale;
    let cfo_dist =
        Normal::new(0.0, sigma_cfo).map_err(|e| Error::InvalidArgument(format!("CFO std: {e}")))?;
    let po_dist =
        Normal::new(0.0, sigma_po).map_err(|e| Error::InvalidArgument(format!("PO std: {e}")))?;
    let mut cfo = Vec::with_capacity(k);
    let mut po = Vec::with_capacity(k);
    for _ in 0..k {
        cfo.push(cfo_dist.sample(rng));
        po.push(po_dist.sample(rng));
    }
    let combined = (0..k)
        .map(|i| NuisanceTrace::combined_at(po[i], cfo[i], i, profile.period_s))
        .collect();
    Ok(NuisanceTrace {
        period_s: profile.period_s,
        cfo,
        po,
        combined,
    })
}

/// Phase-noise std for a complex observation at the given SNR, using the
/// small-angle result `σ_w = 1 / sqrt(2 · SNR)`. Infinite SNR gives 0.
pub fn phase_noise_std(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    1.0 / (2.0 * 10f64.powf(snr_db / 10.0)).sqrt()
}

/// K×(S+2) wrapped phase observations plus noisy AoAs.
///
/// Columns are `[LoS, target, static_1..static_S]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePanel {
    pub n_frames: usize,
    pub period_s: f64,
    pub n_paths: usize,
    /// Row-major `n_frames × n_paths`, radians in `[0, 2π)`.
    pub phases: Vec<f64>,
    /// Measured AoA per path (LoS fixed at 0), canonical order.
    pub aoa_meas: Vec<f64>,
    /// Ground truth `(f_D,t, η, v_rx)` for scoring, when known.
    pub true_theta: Option<[f64; 3]>,
    /// Path coefficients `A_i` as `(re, im)`.
    pub path_gains: Vec<(f64, f64)>,
}

impl PhasePanel {
    pub fn n_static(&self) -> usize {
        self.n_paths - 2
    }

    pub fn phase(&self, k: usize, path: usize) -> f64 {
        self.phases[k * self.n_paths + path]
    }

    pub fn column(&self, path: usize) -> Vec<f64> {
        (0..self.n_frames).map(|k| self.phase(k, path)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 4 {
            return Err(Error::InvalidArgument(format!(
                "panel needs LoS, target and >= 2 statics, has {} paths",
                self.n_paths
            )));
        }
        if self.n_frames < 2 {
            return Err(Error::InvalidArgument("panel needs K >= 2".into()));
        }
        if self.phases.len() != self.n_frames * self.n_paths {
            return Err(Error::LengthMismatch {
                expected: self.n_frames * self.n_paths,
                actual: self.phases.len(),
            });
        }
        if self.aoa_meas.len() != self.n_paths {
            return Err(Error::LengthMismatch {
                expected: self.n_paths,
                actual: self.aoa_meas.len(),
            });
        }
        if let Some(bad) = self.phases.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "phase {bad} outside [0, 2π)"
            )));
        }
        Ok(())
    }
}

/// Settings for [`synthesize_panel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelSettings {
    pub n_frames: usize,
    /// CIR-peak SNR (dB); `f64::INFINITY` disables phase noise.
    pub snr_db: f64,
    pub sigma_aoa: f64,
    /// Draw reflectivity phases `∠A_i ~ U(0, 2π)`; when false they are 0.
    pub random_reflectivity: bool,
}

impl PanelSettings {
    pub fn new(n_frames: usize, snr_db: f64, sigma_aoa: f64) -> Self {
        PanelSettings {
            n_frames,
            snr_db,
            sigma_aoa,
            random_reflectivity: true,
        }
    }
}

/// Total per-path frequency (Hz) in canonical order: RX-motion Doppler for
/// every path plus the target Doppler on the target path.
pub fn path_frequencies(scenario: &Scenario, wavelength_m: f64) -> Vec<f64> {
    let mut out: Vec<f64> = bistatic_angles(scenario)
        .iter()
        .map(|a| scenario.v_rx * a.cos_xi / wavelength_m)
        .collect();
    out[1] += scenario.f_d_target;
    out
}

/// Synthesizes the wrapped phase panel for `scenario` under `nuisance`.
///
/// Draw order from `rng`: reflectivity phases, then per frame the phase noise
/// of every path, then the AoA errors. The nuisance is added as an exact
/// phase-word offset, so swapping traces changes no LoS-referenced phase.
pub fn synthesize_panel<R: Rng + ?Sized>(
    scenario: &Scenario,
    profile: &CarrierProfile,
    nuisance: &NuisanceTrace,
    settings: &PanelSettings,
    rng: &mut R,
) -> Result<PhasePanel> {
    let k_frames = settings.n_frames;
    if k_frames < 2 {
        return Err(Error::InvalidArgument(format!(
            "need K >= 2 frames, got {k_frames}"
        )));
    }
    if nuisance.len() != k_frames {
        return Err(Error::LengthMismatch {
            expected: k_frames,
            actual: nuisance.len(),
        });
    }
    let n_paths = scenario.n_paths();
    let period = profile.period_s;
    let freqs = path_frequencies(scenario, profile.wavelength_m);

    let refl: Vec<f64> = if settings.random_reflectivity {
        let u = Uniform::new(0.0, TAU).expect("valid range");
        (0..n_paths).map(|_| u.sample(rng)).collect()
    } else {
        vec![0.0; n_paths]
    };

    let sigma_w = phase_noise_std(settings.snr_db);
    let noise = if sigma_w > 0.0 {
        Some(Normal::new(0.0, sigma_w).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let mut phases = Vec::with_capacity(k_frames * n_paths);
    for k in 0..k_frames {
        let offset = nuisance.word(k);
        let t = k as f64 * period;
        for i in 0..n_paths {
            let w = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            // path term in turns keeps the Doppler progression precise
            let turns = (refl[i] + w) / TAU + freqs[i] * t;
            phases.push(word_to_rad(word_add(offset, turns_to_word(turns))));
        }
    }

    let aoa_true = scenario.aoas();
    let aoa_meas = if settings.sigma_aoa > 0.0 {
        let d = Normal::new(0.0, settings.sigma_aoa)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        aoa_true
            .iter()
            .enumerate()
            .map(|(i, a)| if i == 0 { 0.0 } else { a + d.sample(rng) })
            .collect()
    } else {
        aoa_true
    };

    Ok(PhasePanel {
        n_frames: k_frames,
        period_s: period,
        n_paths,
        phases,
        aoa_meas,
        true_theta: Some(scenario.theta()),
        path_gains: refl.iter().map(|p| (p.cos(), p.sin())).collect(),
    })
}

/// Quantizes an arbitrary radian value the way panel phases are stored.
pub fn quantize_phase(rad: f64) -> f64 {
    word_to_rad(rad_to_word(rad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::wrap_pi;
    use crate::scenario::{sample_scenario, ProfileId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_variance_nuisance_is_zero() {
        let mut p = ProfileId::Ghz60.profile();
        p.sigma_cfo_hz = 0.0;
        let n = synthesize_nuisance(&p, 50, 0.0, 1.0, &mut rng(1)).unwrap();
        assert!(n.combined.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn nuisance_po_std() {
        let p = ProfileId::Ghz28.profile();
        let n = synthesize_nuisance(&p, 1000, 1.0, 1.0, &mut rng(2)).unwrap();
        let mean = n.po.iter().sum::<f64>() / 1000.0;
        let var = n.po.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((var.sqrt() - 1.0).abs() < 0.05, "{}", var.sqrt());
    }

    #[test]
    fn nuisance_combined_definition() {
        let p = ProfileId::Ghz5.profile();
        let n = synthesize_nuisance(&p, 64, 0.7, 1.0, &mut rng(3)).unwrap();
        for k in 0..64 {
            let expect = TAU * n.cfo[k] * k as f64 * p.period_s;
            assert_eq!(n.combined[k] - n.po[k], expect);
            assert_eq!(
                n.combined[k],
                NuisanceTrace::combined_at(n.po[k], n.cfo[k], k, p.period_s)
            );
        }
    }

    #[test]
    fn rejects_single_frame() {
        let p = ProfileId::Ghz5.profile();
        assert!(synthesize_nuisance(&p, 1, 0.7, 1.0, &mut rng(3)).is_err());
    }

    #[test]
    fn noiseless_target_column_is_pure_doppler() {
        let p = ProfileId::Ghz60.profile();
        let mut s = sample_scenario(&p, 2, &mut rng(4)).unwrap();
        s.v_rx = 0.0;
        let k = 96;
        let settings = PanelSettings {
            random_reflectivity: false,
            ..PanelSettings::new(k, f64::INFINITY, 0.0)
        };
        let panel = synthesize_panel(
            &s,
            &p,
            &NuisanceTrace::zeros(k, p.period_s),
            &settings,
            &mut rng(5),
        )
        .unwrap();
        panel.validate().unwrap();
        for kk in 0..k {
            let expect = crate::angle::wrap_2pi(TAU * kk as f64 * p.period_s * s.f_d_target);
            let got = panel.phase(kk, 1);
            assert!(wrap_pi(got - expect).abs() < 1e-9, "k={kk}");
        }
    }

    #[test]
    fn static_scene_shows_only_common_mode() {
        let p = ProfileId::Ghz28.profile();
        let mut s = sample_scenario(&p, 3, &mut rng(6)).unwrap();
        s.v_rx = 0.0;
        s.f_d_target = 0.0;
        let k = 40;
        let nuis = synthesize_nuisance(&p, k, 1.0, 1.0, &mut rng(7)).unwrap();
        let panel = synthesize_panel(
            &s,
            &p,
            &nuis,
            &PanelSettings::new(k, f64::INFINITY, 0.0),
            &mut rng(8),
        )
        .unwrap();
        for kk in 0..k {
            let common = wrap_pi(nuis.combined[kk] - nuis.combined[0]);
            for i in 0..panel.n_paths {
                let d = wrap_pi(panel.phase(kk, i) - panel.phase(0, i));
                assert!(wrap_pi(d - common).abs() < 1e-6, "k={kk} i={i}");
            }
        }
    }

    #[test]
    fn frame_zero_has_no_doppler_term() {
        let p = ProfileId::Ghz60.profile();
        let s = sample_scenario(&p, 2, &mut rng(9)).unwrap();
        let nuis = synthesize_nuisance(&p, 8, 1.0, 1.0, &mut rng(10)).unwrap();
        let panel = synthesize_panel(
            &s,
            &p,
            &nuis,
            &PanelSettings::new(8, f64::INFINITY, 0.0),
            &mut rng(11),
        )
        .unwrap();
        let (re, im) = panel.path_gains[1];
        let expect = nuis.combined[0] + im.atan2(re);
        assert!(wrap_pi(panel.phase(0, 1) - expect).abs() < 1e-9);
    }

    #[test]
    fn common_mode_differences_ignore_nuisance() {
        let p = ProfileId::Ghz60.profile();
        let s = sample_scenario(&p, 4, &mut rng(12)).unwrap();
        let k = 30;
        let settings = PanelSettings::new(k, f64::INFINITY, 0.0);
        let a = synthesize_nuisance(&p, k, 1.0, 1.0, &mut rng(13)).unwrap();
        let b = synthesize_nuisance(&p, k, 3.0, 10.0, &mut rng(14)).unwrap();
        let pa = synthesize_panel(&s, &p, &a, &settings, &mut rng(15)).unwrap();
        let pb = synthesize_panel(&s, &p, &b, &settings, &mut rng(15)).unwrap();
        for kk in 0..k {
            for i in 1..pa.n_paths {
                let da = rad_to_word(pa.phase(kk, i)).wrapping_sub(rad_to_word(pa.phase(kk, 0)));
                let db = rad_to_word(pb.phase(kk, i)).wrapping_sub(rad_to_word(pb.phase(kk, 0)));
                assert_eq!(
                    da & (crate::angle::PHASE_MODULUS - 1),
                    db & (crate::angle::PHASE_MODULUS - 1)
                );
            }
        }
    }

    #[test]
    fn noise_variance_decreases_with_snr() {
        let p = ProfileId::Ghz60.profile();
        let s = sample_scenario(&p, 2, &mut rng(16)).unwrap();
        let k = 400;
        let clean = synthesize_panel(
            &s,
            &p,
            &NuisanceTrace::zeros(k, p.period_s),
            &PanelSettings::new(k, f64::INFINITY, 0.0),
            &mut rng(17),
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for snr in [0.0, 5.0, 10.0, 20.0] {
            let noisy = synthesize_panel(
                &s,
                &p,
                &NuisanceTrace::zeros(k, p.period_s),
                &PanelSettings::new(k, snr, 0.0),
                &mut rng(17),
            )
            .unwrap();
            let var = noisy
                .phases
                .iter()
                .zip(&clean.phases)
                .map(|(a, b)| wrap_pi(a - b).powi(2))
                .sum::<f64>()
                / noisy.phases.len() as f64;
            assert!(var < last, "snr {snr}: {var} !< {last}");
            let expect = phase_noise_std(snr).powi(2);
            assert!(
                (var / expect - 1.0).abs() < 0.15,
                "snr {snr}: {var} vs {expect}"
            );
            last = var;
        }
    }

    #[test]
    fn aoa_noise_leaves_los_at_zero() {
        let p = ProfileId::Ghz5.profile();
        let s = sample_scenario(&p, 3, &mut rng(18)).unwrap();
        let panel = synthesize_panel(
            &s,
            &p,
            &NuisanceTrace::zeros(4, p.period_s),
            &PanelSettings::new(4, 10.0, 0.1),
            &mut rng(19),
        )
        .unwrap();
        assert_eq!(panel.aoa_meas[0], 0.0);
        assert!(panel.aoa_meas[1..]
            .iter()
            .zip(&s.aoas()[1..])
            .all(|(m, t)| m != t));
    }

    #[test]
    fn noise_std_mapping() {
        assert_eq!(phase_noise_std(f64::INFINITY), 0.0);
        assert!((phase_noise_std(0.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((phase_noise_std(20.0) - 1.0 / 200f64.sqrt()).abs() < 1e-15);
    }
}
