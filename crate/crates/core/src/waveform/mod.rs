//! Signal-level pilot transmission through the discrete multipath channel.
//!
//! A pilot (a Golay complementary pair for single-carrier profiles, one BPSK
//! OFDM symbol otherwise) is sent through a tapped-delay-line channel with
//! per-tap Doppler, the common nuisance phase and AWGN. The receiver
//! re-estimates the CIR and reads each path's phase at its delay bin.
//!
//! SNR here is per received sample, referenced to a unit-amplitude tap.
//! The CIR estimator has processing gain `G` (`2·L_g` for Golay, `N_sc` for
//! OFDM): pure-noise CIR bins have variance `noise_var / G`, so a unit tap at
//! per-sample SNR `ρ` has peak phase-noise std `1/√(2·ρ·G)` at high SNR.

mod golay;

use std::cell::RefCell;
use std::f64::consts::{PI, SQRT_2, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use golay::{autocorrelation, golay_pair};

use crate::angle::wrap_2pi;
use crate::error::{Error, Result};
use crate::phase_model::{path_frequencies, NuisanceTrace, PanelSettings, PhasePanel};
use crate::scenario::{CarrierProfile, Scenario, WaveformKind, SPEED_OF_LIGHT};

pub const DEFAULT_GOLAY_LEN: usize = 128;

/// Taps of the fractional-delay interpolator.
pub const INTERP_TAPS: usize = 8;
const INTERP_HALF: usize = INTERP_TAPS / 2;
const KAISER_BETA: f64 = 5.0;

/// Delays closer to the sample grid than this are applied as pure shifts.
const ON_GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PilotWaveform {
    pub kind: WaveformKind,
    /// Transmitted baseband samples including guard intervals.
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub golay_pair: Option<(Vec<f64>, Vec<f64>)>,
    /// Frequency-domain BPSK pilots, one per subcarrier.
    pub pilot_symbols: Option<Vec<f64>>,
    pub n_subcarriers: usize,
    /// Zero gap after each Golay sequence, or the OFDM cyclic prefix length.
    pub guard: usize,
    /// Number of delay bins returned by [`estimate_cir`].
    pub cir_len: usize,
}

impl PilotWaveform {
    /// Largest tap delay (samples) [`propagate`] accepts.
    pub fn max_delay_samples(&self) -> f64 {
        (self.cir_len - INTERP_HALF - 2) as f64
    }
}

/// CIR processing gain `G`: noise per CIR bin is `noise_var / G`.
pub fn processing_gain(pilot: &PilotWaveform) -> f64 {
    match pilot.kind {
        WaveformKind::GolaySc => {
            let len = pilot.golay_pair.as_ref().map_or(0, |(a, _)| a.len());
            2.0 * len as f64
        }
        WaveformKind::OfdmBpsk => pilot.n_subcarriers as f64,
    }
}

/// Upper bound on the excess delay (samples) of any path inside the
/// profile's area, with TX at a corner.
pub fn max_excess_delay_samples(profile: &CarrierProfile) -> f64 {
    2.0 * SQRT_2 * profile.area_side_m / SPEED_OF_LIGHT * profile.bandwidth_hz
}

/// OFDM subcarrier count `round(B / Δf)`, halves rounded away from zero.
pub fn ofdm_subcarriers(bandwidth_hz: f64, spacing_hz: f64) -> usize {
    (bandwidth_hz / spacing_hz).round() as usize
}

pub fn make_pilot<R: Rng + ?Sized>(profile: &CarrierProfile, rng: &mut R) -> Result<PilotWaveform> {
    make_pilot_with(profile, DEFAULT_GOLAY_LEN, rng)
}

/// Builds the profile's pilot. `golay_len` must be a power of two; the OFDM
/// cyclic prefix is a quarter of the symbol and must cover the delay spread.
pub fn make_pilot_with<R: Rng + ?Sized>(
    profile: &CarrierProfile,
    golay_len: usize,
    rng: &mut R,
) -> Result<PilotWaveform> {
    let needed = max_excess_delay_samples(profile).ceil() as usize + INTERP_HALF + 3;
    match profile.waveform {
        WaveformKind::GolaySc => {
            let (a, b) = golay_pair(golay_len).ok_or_else(|| {
                Error::InvalidProfile(format!(
                    "Golay length {golay_len} is not a power of two >= 1"
                ))
            })?;
            let cir_len = needed;
            let guard = cir_len + INTERP_HALF;
            let zeros = std::iter::repeat_n(Complex64::new(0.0, 0.0), guard);
            let samples: Vec<Complex64> = a
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .chain(zeros.clone())
                .chain(b.iter().map(|&x| Complex64::new(x, 0.0)))
                .chain(zeros)
                .collect();
            Ok(PilotWaveform {
                kind: WaveformKind::GolaySc,
                samples,
                sample_rate: profile.bandwidth_hz,
                golay_pair: Some((a, b)),
                pilot_symbols: None,
                n_subcarriers: 0,
                guard,
                cir_len,
            })
        }
        WaveformKind::OfdmBpsk => {
            let spacing = profile.subcarrier_spacing_hz.ok_or_else(|| {
                Error::InvalidProfile(format!("{}: OFDM needs a subcarrier spacing", profile.name))
            })?;
            let n = ofdm_subcarriers(profile.bandwidth_hz, spacing);
            if n < 2 {
                return Err(Error::InvalidProfile(format!(
                    "{}: {n} subcarriers",
                    profile.name
                )));
            }
            let cp = n / 4;
            if cp < needed {
                return Err(Error::InvalidProfile(format!(
                    "{}: cyclic prefix of {cp} samples is shorter than the delay spread ({needed})",
                    profile.name
                )));
            }
            let symbols: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let mut time: Vec<Complex64> =
                symbols.iter().map(|&s| Complex64::new(s, 0.0)).collect();
            fft(&mut time, true);
            let norm = 1.0 / (n as f64).sqrt();
            time.iter_mut().for_each(|x| *x *= norm);
            let samples: Vec<Complex64> = time[n - cp..].iter().chain(&time).copied().collect();
            Ok(PilotWaveform {
                kind: WaveformKind::OfdmBpsk,
                samples,
                sample_rate: profile.bandwidth_hz,
                golay_pair: None,
                pilot_symbols: Some(symbols),
                n_subcarriers: n,
                guard: cp,
                cir_len: cp,
            })
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place DFT (`inverse` flips the exponent sign).
fn fft(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// `τ_m` (s), relative to the first sample of the pilot.
    pub delay_s: f64,
    pub gain: Complex64,
    /// Total per-path frequency `f_m` (Hz).
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    /// Sorted by delay.
    pub taps: Vec<Tap>,
    /// Per-sample complex AWGN variance.
    pub noise_var: f64,
    /// Timing offset `τ_o` (s) shared by every tap.
    pub timing_offset_s: f64,
    /// Common nuisance phase `Ψ_o(kT)` of the frame (rad).
    pub common_phase: f64,
}

impl TapChannel {
    pub fn new(mut taps: Vec<Tap>, noise_var: f64) -> Self {
        taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
        TapChannel {
            taps,
            noise_var,
            timing_offset_s: 0.0,
            common_phase: 0.0,
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Interpolator taps `(offset, weight)` realizing a delay of `delay`
/// samples: `y[j] = Σ w · x[j − offset]`.
fn delay_taps(delay: f64) -> Vec<(isize, f64)> {
    let int = delay.floor();
    let frac = delay - int;
    let int = int as isize;
    if frac < ON_GRID_TOL {
        return vec![(int, 1.0)];
    }
    if 1.0 - frac < ON_GRID_TOL {
        return vec![(int + 1, 1.0)];
    }
    let half = INTERP_HALF as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    (1 - INTERP_HALF as isize..=INTERP_HALF as isize)
        .map(|n| {
            let x = n as f64 - frac;
            let r = (x / half).clamp(-1.0, 1.0);
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
            (int + n, sinc(x) * window)
        })
        .collect()
}

/// Received samples of frame `k`: every tap applies
/// `A_m·e^{j(2π f_m kT + Ψ_o)}` and its (fractional) delay, then AWGN is
/// added. The output has the length of the pilot.
pub fn propagate<R: Rng + ?Sized>(
    pilot: &PilotWaveform,
    chan: &TapChannel,
    frame: usize,
    period_s: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let n = pilot.samples.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let t = frame as f64 * period_s;
    for tap in &chan.taps {
        let delay = (tap.delay_s + chan.timing_offset_s) * pilot.sample_rate;
        if !(0.0..=pilot.max_delay_samples()).contains(&delay) {
            return Err(Error::DelayBeyondBuffer {
                delay_samples: delay,
                capacity: pilot.max_delay_samples(),
            });
        }
        let turns = (tap.doppler_hz * t).rem_euclid(1.0);
        let rot = Complex64::from_polar(1.0, TAU * turns + chan.common_phase);
        let gain = tap.gain * rot;
        for (offset, w) in delay_taps(delay) {
            let g = gain * w;
            for (j, o) in out.iter_mut().enumerate() {
                let src = j as isize - offset;
                if (0..n as isize).contains(&src) {
                    *o += g * pilot.samples[src as usize];
                }
            }
        }
    }
    if chan.noise_var > 0.0 {
        let d = Normal::new(0.0, (chan.noise_var / 2.0).sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for o in out.iter_mut() {
            *o += Complex64::new(d.sample(rng), d.sample(rng));
        }
    }
    Ok(out)
}

/// Re-estimates the CIR over `pilot.cir_len` delay bins. A unit tap at bin
/// `l` yields `ĥ[l] = 1`.
pub fn estimate_cir(received: &[Complex64], pilot: &PilotWaveform) -> Result<Vec<Complex64>> {
    if received.len() != pilot.samples.len() {
        return Err(Error::LengthMismatch {
            expected: pilot.samples.len(),
            actual: received.len(),
        });
    }
    match pilot.kind {
        WaveformKind::GolaySc => {
            let (a, b) = pilot
                .golay_pair
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("Golay pilot without its pair".into()))?;
            let len = a.len();
            let b_start = len + pilot.guard;
            let norm = 1.0 / (2 * len) as f64;
            Ok((0..pilot.cir_len)
                .map(|l| {
                    let ca: Complex64 = a
                        .iter()
                        .enumerate()
                        .map(|(n, &x)| received[n + l] * x)
                        .sum();
                    let cb: Complex64 = b
                        .iter()
                        .enumerate()
                        .map(|(n, &x)| received[b_start + n + l] * x)
                        .sum();
                    (ca + cb) * norm
                })
                .collect())
        }
        WaveformKind::OfdmBpsk => {
            let symbols = pilot
                .pilot_symbols
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("OFDM pilot without its symbols".into()))?;
            let n = pilot.n_subcarriers;
            let mut buf = received[pilot.guard..pilot.guard + n].to_vec();
            fft(&mut buf, false);
            let unitary = 1.0 / (n as f64).sqrt();
            for (y, x) in buf.iter_mut().zip(symbols) {
                *y *= unitary / x;
            }
            fft(&mut buf, true);
            let inv_n = 1.0 / n as f64;
            Ok(buf[..pilot.cir_len].iter().map(|h| h * inv_n).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// A path is missing at a frame when its peak power falls below the
    /// mean noise power per bin by more than this (dB).
    pub threshold_db: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            threshold_db: -20.0,
        }
    }
}

/// Mean noise power per bin from the median power of the bins away from
/// every expected path (exponential distribution: mean = median / ln 2).
fn noise_floor(cir: &[Complex64], expected_bins: &[usize]) -> f64 {
    let near = |l: usize| expected_bins.iter().any(|&b| l.abs_diff(b) <= 1);
    let mut power: Vec<f64> = (0..cir.len())
        .filter(|&l| !near(l))
        .map(|l| cir[l].norm_sqr())
        .collect();
    if power.is_empty() {
        power = cir.iter().map(|h| h.norm_sqr()).collect();
    }
    power.sort_by(f64::total_cmp);
    let m = power.len();
    let median = if m % 2 == 1 {
        power[m / 2]
    } else {
        0.5 * (power[m / 2 - 1] + power[m / 2])
    };
    median / std::f64::consts::LN_2
}

/// Phase matrix (`K × n_paths`, row-major, `[0, 2π)`) read from per-frame
/// CIRs at the expected bins, each refined to the strongest bin within ±1
/// that is not another path's expected bin.
pub fn extract_path_phases(
    cirs: &[Vec<Complex64>],
    expected_bins: &[usize],
    detection: &DetectionConfig,
) -> Result<Vec<f64>> {
    for i in 0..expected_bins.len() {
        for j in i + 1..expected_bins.len() {
            if expected_bins[i] == expected_bins[j] {
                return Err(Error::UnresolvablePaths {
                    first: i,
                    second: j,
                });
            }
        }
    }
    let ratio = 10f64.powf(detection.threshold_db / 10.0);
    let mut out = Vec::with_capacity(cirs.len() * expected_bins.len());
    for (k, cir) in cirs.iter().enumerate() {
        let floor = noise_floor(cir, expected_bins);
        for (path, &bin) in expected_bins.iter().enumerate() {
            if bin >= cir.len() {
                return Err(Error::DelayBeyondBuffer {
                    delay_samples: bin as f64,
                    capacity: cir.len() as f64,
                });
            }
            let best = (bin.saturating_sub(1)..=(bin + 1).min(cir.len() - 1))
                .filter(|&l| l == bin || !expected_bins.contains(&l))
                .max_by(|&x, &y| cir[x].norm_sqr().total_cmp(&cir[y].norm_sqr()))
                .unwrap_or(bin);
            let power = cir[best].norm_sqr();
            if !(power > 0.0 && power >= ratio * floor) {
                return Err(Error::PathMissing { frame: k, path });
            }
            out.push(wrap_2pi(cir[best].arg()));
        }
    }
    Ok(out)
}

/// Path amplitude model for the waveform route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGainModel {
    /// Every path has unit amplitude, matching the phase-domain model.
    #[default]
    Unit,
    /// Amplitude `d_LoS / d_m` (spherical spreading relative to the LoS).
    Spreading,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSettings {
    pub gain_model: PathGainModel,
    /// Round path delays to the sample grid.
    pub on_grid: bool,
    pub detection: DetectionConfig,
    pub golay_len: usize,
}

impl Default for WaveformSettings {
    fn default() -> Self {
        WaveformSettings {
            gain_model: PathGainModel::Unit,
            on_grid: false,
            detection: DetectionConfig::default(),
            golay_len: DEFAULT_GOLAY_LEN,
        }
    }
}

/// Per-sample noise variance giving CIR-peak SNR `snr_db` for a unit tap.
pub fn noise_var_for_peak_snr(snr_db: f64, gain: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        gain / 10f64.powf(snr_db / 10.0)
    }
}

/// Waveform-level counterpart of `phase_model::synthesize_panel`.
///
/// `settings.snr_db` is the CIR-peak SNR of a unit tap, so the per-sample
/// SNR is lower by the processing gain. Delays are referenced to the LoS
/// (the receiver is synchronized to it) and held constant over the window.
/// Draw order: reflectivity phases, OFDM pilot symbols, per-frame noise,
/// AoA errors.
pub fn synthesize_panel_waveform<R: Rng + ?Sized>(
    scenario: &Scenario,
    profile: &CarrierProfile,
    nuisance: &NuisanceTrace,
    settings: &PanelSettings,
    wf: &WaveformSettings,
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
    let refl: Vec<f64> = if settings.random_reflectivity {
        let u = Uniform::new(0.0, TAU).expect("valid range");
        (0..n_paths).map(|_| u.sample(rng)).collect()
    } else {
        vec![0.0; n_paths]
    };
    let pilot = make_pilot_with(profile, wf.golay_len, rng)?;

    let lengths = scenario.path_lengths();
    let fs = profile.bandwidth_hz;
    let delays: Vec<f64> = lengths
        .iter()
        .map(|d| {
            let samples = (d - lengths[0]) / SPEED_OF_LIGHT * fs;
            if wf.on_grid {
                samples.round() / fs
            } else {
                samples / fs
            }
        })
        .collect();
    let bins: Vec<usize> = delays.iter().map(|t| (t * fs).round() as usize).collect();
    let freqs = path_frequencies(scenario, profile.wavelength_m);
    let taps: Vec<Tap> = (0..n_paths)
        .map(|i| {
            let amp = match wf.gain_model {
                PathGainModel::Unit => 1.0,
                PathGainModel::Spreading => lengths[0] / lengths[i],
            };
            Tap {
                delay_s: delays[i],
                gain: Complex64::from_polar(amp, refl[i]),
                doppler_hz: freqs[i],
            }
        })
        .collect();
    let mut chan = TapChannel::new(
        taps,
        noise_var_for_peak_snr(settings.snr_db, processing_gain(&pilot)),
    );

    let mut cirs = Vec::with_capacity(k_frames);
    for k in 0..k_frames {
        chan.common_phase = nuisance.combined[k];
        let rx = propagate(&pilot, &chan, k, profile.period_s, rng)?;
        cirs.push(estimate_cir(&rx, &pilot)?);
    }
    let phases = extract_path_phases(&cirs, &bins, &wf.detection)?;

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
        period_s: profile.period_s,
        n_paths,
        phases,
        aoa_meas,
        true_theta: Some(scenario.theta()),
        path_gains: refl.iter().map(|p| (p.cos(), p.sin())).collect(),
    })
}
