//! Carrier profiles and randomized 2-D bistatic geometries.
//!
//! The TX sits at the origin corner of an `s × s` mobility area; the RX,
//! the target and the static scatterers are drawn uniformly inside it.
//! Angles of arrival are measured at the RX from the LoS arrival direction
//! (counter-clockwise positive), and the RX heading `eta` is measured from
//! the elongation of the TX→RX segment, so that `cos ξ_i = cos(α_i − η)`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_pi;
use crate::error::{Error, Result};

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular margin used when rejecting near-degenerate geometries.
pub const DEFAULT_ANGLE_MARGIN: f64 = 2.0 * std::f64::consts::PI / 180.0;
pub const DEFAULT_MAX_DRAWS: usize = 1000;
const MIN_TX_RX_DISTANCE: f64 = 1.0;
const MIN_SCATTERER_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    GolaySc,
    OfdmBpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierProfile {
    pub name: String,
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: Option<f64>,
    /// Channel-estimation period `T` (s).
    pub period_s: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub area_side_m: f64,
    pub sigma_cfo_hz: f64,
    pub waveform: WaveformKind,
}

/// Identifiers of the three built-in profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileId {
    #[serde(rename = "60ghz")]
    Ghz60,
    #[serde(rename = "28ghz")]
    Ghz28,
    #[serde(rename = "5ghz")]
    Ghz5,
}

impl ProfileId {
    pub const ALL: [ProfileId; 3] = [ProfileId::Ghz60, ProfileId::Ghz28, ProfileId::Ghz5];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::Ghz60 => "60ghz",
            ProfileId::Ghz28 => "28ghz",
            ProfileId::Ghz5 => "5ghz",
        }
    }

    pub fn profile(self) -> CarrierProfile {
        match self {
            ProfileId::Ghz60 => CarrierProfile::new(
                "60ghz",
                60e9,
                1.76e9,
                None,
                0.166e-3,
                1000.0,
                5.0,
                20.0,
                0.22e6,
                WaveformKind::GolaySc,
            ),
            ProfileId::Ghz28 => CarrierProfile::new(
                "28ghz",
                28e9,
                0.4e9,
                Some(120e3),
                0.178e-3,
                930.0,
                10.0,
                50.0,
                0.12e6,
                WaveformKind::OfdmBpsk,
            ),
            ProfileId::Ghz5 => CarrierProfile::new(
                "5ghz",
                5e9,
                0.16e9,
                Some(78.125e3),
                0.5e-3,
                300.0,
                20.0,
                100.0,
                0.02e6,
                WaveformKind::OfdmBpsk,
            ),
        }
    }
}

impl std::str::FromStr for ProfileId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "60ghz" | "60" => Ok(ProfileId::Ghz60),
            "28ghz" | "28" => Ok(ProfileId::Ghz28),
            "5ghz" | "5" => Ok(ProfileId::Ghz5),
            other => Err(Error::InvalidProfile(format!(
                "unknown profile id {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for ProfileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl CarrierProfile {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        carrier_hz: f64,
        bandwidth_hz: f64,
        subcarrier_spacing_hz: Option<f64>,
        period_s: f64,
        f_max_hz: f64,
        v_max_mps: f64,
        area_side_m: f64,
        sigma_cfo_hz: f64,
        waveform: WaveformKind,
    ) -> Self {
        CarrierProfile {
            name: name.to_string(),
            carrier_hz,
            wavelength_m: SPEED_OF_LIGHT / carrier_hz,
            bandwidth_hz,
            subcarrier_spacing_hz,
            period_s,
            f_min_hz: 100.0,
            f_max_hz,
            v_min_mps: 0.5,
            v_max_mps,
            area_side_m,
            sigma_cfo_hz,
            waveform,
        }
    }

    /// Largest period for which noise-free frame-to-frame phase changes stay
    /// below π, i.e. `1 / (6 f_max)`.
    pub fn max_unambiguous_period(&self) -> f64 {
        1.0 / (6.0 * self.f_max_hz)
    }

    /// Same profile with the channel-estimation period scaled.
    pub fn with_period_scale(&self, scale: f64) -> Self {
        CarrierProfile {
            period_s: self.period_s * scale,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidProfile(format!("{}: {msg}", self.name)));
        let lambda = SPEED_OF_LIGHT / self.carrier_hz;
        if self.carrier_hz.is_nan()
            || self.carrier_hz <= 0.0
            || (self.wavelength_m - lambda).abs() > 1e-12 * lambda
        {
            return bad("wavelength must equal c / f_c");
        }
        if self.bandwidth_hz.is_nan() || self.bandwidth_hz <= 0.0 {
            return bad("bandwidth must be positive");
        }
        if self.area_side_m.is_nan() || self.area_side_m <= 0.0 {
            return bad("area side must be positive");
        }
        if self.period_s.is_nan() || self.period_s <= 0.0 {
            return bad("period must be positive");
        }
        if !(self.f_min_hz > 0.0 && self.f_min_hz <= self.f_max_hz) {
            return bad("need 0 < f_min <= f_max");
        }
        if !(self.v_min_mps >= 0.0 && self.v_min_mps <= self.v_max_mps) {
            return bad("need 0 <= v_min <= v_max");
        }
        if self.sigma_cfo_hz.is_nan() || self.sigma_cfo_hz < 0.0 {
            return bad("CFO std must be non-negative");
        }
        if self.waveform == WaveformKind::OfdmBpsk
            && !self.subcarrier_spacing_hz.is_some_and(|d| d > 0.0)
        {
            return bad("OFDM needs a positive subcarrier spacing");
        }
        Ok(())
    }
}

/// 2-D point (m).
pub type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn heading(a: Point) -> f64 {
    a[1].atan2(a[0])
}

/// Geometric ground truth for one processing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tx_pos: Point,
    pub rx_pos: Point,
    pub target_pos: Point,
    pub static_pos: Vec<Point>,
    pub v_rx: f64,
    pub eta: f64,
    pub f_d_target: f64,
    pub aoa_los: f64,
    pub aoa_target: f64,
    pub aoa_static: Vec<f64>,
}

/// Per-path angles: AoA from geometry and ξ from the velocity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAngles {
    pub aoa: f64,
    /// Angle between the scatterer→RX elongation and the RX velocity, in `[0, π]`.
    pub xi: f64,
    pub cos_xi: f64,
}

/// Path index in the canonical `[LoS, target, static_1..static_S]` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathId {
    Los,
    Target,
    Static(usize),
}

impl PathId {
    pub fn column(self) -> usize {
        match self {
            PathId::Los => 0,
            PathId::Target => 1,
            PathId::Static(s) => 2 + s,
        }
    }
}

impl Scenario {
    pub fn n_static(&self) -> usize {
        self.static_pos.len()
    }

    pub fn n_paths(&self) -> usize {
        self.static_pos.len() + 2
    }

    /// Source point of each path in canonical order (the TX for the LoS).
    pub fn path_sources(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.n_paths());
        out.push(self.tx_pos);
        out.push(self.target_pos);
        out.extend_from_slice(&self.static_pos);
        out
    }

    /// AoAs in canonical order.
    pub fn aoas(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_paths());
        out.push(self.aoa_los);
        out.push(self.aoa_target);
        out.extend_from_slice(&self.aoa_static);
        out
    }

    /// Total propagation length of every path (m), canonical order.
    pub fn path_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_paths());
        out.push(norm(sub(self.rx_pos, self.tx_pos)));
        for p in std::iter::once(&self.target_pos).chain(self.static_pos.iter()) {
            out.push(norm(sub(*p, self.tx_pos)) + norm(sub(self.rx_pos, *p)));
        }
        out
    }

    /// Unit vector of the RX velocity.
    pub fn velocity_direction(&self) -> Point {
        let phi = heading(sub(self.rx_pos, self.tx_pos)) + self.eta;
        [phi.cos(), phi.sin()]
    }

    /// Ground-truth `(f_D,t, η, v_rx)`.
    pub fn theta(&self) -> [f64; 3] {
        [self.f_d_target, self.eta, self.v_rx]
    }
}

/// AoA of the path arriving from `source`, relative to the LoS arrival.
fn aoa_from(tx: Point, rx: Point, source: Point) -> f64 {
    wrap_pi(heading(sub(source, rx)) - heading(sub(tx, rx)))
}

/// Per-path `(α_i, ξ_i)` in canonical order, both computed from coordinates.
pub fn bistatic_angles(scenario: &Scenario) -> Vec<PathAngles> {
    let v_dir = scenario.velocity_direction();
    scenario
        .path_sources()
        .into_iter()
        .map(|src| {
            let aoa = aoa_from(scenario.tx_pos, scenario.rx_pos, src);
            let elong = sub(scenario.rx_pos, src);
            let n = norm(elong);
            let cos_xi = ((elong[0] * v_dir[0] + elong[1] * v_dir[1]) / n).clamp(-1.0, 1.0);
            PathAngles {
                aoa,
                xi: cos_xi.acos(),
                cos_xi,
            }
        })
        .collect()
}

/// RX-motion Doppler shift `v_rx cos ξ_i / λ` on `path` (Hz).
pub fn rx_doppler(scenario: &Scenario, wavelength_m: f64, path: PathId) -> f64 {
    let angles = bistatic_angles(scenario);
    scenario.v_rx * angles[path.column()].cos_xi / wavelength_m
}

/// Rejection rules applied by [`sample_scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub angle_margin: f64,
    pub max_draws: usize,
    /// When set, every pair of paths must differ in delay by at least this
    /// many samples at the profile bandwidth.
    pub min_delay_separation_samples: Option<f64>,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            angle_margin: DEFAULT_ANGLE_MARGIN,
            max_draws: DEFAULT_MAX_DRAWS,
            min_delay_separation_samples: None,
        }
    }
}

/// Checks conditions (i)–(iii) of the closed-form inversion with a margin:
/// no non-LoS AoA near 0, no two non-LoS AoAs within the margin, and no
/// static AoA near `2η`.
pub fn satisfies_margins(aoa_target: f64, aoa_static: &[f64], eta: f64, margin: f64) -> bool {
    let all: Vec<f64> = std::iter::once(aoa_target)
        .chain(aoa_static.iter().copied())
        .collect();
    if all.iter().any(|a| a.abs() < margin) {
        return false;
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if wrap_pi(all[i] - all[j]).abs() < margin {
                return false;
            }
        }
    }
    aoa_static
        .iter()
        .all(|a| wrap_pi(a - 2.0 * eta).abs() >= margin)
}

pub fn sample_scenario<R: Rng + ?Sized>(
    profile: &CarrierProfile,
    n_static: usize,
    rng: &mut R,
) -> Result<Scenario> {
    sample_scenario_with(profile, n_static, &SamplingOptions::default(), rng)
}

pub fn sample_scenario_with<R: Rng + ?Sized>(
    profile: &CarrierProfile,
    n_static: usize,
    opts: &SamplingOptions,
    rng: &mut R,
) -> Result<Scenario> {
    if n_static < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 static scatterers, got {n_static}"
        )));
    }
    profile.validate()?;

    let side = Uniform::new_inclusive(0.0, profile.area_side_m).expect("positive side");
    let doppler =
        Uniform::new_inclusive(profile.f_min_hz, profile.f_max_hz).expect("f_min <= f_max");
    let speed =
        Uniform::new_inclusive(profile.v_min_mps, profile.v_max_mps).expect("v_min <= v_max");
    let heading_dist = Uniform::new(0.0, TAU).expect("valid range");
    let tx = [0.0, 0.0];

    for _ in 0..opts.max_draws {
        let rx = [side.sample(rng), side.sample(rng)];
        let target = [side.sample(rng), side.sample(rng)];
        let statics: Vec<Point> = (0..n_static)
            .map(|_| [side.sample(rng), side.sample(rng)])
            .collect();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let f_d_target = sign * doppler.sample(rng);
        let v_rx = speed.sample(rng);
        let eta = heading_dist.sample(rng);

        if norm(sub(rx, tx)) < MIN_TX_RX_DISTANCE {
            continue;
        }
        let too_close = std::iter::once(&target).chain(statics.iter()).any(|p| {
            norm(sub(*p, rx)) < MIN_SCATTERER_DISTANCE || norm(sub(*p, tx)) < MIN_SCATTERER_DISTANCE
        });
        if too_close {
            continue;
        }

        let aoa_target = aoa_from(tx, rx, target);
        let aoa_static: Vec<f64> = statics.iter().map(|p| aoa_from(tx, rx, *p)).collect();
        if !satisfies_margins(aoa_target, &aoa_static, eta, opts.angle_margin) {
            continue;
        }

        let scenario = Scenario {
            tx_pos: tx,
            rx_pos: rx,
            target_pos: target,
            static_pos: statics,
            v_rx,
            eta,
            f_d_target,
            aoa_los: 0.0,
            aoa_target,
            aoa_static,
        };

        if let Some(min_sep) = opts.min_delay_separation_samples {
            let samples: Vec<f64> = scenario
                .path_lengths()
                .iter()
                .map(|d| d / SPEED_OF_LIGHT * profile.bandwidth_hz)
                .collect();
            let separated = (0..samples.len()).all(|i| {
                (i + 1..samples.len()).all(|j| (samples[i] - samples[j]).abs() >= min_sep)
            });
            if !separated {
                continue;
            }
        }
        return Ok(scenario);
    }
    Err(Error::SamplingBudgetExhausted {
        attempts: opts.max_draws,
    })
}
