//! Bistatic target Doppler estimation for ISAC links whose transmitter and
//! receiver are clock-asynchronous and whose receiver moves.
//!
//! The crate contains a geometry sampler ([`scenario`]), a phase-domain
//! forward model ([`phase_model`]), a signal-level pilot/channel simulator
//! ([`waveform`]), the estimator ([`estimator`]) and a Monte Carlo harness
//! ([`experiments`]).

pub mod angle;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod phase_model;
pub mod scenario;
pub mod validate;
pub mod waveform;

pub use error::{Error, Result};
pub use estimator::{estimate, static_baseline, Branch, EstimatorConfig, ThetaEstimate};
pub use experiments::{run_sweep, SweepAxis, SweepConfig, SweepResult, TrialRecord};
pub use phase_model::{NuisanceTrace, PanelSettings, PhasePanel};
pub use scenario::{CarrierProfile, ProfileId, Scenario, WaveformKind};
pub use waveform::PilotWaveform;
