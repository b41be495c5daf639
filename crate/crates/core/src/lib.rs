//! Uplink source localization over capacity-limited fronthaul links.
//!
//! Distributed multi-antenna radio units forward scalar-quantized baseband
//! spectra to a control unit, which localizes a single narrowband source.
//! The crate provides:
//!
//! - the scenario and frequency-domain signal model ([`scenario`]);
//! - dithered uniform quantization, rate-matched noise weights and dynamic-
//!   range calibration ([`fronthaul`]);
//! - the direct (one-step) position estimator operating on the quantized
//!   spectra with an FFT search over the transmit time ([`direct`]);
//! - a two-step baseline that estimates per-unit TOA/AOA with MUSIC and
//!   fuses them at the control unit ([`indirect`]);
//! - Fisher-information bounds on the squared position error with and
//!   without quantization, including the low-SNR loss factor ([`crb`]);
//! - a deterministic Monte Carlo harness with a file-based configuration
//!   ([`config`], [`harness`], [`output`]).

pub mod config;
pub mod crb;
pub mod direct;
pub mod error;
pub mod fronthaul;
pub mod harness;
pub mod indirect;
pub mod output;
pub mod scenario;
mod search;

pub use config::ExperimentConfig;
pub use crb::{
    cell_probability, convergence_sweep, crb_trace, efim, fim_quantized, fim_unquantized,
    loss_ratio, quantization_loss, Efim2, Fim4, LinkParams, RuLink,
};
pub use direct::{
    candidate_matrix, estimate_amplitude, estimate_position, fft_t0_scores, t0_for_bin,
    weighted_template, Estimate, SearchGrid,
};
pub use error::{Error, Result};
pub use fronthaul::{
    calibrate_dynamic_range, fronthaul_round_trip, DitherSpec, DynamicRangeCalibration,
    EffectiveWeights, QuantizedObservation, UniformQuantizerSpec,
};
pub use harness::{crb_sweep, run_experiment, CrbSweepRow, ExperimentOutput, Method};
pub use indirect::{
    bearing_arc_to_region, fuse_ml, measurement_variances_from_bound, music_aoa, music_toa,
    MeasurementSet, RuMeasurement,
};
pub use output::{emit_results, RmsSummary, TrialRecord};
pub use scenario::{
    bearing, propagation_delay, steering_vector, ChannelDraw, FreqObservation, Position,
    RadioUnit, Region, Scenario, WaveformSpectrum, SPEED_OF_LIGHT,
};
