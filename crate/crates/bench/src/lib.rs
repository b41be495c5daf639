//! Shared fixtures for the criterion benchmarks.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cranloc::{ChannelDraw, ExperimentConfig, FreqObservation, Scenario};

/// Reference four-unit scenario at the given per-antenna SNR and rate.
pub fn reference_scenario(snr_db: f64, b_over_m: f64) -> Scenario {
    ExperimentConfig::default()
        .build_scenario(snr_db, b_over_m)
        .expect("reference configuration is valid")
}

/// One deterministic draw and its synthesized observations.
pub fn fixture_trial(scn: &Scenario, seed: u64) -> (ChannelDraw, Vec<FreqObservation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = scn.draw_channel(3.0e-6, &mut rng);
    let obs = scn.synthesize_observation(&draw, &mut rng);
    (draw, obs)
}

/// Nominal per-unit amplitudes for bound evaluations.
pub fn nominal_amplitudes(scn: &Scenario) -> Vec<Complex64> {
    scn.radio_units
        .iter()
        .map(|ru| Complex64::new(ru.mean_channel_power.sqrt(), 0.0))
        .collect()
}
