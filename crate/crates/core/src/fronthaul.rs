//! Fronthaul compression: dithered uniform scalar quantization and the
//! rate-matched effective noise weights used by the central estimator.
//!
//! Each radio unit quantizes the real and imaginary parts of every
//! frequency-domain sample with the same uniform quantizer. A fronthaul rate
//! of `B_j` bits per complex vector sample leaves `B_j / (2M)` bits per
//! component, i.e. `L_j = 2^(B_j / 2M)` representation points spread over a
//! fixed dynamic range `[-r_max, r_max]`. Subtractive dithering adds a
//! uniform offset before quantization and removes the same offset after
//! reconstruction.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scenario::{FreqObservation, Scenario};

/// Uniform scalar quantizer over a symmetric dynamic range.
///
/// Representation points sit at `-r_max + (l - 1) * step` for `l = 1..=L`
/// with `step = 2 r_max / (L - 1)`; decision thresholds sit halfway between
/// neighboring points, with the outermost cells extending to infinity
/// (out-of-range inputs saturate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantizerSpec {
    r_max: f64,
    levels: usize,
    step: f64,
}

impl UniformQuantizerSpec {
    /// Builds the quantizer from a fronthaul rate: `L = round(2^(B / 2M))`,
    /// never below two levels.
    ///
    /// The rate is a real number, so the level count is rounded rather than
    /// assumed to be a power of two.
    pub fn from_rate(fronthaul_bits: f64, num_antennas: usize, r_max: f64) -> Result<Self> {
        if !(fronthaul_bits > 0.0) {
            return Err(Error::invalid("fronthaul rate must be > 0"));
        }
        if num_antennas == 0 {
            return Err(Error::invalid("quantizer needs at least one antenna"));
        }
        let bits_per_component = fronthaul_bits / (2.0 * num_antennas as f64);
        let levels = bits_per_component.exp2().round().max(2.0) as usize;
        Self::with_levels(levels, r_max)
    }

    /// Builds the quantizer from an explicit level count.
    pub fn with_levels(levels: usize, r_max: f64) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid(format!("need at least 2 levels, got {levels}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::invalid(format!("dynamic range must be positive, got {r_max}")));
        }
        let step = 2.0 * r_max / (levels as f64 - 1.0);
        Ok(Self { r_max, levels, step })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Decision threshold `q_l` for `l = 0..=L`; the ends are infinite.
    pub fn threshold(&self, l: usize) -> f64 {
        if l == 0 {
            f64::NEG_INFINITY
        } else if l >= self.levels {
            f64::INFINITY
        } else {
            -self.r_max + (l as f64 - 0.5) * self.step
        }
    }

    /// Representation point of cell `l` (1-based).
    pub fn representation(&self, l: usize) -> Result<f64> {
        if l < 1 || l > self.levels {
            return Err(Error::LevelOutOfRange { index: l, levels: self.levels });
        }
        Ok(-self.r_max + (l as f64 - 1.0) * self.step)
    }

    /// Maps an amplitude to its cell index in `1..=L`.
    ///
    /// Cells are left-open, right-closed: `q_{l-1} < x <= q_l`. Inputs
    /// beyond the dynamic range saturate to the first or last cell.
    pub fn quantize(&self, x: f64) -> usize {
        let raw = ((x + self.r_max) / self.step + 0.5).ceil();
        if raw < 1.0 {
            1
        } else if raw >= self.levels as f64 {
            self.levels
        } else {
            raw as usize
        }
    }

    /// Quantize then reconstruct, the nearest representation point for
    /// in-range inputs.
    pub fn project(&self, x: f64) -> f64 {
        self.representation(self.quantize(x)).expect("quantize returns a valid level")
    }
}

/// Subtractive dither configuration.
///
/// Dither samples are uniform on `[-step / divisor, step / divisor]`, drawn
/// independently per component, added before quantization and subtracted
/// after reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherSpec {
    pub divisor: f64,
    pub enabled: bool,
}

impl DitherSpec {
    /// No dithering; the quantizer runs on the raw signal.
    pub fn disabled() -> Self {
        Self { divisor: 2.0, enabled: false }
    }

    /// Subtractive dither with the given divisor; `divisor = 2` spans one
    /// quantizer cell.
    pub fn subtractive(divisor: f64) -> Result<Self> {
        if !(divisor > 0.0) {
            return Err(Error::invalid(format!("dither divisor must be > 0, got {divisor}")));
        }
        Ok(Self { divisor, enabled: true })
    }
}

/// Quantized observation of one radio unit: the transmitted level indices
/// plus the dither realization the control unit subtracts.
#[derive(Debug, Clone)]
pub struct QuantizedObservation {
    /// `levels[k][m] = [l_re, l_im]`, bins outer, antennas inner.
    pub levels: Vec<Vec<[u32; 2]>>,
    /// Dither realization per bin and antenna; `None` when dithering is off.
    pub dither: Option<Vec<Vec<Complex64>>>,
}

/// Quantizes one radio unit's observation and reconstructs the control-unit
/// view: dither (optionally), quantize each component, reconstruct, subtract
/// the same dither.
pub fn fronthaul_round_trip<R: Rng + ?Sized>(
    obs: &FreqObservation,
    quantizer: &UniformQuantizerSpec,
    dither: &DitherSpec,
    rng: &mut R,
) -> (QuantizedObservation, FreqObservation) {
    let m_ant = obs.num_antennas();
    let n_bins = obs.num_bins();
    let amplitude = quantizer.step() / dither.divisor;

    let mut levels = vec![vec![[0u32; 2]; m_ant]; n_bins];
    let mut dither_draws = if dither.enabled {
        Some(vec![vec![Complex64::new(0.0, 0.0); m_ant]; n_bins])
    } else {
        None
    };
    let mut reconstructed = FreqObservation::zeros(m_ant, n_bins);

    for k in 0..n_bins {
        for m in 0..m_ant {
            let sample = obs.samples[(m, k)];
            let d = if dither.enabled {
                Complex64::new(
                    rng.gen_range(-amplitude..=amplitude),
                    rng.gen_range(-amplitude..=amplitude),
                )
            } else {
                Complex64::new(0.0, 0.0)
            };
            let l_re = quantizer.quantize(sample.re + d.re);
            let l_im = quantizer.quantize(sample.im + d.im);
            levels[k][m] = [l_re as u32, l_im as u32];
            if let Some(store) = dither_draws.as_mut() {
                store[k][m] = d;
            }
            let rec = Complex64::new(
                quantizer.representation(l_re).expect("valid level"),
                quantizer.representation(l_im).expect("valid level"),
            );
            reconstructed.samples[(m, k)] = rec - d;
        }
    }

    (QuantizedObservation { levels, dither: dither_draws }, reconstructed)
}

/// Effective per-bin noise power `gamma_j^2(k)` seen by the central
/// estimator: channel noise plus the rate-matched quantization noise
/// `(E[|b_j|^2] |S(k)|^2 + sigma_j^2) / (2^(B_j/M) - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveWeights {
    gamma_sq: Vec<Vec<f64>>,
}

impl EffectiveWeights {
    /// Rate-matched weights for every radio unit and bin.
    pub fn from_scenario(scn: &Scenario) -> Result<Self> {
        let gamma_sq = scn
            .radio_units
            .iter()
            .map(|ru| {
                if !(ru.fronthaul_bits > 0.0) {
                    return Err(Error::invalid("fronthaul rate must be > 0 for rate weights"));
                }
                let rate_factor = (ru.fronthaul_bits / ru.num_antennas as f64).exp2() - 1.0;
                Ok(scn
                    .waveform
                    .coefficients()
                    .iter()
                    .map(|s| {
                        ru.noise_power
                            + (ru.mean_channel_power * s.norm_sqr() + ru.noise_power) / rate_factor
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self { gamma_sq })
    }

    /// Weights for an unquantized fronthaul: the channel noise alone. A
    /// noiseless radio unit gets unit weight, a harmless choice because the
    /// estimator is invariant to a common scaling.
    pub fn unquantized(scn: &Scenario) -> Self {
        let gamma_sq = scn
            .radio_units
            .iter()
            .map(|ru| {
                let g = if ru.noise_power > 0.0 { ru.noise_power } else { 1.0 };
                vec![g; scn.num_samples]
            })
            .collect();
        Self { gamma_sq }
    }

    /// Unit weights everywhere.
    pub fn uniform(num_rus: usize, num_bins: usize) -> Self {
        Self { gamma_sq: vec![vec![1.0; num_bins]; num_rus] }
    }

    pub fn gamma_sq(&self, ru: usize, bin: usize) -> f64 {
        self.gamma_sq[ru][bin]
    }

    pub fn gamma(&self, ru: usize, bin: usize) -> f64 {
        self.gamma_sq[ru][bin].sqrt()
    }

    pub fn num_rus(&self) -> usize {
        self.gamma_sq.len()
    }
}

/// Result of the dynamic-range calibration.
#[derive(Debug, Clone)]
pub struct DynamicRangeCalibration {
    /// Per-radio-unit coverage quantile of component magnitudes.
    pub per_ru: Vec<f64>,
    /// Quantile over the samples of all radio units pooled together, for
    /// runs that share a single quantizer across units.
    pub pooled: f64,
}

/// Calibrates the quantizer dynamic range from Monte Carlo draws.
///
/// Pools the absolute values of every component (all antennas, bins, real
/// and imaginary parts) over `draws` random trials and returns the empirical
/// `coverage` quantile per radio unit.
pub fn calibrate_dynamic_range<R: Rng + ?Sized>(
    scn: &Scenario,
    coverage: f64,
    draws: usize,
    t0_max: f64,
    rng: &mut R,
) -> Result<DynamicRangeCalibration> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::invalid(format!("coverage must be in (0, 1), got {coverage}")));
    }
    if draws < 1000 {
        return Err(Error::invalid(format!(
            "calibration needs at least 1000 draws for a stable quantile, got {draws}"
        )));
    }

    let n_r = scn.num_radio_units();
    let mut magnitudes: Vec<Vec<f64>> = (0..n_r)
        .map(|j| {
            let ru = &scn.radio_units[j];
            Vec::with_capacity(draws * ru.num_antennas * scn.num_samples * 2)
        })
        .collect();

    for _ in 0..draws {
        let draw = scn.draw_channel(t0_max, rng);
        let obs = scn.synthesize_observation(&draw, rng);
        for (j, o) in obs.iter().enumerate() {
            for sample in o.samples.iter() {
                magnitudes[j].push(sample.re.abs());
                magnitudes[j].push(sample.im.abs());
            }
        }
    }

    let per_ru: Vec<f64> = magnitudes
        .iter_mut()
        .enumerate()
        .map(|(j, samples)| {
            let r = quantile_in_place(samples, coverage);
            if r > 0.0 {
                Ok(r)
            } else {
                Err(Error::DegenerateCalibration { ru: j })
            }
        })
        .collect::<Result<_>>()?;

    let mut pooled_samples: Vec<f64> = magnitudes.into_iter().flatten().collect();
    let pooled = quantile_in_place(&mut pooled_samples, coverage);
    if pooled <= 0.0 {
        return Err(Error::DegenerateCalibration { ru: 0 });
    }

    Ok(DynamicRangeCalibration { per_ru, pooled })
}

fn quantile_in_place(samples: &mut [f64], q: f64) -> f64 {
    debug_assert!(!samples.is_empty());
    let idx = ((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1;
    let (_, value, _) = samples.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Position, RadioUnit, Region, WaveformSpectrum, SPEED_OF_LIGHT};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise_only_scenario(noise_power: f64) -> Scenario {
        let mut ru = RadioUnit::new(Position::new(0.0, 0.0), 2);
        ru.noise_power = noise_power;
        ru.mean_channel_power = 0.0;
        Scenario {
            radio_units: vec![ru],
            region: Region::new(-1000.0, 1000.0, -1000.0, 1000.0).unwrap(),
            wavelength: 0.333,
            antenna_spacing: 0.1665,
            sampling_period: 2.5e-6,
            num_samples: 8,
            propagation_speed: SPEED_OF_LIGHT,
            rician_k: 100.0,
            waveform: WaveformSpectrum::sinc(8).unwrap(),
        }
    }

    #[test]
    fn two_level_threshold_at_zero() {
        let q = UniformQuantizerSpec::with_levels(2, 1.0).unwrap();
        assert_eq!(q.threshold(1), 0.0);
        assert_eq!(q.quantize(0.3), 2);
        assert_eq!(q.quantize(-0.3), 1);
    }

    #[test]
    fn three_level_thresholds() {
        let q = UniformQuantizerSpec::with_levels(3, 1.0).unwrap();
        assert_eq!(q.step(), 1.0);
        assert_eq!(q.threshold(1), -0.5);
        assert_eq!(q.threshold(2), 0.5);
        assert_eq!(q.quantize(0.4), 2);
        assert_eq!(q.representation(2).unwrap(), 0.0);
    }

    #[test]
    fn saturation_to_extreme_levels() {
        let q = UniformQuantizerSpec::with_levels(5, 2.0).unwrap();
        assert_eq!(q.quantize(10.0), 5);
        assert_eq!(q.quantize(-10.0), 1);
        assert_eq!(q.quantize(f64::MAX), 5);
    }

    #[test]
    fn representation_endpoints() {
        let q = UniformQuantizerSpec::with_levels(2, 1.0).unwrap();
        assert_eq!(q.representation(1).unwrap(), -1.0);
        assert_eq!(q.representation(2).unwrap(), 1.0);
        assert!(matches!(q.representation(0), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(q.representation(3), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn levels_from_rate() {
        // B / (2M) = 2 bits per component.
        let q = UniformQuantizerSpec::from_rate(32.0, 8, 1.0).unwrap();
        assert_eq!(q.levels(), 4);
        // Non-integer rates round; tiny rates clamp to 2 levels.
        let q = UniformQuantizerSpec::from_rate(8.0, 8, 1.0).unwrap();
        assert_eq!(q.levels(), 2);
        let q = UniformQuantizerSpec::from_rate(24.0, 8, 1.0).unwrap();
        assert_eq!(q.levels(), 3); // round(2^1.5) = round(2.83)
    }

    #[test]
    fn project_is_nearest_point_in_range() {
        let q = UniformQuantizerSpec::with_levels(7, 3.0).unwrap();
        let mut x = -3.0;
        while x <= 3.0 {
            let projected = q.project(x);
            let mut best = f64::INFINITY;
            for l in 1..=7 {
                best = best.min((q.representation(l).unwrap() - x).abs());
            }
            assert!(
                ((projected - x).abs() - best).abs() < 1e-12,
                "x = {x}: projected to {projected}, nearest distance {best}"
            );
            x += 0.0137;
        }
    }

    proptest! {
        #[test]
        fn quantizer_monotone(xs in proptest::collection::vec(-5.0f64..5.0, 2),
                              levels in 2usize..40, r_max in 0.1f64..4.0) {
            let q = UniformQuantizerSpec::with_levels(levels, r_max).unwrap();
            let (a, b) = (xs[0].min(xs[1]), xs[0].max(xs[1]));
            prop_assert!(q.quantize(a) <= q.quantize(b));
        }

        #[test]
        fn representation_is_cell_midpoint(levels in 3usize..40, r_max in 0.1f64..4.0) {
            let q = UniformQuantizerSpec::with_levels(levels, r_max).unwrap();
            for l in 2..levels {
                let mid = (q.threshold(l - 1) + q.threshold(l)) / 2.0;
                prop_assert!((q.representation(l).unwrap() - mid).abs() < 1e-12 * r_max);
            }
        }
    }

    #[test]
    fn round_trip_error_bound() {
        let q = UniformQuantizerSpec::with_levels(1 << 16, 1.0).unwrap();
        let dither = DitherSpec::subtractive(2.0).unwrap();
        let bound = q.step() / 2.0 + q.step() / 2.0; // cell half-width + dither amplitude
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = DMatrix::from_fn(2, 8, |m, k| {
            Complex64::new(
                0.9 * ((m + 2 * k) as f64 / 17.0).sin(),
                0.9 * ((3 * m + k) as f64 / 13.0).cos(),
            )
        });
        let obs = FreqObservation::new(samples);
        let (_, rec) = fronthaul_round_trip(&obs, &q, &dither, &mut rng);
        for (a, b) in obs.samples.iter().zip(rec.samples.iter()) {
            assert!((a.re - b.re).abs() <= bound);
            assert!((a.im - b.im).abs() <= bound);
        }
    }

    #[test]
    fn round_trip_fixed_point_without_dither() {
        let q = UniformQuantizerSpec::with_levels(5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Signal exactly on representation points reconstructs exactly.
        let samples = DMatrix::from_fn(1, 4, |_, k| {
            Complex64::new(q.representation(k + 1).unwrap(), q.representation(k + 2).unwrap())
        });
        let obs = FreqObservation::new(samples);
        let (quantized, rec) = fronthaul_round_trip(&obs, &q, &DitherSpec::disabled(), &mut rng);
        assert!(quantized.dither.is_none());
        assert_eq!(obs.samples, rec.samples);
    }

    #[test]
    fn subtractive_dither_unbiased() {
        // With dither spanning one cell and an in-range signal, the dithered
        // round-trip error has zero mean.
        let q = UniformQuantizerSpec::with_levels(9, 1.0).unwrap();
        let dither = DitherSpec::subtractive(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = Complex64::new(0.31, -0.47);
        let obs = FreqObservation::new(DMatrix::from_element(1, 1, target));
        let n = 200_000;
        let mut mean = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            let (_, rec) = fronthaul_round_trip(&obs, &q, &dither, &mut rng);
            mean += rec.samples[(0, 0)] - target;
        }
        mean /= n as f64;
        assert!(mean.norm() < 1.5e-3, "residual mean {mean}");
    }

    #[test]
    fn dither_levels_stored_only_when_enabled() {
        let q = UniformQuantizerSpec::with_levels(4, 1.0).unwrap();
        let obs = FreqObservation::new(DMatrix::from_element(2, 3, Complex64::new(0.2, -0.1)));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (qobs, _) =
            fronthaul_round_trip(&obs, &q, &DitherSpec::subtractive(2.0).unwrap(), &mut rng);
        assert!(qobs.dither.is_some());
        assert_eq!(qobs.levels.len(), 3);
        assert_eq!(qobs.levels[0].len(), 2);
        for row in &qobs.levels {
            for l in row {
                assert!(l[0] >= 1 && l[0] <= 4 && l[1] >= 1 && l[1] <= 4);
            }
        }
    }

    #[test]
    fn effective_weights_match_hand_computation() {
        // sigma^2 = 1, E|b|^2 = 1, |S(k)|^2 = 1/8, B/M = 1:
        // gamma^2 = 1 + 1.125 / (2^1 - 1) = 2.125.
        let mut scn = noise_only_scenario(1.0);
        scn.radio_units[0].mean_channel_power = 1.0;
        scn.radio_units[0].fronthaul_bits = 2.0; // M = 2 antennas -> B/M = 1
        let w = EffectiveWeights::from_scenario(&scn).unwrap();
        for k in 0..8 {
            assert!((w.gamma_sq(0, k) - 2.125).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_weights_limit_and_monotonicity() {
        let mut scn = noise_only_scenario(0.7);
        scn.radio_units[0].mean_channel_power = 2.0;
        scn.radio_units[0].fronthaul_bits = 1.0e6;
        let w = EffectiveWeights::from_scenario(&scn).unwrap();
        assert!((w.gamma_sq(0, 0) - 0.7).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for bits in [2.0, 4.0, 8.0, 16.0, 32.0] {
            scn.radio_units[0].fronthaul_bits = bits;
            let w = EffectiveWeights::from_scenario(&scn).unwrap();
            let g = w.gamma_sq(0, 3);
            assert!(g < prev, "expected strict decrease, got {g} after {prev}");
            assert!(g >= 0.7);
            prev = g;
        }
    }

    #[test]
    fn calibration_matches_gaussian_quantile() {
        // Pure noise with sigma^2 = 1: component std = 1/sqrt(2); the 95%
        // quantile of |x| is 1.96 / sqrt(2) = 1.386.
        let scn = noise_only_scenario(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cal = calibrate_dynamic_range(&scn, 0.95, 4000, 0.0, &mut rng).unwrap();
        let expected = 1.959964 / 2.0_f64.sqrt();
        assert!(
            (cal.per_ru[0] - expected).abs() / expected < 0.02,
            "quantile {} vs expected {expected}",
            cal.per_ru[0]
        );
        assert!((cal.pooled - expected).abs() / expected < 0.02);
    }

    #[test]
    fn calibration_rejects_degenerate_scenarios() {
        let scn = noise_only_scenario(0.0); // no noise, no channel power
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = calibrate_dynamic_range(&scn, 0.95, 1000, 0.0, &mut rng);
        assert!(matches!(err, Err(Error::DegenerateCalibration { .. })));
    }

    #[test]
    fn calibration_rejects_bad_arguments() {
        let scn = noise_only_scenario(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(calibrate_dynamic_range(&scn, 1.0, 1000, 0.0, &mut rng).is_err());
        assert!(calibrate_dynamic_range(&scn, 0.0, 1000, 0.0, &mut rng).is_err());
        assert!(calibrate_dynamic_range(&scn, 0.95, 10, 0.0, &mut rng).is_err());
    }

    #[test]
    fn dither_shifts_input_not_cells() {
        // The dithered path uses the same quantizer cells as the undithered
        // one; the dither only shifts the input before quantization and is
        // subtracted from the reconstruction.
        let q = UniformQuantizerSpec::with_levels(6, 1.5).unwrap();
        let x = 0.4;
        let obs = FreqObservation::new(DMatrix::from_element(1, 1, Complex64::new(x, x)));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (qobs, rec) =
            fronthaul_round_trip(&obs, &q, &DitherSpec::subtractive(2.0).unwrap(), &mut rng);
        let d = qobs.dither.as_ref().unwrap()[0][0];
        let lvl = qobs.levels[0][0];
        assert_eq!(q.quantize(x + d.re), lvl[0] as usize);
        assert_eq!(q.quantize(x + d.im), lvl[1] as usize);
        let manual = Complex64::new(
            q.representation(lvl[0] as usize).unwrap(),
            q.representation(lvl[1] as usize).unwrap(),
        ) - d;
        assert_eq!(rec.samples[(0, 0)], manual);
    }
}
