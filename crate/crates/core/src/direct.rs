//! Direct position estimation from the dither-subtracted fronthaul signals.
//!
//! The estimator maximizes the weighted matched-filter objective
//!
//! ```text
//! C(t0, p) = sum_j | alpha_j(p)^H / ||Sbar_j||
//!                    * sum_k exp(i w_k (tau_j(p) + t0)) S*(k) R_j(k) / gamma_j^2(k) |^2
//! ```
//!
//! jointly over a rectangular lattice of candidate positions and a uniform
//! grid of transmit times. For a fixed position the inner sum over bins is a
//! DFT in `t0`, so all transmit-time hypotheses are scored at once with one
//! zero-padded FFT per radio unit; the channel amplitudes have a closed-form
//! optimum and never need to be searched.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fronthaul::EffectiveWeights;
use crate::scenario::{delay_phase, FreqObservation, Position, Scenario};
use crate::search;

/// Search lattice configuration for the position/time maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    /// Lattice spacing over the prior region, meters.
    pub spacing: f64,
    /// Transmit-time oversampling: the grid holds `q_t0 * N_s` hypotheses
    /// spaced `T_s / q_t0` over one observation window.
    pub q_t0: usize,
    /// Nested refinement rounds around the incumbent best lattice point.
    pub zoom_rounds: usize,
    /// Spacing reduction per refinement round.
    pub zoom_factor: usize,
}

impl SearchGrid {
    pub fn new(spacing: f64, q_t0: usize) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!("lattice spacing must be > 0, got {spacing}")));
        }
        if q_t0 == 0 {
            return Err(Error::invalid("transmit-time oversampling factor must be >= 1"));
        }
        Ok(Self { spacing, q_t0, zoom_rounds: 2, zoom_factor: 5 })
    }

    pub fn with_zoom(mut self, rounds: usize, factor: usize) -> Result<Self> {
        if rounds > 0 && factor < 2 {
            return Err(Error::invalid("zoom factor must be >= 2"));
        }
        self.zoom_rounds = rounds;
        self.zoom_factor = factor;
        Ok(self)
    }
}

/// Joint position, transmit-time and amplitude estimate.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub position: Position,
    /// Transmit-time estimate on the configured grid, seconds.
    pub transmit_time: f64,
    /// Closed-form channel amplitude per radio unit; empty for estimators
    /// that do not recover amplitudes.
    pub amplitudes: Vec<Complex64>,
    /// Objective value at the maximizer.
    pub objective: f64,
}

/// Weighted waveform template of radio unit `j` evaluated at zero transmit
/// time: entry `k` is `S(k) exp(-i w_k tau_j(p)) / gamma_j(k)`.
pub fn weighted_template(
    scn: &Scenario,
    j: usize,
    p: Position,
    weights: &EffectiveWeights,
) -> Vec<Complex64> {
    let tau = scn.delay_to_ru(j, p);
    let window = scn.window();
    scn.waveform
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, s)| s * delay_phase(k, tau, window) / weights.gamma(j, k))
        .collect()
}

/// Norm of the weighted template, `sqrt(sum_k |S(k)|^2 / gamma_j^2(k))`.
/// Independent of the candidate position and transmit time.
pub fn template_norm(scn: &Scenario, j: usize, weights: &EffectiveWeights) -> f64 {
    scn.waveform
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, s)| s.norm_sqr() / weights.gamma_sq(j, k))
        .sum::<f64>()
        .sqrt()
}

/// Candidate matrix `V(p)`: one column per radio unit whose `k`-th entry is
///
/// ```text
/// S*(k) exp(i w_k tau_j(p)) alpha_j(p)^H R_j(k) / (gamma_j^2(k) ||Sbar_j||)
/// ```
///
/// The DFT of column `j` over `k` scores every transmit-time hypothesis for
/// that radio unit at once.
pub fn candidate_matrix(
    scn: &Scenario,
    observations: &[FreqObservation],
    p: Position,
    weights: &EffectiveWeights,
) -> DMatrix<Complex64> {
    let n_s = scn.num_samples;
    let n_r = scn.num_radio_units();
    let window = scn.window();
    let mut v = DMatrix::zeros(n_s, n_r);
    for j in 0..n_r {
        let tau = scn.delay_to_ru(j, p);
        let alpha = scn.ru_steering_toward(j, p);
        let norm = template_norm(scn, j, weights);
        let obs = &observations[j].samples;
        for k in 0..n_s {
            let s = scn.waveform.coefficients()[k];
            // alpha^H R_j(k)
            let mut combined = Complex64::new(0.0, 0.0);
            for (m, a) in alpha.iter().enumerate() {
                combined += a.conj() * obs[(m, k)];
            }
            let phase = delay_phase(k, tau, window).conj(); // exp(+i w_k tau)
            v[(k, j)] = s.conj() * phase * combined / (weights.gamma_sq(j, k) * norm);
        }
    }
    v
}

/// Transmit-time hypothesis scores from the candidate matrix.
///
/// Entry `k` of the returned vector is `sum_j |(F V_j)_k|^2`, where `F` is
/// the `q_t0 * N_s`-point DFT matrix and each column is zero-padded to that
/// length. FFT bin `k` corresponds to the transmit time
/// `((q_t0 N_s - k) mod q_t0 N_s) * T_s / q_t0`; see [`t0_for_bin`].
pub fn fft_t0_scores(v: &DMatrix<Complex64>, q_t0: usize) -> Vec<f64> {
    assert!(q_t0 >= 1, "transmit-time oversampling factor must be >= 1");
    let padded = v.nrows() * q_t0;
    let fft = FftPlanner::new().plan_fft_forward(padded);
    let mut col = vec![Complex64::new(0.0, 0.0); padded];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut scores = vec![0.0; padded];
    accumulate_scores(v, fft.as_ref(), &mut col, &mut scratch, &mut scores);
    scores
}

/// Transmit time associated with FFT score bin `bin`.
///
/// The DFT kernel `exp(-i 2 pi k n / (q N_s))` matches the objective's
/// `exp(+i w_n t0)` at `t0 = (q N_s - k) T_s / q` (mod one window), so the
/// bins enumerate the grid `{0, T_s/q, ..., (q N_s - 1) T_s / q}` in
/// reversed order.
pub fn t0_for_bin(bin: usize, q_t0: usize, num_samples: usize, sampling_period: f64) -> f64 {
    let n = q_t0 * num_samples;
    let m = (n - bin % n) % n;
    m as f64 * sampling_period / q_t0 as f64
}

fn accumulate_scores(
    v: &DMatrix<Complex64>,
    fft: &dyn Fft<f64>,
    col: &mut [Complex64],
    scratch: &mut [Complex64],
    scores: &mut [f64],
) {
    scores.fill(0.0);
    for j in 0..v.ncols() {
        for (k, slot) in col.iter_mut().enumerate() {
            *slot = if k < v.nrows() { v[(k, j)] } else { Complex64::new(0.0, 0.0) };
        }
        fft.process_with_scratch(col, scratch);
        for (score, value) in scores.iter_mut().zip(col.iter()) {
            *score += value.norm_sqr();
        }
    }
}

/// Closed-form amplitude of radio unit `j` given a position and transmit
/// time: the weighted projection of the observation onto the array/template
/// direction.
pub fn estimate_amplitude(
    scn: &Scenario,
    obs_j: &FreqObservation,
    j: usize,
    p: Position,
    t0: f64,
    weights: &EffectiveWeights,
) -> Result<Complex64> {
    let window = scn.window();
    let tau = scn.delay_to_ru(j, p);
    let alpha = scn.ru_steering_toward(j, p);
    let norm_sq: f64 = scn
        .waveform
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, s)| s.norm_sqr() / weights.gamma_sq(j, k))
        .sum();
    if !(norm_sq > 0.0) {
        return Err(Error::ZeroTemplateNorm);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..scn.num_samples {
        let s = scn.waveform.coefficients()[k];
        let mut combined = Complex64::new(0.0, 0.0);
        for (m, a) in alpha.iter().enumerate() {
            combined += a.conj() * obs_j.samples[(m, k)];
        }
        let phase = delay_phase(k, tau + t0, window).conj();
        acc += s.conj() * phase * combined / weights.gamma_sq(j, k);
    }
    Ok(acc / norm_sq)
}

/// Maximizes the objective over the position lattice and transmit-time grid.
///
/// The lattice covers the scenario's prior region at the configured spacing
/// and is optionally refined by nested zoom rounds around the incumbent.
/// Ties resolve to the lowest row-major lattice index, and refinement only
/// replaces the incumbent on a strict improvement, so results are
/// reproducible regardless of thread count.
pub fn estimate_position(
    scn: &Scenario,
    observations: &[FreqObservation],
    weights: &EffectiveWeights,
    grid: &SearchGrid,
) -> Result<Estimate> {
    if observations.len() != scn.num_radio_units() {
        return Err(Error::invalid(format!(
            "got {} observations for {} radio units",
            observations.len(),
            scn.num_radio_units()
        )));
    }
    for j in 0..scn.num_radio_units() {
        if !(template_norm(scn, j, weights) > 0.0) {
            return Err(Error::ZeroTemplateNorm);
        }
    }

    let padded = grid.q_t0 * scn.num_samples;
    let fft = FftPlanner::new().plan_fft_forward(padded);

    let evaluate = |p: Position| score_candidate(scn, observations, weights, p, &fft, padded);

    let lattice = search::lattice(&scn.region, grid.spacing);
    if lattice.is_empty() {
        return Err(Error::invalid("empty search lattice"));
    }
    let (mut best_p, (mut best_score, mut best_bin)) =
        search::argmax_parallel(&lattice, evaluate)?;

    let mut half_width = grid.spacing;
    for _ in 0..grid.zoom_rounds {
        let spacing = half_width / grid.zoom_factor as f64;
        let local = search::zoom_lattice(best_p, half_width, spacing, &scn.region);
        let (p, (score, bin)) = search::argmax_parallel(&local, evaluate)?;
        if score > best_score {
            best_p = p;
            best_score = score;
            best_bin = bin;
        }
        half_width = spacing;
    }

    let t0 = t0_for_bin(best_bin, grid.q_t0, scn.num_samples, scn.sampling_period);
    let amplitudes = (0..scn.num_radio_units())
        .map(|j| estimate_amplitude(scn, &observations[j], j, best_p, t0, weights))
        .collect::<Result<Vec<_>>>()?;

    Ok(Estimate { position: best_p, transmit_time: t0, amplitudes, objective: best_score })
}

fn score_candidate(
    scn: &Scenario,
    observations: &[FreqObservation],
    weights: &EffectiveWeights,
    p: Position,
    fft: &Arc<dyn Fft<f64>>,
    padded: usize,
) -> (f64, usize) {
    let v = candidate_matrix(scn, observations, p, weights);
    let mut col = vec![Complex64::new(0.0, 0.0); padded];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut scores = vec![0.0; padded];
    accumulate_scores(&v, fft.as_ref(), &mut col, &mut scratch, &mut scores);
    let mut best_bin = 0;
    let mut best = scores[0];
    for (bin, &s) in scores.iter().enumerate().skip(1) {
        if s > best {
            best = s;
            best_bin = bin;
        }
    }
    (best, best_bin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        bearing, steering_vector, ChannelDraw, RadioUnit, Region, WaveformSpectrum,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_scenario(n_r: usize, m_ant: usize, n_s: usize) -> Scenario {
        let positions = [
            Position::new(-2000.0, -2000.0),
            Position::new(2000.0, -2000.0),
            Position::new(2000.0, 2000.0),
            Position::new(-2000.0, 2000.0),
        ];
        let radio_units = positions
            .iter()
            .take(n_r)
            .map(|&p| {
                let mut ru = RadioUnit::new(p, m_ant);
                ru.noise_power = 0.5;
                ru.fronthaul_bits = 4.0 * m_ant as f64;
                ru
            })
            .collect();
        Scenario {
            radio_units,
            region: Region::new(-1500.0, 1500.0, -1500.0, 1500.0).unwrap(),
            wavelength: 0.333,
            antenna_spacing: 0.1665,
            sampling_period: 2.5e-6,
            num_samples: n_s,
            propagation_speed: crate::scenario::SPEED_OF_LIGHT,
            rician_k: 100.0,
            waveform: WaveformSpectrum::sinc(n_s).unwrap(),
        }
    }

    /// Direct evaluation of the objective on the transmit-time grid, the
    /// brute-force counterpart of the FFT path.
    fn brute_force_objective(
        scn: &Scenario,
        observations: &[FreqObservation],
        p: Position,
        weights: &EffectiveWeights,
        q_t0: usize,
    ) -> Vec<f64> {
        let n = q_t0 * scn.num_samples;
        (0..n)
            .map(|m| {
                let t0 = m as f64 * scn.sampling_period / q_t0 as f64;
                let mut total = 0.0;
                for j in 0..scn.num_radio_units() {
                    let tau = scn.delay_to_ru(j, p);
                    let alpha = scn.ru_steering_toward(j, p);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..scn.num_samples {
                        let s = scn.waveform.coefficients()[k];
                        let mut combined = Complex64::new(0.0, 0.0);
                        for (mm, a) in alpha.iter().enumerate() {
                            combined += a.conj() * observations[j].samples[(mm, k)];
                        }
                        let phase = delay_phase(k, tau + t0, scn.window()).conj();
                        acc += phase * s.conj() * combined / weights.gamma_sq(j, k);
                    }
                    total += (acc / template_norm(scn, j, weights)).norm_sqr();
                }
                total
            })
            .collect()
    }

    fn random_observations<R: Rng>(scn: &Scenario, rng: &mut R) -> Vec<FreqObservation> {
        scn.radio_units
            .iter()
            .map(|ru| {
                let samples = DMatrix::from_fn(ru.num_antennas, scn.num_samples, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                FreqObservation::new(samples)
            })
            .collect()
    }

    #[test]
    fn template_at_zero_delay_is_spectrum() {
        let mut scn = test_scenario(1, 1, 8);
        scn.radio_units[0].position = Position::new(0.0, 0.0);
        let weights = EffectiveWeights::uniform(1, 8);
        let tpl = weighted_template(&scn, 0, Position::new(0.0, 0.0), &weights);
        for (t, s) in tpl.iter().zip(scn.waveform.coefficients()) {
            assert!((t - s).norm() < 1e-15);
        }
    }

    #[test]
    fn template_norm_matches_sum() {
        let scn = test_scenario(2, 4, 8);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        for j in 0..2 {
            let tpl = weighted_template(&scn, j, Position::new(300.0, -200.0), &weights);
            let direct: f64 = tpl.iter().map(|t| t.norm_sqr()).sum();
            let expected: f64 = (0..8)
                .map(|k| scn.waveform.coefficients()[k].norm_sqr() / weights.gamma_sq(j, k))
                .sum();
            assert!((direct - expected).abs() < 1e-12);
            assert!((template_norm(&scn, j, &weights).powi(2) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn template_invariant_to_window_shift() {
        // Moving the source one full window further leaves the template
        // unchanged: delays alias modulo N_s T_s.
        let mut scn = test_scenario(1, 2, 8);
        scn.propagation_speed = 1.0;
        scn.sampling_period = 0.25;
        scn.radio_units[0].position = Position::new(0.0, 0.0);
        let weights = EffectiveWeights::uniform(1, 8);
        let p_near = Position::new(3.0, 0.0);
        let p_far = Position::new(3.0 + scn.window(), 0.0); // tau grows by one window
        let a = weighted_template(&scn, 0, p_near, &weights);
        let b = weighted_template(&scn, 0, p_far, &weights);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn candidate_matrix_noiseless_truth_is_real_positive() {
        let mut scn = test_scenario(1, 4, 8);
        scn.radio_units[0].noise_power = 0.0;
        let p_true = Position::new(500.0, 250.0);
        let draw = ChannelDraw {
            amplitudes: vec![Complex64::new(1.0, 0.0)],
            transmit_time: 0.0,
            source: p_true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = scn.synthesize_observation(&draw, &mut rng);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let v = candidate_matrix(&scn, &obs, p_true, &weights);
        let norm = template_norm(&scn, 0, &weights);
        for k in 0..8 {
            let expected =
                scn.waveform.coefficients()[k].norm_sqr() / (weights.gamma_sq(0, k) * norm);
            assert!((v[(k, 0)].re - expected).abs() < 1e-12, "bin {k}: {}", v[(k, 0)]);
            assert!(v[(k, 0)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_matrix_zero_observation_gives_zero_column() {
        let scn = test_scenario(2, 4, 8);
        let obs = vec![FreqObservation::zeros(4, 8), FreqObservation::zeros(4, 8)];
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let v = candidate_matrix(&scn, &obs, Position::new(0.0, 0.0), &weights);
        assert!(v.iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn bearing_mismatch_shrinks_array_gain() {
        let scn = test_scenario(1, 8, 8);
        let ru_pos = scn.radio_units[0].position;
        let p_true = Position::new(500.0, 250.0);
        let p_wrong = Position::new(-900.0, 1200.0);
        let phi_true = bearing(p_true, ru_pos).unwrap();
        let phi_wrong = bearing(p_wrong, ru_pos).unwrap();
        let a_true = steering_vector(phi_true, 8, scn.antenna_spacing, scn.wavelength);
        let a_wrong = steering_vector(phi_wrong, 8, scn.antenna_spacing, scn.wavelength);
        let gain: Complex64 =
            a_wrong.iter().zip(a_true.iter()).map(|(w, t)| w.conj() * t).sum();
        assert!(gain.norm() < 0.999, "beam gain {} should drop below 1", gain.norm());
    }

    #[test]
    fn fft_matches_brute_force_over_t0_grid() {
        let scn = test_scenario(3, 2, 8);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for &q in &[1usize, 2, 4] {
            let obs = random_observations(&scn, &mut rng);
            let p = Position::new(rng.gen_range(-1500.0..1500.0), rng.gen_range(-1500.0..1500.0));
            let v = candidate_matrix(&scn, &obs, p, &weights);
            let scores = fft_t0_scores(&v, q);
            let brute = brute_force_objective(&scn, &obs, p, &weights, q);
            let n = q * 8;
            for m in 0..n {
                let bin = (n - m) % n;
                let rel = (scores[bin] - brute[m]).abs() / brute[m].abs().max(1e-300);
                assert!(rel < 1e-9, "q={q} m={m}: fft {} vs brute {}", scores[bin], brute[m]);
            }
        }
    }

    #[test]
    fn fft_scores_zero_for_zero_input() {
        let v = DMatrix::zeros(8, 3);
        let scores = fft_t0_scores(&v, 2);
        assert_eq!(scores.len(), 16);
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn matched_noiseless_peaks_at_dc_bin() {
        let mut scn = test_scenario(2, 4, 8);
        for ru in &mut scn.radio_units {
            ru.noise_power = 0.0;
        }
        let p_true = Position::new(120.0, -340.0);
        let draw = ChannelDraw {
            amplitudes: vec![Complex64::new(1.0, 0.0); 2],
            transmit_time: 0.0,
            source: p_true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs = scn.synthesize_observation(&draw, &mut rng);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let v = candidate_matrix(&scn, &obs, p_true, &weights);
        let scores = fft_t0_scores(&v, 1);
        let (argmax, _) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(argmax, 0, "scores: {scores:?}");
    }

    #[test]
    fn amplitude_recovers_truth_noiselessly() {
        let mut scn = test_scenario(2, 4, 8);
        for ru in &mut scn.radio_units {
            ru.noise_power = 0.0;
        }
        let p_true = Position::new(-420.0, 815.0);
        let t0 = 3.0 * scn.sampling_period;
        let b = vec![Complex64::new(0.8, -0.6), Complex64::new(-0.2, 1.1)];
        let draw = ChannelDraw { amplitudes: b.clone(), transmit_time: t0, source: p_true };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs = scn.synthesize_observation(&draw, &mut rng);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        for j in 0..2 {
            let est = estimate_amplitude(&scn, &obs[j], j, p_true, t0, &weights).unwrap();
            assert!((est - b[j]).norm() < 1e-12, "ru {j}: {est} vs {}", b[j]);
        }
    }

    #[test]
    fn amplitude_zero_and_linear() {
        let scn = test_scenario(1, 2, 8);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let p = Position::new(10.0, 20.0);
        let zero = FreqObservation::zeros(2, 8);
        let b = estimate_amplitude(&scn, &zero, 0, p, 0.0, &weights).unwrap();
        assert_eq!(b, Complex64::new(0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs = random_observations(&scn, &mut rng);
        let beta = Complex64::new(-1.3, 0.4);
        let scaled = FreqObservation::new(obs[0].samples.map(|e| beta * e));
        let b1 = estimate_amplitude(&scn, &obs[0], 0, p, 0.0, &weights).unwrap();
        let b2 = estimate_amplitude(&scn, &scaled, 0, p, 0.0, &weights).unwrap();
        assert!((b2 - beta * b1).norm() < 1e-12 * b2.norm().max(1.0));
    }

    #[test]
    fn objective_equals_residual_cost_up_to_constant() {
        // Plugging the closed-form amplitude into the weighted residual cost
        // must equal (constant - objective) for every candidate.
        let scn = test_scenario(3, 2, 8);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs = random_observations(&scn, &mut rng);

        let constant: f64 = (0..3)
            .map(|j| {
                (0..8)
                    .map(|k| {
                        (0..2)
                            .map(|m| obs[j].samples[(m, k)].norm_sqr() / weights.gamma_sq(j, k))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .sum();

        for trial in 0..5 {
            let p = Position::new(rng.gen_range(-1500.0..1500.0), rng.gen_range(-1500.0..1500.0));
            let t0 = rng.gen_range(0.0..scn.window());
            // residual cost with the optimal amplitudes
            let mut cost = 0.0;
            for j in 0..3 {
                let b = estimate_amplitude(&scn, &obs[j], j, p, t0, &weights).unwrap();
                let tau = scn.delay_to_ru(j, p);
                let alpha = scn.ru_steering_toward(j, p);
                for k in 0..8 {
                    let s = scn.waveform.coefficients()[k];
                    let phase = delay_phase(k, tau + t0, scn.window());
                    for (m, a) in alpha.iter().enumerate() {
                        let model = b * a * s * phase;
                        cost += (obs[j].samples[(m, k)] - model).norm_sqr()
                            / weights.gamma_sq(j, k);
                    }
                }
            }
            // objective evaluated directly at the same off-grid (p, t0)
            let mut c_exact = 0.0;
            for j in 0..3 {
                let tau = scn.delay_to_ru(j, p);
                let alpha = scn.ru_steering_toward(j, p);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..8 {
                    let s = scn.waveform.coefficients()[k];
                    let mut combined = Complex64::new(0.0, 0.0);
                    for (m, a) in alpha.iter().enumerate() {
                        combined += a.conj() * obs[j].samples[(m, k)];
                    }
                    acc += delay_phase(k, tau + t0, scn.window()).conj() * s.conj() * combined
                        / weights.gamma_sq(j, k);
                }
                c_exact += (acc / template_norm(&scn, j, &weights)).norm_sqr();
            }
            let rel = ((constant - cost) - c_exact).abs() / c_exact.abs().max(1e-30);
            assert!(rel < 1e-9, "trial {trial}: cost identity violated by {rel}");
        }
    }

    #[test]
    fn estimate_position_exact_on_noiseless_grid() {
        let mut scn = test_scenario(4, 4, 8);
        for ru in &mut scn.radio_units {
            ru.noise_power = 0.0;
        }
        // Put the truth exactly on the 25 m lattice.
        let grid = SearchGrid::new(250.0, 1).unwrap().with_zoom(2, 5).unwrap();
        let p_true = Position::new(
            scn.region.x_min + 5.0 * grid.spacing,
            scn.region.y_min + 9.0 * grid.spacing,
        );
        let draw = ChannelDraw {
            amplitudes: vec![Complex64::new(1.0, 0.0); 4],
            transmit_time: 2.0 * scn.sampling_period,
            source: p_true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let obs = scn.synthesize_observation(&draw, &mut rng);
        let weights = EffectiveWeights::uniform(4, 8);
        let est = estimate_position(&scn, &obs, &weights, &grid).unwrap();
        assert_eq!(est.position, p_true);
        assert!((est.transmit_time - draw.transmit_time).abs() < 1e-12);
        for (a, b) in est.amplitudes.iter().zip(draw.amplitudes.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn estimate_position_total_on_coarse_quantization() {
        use crate::fronthaul::{fronthaul_round_trip, DitherSpec, UniformQuantizerSpec};
        let mut scn = test_scenario(2, 2, 8);
        for ru in &mut scn.radio_units {
            ru.noise_power = 1e-6; // near-noiseless, coarse one-bit quantization
            ru.fronthaul_bits = 2.0 * ru.num_antennas as f64;
        }
        let draw = ChannelDraw {
            amplitudes: vec![Complex64::new(1.0, 0.0); 2],
            transmit_time: 0.0,
            source: Position::new(333.0, -777.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = scn.synthesize_observation(&draw, &mut rng);
        let q = UniformQuantizerSpec::with_levels(2, 0.5).unwrap();
        let quantized: Vec<FreqObservation> = obs
            .iter()
            .map(|o| fronthaul_round_trip(o, &q, &DitherSpec::disabled(), &mut rng).1)
            .collect();
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let grid = SearchGrid::new(500.0, 1).unwrap().with_zoom(1, 5).unwrap();
        let est = estimate_position(&scn, &quantized, &weights, &grid).unwrap();
        assert!(est.objective.is_finite());
        assert!(scn.region.contains(est.position));
    }

    #[test]
    fn ties_resolve_to_first_lattice_point() {
        let scn = test_scenario(2, 2, 8);
        let obs = vec![FreqObservation::zeros(2, 8), FreqObservation::zeros(2, 8)];
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let grid = SearchGrid::new(1000.0, 1).unwrap().with_zoom(0, 5).unwrap();
        let est = estimate_position(&scn, &obs, &weights, &grid).unwrap();
        // All scores are zero; the first row-major lattice point wins.
        assert_eq!(est.position, Position::new(scn.region.x_min, scn.region.y_min));
        assert_eq!(est.objective, 0.0);
    }

    #[test]
    fn objective_invariant_to_common_scaling() {
        let scn = test_scenario(3, 2, 8);
        let weights = EffectiveWeights::from_scenario(&scn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let obs = random_observations(&scn, &mut rng);
        let grid = SearchGrid::new(750.0, 1).unwrap().with_zoom(1, 5).unwrap();
        let est = estimate_position(&scn, &obs, &weights, &grid).unwrap();

        // Scale all observations and all channel powers consistently.
        let c: f64 = 3.7;
        let scaled_obs: Vec<FreqObservation> = obs
            .iter()
            .map(|o| FreqObservation::new(o.samples.map(|e| e * c.sqrt())))
            .collect();
        let mut scaled_scn = scn.clone();
        for ru in &mut scaled_scn.radio_units {
            ru.mean_channel_power *= c;
            ru.noise_power *= c;
        }
        let scaled_weights = EffectiveWeights::from_scenario(&scaled_scn).unwrap();
        let est2 = estimate_position(&scaled_scn, &scaled_obs, &scaled_weights, &grid).unwrap();
        assert_eq!(est.position, est2.position);
        assert!((est.transmit_time - est2.transmit_time).abs() < 1e-18);
    }
}
