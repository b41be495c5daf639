//! Physical scenario description and frequency-domain observation synthesis.
//!
//! A [`Scenario`] holds the geometry of the radio units, the array and
//! waveform parameters, and the channel statistics. Observations are
//! generated directly in the DFT domain: for radio unit `j`, bin `k` and
//! antenna `m` the mean term is
//!
//! ```text
//! b_j * [alpha_j(p)]_m * S(k) * exp(-i w_k (tau_j(p) + t0))
//! ```
//!
//! with `w_k = 2 pi k / (N_s T_s)`, plus circularly-symmetric complex
//! Gaussian noise of variance `sigma_j^2` per complex sample. Generating in
//! the DFT domain avoids fractional-delay interpolation artifacts entirely.
//!
//! Because every phase is periodic in the delay with period `N_s T_s`,
//! observations for `tau + t0` and `tau + t0 + N_s T_s` are identical:
//! delays alias modulo the observation window length.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fronthaul::UniformQuantizerSpec;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A 2-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to another position.
    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Four-quadrant bearing of `target` as seen from `reference`, in (-pi, pi].
///
/// Errors if the points coincide, where the angle is undefined.
pub fn bearing(target: Position, reference: Position) -> Result<f64> {
    let dx = target.x - reference.x;
    let dy = target.y - reference.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::CoincidentPoints { x: target.x, y: target.y });
    }
    // atan2 returns -pi at (negative, -0.0); fold onto (-pi, pi].
    let phi = dy.atan2(dx);
    if phi <= -std::f64::consts::PI {
        Ok(std::f64::consts::PI)
    } else {
        Ok(phi)
    }
}

/// One-way propagation delay between two points at speed `c`.
pub fn propagation_delay(p: Position, p_j: Position, c: f64) -> f64 {
    p.distance_to(&p_j) / c
}

/// Unit-norm uniform-linear-array response for bearing `phi`.
///
/// Entry `m` (0-indexed) is `exp(-i 2 pi m spacing cos(phi) / wavelength) / sqrt(M)`.
pub fn steering_vector(
    phi: f64,
    num_antennas: usize,
    spacing: f64,
    wavelength: f64,
) -> Vec<Complex64> {
    let scale = 1.0 / (num_antennas as f64).sqrt();
    let phase_per_antenna = -2.0 * std::f64::consts::PI * spacing * phi.cos() / wavelength;
    (0..num_antennas)
        .map(|m| Complex64::from_polar(scale, phase_per_antenna * m as f64))
        .collect()
}

/// Axis-aligned rectangular search region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invalid(format!(
                "region must have positive area, got x [{x_min}, {x_max}], y [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    /// Square region of side `size` centered on `center`.
    pub fn centered_square(center: Position, size: f64) -> Result<Self> {
        let h = size / 2.0;
        Self::new(center.x - h, center.x + h, center.y - h, center.y + h)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(self.x_min, self.x_max), p.y.clamp(self.y_min, self.y_max))
    }

    pub fn corners(&self) -> [Position; 4] {
        [
            Position::new(self.x_min, self.y_min),
            Position::new(self.x_max, self.y_min),
            Position::new(self.x_max, self.y_max),
            Position::new(self.x_min, self.y_max),
        ]
    }

    pub fn center(&self) -> Position {
        Position::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Uniform sample over the rectangle.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        Position::new(
            rng.gen_range(self.x_min..self.x_max),
            rng.gen_range(self.y_min..self.y_max),
        )
    }
}

/// One radio unit: an antenna array plus its fronthaul link budget.
#[derive(Debug, Clone)]
pub struct RadioUnit {
    pub position: Position,
    /// Number of array elements M.
    pub num_antennas: usize,
    /// Noise power per complex DFT sample (real and imaginary parts carry
    /// half of it each).
    pub noise_power: f64,
    /// Fronthaul rate B_j in bits per complex vector sample across the
    /// whole array.
    pub fronthaul_bits: f64,
    /// Mean channel power E[|b_j|^2] (linear).
    pub mean_channel_power: f64,
    /// Calibrated quantizer, if dynamic-range calibration has run.
    pub quantizer: Option<UniformQuantizerSpec>,
}

impl RadioUnit {
    pub fn new(position: Position, num_antennas: usize) -> Self {
        Self {
            position,
            num_antennas,
            noise_power: 1.0,
            fronthaul_bits: 1.0,
            mean_channel_power: 1.0,
            quantizer: None,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.num_antennas < 1 {
            return Err(Error::invalid(format!("radio unit {index}: needs at least 1 antenna")));
        }
        // noise_power == 0 is allowed so noiseless sanity runs are expressible.
        if !(self.noise_power >= 0.0) {
            return Err(Error::invalid(format!("radio unit {index}: noise power must be >= 0")));
        }
        if !(self.fronthaul_bits > 0.0) {
            return Err(Error::invalid(format!("radio unit {index}: fronthaul bits must be > 0")));
        }
        if !(self.mean_channel_power >= 0.0) {
            return Err(Error::invalid(format!(
                "radio unit {index}: mean channel power must be >= 0"
            )));
        }
        Ok(())
    }
}

/// DFT coefficients of the transmitted waveform, normalized to unit energy.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSpectrum {
    coefficients: Vec<Complex64>,
}

impl WaveformSpectrum {
    const NORMALIZATION_TOL: f64 = 1e-12;

    /// Wraps DFT coefficients, enforcing `sum |S(k)|^2 == 1` within 1e-12.
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("waveform spectrum must have at least one bin"));
        }
        let energy: f64 = coefficients.iter().map(|s| s.norm_sqr()).sum();
        if (energy - 1.0).abs() > Self::NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "waveform spectrum energy {energy} deviates from 1 by more than 1e-12"
            )));
        }
        Ok(Self { coefficients })
    }

    /// Spectrum of the unit-energy sampled sinc pulse.
    ///
    /// Sampled at integer multiples of the symbol period the sinc is an
    /// impulse at n = 0 scaled by `1/sqrt(N_s)`, so its DFT is flat:
    /// `S(k) = 1/sqrt(N_s)` for every bin.
    pub fn sinc(num_samples: usize) -> Result<Self> {
        if num_samples == 0 {
            return Err(Error::invalid("waveform needs at least one sample"));
        }
        let amp = 1.0 / (num_samples as f64).sqrt();
        Self::new(vec![Complex64::new(amp, 0.0); num_samples])
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// One realization of the unknowns of a trial: channel coefficients, the
/// transmit time and the true source position.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// Complex channel coefficient per radio unit.
    pub amplitudes: Vec<Complex64>,
    /// Unknown transmit time t0, seconds.
    pub transmit_time: f64,
    /// True source position.
    pub source: Position,
}

/// Frequency-domain received samples of one radio unit: antennas x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqObservation {
    /// M x N_s matrix of DFT coefficients.
    pub samples: DMatrix<Complex64>,
}

impl FreqObservation {
    pub fn new(samples: DMatrix<Complex64>) -> Self {
        Self { samples }
    }

    pub fn zeros(num_antennas: usize, num_bins: usize) -> Self {
        Self { samples: DMatrix::zeros(num_antennas, num_bins) }
    }

    pub fn num_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.samples.ncols()
    }
}

/// Immutable description of the full localization scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub radio_units: Vec<RadioUnit>,
    /// Prior search region for the source position.
    pub region: Region,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    /// Array element separation, meters.
    pub antenna_spacing: f64,
    /// Sampling period T_s, seconds.
    pub sampling_period: f64,
    /// Number of samples N_s per observation.
    pub num_samples: usize,
    /// Propagation speed, m/s.
    pub propagation_speed: f64,
    /// Rician factor K (linear); `f64::INFINITY` is a pure specular channel.
    pub rician_k: f64,
    pub waveform: WaveformSpectrum,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.radio_units.is_empty() {
            return Err(Error::invalid("scenario needs at least one radio unit"));
        }
        for (j, ru) in self.radio_units.iter().enumerate() {
            ru.validate(j)?;
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::invalid("wavelength must be > 0"));
        }
        if !(self.antenna_spacing > 0.0) {
            return Err(Error::invalid("antenna spacing must be > 0"));
        }
        if !(self.sampling_period > 0.0) {
            return Err(Error::invalid("sampling period must be > 0"));
        }
        if self.num_samples == 0 {
            return Err(Error::invalid("need at least one sample"));
        }
        if !(self.propagation_speed > 0.0) {
            return Err(Error::invalid("propagation speed must be > 0"));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::invalid("Rician factor must be >= 0"));
        }
        if self.waveform.len() != self.num_samples {
            return Err(Error::invalid(format!(
                "waveform has {} bins but the scenario has {} samples",
                self.waveform.len(),
                self.num_samples
            )));
        }
        Ok(())
    }

    pub fn num_radio_units(&self) -> usize {
        self.radio_units.len()
    }

    /// Observation window length `N_s T_s`, the period of all delay phases.
    pub fn window(&self) -> f64 {
        self.num_samples as f64 * self.sampling_period
    }

    /// Angular frequency of DFT bin `k`: `w_k = 2 pi k / (N_s T_s)`.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.window()
    }

    /// Propagation delay from `p` to radio unit `j`.
    pub fn delay_to_ru(&self, j: usize, p: Position) -> f64 {
        propagation_delay(p, self.radio_units[j].position, self.propagation_speed)
    }

    /// Bearing of `p` as seen from radio unit `j`.
    pub fn bearing_from_ru(&self, j: usize, p: Position) -> Result<f64> {
        bearing(p, self.radio_units[j].position)
    }

    /// Steering vector of radio unit `j` toward bearing `phi`.
    pub fn ru_steering(&self, j: usize, phi: f64) -> Vec<Complex64> {
        steering_vector(phi, self.radio_units[j].num_antennas, self.antenna_spacing, self.wavelength)
    }

    /// Draws the trial unknowns: source uniform over the region, channel
    /// coefficients Rician with a fixed-phase specular part, transmit time
    /// uniform on `[0, t0_max)`.
    ///
    /// RNG consumption order is fixed (position, transmit time, then one
    /// coefficient per radio unit) so draws are reproducible given a seed.
    pub fn draw_channel<R: Rng + ?Sized>(&self, t0_max: f64, rng: &mut R) -> ChannelDraw {
        let source = self.region.sample_uniform(rng);
        let transmit_time = if t0_max > 0.0 { rng.gen_range(0.0..t0_max) } else { 0.0 };
        let amplitudes = self
            .radio_units
            .iter()
            .map(|ru| draw_rician(ru.mean_channel_power, self.rician_k, rng))
            .collect();
        ChannelDraw { amplitudes, transmit_time, source }
    }

    /// Noiseless mean of the observation of radio unit `j` at bin `k`,
    /// antenna `m`, for the given draw.
    pub fn noiseless_mean(&self, j: usize, draw: &ChannelDraw, k: usize, m: usize) -> Complex64 {
        let tau = self.delay_to_ru(j, draw.source);
        let alpha = self.ru_steering_toward(j, draw.source);
        let s = self.waveform.coefficients()[k];
        // Same evaluation order as `synthesize_observation` so the noiseless
        // residual is exactly zero.
        let phase = delay_phase(k, tau + draw.transmit_time, self.window());
        draw.amplitudes[j] * s * phase * alpha[m]
    }

    /// Steering vector of radio unit `j` toward position `p`.
    ///
    /// A single-element array has no bearing dependence, so `p` may coincide
    /// with the radio unit only in that case.
    pub fn ru_steering_toward(&self, j: usize, p: Position) -> Vec<Complex64> {
        let ru = &self.radio_units[j];
        if ru.num_antennas == 1 {
            return vec![Complex64::new(1.0, 0.0)];
        }
        let phi = bearing(p, ru.position).expect("source coincides with a multi-antenna radio unit");
        steering_vector(phi, ru.num_antennas, self.antenna_spacing, self.wavelength)
    }

    /// Synthesizes the per-RU frequency-domain observations for one draw.
    ///
    /// Noise is independent across radio units, bins and antennas, with the
    /// real and imaginary parts each carrying half the per-sample power.
    pub fn synthesize_observation<R: Rng + ?Sized>(
        &self,
        draw: &ChannelDraw,
        rng: &mut R,
    ) -> Vec<FreqObservation> {
        let n_s = self.num_samples;
        let window = self.window();
        self.radio_units
            .iter()
            .enumerate()
            .map(|(j, ru)| {
                let m_ant = ru.num_antennas;
                let tau = propagation_delay(draw.source, ru.position, self.propagation_speed);
                let alpha = self.ru_steering_toward(j, draw.source);
                let total_delay = tau + draw.transmit_time;
                let b = draw.amplitudes[j];
                let component_std = (ru.noise_power / 2.0).sqrt();
                let noise = Normal::new(0.0, component_std).expect("finite noise std");

                let mut samples = DMatrix::zeros(m_ant, n_s);
                for k in 0..n_s {
                    let phase = delay_phase(k, total_delay, window);
                    let common = b * self.waveform.coefficients()[k] * phase;
                    for m in 0..m_ant {
                        let z = if ru.noise_power > 0.0 {
                            Complex64::new(noise.sample(rng), noise.sample(rng))
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        samples[(m, k)] = common * alpha[m] + z;
                    }
                }
                FreqObservation::new(samples)
            })
            .collect()
    }
}

/// `exp(-i w_k delay)` with the whole cycles removed before evaluating the
/// complex exponential, keeping the phase exact under window-length aliasing.
pub(crate) fn delay_phase(k: usize, delay: f64, window: f64) -> Complex64 {
    let cycles = k as f64 * (delay / window);
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * frac)
}

fn draw_rician<R: Rng + ?Sized>(mean_power: f64, k_factor: f64, rng: &mut R) -> Complex64 {
    if mean_power == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if k_factor.is_infinite() {
        return Complex64::new(mean_power.sqrt(), 0.0);
    }
    let specular = (k_factor / (k_factor + 1.0) * mean_power).sqrt();
    let diffuse_component_std = (mean_power / (2.0 * (k_factor + 1.0))).sqrt();
    let normal = Normal::new(0.0, diffuse_component_std).expect("finite diffuse std");
    Complex64::new(specular + normal.sample(rng), normal.sample(rng))
}
