//! File-based experiment configuration.
//!
//! Configurations are TOML with nested sections. All physical quantities are
//! SI (`_m`, `_s`, `_mps` suffixes); decibel values carry a `_db` suffix.
//! Every section has defaults matching the reference four-unit deployment,
//! so a config file only needs the fields it overrides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    Position, RadioUnit, Region, Scenario, WaveformSpectrum, SPEED_OF_LIGHT,
};

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentSection,
    pub calibration: CalibrationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            experiment: ExperimentSection::default(),
            calibration: CalibrationSection::default(),
        }
    }
}

/// Geometry, array, waveform and channel statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ScenarioConfig {
    pub region: RegionConfig,
    /// Carrier wavelength; the default is the 900 MHz GSM band.
    pub wavelength_m: f64,
    pub antenna_spacing_m: f64,
    pub sampling_period_s: f64,
    pub num_samples: usize,
    pub num_antennas: usize,
    pub propagation_speed_mps: f64,
    pub rician_k_db: f64,
    /// Mean channel power E[|b|^2], linear.
    pub mean_channel_power: f64,
    pub radio_units: Vec<RadioUnitConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 900.0e6;
        Self {
            region: RegionConfig::default(),
            wavelength_m: wavelength,
            antenna_spacing_m: wavelength / 2.0,
            sampling_period_s: 2.5e-6,
            num_samples: 8,
            num_antennas: 8,
            propagation_speed_mps: SPEED_OF_LIGHT,
            rician_k_db: 20.0,
            mean_channel_power: 1.0,
            radio_units: vec![
                RadioUnitConfig { x_m: -2000.0, y_m: -2000.0 },
                RadioUnitConfig { x_m: 2000.0, y_m: -2000.0 },
                RadioUnitConfig { x_m: 2000.0, y_m: 2000.0 },
                RadioUnitConfig { x_m: -2000.0, y_m: 2000.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RegionConfig {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { x_min_m: -1500.0, x_max_m: 1500.0, y_min_m: -1500.0, y_max_m: 1500.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RadioUnitConfig {
    pub x_m: f64,
    pub y_m: f64,
}

/// Monte Carlo sweep settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentSection {
    /// Per-antenna SNR sweep, defined as `E[|b|^2] / (N_s sigma^2)` in dB.
    pub snr_db_list: Vec<f64>,
    /// Fronthaul rate sweep in bits per antenna per complex sample.
    pub b_over_m_list: Vec<f64>,
    /// Per-radio-unit multiplier on the swept rate, e.g. `[1, 1, 1, 2]`
    /// grants the fourth unit twice the rate.
    pub fronthaul_pattern: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Estimators to run: `direct-quantized`, `direct-dithered[:divisor]`,
    /// `direct-ideal`, `indirect`.
    pub methods: Vec<String>,
    /// Dither amplitude divisor for the bare `direct-dithered` method.
    pub dither_divisor: f64,
    /// Divisors expanded by the `--dither sweep` mode.
    pub dither_divisor_sweep: Vec<f64>,
    /// Upper end of the uniform transmit-time prior.
    pub t0_max_s: f64,
    pub grid: GridSection,
    pub indirect: IndirectSection,
    /// Source positions averaged per point of the bound sweep.
    pub crb_positions: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            snr_db_list: vec![0.0],
            b_over_m_list: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            fronthaul_pattern: vec![1.0, 1.0, 1.0, 2.0],
            trials: 500,
            master_seed: 20240117,
            methods: vec![
                "direct-quantized".into(),
                "direct-dithered".into(),
                "direct-ideal".into(),
                "indirect".into(),
            ],
            dither_divisor: 2.0,
            dither_divisor_sweep: vec![1.0, 2.0, 4.0],
            // Keeps t0 + worst-case propagation delay (16.5 us from a far
            // corner) inside the 20 us observation window, as the signal
            // model requires.
            t0_max_s: 3.0e-6,
            grid: GridSection::default(),
            indirect: IndirectSection::default(),
            crb_positions: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GridSection {
    pub spacing_m: f64,
    pub q_t0: usize,
    pub zoom_rounds: usize,
    pub zoom_factor: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { spacing_m: 25.0, q_t0: 1, zoom_rounds: 2, zoom_factor: 5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct IndirectSection {
    pub aoa_grid_points: usize,
    pub toa_grid_points: usize,
    /// Widens the per-unit AOA search arc beyond the region's bearing span.
    pub aoa_arc_margin_rad: f64,
    pub use_aoa: bool,
    pub use_toa: bool,
}

impl Default for IndirectSection {
    fn default() -> Self {
        Self {
            aoa_grid_points: 2048,
            toa_grid_points: 4096,
            aoa_arc_margin_rad: 0.05,
            use_aoa: true,
            use_toa: true,
        }
    }
}

/// Dynamic-range calibration settings and, once calibrated, the results.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CalibrationSection {
    /// Probability mass the dynamic range must cover.
    pub coverage: f64,
    pub draws: usize,
    /// Calibrated dynamic ranges per SNR point; filled by `calibrate` and
    /// reused by later runs so results are reproducible without
    /// re-calibration.
    pub table: Vec<CalibrationEntry>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { coverage: 0.95, draws: 2000, table: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CalibrationEntry {
    pub snr_db: f64,
    pub r_max_per_ru: Vec<f64>,
    pub r_max_shared: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.radio_units.is_empty() {
            return Err(Error::InvalidConfig("no radio units".into()));
        }
        let e = &self.experiment;
        if e.snr_db_list.is_empty() || e.b_over_m_list.is_empty() {
            return Err(Error::InvalidConfig("SNR and rate sweeps must be non-empty".into()));
        }
        if e.b_over_m_list.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::InvalidConfig("swept rates must be positive".into()));
        }
        if e.fronthaul_pattern.len() != s.radio_units.len() {
            return Err(Error::InvalidConfig(format!(
                "fronthaul pattern has {} entries for {} radio units",
                e.fronthaul_pattern.len(),
                s.radio_units.len()
            )));
        }
        if e.fronthaul_pattern.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidConfig("fronthaul pattern must be positive".into()));
        }
        if e.trials == 0 {
            return Err(Error::InvalidConfig("need at least one trial".into()));
        }
        if e.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if !(e.dither_divisor > 0.0) {
            return Err(Error::InvalidConfig("dither divisor must be positive".into()));
        }
        if !(e.t0_max_s >= 0.0) {
            return Err(Error::InvalidConfig("transmit-time prior must be non-negative".into()));
        }
        if !(e.grid.spacing_m > 0.0) || e.grid.q_t0 == 0 {
            return Err(Error::InvalidConfig("invalid search grid".into()));
        }
        if e.grid.zoom_rounds > 0 && e.grid.zoom_factor < 2 {
            return Err(Error::InvalidConfig("zoom factor must be >= 2".into()));
        }
        if e.indirect.aoa_grid_points < 2 || e.indirect.toa_grid_points < 2 {
            return Err(Error::InvalidConfig("indirect grids need at least 2 points".into()));
        }
        if !(e.indirect.use_aoa || e.indirect.use_toa) {
            return Err(Error::InvalidConfig(
                "indirect fusion needs at least one of TOA or AOA".into(),
            ));
        }
        if e.crb_positions == 0 {
            return Err(Error::InvalidConfig("bound sweep needs at least one position".into()));
        }
        let c = &self.calibration;
        if !(c.coverage > 0.0 && c.coverage < 1.0) {
            return Err(Error::InvalidConfig("coverage must be in (0, 1)".into()));
        }
        if c.draws < 1000 {
            return Err(Error::InvalidConfig("calibration needs at least 1000 draws".into()));
        }
        // Cheap structural check of the scenario itself.
        let scn = self.build_scenario(e.snr_db_list[0], e.b_over_m_list[0])?;
        scn.validate()?;
        // Delays alias modulo the observation window; the draw must stay
        // inside it or every estimator sees a wrapped transmit time.
        let max_delay = scn
            .radio_units
            .iter()
            .flat_map(|ru| {
                scn.region.corners().into_iter().map(move |c| c.distance_to(&ru.position))
            })
            .fold(0.0_f64, f64::max)
            / scn.propagation_speed;
        if e.t0_max_s + max_delay >= scn.window() {
            return Err(Error::InvalidConfig(format!(
                "transmit-time prior {} s plus worst-case delay {max_delay:.3e} s exceeds the \
                 observation window {:.3e} s",
                e.t0_max_s,
                scn.window()
            )));
        }
        Ok(())
    }

    /// Noise power realizing a per-antenna SNR of `snr_db`.
    ///
    /// SNR is defined at a single array element and a single sample: the
    /// unit-norm array response spreads the channel power over `M` elements
    /// and the unit-energy waveform over `N_s` bins, so
    /// `sigma^2 = E[|b|^2] / (M * N_s * 10^(snr/10))`.
    pub fn noise_power_for_snr(&self, snr_db: f64) -> f64 {
        let snr = 10.0_f64.powf(snr_db / 10.0);
        self.scenario.mean_channel_power
            / (self.scenario.num_antennas as f64 * self.scenario.num_samples as f64 * snr)
    }

    /// Builds the scenario for one sweep cell. Quantizers are left
    /// uncalibrated; the harness attaches them after dynamic-range
    /// calibration.
    pub fn build_scenario(&self, snr_db: f64, b_over_m: f64) -> Result<Scenario> {
        let s = &self.scenario;
        let noise_power = self.noise_power_for_snr(snr_db);
        let radio_units = s
            .radio_units
            .iter()
            .zip(self.experiment.fronthaul_pattern.iter())
            .map(|(ru, &multiplier)| RadioUnit {
                position: Position::new(ru.x_m, ru.y_m),
                num_antennas: s.num_antennas,
                noise_power,
                fronthaul_bits: b_over_m * multiplier * s.num_antennas as f64,
                mean_channel_power: s.mean_channel_power,
                quantizer: None,
            })
            .collect();
        let scenario = Scenario {
            radio_units,
            region: Region::new(
                s.region.x_min_m,
                s.region.x_max_m,
                s.region.y_min_m,
                s.region.y_max_m,
            )?,
            wavelength: s.wavelength_m,
            antenna_spacing: s.antenna_spacing_m,
            sampling_period: s.sampling_period_s,
            num_samples: s.num_samples,
            propagation_speed: s.propagation_speed_mps,
            rician_k: 10.0_f64.powf(s.rician_k_db / 10.0),
            waveform: WaveformSpectrum::sinc(s.num_samples)?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Calibration table entry for an SNR point, if present.
    pub fn calibration_for(&self, snr_db: f64) -> Option<&CalibrationEntry> {
        self.calibration.table.iter().find(|e| (e.snr_db - snr_db).abs() < 1e-9)
    }
}
