//! Deterministic Monte Carlo driver: RMS-error sweeps over SNR and
//! fronthaul rate, bound sweeps, and the analytic loss table.
//!
//! Every random quantity is drawn from a counter-derived seed, never from a
//! shared sequential stream, so results are identical across runs and across
//! thread counts. The channel/noise seed of a trial depends on the sweep
//! cell and trial index but *not* on the method, so method comparisons are
//! paired on identical realizations; only the dither draws carry a
//! method-specific seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{CalibrationEntry, ExperimentConfig};
use crate::crb::{crb_trace, efim, fim_quantized, fim_unquantized, quantization_loss, RuLink};
use crate::direct::{estimate_position, Estimate, SearchGrid};
use crate::error::{Error, Result};
use crate::fronthaul::{
    calibrate_dynamic_range, fronthaul_round_trip, DitherSpec, EffectiveWeights,
    UniformQuantizerSpec,
};
use crate::indirect::{
    bearing_arc_to_region, fuse_ml, measurement_variances_from_bound, music_aoa, music_toa,
    MeasurementSet, RuMeasurement,
};
use crate::output::{RmsSummary, TrialRecord};
use crate::scenario::{FreqObservation, Scenario};

const TAG_CALIBRATION: u64 = 0x01;
const TAG_TRIAL: u64 = 0x02;
const TAG_DITHER: u64 = 0x03;
const TAG_BOUND: u64 = 0x04;

/// Localization method run by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Direct estimation from quantized, undithered fronthaul signals.
    DirectQuantized,
    /// Direct estimation with subtractive dithering.
    DirectDithered { divisor: f64 },
    /// Direct estimation with an ideal (unquantized) fronthaul.
    DirectIdeal,
    /// Two-step TOA/AOA baseline with unquantized measurements.
    Indirect,
}

impl Method {
    /// Parses a method label; a bare `direct-dithered` takes the configured
    /// default divisor, `direct-dithered:<divisor>` an explicit one.
    pub fn parse(text: &str, default_divisor: f64) -> Result<Self> {
        match text {
            "direct-quantized" => Ok(Method::DirectQuantized),
            "direct-ideal" => Ok(Method::DirectIdeal),
            "indirect" => Ok(Method::Indirect),
            "direct-dithered" => Ok(Method::DirectDithered { divisor: default_divisor }),
            other => {
                if let Some(arg) = other.strip_prefix("direct-dithered:") {
                    let divisor: f64 = arg
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad dither divisor: {arg}")))?;
                    if !(divisor > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "dither divisor must be positive: {divisor}"
                        )));
                    }
                    Ok(Method::DirectDithered { divisor })
                } else {
                    Err(Error::InvalidConfig(format!("unknown method: {other}")))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Method::DirectQuantized => "direct-quantized".into(),
            Method::DirectIdeal => "direct-ideal".into(),
            Method::Indirect => "indirect".into(),
            Method::DirectDithered { divisor } => format!("direct-dithered:{divisor}"),
        }
    }

    fn needs_quantizer(&self) -> bool {
        matches!(self, Method::DirectQuantized | Method::DirectDithered { .. })
    }
}

/// Counter-based seed derivation (SplitMix64 over the tag stream).
pub(crate) fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6A09_E667_F3BC_C908);
    for &t in tags {
        state = splitmix64(state ^ t);
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Results of a simulation run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<RmsSummary>,
    /// Input configuration with the calibration table filled in.
    pub resolved_config: ExperimentConfig,
}

/// One row of the bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbSweepRow {
    pub snr_db: f64,
    pub b_over_m: f64,
    pub levels: usize,
    pub r_max: f64,
    /// Position-error bound with quantized observations, m^2 (averaged over
    /// source draws).
    pub crb_quantized: f64,
    pub crb_unquantized: f64,
    /// `crb_unquantized / crb_quantized`.
    pub ratio: f64,
    /// Analytic low-SNR loss factor for the same quantizer.
    pub loss_factor: f64,
    /// Source draws that entered the averages.
    pub positions: usize,
    /// Draws skipped because the information was singular.
    pub skipped: usize,
}

/// One row of the analytic loss table.
#[derive(Debug, Clone, PartialEq)]
pub struct LqRow {
    pub snr_db: f64,
    pub b_over_m: f64,
    pub levels: usize,
    pub r_max: f64,
    pub sigma: f64,
    pub loss_factor: f64,
}

/// Output of [`crb_sweep`].
#[derive(Debug, Clone)]
pub struct CrbSweepOutput {
    pub rows: Vec<CrbSweepRow>,
    pub resolved_config: ExperimentConfig,
}

/// Ensures every swept SNR has a calibration entry, running the Monte Carlo
/// calibration where missing. Returns the updated configuration.
pub fn calibrate_config(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    for (si, &snr_db) in cfg.experiment.snr_db_list.iter().enumerate() {
        ensure_calibration(&mut resolved, si, snr_db)?;
    }
    Ok(resolved)
}

fn ensure_calibration(cfg: &mut ExperimentConfig, snr_index: usize, snr_db: f64) -> Result<()> {
    if cfg.calibration_for(snr_db).is_some() {
        return Ok(());
    }
    // The fronthaul rate does not influence the received-signal statistics.
    let scn = cfg.build_scenario(snr_db, cfg.experiment.b_over_m_list[0])?;
    let seed = derive_seed(cfg.experiment.master_seed, &[TAG_CALIBRATION, snr_index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cal = calibrate_dynamic_range(
        &scn,
        cfg.calibration.coverage,
        cfg.calibration.draws,
        cfg.experiment.t0_max_s,
        &mut rng,
    )?;
    cfg.calibration.table.push(CalibrationEntry {
        snr_db,
        r_max_per_ru: cal.per_ru,
        r_max_shared: cal.pooled,
    });
    Ok(())
}

struct IndirectContext {
    arcs: Vec<Vec<f64>>,
    delays: Vec<f64>,
    variances: Vec<(f64, f64)>,
    use_aoa: bool,
    use_toa: bool,
}

impl IndirectContext {
    fn build(cfg: &ExperimentConfig, scn: &Scenario) -> Result<Self> {
        let ind = &cfg.experiment.indirect;
        let arcs = (0..scn.num_radio_units())
            .map(|j| {
                let (lo, hi) = bearing_arc_to_region(scn, j, ind.aoa_arc_margin_rad)?;
                let n = ind.aoa_grid_points;
                Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
            })
            .collect::<Result<_>>()?;
        let n_toa = ind.toa_grid_points;
        let window = scn.window();
        let delays = (0..n_toa).map(|i| i as f64 * window / n_toa as f64).collect();
        let variances = measurement_variances_from_bound(scn, scn.region.center(), 0.0)?;
        Ok(Self { arcs, delays, variances, use_aoa: ind.use_aoa, use_toa: ind.use_toa })
    }

    fn estimate(
        &self,
        scn: &Scenario,
        observations: &[FreqObservation],
        grid: &SearchGrid,
    ) -> Result<Estimate> {
        let per_ru = (0..scn.num_radio_units())
            .map(|j| {
                let toa = if self.use_toa {
                    music_toa(
                        &observations[j],
                        &scn.waveform,
                        scn.sampling_period,
                        &self.delays,
                    )?
                    .0
                } else {
                    0.0
                };
                let aoa = if self.use_aoa {
                    music_aoa(
                        &observations[j],
                        scn.antenna_spacing,
                        scn.wavelength,
                        &self.arcs[j],
                    )?
                    .0
                } else {
                    0.0
                };
                Ok(RuMeasurement {
                    toa,
                    aoa,
                    toa_var: if self.use_toa { self.variances[j].0 } else { f64::INFINITY },
                    aoa_var: if self.use_aoa { self.variances[j].1 } else { f64::INFINITY },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fuse_ml(&MeasurementSet { per_ru }, scn, grid)
    }
}

/// Runs the configured Monte Carlo sweep.
///
/// For every `(SNR, rate, method)` cell, `trials` independent trials draw a
/// source position, channel and noise, push the observation through the
/// method's fronthaul path, localize, and record the squared error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let methods: Vec<Method> = cfg
        .experiment
        .methods
        .iter()
        .map(|s| Method::parse(s, cfg.experiment.dither_divisor))
        .collect::<Result<_>>()?;
    let needs_quantizer = methods.iter().any(Method::needs_quantizer);
    let needs_indirect = methods.contains(&Method::Indirect);

    let grid = SearchGrid::new(cfg.experiment.grid.spacing_m, cfg.experiment.grid.q_t0)?
        .with_zoom(cfg.experiment.grid.zoom_rounds, cfg.experiment.grid.zoom_factor)?;

    let mut resolved = cfg.clone();
    let mut records = Vec::new();
    let mut summaries = Vec::new();

    for (si, &snr_db) in cfg.experiment.snr_db_list.iter().enumerate() {
        if needs_quantizer {
            ensure_calibration(&mut resolved, si, snr_db)?;
        }
        let indirect_ctx = if needs_indirect {
            let scn = cfg.build_scenario(snr_db, cfg.experiment.b_over_m_list[0])?;
            Some(IndirectContext::build(cfg, &scn)?)
        } else {
            None
        };

        for (bi, &b_over_m) in cfg.experiment.b_over_m_list.iter().enumerate() {
            let mut scn = cfg.build_scenario(snr_db, b_over_m)?;
            if needs_quantizer {
                let entry = resolved
                    .calibration_for(snr_db)
                    .expect("calibration ensured above")
                    .clone();
                for (j, ru) in scn.radio_units.iter_mut().enumerate() {
                    ru.quantizer = Some(UniformQuantizerSpec::from_rate(
                        ru.fronthaul_bits,
                        ru.num_antennas,
                        entry.r_max_per_ru[j],
                    )?);
                }
            }
            let weights_quantized = if needs_quantizer {
                Some(EffectiveWeights::from_scenario(&scn)?)
            } else {
                None
            };
            let weights_ideal = EffectiveWeights::unquantized(&scn);

            for method in &methods {
                let cell = run_cell(
                    cfg,
                    &scn,
                    *method,
                    (si, snr_db),
                    (bi, b_over_m),
                    &grid,
                    weights_quantized.as_ref(),
                    &weights_ideal,
                    indirect_ctx.as_ref(),
                )?;
                let errors: Vec<f64> = cell.iter().map(|r| r.sq_error).collect();
                summaries.push(RmsSummary::from_squared_errors(
                    method.label(),
                    snr_db,
                    b_over_m,
                    &errors,
                ));
                records.extend(cell);
            }
        }
    }

    Ok(ExperimentOutput { records, summaries, resolved_config: resolved })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    scn: &Scenario,
    method: Method,
    (si, snr_db): (usize, f64),
    (bi, b_over_m): (usize, f64),
    grid: &SearchGrid,
    weights_quantized: Option<&EffectiveWeights>,
    weights_ideal: &EffectiveWeights,
    indirect_ctx: Option<&IndirectContext>,
) -> Result<Vec<TrialRecord>> {
    let master = cfg.experiment.master_seed;
    let t0_max = cfg.experiment.t0_max_s;
    (0..cfg.experiment.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(master, &[TAG_TRIAL, si as u64, bi as u64, trial as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw = scn.draw_channel(t0_max, &mut rng);
            let observations = scn.synthesize_observation(&draw, &mut rng);

            let estimate = match method {
                Method::DirectIdeal => {
                    estimate_position(scn, &observations, weights_ideal, grid)?
                }
                Method::DirectQuantized => {
                    let weights = weights_quantized.expect("quantized weights prepared");
                    let reconstructed = quantize_all(scn, &observations, None, &mut rng)?;
                    estimate_position(scn, &reconstructed, weights, grid)?
                }
                Method::DirectDithered { divisor } => {
                    let weights = weights_quantized.expect("quantized weights prepared");
                    let dither_seed = derive_seed(
                        master,
                        &[TAG_DITHER, si as u64, bi as u64, trial as u64, divisor.to_bits()],
                    );
                    let mut dither_rng = ChaCha8Rng::seed_from_u64(dither_seed);
                    let reconstructed =
                        quantize_all(scn, &observations, Some(divisor), &mut dither_rng)?;
                    estimate_position(scn, &reconstructed, weights, grid)?
                }
                Method::Indirect => {
                    let ctx = indirect_ctx.expect("indirect context prepared");
                    ctx.estimate(scn, &observations, grid)?
                }
            };

            let dx = estimate.position.x - draw.source.x;
            let dy = estimate.position.y - draw.source.y;
            Ok(TrialRecord {
                method: method.label(),
                snr_db,
                b_over_m,
                trial,
                seed,
                p_true: draw.source,
                p_hat: estimate.position,
                sq_error: dx * dx + dy * dy,
            })
        })
        .collect()
}

fn quantize_all(
    scn: &Scenario,
    observations: &[FreqObservation],
    dither_divisor: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FreqObservation>> {
    let dither = match dither_divisor {
        Some(divisor) => DitherSpec::subtractive(divisor)?,
        None => DitherSpec::disabled(),
    };
    observations
        .iter()
        .enumerate()
        .map(|(j, obs)| {
            let quantizer = scn.radio_units[j]
                .quantizer
                .as_ref()
                .ok_or_else(|| Error::invalid("radio unit has no calibrated quantizer"))?;
            Ok(fronthaul_round_trip(obs, quantizer, &dither, rng).1)
        })
        .collect()
}

/// Sweeps the position-error bounds over `(SNR, rate)`, averaging over
/// random source/channel draws, with an equal rate at every radio unit and
/// one shared quantizer, and tabulates the analytic loss factor alongside.
pub fn crb_sweep(cfg: &ExperimentConfig) -> Result<CrbSweepOutput> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    let mut rows = Vec::new();
    let master = cfg.experiment.master_seed;

    for (si, &snr_db) in cfg.experiment.snr_db_list.iter().enumerate() {
        ensure_calibration(&mut resolved, si, snr_db)?;
        let entry = resolved.calibration_for(snr_db).expect("just calibrated").clone();
        let r_max = entry.r_max_shared;
        let sigma = cfg.noise_power_for_snr(snr_db).sqrt();

        for &b_over_m in &cfg.experiment.b_over_m_list {
            let mut scn = cfg.build_scenario(snr_db, b_over_m)?;
            // Equal fronthaul rate and a shared quantizer at every unit for
            // the loss-factor comparison.
            let m_ant = scn.radio_units[0].num_antennas;
            let equal_bits = b_over_m * m_ant as f64;
            for ru in &mut scn.radio_units {
                ru.fronthaul_bits = equal_bits;
            }
            let quantizer = UniformQuantizerSpec::from_rate(equal_bits, m_ant, r_max)?;
            let loss_factor = quantization_loss(quantizer.levels(), r_max, sigma)?;

            let draws: Vec<Option<(f64, f64)>> = (0..cfg.experiment.crb_positions)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(master, &[TAG_BOUND, si as u64, t as u64]);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let draw = scn.draw_channel(cfg.experiment.t0_max_s, &mut rng);
                    bound_pair(&scn, &draw, &quantizer).ok()
                })
                .collect();

            let mut sum_q = 0.0;
            let mut sum_uq = 0.0;
            let mut used = 0usize;
            for d in draws.iter().flatten() {
                sum_q += d.0;
                sum_uq += d.1;
                used += 1;
            }
            if used == 0 {
                return Err(Error::SingularMatrix { context: "every bound draw" });
            }
            let crb_quantized = sum_q / used as f64;
            let crb_unquantized = sum_uq / used as f64;
            rows.push(CrbSweepRow {
                snr_db,
                b_over_m,
                levels: quantizer.levels(),
                r_max,
                crb_quantized,
                crb_unquantized,
                ratio: crb_unquantized / crb_quantized,
                loss_factor,
                positions: used,
                skipped: cfg.experiment.crb_positions - used,
            });
        }
    }

    Ok(CrbSweepOutput { rows, resolved_config: resolved })
}

fn bound_pair(
    scn: &Scenario,
    draw: &crate::scenario::ChannelDraw,
    quantizer: &UniformQuantizerSpec,
) -> Result<(f64, f64)> {
    let n_r = scn.num_radio_units();
    let mut psis_q = Vec::with_capacity(n_r);
    let mut psis_uq = Vec::with_capacity(n_r);
    for j in 0..n_r {
        let link = RuLink::from_scenario(scn, j, draw.transmit_time);
        let params = RuLink::params_for(scn, j, draw.source, draw.amplitudes[j])?;
        psis_q.push(fim_quantized(&link, &params, quantizer));
        psis_uq.push(fim_unquantized(&link, &params));
    }
    let crb_q = crb_trace(&efim(scn, draw.source, &psis_q)?.info)?;
    let crb_uq = crb_trace(&efim(scn, draw.source, &psis_uq)?.info)?;
    Ok((crb_q, crb_uq))
}

/// Analytic loss-factor table over the configured `(SNR, rate)` sweep.
pub fn lq_table(cfg: &ExperimentConfig) -> Result<(Vec<LqRow>, ExperimentConfig)> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    let mut rows = Vec::new();
    for (si, &snr_db) in cfg.experiment.snr_db_list.iter().enumerate() {
        ensure_calibration(&mut resolved, si, snr_db)?;
        let entry = resolved.calibration_for(snr_db).expect("just calibrated").clone();
        let sigma = cfg.noise_power_for_snr(snr_db).sqrt();
        let m_ant = cfg.scenario.num_antennas;
        for &b_over_m in &cfg.experiment.b_over_m_list {
            let quantizer =
                UniformQuantizerSpec::from_rate(b_over_m * m_ant as f64, m_ant, entry.r_max_shared)?;
            rows.push(LqRow {
                snr_db,
                b_over_m,
                levels: quantizer.levels(),
                r_max: entry.r_max_shared,
                sigma,
                loss_factor: quantization_loss(quantizer.levels(), entry.r_max_shared, sigma)?,
            });
        }
    }
    Ok((rows, resolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::summary_csv;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.trials = 4;
        cfg.experiment.snr_db_list = vec![5.0];
        cfg.experiment.b_over_m_list = vec![2.0];
        cfg.experiment.methods = vec![
            "direct-quantized".into(),
            "direct-dithered".into(),
            "direct-ideal".into(),
            "indirect".into(),
        ];
        cfg.experiment.grid.spacing_m = 500.0;
        cfg.experiment.grid.zoom_rounds = 1;
        cfg.experiment.indirect.aoa_grid_points = 256;
        cfg.experiment.indirect.toa_grid_points = 512;
        cfg.calibration.draws = 1000;
        cfg
    }

    #[test]
    fn method_labels_round_trip() {
        for label in ["direct-quantized", "direct-ideal", "indirect", "direct-dithered:4"] {
            let m = Method::parse(label, 2.0).unwrap();
            assert_eq!(m.label(), label);
        }
        let m = Method::parse("direct-dithered", 2.0).unwrap();
        assert_eq!(m, Method::DirectDithered { divisor: 2.0 });
        assert!(Method::parse("nonsense", 2.0).is_err());
        assert!(Method::parse("direct-dithered:-1", 2.0).is_err());
    }

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(7, &[TAG_TRIAL, 0, 0, 3]);
        let b = derive_seed(7, &[TAG_TRIAL, 0, 0, 3]);
        let c = derive_seed(7, &[TAG_TRIAL, 0, 1, 3]);
        let d = derive_seed(8, &[TAG_TRIAL, 0, 0, 3]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn experiment_is_deterministic_across_runs_and_threads() {
        let cfg = tiny_config();
        let first = run_experiment(&cfg).unwrap();
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(summary_csv(&first.summaries), summary_csv(&second.summaries));

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| run_experiment(&cfg).unwrap());
        assert_eq!(summary_csv(&first.summaries), summary_csv(&serial.summaries));
        assert_eq!(first.records.len(), serial.records.len());
        for (a, b) in first.records.iter().zip(serial.records.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn summary_rows_cover_all_cells() {
        let mut cfg = tiny_config();
        cfg.experiment.methods = vec!["direct-ideal".into(), "indirect".into()];
        cfg.experiment.snr_db_list = vec![0.0, 5.0];
        cfg.experiment.b_over_m_list = vec![2.0, 4.0];
        cfg.experiment.trials = 2;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.summaries.len(), 2 * 2 * 2);
        assert_eq!(out.records.len(), 2 * 2 * 2 * 2);
    }

    #[test]
    fn resolved_config_reproduces_run() {
        // The resolved config carries the calibration table; re-running from
        // it skips calibration and reproduces the results bit for bit.
        let cfg = tiny_config();
        let first = run_experiment(&cfg).unwrap();
        let text = first.resolved_config.to_toml_string().unwrap();
        let reloaded = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(!reloaded.calibration.table.is_empty());
        let second = run_experiment(&reloaded).unwrap();
        assert_eq!(summary_csv(&first.summaries), summary_csv(&second.summaries));
    }

    #[test]
    fn ideal_fronthaul_not_worse_than_quantized() {
        let mut cfg = tiny_config();
        cfg.experiment.trials = 30;
        cfg.experiment.methods = vec!["direct-quantized".into(), "direct-ideal".into()];
        cfg.experiment.grid.spacing_m = 250.0;
        cfg.experiment.grid.zoom_rounds = 2;
        let out = run_experiment(&cfg).unwrap();
        let rms = |label: &str| {
            out.summaries
                .iter()
                .find(|s| s.method == label)
                .map(|s| (s.rms, s.rms_stderr))
                .unwrap()
        };
        let (ideal, ideal_se) = rms("direct-ideal");
        let (quant, quant_se) = rms("direct-quantized");
        let margin = 3.0 * (ideal_se.powi(2) + quant_se.powi(2)).sqrt();
        assert!(
            ideal <= quant + margin,
            "ideal {ideal} should not lose to quantized {quant} beyond {margin}"
        );
    }

    #[test]
    fn crb_sweep_rows_and_ordering() {
        let mut cfg = tiny_config();
        cfg.experiment.crb_positions = 8;
        cfg.experiment.b_over_m_list = vec![2.0, 6.0];
        let out = crb_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        for row in &out.rows {
            assert!(row.ratio <= 1.0 + 1e-9, "ratio {}", row.ratio);
            assert!(row.loss_factor > 0.0 && row.loss_factor <= 1.0);
            assert!(row.crb_quantized >= row.crb_unquantized);
            assert_eq!(row.skipped, 0);
        }
        // more fronthaul, less loss
        assert!(out.rows[1].ratio > out.rows[0].ratio);
    }

    #[test]
    fn lq_rows_match_levels() {
        let mut cfg = tiny_config();
        cfg.experiment.b_over_m_list = vec![2.0, 4.0, 6.0];
        let (rows, _) = lq_table(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].levels, 2);
        assert_eq!(rows[1].levels, 4);
        assert_eq!(rows[2].levels, 8);
        assert!(rows[0].loss_factor < rows[1].loss_factor);
        assert!(rows[1].loss_factor < rows[2].loss_factor);
    }

    #[test]
    fn calibrate_config_fills_table() {
        let cfg = tiny_config();
        let resolved = calibrate_config(&cfg).unwrap();
        assert_eq!(resolved.calibration.table.len(), 1);
        let entry = &resolved.calibration.table[0];
        assert_eq!(entry.r_max_per_ru.len(), 4);
        assert!(entry.r_max_shared > 0.0);
        // idempotent
        let again = calibrate_config(&resolved).unwrap();
        assert_eq!(again.calibration.table.len(), 1);
    }
}
