//! Batch driver for the localization experiments.
//!
//! Subcommands:
//! - `calibrate`: Monte Carlo dynamic-range calibration, written back into a
//!   config file for reproducible later runs;
//! - `simulate`: RMS-error sweep over SNR and fronthaul rate;
//! - `crb-sweep`: position-error bounds with and without quantization;
//! - `lq`: analytic quantization-loss table.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cranloc::harness::{calibrate_config, crb_sweep, lq_table, run_experiment};
use cranloc::output::{emit_crb_sweep, emit_lq_table, emit_results, lq_csv, summary_csv};
use cranloc::ExperimentConfig;

#[derive(Parser)]
#[command(name = "cranloc", version, about = "Source localization over capacity-limited fronthaul")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate quantizer dynamic ranges and write the updated config.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the Monte Carlo RMS-error sweep.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Trials per sweep cell.
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated method list, e.g.
        /// `direct-quantized,direct-dithered,indirect`.
        #[arg(long)]
        methods: Option<String>,
        /// Dithering mode: `on` keeps the configured methods, `off` drops
        /// the dithered ones, `sweep` expands them over the configured
        /// divisor list.
        #[arg(long, value_parser = ["on", "off", "sweep"])]
        dither: Option<String>,
    },
    /// Sweep the position-error bounds for quantized and unquantized
    /// observations.
    CrbSweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Tabulate the analytic quantization-loss factor.
    Lq {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML); defaults to the built-in reference
    /// deployment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.master_seed = seed;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Calibrate { common } => {
            let cfg = load_config(&common)?;
            let resolved = calibrate_config(&cfg)?;
            std::fs::create_dir_all(&common.out)
                .with_context(|| format!("creating {}", common.out.display()))?;
            let path = common.out.join("calibrated_config.toml");
            resolved.save(&path)?;
            for entry in &resolved.calibration.table {
                println!(
                    "snr {:>6.1} dB: r_max per unit {:?}, shared {:.6}",
                    entry.snr_db, entry.r_max_per_ru, entry.r_max_shared
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Simulate { common, trials, methods, dither } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = trials {
                cfg.experiment.trials = n;
            }
            if let Some(list) = methods {
                cfg.experiment.methods =
                    list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            match dither.as_deref() {
                Some("off") => {
                    cfg.experiment.methods.retain(|m| !m.starts_with("direct-dithered"));
                    if cfg.experiment.methods.is_empty() {
                        bail!("--dither off removed every configured method");
                    }
                }
                Some("sweep") => {
                    let divisors = cfg.experiment.dither_divisor_sweep.clone();
                    if divisors.is_empty() {
                        bail!("--dither sweep needs a non-empty dither_divisor_sweep list");
                    }
                    let mut methods: Vec<String> = cfg
                        .experiment
                        .methods
                        .iter()
                        .filter(|m| !m.starts_with("direct-dithered"))
                        .cloned()
                        .collect();
                    methods.extend(divisors.iter().map(|d| format!("direct-dithered:{d}")));
                    cfg.experiment.methods = methods;
                }
                _ => {}
            }
            let out = run_experiment(&cfg)?;
            let resolved_toml = out.resolved_config.to_toml_string()?;
            emit_results(&out.records, &out.summaries, &resolved_toml, &common.out)?;
            print!("{}", summary_csv(&out.summaries));
            println!("wrote trials.csv, summary.csv, resolved_config.toml to {}", common.out.display());
        }
        Command::CrbSweep { common } => {
            let cfg = load_config(&common)?;
            let out = crb_sweep(&cfg)?;
            let resolved_toml = out.resolved_config.to_toml_string()?;
            emit_crb_sweep(&out.rows, &resolved_toml, &common.out)?;
            for row in &out.rows {
                println!(
                    "snr {:>6.1} dB  B/M {:>4.1}  L {:>4}  CRB_Q {:.4e}  CRB_UQ {:.4e}  ratio {:.4}  L_Q {:.4}",
                    row.snr_db,
                    row.b_over_m,
                    row.levels,
                    row.crb_quantized,
                    row.crb_unquantized,
                    row.ratio,
                    row.loss_factor
                );
            }
            println!("wrote crb_sweep.csv to {}", common.out.display());
        }
        Command::Lq { common } => {
            let cfg = load_config(&common)?;
            let (rows, resolved) = lq_table(&cfg)?;
            let resolved_toml = resolved.to_toml_string()?;
            emit_lq_table(&rows, &resolved_toml, &common.out)?;
            print!("{}", lq_csv(&rows));
            println!("wrote lq.csv to {}", common.out.display());
        }
    }
    Ok(())
}
