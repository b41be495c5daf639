//! Tabular result records and file emission.
//!
//! All tables are comma-separated with a header row; floating-point values
//! are written with Rust's shortest round-trip formatting so re-reading a
//! table reproduces the exact values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{CrbSweepRow, LqRow};
use crate::scenario::Position;

/// One Monte Carlo trial of one method in one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub snr_db: f64,
    pub b_over_m: f64,
    pub trial: usize,
    /// Seed of the trial's channel/noise realization.
    pub seed: u64,
    pub p_true: Position,
    pub p_hat: Position,
    /// Squared position error, m^2.
    pub sq_error: f64,
}

/// Aggregated root-mean-square error of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsSummary {
    pub method: String,
    pub snr_db: f64,
    pub b_over_m: f64,
    pub trials: usize,
    /// `sqrt(sum rho_n / N)`, meters.
    pub rms: f64,
    /// Delta-method standard error of the RMS, meters.
    pub rms_stderr: f64,
}

impl RmsSummary {
    /// Aggregates the squared errors of one cell.
    pub fn from_squared_errors(
        method: String,
        snr_db: f64,
        b_over_m: f64,
        squared_errors: &[f64],
    ) -> Self {
        let n = squared_errors.len();
        let mean = squared_errors.iter().sum::<f64>() / n as f64;
        let rms = mean.sqrt();
        let rms_stderr = if n > 1 && rms > 0.0 {
            let var =
                squared_errors.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt() / (2.0 * rms)
        } else {
            0.0
        };
        Self { method, snr_db, b_over_m, trials: n, rms, rms_stderr }
    }
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out =
        String::from("method,snr_db,b_over_m,trial,seed,x_true_m,y_true_m,x_hat_m,y_hat_m,sq_error_m2\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.snr_db,
            r.b_over_m,
            r.trial,
            r.seed,
            r.p_true.x,
            r.p_true.y,
            r.p_hat.x,
            r.p_hat.y,
            r.sq_error
        )
        .expect("string write");
    }
    out
}

pub fn summary_csv(summaries: &[RmsSummary]) -> String {
    let mut out = String::from("method,snr_db,b_over_m,trials,rms_m,rms_stderr_m\n");
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.method, s.snr_db, s.b_over_m, s.trials, s.rms, s.rms_stderr
        )
        .expect("string write");
    }
    out
}

pub fn crb_sweep_csv(rows: &[CrbSweepRow]) -> String {
    let mut out = String::from(
        "snr_db,b_over_m,levels,r_max,crb_quantized_m2,crb_unquantized_m2,ratio,loss_factor,positions,skipped\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.b_over_m,
            r.levels,
            r.r_max,
            r.crb_quantized,
            r.crb_unquantized,
            r.ratio,
            r.loss_factor,
            r.positions,
            r.skipped
        )
        .expect("string write");
    }
    out
}

pub fn lq_csv(rows: &[LqRow]) -> String {
    let mut out = String::from("snr_db,b_over_m,levels,r_max,sigma,loss_factor\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snr_db, r.b_over_m, r.levels, r.r_max, r.sigma, r.loss_factor
        )
        .expect("string write");
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes the per-trial table, the summary table and the resolved
/// configuration into `out_dir`. Re-running with identical inputs overwrites
/// the files with identical contents.
pub fn emit_results(
    records: &[TrialRecord],
    summaries: &[RmsSummary],
    resolved_config_toml: &str,
    out_dir: &Path,
) -> Result<()> {
    write_file(out_dir, "trials.csv", &trials_csv(records))?;
    write_file(out_dir, "summary.csv", &summary_csv(summaries))?;
    write_file(out_dir, "resolved_config.toml", resolved_config_toml)
}

pub fn emit_crb_sweep(rows: &[CrbSweepRow], resolved_config_toml: &str, out_dir: &Path) -> Result<()> {
    write_file(out_dir, "crb_sweep.csv", &crb_sweep_csv(rows))?;
    write_file(out_dir, "resolved_config.toml", resolved_config_toml)
}

pub fn emit_lq_table(rows: &[LqRow], resolved_config_toml: &str, out_dir: &Path) -> Result<()> {
    write_file(out_dir, "lq.csv", &lq_csv(rows))?;
    write_file(out_dir, "resolved_config.toml", resolved_config_toml)
}
