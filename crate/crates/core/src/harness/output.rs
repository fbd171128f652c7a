//! Result files and the minimax-rate diagnostic.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{Algorithm, OutputFormat};
use super::run::{RegretTrace, Summary};
use crate::error::{domain, Result};

/// Order of the minimax regret with `n_P` logged samples:
/// `n_Q (n_Q + (kappa n_P)^((d + 2 beta) / (d + 2 beta + gamma)))^(-beta (1 + alpha) / (2 beta + d))`.
pub fn minimax_rate(n_q: u64, n_p: u64, kappa: f64, beta: f64, alpha: f64, gamma: f64, dim: usize) -> Result<f64> {
    let d = dim as f64;
    if alpha * beta > d {
        return Err(domain(format!("alpha * beta = {} exceeds the dimension", alpha * beta)));
    }
    if !(beta > 0.0) || !(alpha >= 0.0) || !(gamma >= 0.0) || !(0.0..=1.0).contains(&kappa) {
        return Err(domain("minimax rate parameters out of range"));
    }
    let n_q = n_q as f64;
    let effective = (kappa * n_p as f64).powf((d + 2.0 * beta) / (d + 2.0 * beta + gamma));
    Ok(n_q * (n_q + effective).powf(-beta * (1.0 + alpha) / (2.0 * beta + d)))
}

/// Decimal rendering with 17 significant digits.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub const CSV_HEADER: [&str; 4] = ["algo", "trial", "checkpoint_t", "cum_regret"];

/// One row per `(trial, checkpoint)`.
pub fn write_traces_csv<W: Write>(out: W, algo: Algorithm, traces: &[RegretTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for tr in traces {
        for (t, r) in tr.checkpoints.iter().zip(&tr.cum_regret) {
            w.write_record([algo.name(), &tr.trial.to_string(), &t.to_string(), &format_decimal(*r)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(mut out: W, summary: &Summary) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Summary file written next to a trace CSV: `runs.csv` gives
/// `runs.summary.json`.
pub fn summary_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

/// Write results to `path`. CSV output writes the traces there and the
/// summary beside it; JSON output writes the summary only. Returns the
/// files written.
pub fn emit_results(summary: &Summary, traces: &[RegretTrace], format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => {
            let file = BufWriter::new(File::create(path)?);
            write_traces_csv(file, summary.config.algorithm, traces)?;
            let side = summary_path(path);
            write_summary_json(BufWriter::new(File::create(&side)?), summary)?;
            Ok(vec![path.to_path_buf(), side])
        }
        OutputFormat::Json => {
            write_summary_json(BufWriter::new(File::create(path)?), summary)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}
