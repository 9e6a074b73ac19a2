//! CSV tables and run manifests.
//!
//! Floats are written with 9 significant digits in exponent form; packet
//! sizes and probabilities use the shortest round-trip form. Empty fields mean
//! "not applicable".

use std::io::Write;
use std::path::{Path, PathBuf};

use proactive_sched::sim::{ExperimentConfig, Scheduler, SummaryRow, TrialRecord};
use serde::Serialize;

use crate::CliError;

pub const SWEEP_HEADER: [&str; 11] = [
    "bits",
    "window",
    "scheduler",
    "request_prob",
    "mean_energy",
    "std_error",
    "trials",
    "saved_db_difference",
    "saved_db_ratio",
    "no_gain",
    "predicted_energy",
];

pub const SAVED_HEADER: [&str; 10] = [
    "bits",
    "request_prob",
    "window",
    "scheduler",
    "reactive_mean",
    "proactive_mean",
    "proactive_std_error",
    "saved_db_difference",
    "saved_db_ratio",
    "no_gain",
];

pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_default()
}

fn plain(x: f64) -> String {
    x.to_string()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_sweep(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(io(path))?;
    for r in rows {
        let saved = r.saved;
        w.write_record([
            plain(r.key.bits),
            r.key.window.to_string(),
            r.key.scheduler.name().to_string(),
            opt(r.key.request_prob, plain),
            sig9(r.mean),
            sig9(r.std_error),
            r.trials.to_string(),
            opt(saved.and_then(|s| s.difference_db), sig9),
            opt(saved.and_then(|s| s.ratio_db), sig9),
            saved.map(|s| s.no_gain().to_string()).unwrap_or_default(),
            opt(r.predicted_mean, sig9),
        ])
        .map_err(io(path))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_saved(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(SAVED_HEADER).map_err(io(path))?;
    let reactive = |r: &SummaryRow| {
        rows.iter()
            .find(|x| x.key.scheduler == Scheduler::Reactive && x.key.bits == r.key.bits && x.key.request_prob == r.key.request_prob)
            .map(|x| x.mean)
    };
    for r in rows.iter().filter(|r| r.key.scheduler != Scheduler::Reactive) {
        let Some(saved) = r.saved else { continue };
        w.write_record([
            plain(r.key.bits),
            opt(r.key.request_prob, plain),
            r.key.window.to_string(),
            r.key.scheduler.name().to_string(),
            opt(reactive(r), sig9),
            sig9(r.mean),
            sig9(r.std_error),
            opt(saved.difference_db, sig9),
            opt(saved.ratio_db, sig9),
            saved.no_gain().to_string(),
        ])
        .map_err(io(path))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// One JSON object per trial.
pub fn write_trials(path: &Path, records: &[TrialRecord]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec).map_err(|e| CliError::Io(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| CliError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub jobs: usize,
    pub config: &'a ExperimentConfig,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub table_cache: Option<PathBuf>,
}

impl RunManifest<'_> {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
