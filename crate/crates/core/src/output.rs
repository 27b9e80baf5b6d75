//! CSV traces and the run manifest.
//!
//! A run directory holds `aggregate.csv`, one `replication_NNNN.csv` per
//! completed replication, and `manifest.toml`. Floats are written with 17
//! significant digits so they round-trip exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::simulator::{AggregateRecord, Experiment, MonteCarloResult, TraceRecord};

pub const AGGREGATE_HEADER: &str =
    "t,consensus_error,mean_error,max_error,topk_count,frac_topk_correct";
pub const REPLICATION_HEADER: &str =
    "replication,t,consensus_error,mean_error,max_error,topk_count,frac_topk_correct";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_FORMAT: u32 = 1;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn replication_file_name(index: u64) -> String {
    format!("replication_{index:04}.csv")
}

pub fn write_aggregate_csv<W: Write>(mut out: W, records: &[AggregateRecord]) -> io::Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            fmt_float(r.consensus_error),
            fmt_float(r.mean_error),
            fmt_float(r.max_error),
            fmt_float(r.topk_count),
            fmt_float(r.frac_topk_correct),
        )?;
    }
    out.flush()
}

pub fn write_replication_csv<W: Write>(
    mut out: W,
    replication: u64,
    trace: &[TraceRecord],
) -> io::Result<()> {
    writeln!(out, "{REPLICATION_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{replication},{},{},{},{},{},{}",
            r.t,
            fmt_float(r.consensus_error),
            fmt_float(r.mean_error),
            fmt_float(r.max_error),
            r.topk_count,
            fmt_float(if r.topk_correct { 1.0 } else { 0.0 }),
        )?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestSummary {
    pub n: usize,
    pub p: f64,
    pub k: usize,
    pub theta_p: f64,
    pub true_topk: Vec<usize>,
    pub lambda2: f64,
    #[serde(rename = "lambdaN")]
    pub lambda_n: f64,
    pub beta0: f64,
    pub replications_completed: u64,
    pub replications_aborted: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub manifest_format: u32,
    pub software: String,
    pub software_version: String,
    pub config_format: String,
    pub summary: ManifestSummary,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(exp: &Experiment, result: &MonteCarloResult, config: &ExperimentConfig) -> Self {
        let param = exp.param();
        Self {
            manifest_format: MANIFEST_FORMAT,
            software: env!("CARGO_PKG_NAME").to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_format: "toml".to_string(),
            summary: ManifestSummary {
                n: param.n(),
                p: param.p(),
                k: param.k(),
                theta_p: exp.theta(),
                true_topk: exp.true_topk(),
                lambda2: exp.spectral().lambda2,
                lambda_n: exp.spectral().lambda_n,
                beta0: exp.schedule().beta0,
                replications_completed: result.aggregate.completed,
                replications_aborted: result.aggregate.aborted.clone(),
            },
            config: config.clone(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest is always representable as TOML")
    }
}

/// Writes every file of a run into `dir`, creating it if needed, and
/// returns the paths written.
pub fn write_run(
    dir: &Path,
    exp: &Experiment,
    result: &MonteCarloResult,
    config: &ExperimentConfig,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join(AGGREGATE_FILE);
    write_aggregate_csv(
        BufWriter::new(File::create(&path)?),
        &result.aggregate.records,
    )?;
    written.push(path);

    for outcome in &result.replications {
        if let Ok(trace) = &outcome.result {
            let path = dir.join(replication_file_name(outcome.index));
            write_replication_csv(BufWriter::new(File::create(&path)?), outcome.index, trace)?;
            written.push(path);
        }
    }

    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, Manifest::new(exp, result, config).to_toml_string())?;
    written.push(path);
    Ok(written)
}
