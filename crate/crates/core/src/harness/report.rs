//! Result files: a per-trial CSV (plus a per-mode stats CSV next to it) or
//! one JSON document holding everything.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MonteCarloResult, TrialRecord};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!("rislab ", env!("CARGO_PKG_VERSION"));

/// Per-trial CSV columns, in order.
pub const CSV_HEADER: [&str; 29] = [
    "scenario",
    "scenario_hash",
    "tool_version",
    "mode",
    "grid_index",
    "ix",
    "iy",
    "seed",
    "trial_seed",
    "status",
    "error",
    "ue_true_x",
    "ue_true_y",
    "ue_true_z",
    "ue_est_x",
    "ue_est_y",
    "ue_est_z",
    "true_azimuth_deg",
    "est_azimuth_deg",
    "angle_error_deg",
    "ue_aoa_deg",
    "range_est_m",
    "position_error_m",
    "best_index",
    "n_scatterers_true",
    "n_scatterers_est",
    "mean_scatterer_error_m",
    "rejected_count",
    "acquisitions",
];

const STATS_HEADER: [&str; 12] = [
    "scenario_hash",
    "tool_version",
    "mode",
    "n_trials",
    "failures",
    "peak_deg",
    "mean_deg",
    "variance_deg2",
    "mapping_mean_error_m",
    "mapping_std_error_m",
    "mapping_detected",
    "mapping_eligible",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// Pretty-printed JSON.
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

/// Everything one invocation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub results: Vec<MonteCarloResult>,
}

/// One per-trial CSV row; field order matches [`CSV_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scenario: String,
    pub scenario_hash: String,
    pub tool_version: String,
    pub mode: String,
    pub grid_index: usize,
    pub ix: usize,
    pub iy: usize,
    pub seed: u64,
    pub trial_seed: u64,
    pub status: String,
    pub error: String,
    pub ue_true_x: Option<f64>,
    pub ue_true_y: Option<f64>,
    pub ue_true_z: Option<f64>,
    pub ue_est_x: Option<f64>,
    pub ue_est_y: Option<f64>,
    pub ue_est_z: Option<f64>,
    pub true_azimuth_deg: Option<f64>,
    pub est_azimuth_deg: Option<f64>,
    pub angle_error_deg: Option<f64>,
    pub ue_aoa_deg: Option<f64>,
    pub range_est_m: Option<f64>,
    pub position_error_m: Option<f64>,
    pub best_index: Option<usize>,
    pub n_scatterers_true: Option<usize>,
    pub n_scatterers_est: Option<usize>,
    pub mean_scatterer_error_m: Option<f64>,
    pub rejected_count: Option<usize>,
    pub acquisitions: Option<usize>,
}

impl CsvRow {
    fn new(doc: &ReportDocument, result: &MonteCarloResult, t: &TrialRecord) -> Self {
        let r = t.report.as_ref();
        Self {
            scenario: doc.scenario.clone(),
            scenario_hash: doc.scenario_hash.clone(),
            tool_version: doc.tool_version.clone(),
            mode: result.mode.name().to_string(),
            grid_index: t.grid_index,
            ix: t.ix,
            iy: t.iy,
            seed: t.seed,
            trial_seed: t.trial_seed,
            status: if r.is_some() { "ok" } else { "failed" }.to_string(),
            error: t.error.clone().unwrap_or_default(),
            ue_true_x: r.map(|r| r.ue_true[0]),
            ue_true_y: r.map(|r| r.ue_true[1]),
            ue_true_z: r.map(|r| r.ue_true[2]),
            ue_est_x: r.map(|r| r.ue_est[0]),
            ue_est_y: r.map(|r| r.ue_est[1]),
            ue_est_z: r.map(|r| r.ue_est[2]),
            true_azimuth_deg: r.map(|r| r.true_azimuth_deg),
            est_azimuth_deg: r.map(|r| r.est_azimuth_deg),
            angle_error_deg: r.map(|r| r.angle_error_deg),
            ue_aoa_deg: r.and_then(|r| r.ue_aoa_deg),
            range_est_m: r.map(|r| r.range_est_m),
            position_error_m: r.map(|r| r.position_error_m),
            best_index: r.map(|r| r.best_index),
            n_scatterers_true: r.map(|r| r.scatterers_true.len()),
            n_scatterers_est: r.map(|r| r.scatterers_est.len()),
            mean_scatterer_error_m: r.and_then(|r| {
                (!r.position_errors_m.is_empty())
                    .then(|| r.position_errors_m.iter().sum::<f64>() / r.position_errors_m.len() as f64)
            }),
            rejected_count: r.map(|r| r.rejected_count),
            acquisitions: r.map(|r| r.acquisitions),
        }
    }
}

/// Path of the per-mode stats file written beside a CSV report.
pub fn stats_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.stats.csv"))
}

/// Writes the document. CSV output is the per-trial table at `path` and
/// the per-mode statistics at [`stats_path`].
pub fn emit_report(doc: &ReportDocument, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(doc).map_err(|e| Error::invalid(format!("report: {e}")))?;
            write_bytes(path, text.as_bytes())
        }
        ReportFormat::Csv => {
            write_bytes(path, &trials_csv(doc)?)?;
            write_bytes(&stats_path(path), &stats_csv(doc)?)
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn trials_csv(doc: &ReportDocument) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for result in &doc.results {
        for t in &result.trials {
            w.serialize(CsvRow::new(doc, result, t)).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))
}

fn stats_csv(doc: &ReportDocument) -> Result<Vec<u8>> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = writer();
    w.write_record(STATS_HEADER).map_err(csv_err)?;
    for r in &doc.results {
        let s = r.stats;
        let m = r.mapping;
        w.write_record([
            doc.scenario_hash.clone(),
            doc.tool_version.clone(),
            r.mode.name().to_string(),
            s.map_or(0, |s| s.n_trials).to_string(),
            r.failures.to_string(),
            opt(s.map(|s| s.peak)),
            opt(s.map(|s| s.mean)),
            opt(s.map(|s| s.variance)),
            opt(m.and_then(|m| m.mean_error_m)),
            opt(m.and_then(|m| m.std_error_m)),
            m.map(|m| m.detected_trials.to_string()).unwrap_or_default(),
            m.map(|m| m.eligible_trials.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Reads back a per-trial CSV written by [`emit_report`].
pub fn parse_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            key: "header".into(),
            message: format!("unexpected columns {header:?}"),
        });
    }
    reader.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn read_document(path: &Path) -> Result<ReportDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    crate::geometry::scene_file::parse_json(&text)
}
