//! Monte-Carlo runs over a UE grid and noise seeds, error statistics and
//! result files.

mod report;
mod scenario;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{run_protocol, AngleMode, RunReport};
use crate::ris::BitDepth;

pub use report::{
    emit_report, parse_csv, read_document, stats_path, CsvRow, ReportDocument, ReportFormat, CSV_HEADER, TOOL_VERSION,
};
pub use scenario::{
    bundled, bundled_names, load_scenario, ArrayFile, ArraysFile, CodebookParams, MappingFile, MusicParams,
    Scenario, UeGrid, SCENARIO_SCHEMA,
};

/// The three rows of the angle-error comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Continuous-phase codebook, angle from the best entry.
    ContinuousSweep,
    /// 1-bit codebook, angle from the best entry.
    OnebitSweep,
    /// 1-bit codebook, angle from MUSIC at the UE.
    OnebitSweepMusic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::ContinuousSweep, Mode::OnebitSweep, Mode::OnebitSweepMusic];

    pub fn name(self) -> &'static str {
        match self {
            Mode::ContinuousSweep => "continuous_sweep",
            Mode::OnebitSweep => "onebit_sweep",
            Mode::OnebitSweepMusic => "onebit_sweep_music",
        }
    }

    pub fn bit_depth(self) -> BitDepth {
        match self {
            Mode::ContinuousSweep => BitDepth::Continuous,
            _ => BitDepth::OneBit,
        }
    }

    pub fn angle_mode(self) -> AngleMode {
        match self {
            Mode::OnebitSweepMusic => AngleMode::Music,
            _ => AngleMode::Beam,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown mode `{s}` (expected continuous_sweep, onebit_sweep or onebit_sweep_music)")))
    }
}

/// Peak, mean and population variance of per-trial angle errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub peak: f64,
    pub mean: f64,
    pub variance: f64,
    pub n_trials: usize,
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::invalid("error statistics need at least one value"));
    }
    if let Some(bad) = errors.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("errors must be finite and non-negative, got {bad}")));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let variance = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let peak = errors.iter().copied().fold(0.0, f64::max);
    Ok(ErrorStats {
        peak,
        mean,
        variance,
        n_trials: errors.len(),
    })
}

/// Scatterer position error over the trials that produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingStats {
    /// Absent when no trial produced an estimate.
    pub mean_error_m: Option<f64>,
    pub std_error_m: Option<f64>,
    /// Trials with a true front scatterer and at least one estimate.
    pub detected_trials: usize,
    /// Trials with at least one true front scatterer.
    pub eligible_trials: usize,
}

impl MappingStats {
    pub fn detection_rate(&self) -> f64 {
        if self.eligible_trials == 0 {
            0.0
        } else {
            self.detected_trials as f64 / self.eligible_trials as f64
        }
    }
}

/// One grid point × seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub ix: usize,
    pub iy: usize,
    pub seed: u64,
    /// Seed actually handed to the protocol.
    pub trial_seed: u64,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub mode: Mode,
    pub trials: Vec<TrialRecord>,
    /// Angle-error statistics over the successful trials.
    pub stats: Option<ErrorStats>,
    pub mapping: Option<MappingStats>,
    pub failures: usize,
}

/// Per-trial protocol seed; identical across modes so modes are paired.
pub fn trial_seed(seed: u64, grid_index: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(grid_index as u64))
}

/// Runs every grid point × seed under `mode` on `jobs` worker threads
/// (0 picks the rayon default). Output order is grid index, then seed.
pub fn run_montecarlo(scenario: &Scenario, mode: Mode, jobs: usize) -> Result<MonteCarloResult> {
    let mut params = scenario.protocol_params();
    params.bit_depth = mode.bit_depth();
    params.angle_mode = mode.angle_mode();

    let jobs_list: Vec<(usize, u64)> = (0..scenario.ue_grid.len())
        .flat_map(|g| scenario.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let run_one = |&(grid_index, seed): &(usize, u64)| {
        let (ix, iy, _, _) = scenario.ue_grid.point(grid_index);
        let trial_seed = trial_seed(seed, grid_index);
        let outcome = scenario
            .scene_at(grid_index)
            .and_then(|scene| run_protocol(&scene, &params, trial_seed));
        if let Err(e) = &outcome {
            log::warn!("{mode} trial (grid {grid_index}, seed {seed}) failed: {e}");
        }
        let (report, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        TrialRecord {
            grid_index,
            ix,
            iy,
            seed,
            trial_seed,
            report,
            error,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| jobs_list.par_iter().map(run_one).collect());
    Ok(summarize(mode, trials, params.mapping.is_some()))
}

/// Aggregates finished trials; mapping statistics only when mapping ran.
pub fn summarize(mode: Mode, trials: Vec<TrialRecord>, mapped: bool) -> MonteCarloResult {
    let reports: Vec<&RunReport> = trials.iter().filter_map(|t| t.report.as_ref()).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.angle_error_deg).collect();
    let stats = error_stats(&errors).ok();
    let mapping = if mapped { mapping_stats(&reports) } else { None };
    MonteCarloResult {
        mode,
        failures: trials.len() - reports.len(),
        trials,
        stats,
        mapping,
    }
}

fn mapping_stats(reports: &[&RunReport]) -> Option<MappingStats> {
    let eligible: Vec<&&RunReport> = reports.iter().filter(|r| !r.scatterers_true.is_empty()).collect();
    if eligible.is_empty() {
        return None;
    }
    let errors: Vec<f64> = eligible.iter().flat_map(|r| r.position_errors_m.iter().copied()).collect();
    let detected = eligible.iter().filter(|r| !r.scatterers_est.is_empty()).count();
    let (mean, std) = if errors.is_empty() {
        (None, None)
    } else {
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    Some(MappingStats {
        mean_error_m: mean,
        std_error_m: std,
        detected_trials: detected,
        eligible_trials: eligible.len(),
    })
}

#[cfg(test)]
mod tests;
