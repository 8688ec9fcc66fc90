//! One end-to-end trial: codebook, sweep, AoA refinement, ranging,
//! positioning and (optionally) scatterer mapping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    angle_error_deg, arrival_from_departure, beam_sweep, locate_ue, map_scatterers, nearest_errors,
    onoff_direct_estimate, reconstruct_los, Acquire, ArraySpecs, Environment, MappingContext, MappingParams,
    ScattererEstimate, SignalSettings,
};
use crate::arrays::SPEED_OF_LIGHT;
use crate::error::{Error, Result, StageExt};
use crate::estimation::estimate_azimuth;
use crate::geometry::Scene;
use crate::ris::{build_codebook, BitDepth, RisConfig};

/// How the final departure angle is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// Target azimuth of the strongest codebook entry.
    Beam,
    /// MUSIC on the ON/OFF-cleaned frame under the strongest entry.
    Music,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub specs: ArraySpecs,
    pub signal: SignalSettings,
    /// RIS-local azimuth interval covered by the codebook, radians.
    pub codebook_range: (f64, f64),
    pub codebook_step: f64,
    pub bit_depth: BitDepth,
    pub angle_mode: AngleMode,
    pub music_grid_step: f64,
    /// Standard deviation of the ToA oracle jitter, seconds.
    pub toa_sigma: f64,
    /// Mapping is skipped when `None`.
    pub mapping: Option<MappingParams>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            specs: ArraySpecs::standard(),
            signal: SignalSettings::default(),
            codebook_range: (10f64.to_radians(), 170f64.to_radians()),
            codebook_step: crate::ris::DEFAULT_CODEBOOK_STEP,
            bit_depth: BitDepth::OneBit,
            angle_mode: AngleMode::Music,
            music_grid_step: crate::estimation::DEFAULT_GRID_STEP,
            toa_sigma: 0.0,
            mapping: None,
        }
    }
}

/// Outcome of one trial, with ground truth for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ue_true: [f64; 3],
    pub ue_est: [f64; 3],
    /// RIS-local azimuth of the true UE, degrees.
    pub true_azimuth_deg: f64,
    pub est_azimuth_deg: f64,
    /// ẽ = |φ_AoD − φ_AoD^est|, degrees.
    pub angle_error_deg: f64,
    pub ue_aoa_deg: Option<f64>,
    pub range_est_m: f64,
    pub position_error_m: f64,
    pub best_index: usize,
    pub sweep_powers: Vec<f64>,
    pub scatterers_true: Vec<[f64; 3]>,
    pub scatterers_est: Vec<ScattererEstimate>,
    /// Per true scatterer, distance to the nearest estimate (absent when nothing was estimated).
    pub position_errors_m: Vec<f64>,
    pub rejected_count: usize,
    pub acquisitions: usize,
}

/// Runs the positioning (and mapping) protocol on `scene` for one seed.
pub fn run_protocol(scene: &Scene, params: &ProtocolParams, seed: u64) -> Result<RunReport> {
    let mut env = Environment::new(scene, &params.specs, &params.signal, seed).stage("environment")?;
    let specs = env.specs().clone();
    let ris_pose = specs.ris.pose;
    let ue_pose = specs.ue.pose;
    let n_pilots = params.signal.n_pilots;

    let codebook = build_codebook(
        env.incidence(),
        params.codebook_range,
        params.codebook_step,
        &specs.ris,
        params.bit_depth,
    )
    .stage("codebook")?;
    let sweep = beam_sweep(&mut env, &codebook, n_pilots).stage("beam sweep")?;

    let onoff = RisConfig::all_j(specs.ris.len());
    let ue_aoa = match params.angle_mode {
        AngleMode::Beam => None,
        AngleMode::Music => {
            let (r_d, _) = onoff_direct_estimate(&mut env, &onoff).stage("on/off")?;
            let r_tot = env.acquire(&sweep.best_config).stage("aoa acquisition")?;
            let r_ris = r_tot.try_sub(&r_d).stage("aoa acquisition")?;
            Some(estimate_azimuth(&r_ris, &specs.ue, params.music_grid_step).stage("music")?)
        }
    };

    let true_range = (ue_pose.position - ris_pose.position).norm();
    let toa = toa_oracle(true_range / SPEED_OF_LIGHT, params.toa_sigma, seed).stage("ranging")?;
    let estimate = locate_ue(sweep.best_config.target_azimuth, ue_aoa, toa, &ris_pose, ue_pose.yaw)
        .stage("positioning")?;

    let true_azimuth = ris_pose.local_angles_to(&ue_pose.position).0;
    let ue_est = nalgebra::Vector3::from(estimate.position);
    let scatterers_true = env.front_scatter_points();

    let (scatterers_est, rejected_count) = match &params.mapping {
        None => (Vec::new(), 0),
        Some(mapping) => {
            let reconstruction = reconstruct_los(&estimate, &specs, env.carrier_frequency(), env.sample_rate())
                .stage("los reconstruction")?;
            let pilot = env.pilot();
            let los_azimuth = ue_aoa
                .unwrap_or_else(|| arrival_from_departure(estimate.azimuth_est, ue_pose.yaw, &ris_pose));
            let ctx = MappingContext {
                specs: &specs,
                reconstruction: &reconstruction,
                pilot: &pilot,
                params: *mapping,
            };
            let result = map_scatterers(&mut env, &codebook, &estimate, los_azimuth, &ctx).stage("mapping")?;
            (result.scatterer_estimates, result.rejected_count)
        }
    };
    let position_errors_m = nearest_errors(&scatterers_true, &scatterers_est);

    Ok(RunReport {
        ue_true: ue_pose.position.into(),
        ue_est: estimate.position,
        true_azimuth_deg: true_azimuth.to_degrees(),
        est_azimuth_deg: estimate.azimuth_est.to_degrees(),
        angle_error_deg: angle_error_deg(true_azimuth, estimate.azimuth_est),
        ue_aoa_deg: ue_aoa.map(f64::to_degrees),
        range_est_m: estimate.range_est,
        position_error_m: (ue_est - ue_pose.position).norm(),
        best_index: sweep.best_index,
        sweep_powers: sweep.powers,
        scatterers_true,
        scatterers_est,
        position_errors_m,
        rejected_count,
        acquisitions: env.acquisitions(),
    })
}

/// True delay plus zero-mean Gaussian jitter.
fn toa_oracle(true_delay: f64, sigma: f64, seed: u64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(true_delay);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("ToA sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7041_7041_7041_7041);
    let toa = true_delay + normal.sample(&mut rng);
    if toa <= 0.0 {
        return Err(Error::invalid(format!("jittered ToA {toa} is not positive")));
    }
    Ok(toa)
}
