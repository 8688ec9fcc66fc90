//! Positioning and mapping protocol: beam sweep, ON/OFF direct-path
//! extraction, UE positioning, LoS cancellation and scatterer triangulation.

mod environment;
mod run;

use nalgebra::{DMatrix, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arrays::{angle_distance, unit_direction, wavelength, Pose, SPEED_OF_LIGHT};
use crate::channel::{delay_samples, ChannelTaps, Frame};
use crate::error::{Error, Result};
use crate::estimation::{eigenvalues, music_spectrum, pick_peak, sample_covariance};
use crate::ris::{Codebook, RisConfig};

pub use environment::{ArraySpecs, Environment, SignalSettings};
pub use run::{run_protocol, AngleMode, ProtocolParams, RunReport};

/// Produces the UE's received frame r_tot for a given RIS configuration.
/// Every call is a fresh acquisition with fresh noise.
pub trait Acquire {
    fn acquire(&mut self, config: &RisConfig) -> Result<Frame>;
}

impl<F: FnMut(&RisConfig) -> Result<Frame>> Acquire for F {
    fn acquire(&mut self, config: &RisConfig) -> Result<Frame> {
        self(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Mean received power ‖r_tot‖²/N_s per codebook entry.
    pub powers: Vec<f64>,
    pub best_index: usize,
    pub best_config: RisConfig,
}

/// Acquires every codebook entry in order and keeps the strongest; the
/// first entry wins exact ties.
pub fn beam_sweep(acq: &mut impl Acquire, codebook: &Codebook, n_pilots: usize) -> Result<SweepResult> {
    if codebook.is_empty() {
        return Err(Error::invalid("beam sweep over an empty codebook"));
    }
    let norm = n_pilots.max(1) as f64;
    let powers = codebook
        .entries
        .iter()
        .map(|cfg| Ok(acq.acquire(cfg)?.energy() / norm))
        .collect::<Result<Vec<f64>>>()?;
    let best_index = (0..powers.len()).fold(0, |b, k| if powers[k] > powers[b] { k } else { b });
    Ok(SweepResult {
        best_config: codebook.entries[best_index].clone(),
        powers,
        best_index,
    })
}

/// Acquires under Φ¹ and −Φ¹; returns (r_d estimate, r_RIS estimate under Φ¹).
pub fn onoff_direct_estimate(acq: &mut impl Acquire, base_config: &RisConfig) -> Result<(Frame, Frame)> {
    let r1 = acq.acquire(base_config)?;
    let r2 = acq.acquire(&base_config.negated())?;
    let direct = r1.try_add(&r2)?.scaled(0.5);
    let ris = r1.try_sub(&r2)?.scaled(0.5);
    Ok((direct, ris))
}

/// Where the UE is, as seen from the RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    /// Departure azimuth in the RIS local frame.
    pub azimuth_est: f64,
    /// Arrival azimuth in the UE local frame, when measured.
    pub ue_aoa_est: Option<f64>,
    pub range_est: f64,
    pub toa_est: f64,
    pub position: [f64; 3],
}

/// RIS-local departure azimuth implied by a UE-local arrival azimuth: the
/// LoS leaves the RIS in the direction opposite to its arrival at the UE.
pub fn departure_from_arrival(ue_aoa_local: f64, ue_yaw: f64, ris_pose: &Pose) -> f64 {
    ris_pose.to_local_azimuth(ue_yaw + ue_aoa_local + std::f64::consts::PI)
}

/// UE-local arrival azimuth of a ray leaving the RIS at a local azimuth.
pub fn arrival_from_departure(departure_local: f64, ue_yaw: f64, ris_pose: &Pose) -> f64 {
    crate::arrays::wrap_angle(ris_pose.to_global_azimuth(departure_local) + std::f64::consts::PI - ue_yaw)
}

/// Places the UE at c·τ from the RIS along the departure azimuth (elevation 0).
///
/// With a MUSIC estimate the departure follows from the arrival angle and
/// the UE orientation; otherwise the beam azimuth is used as is.
pub fn locate_ue(
    beam_azimuth: f64,
    music_azimuth: Option<f64>,
    toa_est: f64,
    ris_pose: &Pose,
    ue_yaw: f64,
) -> Result<PositionEstimate> {
    if !(toa_est > 0.0 && toa_est.is_finite()) {
        return Err(Error::invalid(format!("time of arrival must be positive, got {toa_est}")));
    }
    let azimuth_est = match music_azimuth {
        Some(aoa) => departure_from_arrival(aoa, ue_yaw, ris_pose),
        None => beam_azimuth,
    };
    let range_est = SPEED_OF_LIGHT * toa_est;
    let dir = unit_direction(ris_pose.to_global_azimuth(azimuth_est), 0.0);
    let position = ris_pose.position + dir * range_est;
    Ok(PositionEstimate {
        azimuth_est,
        ue_aoa_est: music_azimuth,
        range_est,
        toa_est,
        position: position.into(),
    })
}

/// Single-tap LoS models of the AP→RIS and RIS→UE legs.
#[derive(Debug, Clone, PartialEq)]
pub struct LosReconstruction {
    /// N × N_T, from the known AP/RIS geometry.
    pub h1: ChannelTaps,
    /// N_R × N, from the UE estimate.
    pub h2: ChannelTaps,
    /// Exact AP→RIS delay.
    pub ap_ris_delay: f64,
}

/// Builds H₂ = g·a_UE(φ_AoA)·a_RIS(φ_AoD)ᴴ with g = λ/(4πr)·e^{jφ₂},
/// φ₂ = mod(−2π f_c τ, 2π), and H₁ the same way from the exact AP and RIS poses.
pub fn reconstruct_los(
    estimate: &PositionEstimate,
    specs: &ArraySpecs,
    carrier_frequency: f64,
    sample_rate: f64,
) -> Result<LosReconstruction> {
    if !(estimate.range_est > 0.0 && estimate.range_est.is_finite()) {
        return Err(Error::invalid(format!("zero or invalid range {}", estimate.range_est)));
    }
    let lambda = wavelength(carrier_frequency);
    let leg = |range: f64, delay: f64| {
        let phase = (-std::f64::consts::TAU * carrier_frequency * delay).rem_euclid(std::f64::consts::TAU);
        Complex64::from_polar(lambda / (4.0 * std::f64::consts::PI * range), phase)
    };

    let ris = &specs.ris.pose;
    let ue_aoa = estimate
        .ue_aoa_est
        .unwrap_or_else(|| arrival_from_departure(estimate.azimuth_est, specs.ue.pose.yaw, ris));
    let a_ue = specs.ue.steering(ue_aoa, 0.0);
    let a_ris_out = specs.ris.steering(estimate.azimuth_est, 0.0);
    let h2 = (&a_ue * a_ris_out.adjoint()) * leg(estimate.range_est, estimate.toa_est);

    let ap = &specs.ap.pose;
    let d1 = (ris.position - ap.position).norm();
    if d1 <= 0.0 {
        return Err(Error::invalid("AP and RIS coincide"));
    }
    let tau1 = d1 / SPEED_OF_LIGHT;
    let (in_az, in_el) = ris.local_angles_to(&ap.position);
    let (out_az, out_el) = ap.local_angles_to(&ris.position);
    let h1: DMatrix<Complex64> =
        (specs.ris.steering(in_az, in_el) * specs.ap.steering(out_az, out_el).adjoint()) * leg(d1, tau1);

    Ok(LosReconstruction {
        h1: ChannelTaps::flat(h1, sample_rate, carrier_frequency, tau1),
        h2: ChannelTaps::flat(h2, sample_rate, carrier_frequency, estimate.toa_est),
        ap_ris_delay: tau1,
    })
}

/// r_NLoS = r − H₂·Φ·H₁·x shifted to ⌊(τ_AP→RIS + τ_est)·F_s⌋.
pub fn cancel_los(
    r: &Frame,
    config: &RisConfig,
    reconstruction: &LosReconstruction,
    pilot: &Frame,
    toa_est: f64,
) -> Result<Frame> {
    let h1 = &reconstruction.h1.taps[0];
    let h2 = &reconstruction.h2.taps[0];
    if h1.nrows() != config.len() || h2.ncols() != config.len() {
        return Err(Error::shape("reconstruction does not match the RIS size"));
    }
    if pilot.n_antennas() != h1.ncols() || r.n_antennas() != h2.nrows() {
        return Err(Error::shape("pilot or frame does not match the reconstruction"));
    }
    let mut coupled = h1.clone();
    for (i, w) in config.weights().iter().enumerate() {
        coupled.row_mut(i).iter_mut().for_each(|z| *z *= *w);
    }
    let los = (h2 * coupled) * &pilot.samples;
    let position = pilot.start_sample + delay_samples(reconstruction.ap_ris_delay + toa_est, r.sample_rate);
    let shift = position - r.start_sample;
    if shift < 0 || shift as usize + los.ncols() > r.n_samples() {
        return Err(Error::Alignment(format!(
            "LoS replica at sample {position} does not fit frame [{}, {})",
            r.start_sample,
            r.start_sample + r.n_samples() as i64
        )));
    }
    let mut out = r.clone();
    let mut view = out.samples.columns_mut(shift as usize, los.ncols());
    view -= los;
    Ok(out)
}

/// Crossing of two azimuth-plane rays; also returns the distances along each.
pub fn intersect_rays_with_params(
    origin1: Vector2<f64>,
    azimuth1: f64,
    origin2: Vector2<f64>,
    azimuth2: f64,
) -> Result<(Vector2<f64>, f64, f64)> {
    let d1 = Vector2::new(azimuth1.cos(), azimuth1.sin());
    let d2 = Vector2::new(azimuth2.cos(), azimuth2.sin());
    // d1 × d2 = sin(φ₂ − φ₁)
    let cross = d1.x * d2.y - d1.y * d2.x;
    if cross.abs() <= 1e-9 {
        return Err(Error::DegenerateGeometry(format!(
            "rays at {:.3}° and {:.3}° are parallel",
            azimuth1.to_degrees(),
            azimuth2.to_degrees()
        )));
    }
    let w = origin2 - origin1;
    let t1 = (w.x * d2.y - w.y * d2.x) / cross;
    let t2 = (w.x * d1.y - w.y * d1.x) / cross;
    Ok((origin1 + d1 * t1, t1, t2))
}

pub fn intersect_rays(origin1: Vector2<f64>, azimuth1: f64, origin2: Vector2<f64>, azimuth2: f64) -> Result<Vector2<f64>> {
    Ok(intersect_rays_with_params(origin1, azimuth1, origin2, azimuth2)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingParams {
    /// Minimum |MUSIC angle − LoS angle| for an NLoS detection, radians.
    pub rejection_threshold: f64,
    /// Estimates closer than this are averaged, meters.
    pub merge_radius: f64,
    /// Minimum λ_max / mean(other eigenvalues) of the residual covariance.
    pub min_dominance: f64,
    pub music_grid_step: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            rejection_threshold: 4f64.to_radians(),
            merge_radius: 0.3,
            min_dominance: 10.0,
            music_grid_step: crate::estimation::DEFAULT_GRID_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererEstimate {
    pub position: [f64; 3],
    /// RIS-local beam azimuth.
    pub beam_azimuth: f64,
    /// UE-local arrival azimuth.
    pub ue_aoa: f64,
    pub codebook_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MappingResult {
    pub scatterer_estimates: Vec<ScattererEstimate>,
    pub rejected_count: usize,
}

/// Everything the mapping loop needs besides the acquisitions.
#[derive(Debug, Clone)]
pub struct MappingContext<'a> {
    pub specs: &'a ArraySpecs,
    pub reconstruction: &'a LosReconstruction,
    pub pilot: &'a Frame,
    pub params: MappingParams,
}

#[derive(Debug, Clone)]
struct Detection {
    index: usize,
    ue_aoa: f64,
    power: f64,
}

/// Runs the per-entry NLoS detection loop and triangulates what it finds.
///
/// An entry is a detection when its LoS-cancelled residual holds one
/// dominant source arriving away from the LoS. Detections are grouped by
/// arrival angle; each group is triangulated once, using the beam with the
/// strongest residual (refined by a parabola over neighbouring entries).
pub fn map_scatterers(
    acq: &mut impl Acquire,
    codebook: &Codebook,
    ue_estimate: &PositionEstimate,
    los_azimuth: f64,
    ctx: &MappingContext,
) -> Result<MappingResult> {
    let p = &ctx.params;
    let n_ris = codebook.entries.first().map_or(0, RisConfig::len);
    let onoff = RisConfig::all_j(n_ris);
    let mut residual_power = vec![0.0; codebook.len()];
    let mut detections = Vec::new();
    let mut rejected = 0;
    for (index, config) in codebook.entries.iter().enumerate() {
        let r_tot = acq.acquire(config)?;
        let (r_d, _) = onoff_direct_estimate(acq, &onoff)?;
        let r_ris = r_tot.try_sub(&r_d)?;
        let r_nlos = cancel_los(&r_ris, config, ctx.reconstruction, ctx.pilot, ue_estimate.toa_est)?;
        residual_power[index] = r_nlos.energy();
        if r_nlos.energy() <= 1e-9 * r_ris.energy() {
            rejected += 1;
            continue;
        }
        let cov = sample_covariance(&r_nlos)?;
        let ev = eigenvalues(&cov);
        let rest = ev[1..].iter().map(|v| v.max(0.0)).sum::<f64>() / (ev.len() - 1) as f64;
        if ev[0] < p.min_dominance * rest {
            rejected += 1;
            continue;
        }
        let spectrum = music_spectrum(&cov, &ctx.specs.ue, 1, p.music_grid_step)?;
        let ue_aoa = pick_peak(&spectrum, None)?;
        if (ue_aoa - los_azimuth).abs() <= p.rejection_threshold {
            rejected += 1;
            continue;
        }
        detections.push(Detection {
            index,
            ue_aoa,
            power: ev[0],
        });
    }

    detections.sort_by(|a, b| a.ue_aoa.total_cmp(&b.ue_aoa).then(a.index.cmp(&b.index)));
    let mut groups: Vec<Vec<Detection>> = Vec::new();
    for d in detections {
        match groups.last_mut() {
            Some(g) if d.ue_aoa - g.last().expect("non-empty group").ue_aoa <= p.rejection_threshold => g.push(d),
            _ => groups.push(vec![d]),
        }
    }

    let ris = &ctx.specs.ris.pose;
    let ue_xy = Vector2::new(ue_estimate.position[0], ue_estimate.position[1]);
    let ue_yaw = ctx.specs.ue.pose.yaw;
    let mut estimates: Vec<(ScattererEstimate, usize)> = Vec::new();
    for group in groups {
        let best = group
            .iter()
            .fold(&group[0], |b, d| if d.power > b.power { d } else { b });
        let beam = refine_beam(codebook, &residual_power, best.index);
        match triangulate(ris, beam, ue_xy, ue_yaw, best.ue_aoa) {
            Some(point) => {
                let est = ScattererEstimate {
                    position: [point.x, point.y, ris.position.z],
                    beam_azimuth: beam,
                    ue_aoa: best.ue_aoa,
                    codebook_index: best.index,
                };
                merge_estimate(&mut estimates, est, p.merge_radius);
            }
            None => rejected += group.len(),
        }
    }
    Ok(MappingResult {
        scatterer_estimates: estimates.into_iter().map(|(e, _)| e).collect(),
        rejected_count: rejected,
    })
}

/// Crossing of the RIS beam ray and the UE arrival ray, if it lies in front
/// of both (positive distance along each ray).
pub fn triangulate(
    ris_pose: &Pose,
    beam_local: f64,
    ue_xy: Vector2<f64>,
    ue_yaw: f64,
    ue_aoa_local: f64,
) -> Option<Vector2<f64>> {
    let (point, t1, t2) = intersect_rays_with_params(
        ris_pose.position.xy(),
        ris_pose.to_global_azimuth(beam_local),
        ue_xy,
        ue_yaw + ue_aoa_local,
    )
    .ok()?;
    (t1 > 0.0 && t2 > 0.0).then_some(point)
}

fn refine_beam(codebook: &Codebook, power: &[f64], k: usize) -> f64 {
    let target = codebook.entries[k].target_azimuth;
    if k == 0 || k + 1 >= codebook.len() {
        return target;
    }
    let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
    let denom = a - 2.0 * b + c;
    if !(denom < 0.0) || b < a || b < c {
        return target;
    }
    target + (0.5 * (a - c) / denom).clamp(-0.5, 0.5) * codebook.angle_step
}

fn merge_estimate(list: &mut Vec<(ScattererEstimate, usize)>, est: ScattererEstimate, radius: f64) {
    let p = Vector3::from(est.position);
    for (existing, count) in list.iter_mut() {
        let q = Vector3::from(existing.position);
        if (p - q).norm() <= radius {
            let n = *count as f64;
            existing.position = ((q * n + p) / (n + 1.0)).into();
            *count += 1;
            return;
        }
    }
    list.push((est, 1));
}

/// Distance from each true point to the nearest estimate.
pub fn nearest_errors(truth: &[[f64; 3]], estimates: &[ScattererEstimate]) -> Vec<f64> {
    truth
        .iter()
        .filter_map(|t| {
            let t = Vector3::from(*t);
            estimates
                .iter()
                .map(|e| (Vector3::from(e.position) - t).norm())
                .min_by(f64::total_cmp)
        })
        .collect()
}

/// |true − estimated| departure azimuth, degrees.
pub fn angle_error_deg(true_azimuth: f64, estimated: f64) -> f64 {
    angle_distance(true_azimuth, estimated).to_degrees()
}
