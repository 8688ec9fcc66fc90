//! Simulated measurements: traced AP→RIS, RIS→UE and AP→UE channels, a
//! precoded pilot, and AWGN referenced to the composite received power.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Acquire;
use crate::arrays::{ArrayKind, ArraySpec, Pose};
use crate::channel::{add_noise, apply_channel, cascade_paths, combine_received, ChannelTaps, Frame, PathChannel};
use crate::error::{Error, Result};
use crate::geometry::{trace_paths, Node, PathRecord, Scene};
use crate::ris::{mrt_config, AnglePair, RisConfig};

/// AP, RIS and UE arrays, posed at their scene nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpecs {
    pub ap: ArraySpec,
    pub ris: ArraySpec,
    pub ue: ArraySpec,
}

impl ArraySpecs {
    /// AP ULA of 4, RIS 32×32 URA, UE ULA of 8, all at half-wavelength spacing.
    pub fn standard() -> Self {
        Self {
            ap: ArraySpec::new(ArrayKind::Ula, 4, 1, 0.5, Pose::default()).expect("valid"),
            ris: ArraySpec::new(ArrayKind::Ura, 32, 32, 0.5, Pose::default()).expect("valid"),
            ue: ArraySpec::new(ArrayKind::Ula, 8, 1, 0.5, Pose::default()).expect("valid"),
        }
    }

    pub fn placed_in(&self, scene: &Scene) -> Self {
        Self {
            ap: self.ap.with_pose(scene.nodes.ap),
            ris: self.ris.with_pose(scene.nodes.ris),
            ue: self.ue.with_pose(scene.nodes.ue),
        }
    }
}

/// Signal-level settings shared by every acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSettings {
    pub sample_rate: f64,
    pub n_pilots: usize,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub max_order: usize,
}

impl Default for SignalSettings {
    fn default() -> Self {
        Self {
            sample_rate: crate::channel::DEFAULT_SAMPLE_RATE,
            n_pilots: crate::channel::DEFAULT_PILOTS,
            snr_db: 20.0,
            max_order: 2,
        }
    }
}

/// One trial's propagation environment. Acquisitions draw noise from a
/// ChaCha stream seeded per trial, so a trial replays bit-identically.
#[derive(Debug, Clone)]
pub struct Environment {
    specs: ArraySpecs,
    carrier_frequency: f64,
    sample_rate: f64,
    h1: PathChannel,
    h2: PathChannel,
    direct: Option<(Frame, f64)>,
    symbols: Frame,
    precoder: DVector<Complex64>,
    noise_variance: f64,
    rng: ChaCha8Rng,
    acquisitions: usize,
    /// Per RIS→UE path: every reflector is a vertical facet.
    vertical: Vec<bool>,
    pub ap_ris_paths: Vec<PathRecord>,
    pub ris_ue_paths: Vec<PathRecord>,
    pub ap_ue_paths: Vec<PathRecord>,
}

impl Environment {
    pub fn new(scene: &Scene, specs: &ArraySpecs, settings: &SignalSettings, seed: u64) -> Result<Self> {
        if settings.n_pilots == 0 {
            return Err(Error::invalid("at least one pilot sample is required"));
        }
        let specs = specs.placed_in(scene);
        let fc = scene.carrier_frequency;
        let fs = settings.sample_rate;
        // The RIS is single-sided: it neither receives from nor radiates into
        // its back half-space.
        let ris_pose = specs.ris.pose;
        let in_front = |global_az: f64| ris_pose.to_local_azimuth(global_az).sin() > 0.0;
        let mut ap_ris_paths = trace_paths(scene, Node::Ap, Node::Ris, settings.max_order)?;
        ap_ris_paths.retain(|p| in_front(p.aoa_azimuth));
        let mut ris_ue_paths = trace_paths(scene, Node::Ris, Node::Ue, settings.max_order)?;
        ris_ue_paths.retain(|p| in_front(p.aod_azimuth));
        if ap_ris_paths.is_empty() || ris_ue_paths.is_empty() {
            return Err(Error::EmptyChannel);
        }
        let ap_ue_paths = trace_paths(scene, Node::Ap, Node::Ue, settings.max_order)?;

        let (az, el) = specs.ap.pose.local_angles_to(&scene.nodes.ris.position);
        let precoder = specs.ap.steering(az, el);
        let h1 = PathChannel::new(&ap_ris_paths, &specs.ap, &specs.ris, fc, fs)?
            .precoded(&precoder)?
            .merged_by_tap()?;
        let h2 = PathChannel::new(&ris_ue_paths, &specs.ris, &specs.ue, fc, fs)?;

        let symbols = Frame::precoded_pilot(
            &DVector::from_element(1, Complex64::new(1.0, 0.0)),
            settings.n_pilots,
            fs,
            seed ^ 0x5eed_5eed_5eed_5eed,
        );
        let direct = if ap_ue_paths.is_empty() {
            None
        } else {
            let hd = PathChannel::new(&ap_ue_paths, &specs.ap, &specs.ue, fc, fs)?.precoded(&precoder)?;
            let frame = apply_channel(&hd.to_taps(), &symbols)?;
            Some((frame, hd.first_tap_delay))
        };

        let vertical = ris_ue_paths
            .iter()
            .map(|p| p.reflectors.iter().all(|&i| scene.surfaces()[i].plane().normal.z.abs() < 1e-9))
            .collect();
        let mut env = Self {
            specs,
            carrier_frequency: fc,
            sample_rate: fs,
            h1,
            h2,
            direct,
            symbols,
            precoder,
            noise_variance: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            acquisitions: 0,
            vertical,
            ap_ris_paths,
            ris_ue_paths,
            ap_ue_paths,
        };
        if settings.snr_db.is_nan() || settings.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("SNR must be finite or +inf, got {}", settings.snr_db)));
        }
        if settings.snr_db.is_finite() {
            let reference = env.noiseless(&env.reference_config())?;
            env.noise_variance = crate::channel::noise_variance(&reference, settings.snr_db);
        }
        Ok(env)
    }

    pub fn specs(&self) -> &ArraySpecs {
        &self.specs
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn acquisitions(&self) -> usize {
        self.acquisitions
    }

    /// x[n] = w·s[n] at the AP antennas.
    pub fn pilot(&self) -> Frame {
        Frame::new(&self.precoder * &self.symbols.samples, self.sample_rate)
    }

    /// Incidence of the AP at the RIS, RIS local frame.
    pub fn incidence(&self) -> AnglePair {
        let (az, el) = self.specs.ris.pose.local_angles_to(&self.specs.ap.pose.position);
        AnglePair::new(az, el)
    }

    /// Continuous MRT configuration aimed at the true UE; the SNR reference.
    pub fn reference_config(&self) -> RisConfig {
        let (az, el) = self.specs.ris.pose.local_angles_to(&self.specs.ue.pose.position);
        mrt_config(self.incidence(), AnglePair::new(az, el), &self.specs.ris)
    }

    /// Effective AP→RIS→UE channel for a configuration (single precoded input).
    pub fn ris_channel(&self, config: &RisConfig) -> Result<ChannelTaps> {
        cascade_paths(&self.h1, config, &self.h2)
    }

    /// (RIS-path-only, direct-only) frames on the composite time axis.
    pub fn components(&self, config: &RisConfig) -> Result<(Frame, Frame)> {
        let eff = self.ris_channel(config)?;
        let r_ris = apply_channel(&eff, &self.symbols)?;
        let fs = self.sample_rate;
        let zeros = |f: &Frame| Frame::zeros(f.n_antennas(), f.n_samples(), fs);
        match &self.direct {
            Some((r_d, delay_d)) => Ok((
                combine_received(&r_ris, &zeros(r_d), eff.first_tap_delay, *delay_d, fs)?,
                combine_received(&zeros(&r_ris), r_d, eff.first_tap_delay, *delay_d, fs)?,
            )),
            None => {
                let z = zeros(&r_ris);
                Ok((
                    combine_received(&r_ris, &z, eff.first_tap_delay, eff.first_tap_delay, fs)?,
                    combine_received(&z, &z, eff.first_tap_delay, eff.first_tap_delay, fs)?,
                ))
            }
        }
    }

    /// r_tot without noise.
    pub fn noiseless(&self, config: &RisConfig) -> Result<Frame> {
        let (r_ris, r_d) = self.components(config)?;
        r_ris.try_add(&r_d)
    }

    /// Received frame from the RIS LoS cascade alone (AP→RIS LoS, RIS→UE LoS).
    pub fn los_component(&self, config: &RisConfig) -> Result<Frame> {
        let los = |paths: &[PathRecord]| -> Result<Vec<PathRecord>> {
            paths
                .iter()
                .find(|p| p.order == 0)
                .cloned()
                .map(|p| vec![p])
                .ok_or_else(|| Error::DegenerateGeometry("no line-of-sight path".into()))
        };
        let fc = self.carrier_frequency;
        let fs = self.sample_rate;
        let h1 = PathChannel::new(&los(&self.ap_ris_paths)?, &self.specs.ap, &self.specs.ris, fc, fs)?
            .precoded(&self.precoder)?;
        let h2 = PathChannel::new(&los(&self.ris_ue_paths)?, &self.specs.ris, &self.specs.ue, fc, fs)?;
        let eff = cascade_paths(&h1, config, &h2)?;
        let r = apply_channel(&eff, &self.symbols)?;
        // Place on the composite axis of the full channel.
        let (r_ris, _) = self.components(config)?;
        let mut out = Frame::zeros(r_ris.n_antennas(), r_ris.n_samples(), fs);
        out.start_sample = r_ris.start_sample;
        let pos = crate::channel::delay_samples(eff.first_tap_delay, fs) - out.start_sample;
        if pos < 0 || pos as usize + r.n_samples() > out.n_samples() {
            return Err(Error::Alignment("LoS component outside the composite frame".into()));
        }
        let mut view = out.samples.columns_mut(pos as usize, r.n_samples());
        view += &r.samples;
        Ok(out)
    }

    /// Single-bounce RIS→UE reflection points off vertical facets, in front
    /// of both the RIS and the UE. These are what azimuth-plane mapping can
    /// resolve; floor and ceiling bounces share the LoS azimuth.
    pub fn front_scatter_points(&self) -> Vec<[f64; 3]> {
        let ris = &self.specs.ris.pose;
        let ue = &self.specs.ue.pose;
        self.ris_ue_paths
            .iter()
            .zip(&self.vertical)
            .filter(|(p, v)| p.order == 1 && **v)
            .map(|(p, _)| p)
            .filter(|p| {
                let dep = ris.to_local_azimuth(p.aod_azimuth);
                let arr = ue.to_local_azimuth(p.aoa_azimuth);
                dep > 0.0 && dep < std::f64::consts::PI && arr > 0.0 && arr < std::f64::consts::PI
            })
            .map(|p| p.reflection_points[0].into())
            .collect()
    }

    /// Direct-channel energy relative to the RIS path under the reference config.
    pub fn direct_to_ris_ratio(&self) -> Result<f64> {
        let (r_ris, r_d) = self.components(&self.reference_config())?;
        Ok(r_d.energy() / r_ris.energy().max(f64::MIN_POSITIVE))
    }
}

impl Acquire for Environment {
    fn acquire(&mut self, config: &RisConfig) -> Result<Frame> {
        self.acquisitions += 1;
        let clean = self.noiseless(config)?;
        Ok(add_noise(&clean, self.noise_variance, &mut self.rng))
    }
}
