//! Antenna-array geometry and far-field responses.
//!
//! Angles follow one convention throughout the crate: azimuth is measured
//! counter-clockwise from the +x axis in (−π, π], elevation from the
//! azimuth plane with up positive. An array's local frame is its global
//! frame rotated by the pose yaw about +z. ULAs lie along local x and URAs
//! in the local x–z plane, so local azimuths in (0, π) face the array front.

use std::f64::consts::{PI, TAU};

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier wavelength in meters.
pub fn wavelength(carrier_frequency: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_frequency
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Absolute angular distance between two azimuths, in [0, π].
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Unit vector pointing at (azimuth, elevation).
pub fn unit_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Azimuth and elevation of a (not necessarily unit) direction vector.
pub fn direction_angles(v: &Vector3<f64>) -> (f64, f64) {
    let horizontal = v.x.hypot(v.y);
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        wrap_angle(v.y.atan2(v.x))
    };
    (azimuth, v.z.atan2(horizontal))
}

/// Position plus yaw rotation about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, yaw }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), 0.0)
    }

    /// Rotates a local-frame vector into the global frame.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    pub fn to_local_azimuth(&self, global_azimuth: f64) -> f64 {
        wrap_angle(global_azimuth - self.yaw)
    }

    pub fn to_global_azimuth(&self, local_azimuth: f64) -> f64 {
        wrap_angle(local_azimuth + self.yaw)
    }

    /// Local (azimuth, elevation) of the direction from this pose towards `target`.
    pub fn local_angles_to(&self, target: &Vector3<f64>) -> (f64, f64) {
        let (az, el) = direction_angles(&(target - self.position));
        (self.to_local_azimuth(az), el)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::at(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Ura,
}

/// A uniform linear or rectangular array. Spacing is in carrier wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    kind: ArrayKind,
    count_h: usize,
    count_v: usize,
    spacing: f64,
    pub pose: Pose,
}

impl ArraySpec {
    pub fn new(
        kind: ArrayKind,
        count_h: usize,
        count_v: usize,
        spacing: f64,
        pose: Pose,
    ) -> Result<Self> {
        if count_h == 0 || count_v == 0 {
            return Err(Error::invalid("array element counts must be positive"));
        }
        if kind == ArrayKind::Ula && count_v != 1 {
            return Err(Error::invalid("a ULA has exactly one vertical element"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("array spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            kind,
            count_h,
            count_v,
            spacing,
            pose,
        })
    }

    pub fn ula(count: usize, spacing: f64, pose: Pose) -> Result<Self> {
        Self::new(ArrayKind::Ula, count, 1, spacing, pose)
    }

    pub fn ura(count_h: usize, count_v: usize, spacing: f64, pose: Pose) -> Result<Self> {
        Self::new(ArrayKind::Ura, count_h, count_v, spacing, pose)
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn count_h(&self) -> usize {
        self.count_h
    }

    pub fn count_v(&self) -> usize {
        self.count_v
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total element count N = count_h × count_v.
    pub fn len(&self) -> usize {
        self.count_h * self.count_v
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_pose(&self, pose: Pose) -> Self {
        Self { pose, ..self.clone() }
    }

    /// Lattice indices (h, v) in row-major order, horizontal index fastest.
    fn lattice(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.count_v).flat_map(move |v| (0..self.count_h).map(move |h| (h, v)))
    }

    /// Element positions in the local frame, in units of wavelengths.
    fn local_positions_wl(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.lattice()
            .map(move |(h, v)| Vector3::new(h as f64, 0.0, v as f64) * self.spacing)
    }

    /// Element positions in the local frame, meters.
    pub fn local_positions(&self, wavelength: f64) -> Vec<Vector3<f64>> {
        self.local_positions_wl().map(|p| p * wavelength).collect()
    }

    /// Far-field response; depends only on the spacing in wavelengths, so
    /// it matches [`array_response`] for every carrier wavelength.
    pub fn steering(&self, azimuth: f64, elevation: f64) -> DVector<Complex64> {
        let dir = unit_direction(azimuth, elevation) * TAU;
        DVector::from_iterator(
            self.len(),
            self.local_positions_wl()
                .map(|u| Complex64::from_polar(1.0, -dir.dot(&u))),
        )
    }
}

/// Wave vector k(φ, θ) in radians per meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector(pub Vector3<f64>);

impl WaveVector {
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

pub fn wave_vector(azimuth: f64, elevation: f64, wavelength: f64) -> Result<WaveVector> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::invalid(format!("wavelength must be positive, got {wavelength}")));
    }
    Ok(WaveVector(unit_direction(azimuth, elevation) * (TAU / wavelength)))
}

/// Global element positions: local lattice scaled by spacing·λ, rotated by
/// the pose yaw, translated to the pose origin.
pub fn element_positions(spec: &ArraySpec, wavelength: f64) -> Vec<Vector3<f64>> {
    spec.local_positions(wavelength)
        .into_iter()
        .map(|p| spec.pose.rotate(&p) + spec.pose.position)
        .collect()
}

/// Array response a(φ, θ) with entries exp(−j·kᵀu_i).
///
/// Angles are in the array's local frame; callers holding global angles
/// subtract the pose yaw first (see [`Pose::to_local_azimuth`]).
pub fn array_response(
    spec: &ArraySpec,
    azimuth: f64,
    elevation: f64,
    wavelength: f64,
) -> DVector<Complex64> {
    let k = unit_direction(azimuth, elevation) * (TAU / wavelength);
    DVector::from_iterator(
        spec.len(),
        spec.local_positions(wavelength)
            .iter()
            .map(|u| Complex64::from_polar(1.0, -k.dot(u))),
    )
}
