//! Image-method tracer for line-of-sight and specular paths up to order two.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::{mirror_point, Node, Scene, Surface};
use crate::arrays::{direction_angles, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Highest supported reflection order.
pub const MAX_ORDER: usize = 2;

// Facet bounds tolerance for reflection points, meters.
const FACET_TOL: f64 = 1e-9;

/// One propagation path between two points.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Number of reflections.
    pub order: usize,
    /// Linear amplitude α = λ/(4π·d)·∏Γ.
    pub gain: f64,
    /// Propagation delay, seconds.
    pub delay: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub reflection_points: Vec<Vector3<f64>>,
    /// Indices into [`Scene::surfaces`] of the reflecting facets.
    pub reflectors: Vec<usize>,
    pub tx: Vector3<f64>,
    pub rx: Vector3<f64>,
}

impl PathRecord {
    /// Vertices tx, reflection points..., rx.
    pub fn vertices(&self) -> Vec<Vector3<f64>> {
        let mut v = Vec::with_capacity(self.order + 2);
        v.push(self.tx);
        v.extend(self.reflection_points.iter().copied());
        v.push(self.rx);
        v
    }

    pub fn length(&self) -> f64 {
        self.vertices().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    fn build(
        tx: Vector3<f64>,
        rx: Vector3<f64>,
        points: Vec<Vector3<f64>>,
        reflectors: Vec<usize>,
        surfaces: &[Surface],
        wavelength: f64,
    ) -> Option<Self> {
        let reflectivity: f64 = reflectors.iter().map(|&i| surfaces[i].gamma).product();
        if reflectivity <= 0.0 {
            return None;
        }
        let first = points.first().copied().unwrap_or(rx);
        let last = points.last().copied().unwrap_or(tx);
        let (aod_azimuth, aod_elevation) = direction_angles(&(first - tx));
        let (aoa_azimuth, aoa_elevation) = direction_angles(&(last - rx));
        let mut path = Self {
            order: points.len(),
            gain: 0.0,
            delay: 0.0,
            aod_azimuth,
            aod_elevation,
            aoa_azimuth,
            aoa_elevation,
            reflection_points: points,
            reflectors,
            tx,
            rx,
        };
        let length = path.length();
        path.gain = wavelength / (4.0 * PI * length) * reflectivity;
        path.delay = length / SPEED_OF_LIGHT;
        Some(path)
    }
}

/// Traces all paths between two named scene nodes.
pub fn trace_paths(scene: &Scene, tx: Node, rx: Node, max_order: usize) -> Result<Vec<PathRecord>> {
    if tx == rx {
        return Err(Error::invalid("transmitter and receiver must be different nodes"));
    }
    trace_between(
        scene,
        &scene.node(tx).position,
        &scene.node(rx).position,
        max_order,
    )
}

/// Traces LoS plus every specular path of order ≤ `max_order` between two
/// points, sorted by delay.
pub fn trace_between(
    scene: &Scene,
    tx: &Vector3<f64>,
    rx: &Vector3<f64>,
    max_order: usize,
) -> Result<Vec<PathRecord>> {
    if max_order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(max_order));
    }
    if (tx - rx).norm() < 1e-12 {
        return Err(Error::invalid("transmitter and receiver coincide"));
    }
    let surfaces = scene.surfaces();
    let wavelength = scene.wavelength();
    let mut paths = Vec::new();

    if scene.is_clear(tx, rx) {
        paths.extend(PathRecord::build(*tx, *rx, vec![], vec![], surfaces, wavelength));
    }
    if max_order >= 1 {
        for (i, s) in surfaces.iter().enumerate() {
            let Some(p) = single_bounce(tx, rx, s) else {
                continue;
            };
            let candidate = PathRecord::build(*tx, *rx, vec![p], vec![i], surfaces, wavelength);
            paths.extend(candidate.filter(|c| validate_path(c, scene)));
        }
    }
    if max_order >= 2 {
        for (i, s1) in surfaces.iter().enumerate() {
            for (j, s2) in surfaces.iter().enumerate() {
                if i == j {
                    continue;
                }
                let Some((p1, p2)) = double_bounce(tx, rx, s1, s2) else {
                    continue;
                };
                let candidate =
                    PathRecord::build(*tx, *rx, vec![p1, p2], vec![i, j], surfaces, wavelength);
                paths.extend(candidate.filter(|c| validate_path(c, scene)));
            }
        }
    }
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(paths)
}

fn same_side(s: &Surface, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    let (da, db) = (s.plane().signed_distance(a), s.plane().signed_distance(b));
    da * db > 0.0 && da.abs() > 1e-12 && db.abs() > 1e-12
}

/// Point on the plane of `s` where the line from `image` to `target` crosses it.
fn image_hit(image: &Vector3<f64>, target: &Vector3<f64>, s: &Surface) -> Option<Vector3<f64>> {
    let t = s.plane().intersect_line(image, target)?;
    if !(t > 0.0 && t < 1.0) {
        return None;
    }
    Some(image + (target - image) * t)
}

fn single_bounce(tx: &Vector3<f64>, rx: &Vector3<f64>, s: &Surface) -> Option<Vector3<f64>> {
    if !same_side(s, tx, rx) {
        return None;
    }
    let image = mirror_point(tx, s.plane()).ok()?;
    image_hit(&image, rx, s)
}

fn double_bounce(
    tx: &Vector3<f64>,
    rx: &Vector3<f64>,
    s1: &Surface,
    s2: &Surface,
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let image1 = mirror_point(tx, s1.plane()).ok()?;
    let image2 = mirror_point(&image1, s2.plane()).ok()?;
    let p2 = image_hit(&image2, rx, s2)?;
    let p1 = image_hit(&image1, &p2, s1)?;
    if !same_side(s1, tx, &p2) || !same_side(s2, &p1, rx) {
        return None;
    }
    Some((p1, p2))
}

/// True iff every reflection point lies on its designated facet, each
/// bounce keeps both neighbors on the facet's front side, and no segment
/// crosses any facet.
pub fn validate_path(candidate: &PathRecord, scene: &Scene) -> bool {
    let surfaces = scene.surfaces();
    if candidate.reflectors.len() != candidate.reflection_points.len() {
        return false;
    }
    let vertices = candidate.vertices();
    for (k, (&idx, p)) in candidate
        .reflectors
        .iter()
        .zip(&candidate.reflection_points)
        .enumerate()
    {
        let Some(s) = surfaces.get(idx) else {
            return false;
        };
        if !s.contains(p, FACET_TOL) || !same_side(s, &vertices[k], &vertices[k + 2]) {
            return false;
        }
    }
    vertices.windows(2).all(|w| scene.is_clear(&w[0], &w[1]))
}
