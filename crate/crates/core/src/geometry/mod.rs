//! Indoor scene description and specular ray tracing.

pub(crate) mod scene_file;
mod trace;

use nalgebra::Vector3;

use crate::arrays::Pose;
use crate::error::{Error, Result};

pub use scene_file::{NodeFile, RoomFile, SceneFile, SurfaceFile, WallGammas, SCENE_SCHEMA};
pub use trace::{trace_between, trace_paths, validate_path, PathRecord, MAX_ORDER};

const PLANAR_TOL: f64 = 1e-9;

/// Infinite plane through `point` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Plane {
    /// Builds a plane, normalizing the normal. A zero normal is rejected.
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(Error::invalid("plane normal must be non-zero"));
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }

    /// Signed distance of `p` from the plane, positive on the normal side.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(&(p - self.point))
    }

    /// Parameter t where a + t·(b − a) meets the plane, if not parallel.
    pub fn intersect_line(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(&(b - a));
        if denom.abs() < 1e-15 {
            return None;
        }
        Some(self.normal.dot(&(self.point - a)) / denom)
    }
}

/// Reflection of `point` across `plane`.
pub fn mirror_point(point: &Vector3<f64>, plane: &Plane) -> Result<Vector3<f64>> {
    let n = plane.normal.norm();
    if !(n > 1e-12 && n.is_finite()) {
        return Err(Error::invalid("plane normal must be non-zero"));
    }
    let unit = plane.normal / n;
    Ok(point - unit * (2.0 * unit.dot(&(point - plane.point))))
}

/// A planar parallelogram facet `origin + s·edge_a + t·edge_b`, s, t ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub label: String,
    origin: Vector3<f64>,
    edge_a: Vector3<f64>,
    edge_b: Vector3<f64>,
    plane: Plane,
    /// Real amplitude reflection coefficient Γ ∈ [0, 1].
    pub gamma: f64,
    // Inverse Gram matrix of the edges, for facet membership.
    gram_inv: [f64; 4],
}

impl Surface {
    /// Builds a facet from four corners listed around its perimeter.
    pub fn from_corners(label: &str, corners: [Vector3<f64>; 4], gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Validation(format!(
                "surface `{label}`: reflection coefficient {gamma} outside [0, 1]"
            )));
        }
        let [c0, c1, c2, c3] = corners;
        let edge_a = c1 - c0;
        let edge_b = c3 - c0;
        let normal = edge_a.cross(&edge_b);
        let plane = Plane::new(c0, normal).map_err(|_| {
            Error::Validation(format!("surface `{label}`: corners are collinear"))
        })?;
        if plane.signed_distance(&c2).abs() > PLANAR_TOL {
            return Err(Error::Validation(format!(
                "surface `{label}`: corners are not coplanar"
            )));
        }
        if (c0 + edge_a + edge_b - c2).norm() > 1e-6 {
            return Err(Error::Validation(format!(
                "surface `{label}`: corners do not form a parallelogram"
            )));
        }
        let (aa, ab, bb) = (edge_a.dot(&edge_a), edge_a.dot(&edge_b), edge_b.dot(&edge_b));
        let det = aa * bb - ab * ab;
        Ok(Self {
            label: label.to_string(),
            origin: c0,
            edge_a,
            edge_b,
            plane,
            gamma,
            gram_inv: [bb / det, -ab / det, -ab / det, aa / det],
        })
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let o = self.origin;
        [o, o + self.edge_a, o + self.edge_a + self.edge_b, o + self.edge_b]
    }

    /// True if `p` lies on the facet (within `tol` meters of its plane and bounds).
    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        if self.plane.signed_distance(p).abs() > tol {
            return false;
        }
        let q = p - self.origin;
        let (qa, qb) = (q.dot(&self.edge_a), q.dot(&self.edge_b));
        let [i00, i01, i10, i11] = self.gram_inv;
        let s = i00 * qa + i01 * qb;
        let t = i10 * qa + i11 * qb;
        let (sa, sb) = (tol / self.edge_a.norm(), tol / self.edge_b.norm());
        (-sa..=1.0 + sa).contains(&s) && (-sb..=1.0 + sb).contains(&t)
    }

    /// Parameter t ∈ (0, 1) where the open segment a→b crosses the facet.
    pub fn segment_hit(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
        let t = self.plane.intersect_line(a, b)?;
        const EDGE: f64 = 1e-9;
        if t <= EDGE || t >= 1.0 - EDGE {
            return None;
        }
        let p = a + (b - a) * t;
        self.contains(&p, 1e-9).then_some(t)
    }
}

/// Axis-aligned shoebox room.
#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    /// Γ for the walls in the order x_min, x_max, y_min, y_max, z_min (floor), z_max (ceiling).
    pub gammas: [f64; 6],
}

impl Room {
    pub const WALL_LABELS: [&'static str; 6] =
        ["wall_x_min", "wall_x_max", "wall_y_min", "wall_y_max", "floor", "ceiling"];

    pub fn contains_strictly(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    /// The six walls as facets with inward-facing normals.
    fn walls(&self) -> Result<Vec<Surface>> {
        let (a, b) = (self.min, self.max);
        let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
        let quads = [
            [v(a.x, a.y, a.z), v(a.x, b.y, a.z), v(a.x, b.y, b.z), v(a.x, a.y, b.z)],
            [v(b.x, a.y, a.z), v(b.x, a.y, b.z), v(b.x, b.y, b.z), v(b.x, b.y, a.z)],
            [v(a.x, a.y, a.z), v(a.x, a.y, b.z), v(b.x, a.y, b.z), v(b.x, a.y, a.z)],
            [v(a.x, b.y, a.z), v(b.x, b.y, a.z), v(b.x, b.y, b.z), v(a.x, b.y, b.z)],
            [v(a.x, a.y, a.z), v(b.x, a.y, a.z), v(b.x, b.y, a.z), v(a.x, b.y, a.z)],
            [v(a.x, a.y, b.z), v(a.x, b.y, b.z), v(b.x, b.y, b.z), v(b.x, a.y, b.z)],
        ];
        quads
            .into_iter()
            .zip(Self::WALL_LABELS)
            .zip(self.gammas)
            .map(|((q, label), g)| Surface::from_corners(label, q, g))
            .collect()
    }
}

/// The three nodes of the positioning setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Ap,
    Ris,
    Ue,
}

impl Node {
    pub fn name(self) -> &'static str {
        match self {
            Node::Ap => "ap",
            Node::Ris => "ris",
            Node::Ue => "ue",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nodes {
    pub ap: Pose,
    pub ris: Pose,
    pub ue: Pose,
}

impl Nodes {
    pub fn get(&self, node: Node) -> &Pose {
        match node {
            Node::Ap => &self.ap,
            Node::Ris => &self.ris,
            Node::Ue => &self.ue,
        }
    }
}

/// Immutable indoor scene: room walls, scatterer facets, nodes and carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    room: Room,
    scatterers: Vec<Surface>,
    surfaces: Vec<Surface>,
    pub carrier_frequency: f64,
    pub nodes: Nodes,
}

impl Scene {
    pub fn new(
        room: Room,
        scatterers: Vec<Surface>,
        carrier_frequency: f64,
        nodes: Nodes,
    ) -> Result<Self> {
        if !(carrier_frequency > 0.0 && carrier_frequency.is_finite()) {
            return Err(Error::Validation(format!(
                "carrier frequency must be positive, got {carrier_frequency}"
            )));
        }
        if (0..3).any(|i| room.max[i] <= room.min[i]) {
            return Err(Error::Validation("room max corner must exceed min corner".into()));
        }
        for (node, pose) in [(Node::Ap, &nodes.ap), (Node::Ris, &nodes.ris), (Node::Ue, &nodes.ue)] {
            if !room.contains_strictly(&pose.position) {
                return Err(Error::Validation(format!(
                    "node `{}` at {:?} is not strictly inside the room",
                    node.name(),
                    pose.position.as_slice()
                )));
            }
        }
        let mut surfaces = room.walls()?;
        surfaces.extend(scatterers.iter().cloned());
        Ok(Self {
            room,
            scatterers,
            surfaces,
            carrier_frequency,
            nodes,
        })
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    pub fn scatterers(&self) -> &[Surface] {
        &self.scatterers
    }

    /// Walls (indices 0..6) followed by scatterer facets.
    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn wavelength(&self) -> f64 {
        crate::arrays::wavelength(self.carrier_frequency)
    }

    pub fn node(&self, node: Node) -> &Pose {
        self.nodes.get(node)
    }

    /// Same scene with the UE moved; fails if the new pose leaves the room.
    pub fn with_ue(&self, ue: Pose) -> Result<Self> {
        if !self.room.contains_strictly(&ue.position) {
            return Err(Error::Validation(format!(
                "UE at {:?} is not strictly inside the room",
                ue.position.as_slice()
            )));
        }
        let mut scene = self.clone();
        scene.nodes.ue = ue;
        Ok(scene)
    }

    /// True if the open segment a→b crosses no facet.
    pub fn is_clear(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        self.surfaces.iter().all(|s| s.segment_hit(a, b).is_none())
    }
}
