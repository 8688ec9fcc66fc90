//! JSON scene schema (version 1).
//!
//! ```json
//! {
//!   "schema": 1,
//!   "carrier_frequency_hz": 3.5e9,
//!   "room": { "min": [0, 0, 0], "max": [8, 10, 3], "gamma": 0.7,
//!             "walls": { "floor": 0.5 } },
//!   "surfaces": [ { "label": "cabinet", "gamma": 0.9,
//!                   "corners": [[..], [..], [..], [..]] } ],
//!   "nodes": { "ap":  { "position": [x, y, z], "yaw": 0 },
//!              "ris": { "position": [x, y, z], "yaw": 180 },
//!              "ue":  { "position": [x, y, z], "yaw": 0 } }
//! }
//! ```
//!
//! Node yaw is in degrees. Corners are listed around the facet perimeter.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Nodes, Room, Scene, Surface};
use crate::arrays::Pose;
use crate::error::{Error, Result};

pub const SCENE_SCHEMA: u32 = 1;

fn default_wall_gamma() -> f64 {
    0.7
}

fn default_scatterer_gamma() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema: u32,
    pub carrier_frequency_hz: f64,
    pub room: RoomFile,
    #[serde(default)]
    pub surfaces: Vec<SurfaceFile>,
    pub nodes: NodesFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomFile {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default = "default_wall_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub walls: WallGammas,
}

/// Per-wall overrides of the room reflection coefficient.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallGammas {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    #[serde(default)]
    pub label: String,
    pub corners: [[f64; 3]; 4],
    #[serde(default = "default_scatterer_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    pub position: [f64; 3],
    /// Degrees.
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesFile {
    pub ap: NodeFile,
    pub ris: NodeFile,
    pub ue: NodeFile,
}

impl NodeFile {
    pub fn to_pose(&self) -> Pose {
        Pose::new(Vector3::from(self.position), self.yaw.to_radians())
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            position: pose.position.into(),
            yaw: pose.yaw.to_degrees(),
        }
    }
}

impl SceneFile {
    pub fn to_scene(&self) -> Result<Scene> {
        if self.schema != SCENE_SCHEMA {
            return Err(Error::Parse {
                key: "schema".into(),
                message: format!("unsupported scene schema {} (expected {SCENE_SCHEMA})", self.schema),
            });
        }
        let w = &self.room.walls;
        let g = self.room.gamma;
        let room = Room {
            min: self.room.min.into(),
            max: self.room.max.into(),
            gammas: [
                w.x_min.unwrap_or(g),
                w.x_max.unwrap_or(g),
                w.y_min.unwrap_or(g),
                w.y_max.unwrap_or(g),
                w.floor.unwrap_or(g),
                w.ceiling.unwrap_or(g),
            ],
        };
        let scatterers = self
            .surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let label = if s.label.is_empty() {
                    format!("surface_{i}")
                } else {
                    s.label.clone()
                };
                Surface::from_corners(&label, s.corners.map(Vector3::from), s.gamma)
            })
            .collect::<Result<Vec<_>>>()?;
        let nodes = Nodes {
            ap: self.nodes.ap.to_pose(),
            ris: self.nodes.ris.to_pose(),
            ue: self.nodes.ue.to_pose(),
        };
        Scene::new(room, scatterers, self.carrier_frequency_hz, nodes)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let room = scene.room();
        let gamma = room.gammas[0];
        let over = |g: f64| (g != gamma).then_some(g);
        Self {
            schema: SCENE_SCHEMA,
            carrier_frequency_hz: scene.carrier_frequency,
            room: RoomFile {
                min: room.min.into(),
                max: room.max.into(),
                gamma,
                walls: WallGammas {
                    x_min: None,
                    x_max: over(room.gammas[1]),
                    y_min: over(room.gammas[2]),
                    y_max: over(room.gammas[3]),
                    floor: over(room.gammas[4]),
                    ceiling: over(room.gammas[5]),
                },
            },
            surfaces: scene
                .scatterers()
                .iter()
                .map(|s| SurfaceFile {
                    label: s.label.clone(),
                    corners: s.corners().map(Into::into),
                    gamma: s.gamma,
                })
                .collect(),
            nodes: NodesFile {
                ap: NodeFile::from_pose(&scene.nodes.ap),
                ris: NodeFile::from_pose(&scene.nodes.ris),
                ue: NodeFile::from_pose(&scene.nodes.ue),
            },
        }
    }
}

/// Deserializes JSON, reporting the path of the offending key on failure.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json::<SceneFile>(text)?.to_scene()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SceneFile::from_scene(self)).expect("scene serializes")
    }
}
