//! Versioned scenario files (schema 1).
//!
//! A scenario wraps a scene (same schema as standalone scene files) with
//! the UE grid, noise seeds and protocol settings of a Monte-Carlo run.
//! The UE node of the scene supplies the UE height and yaw; its x/y are
//! replaced by each grid point.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "paper_replica",
//!   "scene": { ... },
//!   "ue_grid": { "x_range": [1.5, 3.5], "y_range": [5, 7], "n_x": 5, "n_y": 5 },
//!   "snr_db": 20,
//!   "n_pilots": 256,
//!   "seeds": [1, 2, 3, 4],
//!   "codebook": { "step_deg": 2, "bit_depth": "one_bit", "range_deg": [10, 170] },
//!   "music": { "grid_step_deg": 0.1 },
//!   "toa_sigma_s": 0,
//!   "sample_rate_hz": 122.88e6,
//!   "max_order": 2,
//!   "arrays": { "ris": { "kind": "ura", "count_h": 32, "count_v": 32, "spacing": 0.5 } },
//!   "mapping": { "rejection_threshold_deg": 4, "merge_radius_m": 0.3, "min_dominance": 10 }
//! }
//! ```
//!
//! Every field except `scene` and `ue_grid` has a default; loading fills
//! them in and [`Scenario::to_json`] echoes the complete file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrays::{ArrayKind, ArraySpec, Pose};
use crate::error::{Error, Result};
use crate::geometry::scene_file::{parse_json, SceneFile};
use crate::geometry::Scene;
use crate::protocol::{ArraySpecs, MappingParams, ProtocolParams, SignalSettings};
use crate::ris::BitDepth;

pub const SCENARIO_SCHEMA: u32 = 1;

const BUNDLED: [(&str, &str); 3] = [
    ("paper_replica", include_str!("../../scenarios/paper_replica.json")),
    ("single_wall", include_str!("../../scenarios/single_wall.json")),
    ("los_only", include_str!("../../scenarios/los_only.json")),
];

/// Names of the scenarios shipped with the crate.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled(name: &str) -> Option<Result<Scenario>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text))
}

/// Loads a scenario file; a bare bundled name (e.g. `paper_replica`) is
/// accepted when no such file exists.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.exists() {
        if let Some(s) = path.to_str().and_then(bundled) {
            return s;
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeGrid {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub n_x: usize,
    pub n_y: usize,
}

impl UeGrid {
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point `index`, x varying fastest. A single point along an axis
    /// sits at the middle of its range.
    pub fn point(&self, index: usize) -> (usize, usize, f64, f64) {
        let ix = index % self.n_x;
        let iy = index / self.n_x;
        let at = |range: [f64; 2], n: usize, i: usize| {
            if n == 1 {
                0.5 * (range[0] + range[1])
            } else {
                range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
            }
        };
        (ix, iy, at(self.x_range, self.n_x, ix), at(self.y_range, self.n_y, iy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookParams {
    #[serde(default = "default_step_deg")]
    pub step_deg: f64,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: BitDepth,
    #[serde(default = "default_range_deg")]
    pub range_deg: [f64; 2],
}

impl Default for CodebookParams {
    fn default() -> Self {
        Self {
            step_deg: default_step_deg(),
            bit_depth: default_bit_depth(),
            range_deg: default_range_deg(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicParams {
    #[serde(default = "default_grid_step_deg")]
    pub grid_step_deg: f64,
}

impl Default for MusicParams {
    fn default() -> Self {
        Self {
            grid_step_deg: default_grid_step_deg(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayFile {
    pub kind: ArrayKind,
    pub count_h: usize,
    #[serde(default = "one")]
    pub count_v: usize,
    #[serde(default = "half")]
    pub spacing: f64,
}

impl ArrayFile {
    fn from_spec(spec: &ArraySpec) -> Self {
        Self {
            kind: spec.kind(),
            count_h: spec.count_h(),
            count_v: spec.count_v(),
            spacing: spec.spacing(),
        }
    }

    fn to_spec(self, key: &str) -> Result<ArraySpec> {
        ArraySpec::new(self.kind, self.count_h, self.count_v, self.spacing, Pose::default())
            .map_err(|e| Error::Validation(format!("arrays.{key}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysFile {
    #[serde(default = "default_ap")]
    pub ap: ArrayFile,
    #[serde(default = "default_ris")]
    pub ris: ArrayFile,
    #[serde(default = "default_ue")]
    pub ue: ArrayFile,
}

impl Default for ArraysFile {
    fn default() -> Self {
        Self {
            ap: default_ap(),
            ris: default_ris(),
            ue: default_ue(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingFile {
    #[serde(default = "default_rejection_deg")]
    pub rejection_threshold_deg: f64,
    #[serde(default = "default_merge_radius")]
    pub merge_radius_m: f64,
    #[serde(default = "default_min_dominance")]
    pub min_dominance: f64,
}

impl Default for MappingFile {
    fn default() -> Self {
        Self {
            rejection_threshold_deg: default_rejection_deg(),
            merge_radius_m: default_merge_radius(),
            min_dominance: default_min_dominance(),
        }
    }
}

fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn default_step_deg() -> f64 {
    crate::ris::DEFAULT_CODEBOOK_STEP.to_degrees()
}
fn default_bit_depth() -> BitDepth {
    BitDepth::OneBit
}
fn default_range_deg() -> [f64; 2] {
    [10.0, 170.0]
}
fn default_grid_step_deg() -> f64 {
    crate::estimation::DEFAULT_GRID_STEP.to_degrees()
}
fn default_snr_db() -> f64 {
    20.0
}
fn default_n_pilots() -> usize {
    crate::channel::DEFAULT_PILOTS
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_sample_rate() -> f64 {
    crate::channel::DEFAULT_SAMPLE_RATE
}
fn default_max_order() -> usize {
    2
}
fn default_ap() -> ArrayFile {
    ArrayFile::from_spec(&ArraySpecs::standard().ap)
}
fn default_ris() -> ArrayFile {
    ArrayFile::from_spec(&ArraySpecs::standard().ris)
}
fn default_ue() -> ArrayFile {
    ArrayFile::from_spec(&ArraySpecs::standard().ue)
}
fn default_rejection_deg() -> f64 {
    MappingParams::default().rejection_threshold.to_degrees()
}
fn default_merge_radius() -> f64 {
    MappingParams::default().merge_radius
}
fn default_min_dominance() -> f64 {
    MappingParams::default().min_dominance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    #[serde(default)]
    name: String,
    scene: SceneFile,
    ue_grid: UeGrid,
    #[serde(default = "default_snr_db")]
    snr_db: f64,
    #[serde(default = "default_n_pilots")]
    n_pilots: usize,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    codebook: CodebookParams,
    #[serde(default)]
    music: MusicParams,
    #[serde(default)]
    toa_sigma_s: f64,
    #[serde(default = "default_sample_rate")]
    sample_rate_hz: f64,
    #[serde(default = "default_max_order")]
    max_order: usize,
    #[serde(default)]
    arrays: ArraysFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mapping: Option<MappingFile>,
}

/// A validated Monte-Carlo scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub scene: Scene,
    pub ue_grid: UeGrid,
    pub snr_db: f64,
    pub n_pilots: usize,
    pub seeds: Vec<u64>,
    pub codebook: CodebookParams,
    pub music: MusicParams,
    /// Standard deviation of the ToA oracle jitter, seconds.
    pub toa_sigma: f64,
    pub sample_rate: f64,
    pub max_order: usize,
    pub arrays: ArraySpecs,
    pub mapping: Option<MappingFile>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = parse_json(text)?;
        if file.schema != SCENARIO_SCHEMA {
            return Err(Error::Parse {
                key: "schema".into(),
                message: format!("unsupported schema {} (expected {SCENARIO_SCHEMA})", file.schema),
            });
        }
        let scenario = Self {
            name: file.name,
            scene: file.scene.to_scene()?,
            ue_grid: file.ue_grid,
            snr_db: file.snr_db,
            n_pilots: file.n_pilots,
            seeds: file.seeds,
            codebook: file.codebook,
            music: file.music,
            toa_sigma: file.toa_sigma_s,
            sample_rate: file.sample_rate_hz,
            max_order: file.max_order,
            arrays: ArraySpecs {
                ap: file.arrays.ap.to_spec("ap")?,
                ris: file.arrays.ris.to_spec("ris")?,
                ue: file.arrays.ue.to_spec("ue")?,
            },
            mapping: file.mapping,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The complete scenario, defaults included.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            schema: SCENARIO_SCHEMA,
            name: self.name.clone(),
            scene: SceneFile::from_scene(&self.scene),
            ue_grid: self.ue_grid,
            snr_db: self.snr_db,
            n_pilots: self.n_pilots,
            seeds: self.seeds.clone(),
            codebook: self.codebook,
            music: self.music,
            toa_sigma_s: self.toa_sigma,
            sample_rate_hz: self.sample_rate,
            max_order: self.max_order,
            arrays: ArraysFile {
                ap: ArrayFile::from_spec(&self.arrays.ap),
                ris: ArrayFile::from_spec(&self.arrays.ris),
                ue: ArrayFile::from_spec(&self.arrays.ue),
            },
            mapping: self.mapping,
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// SHA-256 of the echoed scenario, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let g = &self.ue_grid;
        if g.n_x == 0 || g.n_y == 0 {
            return fail("ue_grid: n_x and n_y must be at least 1".into());
        }
        let room = self.scene.room();
        for (axis, range) in [(0, g.x_range), (1, g.y_range)] {
            let name = ["x_range", "y_range"][axis];
            if !(range[0] <= range[1]) {
                return fail(format!("ue_grid.{name}: lower bound exceeds upper bound"));
            }
            if !(range[0] > room.min[axis] && range[1] < room.max[axis]) {
                return fail(format!("ue_grid.{name} {range:?} is not inside the room"));
            }
        }
        if self.seeds.is_empty() {
            return fail("seeds: at least one seed is required".into());
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return fail(format!("snr_db must be finite, got {}", self.snr_db));
        }
        if self.n_pilots == 0 {
            return fail("n_pilots must be positive".into());
        }
        let c = &self.codebook;
        if !(c.step_deg > 0.0 && c.step_deg.is_finite()) {
            return fail(format!("codebook.step_deg must be positive, got {}", c.step_deg));
        }
        if !(0.0 <= c.range_deg[0] && c.range_deg[0] <= c.range_deg[1] && c.range_deg[1] <= 180.0) {
            return fail(format!("codebook.range_deg {:?} must lie within [0, 180]", c.range_deg));
        }
        if !(self.music.grid_step_deg > 0.0 && self.music.grid_step_deg.is_finite()) {
            return fail("music.grid_step_deg must be positive".into());
        }
        if !(self.toa_sigma >= 0.0 && self.toa_sigma.is_finite()) {
            return fail("toa_sigma_s must be non-negative".into());
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return fail("sample_rate_hz must be positive".into());
        }
        if self.max_order > crate::geometry::MAX_ORDER {
            return fail(format!("max_order {} exceeds {}", self.max_order, crate::geometry::MAX_ORDER));
        }
        if let Some(m) = &self.mapping {
            if !(m.rejection_threshold_deg >= 0.0 && m.merge_radius_m >= 0.0 && m.min_dominance >= 0.0) {
                return fail("mapping parameters must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Scene with the UE moved to grid point `index`.
    pub fn scene_at(&self, index: usize) -> Result<Scene> {
        let (_, _, x, y) = self.ue_grid.point(index);
        let ue = self.scene.nodes.ue;
        self.scene.with_ue(Pose::new(nalgebra::Vector3::new(x, y, ue.position.z), ue.yaw))
    }

    pub fn mapping_params(&self) -> Option<MappingParams> {
        self.mapping.map(|m| MappingParams {
            rejection_threshold: m.rejection_threshold_deg.to_radians(),
            merge_radius: m.merge_radius_m,
            min_dominance: m.min_dominance,
            music_grid_step: self.music.grid_step_deg.to_radians(),
        })
    }

    /// Protocol parameters shared by every trial; bit depth and angle mode
    /// come from the run mode.
    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            specs: self.arrays.clone(),
            signal: SignalSettings {
                sample_rate: self.sample_rate,
                n_pilots: self.n_pilots,
                snr_db: self.snr_db,
                max_order: self.max_order,
            },
            codebook_range: (self.codebook.range_deg[0].to_radians(), self.codebook.range_deg[1].to_radians()),
            codebook_step: self.codebook.step_deg.to_radians(),
            bit_depth: self.codebook.bit_depth,
            music_grid_step: self.music.grid_step_deg.to_radians(),
            toa_sigma: self.toa_sigma,
            mapping: self.mapping_params(),
            ..ProtocolParams::default()
        }
    }
}
