//! Experiment configuration: the scene, the sensor nodes and the network.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera_geometry::{CameraModel, GeometryError, Intrinsics};
use crate::global_fusion::GlobalFusionParams;
use crate::local_fusion::FusionParams;
use crate::scene_sim::{DetectorProfile, LidarModel, MotionScript, Room, SceneConfig, Waypoint, WorldObject};
use crate::tracking::TrackerParams;
use crate::transport::{ClockModel, LatencyModel};

pub const BUILTIN_SCENES: [&str; 3] = ["nine_pedestrians", "four_pedestrians", "bed_three_pedestrians"];

const ROOM_W: f64 = 12.0;
const ROOM_D: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub intrinsics: Intrinsics,
    pub position: [f64; 3],
    /// Heading of the optical axis, radians from +x.
    pub yaw: f64,
    /// Downward tilt, radians.
    pub pitch: f64,
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel, GeometryError> {
        CameraModel::from_pose(&self.intrinsics, self.position.into(), self.yaw, self.pitch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: u32,
    pub lidar: LidarModel,
    #[serde(default)]
    pub cameras: Vec<CameraConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    /// `builtin:<name>` or a path to a scene TOML file.
    Reference(String),
    Inline(SceneConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub dbscan_epsilon: f64,
    pub dbscan_min_points: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { sizes: vec![5_000, 20_000, 50_000], repetitions: 10, dbscan_epsilon: 0.3, dbscan_min_points: 4 }
    }
}

/// Point-level DBSCAN settings compared against the hierarchical method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanVariant {
    pub name: String,
    pub epsilon: f64,
    pub min_points: usize,
}

fn default_dbscan_variants() -> Vec<DbscanVariant> {
    vec![
        DbscanVariant { name: "dbscan1".into(), epsilon: 0.3, min_points: 4 },
        DbscanVariant { name: "dbscan2".into(), epsilon: 0.3, min_points: 8 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub scene: SceneSource,
    pub nodes: Vec<NodeConfig>,
    pub latency: LatencyModel,
    /// Mean latencies of the delay experiment, ms.
    pub delay_grid_ms: Vec<f64>,
    /// Spread used at every grid point, ms.
    pub delay_std_ms: f64,
    #[serde(default)]
    pub clocks: ClockModel,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default = "default_dbscan_variants")]
    pub dbscan_variants: Vec<DbscanVariant>,
    /// Hierarchical linking threshold, overriding the default.
    #[serde(default)]
    pub epsilon_custom: Option<f64>,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub global: GlobalFusionParams,
    /// Matching gate of the metrics, m.
    #[serde(default = "default_d_match")]
    pub d_match: f64,
    /// Returns needed for an object to count as visible to a node.
    #[serde(default = "default_min_hits")]
    pub min_visible_hits: usize,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_d_match() -> f64 {
    0.5
}

fn default_min_hits() -> usize {
    5
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Two corner nodes of the default room, each with a LiDAR and two cameras
/// looking into the room.
pub fn default_nodes() -> Vec<NodeConfig> {
    let intr = Intrinsics { fx: 700.0, fy: 700.0, cx: 640.0, cy: 360.0, width: 1280, height: 720 };
    let corners = [(1, 0.3, 0.3), (2, ROOM_W - 0.3, ROOM_D - 0.3)];
    corners
        .iter()
        .map(|&(id, x, y)| {
            let diag = (ROOM_D / 2.0 - y).atan2(ROOM_W / 2.0 - x);
            let cameras = [-1.0, 1.0]
                .iter()
                .map(|s| CameraConfig {
                    intrinsics: intr,
                    position: [x, y, 2.6],
                    yaw: diag + s * 22.5f64.to_radians(),
                    pitch: 25f64.to_radians(),
                })
                .collect();
            NodeConfig { id, lidar: LidarModel::default().at(x, y, 1.0), cameras }
        })
        .collect()
}

fn random_loop(rng: &mut ChaCha8Rng, legs: usize) -> MotionScript {
    let speed = rng.random_range(0.8..1.4);
    let waypoints = (0..legs)
        .map(|_| Waypoint { x: rng.random_range(1.2..ROOM_W - 1.2), y: rng.random_range(1.2..ROOM_D - 1.2), speed })
        .collect();
    MotionScript::new(waypoints)
}

fn walkers(rng: &mut ChaCha8Rng, first_id: u32, count: u32) -> Vec<WorldObject> {
    (0..count)
        .map(|i| {
            let script = random_loop(rng, 4);
            let start = script.waypoints[3];
            let next = script.waypoints[0];
            let yaw = (next.y - start.y).atan2(next.x - start.x);
            WorldObject::person(first_id + i, start.x, start.y, yaw, start.speed).with_script(script)
        })
        .collect()
}

/// One of [`BUILTIN_SCENES`]. Walk paths are drawn from `seed`.
pub fn builtin_scene(name: &str, seed: u64) -> Option<SceneConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let objects = match name {
        "nine_pedestrians" => walkers(&mut rng, 1, 9),
        "four_pedestrians" => walkers(&mut rng, 1, 4),
        "bed_three_pedestrians" => {
            let mut v = vec![WorldObject::bed(1, 3.5, 5.5, 0.0)];
            v.extend(walkers(&mut rng, 2, 3));
            v
        }
        _ => return None,
    };
    Some(SceneConfig {
        seed,
        duration_s: 60.0,
        frame_rate_hz: 10.0,
        room: Room::rectangle(ROOM_W, ROOM_D),
        detector: DetectorProfile::default(),
        objects,
    })
}

impl ScenarioConfig {
    /// Default experiment around a built-in scene.
    pub fn builtin(name: &str, seed: u64) -> Option<Self> {
        builtin_scene(name, seed)?;
        Some(ScenarioConfig {
            name: name.to_string(),
            seed,
            scene: SceneSource::Reference(format!("builtin:{name}")),
            nodes: default_nodes(),
            latency: LatencyModel::gaussian(50.0, 8.0),
            delay_grid_ms: vec![50.0, 100.0, 150.0],
            delay_std_ms: 8.0,
            clocks: ClockModel::perfect(),
            drop_probability: 0.0,
            dbscan_variants: default_dbscan_variants(),
            epsilon_custom: None,
            fusion: FusionParams::default(),
            tracker: TrackerParams::default(),
            global: GlobalFusionParams::default(),
            d_match: default_d_match(),
            min_visible_hits: default_min_hits(),
            bench: BenchConfig::default(),
            output_dir: default_output(),
        })
    }

    /// Parses a scenario file. Relative scene paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| format!("scenario: {e}"))?;
        if let SceneSource::Reference(r) = &cfg.scene {
            if !r.starts_with("builtin:") && Path::new(r).is_relative() {
                cfg.scene = SceneSource::Reference(base_dir.join(r).to_string_lossy().into_owned());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Loads or builds the scene this scenario refers to. The scene seed
    /// follows the scenario seed.
    pub fn resolve_scene(&self) -> Result<SceneConfig, String> {
        let mut scene = match &self.scene {
            SceneSource::Inline(s) => s.clone(),
            SceneSource::Reference(r) => match r.strip_prefix("builtin:") {
                Some(name) => builtin_scene(name, self.seed).ok_or_else(|| format!("unknown built-in scene {name:?}"))?,
                None => {
                    let text = std::fs::read_to_string(r).map_err(|e| format!("scene file {r}: {e}"))?;
                    SceneConfig::from_toml(&text).map_err(|e| format!("scene file {r}: {e}"))?
                }
            },
        };
        scene.seed = self.seed;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("scenario needs at least one node".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for n in &self.nodes {
            if n.id == 0 {
                return Err("node id 0 is reserved for the center node".into());
            }
            if !ids.insert(n.id) {
                return Err(format!("duplicate node id {}", n.id));
            }
            n.lidar.validate().map_err(|e| format!("node {}: {e}", n.id))?;
            for c in &n.cameras {
                c.model().map_err(|e| format!("node {} camera: {e}", n.id))?;
            }
        }
        self.latency.validate()?;
        for &m in &self.delay_grid_ms {
            LatencyModel::gaussian(m, self.delay_std_ms).validate()?;
        }
        self.clocks.validate()?;
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err("drop_probability must be within [0, 1]".into());
        }
        if !(self.d_match > 0.0) {
            return Err("d_match must be positive".into());
        }
        if let Some(e) = self.epsilon_custom {
            if !(e > 0.0) {
                return Err("epsilon_custom must be positive".into());
            }
        }
        for v in &self.dbscan_variants {
            if !(v.epsilon > 0.0) || v.min_points == 0 {
                return Err(format!("dbscan variant {}: epsilon and min_points must be positive", v.name));
            }
        }
        if let SceneSource::Reference(r) = &self.scene {
            if let Some(name) = r.strip_prefix("builtin:") {
                if !BUILTIN_SCENES.contains(&name) {
                    return Err(format!("unknown built-in scene {name:?}"));
                }
            } else if !Path::new(r).exists() {
                return Err(format!("scene file {r} does not exist"));
            }
        }
        self.global.validate()?;
        Ok(())
    }

    /// SHA-256 over the resolved scenario, scene included, as hex.
    pub fn config_hash(&self) -> Result<String, String> {
        let scene = self.resolve_scene()?;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).map_err(|e| e.to_string())?);
        h.update(serde_json::to_vec(&scene).map_err(|e| e.to_string())?);
        Ok(hex::encode(h.finalize()))
    }
}
