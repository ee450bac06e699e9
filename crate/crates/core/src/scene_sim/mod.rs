//! Synthetic indoor scenes: scripted pedestrians and beds, a ring-structured
//! LiDAR, and a noisy 2D detector.

mod detector;
mod lidar;
mod world;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use detector::{detect_camera, project_object_box, DetectorProfile};
pub use lidar::{scan_lidar, HitLabel, LidarModel, Ring, RingScan, ScanPoint, StaticMap};
pub use world::{
    ctrv_step, normalize_angle, point_in_polygon, simulate_step, MotionScript, Room, Waypoint, WorldObject,
};

use crate::{ObjectClass, Timestamp};

/// Everything needed to replay a scene deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub frame_rate_hz: f64,
    pub room: Room,
    #[serde(default)]
    pub detector: DetectorProfile,
    #[serde(default)]
    pub objects: Vec<WorldObject>,
}

fn default_duration() -> f64 {
    60.0
}

fn default_rate() -> f64 {
    10.0
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.frame_rate_hz > 0.0) || !(self.duration_s >= 0.0) {
            return Err("frame rate must be positive and duration non-negative".into());
        }
        if self.room.polygon.len() < 3 {
            return Err("room polygon needs at least 3 vertices".into());
        }
        self.detector.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            o.validate()?;
            if !ids.insert(o.id) {
                return Err(format!("duplicate object id {}", o.id));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate_hz).round() as usize
    }

    pub fn frame_period(&self) -> Timestamp {
        Timestamp::from_secs_f64(1.0 / self.frame_rate_hz)
    }

    /// World state at every frame, starting with the configured initial state at t = 0.
    pub fn simulate(&self) -> Vec<(Timestamp, Vec<WorldObject>)> {
        let dt = 1.0 / self.frame_rate_hz;
        let period = self.frame_period();
        let mut world = self.objects.clone();
        let mut out = Vec::with_capacity(self.frame_count());
        for k in 0..self.frame_count() {
            if k > 0 {
                world = simulate_step(&world, dt, Some(&self.room));
            }
            out.push((Timestamp(period.0 * k as i64), world.clone()));
        }
        out
    }
}

/// One line of the ground-truth JSONL stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub t: f64,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u32,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
}

impl GroundTruthFrame {
    pub fn from_world(t: Timestamp, world: &[WorldObject]) -> Self {
        GroundTruthFrame {
            t: t.as_secs_f64(),
            objects: world
                .iter()
                .map(|o| GroundTruthObject { id: o.id, class: o.class, x: o.x, y: o.y, yaw: o.yaw, v: o.speed, omega: o.yaw_rate })
                .collect(),
        }
    }
}

pub fn write_ground_truth<W: Write>(mut out: W, frames: &[GroundTruthFrame]) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ground_truth<R: BufRead>(input: R) -> std::io::Result<Vec<GroundTruthFrame>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(std::io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneConfig {
        let script = MotionScript::new(vec![
            Waypoint { x: 8.0, y: 2.0, speed: 1.2 },
            Waypoint { x: 2.0, y: 6.0, speed: 0.9 },
        ]);
        SceneConfig {
            seed: 3,
            duration_s: 5.0,
            frame_rate_hz: 10.0,
            room: Room::rectangle(10.0, 8.0),
            detector: DetectorProfile::default(),
            objects: vec![
                WorldObject::person(1, 2.0, 2.0, 0.0, 1.0).with_script(script),
                WorldObject::bed(2, 5.0, 5.0, 0.2),
            ],
        }
    }

    #[test]
    fn toml_round_trip() {
        let s = scene();
        assert_eq!(SceneConfig::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn simulation_is_bitwise_deterministic() {
        let s = scene();
        let a = s.simulate();
        let b = s.simulate();
        assert_eq!(a.len(), 50);
        for ((ta, wa), (tb, wb)) in a.iter().zip(&b) {
            assert_eq!(ta, tb);
            for (oa, ob) in wa.iter().zip(wb) {
                assert_eq!(oa.x.to_bits(), ob.x.to_bits());
                assert_eq!(oa.y.to_bits(), ob.y.to_bits());
                assert_eq!(oa.yaw.to_bits(), ob.yaw.to_bits());
            }
        }
    }

    #[test]
    fn ground_truth_jsonl_round_trip() {
        let frames: Vec<_> = scene().simulate().iter().map(|(t, w)| GroundTruthFrame::from_world(*t, w)).collect();
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"t\":0.0,\"objects\":[{\"id\":1,\"class\":\"person\""));
        assert_eq!(read_ground_truth(&buf[..]).unwrap(), frames);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = scene();
        s.objects[1].id = 1;
        assert!(s.validate().is_err());
    }
}
