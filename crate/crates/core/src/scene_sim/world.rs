use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ObjectClass;

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Speed used while heading toward this waypoint.
    pub speed: f64,
}

/// Scripted walk: head for each waypoint in turn, looping at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionScript {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub next: usize,
    #[serde(default = "default_turn_rate")]
    pub max_turn_rate: f64,
    #[serde(default = "default_arrival")]
    pub arrival_radius: f64,
}

fn default_turn_rate() -> f64 {
    1.5
}

fn default_arrival() -> f64 {
    0.3
}

impl MotionScript {
    pub fn new(waypoints: Vec<Waypoint>) -> Self {
        MotionScript { waypoints, next: 0, max_turn_rate: default_turn_rate(), arrival_radius: default_arrival() }
    }
}

/// Ground-truth object in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    /// Full footprint axis lengths: along heading, across heading.
    pub length: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<MotionScript>,
}

impl WorldObject {
    pub fn person(id: u32, x: f64, y: f64, yaw: f64, speed: f64) -> Self {
        WorldObject {
            id,
            class: ObjectClass::Person,
            x,
            y,
            yaw,
            speed,
            yaw_rate: 0.0,
            length: 0.5,
            width: 0.4,
            height: 1.75,
            script: None,
        }
    }

    pub fn bed(id: u32, x: f64, y: f64, yaw: f64) -> Self {
        WorldObject {
            id,
            class: ObjectClass::Bed,
            x,
            y,
            yaw,
            speed: 0.0,
            yaw_rate: 0.0,
            length: 2.2,
            width: 1.0,
            height: 1.0,
            script: None,
        }
    }

    pub fn with_script(mut self, script: MotionScript) -> Self {
        self.script = Some(script);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed >= 0.0) {
            return Err(format!("object {}: negative speed", self.id));
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(format!("object {}: footprint axes must be positive", self.id));
        }
        let ok_height = match self.class {
            ObjectClass::Person => (1.4..=2.0).contains(&self.height),
            ObjectClass::Bed => (0.8..=1.2).contains(&self.height),
            ObjectClass::Unknown => self.height > 0.0,
        };
        if !ok_height {
            return Err(format!("object {}: height {} out of range for {:?}", self.id, self.height, self.class));
        }
        Ok(())
    }

    /// Radius of the circle enclosing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        (0.5 * self.length).hypot(0.5 * self.width)
    }
}

/// Closed room outline plus interior obstacles, all extruded to `wall_height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub polygon: Vec<[f64; 2]>,
    #[serde(default = "default_wall_height")]
    pub wall_height: f64,
    #[serde(default)]
    pub obstacles: Vec<Vec<[f64; 2]>>,
}

fn default_wall_height() -> f64 {
    3.0
}

impl Room {
    pub fn rectangle(width: f64, depth: f64) -> Self {
        Room {
            polygon: vec![[0.0, 0.0], [width, 0.0], [width, depth], [0.0, depth]],
            wall_height: default_wall_height(),
            obstacles: Vec::new(),
        }
    }

    /// Even-odd point-in-polygon test on the outline.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_polygon(&self.polygon, x, y) && !self.obstacles.iter().any(|p| point_in_polygon(p, x, y))
    }

    /// Every wall face as a 2D segment.
    pub fn wall_segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        std::iter::once(&self.polygon)
            .chain(self.obstacles.iter())
            .flat_map(|poly| (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()])))
            .collect()
    }
}

pub fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// One kinematic step with the constant turn rate and velocity model,
/// first-order form: position moves along the current heading, then the
/// heading advances by `yaw_rate * dt`.
pub fn ctrv_step(x: f64, y: f64, yaw: f64, speed: f64, yaw_rate: f64, dt: f64) -> (f64, f64, f64) {
    (
        x + speed * yaw.cos() * dt,
        y + speed * yaw.sin() * dt,
        normalize_angle(yaw + yaw_rate * dt),
    )
}

fn steer(obj: &mut WorldObject, dt: f64) {
    let Some(script) = obj.script.as_mut() else { return };
    if script.waypoints.is_empty() {
        return;
    }
    let mut wp = script.waypoints[script.next % script.waypoints.len()];
    if (wp.x - obj.x).hypot(wp.y - obj.y) < script.arrival_radius {
        script.next = (script.next + 1) % script.waypoints.len();
        wp = script.waypoints[script.next];
    }
    obj.speed = wp.speed;
    let desired = (wp.y - obj.y).atan2(wp.x - obj.x);
    let err = normalize_angle(desired - obj.yaw);
    obj.yaw_rate = (err / dt).clamp(-script.max_turn_rate, script.max_turn_rate);
}

/// Advances every object by `dt`. Scripted objects pick their yaw rate
/// toward the next waypoint first. An object that would leave `room` keeps
/// its position and turns around.
pub fn simulate_step(world: &[WorldObject], dt: f64, room: Option<&Room>) -> Vec<WorldObject> {
    assert!(dt > 0.0, "simulate_step requires dt > 0");
    world
        .iter()
        .map(|o| {
            let mut obj = o.clone();
            steer(&mut obj, dt);
            let (x, y, yaw) = ctrv_step(obj.x, obj.y, obj.yaw, obj.speed, obj.yaw_rate, dt);
            match room {
                Some(room) if !room.contains(x, y) => {
                    log::debug!("object {} reflected at wall ({x:.2}, {y:.2})", obj.id);
                    obj.yaw = normalize_angle(obj.yaw + PI);
                }
                _ => {
                    obj.x = x;
                    obj.y = y;
                    obj.yaw = yaw;
                }
            }
            obj
        })
        .collect()
}
