use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::world::{Room, WorldObject};
use crate::{par, ObjectClass, Timestamp};

const HIT_EPS: f64 = 1e-9;

/// Mechanical spinning LiDAR with one laser per ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    pub position: [f64; 3],
    /// Vertical angle of each ring in radians, strictly increasing.
    pub ring_elevations: Vec<f64>,
    /// Azimuth step between consecutive firings, radians.
    pub horizontal_resolution: f64,
    pub max_range: f64,
}

impl Default for LidarModel {
    /// 16 rings at 2 degree spacing, 0.2 degree azimuth step, 30 m range.
    fn default() -> Self {
        LidarModel {
            position: [0.0, 0.0, 1.0],
            ring_elevations: (0..16).map(|i| (-15.0 + 2.0 * i as f64).to_radians()).collect(),
            horizontal_resolution: 0.2f64.to_radians(),
            max_range: 30.0,
        }
    }
}

impl LidarModel {
    pub fn at(mut self, x: f64, y: f64, z: f64) -> Self {
        self.position = [x, y, z];
        self
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Mean spacing between adjacent ring elevations.
    pub fn vertical_resolution(&self) -> f64 {
        let n = self.ring_elevations.len();
        if n < 2 {
            return 0.0;
        }
        (self.ring_elevations[n - 1] - self.ring_elevations[0]) / (n - 1) as f64
    }

    pub fn columns(&self) -> usize {
        (2.0 * PI / self.horizontal_resolution + 1e-9).floor() as usize
    }

    /// Azimuth of firing `col`, in (-pi, pi].
    pub fn azimuth(&self, col: usize) -> f64 {
        -PI + (col + 1) as f64 * self.horizontal_resolution
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.horizontal_resolution > 0.0) {
            return Err("horizontal resolution must be positive".into());
        }
        if self.ring_elevations.is_empty() {
            return Err("at least one ring required".into());
        }
        if self.ring_elevations.windows(2).any(|w| w[1] <= w[0]) {
            return Err("ring elevations must be strictly increasing".into());
        }
        if self.ring_elevations.len() > 1 {
            let dv = self.vertical_resolution();
            if !(dv > 0.0) {
                return Err("vertical resolution must be positive".into());
            }
            if self.horizontal_resolution >= dv {
                return Err(format!(
                    "horizontal resolution {:.4} rad must be finer than vertical {:.4} rad",
                    self.horizontal_resolution, dv
                ));
            }
        }
        if !(self.max_range > 0.0) {
            return Err("max range must be positive".into());
        }
        Ok(())
    }
}

/// What a return hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum HitLabel {
    Floor,
    Wall,
    Object(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub azimuth: f64,
    pub range: f64,
    pub position: [f64; 3],
    pub label: HitLabel,
}

impl ScanPoint {
    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub index: usize,
    pub elevation: f64,
    /// Returns ordered by strictly increasing azimuth.
    pub points: Vec<ScanPoint>,
}

/// One revolution, organized per ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingScan {
    pub timestamp: Timestamp,
    pub origin: [f64; 3],
    pub rings: Vec<Ring>,
}

impl RingScan {
    pub fn empty(timestamp: Timestamp, model: &LidarModel) -> Self {
        RingScan {
            timestamp,
            origin: model.position,
            rings: model
                .ring_elevations
                .iter()
                .enumerate()
                .map(|(index, &elevation)| Ring { index, elevation, points: Vec::new() })
                .collect(),
        }
    }

    pub fn point_count(&self) -> usize {
        self.rings.iter().map(|r| r.points.len()).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &ScanPoint> {
        self.rings.iter().flat_map(|r| r.points.iter())
    }

    /// Number of returns per object id.
    pub fn hits_per_object(&self) -> std::collections::BTreeMap<u32, usize> {
        let mut m = std::collections::BTreeMap::new();
        for p in self.points() {
            if let HitLabel::Object(id) = p.label {
                *m.entry(id).or_insert(0) += 1;
            }
        }
        m
    }
}

/// Static surfaces the rays can hit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticMap {
    pub walls: Vec<([f64; 2], [f64; 2])>,
    pub wall_height: f64,
    pub floor: bool,
}

impl StaticMap {
    pub fn from_room(room: &Room) -> Self {
        StaticMap { walls: room.wall_segments(), wall_height: room.wall_height, floor: true }
    }

    pub fn none() -> Self {
        StaticMap::default()
    }
}

struct Ray {
    o: Vector3<f64>,
    d: Vector3<f64>,
}

impl Ray {
    fn at(&self, t: f64) -> Vector3<f64> {
        self.o + self.d * t
    }
}

fn hit_floor(ray: &Ray) -> Option<f64> {
    (ray.d.z < 0.0).then(|| -ray.o.z / ray.d.z).filter(|t| *t > HIT_EPS)
}

fn hit_wall(ray: &Ray, a: [f64; 2], b: [f64; 2], height: f64) -> Option<f64> {
    // o + t d = a + u (b - a) in the horizontal plane
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let denom = ray.d.x * ey - ray.d.y * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let (wx, wy) = (a[0] - ray.o.x, a[1] - ray.o.y);
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * ray.d.y - wy * ray.d.x) / denom;
    if t <= HIT_EPS || !(0.0..=1.0).contains(&u) {
        return None;
    }
    let z = ray.o.z + t * ray.d.z;
    (0.0..=height).contains(&z).then_some(t)
}

fn to_local(obj: &WorldObject, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = obj.yaw.sin_cos();
    (c * x + s * y, -s * x + c * y)
}

fn hit_ellipse_cylinder(ray: &Ray, obj: &WorldObject) -> Option<f64> {
    let (a, b) = (0.5 * obj.length, 0.5 * obj.width);
    let (px, py) = to_local(obj, ray.o.x - obj.x, ray.o.y - obj.y);
    let (dx, dy) = to_local(obj, ray.d.x, ray.d.y);
    let (px, py, dx, dy) = (px / a, py / b, dx / a, dy / b);
    let mut best: Option<f64> = None;
    let qa = dx * dx + dy * dy;
    if qa > 1e-18 {
        let qb = 2.0 * (px * dx + py * dy);
        let qc = px * px + py * py - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if t > HIT_EPS && (0.0..=obj.height).contains(&(ray.o.z + t * ray.d.z)) {
                    best = Some(t);
                    break;
                }
            }
        }
    }
    if ray.d.z.abs() > 1e-15 {
        let t = (obj.height - ray.o.z) / ray.d.z;
        if t > HIT_EPS && best.is_none_or(|b| t < b) {
            let (cx, cy) = (px + t * dx, py + t * dy);
            if cx * cx + cy * cy <= 1.0 {
                best = Some(t);
            }
        }
    }
    best
}

fn hit_box(ray: &Ray, obj: &WorldObject) -> Option<f64> {
    let (px, py) = to_local(obj, ray.o.x - obj.x, ray.o.y - obj.y);
    let (dx, dy) = to_local(obj, ray.d.x, ray.d.y);
    let o = [px, py, ray.o.z];
    let d = [dx, dy, ray.d.z];
    let lo = [-0.5 * obj.length, -0.5 * obj.width, 0.0];
    let hi = [0.5 * obj.length, 0.5 * obj.width, obj.height];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
        } else {
            let (a, b) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t0 > t1 || t1 <= HIT_EPS {
        return None;
    }
    (t0 > HIT_EPS).then_some(t0)
}

fn hit_object(ray: &Ray, obj: &WorldObject) -> Option<f64> {
    // bounding-circle rejection in the horizontal plane
    let (cx, cy) = (obj.x - ray.o.x, obj.y - ray.o.y);
    let dxy2 = ray.d.x * ray.d.x + ray.d.y * ray.d.y;
    if dxy2 > 1e-18 {
        let along = (cx * ray.d.x + cy * ray.d.y) / dxy2;
        let (qx, qy) = (cx - along * ray.d.x, cy - along * ray.d.y);
        let r = obj.bounding_radius();
        if qx * qx + qy * qy > r * r || (along < 0.0 && cx * cx + cy * cy > r * r) {
            return None;
        }
    }
    match obj.class {
        ObjectClass::Bed => hit_box(ray, obj),
        _ => hit_ellipse_cylinder(ray, obj),
    }
}

/// Traces one return per (ring, azimuth step), keeping the nearest surface.
pub fn scan_lidar(model: &LidarModel, world: &[WorldObject], map: &StaticMap, timestamp: Timestamp) -> RingScan {
    let origin = model.origin();
    let cols = model.columns();
    let rings = par::map_range(model.ring_elevations.len(), |index| {
        let elevation = model.ring_elevations[index];
        let (se, ce) = elevation.sin_cos();
        let mut points = Vec::new();
        for col in 0..cols {
            let azimuth = model.azimuth(col);
            let (sa, ca) = azimuth.sin_cos();
            let ray = Ray { o: origin, d: Vector3::new(ce * ca, ce * sa, se) };
            let mut best: Option<(f64, HitLabel)> = None;
            let mut consider = |t: Option<f64>, label: HitLabel| {
                if let Some(t) = t {
                    if t <= model.max_range && best.is_none_or(|(b, _)| t < b) {
                        best = Some((t, label));
                    }
                }
            };
            if map.floor {
                consider(hit_floor(&ray), HitLabel::Floor);
            }
            for &(a, b) in &map.walls {
                consider(hit_wall(&ray, a, b, map.wall_height), HitLabel::Wall);
            }
            for obj in world {
                consider(hit_object(&ray, obj), HitLabel::Object(obj.id));
            }
            if let Some((range, label)) = best {
                let p = ray.at(range);
                points.push(ScanPoint { azimuth, range, position: [p.x, p.y, p.z], label });
            }
        }
        Ring { index, elevation, points }
    });
    RingScan { timestamp, origin: model.position, rings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cylinder(x: f64, y: f64, r: f64) -> WorldObject {
        let mut o = WorldObject::person(1, x, y, 0.0, 0.0);
        o.length = 2.0 * r;
        o.width = 2.0 * r;
        o
    }

    #[test]
    fn empty_world_has_no_points() {
        let scan = scan_lidar(&LidarModel::default(), &[], &StaticMap::none(), Timestamp::ZERO);
        assert_eq!(scan.point_count(), 0);
    }

    #[test]
    fn default_model_is_valid() {
        let m = LidarModel::default();
        m.validate().unwrap();
        assert_eq!(m.columns(), 1800);
        assert!((m.vertical_resolution() - 2f64.to_radians()).abs() < 1e-12);
        let mut bad = m.clone();
        bad.horizontal_resolution = 3f64.to_radians();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn intra_ring_spacing_on_cylinder() {
        let model = LidarModel::default().at(0.0, 0.0, 1.0);
        let scan = scan_lidar(&model, &[cylinder(5.0, 0.0, 0.2)], &StaticMap::none(), Timestamp::ZERO);
        let ring = &scan.rings[7];
        assert!(ring.points.len() > 5);
        let mut gaps: Vec<f64> = ring.points.windows(2).map(|w| (w[1].xyz() - w[0].xyz()).norm()).collect();
        gaps.sort_by(f64::total_cmp);
        // the face toward the sensor is 4.8 m out and nearly normal to the beams
        let expected = 4.8 * model.horizontal_resolution;
        assert!((gaps[0] - expected).abs() / expected < 0.05, "min gap {} expected {expected}", gaps[0]);
    }

    #[test]
    fn points_reconstruct_from_ring_geometry() {
        let room = Room::rectangle(10.0, 8.0);
        let model = LidarModel::default().at(3.0, 2.0, 1.0);
        let world = vec![cylinder(6.0, 4.0, 0.25), WorldObject::bed(2, 5.0, 6.0, 0.3)];
        let scan = scan_lidar(&model, &world, &StaticMap::from_room(&room), Timestamp::ZERO);
        assert!(scan.point_count() > 10_000);
        let o = model.origin();
        for ring in &scan.rings {
            assert!(ring.points.windows(2).all(|w| w[0].azimuth < w[1].azimuth));
            let (se, ce) = ring.elevation.sin_cos();
            for p in &ring.points {
                assert!(p.range > 0.0 && p.range <= model.max_range);
                let (sa, ca) = p.azimuth.sin_cos();
                let rebuilt = o + Vector3::new(ce * ca, ce * sa, se) * p.range;
                assert!((rebuilt - p.xyz()).norm() < 1e-9);
                assert!(((p.xyz() - o).norm() - p.range).abs() < 1e-9);
            }
        }
        let hits = scan.hits_per_object();
        assert!(hits[&1] > 0 && hits[&2] > 0);
    }

    #[test]
    fn inter_ring_spacing_on_wall() {
        // two rings 1 degree apart, wall 10 m away
        let model = LidarModel {
            position: [0.0, 0.0, 1.5],
            ring_elevations: vec![0.0, 1f64.to_radians()],
            horizontal_resolution: 0.1f64.to_radians(),
            max_range: 30.0,
        };
        let map = StaticMap { walls: vec![([10.0, -5.0], [10.0, 5.0])], wall_height: 3.0, floor: false };
        let scan = scan_lidar(&model, &[], &map, Timestamp::ZERO);
        let a = scan.rings[0].points.iter().find(|p| p.azimuth.abs() < 1e-3).unwrap();
        let b = scan.rings[1].points.iter().find(|p| (p.azimuth - a.azimuth).abs() < 1e-12).unwrap();
        let inter = (a.xyz() - b.xyz()).norm();
        assert!((inter - 10.0 * 1f64.to_radians()).abs() < 0.002, "{inter}");
        let ia = scan.rings[0].points.iter().position(|p| p.azimuth == a.azimuth).unwrap();
        let intra = (scan.rings[0].points[ia + 1].xyz() - a.xyz()).norm();
        assert!(inter / intra > 9.0);
    }

    #[test]
    fn box_is_hit_on_near_face() {
        let model = LidarModel::default().at(0.0, 0.0, 0.5);
        let bed = WorldObject::bed(9, 6.0, 0.0, 0.0);
        let scan = scan_lidar(&model, &[bed], &StaticMap::none(), Timestamp::ZERO);
        let p = scan.rings[7].points.iter().min_by(|a, b| a.azimuth.abs().total_cmp(&b.azimuth.abs())).unwrap();
        assert_eq!(p.label, HitLabel::Object(9));
        assert!((p.position[0] - 4.9).abs() < 1e-9);
    }
}
