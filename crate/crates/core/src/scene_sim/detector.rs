use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::world::WorldObject;
use crate::camera_geometry::{BBox2D, CameraModel, Detection2D};
use crate::{DetectionClass, ObjectClass};

/// Error model of the simulated 2D detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub miss_rate: f64,
    /// Expected number of spurious boxes per frame.
    pub false_positive_rate: f64,
    pub pixel_noise_sigma: f64,
    pub foot_detection_rate: f64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        DetectorProfile { miss_rate: 0.05, false_positive_rate: 0.05, pixel_noise_sigma: 2.0, foot_detection_rate: 0.85 }
    }
}

impl DetectorProfile {
    pub fn perfect() -> Self {
        DetectorProfile { miss_rate: 0.0, false_positive_rate: 0.0, pixel_noise_sigma: 0.0, foot_detection_rate: 1.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !prob(self.miss_rate) || !prob(self.foot_detection_rate) {
            return Err("detector probabilities must lie in [0, 1]".into());
        }
        if !(self.false_positive_rate >= 0.0) || !(self.pixel_noise_sigma >= 0.0) {
            return Err("false positive rate and pixel noise must be non-negative".into());
        }
        Ok(())
    }
}

const MIN_DEPTH: f64 = 0.1;

fn box_corners(obj: &WorldObject) -> [Vector3<f64>; 8] {
    let (s, c) = obj.yaw.sin_cos();
    let (a, b) = (0.5 * obj.length, 0.5 * obj.width);
    let mut out = [Vector3::zeros(); 8];
    let mut i = 0;
    for &(lx, ly) in &[(a, b), (a, -b), (-a, -b), (-a, b)] {
        for &z in &[0.0, obj.height] {
            out[i] = Vector3::new(obj.x + c * lx - s * ly, obj.y + s * lx + c * ly, z);
            i += 1;
        }
    }
    out
}

/// Noise-free image box of an object's 3D bounding box, clipped to the image.
/// `None` when the object is behind the camera or mostly out of frame.
pub fn project_object_box(camera: &CameraModel, obj: &WorldObject) -> Option<BBox2D> {
    let corners = box_corners(obj);
    if corners.iter().any(|p| camera.depth(p) <= MIN_DEPTH) {
        return None;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &corners {
        let px = camera.project(p).ok()?;
        x0 = x0.min(px.x);
        y0 = y0.min(px.y);
        x1 = x1.max(px.x);
        y1 = y1.max(px.y);
    }
    let full = (x1 - x0) * (y1 - y0);
    let (w, h) = (camera.width as f64, camera.height as f64);
    let clipped = BBox2D::new(x0.max(0.0), y0.max(0.0), x1.min(w), y1.min(h), class_of(obj));
    if !clipped.is_valid() || clipped.area() < 0.5 * full {
        return None;
    }
    Some(clipped)
}

fn class_of(obj: &WorldObject) -> DetectionClass {
    match obj.class {
        ObjectClass::Bed => DetectionClass::Bed,
        _ => DetectionClass::Person,
    }
}

fn jitter_box(b: &BBox2D, noise: &Option<Normal<f64>>, rng: &mut impl Rng) -> BBox2D {
    let Some(n) = noise else { return *b };
    let (mut x0, mut y0, mut x1, mut y1) =
        (b.x_min + n.sample(rng), b.y_min + n.sample(rng), b.x_max + n.sample(rng), b.y_max + n.sample(rng));
    if x1 - x0 < 1.0 {
        let c = 0.5 * (x0 + x1);
        (x0, x1) = (c - 0.5, c + 0.5);
    }
    if y1 - y0 < 1.0 {
        let c = 0.5 * (y0 + y1);
        (y0, y1) = (c - 0.5, c + 0.5);
    }
    BBox2D { x_min: x0, y_min: y0, x_max: x1, y_max: y1, ..*b }
}

/// Simulated detector: projected object boxes with pixel noise, random misses,
/// spurious boxes, and foot boxes whose bottom edge sits on the projected
/// ground-contact point.
pub fn detect_camera(camera: &CameraModel, world: &[WorldObject], profile: &DetectorProfile, seed: u64) -> Vec<Detection2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (profile.pixel_noise_sigma > 0.0).then(|| Normal::new(0.0, profile.pixel_noise_sigma).unwrap());
    let mut out = Vec::new();
    for obj in world {
        let Some(clean) = project_object_box(camera, obj) else { continue };
        // draw every random number whether or not it is used so streams stay aligned
        let missed = rng.random::<f64>() < profile.miss_rate;
        let foot_roll = rng.random::<f64>();
        let confidence = rng.random_range(0.6..1.0);
        let noisy = jitter_box(&clean, &noise, &mut rng);
        let foot_noise = noise.as_ref().map_or((0.0, 0.0), |n| (n.sample(&mut rng), n.sample(&mut rng)));
        if missed {
            continue;
        }
        out.push(BBox2D { confidence, ..noisy });
        if obj.class == ObjectClass::Person && foot_roll < profile.foot_detection_rate {
            let ground = match camera.project(&Vector3::new(obj.x, obj.y, 0.0)) {
                Ok(g) => g + Vector2::new(foot_noise.0, foot_noise.1),
                Err(_) => continue,
            };
            if !camera.contains_pixel(&ground) {
                continue;
            }
            let half_w = (0.15 * (clean.x_max - clean.x_min)).max(1.0);
            let h = (0.06 * (clean.y_max - clean.y_min)).max(2.0);
            out.push(BBox2D {
                x_min: ground.x - half_w,
                y_min: ground.y - h,
                x_max: ground.x + half_w,
                y_max: ground.y,
                class: DetectionClass::Foot,
                confidence,
            });
        }
    }
    if profile.false_positive_rate > 0.0 {
        let count = Poisson::new(profile.false_positive_rate).unwrap().sample(&mut rng) as usize;
        let (w, h) = (camera.width as f64, camera.height as f64);
        for _ in 0..count {
            let bw = rng.random_range(30.0..120.0);
            let bh = bw * rng.random_range(1.5..3.0);
            let x0 = rng.random_range(0.0..(w - bw).max(1.0));
            let y0 = rng.random_range(0.0..(h - bh).max(1.0));
            out.push(BBox2D {
                x_min: x0,
                y_min: y0,
                x_max: x0 + bw,
                y_max: y0 + bh,
                class: DetectionClass::Person,
                confidence: rng.random_range(0.3..0.7),
            });
        }
    }
    out
}
