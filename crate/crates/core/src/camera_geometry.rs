//! Pinhole camera utilities: projection through a 3x4 matrix, the vertical
//! vanishing point, and closed-form recovery of a world position on a
//! horizontal plane from a single pixel.

use nalgebra::{Matrix3, Matrix3x4, Rotation3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::DetectionClass;

const PLANE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point lies on the camera plane (projective depth {0:e})")]
    PointAtCameraPlane(f64),
    #[error("z-axis parallel to image plane (h33 = {0:e})")]
    ZAxisParallel(f64),
    #[error("degenerate view of plane z = {z_w} (determinant {det:e})")]
    DegenerateGroundView { z_w: f64, det: f64 },
    #[error("rotation is not orthonormal with det +1")]
    InvalidRotation,
    #[error("projection matrix third row is zero")]
    ZeroThirdRow,
    #[error("calibration file: {0}")]
    Parse(String),
}

/// Intrinsics of an ideal pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// A calibrated camera. `h` maps homogeneous world points to homogeneous pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    h: Matrix3x4<f64>,
    pub width: u32,
    pub height: u32,
    /// Present when the camera was built from intrinsics and pose rather
    /// than loaded as a bare projection matrix.
    krt: Option<(Matrix3<f64>, Matrix3<f64>, Vector3<f64>)>,
}

impl CameraModel {
    /// `H = K [R t]`, with `R` the world-to-camera rotation.
    pub fn from_krt(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidRotation);
        }
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        let h = k * rt;
        let cam = CameraModel { h, width, height, krt: Some((k, r, t)) };
        cam.check_third_row()?;
        Ok(cam)
    }

    pub fn from_projection(h: Matrix3x4<f64>, width: u32, height: u32) -> Result<Self, GeometryError> {
        let cam = CameraModel { h, width, height, krt: None };
        cam.check_third_row()?;
        Ok(cam)
    }

    /// Camera at `position` looking along heading `yaw` (radians from world +x,
    /// counter-clockwise) tilted down by `pitch` radians. Image x points right,
    /// image y points down.
    pub fn from_pose(
        intrinsics: &Intrinsics,
        position: Vector3<f64>,
        yaw: f64,
        pitch: f64,
    ) -> Result<Self, GeometryError> {
        let forward = Vector3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), -pitch.sin());
        let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        // re-orthonormalize against rounding
        let r = Rotation3::from_matrix(&r).into_inner();
        let t = -(r * position);
        Self::from_krt(intrinsics.matrix(), r, t, intrinsics.width, intrinsics.height)
    }

    fn check_third_row(&self) -> Result<(), GeometryError> {
        if self.h.row(2).iter().all(|v| *v == 0.0) {
            Err(GeometryError::ZeroThirdRow)
        } else {
            Ok(())
        }
    }

    pub fn projection_matrix(&self) -> &Matrix3x4<f64> {
        &self.h
    }

    pub fn intrinsics_pose(&self) -> Option<&(Matrix3<f64>, Matrix3<f64>, Vector3<f64>)> {
        self.krt.as_ref()
    }

    /// Projective depth of a world point (positive in front of the camera
    /// for cameras built from a pose).
    pub fn depth(&self, world: &Vector3<f64>) -> f64 {
        (self.h.row(2) * world.push(1.0))[0]
    }

    pub fn project(&self, world: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        let p = self.h * Vector4::new(world.x, world.y, world.z, 1.0);
        if p.z.abs() < PLANE_EPS {
            return Err(GeometryError::PointAtCameraPlane(p.z));
        }
        Ok(Vector2::new(p.x / p.z, p.y / p.z))
    }

    pub fn vanishing_point_z(&self) -> Result<Vector2<f64>, GeometryError> {
        let h33 = self.h[(2, 2)];
        if h33.abs() < PLANE_EPS {
            return Err(GeometryError::ZAxisParallel(h33));
        }
        Ok(Vector2::new(self.h[(0, 2)] / h33, self.h[(1, 2)] / h33))
    }

    /// World `(x_w, y_w)` of the point at height `z_w` seen at `pixel`.
    pub fn recover_ground_position(&self, pixel: Vector2<f64>, z_w: f64) -> Result<Vector2<f64>, GeometryError> {
        let h = |r: usize, c: usize| self.h[(r - 1, c - 1)];
        let (xp, yp) = (pixel.x, pixel.y);
        let a11 = h(3, 1) * xp - h(1, 1);
        let a12 = h(3, 2) * xp - h(1, 2);
        let a21 = h(3, 1) * yp - h(2, 1);
        let a22 = h(3, 2) * yp - h(2, 2);
        let b1 = (h(1, 3) - h(3, 3) * xp) * z_w + h(1, 4) - h(3, 4) * xp;
        let b2 = (h(2, 3) - h(3, 3) * yp) * z_w + h(2, 4) - h(3, 4) * yp;
        let det = a11 * a22 - a12 * a21;
        let scale = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22;
        if scale == 0.0 || det.abs() <= 1e-9 * scale {
            return Err(GeometryError::DegenerateGroundView { z_w, det });
        }
        Ok(Vector2::new((b1 * a22 - b2 * a12) / det, (b2 * a11 - b1 * a21) / det))
    }

    pub fn contains_pixel(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Plain-text calibration: three rows of four numbers, then `width height`.
    pub fn to_calibration_string(&self) -> String {
        let mut out = String::new();
        for r in 0..3 {
            let row: Vec<String> = (0..4).map(|c| format!("{:.17e}", self.h[(r, c)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str(&format!("{} {}\n", self.width, self.height));
        out
    }

    pub fn from_calibration_str(text: &str) -> Result<Self, GeometryError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut h = Matrix3x4::zeros();
        for r in 0..3 {
            let line = lines.next().ok_or_else(|| GeometryError::Parse(format!("missing row {}", r + 1)))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| GeometryError::Parse(format!("row {}: {e}", r + 1))))
                .collect::<Result<_, _>>()?;
            if vals.len() != 4 {
                return Err(GeometryError::Parse(format!("row {} has {} values, expected 4", r + 1, vals.len())));
            }
            for (c, v) in vals.into_iter().enumerate() {
                h[(r, c)] = v;
            }
        }
        let size = lines.next().ok_or_else(|| GeometryError::Parse("missing image size".into()))?;
        let dims: Vec<u32> = size
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| GeometryError::Parse(format!("image size: {e}"))))
            .collect::<Result<_, _>>()?;
        if dims.len() != 2 {
            return Err(GeometryError::Parse("image size must be `width height`".into()));
        }
        Self::from_projection(h, dims[0], dims[1])
    }
}

/// Axis-aligned image box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class: DetectionClass,
    pub confidence: f64,
}

/// Detector output is a labeled box.
pub type Detection2D = BBox2D;

impl BBox2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class: DetectionClass) -> Self {
        BBox2D { x_min, y_min, x_max, y_max, class, confidence: 1.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Support point of the box: middle of its bottom edge.
    pub fn bottom_center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.x_min + self.x_max), self.y_max)
    }

    pub fn intersection_area(&self, other: &BBox2D) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection area over the smaller of the two areas.
    pub fn overlap_ratio(&self, other: &BBox2D) -> f64 {
        let denom = self.area().min(other.area());
        if denom <= 0.0 {
            return 0.0;
        }
        (self.intersection_area(other) / denom).clamp(0.0, 1.0)
    }
}

/// Cosine of the angle between `from -> a` and `from -> b`.
pub fn cosine_from(from: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let (u, v) = (a - from, b - from);
    let n = u.norm() * v.norm();
    if n == 0.0 {
        1.0
    } else {
        (u.dot(&v) / n).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FootAssociationParams {
    pub cosine_threshold: f64,
}

impl Default for FootAssociationParams {
    fn default() -> Self {
        FootAssociationParams { cosine_threshold: 0.95 }
    }
}

/// Pairing score of a foot with a candidate parent, or `None` when the pair
/// is inadmissible (no overlap or the boxes are not aligned with `v_z`).
pub fn foot_parent_score(foot: &BBox2D, parent: &BBox2D, v_z: &Vector2<f64>, params: &FootAssociationParams) -> Option<f64> {
    let overlap = foot.overlap_ratio(parent);
    let cosine = cosine_from(v_z, &foot.center(), &parent.center());
    if overlap <= 0.0 || cosine < params.cosine_threshold {
        None
    } else {
        Some(overlap + cosine)
    }
}

/// Pairs each foot box with at most one parent box (and vice versa) by
/// maximizing overlap ratio plus the vanishing-point cosine.
pub fn associate_foot_to_parent(
    feet: &[BBox2D],
    parents: &[BBox2D],
    v_z: &Vector2<f64>,
    params: &FootAssociationParams,
) -> Vec<(usize, usize)> {
    if feet.is_empty() || parents.is_empty() {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = feet
        .iter()
        .map(|f| {
            parents
                .iter()
                .map(|p| foot_parent_score(f, p, v_z, params).map_or(assignment::FORBIDDEN, |s| -s))
                .collect()
        })
        .collect();
    assignment::solve_gated(&cost, 0.0)
        .into_iter()
        .map(|(f, p, _)| (f, p))
        .collect()
}

/// Ground-contact pixel for every parent box.
///
/// A matched foot gives its bottom-center. Extra feet that were left
/// unmatched but whose best admissible parent is this one are averaged in.
/// Parents without feet fall back to their own bottom-center. The flag is
/// true when the pixel came from at least one foot.
pub fn ground_pixels(
    feet: &[BBox2D],
    parents: &[BBox2D],
    v_z: &Vector2<f64>,
    params: &FootAssociationParams,
) -> Vec<(Vector2<f64>, bool)> {
    let matches = associate_foot_to_parent(feet, parents, v_z, params);
    let mut evidence: Vec<Vec<Vector2<f64>>> = vec![Vec::new(); parents.len()];
    let mut foot_used = vec![false; feet.len()];
    for &(f, p) in &matches {
        evidence[p].push(feet[f].bottom_center());
        foot_used[f] = true;
    }
    for (f, foot) in feet.iter().enumerate().filter(|(f, _)| !foot_used[*f]) {
        let best = parents
            .iter()
            .enumerate()
            .filter_map(|(p, parent)| foot_parent_score(foot, parent, v_z, params).map(|s| (p, s)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((p, _)) = best {
            if !evidence[p].is_empty() {
                evidence[p].push(feet[f].bottom_center());
            }
        }
    }
    parents
        .iter()
        .zip(evidence)
        .map(|(parent, ev)| {
            if ev.is_empty() {
                (parent.bottom_center(), false)
            } else {
                let sum: Vector2<f64> = ev.iter().sum();
                (sum / ev.len() as f64, true)
            }
        })
        .collect()
}
