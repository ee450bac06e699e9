//! Per-node fusion: drop returns outside a static region of interest, then
//! attach camera labels to LiDAR clusters.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::camera_geometry::{ground_pixels, BBox2D, CameraModel, FootAssociationParams};
use crate::clustering::Cluster;
use crate::scene_sim::{Room, RingScan};
use crate::{DetectionClass, ObjectClass};

/// Static binary keep-mask over the floor plane. Row 0 is the row nearest
/// `origin` in y; within a row, cells run along +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl RoiGrid {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize, cells: Vec<bool>) -> Result<Self, String> {
        if !(cell_size > 0.0) {
            return Err("cell size must be positive".into());
        }
        if width == 0 || height == 0 {
            return Err("grid must be non-empty".into());
        }
        if cells.len() != width * height {
            return Err(format!("expected {} cells, got {}", width * height, cells.len()));
        }
        Ok(RoiGrid { origin, cell_size, width, height, cells })
    }

    pub fn filled(origin: [f64; 2], cell_size: f64, width: usize, height: usize, value: bool) -> Self {
        RoiGrid::new(origin, cell_size, width, height, vec![value; width * height]).expect("valid grid")
    }

    /// Cells whose center is inside the room and at least `margin` from every wall.
    pub fn from_room(room: &Room, cell_size: f64, margin: f64) -> Self {
        let xs = room.polygon.iter().map(|p| p[0]);
        let ys = room.polygon.iter().map(|p| p[1]);
        let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
        let width = ((x1 - x0) / cell_size).ceil().max(1.0) as usize;
        let height = ((y1 - y0) / cell_size).ceil().max(1.0) as usize;
        let walls = room.wall_segments();
        let mut cells = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let cx = x0 + (c as f64 + 0.5) * cell_size;
                let cy = y0 + (r as f64 + 0.5) * cell_size;
                let clear = walls.iter().all(|&(a, b)| point_segment_distance([cx, cy], a, b) >= margin);
                cells.push(room.contains(cx, cy) && clear);
            }
        }
        RoiGrid { origin: [x0, y0], cell_size, width, height, cells }
    }

    pub fn keeps(&self, x: f64, y: f64) -> bool {
        let c = ((x - self.origin[0]) / self.cell_size).floor();
        let r = ((y - self.origin[1]) / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return false;
        }
        self.cells[r as usize * self.width + c as usize]
    }

    /// Text form: `origin_x origin_y cell_size width height`, then one line
    /// of `0`/`1` per row.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {} {}\n", self.origin[0], self.origin[1], self.cell_size, self.width, self.height);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|&k| if k { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or("empty ROI file")?.split_whitespace().collect();
        if header.len() != 5 {
            return Err("ROI header must be `origin_x origin_y cell_size width height`".into());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("ROI header: {e}"));
        let int = |s: &str| s.parse::<usize>().map_err(|e| format!("ROI header: {e}"));
        let (ox, oy, cell, w, h) = (num(header[0])?, num(header[1])?, num(header[2])?, int(header[3])?, int(header[4])?);
        let mut cells = Vec::with_capacity(w * h);
        for (r, line) in lines.enumerate() {
            let row: Vec<bool> = line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(format!("ROI row {}: unexpected {other:?}", r + 1)),
                })
                .collect::<Result<_, _>>()?;
            if row.len() != w {
                return Err(format!("ROI row {} has {} cells, expected {w}", r + 1, row.len()));
            }
            cells.extend(row);
        }
        RoiGrid::new([ox, oy], cell, w, h, cells)
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * ex).hypot(p[1] - a[1] - t * ey)
}

/// Keeps returns whose floor cell is in the ROI and whose height lies in `z_band`.
pub fn filter_roi(scan: &RingScan, grid: &RoiGrid, z_band: [f64; 2]) -> RingScan {
    let mut out = scan.clone();
    for ring in &mut out.rings {
        ring.points.retain(|p| {
            let [x, y, z] = p.position;
            z >= z_band[0] && z <= z_band[1] && grid.keeps(x, y)
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Fused,
    LidarOnly,
    CameraOnly,
}

/// An image box with the floor position recovered from its ground-contact pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocatedBox {
    pub bbox: BBox2D,
    pub position: Vector2<f64>,
    /// True when the ground pixel came from a foot box.
    pub from_foot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledObject {
    pub class: ObjectClass,
    pub position: Vector2<f64>,
    /// Index into the cluster list the object was built from.
    pub cluster: Option<usize>,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub overlap_weight: f64,
    /// Per meter.
    pub distance_weight: f64,
    pub gate: f64,
    /// Camera-only objects closer than this to another object are dropped.
    pub duplicate_gate: f64,
    pub z_band: [f64; 2],
    pub foot: FootParamsSerde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootParamsSerde {
    pub cosine_threshold: f64,
}

impl From<FootParamsSerde> for FootAssociationParams {
    fn from(p: FootParamsSerde) -> Self {
        FootAssociationParams { cosine_threshold: p.cosine_threshold }
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            overlap_weight: 1.0,
            distance_weight: 1.0,
            gate: 1.8,
            duplicate_gate: 0.5,
            z_band: [0.1, 2.2],
            foot: FootParamsSerde { cosine_threshold: FootAssociationParams::default().cosine_threshold },
        }
    }
}

/// Recovers floor positions for person and bed boxes. Feet are paired with
/// their parents and supply the ground pixel when available.
pub fn locate_boxes(camera: &CameraModel, detections: &[BBox2D], params: &FootAssociationParams) -> Vec<LocatedBox> {
    let parents: Vec<BBox2D> = detections.iter().filter(|d| d.class != DetectionClass::Foot).copied().collect();
    let feet: Vec<BBox2D> = detections.iter().filter(|d| d.class == DetectionClass::Foot).copied().collect();
    let pixels = match camera.vanishing_point_z() {
        Ok(vz) => ground_pixels(&feet, &parents, &vz, params),
        Err(_) => parents.iter().map(|p| (p.bottom_center(), false)).collect(),
    };
    parents
        .into_iter()
        .zip(pixels)
        .filter_map(|(bbox, (px, from_foot))| {
            let position = camera.recover_ground_position(px, 0.0).ok()?;
            Some(LocatedBox { bbox, position, from_foot })
        })
        .collect()
}

/// Pixel bounds of the cluster points in front of the camera.
pub fn project_cluster_box(camera: &CameraModel, cluster: &Cluster) -> Option<BBox2D> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for p in &cluster.points {
        if camera.depth(p) <= 0.1 {
            continue;
        }
        if let Ok(px) = camera.project(p) {
            any = true;
            x0 = x0.min(px.x);
            y0 = y0.min(px.y);
            x1 = x1.max(px.x);
            y1 = y1.max(px.y);
        }
    }
    // a single column of points still gets a one-pixel extent
    any.then(|| BBox2D::new(x0 - 0.5, y0 - 0.5, x1 + 0.5, y1 + 0.5, DetectionClass::Person))
}

fn centroid_xy(c: &Cluster) -> Vector2<f64> {
    Vector2::new(c.centroid.x, c.centroid.y)
}

/// Association cost of every (box, cluster) pair for one camera.
pub fn association_costs(boxes: &[LocatedBox], clusters: &[Cluster], camera: &CameraModel, params: &FusionParams) -> Vec<Vec<f64>> {
    let projected: Vec<Option<BBox2D>> = clusters.iter().map(|c| project_cluster_box(camera, c)).collect();
    boxes
        .iter()
        .map(|b| {
            clusters
                .iter()
                .zip(&projected)
                .map(|(c, proj)| {
                    let overlap = proj.as_ref().map_or(0.0, |p| b.bbox.overlap_ratio(p));
                    params.overlap_weight * (1.0 - overlap) + params.distance_weight * (b.position - centroid_xy(c)).norm()
                })
                .collect()
        })
        .collect()
}

/// Hungarian association of boxes from one camera with clusters.
/// Returns `(box, cluster, cost)` for pairs within the gate.
pub fn match_boxes_clusters(
    boxes: &[LocatedBox],
    clusters: &[Cluster],
    camera: &CameraModel,
    params: &FusionParams,
) -> Vec<(usize, usize, f64)> {
    if boxes.is_empty() || clusters.is_empty() {
        return Vec::new();
    }
    assignment::solve_gated(&association_costs(boxes, clusters, camera, params), params.gate)
}

/// Labels clusters from a single camera.
pub fn associate_boxes_clusters(
    boxes: &[LocatedBox],
    clusters: &[Cluster],
    camera: &CameraModel,
    params: &FusionParams,
) -> Vec<LabeledObject> {
    fuse_views(clusters, &[(camera, boxes)], params)
}

/// Labels clusters using every camera of a node. Each cluster takes the class
/// of its cheapest match over all cameras; unmatched boxes become camera-only
/// objects unless they duplicate an existing object.
pub fn fuse_views(clusters: &[Cluster], views: &[(&CameraModel, &[LocatedBox])], params: &FusionParams) -> Vec<LabeledObject> {
    let mut best: Vec<Option<(f64, ObjectClass)>> = vec![None; clusters.len()];
    let mut leftovers: Vec<LocatedBox> = Vec::new();
    for (camera, boxes) in views {
        let matches = match_boxes_clusters(boxes, clusters, camera, params);
        let mut used = vec![false; boxes.len()];
        for &(b, c, cost) in &matches {
            used[b] = true;
            let class = boxes[b].bbox.class.object_class().unwrap_or(ObjectClass::Unknown);
            if best[c].is_none_or(|(prev, _)| cost < prev) {
                best[c] = Some((cost, class));
            }
        }
        leftovers.extend(boxes.iter().zip(used).filter(|(_, u)| !u).map(|(b, _)| *b));
    }

    let mut out: Vec<LabeledObject> = clusters
        .iter()
        .enumerate()
        .map(|(i, c)| match best[i] {
            Some((_, class)) => LabeledObject { class, position: centroid_xy(c), cluster: Some(i), source: Source::Fused },
            None => LabeledObject { class: ObjectClass::Unknown, position: centroid_xy(c), cluster: Some(i), source: Source::LidarOnly },
        })
        .collect();
    for b in leftovers {
        let duplicate = out
            .iter()
            .any(|o| o.source != Source::LidarOnly && (o.position - b.position).norm() < params.duplicate_gate);
        if !duplicate {
            out.push(LabeledObject {
                class: b.bbox.class.object_class().unwrap_or(ObjectClass::Unknown),
                position: b.position,
                cluster: None,
                source: Source::CameraOnly,
            });
        }
    }
    out
}

/// Floor-plane centroid of 3D points; convenience for tests and tooling.
pub fn xy(p: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(p.x, p.y)
}
