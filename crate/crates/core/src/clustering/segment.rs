use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use super::{ClusterError, ClusterParams};
use crate::scene_sim::Ring;

/// Contiguous run of returns on one ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub ring_index: usize,
    pub points: Vec<Vector3<f64>>,
    pub centroid: Vector3<f64>,
    /// Start of the covered azimuth arc, in (-pi, pi].
    pub azimuth_start: f64,
    /// `azimuth_start + width`; may exceed pi when the arc crosses the seam.
    pub azimuth_end: f64,
    pub mean_range: f64,
}

impl Segment {
    pub fn azimuth_width(&self) -> f64 {
        self.azimuth_end - self.azimuth_start
    }

    /// Builds a segment from points, ranges and an azimuth arc.
    pub fn new(ring_index: usize, points: Vec<Vector3<f64>>, ranges: &[f64], azimuth_start: f64, width: f64) -> Self {
        assert!(!points.is_empty() && points.len() == ranges.len());
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let mean_range = ranges.iter().sum::<f64>() / ranges.len() as f64;
        Segment { ring_index, points, centroid, azimuth_start, azimuth_end: azimuth_start + width, mean_range }
    }
}

/// Neighbor radius for a return at range `s`.
pub fn adaptive_epsilon(s: f64, params: &ClusterParams) -> Result<f64, ClusterError> {
    if !(s > 0.0) {
        return Err(ClusterError::NonPositiveRange(s));
    }
    Ok(params.min_points as f64 * params.horizontal_resolution * s)
}

fn eps_unchecked(s: f64, params: &ClusterParams) -> f64 {
    params.min_points as f64 * params.horizontal_resolution * s
}

/// Forward angular distance from `a` to `b` in [0, 2pi).
fn forward_gap(a: f64, b: f64) -> f64 {
    (b - a).rem_euclid(TAU)
}

/// Range-adaptive DBSCAN along one ring. The ring is treated as circular so
/// a segment may span the +-pi seam.
pub fn cluster_ring(ring: &Ring, params: &ClusterParams) -> Vec<Segment> {
    let pts = &ring.points;
    let n = pts.len();
    if n < params.min_points {
        return Vec::new();
    }
    // Two returns at ranges >= s_min and azimuth gap alpha are at least
    // s_min * sin(alpha) apart, so nothing beyond this gap can be a neighbor.
    let ratio = params.min_points as f64 * params.horizontal_resolution;
    let window = if ratio >= 1.0 { PI } else { ratio.asin() } + 1e-12;
    let xyz: Vec<Vector3<f64>> = pts.iter().map(|p| p.xyz()).collect();

    let is_neighbor = |i: usize, j: usize| {
        let eps = eps_unchecked(pts[i].range.min(pts[j].range), params);
        (xyz[i] - xyz[j]).norm_squared() <= eps * eps
    };
    let neighbors = |i: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut fwd = 0;
        for k in 1..n {
            let j = (i + k) % n;
            if forward_gap(pts[i].azimuth, pts[j].azimuth) > window {
                break;
            }
            fwd = k;
            if is_neighbor(i, j) {
                out.push(j);
            }
        }
        for k in 1..n - fwd {
            let j = (i + n - k) % n;
            if forward_gap(pts[j].azimuth, pts[i].azimuth) > window {
                break;
            }
            if is_neighbor(i, j) {
                out.push(j);
            }
        }
        out
    };

    let neigh: Vec<Vec<usize>> = (0..n).map(neighbors).collect();
    let core: Vec<bool> = neigh.iter().map(|v| v.len() + 1 >= params.min_points).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters = 0usize;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        let id = clusters;
        clusters += 1;
        label[seed] = Some(id);
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in &neigh[p] {
                if label[q].is_none() {
                    label[q] = Some(id);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    for (i, l) in label.iter().enumerate() {
        if let Some(l) = l {
            members[*l].push(i);
        }
    }
    members
        .into_iter()
        .map(|idx| {
            // the arc is the complement of the widest empty gap between members
            let m = idx.len();
            let (mut gap, mut start_pos) = (-1.0, 0);
            for k in 0..m {
                let g = if m == 1 { TAU } else { forward_gap(pts[idx[k]].azimuth, pts[idx[(k + 1) % m]].azimuth) };
                if g > gap {
                    gap = g;
                    start_pos = (k + 1) % m;
                }
            }
            let width = (TAU - gap).max(0.0);
            let ordered: Vec<usize> = (0..m).map(|k| idx[(start_pos + k) % m]).collect();
            let points = ordered.iter().map(|&i| xyz[i]).collect();
            let ranges: Vec<f64> = ordered.iter().map(|&i| pts[i].range).collect();
            Segment::new(ring.index, points, &ranges, pts[ordered[0]].azimuth, width)
        })
        .collect()
}

/// Length of the intersection of two azimuth arcs on the circle.
pub fn azimuth_intersection(a: &Segment, b: &Segment) -> f64 {
    let overlap = |lo: f64, hi: f64| (a.azimuth_end.min(hi) - a.azimuth_start.max(lo)).max(0.0);
    let total: f64 = [-TAU, 0.0, TAU]
        .iter()
        .map(|shift| overlap(b.azimuth_start + shift, b.azimuth_end + shift))
        .sum();
    total.min(a.azimuth_width()).min(b.azimuth_width())
}

/// Distance between two segments: centroid distance normalized by the ring
/// spacing at the nearer segment, plus one minus the normalized azimuth
/// overlap. Pairs failing the ring-gap or centroid-distance gate are infinite.
pub fn segment_distance(a: &Segment, b: &Segment, params: &ClusterParams) -> f64 {
    if a.ring_index.abs_diff(b.ring_index) > params.max_ring_gap {
        return f64::INFINITY;
    }
    let d = (a.centroid - b.centroid).norm();
    if d > params.max_centroid_distance {
        return f64::INFINITY;
    }
    let d_norm = d / (a.mean_range.min(b.mean_range) * params.vertical_resolution);
    let min_width = a
        .azimuth_width()
        .max(params.horizontal_resolution)
        .min(b.azimuth_width().max(params.horizontal_resolution));
    let phi_norm = (1.0 - azimuth_intersection(a, b) / min_width).max(0.0);
    d_norm + phi_norm
}
