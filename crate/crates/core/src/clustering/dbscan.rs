use std::collections::HashMap;

use nalgebra::Vector3;

use super::Cluster;
use crate::par;

/// Uniform hash grid over 3D points with cell size equal to the query radius.
pub struct GridIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        GridIndex { points, cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    /// Calls `f` with every point index within `radius` (<= cell size) of `p`.
    pub fn for_each_within(&self, p: &Vector3<f64>, radius: f64, mut f: impl FnMut(usize)) {
        let (kx, ky, kz) = Self::key(p, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            if (self.points[j as usize] - p).norm_squared() <= r2 {
                                f(j as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn count_within(&self, p: &Vector3<f64>, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(p, radius, |_| n += 1);
        n
    }
}

/// Point-level DBSCAN labels (`None` = noise). Neighborhoods include the
/// point itself. Clusters are numbered in order of their lowest-index core
/// point and each is fully expanded before the next starts, so a border point
/// reachable from two clusters joins the earlier one.
pub fn dbscan_labels(points: &[Vector3<f64>], epsilon: f64, min_points: usize) -> Vec<Option<usize>> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = points.len();
    let index = GridIndex::new(points, epsilon);
    let core: Vec<bool> = par::map(points, |p| index.count_within(p, epsilon) >= min_points);
    let mut label = vec![None; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        label[seed] = Some(id);
        stack.push(seed);
        while let Some(p) = stack.pop() {
            index.for_each_within(&points[p], epsilon, |q| {
                if label[q].is_none() {
                    label[q] = Some(id);
                    if core[q] {
                        stack.push(q);
                    }
                }
            });
        }
    }
    label
}

/// Standard DBSCAN with a fixed Euclidean radius. Noise points are dropped.
pub fn dbscan_baseline(points: &[Vector3<f64>], epsilon: f64, min_points: usize) -> Vec<Cluster> {
    let labels = dbscan_labels(points, epsilon, min_points);
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); count];
    for (p, l) in points.iter().zip(&labels) {
        if let Some(l) = l {
            groups[*l].push(*p);
        }
    }
    groups.into_iter().map(Cluster::from_points).collect()
}
