//! Point-cloud clustering.
//!
//! The hierarchical method first runs a range-adaptive DBSCAN along each
//! ring separately, producing [`Segment`]s, then links segments across rings
//! with a distance normalized by the ring spacing and the azimuth overlap.
//! [`dbscan_baseline`] is the usual point-level DBSCAN with a fixed radius.

mod dbscan;
mod hierarchical;
mod segment;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_sim::{LidarModel, RingScan};

pub use dbscan::{dbscan_baseline, dbscan_labels, GridIndex};
pub use hierarchical::{cluster_segments, hierarchical_clustering};
pub use segment::{adaptive_epsilon, azimuth_intersection, cluster_ring, segment_distance, Segment};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
}

/// Parameters of the hierarchical method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// DBSCAN core size, counting the point itself.
    pub min_points: usize,
    /// LiDAR azimuth step, radians.
    pub horizontal_resolution: f64,
    /// LiDAR ring spacing, radians.
    pub vertical_resolution: f64,
    /// Segments closer than this are linked.
    pub epsilon_custom: f64,
    /// Pairs further apart in ring index are never linked.
    pub max_ring_gap: usize,
    /// Pairs whose centroids are further apart (meters) are never linked.
    pub max_centroid_distance: f64,
}

impl ClusterParams {
    pub fn for_lidar(model: &LidarModel) -> Self {
        ClusterParams {
            min_points: 4,
            horizontal_resolution: model.horizontal_resolution,
            vertical_resolution: model.vertical_resolution(),
            epsilon_custom: 1.5,
            max_ring_gap: 3,
            max_centroid_distance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_points < 2 {
            return Err("min_points must be at least 2".into());
        }
        if !(self.epsilon_custom > 0.0) {
            return Err("epsilon_custom must be positive".into());
        }
        if !(self.horizontal_resolution > 0.0 && self.vertical_resolution > 0.0) {
            return Err("resolutions must be positive".into());
        }
        Ok(())
    }
}

/// A group of points treated as one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Member segments (empty for point-level DBSCAN clusters).
    pub segments: Vec<Segment>,
    pub points: Vec<Vector3<f64>>,
    pub centroid: Vector3<f64>,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Cluster {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        assert!(!points.is_empty(), "cluster needs at least one point");
        let mut min = points[0];
        let mut max = points[0];
        let mut sum = Vector3::zeros();
        for p in &points {
            min = min.inf(p);
            max = max.sup(p);
            sum += p;
        }
        let centroid = sum / points.len() as f64;
        Cluster { segments: Vec::new(), points, centroid, min, max }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        let points = segments.iter().flat_map(|s| s.points.iter().copied()).collect();
        Cluster { segments, ..Cluster::from_points(points) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Clustering configuration used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusteringMethod {
    Hierarchical(ClusterParams),
    Dbscan { epsilon: f64, min_points: usize },
}

impl ClusteringMethod {
    pub fn run(&self, scan: &RingScan) -> Vec<Cluster> {
        match self {
            ClusteringMethod::Hierarchical(p) => hierarchical_clustering(scan, p),
            ClusteringMethod::Dbscan { epsilon, min_points } => {
                let points: Vec<Vector3<f64>> = scan.points().map(|p| p.xyz()).collect();
                dbscan_baseline(&points, *epsilon, *min_points)
            }
        }
    }
}
