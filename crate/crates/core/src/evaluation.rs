//! Detection metrics and the clustering runtime benchmark.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, FORBIDDEN};
use crate::clustering::{dbscan_baseline, hierarchical_clustering, ClusterParams};
use crate::scene_sim::{scan_lidar, GroundTruthFrame, GroundTruthObject, LidarModel, RingScan, Room, StaticMap, WorldObject};
use crate::{ObjectClass, Timestamp};

/// A class-labeled floor position, either predicted or true.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
}

impl PlacedObject {
    pub fn new(class: ObjectClass, x: f64, y: f64) -> Self {
        PlacedObject { class, x, y }
    }

    fn distance(&self, other: &PlacedObject) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<&GroundTruthObject> for PlacedObject {
    fn from(o: &GroundTruthObject) -> Self {
        PlacedObject::new(o.class, o.x, o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Sum of matched distances, meters.
    pub sum_matched_distance: f64,
}

impl std::ops::AddAssign for FrameScore {
    fn add_assign(&mut self, o: FrameScore) {
        self.true_positives += o.true_positives;
        self.false_positives += o.false_positives;
        self.false_negatives += o.false_negatives;
        self.sum_matched_distance += o.sum_matched_distance;
    }
}

/// A true-positive pair of prediction and ground-truth indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub prediction: usize,
    pub truth: usize,
    pub distance: f64,
}

/// Minimum-distance one-to-one matching within `d_match`. Unknown
/// predictions may match any class.
pub fn match_pairs(predictions: &[PlacedObject], truth: &[PlacedObject], d_match: f64) -> Vec<MatchedPair> {
    if predictions.is_empty() || truth.is_empty() {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = predictions
        .iter()
        .map(|p| {
            truth
                .iter()
                .map(|g| {
                    let d = p.distance(g);
                    if p.class.compatible(g.class) && d <= d_match {
                        d
                    } else {
                        FORBIDDEN
                    }
                })
                .collect()
        })
        .collect();
    assignment::solve_gated(&cost, d_match)
        .into_iter()
        .map(|(prediction, truth, distance)| MatchedPair { prediction, truth, distance })
        .collect()
}

pub fn match_frame(predictions: &[PlacedObject], truth: &[PlacedObject], d_match: f64) -> FrameScore {
    let pairs = match_pairs(predictions, truth, d_match);
    score_from_pairs(&pairs, predictions.len(), truth.len())
}

pub fn score_from_pairs(pairs: &[MatchedPair], predictions: usize, truth: usize) -> FrameScore {
    FrameScore {
        true_positives: pairs.len(),
        false_positives: predictions - pairs.len(),
        false_negatives: truth - pairs.len(),
        sum_matched_distance: pairs.iter().map(|p| p.distance).sum(),
    }
}

/// Pooled metrics; `None` marks an undefined ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub avg_de: Option<f64>,
    pub frames: usize,
}

fn ratio(num: f64, den: usize) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

/// Micro-averages the scores: counts are pooled before dividing.
pub fn aggregate(scores: &[FrameScore]) -> Metrics {
    let mut total = FrameScore::default();
    for s in scores {
        total += *s;
    }
    let tp = total.true_positives;
    Metrics {
        precision: ratio(tp as f64, tp + total.false_positives),
        recall: ratio(tp as f64, tp + total.false_negatives),
        avg_de: ratio(total.sum_matched_distance, tp),
        frames: scores.len(),
    }
}

/// Fixed six-decimal form, or `undefined`.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "undefined".to_string(),
    }
}

/// Ground truth at `t`, linearly interpolated between the bracketing frames.
/// Objects missing from either frame are taken from the nearer one.
pub fn interpolate_ground_truth(frames: &[GroundTruthFrame], t: f64) -> Option<GroundTruthFrame> {
    let first = frames.first()?;
    let last = frames.last()?;
    if t <= first.t {
        return Some(first.clone());
    }
    if t >= last.t {
        return Some(last.clone());
    }
    let k = frames.partition_point(|f| f.t <= t);
    let (a, b) = (&frames[k - 1], &frames[k]);
    let u = (t - a.t) / (b.t - a.t);
    if u.abs() < 1e-12 {
        return Some(a.clone());
    }
    let near = if u < 0.5 { a } else { b };
    let objects = near
        .objects
        .iter()
        .map(|o| {
            let pa = a.objects.iter().find(|p| p.id == o.id);
            let pb = b.objects.iter().find(|p| p.id == o.id);
            match (pa, pb) {
                (Some(pa), Some(pb)) => GroundTruthObject {
                    x: pa.x + u * (pb.x - pa.x),
                    y: pa.y + u * (pb.y - pa.y),
                    yaw: pa.yaw + u * crate::scene_sim::normalize_angle(pb.yaw - pa.yaw),
                    v: pa.v + u * (pb.v - pa.v),
                    omega: pa.omega + u * (pb.omega - pa.omega),
                    ..o.clone()
                },
                _ => o.clone(),
            }
        })
        .collect();
    Some(GroundTruthFrame { t, objects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub point_count: usize,
    pub method: String,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub repetitions: usize,
}

/// A room scan with roughly `target_points` returns, made by choosing the
/// azimuth step of a 16-ring sensor.
pub fn bench_scan(target_points: usize, seed: u64) -> (RingScan, LidarModel) {
    let base = LidarModel::default().at(6.0, 4.0, 1.0);
    let rings = base.ring_elevations.len();
    if target_points == 0 {
        return (RingScan::empty(Timestamp::ZERO, &base), base);
    }
    let columns = target_points.div_ceil(rings).max(8);
    let model = LidarModel { horizontal_resolution: std::f64::consts::TAU / columns as f64, ..base };
    let room = Room::rectangle(12.0, 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world: Vec<WorldObject> = (0..8)
        .map(|i| WorldObject::person(i + 1, rng.random_range(1.0..11.0), rng.random_range(1.0..7.0), 0.0, 0.0))
        .filter(|p| (p.x - 6.0).hypot(p.y - 4.0) > 1.0)
        .collect();
    world.push(WorldObject::bed(100, 2.5, 6.5, 0.0));
    let scan = scan_lidar(&model, &world, &StaticMap::from_room(&room), Timestamp::ZERO);
    (scan, model)
}

fn summarize(mut samples: Vec<f64>) -> (f64, f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    samples.sort_by(f64::total_cmp);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let median = samples[samples.len() / 2];
    let rank = ((0.95 * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    (mean, median, samples[rank - 1])
}

pub fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Times both clustering methods on identical scans of each size.
/// The baseline is point-level DBSCAN with the given radius and core size.
pub fn benchmark_clustering(
    sizes: &[usize],
    repetitions: usize,
    dbscan_epsilon: f64,
    dbscan_min_points: usize,
    seed: u64,
) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &size in sizes {
        let (scan, model) = bench_scan(size, seed);
        let points: Vec<Vector3<f64>> = scan.points().map(|p| p.xyz()).collect();
        let params = ClusterParams::for_lidar(&model);
        let mut hier = Vec::with_capacity(repetitions);
        let mut base = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let (c, ms) = time_ms(|| hierarchical_clustering(&scan, &params));
            std::hint::black_box(c);
            hier.push(ms);
            let (c, ms) = time_ms(|| dbscan_baseline(&points, dbscan_epsilon, dbscan_min_points));
            std::hint::black_box(c);
            base.push(ms);
        }
        for (method, samples) in [("hierarchical", hier), ("dbscan", base)] {
            let (mean_ms, median_ms, p95_ms) = summarize(samples);
            rows.push(BenchRow { point_count: points.len(), method: method.into(), mean_ms, median_ms, p95_ms, repetitions });
        }
    }
    rows
}
