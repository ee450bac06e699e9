//! Experiment runners: per-node local perception, the delay study over the
//! simulated network, the clustering benchmark and raw frame dumps.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::camera_geometry::{CameraModel, Detection2D, FootAssociationParams, GeometryError};
use crate::clustering::{ClusterParams, ClusteringMethod};
use crate::evaluation::{
    aggregate, benchmark_clustering, format_metric, match_pairs, score_from_pairs, BenchRow, FrameScore, Metrics,
    PlacedObject,
};
use crate::global_fusion::{FusionMethod, GlobalFusion, GlobalTrack, Inbox};
use crate::local_fusion::{filter_roi, fuse_views, locate_boxes, LabeledObject, RoiGrid, Source};
use crate::scenario::ScenarioConfig;
use crate::scene_sim::{
    detect_camera, scan_lidar, write_ground_truth, GroundTruthFrame, HitLabel, LidarModel, RingScan, SceneConfig,
    StaticMap, WorldObject,
};
use crate::tracking::{StampedObjectList, Tracker};
use crate::transport::{LatencyModel, NetworkSim};
use crate::{par, Timestamp};

/// Ground-truth yaw rates below this count as straight-line motion.
pub const STRAIGHT_YAW_RATE: f64 = 1e-3;
/// Ground-truth speeds above this count as moving.
pub const MOVING_SPEED: f64 = 0.05;
pub const PROPOSED: &str = "proposed";
const ROI_CELL: f64 = 0.1;
const ROI_WALL_MARGIN: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("camera model: {0}")]
    Geometry(#[from] GeometryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<String> for ExperimentError {
    fn from(s: String) -> Self {
        ExperimentError::Config(s)
    }
}

/// Deterministic seed derivation.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// A sensor node ready to run.
pub struct NodeRuntime {
    pub id: u32,
    pub lidar: LidarModel,
    pub cameras: Vec<CameraModel>,
    pub roi: RoiGrid,
    pub map: StaticMap,
}

pub fn build_nodes(cfg: &ScenarioConfig, scene: &SceneConfig) -> Result<Vec<NodeRuntime>, ExperimentError> {
    let roi = RoiGrid::from_room(&scene.room, ROI_CELL, ROI_WALL_MARGIN);
    let map = StaticMap::from_room(&scene.room);
    cfg.nodes
        .iter()
        .map(|n| {
            Ok(NodeRuntime {
                id: n.id,
                lidar: n.lidar.clone(),
                cameras: n.cameras.iter().map(|c| c.model()).collect::<Result<_, _>>()?,
                roi: roi.clone(),
                map: map.clone(),
            })
        })
        .collect()
}

/// The proposed method first, then each configured DBSCAN variant.
pub fn local_methods(cfg: &ScenarioConfig, lidar: &LidarModel) -> Vec<(String, ClusteringMethod)> {
    let mut params = ClusterParams::for_lidar(lidar);
    if let Some(e) = cfg.epsilon_custom {
        params.epsilon_custom = e;
    }
    let mut out = vec![(PROPOSED.to_string(), ClusteringMethod::Hierarchical(params))];
    for v in &cfg.dbscan_variants {
        out.push((v.name.clone(), ClusteringMethod::Dbscan { epsilon: v.epsilon, min_points: v.min_points }));
    }
    out
}

/// What one node perceives in one frame.
pub struct NodeSensing {
    pub scan: RingScan,
    pub detections: Vec<Vec<Detection2D>>,
    /// Objects with enough returns in the filtered scan.
    pub visible: BTreeSet<u32>,
}

pub fn sense(
    cfg: &ScenarioConfig,
    scene: &SceneConfig,
    node: &NodeRuntime,
    frame: usize,
    t: Timestamp,
    world: &[WorldObject],
) -> NodeSensing {
    let raw = scan_lidar(&node.lidar, world, &node.map, t);
    let scan = filter_roi(&raw, &node.roi, cfg.fusion.z_band);
    let visible = scan
        .hits_per_object()
        .into_iter()
        .filter(|&(_, n)| n >= cfg.min_visible_hits)
        .map(|(id, _)| id)
        .collect();
    let detections = node
        .cameras
        .iter()
        .enumerate()
        .map(|(ci, cam)| {
            let seed = mix_seed(&[scene.seed, node.id as u64, ci as u64, frame as u64]);
            detect_camera(cam, world, &scene.detector, seed)
        })
        .collect();
    NodeSensing { scan, detections, visible }
}

pub fn perceive(node: &NodeRuntime, sensing: &NodeSensing, method: &ClusteringMethod, cfg: &ScenarioConfig) -> Vec<LabeledObject> {
    let clusters = method.run(&sensing.scan);
    let foot: FootAssociationParams = cfg.fusion.foot.into();
    let located: Vec<_> = node.cameras.iter().zip(&sensing.detections).map(|(c, d)| locate_boxes(c, d, &foot)).collect();
    let views: Vec<(&CameraModel, &[_])> = node.cameras.iter().zip(&located).map(|(c, l)| (c, l.as_slice())).collect();
    fuse_views(&clusters, &views, &cfg.fusion)
}

/// Per-frame scores of one method on one node.
#[derive(Debug, Clone, Default)]
pub struct Scores {
    pub all: Vec<FrameScore>,
    /// Scores restricted to moving objects on straight segments.
    pub straight: Vec<FrameScore>,
}

/// Scores `predictions` against `truth`, plus a second score counting
/// only truth objects in straight-line motion.
pub fn score_frame(predictions: &[PlacedObject], world: &[WorldObject], visible: &BTreeSet<u32>, d_match: f64) -> (FrameScore, FrameScore) {
    let objects: Vec<&WorldObject> = world.iter().filter(|o| visible.contains(&o.id)).collect();
    let truth: Vec<PlacedObject> = objects.iter().map(|o| PlacedObject::new(o.class, o.x, o.y)).collect();
    let pairs = match_pairs(predictions, &truth, d_match);
    let all = score_from_pairs(&pairs, predictions.len(), truth.len());
    let straight_pairs: Vec<_> = pairs
        .iter()
        .filter(|p| {
            let o = objects[p.truth];
            o.yaw_rate.abs() < STRAIGHT_YAW_RATE && o.speed > MOVING_SPEED
        })
        .copied()
        .collect();
    let straight = FrameScore {
        true_positives: straight_pairs.len(),
        sum_matched_distance: straight_pairs.iter().map(|p| p.distance).sum(),
        ..Default::default()
    };
    (all, straight)
}

pub struct NodeRun {
    pub node_id: u32,
    /// Method name and its local scores.
    pub local: Vec<(String, Scores)>,
    /// Tracker output of the proposed method, one per frame.
    pub lists: Vec<StampedObjectList>,
    pub visible: Vec<BTreeSet<u32>>,
}

/// Runs all local methods over every frame; the proposed method also feeds
/// the node's tracker.
pub fn run_node(cfg: &ScenarioConfig, scene: &SceneConfig, frames: &[(Timestamp, Vec<WorldObject>)], node: &NodeRuntime) -> NodeRun {
    let methods = local_methods(cfg, &node.lidar);
    let mut local: Vec<(String, Scores)> = methods.iter().map(|(n, _)| (n.clone(), Scores::default())).collect();
    let mut tracker = Tracker::new(node.id, cfg.tracker);
    let mut lists = Vec::with_capacity(frames.len());
    let mut visible = Vec::with_capacity(frames.len());
    for (k, (t, world)) in frames.iter().enumerate() {
        let sensing = sense(cfg, scene, node, k, *t, world);
        let outputs = par::map(&methods, |(_, m)| perceive(node, &sensing, m, cfg));
        for (mi, objects) in outputs.iter().enumerate() {
            let preds: Vec<PlacedObject> = objects
                .iter()
                .filter(|o| o.source != Source::CameraOnly)
                .map(|o| PlacedObject::new(o.class, o.position.x, o.position.y))
                .collect();
            let (all, straight) = score_frame(&preds, world, &sensing.visible, cfg.d_match);
            local[mi].1.all.push(all);
            local[mi].1.straight.push(straight);
        }
        lists.push(tracker.update(&outputs[0], *t));
        visible.push(sensing.visible);
    }
    NodeRun { node_id: node.id, local, lists, visible }
}

/// One row of a metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub node: String,
    pub method: String,
    pub delay_ms: Option<f64>,
    pub precision: String,
    pub recall: String,
    pub avg_de_m: String,
    /// Avg. DE over moving objects on straight segments.
    pub avg_de_straight_m: String,
    pub frames: usize,
    pub d_match_m: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Metrics of one row kept as numbers for programmatic checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario: String,
    pub node: String,
    pub method: String,
    pub delay_ms: Option<f64>,
    pub metrics: Metrics,
    pub straight_avg_de: Option<f64>,
}

impl MetricsRecord {
    fn new(scenario: &str, node: String, method: &str, delay_ms: Option<f64>, scores: &Scores) -> Self {
        MetricsRecord {
            scenario: scenario.to_string(),
            node,
            method: method.to_string(),
            delay_ms,
            metrics: aggregate(&scores.all),
            straight_avg_de: aggregate(&scores.straight).avg_de,
        }
    }

    pub fn row(&self, cfg: &ScenarioConfig, hash: &str) -> MetricsRow {
        MetricsRow {
            scenario: self.scenario.clone(),
            node: self.node.clone(),
            method: self.method.clone(),
            delay_ms: self.delay_ms,
            precision: format_metric(self.metrics.precision),
            recall: format_metric(self.metrics.recall),
            avg_de_m: format_metric(self.metrics.avg_de),
            avg_de_straight_m: format_metric(self.straight_avg_de),
            frames: self.metrics.frames,
            d_match_m: cfg.d_match,
            seed: cfg.seed,
            config_hash: hash.to_string(),
        }
    }
}

/// Everything needed by both evaluations.
pub struct Prepared {
    pub scene: SceneConfig,
    pub frames: Vec<(Timestamp, Vec<WorldObject>)>,
    pub nodes: Vec<NodeRun>,
    pub hash: String,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, ExperimentError> {
    cfg.validate()?;
    let scene = cfg.resolve_scene()?;
    let hash = cfg.config_hash()?;
    let frames = scene.simulate();
    let runtimes = build_nodes(cfg, &scene)?;
    log::info!("{}: running {} nodes over {} frames", cfg.name, runtimes.len(), frames.len());
    let nodes = par::map(&runtimes, |n| run_node(cfg, &scene, &frames, n));
    Ok(Prepared { scene, frames, nodes, hash })
}

pub fn local_records(cfg: &ScenarioConfig, prepared: &Prepared) -> Vec<MetricsRecord> {
    let mut out = Vec::new();
    for n in &prepared.nodes {
        for (method, scores) in &n.local {
            out.push(MetricsRecord::new(&cfg.name, format!("node{}", n.node_id), method, None, scores));
        }
    }
    out
}

/// One fusion cycle's output, as written to the global JSONL stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalFrame {
    pub t: f64,
    pub tracks: Vec<GlobalTrack>,
}

pub struct DelayRun {
    pub mean_ms: f64,
    pub method: FusionMethod,
    pub scores: Scores,
    pub frames: Vec<GlobalFrame>,
}

/// Streams every node's tracker output through the simulated network at the
/// given latency and fuses at every frame time with both methods. Both
/// methods see the same deliveries.
pub fn run_delay_setting(cfg: &ScenarioConfig, prepared: &Prepared, latency: LatencyModel, grid_index: usize) -> [DelayRun; 2] {
    let mut net = NetworkSim::new(latency, mix_seed(&[cfg.seed, 0xde1a, grid_index as u64]))
        .with_clocks(cfg.clocks.clone())
        .with_drop_probability(cfg.drop_probability);
    let mut inbox = Inbox::new();
    let methods = [FusionMethod::DelayAware, FusionMethod::Baseline];
    let mut fusers = methods.map(|m| GlobalFusion::new(cfg.global, m));
    let mut runs = methods.map(|method| DelayRun { mean_ms: latency.mean_ms, method, scores: Scores::default(), frames: Vec::new() });
    for (k, (t, world)) in prepared.frames.iter().enumerate() {
        for node in &prepared.nodes {
            let mut msg = node.lists[k].clone();
            msg.capture_timestamp = net.clocks().local_time(msg.node_id, *t);
            net.send_from_node(msg, *t);
        }
        for env in net.deliver_until(*t) {
            inbox.accept(env);
        }
        let now = net.clocks().local_time(0, *t);
        let messages = inbox.messages();
        let visible: BTreeSet<u32> = prepared.nodes.iter().flat_map(|n| n.visible[k].iter().copied()).collect();
        for (fuser, run) in fusers.iter_mut().zip(runs.iter_mut()) {
            let tracks = if messages.is_empty() { Vec::new() } else { fuser.cycle(&messages, now) };
            let preds: Vec<PlacedObject> = tracks.iter().map(|g| PlacedObject::new(g.class, g.x, g.y)).collect();
            let (all, straight) = score_frame(&preds, world, &visible, cfg.d_match);
            run.scores.all.push(all);
            run.scores.straight.push(straight);
            run.frames.push(GlobalFrame { t: t.as_secs_f64(), tracks });
        }
    }
    runs
}

pub fn delay_runs(cfg: &ScenarioConfig, prepared: &Prepared) -> Vec<DelayRun> {
    let grid: Vec<(usize, f64)> = cfg.delay_grid_ms.iter().copied().enumerate().collect();
    par::map(&grid, |&(i, mean)| run_delay_setting(cfg, prepared, LatencyModel::gaussian(mean, cfg.delay_std_ms), i))
        .into_iter()
        .flatten()
        .collect()
}

pub fn delay_records(cfg: &ScenarioConfig, runs: &[DelayRun]) -> Vec<MetricsRecord> {
    runs.iter()
        .map(|r| MetricsRecord::new(&cfg.name, "center".into(), r.method.as_str(), Some(r.mean_ms), &r.scores))
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    write_csv(BufWriter::new(File::create(path)?), rows)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Local perception metrics of several scenarios, in input order.
pub fn run_local_eval(configs: &[ScenarioConfig], out_dir: Option<&Path>) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let results = par::map(configs, |cfg| -> Result<_, ExperimentError> {
        let prepared = prepare(cfg)?;
        let records = local_records(cfg, &prepared);
        let rows: Vec<MetricsRow> = records.iter().map(|r| r.row(cfg, &prepared.hash)).collect();
        Ok((records, rows))
    });
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (rec, row) = r?;
        records.extend(rec);
        rows.extend(row);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_csv_file(&dir.join("local_metrics.csv"), &rows)?;
    }
    Ok(records)
}

/// Delay study of several scenarios, in input order. Global tracks are
/// written per scenario, delay and method when `out_dir` is given.
pub fn run_delay_eval(configs: &[ScenarioConfig], out_dir: Option<&Path>) -> Result<Vec<MetricsRecord>, ExperimentError> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let results = par::map(configs, |cfg| -> Result<_, ExperimentError> {
        let prepared = prepare(cfg)?;
        let runs = delay_runs(cfg, &prepared);
        if let Some(dir) = out_dir {
            for r in &runs {
                let name = format!("global_{}_{}ms_{}.jsonl", cfg.name, r.mean_ms, r.method.as_str());
                write_jsonl(&dir.join(name), &r.frames)?;
            }
        }
        let records = delay_records(cfg, &runs);
        let rows: Vec<MetricsRow> = records.iter().map(|r| r.row(cfg, &prepared.hash)).collect();
        Ok((records, rows))
    });
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (rec, row) = r?;
        records.extend(rec);
        rows.extend(row);
    }
    if let Some(dir) = out_dir {
        write_csv_file(&dir.join("delay_metrics.csv"), &rows)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCsvRow {
    pub point_count: usize,
    pub method: String,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn run_bench(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<Vec<BenchRow>, ExperimentError> {
    let mut sizes = cfg.bench.sizes.clone();
    sizes.sort_unstable();
    let rows = benchmark_clustering(&sizes, cfg.bench.repetitions, cfg.bench.dbscan_epsilon, cfg.bench.dbscan_min_points, cfg.seed);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let hash = cfg.config_hash()?;
        let csv_rows: Vec<BenchCsvRow> = rows
            .iter()
            .map(|r| BenchCsvRow {
                point_count: r.point_count,
                method: r.method.clone(),
                mean_ms: r.mean_ms,
                median_ms: r.median_ms,
                p95_ms: r.p95_ms,
                repetitions: r.repetitions,
                seed: cfg.seed,
                config_hash: hash.clone(),
            })
            .collect();
        write_csv_file(&dir.join("bench.csv"), &csv_rows)?;
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SensedFrame<'a> {
    t: f64,
    node: u32,
    detections: &'a [Vec<Detection2D>],
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<([f64; 3], usize, HitLabel)>>,
}

/// Writes ground truth and each node's raw detections (and optionally its
/// filtered scans) as JSONL.
pub fn run_simulate(cfg: &ScenarioConfig, out_dir: &Path, with_scans: bool) -> Result<usize, ExperimentError> {
    cfg.validate()?;
    let scene = cfg.resolve_scene()?;
    let frames = scene.simulate();
    fs::create_dir_all(out_dir)?;
    let gt: Vec<GroundTruthFrame> = frames.iter().map(|(t, w)| GroundTruthFrame::from_world(*t, w)).collect();
    let gt_path = out_dir.join(format!("{}_ground_truth.jsonl", cfg.name));
    write_ground_truth(BufWriter::new(File::create(&gt_path)?), &gt)?;
    for node in build_nodes(cfg, &scene)? {
        let path = out_dir.join(format!("{}_node{}_frames.jsonl", cfg.name, node.id));
        let mut w = BufWriter::new(File::create(&path)?);
        for (k, (t, world)) in frames.iter().enumerate() {
            let s = sense(cfg, &scene, &node, k, *t, world);
            let points = with_scans.then(|| {
                s.scan.rings.iter().flat_map(|r| r.points.iter().map(move |p| (p.position, r.index, p.label))).collect()
            });
            let rec = SensedFrame { t: t.as_secs_f64(), node: node.id, detections: &s.detections, points };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(frames.len())
}

/// Where a loader for recorded data would plug in: anything that yields
/// time-ordered per-node scans and detections can replace the simulator.
pub trait FrameSource {
    fn node_ids(&self) -> Vec<u32>;
    /// Frame `index` of `node`, or `None` past the end.
    fn frame(&mut self, node: u32, index: usize) -> Option<(Timestamp, RingScan, Vec<Vec<Detection2D>>)>;
}
