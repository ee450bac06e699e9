use std::collections::BTreeSet;

use coperception::evaluation::aggregate;
use coperception::experiment::{local_records, prepare, run_delay_setting, PROPOSED};
use coperception::scenario::{SceneSource, ScenarioConfig};
use coperception::transport::LatencyModel;

fn short(name: &str, seconds: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::builtin(name, 5).unwrap();
    let mut scene = cfg.resolve_scene().unwrap();
    scene.duration_s = seconds;
    cfg.scene = SceneSource::Inline(scene);
    cfg
}

#[test]
fn node_outputs_are_reproducible() {
    let cfg = short("four_pedestrians", 3.0);
    let a = prepare(&cfg).unwrap();
    let b = prepare(&cfg).unwrap();
    assert_eq!(a.hash, b.hash);
    for (na, nb) in a.nodes.iter().zip(&b.nodes) {
        assert_eq!(na.lists, nb.lists);
        assert_eq!(na.visible, nb.visible);
    }
}

#[test]
fn tracks_confirm_and_report_every_frame() {
    let cfg = short("nine_pedestrians", 3.0);
    let p = prepare(&cfg).unwrap();
    for node in &p.nodes {
        assert_eq!(node.lists.len(), p.frames.len());
        let mut ids = BTreeSet::new();
        for (k, list) in node.lists.iter().enumerate() {
            assert_eq!(list.node_id, node.node_id);
            assert_eq!(list.capture_timestamp, p.frames[k].0);
            ids.extend(list.objects.iter().map(|o| o.track_id));
        }
        assert!(node.lists.last().unwrap().objects.len() >= 3, "node {} reports too few tracks", node.node_id);
        assert!(ids.len() < 40, "node {} churned through {} track ids", node.node_id, ids.len());
    }
}

#[test]
fn proposed_method_finds_pedestrians() {
    let cfg = short("four_pedestrians", 3.0);
    let p = prepare(&cfg).unwrap();
    for r in local_records(&cfg, &p).iter().filter(|r| r.method == PROPOSED) {
        assert!(r.metrics.precision.unwrap() > 0.9, "{}: {:?}", r.node, r.metrics);
        assert!(r.metrics.recall.unwrap() > 0.8, "{}: {:?}", r.node, r.metrics);
        assert!(r.metrics.avg_de.unwrap() <= cfg.d_match);
    }
}

#[test]
fn zero_latency_makes_methods_agree() {
    let cfg = short("four_pedestrians", 3.0);
    let p = prepare(&cfg).unwrap();
    let [da, bl] = run_delay_setting(&cfg, &p, LatencyModel::zero(), 0);
    let (a, b) = (aggregate(&da.scores.all), aggregate(&bl.scores.all));
    assert_eq!(a, b);
}

#[test]
fn delay_compensation_reduces_error() {
    let cfg = short("four_pedestrians", 6.0);
    let p = prepare(&cfg).unwrap();
    let [da, bl] = run_delay_setting(&cfg, &p, LatencyModel::gaussian(150.0, 8.0), 2);
    let (a, b) = (aggregate(&da.scores.all), aggregate(&bl.scores.all));
    assert!(a.avg_de.unwrap() < b.avg_de.unwrap(), "{a:?} vs {b:?}");
}
