use std::path::Path;
use std::process::{Command, Output};

use coperception::scenario::{SceneSource, ScenarioConfig};

fn coperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coperc")).args(args).output().expect("spawn coperc")
}

fn short_config(dir: &Path, seconds: f64) -> std::path::PathBuf {
    let mut cfg = ScenarioConfig::builtin("four_pedestrians", 3).unwrap();
    let mut scene = cfg.resolve_scene().unwrap();
    scene.duration_s = seconds;
    cfg.scene = SceneSource::Inline(scene);
    cfg.name = "short".into();
    let path = dir.join("short.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn help_lists_subcommands() {
    let out = coperc(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["local-eval", "delay-eval", "bench", "simulate", "show-config"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn show_config_round_trips() {
    let out = coperc(&["show-config", "--scenario", "bed_three_pedestrians"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ScenarioConfig::from_toml(&text, Path::new(".")).unwrap();
    assert_eq!(cfg, ScenarioConfig::builtin("bed_three_pedestrians", 1).unwrap());
}

#[test]
fn unknown_scenario_fails() {
    let out = coperc(&["local-eval", "--scenario", "no_such_scene"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));
}

#[test]
fn missing_config_fails() {
    let out = coperc(&["delay-eval", "-c", "/nonexistent/scenario.toml"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 1.0);
    let out_dir = dir.path().join("out");
    let out = coperc(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gt = std::fs::read_to_string(out_dir.join("short_ground_truth.jsonl")).unwrap();
    assert_eq!(gt.lines().count(), 10);
    assert!(out_dir.join("short_node1_frames.jsonl").exists());
    assert!(out_dir.join("short_node2_frames.jsonl").exists());
}

#[test]
fn evals_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 2.0);
    let out_dir = dir.path().join("out");
    for cmd in ["local-eval", "delay-eval"] {
        let out = coperc(&[cmd, "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let local = std::fs::read_to_string(out_dir.join("local_metrics.csv")).unwrap();
    assert!(local.starts_with("scenario,node,method,delay_ms,precision,recall,avg_de_m"));
    assert!(local.lines().any(|l| l.contains(",proposed,")));
    let delay = std::fs::read_to_string(out_dir.join("delay_metrics.csv")).unwrap();
    assert_eq!(delay.lines().count(), 1 + 3 * 2);
    assert!(delay.contains("delay_aware") && delay.contains("baseline"));
}
