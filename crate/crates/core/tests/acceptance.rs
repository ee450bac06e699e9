//! Acceptance checks. Prints one line per criterion and exits non-zero if
//! any of them fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix5, Vector3, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coperception::assignment;
use coperception::camera_geometry::{CameraModel, Intrinsics};
use coperception::clustering::{dbscan_baseline, hierarchical_clustering, segment_distance, ClusterParams, Segment};
use coperception::evaluation::{aggregate, benchmark_clustering, match_frame, PlacedObject};
use coperception::experiment::run_delay_eval;
use coperception::local_fusion::{filter_roi, RoiGrid};
use coperception::scenario::{ScenarioConfig, BUILTIN_SCENES};
use coperception::scene_sim::{scan_lidar, LidarModel, StaticMap, WorldObject};
use coperception::tracking::{ctrv_jacobian, ctrv_mean, ctrv_predict, ProcessNoise, ReportedObject, StampedObjectList, TrackState};
use coperception::transport::{decode, encode, sample_latency, DecodeError, LatencyModel};
use coperception::{ObjectClass, Timestamp};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_camera(rng: &mut impl Rng) -> CameraModel {
    let f = rng.random_range(300.0..1500.0);
    let intrinsics = Intrinsics { fx: f, fy: f * rng.random_range(0.9..1.1), cx: 640.0, cy: 360.0, width: 1280, height: 720 };
    let position = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(1.5..4.0));
    CameraModel::from_pose(&intrinsics, position, rng.random_range(-PI..PI), rng.random_range(0.2..1.2)).expect("camera")
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 1000 {
        let cam = random_camera(&mut rng);
        let ground = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0);
        if cam.depth(&ground) <= 0.5 {
            continue;
        }
        let Ok(px) = cam.project(&ground) else { continue };
        let h = cam.projection_matrix();
        let row = |r: usize, p: f64| [h[(r, 0)] - p * h[(2, 0)], h[(r, 1)] - p * h[(2, 1)]];
        let (r1, r2) = (row(0, px.x), row(1, px.y));
        let det = r1[0] * r2[1] - r1[1] * r2[0];
        let norm = r1.iter().chain(&r2).map(|v| v * v).sum::<f64>();
        if det.abs() <= 1e-6 * norm {
            continue;
        }
        let Ok(back) = cam.recover_ground_position(px, 0.0) else {
            return Err(format!("recovery failed at pair {pairs}"));
        };
        worst = worst.max((back - ground.xy()).norm());
        pairs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-6 && secs < 1.0, format!("max error {worst:.3e} m over {pairs} pairs in {secs:.3} s"))
}

/// Arc overlap computed after rotating `a` to start at zero.
fn oracle_overlap(a0: f64, wa: f64, b0: f64, wb: f64) -> f64 {
    let rel = (b0 - a0).rem_euclid(TAU);
    let seg = |lo: f64, hi: f64| (hi.min(wa) - lo.max(0.0)).max(0.0);
    (seg(rel, rel + wb) + seg(rel - TAU, rel - TAU + wb)).min(wa).min(wb)
}

fn oracle_distance(a: &Segment, b: &Segment, p: &ClusterParams) -> f64 {
    let gap = (a.ring_index as i64 - b.ring_index as i64).abs();
    let (dx, dy, dz) = (a.centroid.x - b.centroid.x, a.centroid.y - b.centroid.y, a.centroid.z - b.centroid.z);
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if gap > p.max_ring_gap as i64 || d > p.max_centroid_distance {
        return f64::INFINITY;
    }
    let s = if a.mean_range < b.mean_range { a.mean_range } else { b.mean_range };
    let wa = (a.azimuth_end - a.azimuth_start).max(p.horizontal_resolution);
    let wb = (b.azimuth_end - b.azimuth_start).max(p.horizontal_resolution);
    let inter = oracle_overlap(a.azimuth_start, a.azimuth_end - a.azimuth_start, b.azimuth_start, b.azimuth_end - b.azimuth_start);
    d / (s * p.vertical_resolution) + (1.0 - inter / wa.min(wb)).max(0.0)
}

fn random_segment(rng: &mut impl Rng, ring: usize, near: &Vector3<f64>) -> Segment {
    let c = near + Vector3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), rng.random_range(-0.4..0.4));
    let start = rng.random_range(-PI..PI);
    let width = rng.random_range(0.004..0.4);
    Segment {
        ring_index: ring,
        points: vec![c],
        centroid: c,
        azimuth_start: start,
        azimuth_end: start + width,
        mean_range: rng.random_range(1.0..20.0),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ClusterParams {
        min_points: 4,
        horizontal_resolution: 0.2f64.to_radians(),
        vertical_resolution: 2.0f64.to_radians(),
        epsilon_custom: 1.5,
        max_ring_gap: 3,
        max_centroid_distance: 1.0,
    };
    let mut worst: f64 = 0.0;
    let mut finite = 0;
    for _ in 0..500 {
        let base = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 1.0);
        let (ra, rb) = (rng.random_range(0..16), rng.random_range(0..16));
        let a = random_segment(&mut rng, ra, &base);
        let mut b = random_segment(&mut rng, rb, &base);
        if rng.random_bool(0.3) {
            b.azimuth_start = a.azimuth_start + rng.random_range(-0.1..0.1);
            b.azimuth_end = b.azimuth_start + rng.random_range(0.004..0.4);
        }
        let got = segment_distance(&a, &b, &params);
        let want = oracle_distance(&a, &b, &params);
        if want.is_infinite() {
            if got != f64::INFINITY {
                return Err(format!("expected INF, got {got}"));
            }
        } else {
            finite += 1;
            worst = worst.max((got - want).abs());
        }
    }
    let mut hi = random_segment(&mut rng, 0, &Vector3::new(5.0, 0.0, 1.0));
    let mut lo = hi.clone();
    lo.ring_index = 4;
    let ring_gate = segment_distance(&hi, &lo, &params);
    hi.ring_index = 4;
    lo.centroid += Vector3::new(1.0 + 1e-9, 0.0, 0.0);
    let centroid_gate = segment_distance(&hi, &lo, &params);
    let gates = ring_gate == f64::INFINITY && centroid_gate == f64::INFINITY;
    check(worst <= 1e-12 && gates && finite > 100, format!("max |diff| {worst:.1e} over {finite} finite pairs, gates INF: {gates}"))
}

fn fig3_scan() -> (coperception::scene_sim::RingScan, LidarModel) {
    let lidar = LidarModel::default().at(0.0, 0.0, 1.0);
    let world = vec![
        WorldObject::bed(1, 10.0, 0.0, FRAC_PI_2),
        WorldObject::person(2, 9.7, 1.6, 0.0, 0.0),
        WorldObject::person(3, 9.7, -1.6, 0.0, 0.0),
    ];
    let scan = scan_lidar(&lidar, &world, &StaticMap::none(), Timestamp::ZERO);
    let roi = RoiGrid::filled([-1.0, -5.0], 0.1, 150, 100, true);
    (filter_roi(&scan, &roi, [0.1, 2.2]), lidar)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (scan, lidar) = fig3_scan();
    let points: Vec<Vector3<f64>> = scan.points().map(|p| p.xyz()).collect();
    let small = dbscan_baseline(&points, 0.25, 4).len();
    let large = dbscan_baseline(&points, 0.5, 4).len();
    let ours = hierarchical_clustering(&scan, &ClusterParams::for_lidar(&lidar)).len();
    let again = hierarchical_clustering(&scan, &ClusterParams::for_lidar(&lidar)).len();
    let secs = start.elapsed().as_secs_f64();
    check(
        small >= 4 && large <= 2 && ours == 3 && again == ours && secs < 5.0,
        format!("{} points: dbscan(0.25)={small}, dbscan(0.5)={large}, hierarchical={ours} in {secs:.2} s", points.len()),
    )
}

fn criterion_4() -> Outcome {
    let rows = benchmark_clustering(&[5_000, 50_000], 10, 0.3, 4, 4);
    let median = |n: usize, method: &str| {
        rows.iter().find(|r| r.method == method && r.point_count.abs_diff(n) < n / 10).map(|r| r.median_ms).expect("bench row")
    };
    let (h5, d5) = (median(5_000, "hierarchical"), median(5_000, "dbscan"));
    let (h50, d50) = (median(50_000, "hierarchical"), median(50_000, "dbscan"));
    let (r5, r50) = (d5 / h5, d50 / h50);
    check(
        h50 <= d50 && r50 > r5,
        format!("50k: hierarchical {h50:.2} ms vs dbscan {d50:.2} ms; dbscan/hierarchical ratio {r5:.2} at 5k, {r50:.2} at 50k"),
    )
}

fn exhaustive_min(cost: &[Vec<f64>]) -> f64 {
    let (rows, cols) = (cost.len(), cost[0].len());
    fn go(cost: &[Vec<f64>], r: usize, used: &mut Vec<bool>, skips: usize, acc: f64, best: &mut f64) {
        if r == cost.len() {
            *best = best.min(acc);
            return;
        }
        if skips > 0 {
            go(cost, r + 1, used, skips - 1, acc, best);
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                go(cost, r + 1, used, skips, acc + cost[r][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cols], rows.saturating_sub(cols), 0.0, &mut best);
    best
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let span = if trial % 3 == 0 { 4 } else { 1000 };
        let cost: Vec<Vec<f64>> =
            (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..span) as f64).collect()).collect();
        let assignment = assignment::solve(&cost);
        let assigned = assignment.iter().flatten().count();
        let mut cols_used: Vec<usize> = assignment.iter().flatten().copied().collect();
        cols_used.sort_unstable();
        cols_used.dedup();
        let got = assignment::total_cost(&cost, &assignment);
        let want = exhaustive_min(&cost);
        if got != want || assigned != rows.min(cols) || cols_used.len() != assigned {
            return Err(format!("trial {trial} ({rows}x{cols}): hungarian {got}, exhaustive {want}"));
        }
    }
    check(true, "1000 matrices up to 6x6 match the exhaustive minimum".into())
}

fn scalar_step(s: [f64; 5], dt: f64) -> [f64; 5] {
    let [x, y, yaw, v, w] = s;
    [x + v * yaw.cos() * dt, y + v * yaw.sin() * dt, yaw + w * dt, v, w]
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mean_err: f64 = 0.0;
    let mut jac_err: f64 = 0.0;
    let mut identity = true;
    for _ in 0..200 {
        let s0 = [
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-PI..PI),
            rng.random_range(0.0..2.0),
            rng.random_range(-1.5..1.5),
        ];
        let dt = rng.random_range(0.01..0.5);
        let mut scalar = s0;
        let mut state = Vector5::from(s0);
        for _ in 0..10 {
            scalar = scalar_step(scalar, dt);
            state = ctrv_mean(&state, dt);
        }
        for i in 0..5 {
            mean_err = mean_err.max((state[i] - scalar[i]).abs());
        }

        let s = Vector5::from(s0);
        let jac = ctrv_jacobian(&s, dt);
        let h = 1e-6;
        for j in 0..5 {
            let mut plus = s0;
            let mut minus = s0;
            plus[j] += h;
            minus[j] -= h;
            let (fp, fm) = (scalar_step(plus, dt), scalar_step(minus, dt));
            for i in 0..5 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                jac_err = jac_err.max((jac[(i, j)] - fd).abs() / jac[(i, j)].abs().max(1.0));
            }
        }

        let cov = Matrix5::from_diagonal(&Vector5::new(0.1, 0.2, 0.05, 0.3, 0.1));
        let track = TrackState::with_state(1, ObjectClass::Person, s, cov, Timestamp::ZERO);
        let same = ctrv_predict(&track, 0.0, &ProcessNoise::person());
        identity &= ctrv_mean(&s, 0.0) == s && same.mean == s && same.covariance == cov;
    }
    check(
        mean_err <= 1e-12 && jac_err <= 1e-6 && identity,
        format!("mean error {mean_err:.1e}, Jacobian relative error {jac_err:.1e}, dt=0 identity {identity}"),
    )
}

fn sample_stats(model: &LatencyModel, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_latency(model, &mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn criterion_7() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (model, seed) in [(LatencyModel::gaussian(50.0, 8.0), 71), (LatencyModel::measured_5g(), 72)] {
        let (mean, std) = sample_stats(&model, seed);
        ok &= (mean - model.mean_ms).abs() <= 0.1 && (std - model.std_dev_ms).abs() <= 0.2;
        details.push(format!("{}/{} ms -> mean {mean:.3}, std {std:.3}", model.mean_ms, model.std_dev_ms));
    }
    check(ok, details.join("; "))
}

fn criterion_8_and_10() -> (Outcome, Outcome) {
    let configs: Vec<ScenarioConfig> = BUILTIN_SCENES.iter().map(|n| ScenarioConfig::builtin(n, 1).unwrap()).collect();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let start = Instant::now();
    let records = match run_delay_eval(&configs, Some(dirs[0].path())) {
        Ok(r) => r,
        Err(e) => return (Err(format!("delay-eval failed: {e}")), Err("no first run".into())),
    };
    let secs = start.elapsed().as_secs_f64();

    let mut ok = secs < 120.0;
    let mut notes = Vec::new();
    for cfg in &configs {
        let mut last_advantage = f64::NEG_INFINITY;
        for &delay in &cfg.delay_grid_ms {
            let find = |method: &str| {
                records.iter().find(|r| r.scenario == cfg.name && r.method == method && r.delay_ms == Some(delay)).expect("record")
            };
            let (da, bl) = (find("delay_aware"), find("baseline"));
            let (Some(de_da), Some(de_bl)) = (da.metrics.avg_de, bl.metrics.avg_de) else {
                ok = false;
                notes.push(format!("{} {delay} ms: undefined Avg. DE", cfg.name));
                continue;
            };
            let advantage = da.metrics.precision.unwrap_or(0.0) - bl.metrics.precision.unwrap_or(0.0);
            let mut line = format!("{} {delay}ms DE {de_da:.3}/{de_bl:.3} dP {advantage:+.5}", cfg.name);
            ok &= de_da < de_bl;
            ok &= advantage >= last_advantage;
            last_advantage = advantage;
            if delay >= 100.0 {
                let (Some(s_da), Some(s_bl)) = (da.straight_avg_de, bl.straight_avg_de) else {
                    ok = false;
                    continue;
                };
                let gain = 1.0 - s_da / s_bl;
                ok &= gain >= 0.25;
                line.push_str(&format!(" straight gain {:.0}%", 100.0 * gain));
            }
            notes.push(line);
        }
    }
    notes.push(format!("{secs:.1} s"));
    let c8 = check(ok, notes.join("; "));

    let c10 = match run_delay_eval(&configs, Some(dirs[1].path())) {
        Err(e) => Err(format!("second run failed: {e}")),
        Ok(_) => {
            let read = |i: usize| std::fs::read(dirs[i].path().join("delay_metrics.csv")).unwrap_or_default();
            let (a, b) = (read(0), read(1));
            check(!a.is_empty() && a == b, format!("delay_metrics.csv {} bytes, identical: {}", a.len(), a == b))
        }
    };
    (c8, c10)
}

fn random_message(rng: &mut impl Rng) -> StampedObjectList {
    let classes = [ObjectClass::Person, ObjectClass::Bed, ObjectClass::Unknown];
    let f = |rng: &mut ChaCha8Rng| -> f64 {
        match rng.random_range(0..6) {
            0 => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52) | (rng.random_range(1..0x7fe) << 52)),
            1 => -0.0,
            2 => f64::MIN_POSITIVE * rng.random::<f64>(),
            _ => rng.random_range(-1e3..1e3),
        }
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    let n = r.random_range(0..40);
    StampedObjectList {
        node_id: r.random(),
        capture_timestamp: Timestamp::from_micros(r.random()),
        objects: (0..n)
            .map(|_| ReportedObject {
                track_id: r.random(),
                class: classes[r.random_range(0..3)],
                x: f(&mut r),
                y: f(&mut r),
                yaw: f(&mut r),
                v: f(&mut r),
                omega: f(&mut r),
                covariance: [f(&mut r), f(&mut r), f(&mut r)],
            })
            .collect(),
    }
}

fn bitwise_equal(a: &StampedObjectList, b: &StampedObjectList) -> bool {
    let bits = |o: &ReportedObject| {
        let mut v = vec![o.x.to_bits(), o.y.to_bits(), o.yaw.to_bits(), o.v.to_bits(), o.omega.to_bits()];
        v.extend(o.covariance.iter().map(|c| c.to_bits()));
        (o.track_id, o.class, v)
    };
    a.node_id == b.node_id
        && a.capture_timestamp == b.capture_timestamp
        && a.objects.len() == b.objects.len()
        && a.objects.iter().zip(&b.objects).all(|(x, y)| bits(x) == bits(y))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut truncations = 0;
    let mut flips = 0;
    for i in 0..1000 {
        let msg = random_message(&mut rng);
        let bytes = encode(&msg);
        match decode(&bytes) {
            Ok(back) if bitwise_equal(&msg, &back) => {}
            other => return Err(format!("message {i} did not round-trip: {other:?}")),
        }
        let cuts: Vec<usize> = if i < 20 { (0..bytes.len()).collect() } else { (0..5).map(|_| rng.random_range(0..bytes.len())).collect() };
        for cut in cuts {
            if decode(&bytes[..cut]).is_ok() {
                return Err(format!("message {i}: truncation to {cut} bytes decoded"));
            }
            truncations += 1;
        }
        for _ in 0..5 {
            let mut bad = bytes.clone();
            let at = rng.random_range(0..bad.len());
            bad[at] ^= 1 << rng.random_range(0..8);
            if catch_unwind(AssertUnwindSafe(|| decode(&bad))).is_err() {
                return Err(format!("message {i}: decoder panicked on a flipped byte at {at}"));
            }
            flips += 1;
        }
    }

    let msg = random_message(&mut rng);
    let bytes = encode(&msg);
    let corrupt = |at: usize, value: u8| {
        let mut b = bytes.clone();
        b[at] ^= value;
        decode(&b)
    };
    let magic = matches!(corrupt(4, 0xff), Err(DecodeError::BadMagic(_)));
    let version = matches!(corrupt(8, 0x07), Err(DecodeError::UnsupportedVersion(_)));
    let count = matches!(corrupt(22, 0x01), Err(DecodeError::LengthMismatch { .. }));
    let typed = magic && version && count;
    check(typed, format!("1000 bitwise round-trips, {truncations} truncations rejected, {flips} bit flips without panic, typed header errors: {typed}"))
}

fn criterion_11() -> Outcome {
    let p = |x: f64, y: f64| PlacedObject::new(ObjectClass::Person, x, y);
    let b = |x: f64, y: f64| PlacedObject::new(ObjectClass::Bed, x, y);
    let u = |x: f64, y: f64| PlacedObject::new(ObjectClass::Unknown, x, y);
    // (predictions, truth) per frame; distances chosen from 3-4-5 triangles
    let frames: Vec<(Vec<PlacedObject>, Vec<PlacedObject>)> = vec![
        (vec![p(0.15, 0.2)], vec![p(0.0, 0.0)]),
        (vec![p(1.0, 1.0), p(5.0, 5.0)], vec![p(1.0, 1.3)]),
        (vec![], vec![p(2.0, 2.0)]),
        (vec![p(0.0, 0.0)], vec![]),
        (vec![b(3.0, 3.0)], vec![p(3.0, 3.1)]),
        (vec![u(0.0, 0.04)], vec![b(0.0, 0.0)]),
        (vec![p(0.0, 0.0), p(0.6, 0.0)], vec![p(0.2, 0.0), p(0.8, 0.0)]),
        (vec![p(0.0, 0.0)], vec![p(0.0, 0.6)]),
        (vec![], vec![]),
        (vec![p(0.12, 0.16), b(9.0, 9.0)], vec![p(0.0, 0.0), b(9.0, 9.45)]),
    ];
    let scores: Vec<_> = frames.iter().map(|(pr, gt)| match_frame(pr, gt, 0.5)).collect();
    let m = aggregate(&scores);
    // TP: f0 0.25, f1 0.3, f5 0.04, f6 0.2 + 0.2, f9 0.2 + 0.45 -> 7 matches, 1.64 m
    // FP: f1, f3, f4, f7 -> 4; FN: f2, f4, f7 -> 3
    let (tp, fp, fnn) = (7.0, 4.0, 3.0);
    let want = (tp / (tp + fp), tp / (tp + fnn), 1.64 / tp);
    let got = (m.precision.unwrap_or(f64::NAN), m.recall.unwrap_or(f64::NAN), m.avg_de.unwrap_or(f64::NAN));
    let ok = (got.0 - want.0).abs() <= 1e-12 && (got.1 - want.1).abs() <= 1e-12 && (got.2 - want.2).abs() <= 1e-12;
    check(ok, format!("precision {:.12}, recall {:.12}, avg DE {:.12}", got.0, got.1, got.2))
}

fn main() {
    let start = Instant::now();
    let (c8, c10) = criterion_8_and_10();
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, c8),
        (9, criterion_9()),
        (10, c10),
        (11, criterion_11()),
    ];
    let mut failed = 0;
    for (n, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:2}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:2}: FAIL  {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
