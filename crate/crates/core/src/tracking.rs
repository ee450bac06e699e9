//! Class-aware multi-object tracker run on every sensor node.
//!
//! State is `[x, y, yaw, v, omega]` propagated with the first-order constant
//! turn rate and velocity model; observations are floor positions. New tracks
//! hold still until they have moved far enough for a heading to be read off
//! their displacement.

use nalgebra::{Matrix2, Matrix2x5, Matrix5, Matrix5x2, Vector2, Vector5};
use serde::{Deserialize, Serialize};

use crate::assignment::{self, FORBIDDEN};
use crate::local_fusion::LabeledObject;
use crate::scene_sim::normalize_angle;
use crate::{ObjectClass, Timestamp};

pub const X: usize = 0;
pub const Y: usize = 1;
pub const YAW: usize = 2;
pub const V: usize = 3;
pub const OMEGA: usize = 4;

/// Mean map of one prediction step.
pub fn ctrv_mean(s: &Vector5<f64>, dt: f64) -> Vector5<f64> {
    let (sy, cy) = s[YAW].sin_cos();
    Vector5::new(s[X] + s[V] * cy * dt, s[Y] + s[V] * sy * dt, s[YAW] + s[OMEGA] * dt, s[V], s[OMEGA])
}

/// Jacobian of [`ctrv_mean`] with respect to the state.
pub fn ctrv_jacobian(s: &Vector5<f64>, dt: f64) -> Matrix5<f64> {
    let (sy, cy) = s[YAW].sin_cos();
    let mut f = Matrix5::identity();
    f[(X, YAW)] = -s[V] * sy * dt;
    f[(X, V)] = cy * dt;
    f[(Y, YAW)] = s[V] * cy * dt;
    f[(Y, V)] = sy * dt;
    f[(YAW, OMEGA)] = dt;
    f
}

/// Continuous-time process noise intensities; the step covariance is `Q * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub position: f64,
    pub yaw: f64,
    /// Acceleration sigma squared.
    pub speed: f64,
    /// Yaw acceleration sigma squared.
    pub yaw_rate: f64,
}

impl ProcessNoise {
    pub fn person() -> Self {
        ProcessNoise { position: 0.01, yaw: 0.01, speed: 0.8 * 0.8, yaw_rate: 0.5 * 0.5 }
    }

    pub fn bed() -> Self {
        ProcessNoise { position: 0.005, yaw: 0.005, speed: 0.3 * 0.3, yaw_rate: 0.1 * 0.1 }
    }

    pub fn for_class(class: ObjectClass) -> Self {
        match class {
            ObjectClass::Bed => Self::bed(),
            _ => Self::person(),
        }
    }

    pub fn matrix(&self, dt: f64) -> Matrix5<f64> {
        Matrix5::from_diagonal(&Vector5::new(self.position, self.position, self.yaw, self.speed, self.yaw_rate)) * dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: Vector5<f64>,
    pub covariance: Matrix5<f64>,
    pub class: ObjectClass,
    pub track_id: u32,
    pub hits: u32,
    pub misses: u32,
    pub last_update: Timestamp,
    pub confirmed: bool,
    heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Heading {
    /// No usable heading yet; remembers where and when the track started.
    Pending { x: f64, y: f64, t: Timestamp },
    Known,
}

impl TrackState {
    pub fn x(&self) -> f64 {
        self.mean[X]
    }
    pub fn y(&self) -> f64 {
        self.mean[Y]
    }
    pub fn yaw(&self) -> f64 {
        self.mean[YAW]
    }
    pub fn speed(&self) -> f64 {
        self.mean[V]
    }
    pub fn yaw_rate(&self) -> f64 {
        self.mean[OMEGA]
    }
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[X], self.mean[Y])
    }
    pub fn heading_known(&self) -> bool {
        self.heading == Heading::Known
    }

    /// Track with a known kinematic state (used by tests and replay tools).
    pub fn with_state(track_id: u32, class: ObjectClass, mean: Vector5<f64>, covariance: Matrix5<f64>, t: Timestamp) -> Self {
        TrackState {
            mean,
            covariance,
            class,
            track_id,
            hits: 1,
            misses: 0,
            last_update: t,
            confirmed: false,
            heading: Heading::Known,
        }
    }
}

fn symmetrize(p: &mut Matrix5<f64>) {
    *p = (*p + p.transpose()) * 0.5;
}

/// Propagates mean and covariance by `dt` seconds.
pub fn ctrv_predict(state: &TrackState, dt: f64, noise: &ProcessNoise) -> TrackState {
    assert!(dt >= 0.0, "ctrv_predict requires dt >= 0");
    let mut next = state.clone();
    if dt == 0.0 {
        return next;
    }
    let f = ctrv_jacobian(&state.mean, dt);
    next.mean = ctrv_mean(&state.mean, dt);
    next.mean[YAW] = normalize_angle(next.mean[YAW]);
    next.covariance = f * state.covariance * f.transpose() + noise.matrix(dt);
    symmetrize(&mut next.covariance);
    if next.heading != Heading::Known {
        freeze_motion(&mut next);
    }
    next
}

// Until a heading is known the track is a position-only random walk.
fn freeze_motion(s: &mut TrackState) {
    s.mean[V] = 0.0;
    s.mean[OMEGA] = 0.0;
    for k in [YAW, V, OMEGA] {
        for j in 0..5 {
            s.covariance[(k, j)] = 0.0;
            s.covariance[(j, k)] = 0.0;
        }
    }
    s.covariance[(YAW, YAW)] = std::f64::consts::PI.powi(2);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub confirm_hits: u32,
    pub max_misses: u32,
    /// Association gate in meters.
    pub gate: f64,
    pub measurement_sigma: f64,
    /// Displacement needed before heading and speed are initialized.
    pub init_displacement: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { confirm_hits: 3, max_misses: 5, gate: 1.0, measurement_sigma: 0.05, init_displacement: 0.1 }
    }
}

/// One object of a node's report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedObject {
    pub track_id: u32,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
    /// Position covariance `[xx, xy, yy]`.
    pub covariance: [f64; 3],
}

/// A node's tracked objects at one capture time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StampedObjectList {
    pub node_id: u32,
    pub capture_timestamp: Timestamp,
    pub objects: Vec<ReportedObject>,
}

impl ReportedObject {
    pub fn from_track(t: &TrackState) -> Self {
        let p = &t.covariance;
        ReportedObject {
            track_id: t.track_id,
            class: t.class,
            x: t.x(),
            y: t.y(),
            yaw: normalize_angle(t.yaw()),
            v: t.speed(),
            omega: t.yaw_rate(),
            covariance: [p[(X, X)], p[(X, Y)], p[(Y, Y)]],
        }
    }
}

pub struct Tracker {
    pub node_id: u32,
    params: TrackerParams,
    tracks: Vec<TrackState>,
    next_id: u32,
    last_timestamp: Option<Timestamp>,
}

impl Tracker {
    pub fn new(node_id: u32, params: TrackerParams) -> Self {
        Tracker { node_id, params, tracks: Vec::new(), next_id: 1, last_timestamp: None }
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    fn spawn(&mut self, obs: &LabeledObject, t: Timestamp) {
        let r = self.params.measurement_sigma.powi(2);
        let mut cov = Matrix5::zeros();
        cov[(X, X)] = r;
        cov[(Y, Y)] = r;
        let mut track = TrackState {
            mean: Vector5::new(obs.position.x, obs.position.y, 0.0, 0.0, 0.0),
            covariance: cov,
            class: obs.class,
            track_id: self.next_id,
            hits: 1,
            misses: 0,
            last_update: t,
            confirmed: self.params.confirm_hits <= 1,
            heading: Heading::Pending { x: obs.position.x, y: obs.position.y, t },
        };
        freeze_motion(&mut track);
        self.next_id += 1;
        self.tracks.push(track);
    }

    fn correct(&self, track: &mut TrackState, z: &Vector2<f64>, t: Timestamp) {
        let h = Matrix2x5::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let r = Matrix2::identity() * self.params.measurement_sigma.powi(2);
        let innovation = z - h * track.mean;
        let s = h * track.covariance * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else { return };
        let k: Matrix5x2<f64> = track.covariance * h.transpose() * s_inv;
        track.mean += k * innovation;
        let i_kh = Matrix5::identity() - k * h;
        track.covariance = i_kh * track.covariance * i_kh.transpose() + k * r * k.transpose();
        symmetrize(&mut track.covariance);

        match track.heading {
            Heading::Pending { x, y, t: t0 } => {
                freeze_motion(track);
                let (dx, dy) = (track.mean[X] - x, track.mean[Y] - y);
                let dist = dx.hypot(dy);
                let elapsed = (t - t0).as_secs_f64();
                if dist > self.params.init_displacement && elapsed > 0.0 {
                    track.mean[YAW] = dy.atan2(dx);
                    track.mean[V] = dist / elapsed;
                    track.covariance[(YAW, YAW)] = 0.05;
                    track.covariance[(V, V)] = 0.1;
                    track.covariance[(OMEGA, OMEGA)] = 0.1;
                    track.heading = Heading::Known;
                }
            }
            Heading::Known => {
                if track.mean[V] < 0.0 {
                    // same motion, opposite heading
                    track.mean[V] = -track.mean[V];
                    track.mean[YAW] += std::f64::consts::PI;
                    let mut j = Matrix5::identity();
                    j[(V, V)] = -1.0;
                    track.covariance = j * track.covariance * j.transpose();
                }
            }
        }
        track.mean[YAW] = normalize_angle(track.mean[YAW]);
    }

    /// Runs one tracking cycle and reports the confirmed tracks.
    pub fn update(&mut self, observations: &[LabeledObject], timestamp: Timestamp) -> StampedObjectList {
        if let Some(prev) = self.last_timestamp {
            assert!(timestamp >= prev, "tracker frames must be time-ordered");
        }
        self.last_timestamp = Some(timestamp);

        for track in &mut self.tracks {
            let dt = (timestamp - track.last_update).as_secs_f64();
            *track = ctrv_predict(track, dt.max(0.0), &ProcessNoise::for_class(track.class));
            track.last_update = timestamp;
        }

        let cost: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| {
                observations
                    .iter()
                    .map(|o| {
                        let d = (o.position - t.position()).norm();
                        if !t.class.compatible(o.class) || d > self.params.gate {
                            FORBIDDEN
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect();
        let matches = if self.tracks.is_empty() || observations.is_empty() {
            Vec::new()
        } else {
            assignment::solve_gated(&cost, self.params.gate)
        };

        let mut track_hit = vec![false; self.tracks.len()];
        let mut obs_used = vec![false; observations.len()];
        for &(ti, oi, _) in &matches {
            track_hit[ti] = true;
            obs_used[oi] = true;
            let mut track = self.tracks[ti].clone();
            self.correct(&mut track, &observations[oi].position, timestamp);
            track.class = track.class.refine(observations[oi].class);
            track.hits += 1;
            track.misses = 0;
            if track.hits >= self.params.confirm_hits {
                track.confirmed = true;
            }
            self.tracks[ti] = track;
        }
        for (ti, hit) in track_hit.iter().enumerate() {
            if !hit {
                self.tracks[ti].misses += 1;
            }
        }
        let max_misses = self.params.max_misses;
        self.tracks.retain(|t| if t.confirmed { t.misses <= max_misses } else { t.misses == 0 });

        for (oi, used) in obs_used.iter().enumerate() {
            if !used {
                self.spawn(&observations[oi], timestamp);
            }
        }

        StampedObjectList {
            node_id: self.node_id,
            capture_timestamp: timestamp,
            objects: self.tracks.iter().filter(|t| t.confirmed).map(ReportedObject::from_track).collect(),
        }
    }
}

/// Smallest eigenvalue of a symmetric 5x5 matrix.
pub fn min_eigenvalue(m: &Matrix5<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}
