//! Center-node fusion of object lists received from the sensor nodes.
//!
//! Every received object is forward-predicted from its capture time to the
//! fusion time with the constant turn rate and velocity model. Objects from
//! different nodes are then associated and averaged with weights that favor
//! fresher reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{self, FORBIDDEN};
use crate::scene_sim::normalize_angle;
use crate::tracking::{ctrv_mean, StampedObjectList};
use crate::transport::Envelope;
use crate::{ObjectClass, Timestamp};
use nalgebra::Vector5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalFusionParams {
    /// Cross-node association gate in meters.
    pub gate: f64,
    /// Largest compensated delay in seconds; older reports are clamped and flagged.
    pub max_delay: f64,
    /// Id continuity radius between cycles in meters.
    pub id_radius: f64,
    /// Position variance of a report at zero delay, m^2.
    pub base_variance: f64,
    /// Position variance growth per second of delay for persons, m^2/s.
    pub person_variance_rate: f64,
    pub bed_variance_rate: f64,
}

impl Default for GlobalFusionParams {
    fn default() -> Self {
        GlobalFusionParams {
            gate: 1.0,
            max_delay: 0.5,
            id_radius: 0.8,
            base_variance: 0.05 * 0.05,
            person_variance_rate: 0.25,
            bed_variance_rate: 0.05,
        }
    }
}

impl GlobalFusionParams {
    pub fn variance_rate(&self, class: ObjectClass) -> f64 {
        match class {
            ObjectClass::Bed => self.bed_variance_rate,
            _ => self.person_variance_rate,
        }
    }

    /// Position variance of an object reported `delay` seconds ago.
    pub fn delayed_variance(&self, class: ObjectClass, delay: f64) -> f64 {
        self.base_variance + self.variance_rate(class) * delay
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("gate", self.gate),
            ("max_delay", self.max_delay),
            ("id_radius", self.id_radius),
            ("base_variance", self.base_variance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("global fusion {name} must be > 0, got {v}"));
            }
        }
        if self.person_variance_rate < 0.0 || self.bed_variance_rate < 0.0 {
            return Err("variance rates must be >= 0".into());
        }
        Ok(())
    }
}

/// One received object brought forward to the fusion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatedObject {
    pub node_id: u32,
    pub track_id: u32,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
    /// Applied prediction horizon in seconds.
    pub delay: f64,
    pub stale: bool,
}

/// Predicts every object of `msg` from its capture time to `now`.
pub fn compensate_delay(msg: &StampedObjectList, now: Timestamp, params: &GlobalFusionParams) -> Vec<CompensatedObject> {
    let mut dt = (now - msg.capture_timestamp).as_secs_f64();
    if dt < 0.0 {
        log::warn!(
            "node {} report stamped {} is ahead of the center clock {}; using zero delay",
            msg.node_id,
            msg.capture_timestamp,
            now
        );
        dt = 0.0;
    }
    let stale = dt > params.max_delay;
    if stale {
        dt = params.max_delay;
    }
    msg.objects
        .iter()
        .map(|o| {
            let s = ctrv_mean(&Vector5::new(o.x, o.y, o.yaw, o.v, o.omega), dt);
            CompensatedObject {
                node_id: msg.node_id,
                track_id: o.track_id,
                class: o.class,
                x: s[0],
                y: s[1],
                yaw: normalize_angle(s[2]),
                v: s[3],
                omega: s[4],
                delay: dt,
                stale,
            }
        })
        .collect()
}

/// Reports taken as they are, as the delay-ignorant baseline does.
pub fn uncompensated(msg: &StampedObjectList, now: Timestamp) -> Vec<CompensatedObject> {
    let age = (now - msg.capture_timestamp).as_secs_f64().max(0.0);
    msg.objects
        .iter()
        .map(|o| CompensatedObject {
            node_id: msg.node_id,
            track_id: o.track_id,
            class: o.class,
            x: o.x,
            y: o.y,
            yaw: o.yaw,
            v: o.v,
            omega: o.omega,
            delay: age,
            stale: false,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrack {
    #[serde(rename = "gid")]
    pub global_id: u64,
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
    /// `(node_id, track_id)` pairs that were fused into this track.
    pub contributors: Vec<(u32, u32)>,
    /// Fusion weight of each contributor, in the same order; sums to 1.
    #[serde(skip)]
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub fusion_timestamp: Timestamp,
    /// Largest report age among the contributors.
    pub staleness_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    DelayAware,
    Baseline,
}

impl FusionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::DelayAware => "delay_aware",
            FusionMethod::Baseline => "baseline",
        }
    }
}

struct Group {
    members: Vec<(CompensatedObject, f64)>,
}

impl Group {
    fn position(&self) -> (f64, f64) {
        let total: f64 = self.members.iter().map(|(_, w)| w).sum();
        let x = self.members.iter().map(|(o, w)| o.x * w).sum::<f64>() / total;
        let y = self.members.iter().map(|(o, w)| o.y * w).sum::<f64>() / total;
        (x, y)
    }

    fn class(&self) -> ObjectClass {
        self.members.iter().fold(ObjectClass::Unknown, |c, (o, _)| c.refine(o.class))
    }
}

/// Associates objects across nodes and merges each group.
///
/// Nodes are taken in ascending id order; each node's objects are matched
/// one-to-one against the groups built so far, so a group holds at most one
/// object per node.
pub fn fuse_objects(per_node: &[Vec<(CompensatedObject, f64)>], gate: f64, now: Timestamp) -> Vec<GlobalTrack> {
    let mut groups: Vec<Group> = Vec::new();
    for objects in per_node {
        if objects.is_empty() {
            continue;
        }
        let mut assigned = vec![false; objects.len()];
        if !groups.is_empty() {
            let cost: Vec<Vec<f64>> = crate::par::map(&groups, |g| {
                let (gx, gy) = g.position();
                let class = g.class();
                objects
                    .iter()
                    .map(|(o, _)| {
                        let d = (o.x - gx).hypot(o.y - gy);
                        if class.compatible(o.class) && d <= gate {
                            d
                        } else {
                            FORBIDDEN
                        }
                    })
                    .collect()
            });
            for (gi, oi, _) in assignment::solve_gated(&cost, gate) {
                groups[gi].members.push(objects[oi]);
                assigned[oi] = true;
            }
        }
        for (oi, obj) in objects.iter().enumerate() {
            if !assigned[oi] {
                groups.push(Group { members: vec![*obj] });
            }
        }
    }
    groups.iter().map(|g| merge(g, now)).collect()
}

fn merge(g: &Group, now: Timestamp) -> GlobalTrack {
    let total: f64 = g.members.iter().map(|(_, w)| w).sum();
    let weights: Vec<f64> = g.members.iter().map(|(_, w)| w / total).collect();
    let mut t = GlobalTrack {
        global_id: 0,
        class: g.class(),
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
        v: 0.0,
        omega: 0.0,
        contributors: g.members.iter().map(|(o, _)| (o.node_id, o.track_id)).collect(),
        weights: weights.clone(),
        fusion_timestamp: now,
        staleness_ms: g.members.iter().map(|(o, _)| o.delay * 1e3).fold(0.0, f64::max),
    };
    let (mut sy, mut cy) = (0.0, 0.0);
    for ((o, _), w) in g.members.iter().zip(&weights) {
        t.x += w * o.x;
        t.y += w * o.y;
        t.v += w * o.v;
        t.omega += w * o.omega;
        sy += w * o.yaw.sin();
        cy += w * o.yaw.cos();
    }
    t.yaw = if sy == 0.0 && cy == 0.0 { g.members[0].0.yaw } else { sy.atan2(cy) };
    if g.members.len() == 1 {
        // a single report passes through untouched
        let o = &g.members[0].0;
        (t.x, t.y, t.yaw, t.v, t.omega) = (o.x, o.y, o.yaw, o.v, o.omega);
    }
    t
}

/// Latest report per node, by capture time.
#[derive(Debug, Clone, Default)]
pub struct Inbox {
    latest: BTreeMap<u32, StampedObjectList>,
}

impl Inbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the envelope's payload unless a newer capture is already held.
    pub fn accept(&mut self, env: Envelope) {
        let msg = env.payload;
        match self.latest.get(&msg.node_id) {
            Some(held) if held.capture_timestamp >= msg.capture_timestamp => {}
            _ => {
                self.latest.insert(msg.node_id, msg);
            }
        }
    }

    pub fn messages(&self) -> Vec<&StampedObjectList> {
        self.latest.values().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }
}

/// Stateful center node: fuses each cycle and keeps global ids stable.
pub struct GlobalFusion {
    pub params: GlobalFusionParams,
    pub method: FusionMethod,
    previous: Vec<GlobalTrack>,
    next_id: u64,
}

impl GlobalFusion {
    pub fn new(params: GlobalFusionParams, method: FusionMethod) -> Self {
        GlobalFusion { params, method, previous: Vec::new(), next_id: 1 }
    }

    /// Delay-aware fusion of the given messages at center time `now`.
    pub fn fuse(&mut self, messages: &[&StampedObjectList], now: Timestamp) -> Vec<GlobalTrack> {
        let per_node = self.weighted_inputs(messages, now, FusionMethod::DelayAware);
        self.finish(fuse_objects(&per_node, self.params.gate, now), now)
    }

    /// Uncompensated, uniformly weighted fusion.
    pub fn fuse_baseline(&mut self, messages: &[&StampedObjectList], now: Timestamp) -> Vec<GlobalTrack> {
        let per_node = self.weighted_inputs(messages, now, FusionMethod::Baseline);
        self.finish(fuse_objects(&per_node, self.params.gate, now), now)
    }

    /// Fuses with this instance's configured method.
    pub fn cycle(&mut self, messages: &[&StampedObjectList], now: Timestamp) -> Vec<GlobalTrack> {
        match self.method {
            FusionMethod::DelayAware => self.fuse(messages, now),
            FusionMethod::Baseline => self.fuse_baseline(messages, now),
        }
    }

    fn weighted_inputs(
        &self,
        messages: &[&StampedObjectList],
        now: Timestamp,
        method: FusionMethod,
    ) -> Vec<Vec<(CompensatedObject, f64)>> {
        let mut sorted: Vec<&StampedObjectList> = messages.to_vec();
        sorted.sort_by_key(|m| m.node_id);
        sorted
            .iter()
            .map(|m| match method {
                FusionMethod::DelayAware => compensate_delay(m, now, &self.params)
                    .into_iter()
                    .map(|o| {
                        let w = 1.0 / self.params.delayed_variance(o.class, o.delay);
                        (o, w)
                    })
                    .collect(),
                FusionMethod::Baseline => uncompensated(m, now).into_iter().map(|o| (o, 1.0)).collect(),
            })
            .collect()
    }

    fn finish(&mut self, mut tracks: Vec<GlobalTrack>, now: Timestamp) -> Vec<GlobalTrack> {
        let mut pairs = Vec::new();
        for (i, t) in tracks.iter().enumerate() {
            for (j, p) in self.previous.iter().enumerate() {
                let dt = (now - p.fusion_timestamp).as_secs_f64().max(0.0);
                let s = ctrv_mean(&Vector5::new(p.x, p.y, p.yaw, p.v, p.omega), dt);
                let d = (t.x - s[0]).hypot(t.y - s[1]);
                if d <= self.params.id_radius && t.class.compatible(p.class) {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_done = vec![false; tracks.len()];
        let mut prev_done = vec![false; self.previous.len()];
        for (_, i, j) in pairs {
            if !track_done[i] && !prev_done[j] {
                tracks[i].global_id = self.previous[j].global_id;
                track_done[i] = true;
                prev_done[j] = true;
            }
        }
        for (i, t) in tracks.iter_mut().enumerate() {
            if !track_done[i] {
                t.global_id = self.next_id;
                self.next_id += 1;
            }
        }
        self.previous = tracks.clone();
        tracks
    }
}
