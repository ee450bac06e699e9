use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Timestamp;

/// Offset and drift of one node's clock relative to global time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeClock {
    pub offset_ms: f64,
    pub drift_ppm: f64,
}

impl NodeClock {
    pub fn local_time(&self, global: Timestamp) -> Timestamp {
        let g = global.micros() as f64;
        Timestamp((g + self.offset_ms * 1e3 + g * self.drift_ppm * 1e-6).round() as i64)
    }
}

/// Per-node clocks. Nodes without an entry, including the center, are perfect.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockModel {
    #[serde(default)]
    pub nodes: BTreeMap<u32, NodeClock>,
    /// Largest allowed absolute offset.
    #[serde(default = "default_bound")]
    pub max_offset_ms: f64,
}

fn default_bound() -> f64 {
    100.0
}

impl ClockModel {
    pub fn perfect() -> Self {
        ClockModel { nodes: BTreeMap::new(), max_offset_ms: default_bound() }
    }

    pub fn with_node(mut self, node_id: u32, clock: NodeClock) -> Self {
        self.nodes.insert(node_id, clock);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (id, c) in &self.nodes {
            if c.offset_ms.abs() > self.max_offset_ms {
                return Err(format!("node {id} clock offset {} ms exceeds bound {} ms", c.offset_ms, self.max_offset_ms));
            }
            if !c.drift_ppm.is_finite() {
                return Err(format!("node {id} clock drift is not finite"));
            }
        }
        Ok(())
    }

    pub fn local_time(&self, node_id: u32, global: Timestamp) -> Timestamp {
        self.nodes.get(&node_id).map_or(global, |c| c.local_time(global))
    }
}
