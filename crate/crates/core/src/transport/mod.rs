//! Sensor-node to center-node messaging.
//!
//! Messages are [`StampedObjectList`]s wrapped in an [`Envelope`]. The
//! [`NetworkSim`] discrete-event queue delivers them after a sampled latency;
//! [`wire`] defines the byte format shared with the optional TCP transport.

mod clock;
mod latency;
mod sim;
#[cfg(feature = "socket")]
pub mod socket;
pub mod wire;

pub use clock::{ClockModel, NodeClock};
pub use latency::{sample_latency, LatencyModel, MIN_LATENCY_MS};
pub use sim::{Event, EventKind, NetworkSim};
pub use wire::{decode, encode, DecodeError};

use serde::{Deserialize, Serialize};

use crate::tracking::StampedObjectList;
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub node_id: u32,
    /// Sender clock.
    pub send_timestamp: Timestamp,
    pub payload: StampedObjectList,
    /// Receiver clock, set on delivery.
    pub arrival_timestamp: Option<Timestamp>,
}

impl Envelope {
    pub fn new(payload: StampedObjectList, send_timestamp: Timestamp) -> Self {
        Envelope { node_id: payload.node_id, send_timestamp, payload, arrival_timestamp: None }
    }
}
