//! Delay-aware cooperative perception for indoor sensor networks.
//!
//! Each sensor node turns a LiDAR revolution plus camera detections into a
//! tracked object list ([`tracking::StampedObjectList`]). Lists travel to a
//! center node over a simulated network ([`transport`]) where they are
//! forward-predicted by their measured delay and fused ([`global_fusion`]).
//!
//! The crate also ships the synthetic scene generator that feeds the
//! pipeline ([`scene_sim`]), the detection metrics used to score it
//! ([`evaluation`]) and the experiment runners behind the `coperc` binary
//! ([`experiment`]).
//!
//! With the default `parallel` feature the data-parallel inner loops (ray
//! casting, per-ring clustering, neighbor counting, experiment grids) run on
//! rayon. Building with `--no-default-features` gives plain sequential loops
//! with identical results.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod camera_geometry;
pub mod clustering;
pub mod evaluation;
pub mod experiment;
pub mod global_fusion;
pub mod local_fusion;
pub mod par;
pub mod scenario;
pub mod scene_sim;
pub mod time;
pub mod tracking;
pub mod transport;

mod class;

pub use class::{DetectionClass, ObjectClass};
pub use time::Timestamp;
