//! Safe autonomous landing for multirotor UAVs from a nadir camera and an
//! altitude sensor.
//!
//! The pipeline projects per-pixel class probabilities onto a metric ground
//! map, refines the map over time, extracts landing spots that keep a metric
//! safety radius clear, and drives the landing with a behavior tree. The
//! [`sim`] and [`harness`] modules close the loop against a deterministic
//! simulated world.

pub mod bt;
pub mod classes;
pub mod geometry;
pub mod grid_io;
pub mod harness;
pub mod scenario;
pub mod segmentation;
pub mod semantic_map;
pub mod sim;
pub mod spot;

pub use classes::{ClassId, ClassProbs, ClassSet, NUM_CLASSES};
