//! Moving-object detection for dynamic visual odometry.
//!
//! The crate is organized around a small batch pipeline: a seeded scene
//! simulator stands in for the tracking/flow/detection front ends, the
//! dynamic-points stage scores point tracks against an anchor-predicted
//! camera-motion prior under a heavy-tailed trajectory likelihood, the
//! object-filter stage turns dynamic points plus detection boxes into
//! per-frame object masks, and the trajectory-evaluation stage measures
//! how much masking improves a per-frame pose estimate.
//!
//! Every stage is deterministic: identical configuration and seed produce
//! bit-identical outputs.

pub mod dynamic_points;
pub mod geometry;
pub mod object_filter;
pub mod scene;
pub mod traj_eval;
