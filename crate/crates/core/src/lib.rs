//! Anchor-based trajectory proposal with iterative BEV-aware refinement, a
//! learned multi-criteria trajectory scorer, and a deterministic driving-metric
//! oracle that both evaluates plans and labels scorer training data.

pub mod anchors;
pub mod bev;
pub mod config;
pub mod decoder;
pub mod epdms;
pub mod error;
pub mod geometry;
pub mod mining;
pub mod nn;
pub mod pipeline;
pub mod postproc;
pub mod scene;
pub mod scorer;
pub mod synth;

pub use error::{Error, Result};
