//! Patch-ensemble re-identification engine.
//!
//! Texture-anchored slice geometry for body-quarter masks, per-stream cosine
//! galleries, rank and score fusion across streams, mean-average-precision
//! evaluation under within-trajectory and cross-camera protocols, bootstrap
//! statistics, a synthetic benchmark, and an HTTP verification service.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gallery;
pub mod geometry;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod service;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
