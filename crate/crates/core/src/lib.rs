//! Equivariant scene-graph networks over segmented point clouds.
//!
//! The pipeline runs scene → segment properties and encoder latents →
//! feature graph → FAN-GCL / EGCL stack → node and edge classifiers, with a
//! small reverse-mode autodiff core underneath.

pub mod encoder;
pub mod equivcheck;
pub mod error;
pub mod exec;
pub mod gnn;
pub mod graphbuild;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Exec;
