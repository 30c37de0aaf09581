//! Core algorithms for parco-sdf: deformable-torus data generation, a
//! point-cloud sequence encoder, a modulated sine SDF network, training,
//! and mesh extraction with topology-aware metrics.
//!
//! Everything is f64 and deterministic: random draws go through seeded
//! ChaCha8 streams derived in [`seed`], and numeric kernels are shared
//! between the training tape and the raw inference path.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod params;
pub mod recon;
pub mod sdfnet;
pub mod seed;
pub mod training;
pub mod vec3;

pub use error::{CheckpointError, ConfigError, DataError, Error, Result, TapeError};
