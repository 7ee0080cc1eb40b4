//! Branch-identity tracking for time-series plant imagery.
//!
//! Buds detected in each frame are assigned to the branch points they grew
//! from by combining two kinds of evidence: current-frame geometry
//! ([`spatial`]) and cross-frame motion ([`temporal`]). A per-branch gate
//! ([`fusion`]) mixes the two before a Hungarian solve ([`assignment`]).
//! The crate also ships a procedural growth simulator, a small trainable
//! attention scorer, branch reconstruction, and the evaluation metrics.

pub mod assignment;
pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod par;
pub mod reconstruction;
pub mod scorer;
pub mod simulator;
pub mod spatial;
pub mod temporal;
pub mod tracker;
pub mod training;
pub mod types;

pub use error::{Error, Result};
