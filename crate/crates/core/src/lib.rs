//! Topology-aware anomaly detection for power-grid sensor streams.
//!
//! Sensors report line flows while the grid's topology changes. Each history
//! tick is weighted by how similar its topology is to the current one, using
//! a distance built from line outage distribution factors, and the current
//! readings are scored with weighted robust statistics.
//!
//! The pieces, bottom-up: [`grid`] (buses, branches, masks), [`case_io`]
//! (file formats), [`dc`] (DC power flow, PTDF, LODF), [`distance`],
//! [`weighting`], [`stats`], [`detector`], [`simulator`] and [`evaluation`].

pub mod case_io;
pub mod dc;
pub mod detector;
pub mod distance;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod simulator;
pub mod stats;
pub mod weighting;

pub use error::{Error, Result};
