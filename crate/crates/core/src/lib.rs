//! Stochastic two-layer quasi-geostrophic model on a doubly periodic square,
//! with determining-functional diagnostics.

pub mod determining;
pub mod dynamics;
pub mod config;
pub mod error;
pub mod harness;
pub mod noise;
pub mod snapshot;
pub mod spectral;
pub mod twolayer;

pub use error::{QgError, Result};
pub use spectral::{jacobian, Grid, SpectralField};
pub use twolayer::{derive_params, DerivedParams, LayerState, PhysicalParams, StreamPair};
