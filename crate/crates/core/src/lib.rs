//! Distribution-aware diffusion maps for locating phase transitions in
//! parameter sweeps of configurational snapshots.
//!
//! Each setting of the control parameter contributes an ensemble of
//! snapshots. Snapshots are mapped to weighted Haar coefficients, each
//! ensemble is summarized by its mean and covariance, and ensembles are
//! compared with a covariance-whitened distance. A diffusion map of the
//! resulting kernel orders the settings along a low-dimensional coordinate,
//! and a tanh fit (or a k-means split) of that coordinate yields the critical
//! parameter.

pub mod cluster;
pub mod detect;
pub mod embed;
pub mod error;
pub mod kernel;
pub mod observables;
pub mod physics;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod store;
pub mod wavelet;

pub use error::{Error, ErrorClass, Result};
