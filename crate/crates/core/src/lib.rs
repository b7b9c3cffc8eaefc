//! Cell-free massive MIMO integrated sensing and communication (ISAC) toolkit.
//!
//! The crate covers the full chain needed to study end-to-end energy
//! consumption of a cell-free ISAC network serving URLLC users:
//!
//! * [`scenario`] builds and validates the simulated deployment.
//! * [`channel`] draws Rician user channels, Kronecker clutter channels and
//!   LMMSE estimates.
//! * [`precoding`] computes the RZF communication and null-space sensing
//!   precoders.
//! * [`moments`] estimates the deterministic statistics consumed by the
//!   optimizer.
//! * [`metrics`] evaluates finite-blocklength reliability, delay and sensing
//!   SINR.
//! * [`detection`] simulates multistatic observations and the two MAPRT
//!   detectors.
//! * [`energy`] does the GOPS and power accounting.
//! * [`optimizer`] runs the joint blocklength and power allocation and its
//!   baselines.

pub mod channel;
pub mod detection;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod optimizer;
pub mod precoding;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
