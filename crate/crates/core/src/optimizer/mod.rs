//! Joint blocklength and power allocation.
//!
//! The energy-minimization problem is non-convex. It is solved by a sequence
//! of convex subproblems ([`subproblem`]) built around the previous iterate:
//! a tangent bound on `1/L̄`, a fractional-programming linearization of the
//! rate term, and a penalized linearization of the sensing SINR row. Each
//! subproblem is solved by the barrier method in [`barrier`].
//!
//! Three modes are available: the end-to-end energy objective, a baseline
//! that only counts transmit energy, and the end-to-end objective without
//! sensing.

pub mod barrier;
mod algorithm;
pub mod subproblem;

pub use algorithm::{
    network_availability, run_algorithm1, verify, AllocationResult, Availability, FeasibilityReport, IterationRecord,
    OptimizerOptions,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// End-to-end energy with the sensing requirement.
    E2eIsac,
    /// Transmit energy only, same constraints.
    TxOnlyIsac,
    /// End-to-end energy, communication only.
    E2eNoSensing,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::E2eIsac, Mode::TxOnlyIsac, Mode::E2eNoSensing];

    pub fn sensing(self) -> bool {
        !matches!(self, Mode::E2eNoSensing)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::E2eIsac => "e2e_isac",
            Mode::TxOnlyIsac => "tx_only_isac",
            Mode::E2eNoSensing => "e2e_no_sensing",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mode `{s}` (expected e2e_isac, tx_only_isac or e2e_no_sensing)"))
    }
}

/// One point of the outer iteration, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    /// Amplitudes `√ρ_j` (√W), index 0 is the sensing stream.
    pub q: Vec<f64>,
    /// SINR surrogates.
    pub chi: Vec<f64>,
    /// Interference-plus-noise surrogates (W).
    pub r: Vec<f64>,
    /// Continuous blocklength.
    pub l: f64,
    /// Surrogate for `1/(L − L_p)`.
    pub l_bar: f64,
    /// Sensing slack relative to the receiver noise floor.
    pub chi0: f64,
}

impl IterateState {
    /// `Σ_j ρ_j`.
    pub fn q_norm2(&self) -> f64 {
        self.q.iter().map(|q| q * q).sum()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.q.iter().map(|q| q * q).collect()
    }

    /// `|L̄ (L − L_p) − 1|`.
    pub fn tightness(&self, pilot: usize) -> f64 {
        (self.l_bar * (self.l - pilot as f64) - 1.0).abs()
    }
}
