//! Exact SINR coverage probabilities and local-delay statistics for wireless
//! networks whose medium access is a finite determinantal point process.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] builds and converts determinantal kernels (marginal `K`, L-ensemble `L`).
//! * [`dpp`] is the finite-DPP algebra: minors, Palm kernels, scaling, the
//!   Laplace functional, exhaustive enumeration and the spectral sampler.
//! * [`propagation`] holds path loss, the `h`/`w` functions and SINR for a fixed
//!   interferer set under Rayleigh fading.
//! * [`coverage`] combines the two into closed-form coverage probabilities.
//! * [`montecarlo`] simulates scheduler and fading end to end.
//! * [`cli`] is the config/report layer behind the `detcov` binary.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod cli;
pub mod coverage;
pub mod dpp;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod propagation;
pub mod rng;

pub use error::{Error, Result};

/// A set of selected nodes, ordered by id.
pub type Subset = std::collections::BTreeSet<NodeId>;

/// Index of a node in declaration order (transmitter of a pair, or a node of a TX/RX network).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}
