use thiserror::Error;

use crate::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    KernelInvalid(String),

    #[error("bad kernel spec: {0}")]
    BadSpec(String),

    #[error("kernel has an eigenvalue within tolerance of 1 ({max_eigenvalue}); no L-ensemble exists")]
    NotLRepresentable { max_eigenvalue: f64 },

    #[error("subset refers to node {0} which is not indexed by the kernel")]
    BadSubset(NodeId),

    #[error("exhaustive enumeration over {n} nodes exceeds the limit of {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("node {0} is never scheduled (diagonal entry is zero); Palm conditioning undefined")]
    NeverScheduled(NodeId),

    #[error("receiver node {0} is always scheduled given the transmitter; conditioning event has probability zero")]
    AlwaysScheduledReceiver(NodeId),

    #[error("transmitter and receiver are the same node {0}")]
    SameNode(NodeId),

    #[error("scaling value {value} for node {node} is outside [0, 1]")]
    BadScaling { node: NodeId, value: f64 },

    #[error("function value {value} for node {node} must be non-negative")]
    BadFunction { node: NodeId, value: f64 },

    #[error("distance {0} is singular for the power-law path loss")]
    SingularDistance(f64),

    #[error("path loss of the intended link is zero at distance {0}")]
    DegenerateSignal(f64),

    #[error("distance {r} lies outside the tabulated path-loss range [{min}, {max}]")]
    OutOfTable { r: f64, min: f64, max: f64 },

    #[error("fading value missing for transmitter {tx} at receiver {rx}")]
    IncompleteFading { tx: NodeId, rx: NodeId },

    #[error("bad geometry: {0}")]
    BadGeometry(String),

    #[error("bad argument: {0}")]
    BadArgument(String),
}
