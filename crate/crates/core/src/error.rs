use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {0} is not part of the snapshot")]
    UnknownNode(NodeId),
    #[error("graph has no nodes")]
    Empty,
    #[error("graph is disconnected; diameter is undefined")]
    Disconnected,
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge {0}-{1} references a node outside the snapshot")]
    DanglingEdge(NodeId, NodeId),
    #[error("cannot deactivate node {0}: it is not active")]
    NotActive(NodeId),
    #[error("cannot activate node {0}: it is already active")]
    AlreadyActive(NodeId),
    #[error("cannot activate node {0}: it was never part of the network")]
    NeverSeen(NodeId),
    #[error("churn would leave the network empty")]
    WouldEmpty,
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("malformed edge list at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("no signal specified for agent {0}")]
    MissingSpec(NodeId),
    #[error("empty agent set")]
    EmptyActiveSet,
    #[error(
        "observed per-tick change {observed} at agent {agent}, tick {tick} exceeds declared slope bound {declared}"
    )]
    SlopeExceeded {
        agent: NodeId,
        tick: u64,
        observed: f64,
        declared: f64,
    },
    #[error("invalid signal specification: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("agent {0} has no state")]
    MissingState(NodeId),
    #[error("agent {0} has no input")]
    MissingInput(NodeId),
    #[error("cascade of agent {agent} has length {found}, expected {expected}")]
    CascadeLength {
        agent: NodeId,
        found: usize,
        expected: usize,
    },
    #[error("state kind does not match the protocol variant")]
    VariantMismatch,
    #[error("invalid protocol parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("decay alpha = {alpha} must exceed the slope bound Pi = {slope} for the tracking guarantees")]
    AlphaNotAboveSlope { alpha: f64, slope: f64 },
    #[error("bounds are not applicable: {0}")]
    NotApplicable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("need at least two random coordinates per agent, got p = {0}")]
    TooFewCoordinates(usize),
    #[error("coordinate {index} = {value} lies outside the open interval (0, 1)")]
    OutOfUnitInterval { index: usize, value: f64 },
    #[error("incomplete gamma requires x > 0, got x = {0}")]
    NonPositiveArgument(f64),
    #[error("invalid estimation parameters: {0}")]
    InvalidParameters(String),
    #[error("series or continued fraction failed to converge for a = {a}, x = {x}")]
    NoConvergence { a: f64, x: f64 },
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    /// Malformed or incomplete scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A modelling assumption the guarantees rely on does not hold.
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("tick {tick}: network is disconnected ({detail})")]
    Disconnected { tick: u64, detail: String },
    #[error("tick {tick}: non-finite state at agent {agent}")]
    NonFinite { tick: u64, agent: NodeId },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for violations of modelling assumptions (bad alpha, dwell time,
    /// connectivity, diameter bound) as opposed to malformed input.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::Assumption(_)
                | Error::Bounds(_)
                | Error::Signal(SignalError::SlopeExceeded { .. })
                | Error::Disconnected { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
