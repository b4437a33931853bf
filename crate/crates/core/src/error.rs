//! Error types shared across the crate.

use thiserror::Error;

use crate::protocol::MessageId;
use crate::topology::NodeId;

/// A configuration or input file was rejected before a run started.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degree sequence cannot be realized: {0}")]
    Degree(String),
}

impl ConfigError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// A value fell outside the domain of one of the cost functions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("{what} must lie in (0, {max}], got {value}")]
    OutOfRange {
        what: &'static str,
        value: String,
        max: String,
    },
    #[error("rating must lie in 1..=10, got {0}")]
    Rating(String),
    #[error("file count must be at least 1")]
    ZeroFiles,
    #[error("maximum file count must be at least 1")]
    ZeroMaxFiles,
    #[error("cost weights must be non-negative and sum to 1, got {0}")]
    Weights(String),
}

/// Protocol-level bookkeeping failed (should not happen in a healthy run).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("node {0} has no such neighbor: {1}")]
    UnknownNeighbor(NodeId, NodeId),
    #[error("no reverse-path entry at node {0} for message {1}")]
    BrokenPath(NodeId, MessageId),
    #[error("unknown node: {0}")]
    UnknownNode(NodeId),
}

/// A trace could not be parsed or post-processed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot reconstruct query path for message {0} delivered to {1}")]
    PathReconstruction(MessageId, NodeId),
}

impl TraceError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        TraceError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Top-level error for running simulations and sweeps.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
