//! Deterministic discrete-event simulator of keyword lookup in
//! unstructured peer-to-peer overlays. Two forwarding strategies run side
//! by side: plain flooding, and QoS-constrained adaptive forwarding that
//! admits a hop only when its composite cost (a weighted blend of
//! bandwidth and latency ratings, with responder history folded into the
//! final ranking) stays within the threshold derived from the query's
//! bandwidth floor and latency ceiling.
//!
//! The crate is generic over the numeric type: [`Real`] (`f64`) is the
//! working scalar for experiment sweeps, while [`Exact`] (a 64-bit
//! rational) makes entire runs exact, which the cost-arithmetic tests
//! rely on.
//!
//! Entry points:
//! * [`engine::Simulation`] / [`engine::run_simulation`] — one run;
//! * [`sweep::run_sweep`] — a TTL x strategy x seed grid with CSV output;
//! * [`demo::run_demo`] — the built-in eight-node scenario;
//! * [`metrics::classify_unwanted`] — trace post-processing.

pub mod config;
pub mod cost;
pub mod demo;
pub mod engine;
mod error;
pub mod metrics;
pub mod protocol;
pub mod scalar;
pub mod sweep;
pub mod topology;
pub mod trace;

pub use config::{ChurnModel, SimConfig};
pub use cost::{CostModel, CostWeights, PastResponse, QosConstraints, Rating};
pub use engine::{run_simulation, EventCounts, QueryReport, SimRun, Simulation};
pub use error::{ConfigError, DomainError, ProtocolError, SimError, TraceError};
pub use metrics::{classify_unwanted, RunMetrics};
pub use protocol::{MessageId, NodeState, Strategy};
pub use scalar::Scalar;
pub use sweep::{run_sweep, SweepResult, SweepSpec};
pub use topology::{LinkProps, NodeId, ObjectId, Topology};
pub use trace::{TraceKind, TraceRecord};

/// Working scalar for sweeps and the CLI.
pub type Real = f64;

/// Exact scalar: keeps every cost computation free of rounding.
pub type Exact = num_rational::Rational64;

/// A simulation over the working scalar.
pub type RealSimulation = Simulation<Real>;

/// A simulation over the exact scalar.
pub type ExactSimulation = Simulation<Exact>;
