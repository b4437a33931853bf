//! Built-in eight-node demonstration scenario. Node A queries for an
//! object held by F (14 files) and H (6 files) under the canonical
//! configuration (scale maxima 10/100/50, weights 65/20/15, QoS floor 2
//! bandwidth at ceiling 20 latency, TTL 5). The numbers work out exactly,
//! which makes this the fixture for end-to-end cost verification:
//!
//! * admission threshold 6.25;
//! * A forwards only to C (the A-B link costs 6.45 and is rejected);
//! * both holders answer: accumulated costs 17.50 via C-D-F and 17.05
//!   via C-E-H;
//! * with seeded histories (F at 5, H at 4) the final costs are 18.34
//!   and 17.80, so H outranks F despite holding fewer files.

use crate::config::SimConfig;
use crate::cost::{PastResponse, RankedHit};
use crate::engine::{EventCounts, Simulation};
use crate::error::SimError;
use crate::protocol::Strategy;
use crate::scalar::Scalar;
use crate::topology::{NodeId, ObjectId, Topology};
use crate::trace::{TraceKind, TraceRecord};

pub const DEMO_REQUESTER: NodeId = NodeId(0);
pub const DEMO_OBJECT: ObjectId = ObjectId(0);

/// Human-readable labels A..H for the demo's nodes.
pub fn node_label(id: NodeId) -> char {
    match id.0 {
        0..=7 => (b'A' + id.0 as u8) as char,
        _ => '?',
    }
}

/// What the demo run produced, from the requester's point of view.
#[derive(Debug, Clone)]
pub struct DemoReport<S> {
    pub max_cost: S,
    /// Neighbors of A the query was forwarded to.
    pub admitted: Vec<NodeId>,
    /// Neighbors of A rejected by the admission test, with the hop cost.
    pub rejected: Vec<(NodeId, S)>,
    pub results: Vec<RankedHit<S>>,
    pub counts: EventCounts,
    pub trace: Vec<TraceRecord<S>>,
}

/// The fixed demo overlay (bandwidth, latency per link):
///
/// ```text
///       B(2,30)--G          A-B is rejected: cost 6.45 > 6.25
///      /
///     A --- C(2,20)         cost 6.25 (boundary, admitted)
///           |   \
///        D(4,40) E(4,60)    costs 5.35 and 5.75
///           |      \
///        F(5,100) H(6,90)   costs 5.90 and 5.05; F and H hold the object
/// ```
pub fn demo_topology<S: Scalar>() -> Topology<S> {
    let int = S::from_int;
    let edges = [
        (0u32, 1u32, 2i64, 30i64), // A-B
        (0, 2, 2, 20),             // A-C
        (1, 6, 10, 10),            // B-G
        (2, 3, 4, 40),             // C-D
        (2, 4, 4, 60),             // C-E
        (3, 5, 5, 100),            // D-F
        (4, 7, 6, 90),             // E-H
    ];
    let edges: Vec<(u32, u32, S, S)> = edges
        .iter()
        .map(|&(u, v, bw, ll)| (u, v, int(bw), int(ll)))
        .collect();
    Topology::from_parts(
        int(10),
        int(100),
        8,
        &edges,
        &[(5, &[0]), (7, &[0])],
    )
    .expect("demo topology is well-formed")
}

/// Demo configuration: canonical scales and constraints, one QoS query.
pub fn demo_config<S: Scalar>() -> SimConfig<S> {
    SimConfig {
        node_count: 8,
        object_count: 1,
        max_objects_per_peer: 1,
        deg_min: 1,
        deg_avg: 1.75,
        deg_max: 3,
        ttl: 5,
        queries_per_run: 1,
        strategy: Strategy::QosAdaptive,
        ..SimConfig::default()
    }
}

/// Runs the demo query and gathers the report.
pub fn run_demo<S: Scalar>() -> Result<DemoReport<S>, SimError> {
    let mut sim = Simulation::with_topology(demo_config(), demo_topology())?;
    sim.set_file_count(NodeId(5), DEMO_OBJECT, 14)?;
    sim.set_file_count(NodeId(7), DEMO_OBJECT, 6)?;
    sim.seed_past_response(
        DEMO_REQUESTER,
        NodeId(5),
        PastResponse::new(S::from_int(5)).expect("5 is on the scale"),
    )?;
    sim.seed_past_response(
        DEMO_REQUESTER,
        NodeId(7),
        PastResponse::new(S::from_int(4)).expect("4 is on the scale"),
    )?;
    sim.run_query(DEMO_REQUESTER, DEMO_OBJECT)?;

    let admitted = sim
        .trace()
        .iter()
        .filter(|r| r.kind == TraceKind::Forward && r.node == DEMO_REQUESTER)
        .filter_map(|r| r.detail)
        .collect();
    let rejected = sim
        .trace()
        .iter()
        .filter(|r| r.kind == TraceKind::DropCost && r.node == DEMO_REQUESTER)
        .filter_map(|r| r.detail.map(|n| (n, r.cost.clone())))
        .collect();
    let results = sim.reports()[0].results.clone();
    Ok(DemoReport {
        max_cost: sim.constraints().max_cost().clone(),
        admitted,
        rejected,
        results,
        counts: *sim.counts(),
        trace: sim.trace().to_vec(),
    })
}
