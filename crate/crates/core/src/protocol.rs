//! Per-node protocol logic: query processing (duplicate suppression, local
//! match, TTL, forwarding under either strategy), reverse-path hit routing,
//! and hit scoring at the requester.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::cost::{
    final_hit_cost, link_cost, update_past_response, CostModel, CostWeights, HitScore,
    PastResponse, QosConstraints, RankedHit,
};
use crate::error::ProtocolError;
use crate::scalar::Scalar;
use crate::topology::{LinkProps, NodeId, ObjectId, Topology};

/// Forwarding strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Forward only over links whose probed cost meets the QoS threshold.
    QosAdaptive,
    /// Forward to every neighbor except the sender.
    Flooding,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::QosAdaptive => "qos",
            Strategy::Flooding => "flooding",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // pad() keeps width/alignment specs working in format strings.
        f.pad(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "qos" => Ok(Strategy::QosAdaptive),
            "flooding" => Ok(Strategy::Flooding),
            other => Err(format!("unknown strategy: {other} (expected qos|flooding)")),
        }
    }
}

/// Globally unique query identifier (one per query epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A query in flight over one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMessage<S> {
    pub message_id: MessageId,
    pub keyword: ObjectId,
    pub ttl: u32,
    pub constraints: QosConstraints<S>,
    pub accumulated_cost: S,
    pub sender_id: NodeId,
    pub requester_id: NodeId,
    /// True once any traversed hop exceeded the admission threshold
    /// (only flooding can set it). Engine-internal bookkeeping that lets
    /// metrics cross-check the trace-based classification.
    pub(crate) violated: bool,
}

/// An answer travelling back along the reverse path.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryHitMessage<S> {
    pub message_id: MessageId,
    pub responder_id: NodeId,
    pub num_files: u32,
    pub accumulated_cost: S,
    pub(crate) violated: bool,
}

/// Everything one node knows: its neighbor table (probed link properties),
/// per-epoch duplicate cache and reverse-path table, the smoothed history
/// of past responders, and its own inventory with per-object match counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<S> {
    pub id: NodeId,
    pub neighbors: BTreeMap<NodeId, LinkProps<S>>,
    pub seen_queries: BTreeSet<MessageId>,
    pub reverse_path: BTreeMap<MessageId, NodeId>,
    pub hit_history: BTreeMap<NodeId, PastResponse<S>>,
    pub inventory: BTreeMap<ObjectId, u32>,
}

impl<S: Scalar> NodeState<S> {
    pub fn new(id: NodeId) -> Self {
        NodeState {
            id,
            neighbors: BTreeMap::new(),
            seen_queries: BTreeSet::new(),
            reverse_path: BTreeMap::new(),
            hit_history: BTreeMap::new(),
            inventory: BTreeMap::new(),
        }
    }

    /// Clears the per-epoch caches; the hit history survives across epochs.
    pub fn begin_epoch(&mut self) {
        self.seen_queries.clear();
        self.reverse_path.clear();
    }

    /// Cost of the link to `neighbor` from this node's probed view.
    pub fn neighbor_link_cost(
        &self,
        neighbor: NodeId,
        model: &CostModel<S>,
    ) -> Result<S, ProtocolError> {
        let props = self
            .neighbors
            .get(&neighbor)
            .ok_or(ProtocolError::UnknownNeighbor(self.id, neighbor))?;
        link_cost(props, model).map_err(|_| ProtocolError::UnknownNeighbor(self.id, neighbor))
    }

    /// Number of matching files for `object`, if this node holds it.
    pub fn match_count(&self, object: ObjectId) -> Option<u32> {
        self.inventory.get(&object).copied()
    }
}

/// Refreshes `state.neighbors` from ground truth. With `noise > 0` the
/// probed bandwidth is jittered by a relative factor in `[-noise, +noise]`
/// and clamped back into `(0, max_bw]`, modelling stale or imprecise
/// measurements; latency probes stay exact.
pub fn probe_neighbors<S: Scalar, R: Rng + ?Sized>(
    state: &mut NodeState<S>,
    topology: &Topology<S>,
    noise: &S,
    rng: &mut R,
) {
    let mut fresh = BTreeMap::new();
    for neighbor in topology.neighbors(state.id) {
        let props = topology
            .link(state.id, neighbor)
            .expect("adjacency and link map agree")
            .clone();
        let props = if *noise > S::zero() {
            let u = S::sample_open_closed(&S::from_int(2), rng) - S::one(); // (-1, 1]
            let factor = S::one() + noise.clone() * u;
            let mut bw = props.bandwidth.clone() * factor;
            let floor = topology.max_bw().clone() * S::ratio(1, 1_000_000_000);
            if bw < floor {
                bw = floor;
            }
            if bw > *topology.max_bw() {
                bw = topology.max_bw().clone();
            }
            LinkProps {
                bandwidth: bw,
                latency: props.latency,
            }
        } else {
            props
        };
        fresh.insert(neighbor, props);
    }
    state.neighbors = fresh;
}

/// One query scheduled for a neighbor, with the probed cost of that hop.
#[derive(Debug, Clone, PartialEq)]
pub struct OutboundQuery<S> {
    pub target: NodeId,
    pub hop_cost: S,
    pub query: QueryMessage<S>,
}

/// Outcome of processing one incoming query at one node.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryDisposition<S> {
    /// Already seen this message id in the current epoch.
    Duplicate,
    /// This node holds the keyword: answer, never forward.
    LocalHit(QueryHitMessage<S>),
    /// TTL exhausted before forwarding.
    TtlExpired,
    /// Forwarded to zero or more neighbors; `rejected` lists neighbors
    /// whose probed link cost missed the admission threshold.
    Forwarded {
        sent: Vec<OutboundQuery<S>>,
        rejected: Vec<(NodeId, S)>,
    },
}

/// Runs one query through a node, in order: duplicate suppression, local
/// match, TTL check, then forwarding to every neighbor except the sender.
/// Under the QoS strategy a neighbor is admitted iff the probed cost of
/// that hop is at most the query's threshold; flooding admits everyone.
/// Accumulated cost grows by the probed hop cost under both strategies.
///
/// The originator calls this on itself with `sender_id == requester_id`
/// and zero accumulated cost.
pub fn process_query<S: Scalar>(
    state: &mut NodeState<S>,
    query: &QueryMessage<S>,
    strategy: Strategy,
    model: &CostModel<S>,
) -> QueryDisposition<S> {
    if state.seen_queries.contains(&query.message_id) {
        return QueryDisposition::Duplicate;
    }
    state.seen_queries.insert(query.message_id);
    state.reverse_path.insert(query.message_id, query.sender_id);

    if let Some(num_files) = state.match_count(query.keyword) {
        return QueryDisposition::LocalHit(QueryHitMessage {
            message_id: query.message_id,
            responder_id: state.id,
            num_files,
            accumulated_cost: query.accumulated_cost.clone(),
            violated: query.violated,
        });
    }

    if query.ttl == 0 {
        return QueryDisposition::TtlExpired;
    }

    let mut sent = Vec::new();
    let mut rejected = Vec::new();
    for (&neighbor, props) in &state.neighbors {
        if neighbor == query.sender_id {
            continue;
        }
        let hop_cost = match link_cost(props, model) {
            Ok(c) => c,
            Err(_) => continue, // unrateable probe; treat the link as down
        };
        let admitted = match strategy {
            Strategy::QosAdaptive => query.constraints.admits(&hop_cost),
            Strategy::Flooding => true,
        };
        if admitted {
            sent.push(OutboundQuery {
                target: neighbor,
                hop_cost: hop_cost.clone(),
                query: QueryMessage {
                    message_id: query.message_id,
                    keyword: query.keyword,
                    ttl: query.ttl - 1,
                    constraints: query.constraints.clone(),
                    accumulated_cost: query.accumulated_cost.clone() + hop_cost.clone(),
                    sender_id: state.id,
                    requester_id: query.requester_id,
                    violated: query.violated || !query.constraints.admits(&hop_cost),
                },
            });
        } else {
            rejected.push((neighbor, hop_cost));
        }
    }
    QueryDisposition::Forwarded { sent, rejected }
}

/// Next step for a hit sitting at `state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitRoute {
    /// This node is the requester; consume the hit here.
    Delivered,
    /// Relay to the recorded previous hop.
    Next(NodeId),
}

/// Looks up where a hit goes from this node: the requester consumes it,
/// anyone else relays it to the neighbor the query arrived from.
pub fn route_hit<S: Scalar>(
    state: &NodeState<S>,
    message_id: MessageId,
    requester: NodeId,
) -> Result<HitRoute, ProtocolError> {
    if state.id == requester {
        return Ok(HitRoute::Delivered);
    }
    state
        .reverse_path
        .get(&message_id)
        .map(|&n| HitRoute::Next(n))
        .ok_or(ProtocolError::BrokenPath(state.id, message_id))
}

/// Requester-side bookkeeping for one arriving hit: fetches (or seeds at
/// the neutral prior) the responder's past-response score, folds the new
/// answer in, and scores the hit.
pub fn receive_query_hit<S: Scalar>(
    state: &mut NodeState<S>,
    hit: &QueryHitMessage<S>,
    max_files: u32,
    weights: &CostWeights<S>,
) -> HitScore<S> {
    let prior = state
        .hit_history
        .get(&hit.responder_id)
        .cloned()
        .unwrap_or_default();
    let updated = update_past_response(&prior, hit.num_files, max_files)
        .unwrap_or_else(|_| prior.clone());
    let final_cost = final_hit_cost(&hit.accumulated_cost, &updated, weights);
    state.hit_history.insert(hit.responder_id, updated);
    HitScore {
        responder: hit.responder_id,
        num_files: hit.num_files,
        accumulated_cost: hit.accumulated_cost.clone(),
        final_cost,
    }
}

/// Ranks the hits collected in one epoch for presentation.
pub fn collect_and_rank<S: Scalar>(hits: Vec<HitScore<S>>) -> Vec<RankedHit<S>> {
    crate::cost::rank_hits(hits)
}
