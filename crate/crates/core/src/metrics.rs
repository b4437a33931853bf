//! Experiment metrics: per-run tallies in CSV-ready form, and a trace
//! post-processor that reconstructs each delivered hit's query path to
//! decide whether it crossed an inadmissible hop ("unwanted" hit).

use std::collections::BTreeMap;

use crate::engine::EventCounts;
use crate::error::TraceError;
use crate::protocol::{MessageId, Strategy};
use crate::scalar::Scalar;
use crate::topology::{link_key, NodeId};
use crate::trace::{TraceKind, TraceRecord};

/// One sweep cell: integer tallies of a whole run. The per-query averages
/// are derived on demand, never stored, so a parsed CSV row reproduces the
/// metrics exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunMetrics {
    pub ttl: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub queries: u64,
    pub messages: u64,
    pub hits: u64,
    pub unwanted_hits: u64,
    pub lost_hits: u64,
}

impl RunMetrics {
    pub fn from_counts(
        ttl: u32,
        strategy: Strategy,
        seed: u64,
        queries: u64,
        counts: &EventCounts,
    ) -> Self {
        RunMetrics {
            ttl,
            strategy,
            seed,
            queries,
            messages: counts.forwards,
            hits: counts.hits_delivered,
            unwanted_hits: counts.unwanted_hits,
            lost_hits: counts.hits_lost,
        }
    }

    pub fn avg_messages_per_query(&self) -> f64 {
        self.messages as f64 / self.queries.max(1) as f64
    }

    pub fn avg_hits_per_query(&self) -> f64 {
        self.hits as f64 / self.queries.max(1) as f64
    }

    /// Delivered hits that met every hop's admission threshold.
    pub fn wanted_hits(&self) -> u64 {
        self.hits - self.unwanted_hits
    }
}

/// Verdict on one delivered hit.
#[derive(Debug, Clone, PartialEq)]
pub struct HitPathClass {
    pub message_id: MessageId,
    pub responder: NodeId,
    pub requester: NodeId,
    /// Query path requester -> responder, inclusive.
    pub path: Vec<NodeId>,
    /// True iff some hop's probed cost exceeded `max_cost`.
    pub unwanted: bool,
}

/// Classifies every delivered hit by replaying its query path out of the
/// trace. The path is walked backwards from the responder: the predecessor
/// of a node processed at time `t` is the node whose `FORWARD` to it
/// satisfies `forward_time + link_latency == t`. Link latencies of
/// departed nodes must still be present in `link_latencies` (the engine
/// archives them).
pub fn classify_unwanted<S: Scalar>(
    trace: &[TraceRecord<S>],
    link_latencies: &BTreeMap<(NodeId, NodeId), S>,
    max_cost: &S,
) -> Result<Vec<HitPathClass>, TraceError> {
    // Forwards grouped per message id, in trace order.
    let mut forwards: BTreeMap<MessageId, Vec<&TraceRecord<S>>> = BTreeMap::new();
    // Time each responder answered, per (message, responder).
    let mut sent_at: BTreeMap<(MessageId, NodeId), &TraceRecord<S>> = BTreeMap::new();
    for rec in trace {
        match rec.kind {
            TraceKind::Forward => forwards.entry(rec.message_id).or_default().push(rec),
            TraceKind::HitSent => {
                sent_at.entry((rec.message_id, rec.node)).or_insert(rec);
            }
            _ => {}
        }
    }

    let mut classes = Vec::new();
    for rec in trace {
        if rec.kind != TraceKind::HitDelivered {
            continue;
        }
        let requester = rec.node;
        let responder = rec
            .detail
            .ok_or(TraceError::PathReconstruction(rec.message_id, requester))?;
        let sent = sent_at
            .get(&(rec.message_id, responder))
            .ok_or(TraceError::PathReconstruction(rec.message_id, responder))?;

        // Walk back from the responder to the requester.
        let mut path_rev = vec![responder];
        let mut at = responder;
        let mut processed_at = sent.time.clone();
        let mut unwanted = false;
        let empty = Vec::new();
        let mid_forwards = forwards.get(&rec.message_id).unwrap_or(&empty);
        while at != requester {
            let hop = mid_forwards
                .iter()
                .find(|f| {
                    f.detail == Some(at)
                        && link_latencies
                            .get(&link_key(f.node, at))
                            .is_some_and(|ll| f.time.clone() + ll.clone() == processed_at)
                })
                .ok_or(TraceError::PathReconstruction(rec.message_id, at))?;
            if hop.cost > *max_cost {
                unwanted = true;
            }
            at = hop.node;
            processed_at = hop.time.clone();
            path_rev.push(at);
            if path_rev.len() > mid_forwards.len() + 1 {
                return Err(TraceError::PathReconstruction(rec.message_id, at));
            }
        }
        path_rev.reverse();
        classes.push(HitPathClass {
            message_id: rec.message_id,
            responder,
            requester,
            path: path_rev,
            unwanted,
        });
    }
    Ok(classes)
}
