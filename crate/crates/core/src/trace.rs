//! Structured event trace of a run. Every protocol-relevant event becomes
//! one record; the text form is one tab-separated line per record:
//!
//! ```text
//! time<TAB>seq<TAB>kind<TAB>node<TAB>message_id<TAB>cost<TAB>detail
//! ```
//!
//! `detail` is a node id or `-`. Numeric fields use the scalar's lossless
//! text form, so a parsed trace compares equal to the original.

use std::fmt;
use std::str::FromStr;

use crate::error::TraceError;
use crate::protocol::MessageId;
use crate::scalar::Scalar;
use crate::topology::NodeId;

/// What happened at one node at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    /// A query left `node` toward `detail`; `cost` is that hop's probed cost.
    Forward,
    /// A query arrived at `node` but its id was already seen this epoch.
    DropDup,
    /// A query arrived at a non-holder with TTL exhausted.
    DropTtl,
    /// The QoS strategy refused the hop from `node` to `detail`; `cost` is
    /// the probed cost that missed the threshold.
    DropCost,
    /// `node` answered a query; `cost` is the accumulated path cost.
    HitSent,
    /// The requester (`node`) consumed a hit from responder `detail`.
    HitDelivered,
    /// A hit could not be relayed further (departed node or broken path).
    HitLost,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Forward => "FORWARD",
            TraceKind::DropDup => "DROP_DUP",
            TraceKind::DropTtl => "DROP_TTL",
            TraceKind::DropCost => "DROP_COST",
            TraceKind::HitSent => "HIT_SENT",
            TraceKind::HitDelivered => "HIT_DELIVERED",
            TraceKind::HitLost => "HIT_LOST",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FORWARD" => Ok(TraceKind::Forward),
            "DROP_DUP" => Ok(TraceKind::DropDup),
            "DROP_TTL" => Ok(TraceKind::DropTtl),
            "DROP_COST" => Ok(TraceKind::DropCost),
            "HIT_SENT" => Ok(TraceKind::HitSent),
            "HIT_DELIVERED" => Ok(TraceKind::HitDelivered),
            "HIT_LOST" => Ok(TraceKind::HitLost),
            other => Err(format!("unknown trace kind: {other}")),
        }
    }
}

/// One trace record. `seq` is the global event sequence number, which
/// breaks ties among records at equal simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<S> {
    pub time: S,
    pub seq: u64,
    pub kind: TraceKind,
    pub node: NodeId,
    pub message_id: MessageId,
    pub cost: S,
    pub detail: Option<NodeId>,
}

impl<S: Scalar> TraceRecord<S> {
    pub fn to_line(&self) -> String {
        let detail = match self.detail {
            Some(n) => n.to_string(),
            None => "-".to_string(),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time.format_lossless(),
            self.seq,
            self.kind,
            self.node,
            self.message_id,
            self.cost.format_lossless(),
            detail
        )
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<Self, TraceError> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [time, seq, kind, node, mid, cost, detail] = fields.as_slice() else {
            return Err(TraceError::parse(
                lineno,
                format!("expected 7 tab-separated fields, got {}", fields.len()),
            ));
        };
        let time =
            S::parse_text(time).ok_or_else(|| TraceError::parse(lineno, "bad time"))?;
        let seq: u64 = seq
            .parse()
            .map_err(|_| TraceError::parse(lineno, "bad seq"))?;
        let kind: TraceKind = kind
            .parse()
            .map_err(|e: String| TraceError::parse(lineno, e))?;
        let node: u32 = node
            .parse()
            .map_err(|_| TraceError::parse(lineno, "bad node id"))?;
        let mid: u64 = mid
            .parse()
            .map_err(|_| TraceError::parse(lineno, "bad message id"))?;
        let cost =
            S::parse_text(cost).ok_or_else(|| TraceError::parse(lineno, "bad cost"))?;
        let detail = match *detail {
            "-" => None,
            d => Some(NodeId(d.parse().map_err(|_| {
                TraceError::parse(lineno, "bad detail node id")
            })?)),
        };
        Ok(TraceRecord {
            time,
            seq,
            kind,
            node: NodeId(node),
            message_id: MessageId(mid),
            cost,
            detail,
        })
    }
}

/// Renders a whole trace, one line per record, trailing newline included.
pub fn format_trace<S: Scalar>(records: &[TraceRecord<S>]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Parses the output of [`format_trace`].
pub fn parse_trace<S: Scalar>(text: &str) -> Result<Vec<TraceRecord<S>>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceRecord::parse_line(l, i + 1))
        .collect()
}
