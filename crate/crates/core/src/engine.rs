//! Deterministic discrete-event engine. Events carry simulated time (one
//! message delay = the traversed link's latency) and a global sequence
//! number that breaks ties, so a run is a pure function of its
//! configuration and seed. Queries run in sequential epochs: per-epoch
//! caches are cleared, link bandwidths are re-randomized, nodes re-probe
//! on their probe period, then one query is injected and drained to
//! completion before the next epoch starts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::SimConfig;
use crate::cost::{CostModel, HitScore, QosConstraints, RankedHit};
use crate::error::{ProtocolError, SimError};
use crate::protocol::{
    collect_and_rank, probe_neighbors, process_query, route_hit, HitRoute, MessageId, NodeState,
    OutboundQuery, QueryDisposition, QueryHitMessage, QueryMessage,
};
use crate::scalar::Scalar;
use crate::topology::{link_key, LinkProps, NodeId, ObjectId, Topology};
use crate::trace::{TraceKind, TraceRecord};

/// What a scheduled event does when it fires.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<S> {
    /// The requester processes its own query (accumulated cost zero).
    QueryStart { query: QueryMessage<S> },
    /// A forwarded query arrives at `target`.
    DeliverQuery { target: NodeId, query: QueryMessage<S> },
    /// A hit arrives at `target` on its way back to the requester.
    DeliverHit { target: NodeId, hit: QueryHitMessage<S> },
    /// Every alive node refreshes its neighbor table.
    ProbeTick,
    /// `node` departs, dropping its links.
    NodeLeave { node: NodeId },
    /// A fresh node joins, attaching to the listed peers (if still alive).
    NodeJoin { attach_to: Vec<NodeId> },
}

/// A queue entry: fires at `time`; `seq` orders simultaneous events.
#[derive(Debug, Clone)]
struct Event<S> {
    time: S,
    seq: u64,
    kind: EventKind<S>,
}

impl<S: Scalar> PartialEq for Event<S> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<S: Scalar> Eq for Event<S> {}

impl<S: Scalar> PartialOrd for Event<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Event<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .partial_cmp(&other.time)
            .expect("event times must be comparable")
            .then(self.seq.cmp(&other.seq))
    }
}

/// Tallies of protocol events over a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    /// Query transmissions (the message-overhead measure).
    pub forwards: u64,
    pub dup_drops: u64,
    pub ttl_drops: u64,
    pub cost_drops: u64,
    pub hits_sent: u64,
    pub hits_delivered: u64,
    pub hits_lost: u64,
    /// Delivered hits whose query path crossed an inadmissible hop.
    pub unwanted_hits: u64,
}

/// Outcome of one query epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport<S> {
    pub message_id: MessageId,
    pub requester: NodeId,
    pub object: ObjectId,
    /// The requester held the object itself: a free rank-1 result at cost 0,
    /// excluded from the network tallies.
    pub self_hit: bool,
    pub results: Vec<RankedHit<S>>,
    pub messages: u64,
    pub hits_delivered: u64,
    pub hits_lost: u64,
}

/// Bookkeeping for the query currently in flight.
#[derive(Debug, Clone)]
struct ActiveQuery<S> {
    message_id: MessageId,
    requester: NodeId,
    object: ObjectId,
    scored: Vec<HitScore<S>>,
    self_hit: bool,
    start_counts: EventCounts,
}

/// Immutable result of a finished run.
#[derive(Debug, Clone)]
pub struct SimRun<S> {
    pub trace: Vec<TraceRecord<S>>,
    pub counts: EventCounts,
    pub reports: Vec<QueryReport<S>>,
    /// Latency of every link that ever existed (departures keep their
    /// entries), for trace post-processing.
    pub link_latencies: BTreeMap<(NodeId, NodeId), S>,
    pub max_cost: S,
}

/// The simulator. Drive it with [`Simulation::run`] for a whole configured
/// run, or manually (`probe_all` / `begin_epoch` / `inject_query` /
/// `drain`) for constructed scenarios.
#[derive(Debug, Clone)]
pub struct Simulation<S: Scalar> {
    config: SimConfig<S>,
    model: CostModel<S>,
    constraints: QosConstraints<S>,
    topology: Topology<S>,
    states: BTreeMap<NodeId, NodeState<S>>,
    queue: BinaryHeap<std::cmp::Reverse<Event<S>>>,
    now: S,
    next_event_seq: u64,
    next_message_id: u64,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord<S>>,
    counts: EventCounts,
    reports: Vec<QueryReport<S>>,
    link_latencies: BTreeMap<(NodeId, NodeId), S>,
    active: Option<ActiveQuery<S>>,
}

impl<S: Scalar> Simulation<S> {
    /// Generates a fresh topology from the configuration and seeds every
    /// held object with a uniform file count in `1..=max_files`.
    pub fn new(config: SimConfig<S>) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let topology = Topology::generate(&config, &mut rng)?;
        let mut sim = Self::assemble(config, topology, rng)?;
        let nodes: Vec<NodeId> = sim.states.keys().copied().collect();
        for id in nodes {
            let held: Vec<ObjectId> = sim
                .topology
                .inventory(id)
                .into_iter()
                .flatten()
                .copied()
                .collect();
            let state = sim.states.get_mut(&id).unwrap();
            for obj in held {
                let count = sim.rng.random_range(1..=sim.config.max_files);
                state.inventory.insert(obj, count);
            }
        }
        Ok(sim)
    }

    /// Wraps a pre-built topology (fixtures, tests). Node count is taken
    /// from the topology; every held object starts with file count 1 and
    /// can be adjusted via [`Simulation::set_file_count`].
    pub fn with_topology(mut config: SimConfig<S>, topology: Topology<S>) -> Result<Self, SimError> {
        config.node_count = topology.node_count();
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sim = Self::assemble(config, topology, rng)?;
        for state in sim.states.values_mut() {
            let held: Vec<ObjectId> = sim
                .topology
                .inventory(state.id)
                .into_iter()
                .flatten()
                .copied()
                .collect();
            for obj in held {
                state.inventory.insert(obj, 1);
            }
        }
        Ok(sim)
    }

    fn assemble(
        config: SimConfig<S>,
        topology: Topology<S>,
        rng: ChaCha8Rng,
    ) -> Result<Self, SimError> {
        let model = config.cost_model()?;
        let constraints = config.constraints(&model)?;
        let states: BTreeMap<NodeId, NodeState<S>> = topology
            .nodes()
            .map(|id| (id, NodeState::new(id)))
            .collect();
        let link_latencies = topology
            .links()
            .map(|(k, props)| (k, props.latency.clone()))
            .collect();
        Ok(Simulation {
            config,
            model,
            constraints,
            topology,
            states,
            queue: BinaryHeap::new(),
            now: S::zero(),
            next_event_seq: 0,
            next_message_id: 0,
            rng,
            trace: Vec::new(),
            counts: EventCounts::default(),
            reports: Vec::new(),
            link_latencies,
            active: None,
        })
    }

    pub fn config(&self) -> &SimConfig<S> {
        &self.config
    }

    pub fn model(&self) -> &CostModel<S> {
        &self.model
    }

    pub fn constraints(&self) -> &QosConstraints<S> {
        &self.constraints
    }

    pub fn topology(&self) -> &Topology<S> {
        &self.topology
    }

    /// Mutable access for scenario construction; nodes observe changes at
    /// their next probe.
    pub fn topology_mut(&mut self) -> &mut Topology<S> {
        &mut self.topology
    }

    pub fn state(&self, id: NodeId) -> Option<&NodeState<S>> {
        self.states.get(&id)
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.states.contains_key(&id)
    }

    pub fn now(&self) -> &S {
        &self.now
    }

    pub fn counts(&self) -> &EventCounts {
        &self.counts
    }

    pub fn trace(&self) -> &[TraceRecord<S>] {
        &self.trace
    }

    pub fn reports(&self) -> &[QueryReport<S>] {
        &self.reports
    }

    pub fn link_latencies(&self) -> &BTreeMap<(NodeId, NodeId), S> {
        &self.link_latencies
    }

    /// Sets the number of matching files a node holds for an object it
    /// already has in inventory.
    pub fn set_file_count(
        &mut self,
        node: NodeId,
        object: ObjectId,
        count: u32,
    ) -> Result<(), ProtocolError> {
        let state = self
            .states
            .get_mut(&node)
            .ok_or(ProtocolError::UnknownNode(node))?;
        if !state.inventory.contains_key(&object) {
            return Err(ProtocolError::UnknownNode(node));
        }
        state.inventory.insert(object, count);
        Ok(())
    }

    /// Seeds the requester-side response history for a responder.
    pub fn seed_past_response(
        &mut self,
        node: NodeId,
        responder: NodeId,
        past: crate::cost::PastResponse<S>,
    ) -> Result<(), ProtocolError> {
        let state = self
            .states
            .get_mut(&node)
            .ok_or(ProtocolError::UnknownNode(node))?;
        state.hit_history.insert(responder, past);
        Ok(())
    }

    /// Every alive node refreshes its neighbor table from ground truth.
    pub fn probe_all(&mut self) {
        let noise = self.config.probe_noise.clone();
        for state in self.states.values_mut() {
            probe_neighbors(state, &self.topology, &noise, &mut self.rng);
        }
    }

    /// Clears per-epoch caches (duplicate cache, reverse paths) on every
    /// node; response histories persist.
    pub fn begin_epoch(&mut self) {
        for state in self.states.values_mut() {
            state.begin_epoch();
        }
    }

    /// Redraws all link bandwidths, modelling load shifts between queries.
    pub fn rerandomize_bandwidths(&mut self) {
        self.topology.rerandomize_bandwidths(&mut self.rng);
    }

    fn schedule(&mut self, delay: S, kind: EventKind<S>) {
        let event = Event {
            time: self.now.clone() + delay,
            seq: self.next_event_seq,
            kind,
        };
        self.next_event_seq += 1;
        self.queue.push(std::cmp::Reverse(event));
    }

    /// Schedules a probe tick at `now + delay`.
    pub fn schedule_probe(&mut self, delay: S) {
        self.schedule(delay, EventKind::ProbeTick);
    }

    /// Schedules `node` to depart at `now + delay` (test hook for
    /// mid-query churn).
    pub fn schedule_departure(&mut self, node: NodeId, delay: S) -> Result<(), SimError> {
        if !self.is_alive(node) {
            return Err(ProtocolError::UnknownNode(node).into());
        }
        self.schedule(delay, EventKind::NodeLeave { node });
        Ok(())
    }

    /// Schedules a join at `now + delay`; the id the joiner will get is
    /// the topology's next free id at processing time.
    pub fn schedule_join(&mut self, attach_to: Vec<NodeId>, delay: S) {
        self.schedule(delay, EventKind::NodeJoin { attach_to });
    }

    /// Starts one query: the requester processes it on itself with zero
    /// accumulated cost, then propagation unfolds via the event queue.
    /// Call [`Simulation::drain`] to run the epoch to completion.
    ///
    /// # Panics
    /// If the previous query has not been drained yet.
    pub fn inject_query(
        &mut self,
        requester: NodeId,
        object: ObjectId,
        ttl: u32,
    ) -> Result<MessageId, SimError> {
        assert!(
            self.active.is_none(),
            "inject_query requires the previous query to be drained"
        );
        if !self.is_alive(requester) {
            return Err(ProtocolError::UnknownNode(requester).into());
        }
        let message_id = MessageId(self.next_message_id);
        self.next_message_id += 1;
        self.active = Some(ActiveQuery {
            message_id,
            requester,
            object,
            scored: Vec::new(),
            self_hit: false,
            start_counts: self.counts,
        });
        let query = QueryMessage {
            message_id,
            keyword: object,
            ttl,
            constraints: self.constraints.clone(),
            accumulated_cost: S::zero(),
            sender_id: requester,
            requester_id: requester,
            violated: false,
        };
        self.schedule(S::zero(), EventKind::QueryStart { query });
        Ok(message_id)
    }

    /// Processes events until the queue is empty, then finalizes the
    /// epoch's report (ranked results, per-epoch tallies).
    pub fn drain(&mut self) -> Result<(), SimError> {
        while let Some(std::cmp::Reverse(event)) = self.queue.pop() {
            debug_assert!(
                event.time >= self.now,
                "event time moved backwards: {} < {}",
                event.time,
                self.now
            );
            self.now = event.time.clone();
            self.process(event.kind)?;
        }
        if let Some(active) = self.active.take() {
            let results = collect_and_rank(active.scored);
            self.reports.push(QueryReport {
                message_id: active.message_id,
                requester: active.requester,
                object: active.object,
                self_hit: active.self_hit,
                results,
                messages: self.counts.forwards - active.start_counts.forwards,
                hits_delivered: self.counts.hits_delivered - active.start_counts.hits_delivered,
                hits_lost: self.counts.hits_lost - active.start_counts.hits_lost,
            });
        }
        Ok(())
    }

    /// Convenience wrapper for constructed scenarios: reset caches, probe
    /// exactly, run one query to completion. Does not touch bandwidths.
    pub fn run_query(&mut self, requester: NodeId, object: ObjectId) -> Result<(), SimError> {
        self.begin_epoch();
        self.probe_all();
        self.inject_query(requester, object, self.config.ttl)?;
        self.drain()
    }

    /// Runs the whole configured experiment: `queries_per_run` epochs of
    /// churn, bandwidth re-randomization, periodic probing, and one query
    /// each from a uniformly chosen requester for a uniformly chosen
    /// object.
    pub fn run(&mut self) -> Result<(), SimError> {
        for epoch in 0..self.config.queries_per_run {
            if epoch > 0 && self.config.churn.is_enabled() {
                self.apply_churn_step()?;
            }
            self.rerandomize_bandwidths();
            if epoch % self.config.probe_period == 0 {
                self.schedule_probe(S::zero());
            }
            self.begin_epoch();
            let (requester, object) = self.pick_query_target();
            self.inject_query(requester, object, self.config.ttl)?;
            self.drain()?;
        }
        Ok(())
    }

    pub fn into_run(self) -> SimRun<S> {
        SimRun {
            trace: self.trace,
            counts: self.counts,
            reports: self.reports,
            link_latencies: self.link_latencies,
            max_cost: self.constraints.max_cost().clone(),
        }
    }

    fn pick_query_target(&mut self) -> (NodeId, ObjectId) {
        let alive: Vec<NodeId> = self.states.keys().copied().collect();
        let requester = alive[self.rng.random_range(0..alive.len())];
        let object = ObjectId(self.rng.random_range(0..self.config.object_count));
        (requester, object)
    }

    fn poisson_draw(&mut self, rate: f64) -> usize {
        if rate <= 0.0 {
            return 0;
        }
        let dist = Poisson::new(rate).expect("churn rates are validated positive and finite");
        dist.sample(&mut self.rng) as usize
    }

    /// One inter-epoch churn step: Poisson-many departures (capped so at
    /// least two nodes survive), then Poisson-many joins. Joiners attach
    /// to `deg_min..=deg_max` random alive peers with freshly drawn link
    /// properties, carry objects per the placement rule, and start with
    /// empty histories.
    fn apply_churn_step(&mut self) -> Result<(), SimError> {
        let alive: Vec<NodeId> = self.states.keys().copied().collect();
        let n_leave = self
            .poisson_draw(self.config.churn.leave_rate)
            .min(alive.len().saturating_sub(2));
        if n_leave > 0 {
            let picks = rand::seq::index::sample(&mut self.rng, alive.len(), n_leave);
            for i in picks.iter() {
                let node = alive[i];
                self.topology.remove_node(node)?;
                self.states.remove(&node);
            }
        }
        let n_join = self.poisson_draw(self.config.churn.join_rate);
        for _ in 0..n_join {
            let peers: Vec<NodeId> = self.states.keys().copied().collect();
            let k = self
                .rng
                .random_range(self.config.deg_min..=self.config.deg_max)
                .min(peers.len());
            let picks = rand::seq::index::sample(&mut self.rng, peers.len(), k);
            let attach_to: Vec<NodeId> = picks.iter().map(|i| peers[i]).collect();
            self.join_node(&attach_to)?;
        }
        Ok(())
    }

    /// Adds a fresh node attached to the given peers. Returns its id.
    fn join_node(&mut self, attach_to: &[NodeId]) -> Result<NodeId, SimError> {
        let id = self.topology.add_node();
        for &peer in attach_to {
            if !self.is_alive(peer) {
                continue;
            }
            let props = LinkProps {
                bandwidth: S::sample_open_closed(self.topology.max_bw(), &mut self.rng),
                latency: S::sample_open_closed(self.topology.max_ll(), &mut self.rng),
            };
            self.link_latencies
                .insert(link_key(id, peer), props.latency.clone());
            self.topology.add_link(id, peer, props)?;
        }
        let cap = self
            .config
            .max_objects_per_peer
            .min(self.config.object_count) as usize;
        let size = self.rng.random_range(0..=cap);
        let picks =
            rand::seq::index::sample(&mut self.rng, self.config.object_count as usize, size);
        let objects: std::collections::BTreeSet<ObjectId> =
            picks.iter().map(|i| ObjectId(i as u32)).collect();
        let mut state = NodeState::new(id);
        for &obj in &objects {
            let count = self.rng.random_range(1..=self.config.max_files);
            state.inventory.insert(obj, count);
        }
        self.topology.set_inventory(id, objects);
        self.states.insert(id, state);
        Ok(id)
    }

    fn latency_of(&self, u: NodeId, v: NodeId) -> S {
        self.link_latencies
            .get(&link_key(u, v))
            .cloned()
            .expect("every link ever forwarded over has an archived latency")
    }

    fn push_trace(
        &mut self,
        kind: TraceKind,
        node: NodeId,
        message_id: MessageId,
        cost: S,
        detail: Option<NodeId>,
    ) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceRecord {
            time: self.now.clone(),
            seq,
            kind,
            node,
            message_id,
            cost,
            detail,
        });
    }

    fn process(&mut self, kind: EventKind<S>) -> Result<(), SimError> {
        match kind {
            EventKind::QueryStart { query } => {
                let requester = query.requester_id;
                let state = self
                    .states
                    .get_mut(&requester)
                    .expect("requester was alive at injection");
                let active = self.active.as_mut().expect("query start implies active");
                match process_query(state, &query, self.config.strategy, &self.model) {
                    QueryDisposition::LocalHit(hit) => {
                        // Self-hit: free rank-1 result, no network involved.
                        active.self_hit = true;
                        active.scored.push(HitScore {
                            responder: requester,
                            num_files: hit.num_files,
                            accumulated_cost: S::zero(),
                            final_cost: S::zero(),
                        });
                    }
                    QueryDisposition::Forwarded { sent, rejected } => {
                        self.emit_forwards(requester, sent, rejected);
                    }
                    QueryDisposition::Duplicate | QueryDisposition::TtlExpired => {}
                }
            }
            EventKind::DeliverQuery { target, query } => {
                let Some(state) = self.states.get_mut(&target) else {
                    return Ok(()); // target departed while the message flew
                };
                let disposition =
                    process_query(state, &query, self.config.strategy, &self.model);
                match disposition {
                    QueryDisposition::Duplicate => {
                        self.counts.dup_drops += 1;
                        self.push_trace(
                            TraceKind::DropDup,
                            target,
                            query.message_id,
                            query.accumulated_cost.clone(),
                            Some(query.sender_id),
                        );
                    }
                    QueryDisposition::TtlExpired => {
                        self.counts.ttl_drops += 1;
                        self.push_trace(
                            TraceKind::DropTtl,
                            target,
                            query.message_id,
                            query.accumulated_cost.clone(),
                            None,
                        );
                    }
                    QueryDisposition::LocalHit(hit) => {
                        let requester = self
                            .active
                            .as_ref()
                            .expect("deliveries only happen within an epoch")
                            .requester;
                        self.counts.hits_sent += 1;
                        self.push_trace(
                            TraceKind::HitSent,
                            target,
                            hit.message_id,
                            hit.accumulated_cost.clone(),
                            Some(requester),
                        );
                        let state = self.states.get(&target).expect("still alive");
                        match route_hit(state, hit.message_id, requester)? {
                            HitRoute::Next(next) => self.relay_hit(target, next, hit),
                            HitRoute::Delivered => {
                                unreachable!("requester re-entry is caught as a duplicate")
                            }
                        }
                    }
                    QueryDisposition::Forwarded { sent, rejected } => {
                        self.emit_forwards(target, sent, rejected);
                    }
                }
            }
            EventKind::DeliverHit { target, hit } => {
                let requester = self
                    .active
                    .as_ref()
                    .expect("hits only travel within an epoch")
                    .requester;
                if !self.is_alive(target) {
                    self.counts.hits_lost += 1;
                    self.push_trace(
                        TraceKind::HitLost,
                        target,
                        hit.message_id,
                        hit.accumulated_cost.clone(),
                        Some(hit.responder_id),
                    );
                    return Ok(());
                }
                if target == requester {
                    self.counts.hits_delivered += 1;
                    if hit.violated {
                        self.counts.unwanted_hits += 1;
                    }
                    self.push_trace(
                        TraceKind::HitDelivered,
                        target,
                        hit.message_id,
                        hit.accumulated_cost.clone(),
                        Some(hit.responder_id),
                    );
                    let state = self.states.get_mut(&target).expect("alive");
                    let score = crate::protocol::receive_query_hit(
                        state,
                        &hit,
                        self.config.max_files,
                        &self.model.weights,
                    );
                    self.active
                        .as_mut()
                        .expect("still active")
                        .scored
                        .push(score);
                    return Ok(());
                }
                let state = self.states.get(&target).expect("alive");
                match route_hit(state, hit.message_id, requester) {
                    Ok(HitRoute::Next(next)) => self.relay_hit(target, next, hit),
                    Ok(HitRoute::Delivered) => unreachable!("handled above"),
                    Err(_) => {
                        // No reverse-path entry (e.g. a rejoined id): lost.
                        self.counts.hits_lost += 1;
                        self.push_trace(
                            TraceKind::HitLost,
                            target,
                            hit.message_id,
                            hit.accumulated_cost.clone(),
                            Some(hit.responder_id),
                        );
                    }
                }
            }
            EventKind::ProbeTick => self.probe_all(),
            EventKind::NodeLeave { node } => {
                if self.states.remove(&node).is_some() {
                    self.topology.remove_node(node)?;
                }
            }
            EventKind::NodeJoin { attach_to } => {
                self.join_node(&attach_to)?;
            }
        }
        Ok(())
    }

    /// Relays a hit one step toward the requester, or records it lost if
    /// the next hop has departed.
    fn relay_hit(&mut self, from: NodeId, next: NodeId, hit: QueryHitMessage<S>) {
        if !self.is_alive(next) {
            self.counts.hits_lost += 1;
            self.push_trace(
                TraceKind::HitLost,
                from,
                hit.message_id,
                hit.accumulated_cost.clone(),
                Some(hit.responder_id),
            );
            return;
        }
        let delay = self.latency_of(from, next);
        self.schedule(delay, EventKind::DeliverHit { target: next, hit });
    }

    fn emit_forwards(
        &mut self,
        from: NodeId,
        sent: Vec<OutboundQuery<S>>,
        rejected: Vec<(NodeId, S)>,
    ) {
        for out in sent {
            self.counts.forwards += 1;
            self.push_trace(
                TraceKind::Forward,
                from,
                out.query.message_id,
                out.hop_cost.clone(),
                Some(out.target),
            );
            let delay = self.latency_of(from, out.target);
            self.schedule(
                delay,
                EventKind::DeliverQuery {
                    target: out.target,
                    query: out.query,
                },
            );
        }
        for (neighbor, cost) in rejected {
            self.counts.cost_drops += 1;
            let mid = self
                .active
                .as_ref()
                .expect("rejections only happen within an epoch")
                .message_id;
            self.push_trace(TraceKind::DropCost, from, mid, cost, Some(neighbor));
        }
    }
}

/// Runs one full configured simulation and returns its results.
pub fn run_simulation<S: Scalar>(config: &SimConfig<S>) -> Result<SimRun<S>, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run()?;
    Ok(sim.into_run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ChurnModel;
    use crate::protocol::Strategy;
    use crate::trace::format_trace;
    use crate::Real;

    /// Line 0 - 1 - 2 with generous links; node 2 holds object 0.
    fn line_sim(strategy: Strategy) -> Simulation<Real> {
        let topo = Topology::from_parts(
            10.0,
            100.0,
            3,
            &[(0, 1, 10.0, 30.0), (1, 2, 10.0, 40.0)],
            &[(2, &[0])],
        )
        .unwrap();
        let config = SimConfig::<Real> {
            strategy,
            deg_min: 1,
            deg_avg: 1.0,
            deg_max: 2,
            ttl: 5,
            ..SimConfig::default()
        };
        Simulation::with_topology(config, topo).unwrap()
    }

    #[test]
    fn query_and_hit_travel_at_link_latency() {
        let mut sim = line_sim(Strategy::Flooding);
        sim.run_query(NodeId(0), ObjectId(0)).unwrap();

        // Forward 0->1 at t=0, forward 1->2 at t=30, hit sent at t=70,
        // relayed back 2->1->0, delivered at t=140.
        let times: Vec<(TraceKind, f64, u32)> = sim
            .trace()
            .iter()
            .map(|r| (r.kind, r.time, r.node.0))
            .collect();
        assert_eq!(
            times,
            vec![
                (TraceKind::Forward, 0.0, 0),
                (TraceKind::Forward, 30.0, 1),
                (TraceKind::HitSent, 70.0, 2),
                (TraceKind::HitDelivered, 140.0, 0),
            ]
        );
        assert_eq!(sim.counts().forwards, 2);
        assert_eq!(sim.counts().hits_delivered, 1);
        assert_eq!(sim.counts().hits_lost, 0);

        let report = &sim.reports()[0];
        assert_eq!(report.results.len(), 1);
        assert_eq!(report.results[0].responder, NodeId(2));
        assert_eq!(report.results[0].rank, 1);
        assert!(!report.self_hit);
        assert_eq!(report.messages, 2);
    }

    #[test]
    fn requester_holding_the_object_answers_itself_for_free() {
        let mut sim = line_sim(Strategy::Flooding);
        sim.run_query(NodeId(2), ObjectId(0)).unwrap();
        let report = &sim.reports()[0];
        assert!(report.self_hit);
        assert_eq!(report.results.len(), 1);
        assert_eq!(report.results[0].responder, NodeId(2));
        assert_eq!(report.results[0].final_cost, 0.0);
        assert_eq!(report.results[0].rank, 1);
        // Nothing went over the network and nothing was traced.
        assert_eq!(sim.counts(), &EventCounts::default());
        assert!(sim.trace().is_empty());
        // The self answer leaves no trace in the response history either.
        assert!(sim.state(NodeId(2)).unwrap().hit_history.is_empty());
    }

    #[test]
    fn hit_is_lost_when_a_reverse_path_node_departs_mid_query() {
        let mut sim = line_sim(Strategy::Flooding);
        sim.begin_epoch();
        sim.probe_all();
        // Node 1 relays the query at t=30, then departs at t=50, before
        // the hit comes back through it at t=110.
        sim.schedule_departure(NodeId(1), 50.0).unwrap();
        sim.inject_query(NodeId(0), ObjectId(0), 5).unwrap();
        sim.drain().unwrap();

        assert_eq!(sim.counts().hits_sent, 1);
        assert_eq!(sim.counts().hits_delivered, 0);
        assert_eq!(sim.counts().hits_lost, 1);
        let lost: Vec<&TraceRecord<Real>> = sim
            .trace()
            .iter()
            .filter(|r| r.kind == TraceKind::HitLost)
            .collect();
        assert_eq!(lost.len(), 1);
        assert_eq!(lost[0].detail, Some(NodeId(2)));
        assert!(sim.reports()[0].results.is_empty());
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let mut config = SimConfig::<Real> {
            node_count: 60,
            object_count: 10,
            max_objects_per_peer: 4,
            deg_min: 2,
            deg_avg: 4.0,
            deg_max: 6,
            ttl: 3,
            queries_per_run: 5,
            seed: 99,
            ..SimConfig::default()
        };

        let a = run_simulation(&config).unwrap();
        let b = run_simulation(&config).unwrap();
        assert_eq!(format_trace(&a.trace), format_trace(&b.trace));
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.reports.len(), b.reports.len());

        config.seed = 100;
        let c = run_simulation(&config).unwrap();
        assert_ne!(format_trace(&a.trace), format_trace(&c.trace));
    }

    #[test]
    fn churn_keeps_the_overlay_population_sane() {
        let config = SimConfig::<Real> {
            node_count: 40,
            object_count: 10,
            max_objects_per_peer: 4,
            deg_min: 2,
            deg_avg: 3.0,
            deg_max: 5,
            ttl: 3,
            queries_per_run: 30,
            churn: ChurnModel {
                leave_rate: 1.5,
                join_rate: 1.5,
            },
            seed: 5,
            ..SimConfig::default()
        };

        let mut sim = Simulation::new(config).unwrap();
        sim.run().unwrap();
        assert!(sim.topology().node_count() >= 2);
        assert_eq!(sim.topology().node_count(), sim.states.len());
        // Joined nodes got fresh monotone ids beyond the initial range.
        assert!(sim.topology().nodes().any(|n| n.0 >= 40));
    }

    #[test]
    fn joined_node_participates_after_probing() {
        let mut sim = line_sim(Strategy::Flooding);
        sim.begin_epoch();
        sim.probe_all();
        sim.schedule_join(vec![NodeId(0)], 0.0);
        sim.drain().unwrap(); // process the join outside any query
        let joined = NodeId(3);
        assert!(sim.is_alive(joined));
        assert!(sim.topology().link(NodeId(0), joined).is_some());

        // Before re-probing, node 0 does not know the newcomer.
        assert!(!sim.state(NodeId(0)).unwrap().neighbors.contains_key(&joined));
        sim.run_query(NodeId(0), ObjectId(0)).unwrap();
        let forwarded_to_joined = sim
            .trace()
            .iter()
            .any(|r| r.kind == TraceKind::Forward && r.detail == Some(joined));
        assert!(forwarded_to_joined, "after probing, the joiner is reachable");
    }

    #[test]
    fn duplicate_arrivals_are_counted_and_traced() {
        // Triangle: 0-1, 0-2, 1-2. Flooding makes 1 and 2 re-send to each
        // other; the slower copy is a duplicate at its target.
        let topo = Topology::from_parts(
            10.0,
            100.0,
            3,
            &[
                (0, 1, 10.0, 10.0),
                (0, 2, 10.0, 10.0),
                (1, 2, 10.0, 10.0),
            ],
            &[],
        )
        .unwrap();
        let config = SimConfig::<Real> {
            strategy: Strategy::Flooding,
            deg_min: 2,
            deg_avg: 2.0,
            deg_max: 2,
            ttl: 5,
            ..SimConfig::default()
        };
        let mut sim = Simulation::with_topology(config, topo).unwrap();
        sim.run_query(NodeId(0), ObjectId(0)).unwrap();
        // 0 sends to 1 and 2; both relay to each other: 4 forwards, and
        // each relayed copy arrives at a node that has already seen it.
        assert_eq!(sim.counts().forwards, 4);
        assert_eq!(sim.counts().dup_drops, 2);
        assert_eq!(sim.counts().hits_sent, 0);
    }

    #[test]
    fn ttl_limits_propagation_depth() {
        let mut sim = line_sim(Strategy::Flooding);
        sim.begin_epoch();
        sim.probe_all();
        // TTL 1: the query reaches node 1 with TTL 0 and dies there.
        sim.inject_query(NodeId(0), ObjectId(0), 1).unwrap();
        sim.drain().unwrap();
        assert_eq!(sim.counts().forwards, 1);
        assert_eq!(sim.counts().ttl_drops, 1);
        assert_eq!(sim.counts().hits_sent, 0);
        assert!(sim.reports()[0].results.is_empty());
    }

    #[test]
    fn stale_probes_drive_admission_until_reprobe() {
        // Single link 0-1 with bandwidth 2 (cost 6.25, admitted). After
        // probing, ground truth degrades to bandwidth 1 (cost 6.90): the
        // stale table still admits the hop. A fresh probe then rejects it.
        let topo = Topology::from_parts(
            10.0,
            100.0,
            2,
            &[(0, 1, 2.0, 20.0)],
            &[(1, &[0])],
        )
        .unwrap();
        let config = SimConfig::<Real> {
            strategy: Strategy::QosAdaptive,
            deg_min: 1,
            deg_avg: 1.0,
            deg_max: 1,
            ..SimConfig::default()
        };
        let mut sim = Simulation::with_topology(config, topo).unwrap();

        sim.begin_epoch();
        sim.probe_all();
        sim.topology_mut()
            .set_link_bandwidth(NodeId(0), NodeId(1), 1.0)
            .unwrap();
        sim.inject_query(NodeId(0), ObjectId(0), 5).unwrap();
        sim.drain().unwrap();
        assert_eq!(sim.counts().forwards, 1, "stale probe still admits");
        assert_eq!(sim.counts().hits_delivered, 1);

        sim.begin_epoch();
        sim.probe_all(); // sees bandwidth 1 now
        sim.inject_query(NodeId(0), ObjectId(0), 5).unwrap();
        sim.drain().unwrap();
        assert_eq!(sim.counts().forwards, 1, "re-probed link is rejected");
        assert_eq!(sim.counts().cost_drops, 1);
    }
}
