//! Overlay graph: nodes, undirected links with bandwidth/latency properties,
//! and per-node object inventories. Generation draws a degree sequence
//! uniformly from `[deg_min, deg_max]`, conditions its sum on the requested
//! mean, realizes it by stub pairing with degree-preserving repair, and
//! patches connectivity with degree-preserving double edge swaps.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::SimConfig;
use crate::error::{ConfigError, ProtocolError};
use crate::scalar::Scalar;

/// Identifier of an overlay node. Ids are monotone: ids of departed nodes
/// are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a shareable object (a keyword in queries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Physical properties of one undirected link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkProps<S> {
    pub bandwidth: S,
    pub latency: S,
}

/// Undirected overlay graph with link properties and object inventories.
///
/// All collections are ordered so that iteration (and therefore every
/// rng-consuming pass over the graph) is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<S> {
    max_bw: S,
    max_ll: S,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    links: BTreeMap<(NodeId, NodeId), LinkProps<S>>,
    inventory: BTreeMap<NodeId, BTreeSet<ObjectId>>,
    next_node_id: u32,
}

/// Normalized `(low, high)` key for an undirected link.
pub fn link_key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

use link_key as key;

impl<S: Scalar> Topology<S> {
    pub fn new(max_bw: S, max_ll: S) -> Self {
        Topology {
            max_bw,
            max_ll,
            adjacency: BTreeMap::new(),
            links: BTreeMap::new(),
            inventory: BTreeMap::new(),
            next_node_id: 0,
        }
    }

    /// Generates a connected random overlay per the configuration.
    pub fn generate<R: Rng + ?Sized>(
        config: &SimConfig<S>,
        rng: &mut R,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let n = config.node_count;
        let degrees = degree_sequence(
            n,
            config.deg_min,
            config.deg_avg,
            config.deg_max,
            rng,
        )?;
        let edges = realize_degrees(&degrees, rng)?;

        let mut topo = Topology::new(config.max_bw.clone(), config.max_ll.clone());
        for i in 0..n {
            topo.insert_node(NodeId(i as u32));
        }
        for (u, v) in edges {
            topo.adjacency.get_mut(&u).unwrap().insert(v);
            topo.adjacency.get_mut(&v).unwrap().insert(u);
        }
        topo.patch_connectivity()?;

        // Draw properties only after the structure is final, in key order.
        let link_keys: Vec<(NodeId, NodeId)> = topo.edge_pairs().collect();
        for k in link_keys {
            let props = LinkProps {
                bandwidth: S::sample_open_closed(&topo.max_bw, rng),
                latency: S::sample_open_closed(&topo.max_ll, rng),
            };
            topo.links.insert(k, props);
        }

        topo.place_objects(config.object_count, config.max_objects_per_peer, rng);
        Ok(topo)
    }

    /// Builds a fixed topology for tests and demos. Nodes are `0..node_count`;
    /// `inventories` lists the nodes that hold objects (others stay empty).
    pub fn from_parts(
        max_bw: S,
        max_ll: S,
        node_count: u32,
        edges: &[(u32, u32, S, S)],
        inventories: &[(u32, &[u32])],
    ) -> Result<Self, ConfigError> {
        let mut topo = Topology::new(max_bw, max_ll);
        for i in 0..node_count {
            topo.insert_node(NodeId(i));
        }
        for (u, v, bw, ll) in edges {
            topo.add_link(
                NodeId(*u),
                NodeId(*v),
                LinkProps {
                    bandwidth: bw.clone(),
                    latency: ll.clone(),
                },
            )?;
        }
        for (node, objs) in inventories {
            let id = NodeId(*node);
            if !topo.contains(id) {
                return Err(ConfigError::Invalid(format!(
                    "inventory references unknown node {id}"
                )));
            }
            let set = topo.inventory.get_mut(&id).unwrap();
            for o in *objs {
                set.insert(ObjectId(*o));
            }
        }
        Ok(topo)
    }

    fn insert_node(&mut self, id: NodeId) {
        self.adjacency.entry(id).or_default();
        self.inventory.entry(id).or_default();
        if id.0 >= self.next_node_id {
            self.next_node_id = id.0 + 1;
        }
    }

    /// Adds a fresh node with a monotonically allocated id.
    pub fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.next_node_id);
        self.insert_node(id);
        id
    }

    /// Removes a node and all of its links atomically.
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), ProtocolError> {
        let neighbors = self
            .adjacency
            .remove(&id)
            .ok_or(ProtocolError::UnknownNode(id))?;
        for n in neighbors {
            self.adjacency.get_mut(&n).map(|set| set.remove(&id));
            self.links.remove(&key(id, n));
        }
        self.inventory.remove(&id);
        Ok(())
    }

    pub fn add_link(
        &mut self,
        u: NodeId,
        v: NodeId,
        props: LinkProps<S>,
    ) -> Result<(), ConfigError> {
        if u == v {
            return Err(ConfigError::Invalid(format!("self-loop at node {u}")));
        }
        if !self.contains(u) || !self.contains(v) {
            return Err(ConfigError::Invalid(format!(
                "link {u}-{v} references an unknown node"
            )));
        }
        if self.links.contains_key(&key(u, v)) {
            return Err(ConfigError::Invalid(format!("duplicate link {u}-{v}")));
        }
        let zero = S::zero();
        if props.bandwidth <= zero || props.bandwidth > self.max_bw {
            return Err(ConfigError::Invalid(format!(
                "link {u}-{v} bandwidth {} outside (0, {}]",
                props.bandwidth, self.max_bw
            )));
        }
        if props.latency <= zero || props.latency > self.max_ll {
            return Err(ConfigError::Invalid(format!(
                "link {u}-{v} latency {} outside (0, {}]",
                props.latency, self.max_ll
            )));
        }
        self.adjacency.get_mut(&u).unwrap().insert(v);
        self.adjacency.get_mut(&v).unwrap().insert(u);
        self.links.insert(key(u, v), props);
        Ok(())
    }

    pub fn set_link_bandwidth(
        &mut self,
        u: NodeId,
        v: NodeId,
        bandwidth: S,
    ) -> Result<(), ProtocolError> {
        match self.links.get_mut(&key(u, v)) {
            Some(props) => {
                props.bandwidth = bandwidth;
                Ok(())
            }
            None => Err(ProtocolError::UnknownNeighbor(u, v)),
        }
    }

    /// Redraws every link's bandwidth from `(0, max_bw]`; latencies stay put.
    pub fn rerandomize_bandwidths<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let max_bw = self.max_bw.clone();
        for props in self.links.values_mut() {
            props.bandwidth = S::sample_open_closed(&max_bw, rng);
        }
    }

    /// Deals each node a uniformly sized set of distinct objects, at most
    /// `min(max_per_peer, object_count)` of them.
    pub fn place_objects<R: Rng + ?Sized>(
        &mut self,
        object_count: u32,
        max_per_peer: u32,
        rng: &mut R,
    ) {
        let cap = max_per_peer.min(object_count) as usize;
        let ids: Vec<NodeId> = self.adjacency.keys().copied().collect();
        for id in ids {
            let size = rng.random_range(0..=cap);
            let picks = rand::seq::index::sample(rng, object_count as usize, size);
            let set: BTreeSet<ObjectId> = picks.iter().map(|i| ObjectId(i as u32)).collect();
            self.inventory.insert(id, set);
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.links.len()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        2.0 * self.links.len() as f64 / self.adjacency.len() as f64
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn link(&self, u: NodeId, v: NodeId) -> Option<&LinkProps<S>> {
        self.links.get(&key(u, v))
    }

    /// Normalized `(low, high)` endpoint pairs in key order.
    pub fn edge_pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&u, nbrs)| nbrs.iter().copied().filter(move |&v| u < v).map(move |v| (u, v)))
    }

    pub fn links(&self) -> impl Iterator<Item = ((NodeId, NodeId), &LinkProps<S>)> + '_ {
        self.links.iter().map(|(&k, v)| (k, v))
    }

    pub fn inventory(&self, id: NodeId) -> Option<&BTreeSet<ObjectId>> {
        self.inventory.get(&id)
    }

    pub fn holds(&self, id: NodeId, object: ObjectId) -> bool {
        self.inventory
            .get(&id)
            .is_some_and(|set| set.contains(&object))
    }

    pub fn set_inventory(&mut self, id: NodeId, objects: BTreeSet<ObjectId>) {
        if self.contains(id) {
            self.inventory.insert(id, objects);
        }
    }

    pub fn max_bw(&self) -> &S {
        &self.max_bw
    }

    pub fn max_ll(&self) -> &S {
        &self.max_ll
    }

    pub fn is_connected(&self) -> bool {
        let mut nodes = self.adjacency.keys();
        let Some(&start) = nodes.next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen.len() == self.adjacency.len()
    }

    fn components(&self) -> Vec<BTreeSet<NodeId>> {
        let mut unseen: BTreeSet<NodeId> = self.adjacency.keys().copied().collect();
        let mut comps = Vec::new();
        while let Some(&start) = unseen.iter().next() {
            let mut comp = BTreeSet::from([start]);
            let mut queue = VecDeque::from([start]);
            unseen.remove(&start);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if unseen.remove(&v) {
                        comp.insert(v);
                        queue.push_back(v);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// True if removing `(u, v)` keeps `u` and `v` connected.
    fn is_on_cycle(&self, u: NodeId, v: NodeId) -> bool {
        let mut seen = BTreeSet::from([u]);
        let mut queue = VecDeque::from([u]);
        while let Some(a) = queue.pop_front() {
            for b in self.neighbors(a) {
                if a == u && b == v {
                    continue;
                }
                if b == v {
                    return true;
                }
                if seen.insert(b) {
                    queue.push_back(b);
                }
            }
        }
        false
    }

    /// Merges components with degree-preserving double edge swaps: a cycle
    /// edge `(x, y)` of a host component and an edge `(a, b)` of another
    /// component are rewired into `(a, x)` and `(b, y)`, which attaches both
    /// halves of the other component to the still-connected host.
    fn patch_connectivity(&mut self) -> Result<(), ConfigError> {
        loop {
            let comps = self.components();
            if comps.len() <= 1 {
                return Ok(());
            }
            let mut host: Option<(usize, (NodeId, NodeId))> = None;
            for (i, comp) in comps.iter().enumerate() {
                let internal = self
                    .edge_pairs()
                    .filter(|(u, v)| comp.contains(u) && comp.contains(v))
                    .collect::<Vec<_>>();
                if internal.len() < comp.len() {
                    continue; // a tree has no cycle edge
                }
                if let Some(&e) = internal.iter().find(|&&(u, v)| self.is_on_cycle(u, v)) {
                    host = Some((i, e));
                    break;
                }
            }
            let Some((host_idx, (x, y))) = host else {
                return Err(ConfigError::Degree(
                    "graph is a forest; cannot connect it degree-preservingly".into(),
                ));
            };
            let other = comps
                .iter()
                .enumerate()
                .find(|(i, _)| *i != host_idx)
                .map(|(_, c)| c)
                .unwrap();
            let (a, b) = self
                .edge_pairs()
                .find(|(u, v)| other.contains(u) && other.contains(v))
                .expect("every component has at least one edge (degrees >= 1)");
            self.remove_edge(a, b);
            self.remove_edge(x, y);
            self.insert_bare_edge(a, x);
            self.insert_bare_edge(b, y);
        }
    }

    fn remove_edge(&mut self, u: NodeId, v: NodeId) {
        self.adjacency.get_mut(&u).unwrap().remove(&v);
        self.adjacency.get_mut(&v).unwrap().remove(&u);
        self.links.remove(&key(u, v));
    }

    fn insert_bare_edge(&mut self, u: NodeId, v: NodeId) {
        debug_assert!(u != v);
        self.adjacency.get_mut(&u).unwrap().insert(v);
        self.adjacency.get_mut(&v).unwrap().insert(u);
    }

    /// Serializes the graph to the interchange format:
    ///
    /// ```text
    /// nodes <N> maxbw <B> maxll <L>
    /// edge <u> <v> <bandwidth> <latency>
    /// inv <node> [obj ...]
    /// ```
    ///
    /// One `inv` line per node (even when empty), everything in key order,
    /// so equal graphs dump to byte-identical text.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "nodes {} maxbw {} maxll {}\n",
            self.adjacency.len(),
            self.max_bw.format_lossless(),
            self.max_ll.format_lossless()
        ));
        for ((u, v), props) in &self.links {
            out.push_str(&format!(
                "edge {u} {v} {} {}\n",
                props.bandwidth.format_lossless(),
                props.latency.format_lossless()
            ));
        }
        for (node, objs) in &self.inventory {
            out.push_str(&format!("inv {node}"));
            for o in objs {
                out.push_str(&format!(" {o}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format produced by [`Topology::dump`].
    pub fn load(text: &str) -> Result<Self, ConfigError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| ConfigError::parse(1, "empty input"))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let [kw, n, bw_kw, bw, ll_kw, ll] = tokens.as_slice() else {
            return Err(ConfigError::parse(1, "expected: nodes <N> maxbw <B> maxll <L>"));
        };
        if *kw != "nodes" || *bw_kw != "maxbw" || *ll_kw != "maxll" {
            return Err(ConfigError::parse(1, "expected: nodes <N> maxbw <B> maxll <L>"));
        }
        let expected_nodes: usize = n
            .parse()
            .map_err(|_| ConfigError::parse(1, "bad node count"))?;
        let max_bw =
            S::parse_text(bw).ok_or_else(|| ConfigError::parse(1, "bad maxbw value"))?;
        let max_ll =
            S::parse_text(ll).ok_or_else(|| ConfigError::parse(1, "bad maxll value"))?;
        let mut topo = Topology::new(max_bw, max_ll);

        let mut pending_edges: Vec<(usize, NodeId, NodeId, LinkProps<S>)> = Vec::new();
        let mut seen_inv: BTreeSet<NodeId> = BTreeSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "edge" => {
                    let [_, u, v, bw, ll] = tokens.as_slice() else {
                        return Err(ConfigError::parse(
                            lineno,
                            "expected: edge <u> <v> <bandwidth> <latency>",
                        ));
                    };
                    let u: u32 = u
                        .parse()
                        .map_err(|_| ConfigError::parse(lineno, "bad node id"))?;
                    let v: u32 = v
                        .parse()
                        .map_err(|_| ConfigError::parse(lineno, "bad node id"))?;
                    let bandwidth = S::parse_text(bw)
                        .ok_or_else(|| ConfigError::parse(lineno, "bad bandwidth"))?;
                    let latency = S::parse_text(ll)
                        .ok_or_else(|| ConfigError::parse(lineno, "bad latency"))?;
                    pending_edges.push((
                        lineno,
                        NodeId(u),
                        NodeId(v),
                        LinkProps { bandwidth, latency },
                    ));
                }
                "inv" => {
                    if tokens.len() < 2 {
                        return Err(ConfigError::parse(lineno, "expected: inv <node> [obj ...]"));
                    }
                    let node: u32 = tokens[1]
                        .parse()
                        .map_err(|_| ConfigError::parse(lineno, "bad node id"))?;
                    let id = NodeId(node);
                    if !seen_inv.insert(id) {
                        return Err(ConfigError::parse(
                            lineno,
                            format!("duplicate inv line for node {id}"),
                        ));
                    }
                    topo.insert_node(id);
                    let mut objs = BTreeSet::new();
                    for t in &tokens[2..] {
                        let o: u32 = t
                            .parse()
                            .map_err(|_| ConfigError::parse(lineno, "bad object id"))?;
                        objs.insert(ObjectId(o));
                    }
                    topo.inventory.insert(id, objs);
                }
                other => {
                    return Err(ConfigError::parse(
                        lineno,
                        format!("unknown directive: {other}"),
                    ));
                }
            }
        }
        if topo.adjacency.len() != expected_nodes {
            return Err(ConfigError::Invalid(format!(
                "header declares {expected_nodes} nodes but {} inv lines found",
                topo.adjacency.len()
            )));
        }
        for (lineno, u, v, props) in pending_edges {
            topo.add_link(u, v, props)
                .map_err(|e| ConfigError::parse(lineno, e.to_string()))?;
        }
        Ok(topo)
    }
}

/// Draws node degrees uniformly from `[deg_min, deg_max]`, then nudges
/// entries by one until the total matches `round(deg_avg * n)` (made even
/// and clamped to the feasible band).
fn degree_sequence<R: Rng + ?Sized>(
    n: usize,
    deg_min: usize,
    deg_avg: f64,
    deg_max: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ConfigError> {
    let lo = (deg_min * n) as i64;
    let hi = (deg_max * n) as i64;
    let mut target = ((deg_avg * n as f64).round() as i64).clamp(lo, hi);
    if target % 2 == 1 {
        if target < hi {
            target += 1;
        } else if target > lo {
            target -= 1;
        } else {
            return Err(ConfigError::Degree(format!(
                "total degree {target} is odd and the degree band allows no adjustment"
            )));
        }
    }
    let mut degrees: Vec<usize> = (0..n)
        .map(|_| rng.random_range(deg_min..=deg_max))
        .collect();
    let mut sum: i64 = degrees.iter().map(|&d| d as i64).sum();
    let mut stalls = 0usize;
    while sum != target {
        let i = rng.random_range(0..n);
        if sum < target && degrees[i] < deg_max {
            degrees[i] += 1;
            sum += 1;
        } else if sum > target && degrees[i] > deg_min {
            degrees[i] -= 1;
            sum -= 1;
        } else {
            stalls += 1;
            if stalls > 1000 * n {
                return Err(ConfigError::Degree(
                    "degree sum adjustment did not converge".into(),
                ));
            }
        }
    }
    Ok(degrees)
}

/// Realizes a degree sequence as a simple graph: repeated stub pairing with
/// rejection, then degree-preserving double swaps for stubborn leftovers.
fn realize_degrees<R: Rng + ?Sized>(
    degrees: &[usize],
    rng: &mut R,
) -> Result<BTreeSet<(NodeId, NodeId)>, ConfigError> {
    let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut stubs: Vec<NodeId> = degrees
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(NodeId(i as u32), d))
        .collect();
    debug_assert!(stubs.len().is_multiple_of(2));

    for _ in 0..200 {
        if stubs.is_empty() {
            break;
        }
        stubs.shuffle(rng);
        let mut leftovers = Vec::new();
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b || edges.contains(&key(a, b)) {
                leftovers.push(a);
                leftovers.push(b);
            } else {
                edges.insert(key(a, b));
            }
        }
        stubs = leftovers;
    }

    // Leftover stubs collide with existing edges; splice each pair into an
    // existing edge (x, y): replace it with (u, x) and (v, y).
    for pair in stubs.chunks(2) {
        let (u, v) = (pair[0], pair[1]);
        let candidate = edges
            .iter()
            .flat_map(|&(x, y)| [(x, y), (y, x)])
            .find(|&(x, y)| {
                x != u
                    && x != v
                    && y != u
                    && y != v
                    && !edges.contains(&key(u, x))
                    && !edges.contains(&key(v, y))
            });
        match candidate {
            Some((x, y)) => {
                edges.remove(&key(x, y));
                edges.insert(key(u, x));
                edges.insert(key(v, y));
            }
            None => {
                return Err(ConfigError::Degree(
                    "degree sequence could not be realized as a simple graph".into(),
                ));
            }
        }
    }
    Ok(edges)
}
