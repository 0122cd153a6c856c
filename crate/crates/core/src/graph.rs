//! Undirected network snapshots for open multi-agent systems.
//!
//! A [`NetworkSnapshot`] is an immutable value: the active node set `V_k` and
//! the undirected edge set `E_k` at one tick. Time-varying networks are
//! sequences of snapshots. Node ids are simulator bookkeeping; protocol code
//! never branches on them.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Undirected graph at a single tick.
///
/// Edges are stored once as `(min, max)` pairs; the adjacency index is derived
/// at construction and kept sorted, so iteration order is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSnapshot {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

impl NetworkSnapshot {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if !nodes.contains(&a) || !nodes.contains(&b) {
                return Err(GraphError::DanglingEdge(a, b));
            }
            set.insert(ordered(a, b));
        }
        Ok(Self::from_parts(nodes, set))
    }

    fn from_parts(nodes: BTreeSet<NodeId>, edges: BTreeSet<(NodeId, NodeId)>) -> Self {
        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> =
            nodes.iter().map(|&n| (n, Vec::new())).collect();
        for &(a, b) in &edges {
            adjacency.get_mut(&a).expect("validated endpoint").push(b);
            adjacency.get_mut(&b).expect("validated endpoint").push(a);
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
        }
        NetworkSnapshot {
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&ordered(a, b))
    }

    /// Neighbors of `node`, sorted, never including `node` itself.
    pub fn neighbors(&self, node: NodeId) -> Result<&[NodeId], GraphError> {
        self.adjacency
            .get(&node)
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownNode(node))
    }

    pub fn degree(&self, node: NodeId) -> Result<usize, GraphError> {
        self.neighbors(node).map(<[NodeId]>::len)
    }

    /// Hop distances from `source` to every reachable node.
    fn bfs(&self, source: NodeId) -> BTreeMap<NodeId, usize> {
        let mut dist = BTreeMap::new();
        dist.insert(source, 0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &v in &self.adjacency[&u] {
                if let Entry::Vacant(slot) = dist.entry(v) {
                    slot.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> Result<bool, GraphError> {
        let first = *self.nodes.iter().next().ok_or(GraphError::Empty)?;
        Ok(self.bfs(first).len() == self.nodes.len())
    }

    /// Longest shortest-path hop count over all node pairs (BFS from every node).
    pub fn diameter(&self) -> Result<usize, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut diameter = 0;
        for &source in &self.nodes {
            let dist = self.bfs(source);
            if dist.len() != self.nodes.len() {
                return Err(GraphError::Disconnected);
            }
            diameter = diameter.max(dist.values().copied().max().unwrap_or(0));
        }
        Ok(diameter)
    }

    /// Subgraph induced by `keep`; nodes in `keep` that are not present are ignored.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> NetworkSnapshot {
        let nodes: BTreeSet<NodeId> = self.nodes.intersection(keep).copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| nodes.contains(a) && nodes.contains(b))
            .copied()
            .collect();
        Self::from_parts(nodes, edges)
    }
}

impl fmt::Display for NetworkSnapshot {
    /// Edge-list text block: a `nodes:` header listing active ids, then one
    /// `u v` pair per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nodes:")?;
        for n in &self.nodes {
            write!(f, " {n}")?;
        }
        writeln!(f)?;
        for (a, b) in &self.edges {
            writeln!(f, "{a} {b}")?;
        }
        Ok(())
    }
}

impl FromStr for NetworkSnapshot {
    type Err = GraphError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let parse_id = |tok: &str, line: usize| {
            tok.parse::<u32>().map(NodeId).map_err(|e| GraphError::Parse {
                line,
                reason: format!("bad node id {tok:?}: {e}"),
            })
        };
        let mut nodes = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("nodes:") {
                let ids = rest
                    .split_whitespace()
                    .map(|t| parse_id(t, line_no))
                    .collect::<Result<Vec<_>, _>>()?;
                nodes = Some(ids);
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(GraphError::Parse {
                    line: line_no,
                    reason: "expected `u v`".into(),
                });
            }
            edges.push((parse_id(toks[0], line_no)?, parse_id(toks[1], line_no)?));
        }
        let nodes = nodes.ok_or(GraphError::Parse {
            line: 0,
            reason: "missing `nodes:` header".into(),
        })?;
        NetworkSnapshot::new(nodes, edges)
    }
}

/// Departing, arriving and remaining agents between two consecutive ticks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodePartition {
    pub departing: BTreeSet<NodeId>,
    pub arriving: BTreeSet<NodeId>,
    pub remaining: BTreeSet<NodeId>,
}

pub fn partition_nodes(now: &BTreeSet<NodeId>, next: &BTreeSet<NodeId>) -> NodePartition {
    NodePartition {
        departing: now.difference(next).copied().collect(),
        arriving: next.difference(now).copied().collect(),
        remaining: now.intersection(next).copied().collect(),
    }
}

/// Path graph `1 - 2 - ... - n`.
pub fn line_graph(n: usize) -> Result<NetworkSnapshot, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidParameters("line graph needs n >= 1".into()));
    }
    let n = n as u32;
    NetworkSnapshot::new((1..=n).map(NodeId), (1..n).map(|i| (NodeId(i), NodeId(i + 1))))
}

pub fn complete_graph(n: usize) -> Result<NetworkSnapshot, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidParameters("complete graph needs n >= 1".into()));
    }
    let n = n as u32;
    let edges = (1..=n).flat_map(|i| ((i + 1)..=n).map(move |j| (NodeId(i), NodeId(j))));
    NetworkSnapshot::new((1..=n).map(NodeId), edges)
}

/// Hub `1` connected to leaves `2..=leaves+1`.
pub fn star_graph(leaves: usize) -> Result<NetworkSnapshot, GraphError> {
    let n = leaves as u32 + 1;
    NetworkSnapshot::new((1..=n).map(NodeId), (2..=n).map(|j| (NodeId(1), NodeId(j))))
}

/// Erdős–Rényi graph on `1..=n` with edge probability `edge_prob`, redrawn
/// until connected (at most `max_attempts` draws).
pub fn random_connected<R: Rng + ?Sized>(
    n: usize,
    edge_prob: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<NetworkSnapshot, GraphError> {
    if n == 0 || !(0.0..=1.0).contains(&edge_prob) {
        return Err(GraphError::InvalidParameters(format!(
            "random graph needs n >= 1 and edge probability in [0, 1], got n = {n}, p = {edge_prob}"
        )));
    }
    let n = n as u32;
    for _ in 0..max_attempts.max(1) {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                if rng.random::<f64>() < edge_prob {
                    edges.push((NodeId(i), NodeId(j)));
                }
            }
        }
        let g = NetworkSnapshot::new((1..=n).map(NodeId), edges)?;
        if g.is_connected()? {
            return Ok(g);
        }
    }
    Err(GraphError::InvalidParameters(format!(
        "no connected graph with n = {n}, p = {edge_prob} after {max_attempts} attempts"
    )))
}

/// A grown graph together with the order in which its nodes were inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrownGraph {
    pub graph: NetworkSnapshot,
    /// Seed nodes first (ascending), then every added node in order of arrival.
    pub insertion_order: Vec<NodeId>,
}

/// Barabási–Albert preferential attachment.
///
/// Grows `seed` one node at a time until it has `target_n` nodes. Each new node
/// links to `edges_per_new_node` distinct existing nodes, each chosen with
/// probability proportional to its current degree (sampling without
/// replacement within one insertion, so no parallel edges). New node ids
/// continue after the largest seed id.
pub fn barabasi_albert<R: Rng + ?Sized>(
    seed: &NetworkSnapshot,
    target_n: usize,
    edges_per_new_node: usize,
    rng: &mut R,
) -> Result<GrownGraph, GraphError> {
    if edges_per_new_node == 0 {
        return Err(GraphError::InvalidParameters("edges_per_new_node must be >= 1".into()));
    }
    if target_n < seed.node_count() {
        return Err(GraphError::InvalidParameters(format!(
            "target size {target_n} is smaller than the seed ({} nodes)",
            seed.node_count()
        )));
    }
    if !seed.is_connected()? {
        return Err(GraphError::Disconnected);
    }
    if target_n > seed.node_count() && edges_per_new_node > seed.node_count() {
        return Err(GraphError::InvalidParameters(format!(
            "cannot attach {edges_per_new_node} edges to a seed of {} nodes",
            seed.node_count()
        )));
    }

    let mut nodes: Vec<NodeId> = seed.nodes().iter().copied().collect();
    let mut edges: Vec<(NodeId, NodeId)> = seed.edges().iter().copied().collect();
    // Every node appears once per incident edge end, so a uniform draw from
    // this list is a degree-proportional draw.
    let mut endpoints: Vec<NodeId> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut next_id = nodes.iter().map(|n| n.0).max().unwrap_or(0) + 1;

    while nodes.len() < target_n {
        let newcomer = NodeId(next_id);
        next_id += 1;
        let mut targets = BTreeSet::new();
        while targets.len() < edges_per_new_node {
            let pick = if endpoints.is_empty() {
                nodes[rng.random_range(0..nodes.len())]
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            targets.insert(pick);
        }
        for &t in &targets {
            edges.push((newcomer, t));
            endpoints.push(newcomer);
            endpoints.push(t);
        }
        nodes.push(newcomer);
    }

    Ok(GrownGraph {
        graph: NetworkSnapshot::new(nodes.iter().copied(), edges)?,
        insertion_order: nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChurnEvent {
    Deactivate(NodeId),
    Activate(NodeId),
}

/// Applies one membership change to `current`.
///
/// `universe` is the graph over every node that ever took part, with its
/// recorded edges. A deactivated node leaves with its incident edges; an
/// activated node comes back with its recorded edges to currently active
/// endpoints. Connectivity of the result is the caller's concern.
pub fn apply_churn(
    universe: &NetworkSnapshot,
    current: &NetworkSnapshot,
    event: ChurnEvent,
) -> Result<NetworkSnapshot, GraphError> {
    let mut keep = current.nodes().clone();
    match event {
        ChurnEvent::Deactivate(node) => {
            if !keep.remove(&node) {
                return Err(GraphError::NotActive(node));
            }
            if keep.is_empty() {
                return Err(GraphError::WouldEmpty);
            }
        }
        ChurnEvent::Activate(node) => {
            if current.contains(node) {
                return Err(GraphError::AlreadyActive(node));
            }
            if !universe.contains(node) {
                return Err(GraphError::NeverSeen(node));
            }
            keep.insert(node);
        }
    }
    // Edges among active nodes other than the churned one are carried over
    // from `current`; the churned node's edges come from `universe`.
    let mut edges: BTreeSet<(NodeId, NodeId)> = current
        .edges()
        .iter()
        .filter(|(a, b)| keep.contains(a) && keep.contains(b))
        .copied()
        .collect();
    if let ChurnEvent::Activate(node) = event {
        for &nb in universe.neighbors(node)? {
            if keep.contains(&nb) {
                edges.insert(ordered(node, nb));
            }
        }
    }
    Ok(NetworkSnapshot::from_parts(keep, edges))
}
