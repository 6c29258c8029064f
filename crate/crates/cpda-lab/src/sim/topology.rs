use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use super::rng::RngStream;
use super::SimError;

/// Identifier of a node in the network. Plain `u32`, ordered, and used as a
/// key everywhere; node 0 is conventionally the server but any id may be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected communication graph plus the designated server node.
#[derive(Debug, Clone)]
pub struct Topology {
    neighbors: Vec<BTreeSet<NodeId>>,
    server: NodeId,
}

impl Topology {
    /// Build from an explicit edge list. Edges are undirected; duplicates are
    /// collapsed. Self-loops or endpoints outside `0..node_count` are
    /// configuration errors.
    pub fn from_edges(node_count: u32, server: u32, edges: &[(u32, u32)]) -> Result<Self, SimError> {
        if node_count < 4 {
            return Err(SimError::InvalidConfig(format!(
                "need at least 4 nodes, got {node_count}"
            )));
        }
        if server >= node_count {
            return Err(SimError::InvalidConfig(format!(
                "server id {server} out of range 0..{node_count}"
            )));
        }
        let mut neighbors = vec![BTreeSet::new(); node_count as usize];
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(SimError::InvalidConfig(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(SimError::InvalidConfig(format!("self-loop on node {a}")));
            }
            neighbors[a as usize].insert(NodeId(b));
            neighbors[b as usize].insert(NodeId(a));
        }
        Ok(Topology { neighbors, server: NodeId(server) })
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn server(&self) -> NodeId {
        self.server
    }

    pub fn contains(&self, n: NodeId) -> bool {
        (n.0 as usize) < self.neighbors.len()
    }

    /// All node ids in ascending order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.neighbors.len() as u32).map(NodeId)
    }

    /// Neighbor set of `n`. Panics if `n` is not a node of this topology;
    /// use [`Topology::contains`] first when the id is untrusted.
    pub fn neighbors(&self, n: NodeId) -> &BTreeSet<NodeId> {
        &self.neighbors[n.0 as usize]
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.contains(b) && self.neighbors[a.0 as usize].contains(&b)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Nodes reachable from the server (the server itself included),
    /// via breadth-first search.
    pub fn server_component(&self) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.server);
        queue.push_back(self.server);
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// How to obtain a topology.
#[derive(Debug, Clone)]
pub enum TopologyConfig {
    /// Fixed node count and edge list.
    Explicit { node_count: u32, server: u32, edges: Vec<(u32, u32)> },
    /// Random geometric graph: `node_count` points uniform on the unit
    /// square, an edge wherever two points lie within `radius`. Regenerated
    /// (up to a bounded number of attempts) until the server's component
    /// covers at least `min_connected_fraction` of all nodes.
    RandomGeometric {
        node_count: u32,
        radius: f64,
        server: u32,
        min_connected_fraction: f64,
    },
}

const MAX_GENERATION_ATTEMPTS: u32 = 16;

/// Build a topology from its configuration. Generation draws only from
/// streams derived from `rng`, so the same stream yields the same graph.
pub fn build_topology(config: &TopologyConfig, rng: &RngStream) -> Result<Topology, SimError> {
    match config {
        TopologyConfig::Explicit { node_count, server, edges } => {
            Topology::from_edges(*node_count, *server, edges)
        }
        TopologyConfig::RandomGeometric { node_count, radius, server, min_connected_fraction } => {
            let n = *node_count;
            if n < 4 {
                return Err(SimError::InvalidConfig(format!("need at least 4 nodes, got {n}")));
            }
            if *server >= n {
                return Err(SimError::InvalidConfig(format!(
                    "server id {server} out of range 0..{n}"
                )));
            }
            if !(*radius > 0.0) {
                return Err(SimError::InvalidConfig(format!("radius must be positive, got {radius}")));
            }
            if !(0.0..=1.0).contains(min_connected_fraction) {
                return Err(SimError::InvalidConfig(format!(
                    "min_connected_fraction must lie in [0, 1], got {min_connected_fraction}"
                )));
            }
            for attempt in 0..MAX_GENERATION_ATTEMPTS {
                let mut stream = rng.derive(&format!("attempt:{attempt}"));
                let topo = random_geometric(n, *radius, *server, &mut stream);
                let reach = topo.server_component().len() as f64;
                if reach >= *min_connected_fraction * n as f64 {
                    return Ok(topo);
                }
            }
            Err(SimError::GenerationExhausted {
                attempts: MAX_GENERATION_ATTEMPTS,
            })
        }
    }
}

fn random_geometric(n: u32, radius: f64, server: u32, rng: &mut RngStream) -> Topology {
    let positions: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let r2 = radius * radius;
    let mut neighbors = vec![BTreeSet::new(); n as usize];
    for i in 0..n as usize {
        for j in (i + 1)..n as usize {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if dx * dx + dy * dy <= r2 {
                neighbors[i].insert(NodeId(j as u32));
                neighbors[j].insert(NodeId(i as u32));
            }
        }
    }
    Topology { neighbors, server: NodeId(server) }
}
