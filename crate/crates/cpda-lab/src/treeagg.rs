//! Convergecast of cluster sums to the server along a routing tree, with
//! in-network summing: every relay adds what it heard from below before
//! forwarding, so a shared ancestor sends one message no matter how many
//! leaders route through it.

use std::collections::{BTreeMap, BTreeSet};

use crate::cpda::{CpdaError, WideInt};
use crate::sim::{MessageBus, MessageKind, MessageRecord, NodeId, SimError, Topology};

#[derive(Debug, thiserror::Error)]
pub enum TreeAggError {
    #[error("cluster leader {0} is not reachable from the server")]
    LeaderUnreachable(NodeId),
    #[error(transparent)]
    Arithmetic(#[from] CpdaError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Breadth-first routing tree rooted at the server. The root has no
/// parent; every other reachable node's parent is its lowest-id neighbor
/// one level closer to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTree {
    root: NodeId,
    parent: BTreeMap<NodeId, NodeId>,
    depth: BTreeMap<NodeId, u32>,
}

impl RoutingTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent.get(&node).copied()
    }

    pub fn depth(&self, node: NodeId) -> Option<u32> {
        self.depth.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.depth.contains_key(&node)
    }

    /// All `(node, parent)` pairs in ascending node order — the dump that
    /// goes into experiment reports.
    pub fn parent_pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.parent.iter().map(|(&n, &p)| (n, p)).collect()
    }
}

/// Build the routing tree over the server's connected component.
/// Deterministic: levels are explored in ascending node order, and a node
/// with several previous-level neighbors takes the lowest id as parent.
pub fn build_routing_tree(topology: &Topology) -> RoutingTree {
    let root = topology.server();
    let mut depth: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    depth.insert(root, 0);
    let mut frontier = vec![root];
    let mut level = 0u32;
    while !frontier.is_empty() {
        level += 1;
        let mut next: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for &u in &frontier {
            for &v in topology.neighbors(u) {
                if !depth.contains_key(&v) {
                    // The frontier is sorted, so the first claimant is the
                    // lowest-id candidate parent.
                    next.entry(v).or_insert(u);
                }
            }
        }
        frontier = next.keys().copied().collect();
        for (v, p) in next {
            depth.insert(v, level);
            parent.insert(v, p);
        }
    }
    RoutingTree { root, parent, depth }
}

/// What the convergecast did: the exact total and the traffic it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergecastOutcome {
    pub total: WideInt,
    /// One message per tree edge on a leader-to-root path.
    pub messages: u64,
}

/// Route every leader's cluster sum up the tree, summing at relays, and
/// return the exact total at the root. Each node on a used path transmits
/// exactly once; each transmission is recorded on the bus.
pub fn aggregate_up(
    tree: &RoutingTree,
    topology: &Topology,
    cluster_sums: &BTreeMap<NodeId, WideInt>,
    bus: &mut MessageBus,
) -> Result<ConvergecastOutcome, TreeAggError> {
    // Mark every node on some leader-to-root path.
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    for &leader in cluster_sums.keys() {
        if !tree.contains(leader) {
            return Err(TreeAggError::LeaderUnreachable(leader));
        }
        let mut node = leader;
        while used.insert(node) {
            match tree.parent(node) {
                Some(p) => node = p,
                None => break,
            }
        }
    }

    let mut accumulated: BTreeMap<NodeId, WideInt> = used
        .iter()
        .map(|&n| (n, cluster_sums.get(&n).copied().unwrap_or(WideInt::ZERO)))
        .collect();

    // Deepest first; ties broken by node id for a deterministic schedule.
    let mut order: Vec<NodeId> = used.iter().copied().collect();
    order.sort_by_key(|&n| (std::cmp::Reverse(tree.depth(n).unwrap_or(0)), n));

    let mut messages = 0u64;
    for node in order {
        let Some(parent) = tree.parent(node) else { continue };
        let value = accumulated[&node];
        bus.deliver(
            topology,
            MessageRecord::unicast(node, parent, MessageKind::ClusterSum, vec![value.value()]),
        )?;
        messages += 1;
        let entry = accumulated.get_mut(&parent).expect("parent lies on a used path");
        *entry = entry.checked_add(value)?;
    }
    // With nothing to report the root receives nothing and holds zero.
    let total = accumulated.get(&tree.root()).copied().unwrap_or(WideInt::ZERO);
    Ok(ConvergecastOutcome { total, messages })
}
