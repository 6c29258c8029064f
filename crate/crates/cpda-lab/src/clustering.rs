//! Probabilistic cluster formation.
//!
//! The server starts as a leader and broadcasts HELLO. A node hearing its
//! first HELLO volunteers as a leader itself with probability `p_c`
//! (broadcasting its own HELLO); otherwise it waits `wait_rounds` rounds
//! from the moment it was first informed and then joins the leader whose
//! HELLO it heard earliest (ties to the lowest node id), announcing the
//! choice with a JOIN broadcast. A node informed only by overheard JOINs
//! that never hears any HELLO declares itself a leader when its wait
//! expires, so growth never stalls at a silent frontier. After at most
//! `max_rounds` rounds, clusters smaller than `min_cluster_size` are
//! dissolved and their nodes recorded as uncovered.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::sim::{MessageBus, MessageKind, MessageRecord, NodeId, RngStream, SimError, Topology};

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("server has no neighbors; nothing can be covered")]
    NoCoverage,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationParams {
    /// Probability that a node hearing its first HELLO volunteers as a
    /// leader.
    pub p_c: f64,
    /// Rounds a node waits after being informed before committing.
    pub wait_rounds: u32,
    /// Hard cap on formation rounds.
    pub max_rounds: u32,
    /// Minimum surviving cluster size (leader included).
    pub min_cluster_size: usize,
}

impl Default for FormationParams {
    fn default() -> Self {
        FormationParams { p_c: 0.3, wait_rounds: 2, max_rounds: 16, min_cluster_size: 3 }
    }
}

/// A leader and the members that joined it. The leader is not listed in
/// `members`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub leader: NodeId,
    pub members: BTreeSet<NodeId>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        1 + self.members.len()
    }

    /// Leader followed by members, ascending.
    pub fn participants(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::once(self.leader).chain(self.members.iter().copied())
    }
}

/// The outcome of formation over one topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Surviving clusters, ascending by leader id.
    pub clusters: Vec<Cluster>,
    /// Nodes in the server's component that ended up in no surviving
    /// cluster. The server itself is never listed here.
    pub uncovered: BTreeSet<NodeId>,
    /// Clusters dissolved for being below the size floor.
    pub dissolved_count: u32,
    /// Nodes that performed the probabilistic leader draw.
    pub election_decisions: u32,
    /// Draws that came up leader.
    pub elected_leaders: u32,
    /// Leaders created by the no-HELLO fallback rather than the draw.
    pub fallback_leaders: u32,
}

impl ClusterAssignment {
    /// All nodes in surviving clusters.
    pub fn covered(&self) -> BTreeSet<NodeId> {
        self.clusters.iter().flat_map(|c| c.participants()).collect()
    }

    pub fn cluster_of(&self, node: NodeId) -> Option<&Cluster> {
        self.clusters
            .iter()
            .find(|c| c.leader == node || c.members.contains(&node))
    }
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Leader,
    Member,
}

#[derive(Debug, Default)]
struct NodeCtl {
    informed_at: Option<u32>,
    deadline: Option<u32>,
    election_done: bool,
    hellos: Vec<(u32, NodeId)>,
    role: Option<Role>,
}

impl NodeCtl {
    fn inform(&mut self, round: u32, wait_rounds: u32) {
        if self.informed_at.is_none() {
            self.informed_at = Some(round);
            self.deadline = Some(round + wait_rounds);
        }
    }
}

/// Run formation to quiescence (or `max_rounds`), recording every HELLO
/// and JOIN on the bus. Each node's leader draw comes from its own derived
/// stream, so the result is a pure function of `(topology, params, rng)`.
pub fn run_cluster_formation(
    topology: &Topology,
    params: &FormationParams,
    rng: &RngStream,
    bus: &mut MessageBus,
) -> Result<ClusterAssignment, ClusterError> {
    let server = topology.server();
    if topology.neighbors(server).is_empty() {
        return Err(ClusterError::NoCoverage);
    }

    let n = topology.node_count();
    let mut ctl: Vec<NodeCtl> = (0..n).map(|_| NodeCtl::default()).collect();
    let mut memberships: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut election_decisions = 0u32;
    let mut elected_leaders = 0u32;
    let mut fallback_leaders = 0u32;

    ctl[server.0 as usize].informed_at = Some(0);
    ctl[server.0 as usize].election_done = true;
    ctl[server.0 as usize].role = Some(Role::Leader);
    memberships.insert(server, BTreeSet::new());
    let mut outbox = vec![MessageRecord::broadcast(server, MessageKind::Hello, vec![])];

    for round in 1..=params.max_rounds {
        bus.advance_round();
        let mut inbox: BTreeMap<NodeId, Vec<(MessageKind, NodeId)>> = BTreeMap::new();
        for msg in std::mem::take(&mut outbox) {
            for &nb in topology.neighbors(msg.src) {
                inbox.entry(nb).or_default().push((msg.kind, msg.src));
            }
            bus.deliver(topology, msg)?;
        }

        for (&node, msgs) in &inbox {
            let c = &mut ctl[node.0 as usize];
            c.inform(round, params.wait_rounds);
            let mut heard_hello = false;
            for &(kind, src) in msgs {
                if kind == MessageKind::Hello {
                    c.hellos.push((round, src));
                    heard_hello = true;
                }
            }
            if heard_hello && !c.election_done && c.role.is_none() {
                c.election_done = true;
                election_decisions += 1;
                let draw: f64 = rng.derive(&format!("node:{node}/election")).random();
                if draw < params.p_c {
                    c.role = Some(Role::Leader);
                    elected_leaders += 1;
                    memberships.entry(node).or_default();
                    outbox.push(MessageRecord::broadcast(node, MessageKind::Hello, vec![]));
                }
            }
        }

        for node in topology.nodes() {
            let c = &mut ctl[node.0 as usize];
            if c.role.is_some() {
                continue;
            }
            match c.deadline {
                Some(d) if round >= d => {}
                _ => continue,
            }
            if let Some(&(_, leader)) = c.hellos.iter().min() {
                c.role = Some(Role::Member);
                memberships.entry(leader).or_default().insert(node);
                outbox.push(MessageRecord::broadcast(
                    node,
                    MessageKind::Join,
                    vec![leader.0 as i128],
                ));
            } else {
                c.role = Some(Role::Leader);
                fallback_leaders += 1;
                memberships.entry(node).or_default();
                outbox.push(MessageRecord::broadcast(node, MessageKind::Hello, vec![]));
            }
        }

        let all_settled = topology
            .nodes()
            .all(|nd| ctl[nd.0 as usize].informed_at.is_none() || ctl[nd.0 as usize].role.is_some());
        if outbox.is_empty() && all_settled {
            break;
        }
    }

    let mut clusters = Vec::new();
    let mut dissolved_count = 0u32;
    for (leader, members) in memberships {
        let cluster = Cluster { leader, members };
        if cluster.size() < params.min_cluster_size {
            dissolved_count += 1;
        } else {
            clusters.push(cluster);
        }
    }

    let component = topology.server_component();
    let mut covered: BTreeSet<NodeId> = clusters.iter().flat_map(|c| c.participants()).collect();
    covered.insert(server);
    let uncovered: BTreeSet<NodeId> = component.difference(&covered).copied().collect();

    Ok(ClusterAssignment {
        clusters,
        uncovered,
        dissolved_count,
        election_decisions,
        elected_leaders,
        fallback_leaders,
    })
}

/// A structural defect in a cluster assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A node appears in more than one cluster (or twice in one).
    NodeInMultipleClusters { node: NodeId },
    /// A member is not a physical neighbor of its leader.
    MemberNotAdjacent { leader: NodeId, member: NodeId },
    /// A surviving cluster is below the size floor.
    ClusterTooSmall { leader: NodeId, size: usize },
    /// A node is listed both uncovered and in a cluster.
    CoveredYetUncovered { node: NodeId },
    /// A node of the server's component is neither covered nor uncovered.
    Unaccounted { node: NodeId },
}

/// Check an assignment against the structural rules: clusters are
/// disjoint, members are adjacent to their leaders, surviving clusters
/// meet the size floor, and together with `uncovered` the clusters
/// partition the server's component (the server counting as covered even
/// when cluster-less).
pub fn validate_assignment(
    assignment: &ClusterAssignment,
    topology: &Topology,
    min_cluster_size: usize,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    for cluster in &assignment.clusters {
        for p in cluster.participants() {
            if !seen.insert(p) {
                violations.push(Violation::NodeInMultipleClusters { node: p });
            }
        }
        for &mem in &cluster.members {
            if !topology.are_adjacent(cluster.leader, mem) {
                violations.push(Violation::MemberNotAdjacent { leader: cluster.leader, member: mem });
            }
        }
        if cluster.size() < min_cluster_size {
            violations.push(Violation::ClusterTooSmall {
                leader: cluster.leader,
                size: cluster.size(),
            });
        }
    }
    for &node in &assignment.uncovered {
        if seen.contains(&node) {
            violations.push(Violation::CoveredYetUncovered { node });
        }
    }
    let mut accounted = seen;
    accounted.extend(assignment.uncovered.iter().copied());
    accounted.insert(topology.server());
    for node in topology.server_component() {
        if !accounted.contains(&node) {
            violations.push(Violation::Unaccounted { node });
        }
    }
    violations
}
