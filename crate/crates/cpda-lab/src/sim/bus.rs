use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use super::topology::{NodeId, Topology};
use super::SimError;

/// Identifier of a symmetric key. Ids below the pool size refer to
/// predistributed pool keys; ids at or above it are freshly minted path keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub u64);

impl std::fmt::Display for KeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Hello,
    Join,
    Seed,
    Share,
    Fbcast,
    ClusterSum,
}

impl MessageKind {
    /// Stable token used in trace exports.
    pub fn token(self) -> &'static str {
        match self {
            MessageKind::Hello => "HELLO",
            MessageKind::Join => "JOIN",
            MessageKind::Seed => "SEED",
            MessageKind::Share => "SHARE",
            MessageKind::Fbcast => "FBCAST",
            MessageKind::ClusterSum => "CLUSTER_SUM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

/// One transmission. A broadcast is a single record (and a single counted
/// transmission) regardless of how many neighbors hear it.
///
/// Encryption is symbolic: a message tagged with `key_id` is readable only
/// by nodes holding that key; `payload` always carries the plaintext values
/// and observability is enforced at the point of use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub round: u32,
    pub src: NodeId,
    pub dst: Destination,
    pub kind: MessageKind,
    pub key_id: Option<KeyId>,
    pub payload: Vec<i128>,
}

impl MessageRecord {
    pub fn broadcast(src: NodeId, kind: MessageKind, payload: Vec<i128>) -> Self {
        MessageRecord { round: 0, src, dst: Destination::Broadcast, kind, key_id: None, payload }
    }

    pub fn unicast(src: NodeId, dst: NodeId, kind: MessageKind, payload: Vec<i128>) -> Self {
        MessageRecord { round: 0, src, dst: Destination::Unicast(dst), kind, key_id: None, payload }
    }

    pub fn encrypted_unicast(
        src: NodeId,
        dst: NodeId,
        kind: MessageKind,
        key_id: KeyId,
        payload: Vec<i128>,
    ) -> Self {
        MessageRecord {
            round: 0,
            src,
            dst: Destination::Unicast(dst),
            kind,
            key_id: Some(key_id),
            payload,
        }
    }

    /// Protocol discipline for key usage: share transfers are always
    /// encrypted; seed announcements and blinded-sum broadcasts never are.
    pub fn key_discipline_ok(&self) -> bool {
        match self.kind {
            MessageKind::Share => self.key_id.is_some(),
            MessageKind::Seed | MessageKind::Fbcast => self.key_id.is_none(),
            _ => true,
        }
    }
}

/// Records every transmission of a simulation run, with per-kind counters
/// and a round clock advanced by the drivers.
#[derive(Debug, Default)]
pub struct MessageBus {
    round: u32,
    trace: Vec<MessageRecord>,
    kind_counts: BTreeMap<MessageKind, u64>,
    broadcast_count: u64,
    unicast_count: u64,
}

impl MessageBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn advance_round(&mut self) {
        self.round += 1;
    }

    /// Deliver a message over the physical graph: a unicast requires the
    /// endpoints to be adjacent, and every endpoint must exist. The record
    /// is stamped with the current round.
    pub fn deliver(&mut self, topology: &Topology, msg: MessageRecord) -> Result<(), SimError> {
        if !topology.contains(msg.src) {
            return Err(SimError::UnknownNode(msg.src));
        }
        if let Destination::Unicast(dst) = msg.dst {
            if !topology.contains(dst) {
                return Err(SimError::UnknownNode(dst));
            }
            if !topology.are_adjacent(msg.src, dst) {
                return Err(SimError::NotAdjacent { src: msg.src, dst });
            }
        }
        self.record(msg);
        Ok(())
    }

    /// Record a logical transmission without an adjacency check. Used for
    /// cluster-scope protocol traffic, where any two cluster members can
    /// exchange messages (relayed through the leader if need be) and the
    /// exchange is still counted as one transmission.
    pub fn record(&mut self, mut msg: MessageRecord) {
        debug_assert!(msg.key_discipline_ok(), "key discipline violated: {msg:?}");
        msg.round = self.round;
        *self.kind_counts.entry(msg.kind).or_insert(0) += 1;
        match msg.dst {
            Destination::Broadcast => self.broadcast_count += 1,
            Destination::Unicast(_) => self.unicast_count += 1,
        }
        self.trace.push(msg);
    }

    pub fn trace(&self) -> &[MessageRecord] {
        &self.trace
    }

    pub fn count(&self, kind: MessageKind) -> u64 {
        self.kind_counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn broadcast_count(&self) -> u64 {
        self.broadcast_count
    }

    pub fn unicast_count(&self) -> u64 {
        self.unicast_count
    }

    pub fn total_count(&self) -> u64 {
        self.broadcast_count + self.unicast_count
    }

    /// Write the trace as one tab-separated line per message:
    /// `round src dst kind key`, with `*` for broadcast destinations and
    /// `-` for absent keys. The output is byte-stable for a given trace.
    pub fn write_trace(&self, w: &mut impl Write) -> io::Result<()> {
        for m in &self.trace {
            let dst = match m.dst {
                Destination::Broadcast => "*".to_string(),
                Destination::Unicast(d) => d.to_string(),
            };
            let key = match m.key_id {
                Some(k) => k.to_string(),
                None => "-".to_string(),
            };
            writeln!(w, "{}\t{}\t{}\t{}\t{}", m.round, m.src, dst, m.kind.token(), key)?;
        }
        Ok(())
    }
}

/// Nodes that overhear `msg` without being its addressee: every neighbor of
/// the sender except, for a unicast, the intended destination. Whether an
/// overhearer can *read* the message is a separate key question.
pub fn eavesdroppers_of(topology: &Topology, msg: &MessageRecord) -> BTreeSet<NodeId> {
    let mut set = topology.neighbors(msg.src).clone();
    if let Destination::Unicast(dst) = msg.dst {
        set.remove(&dst);
    }
    set
}
