//! Simulation substrate: node identity, topology, deterministic RNG
//! streams, and the message bus with its transmission trace.

mod bus;
mod rng;
mod topology;

pub use bus::{eavesdroppers_of, Destination, KeyId, MessageBus, MessageKind, MessageRecord};
pub use rng::RngStream;
pub use topology::{build_topology, NodeId, Topology, TopologyConfig};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("topology generation failed after {attempts} attempts")]
    GenerationExhausted { attempts: u32 },
    #[error("unicast between non-adjacent nodes {src} and {dst}")]
    NotAdjacent { src: NodeId, dst: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}
