//! Deterministic simulator and protocol library for cluster-based private
//! additive data aggregation in wireless sensor networks.
//!
//! The library is organised as a stack:
//!
//! * [`sim`] — node identifiers, topologies, labelled deterministic RNG
//!   streams, and a message bus that records every transmission.
//! * [`keydist`] — random key-ring predistribution, shared-key discovery,
//!   path-key establishment, and the closed-form connectivity/overhearing
//!   probabilities that go with it.
//! * [`clustering`] — probabilistic HELLO/JOIN cluster formation.
//! * [`cpda`] — the aggregation protocol itself: seed selection, polynomial
//!   share blinding, exact solving of the blinded system, and the cheap
//!   digit-extraction variant, plus the seed/share plausibility defenses.
//! * [`adversary`] — principled attackers (malicious leader, malicious
//!   member, colluding members, eavesdropper) and scenario drivers that
//!   measure what each one can recover.
//! * [`treeagg`] — breadth-first routing tree and convergecast of cluster
//!   sums to the server.
//! * [`harness`] — experiment configuration, the trial pipeline, and
//!   deterministic report emission.
//!
//! Everything is reproducible: all randomness flows from a single master
//! seed through named [`sim::RngStream`]s, and all iteration is over
//! ordered containers.

pub mod adversary;
pub mod clustering;
pub mod cpda;
pub mod harness;
pub mod keydist;
pub mod sim;
pub mod treeagg;
