//! Experiment orchestration: run the full pipeline — topology, key
//! predistribution, cluster formation, per-cluster aggregation rounds
//! (optionally with an attacker wired into each cluster), convergecast —
//! across a batch of trials, and emit machine-readable reports.
//!
//! A batch is a pure function of its config: every trial derives all of
//! its randomness from `(master_seed, "trial:<index>")`, so runs replay
//! byte-for-byte. Per-trial failures are recorded on the trial record
//! rather than aborting the batch.

pub mod config;
pub mod report;

use std::collections::BTreeMap;

use rand::Rng;

pub use config::{ConfigError, ExperimentConfig, PipelineRole};
pub use report::{ExperimentReport, SummaryRow, TrialRecord};

use crate::adversary::{imbalanced_random_attack, leader_attack, member_attack, AttackError};
use crate::clustering::{
    run_cluster_formation, validate_assignment, ClusterAssignment, ClusterError, Violation,
};
use crate::cpda::{
    assemble_blinded_sum, run_cluster_round, AggregationMode, CpdaError, PrivateState,
    RoundSetup, RoundVerdict, Seed, WideInt,
};
use crate::keydist::{
    assign_key_rings, discover_shared_keys, establish_group_keys, establish_path_keys,
    KeyDistError, KeyPool,
};
use crate::sim::{build_topology, MessageBus, MessageKind, NodeId, RngStream, SimError, Topology};
use crate::treeagg::{build_routing_tree, aggregate_up, TreeAggError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Keys(#[from] KeyDistError),
    #[error(transparent)]
    Clustering(#[from] ClusterError),
    #[error(transparent)]
    Protocol(#[from] CpdaError),
    #[error(transparent)]
    Aggregation(#[from] TreeAggError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Run every trial of the batch. Infallible at the batch level: a trial
/// that errors contributes a record carrying the error message.
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    let mut trials = Vec::with_capacity(config.trials as usize);
    for trial in 0..config.trials {
        let record = match run_trial(config, trial) {
            Ok(r) => r,
            Err(e) => TrialRecord {
                trial,
                error: Some(e.to_string()),
                ..TrialRecord::default()
            },
        };
        trials.push(record);
    }
    ExperimentReport { master_seed: config.master_seed, trials }
}

/// One full pipeline pass. Deterministic in `(config.master_seed, trial)`.
pub fn run_trial(config: &ExperimentConfig, trial: u64) -> Result<TrialRecord, HarnessError> {
    let rng = RngStream::new(config.master_seed, &format!("trial:{trial}"));
    let params = config.cpda_params();
    let mut rec = TrialRecord { trial, ..TrialRecord::default() };

    let topology = build_topology(&config.topology_config(), &rng.derive("topology"))?;
    rec.nodes = topology.node_count() as u64;
    rec.edges = topology.edge_count() as u64;
    rec.component = topology.server_component().len() as u64;

    // Readings exist before any clustering: every node measures, the
    // server contributes zero.
    let mut readings: BTreeMap<NodeId, u64> = BTreeMap::new();
    for node in topology.nodes() {
        let value = if node == topology.server() {
            0
        } else {
            rng.derive(&format!("reading/node:{node}")).random_range(0..=params.d_max)
        };
        readings.insert(node, value);
    }

    let pool = KeyPool::new(config.keydist.pool_size);
    let mut rings =
        assign_key_rings(&topology, &pool, config.keydist.ring_size, &rng.derive("keys"))?;
    let mut security = discover_shared_keys(&topology, &rings);
    rec.shared_links = security.shared_count() as u64;
    let path_minted = establish_path_keys(&topology, &mut rings, &mut security, &pool);
    rec.path_links = path_minted.len() as u64;

    let mut bus = MessageBus::new();
    let formation_params = config.formation_params();
    let assignment =
        run_cluster_formation(&topology, &formation_params, &rng.derive("formation"), &mut bus)?;
    rec.clusters = assignment.clusters.len() as u64;
    rec.dissolved = assignment.dissolved_count as u64;
    rec.uncovered = assignment.uncovered.len() as u64;
    rec.covered = assignment.covered().len() as u64;
    rec.formation_violations =
        validate_assignment(&assignment, &topology, formation_params.min_cluster_size).len()
            as u64;

    // Members of one cluster are not necessarily adjacent, so pairwise
    // keys inside each cluster may need minting through the leader.
    for cluster in &assignment.clusters {
        let participants: Vec<NodeId> = cluster.participants().collect();
        rec.group_keys +=
            establish_group_keys(&participants, cluster.leader, &mut rings, &mut security, &pool)?
                .len() as u64;
    }

    let defenses = config.defenses();
    let base_mode = config.mode();
    let adversary = config.adversary_role();
    let empty_overrides = BTreeMap::new();
    let mut cluster_sums: BTreeMap<NodeId, WideInt> = BTreeMap::new();
    let mut covered_sum = WideInt::ZERO;

    for cluster in &assignment.clusters {
        let members: Vec<NodeId> = cluster.members.iter().copied().collect();
        let m = members.len() + 1;
        // Dominant seeds and the efficient solve only fit the magnitude
        // bound at m = 3; larger clusters run the standard honest round.
        let mode = if base_mode == AggregationMode::Efficient && m == 3 {
            AggregationMode::Efficient
        } else {
            AggregationMode::Standard
        };
        let mut seed_overrides: BTreeMap<NodeId, Seed> = BTreeMap::new();
        let mut attack: Option<(PipelineRole, NodeId)> = None;
        if let Some((role, attack_seed)) = adversary {
            if m == 3 {
                let attacker = match role {
                    PipelineRole::Leader => cluster.leader,
                    _ => members[0],
                };
                seed_overrides.insert(attacker, Seed(attack_seed));
                attack = Some((role, attacker));
                rec.attacked_rounds += 1;
            }
        }
        let setup = RoundSetup {
            leader: cluster.leader,
            members: &members,
            readings: &readings,
            security: &security,
            mode,
            defenses,
            params: &params,
            retry_on_share_reject: config.cpda.retry_on_share_reject,
            seed_overrides: &seed_overrides,
            random_overrides: &empty_overrides,
        };
        let round_rng = rng.derive(&format!("cluster:{}", cluster.leader));
        let result = match run_cluster_round(&setup, &mut bus, &round_rng) {
            Ok(result) => result,
            Err(CpdaError::NoPairwiseKey { .. }) => {
                rec.rounds_skipped_keys += 1;
                continue;
            }
            Err(CpdaError::MagnitudeOverflow) => {
                rec.rounds_skipped_magnitude += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        rec.retries += result.outcome.retries as u64;
        rec.multiplications += result.outcome.multiplications;
        rec.divisions += result.outcome.divisions;
        match result.outcome.verdict {
            RoundVerdict::Completed => {
                rec.rounds_ok += 1;
                if mode == AggregationMode::Efficient {
                    rec.efficient_rounds += 1;
                }
                let sum = result.outcome.computed_sum.expect("completed round has a sum");
                cluster_sums.insert(cluster.leader, sum);
                covered_sum = covered_sum.checked_add(result.outcome.true_sum)?;
                if let Some((role, attacker)) = attack {
                    run_pipeline_attack(role, attacker, &result.transcript, &mut rec)?;
                }
            }
            RoundVerdict::RejectedSeeds => {
                rec.rounds_rejected_seeds += 1;
                if attack.is_some() {
                    rec.attack_rejected += 1;
                }
            }
            RoundVerdict::RejectedShares => {
                rec.rounds_rejected_shares += 1;
                if attack.is_some() {
                    rec.attack_rejected += 1;
                }
            }
            RoundVerdict::Aborted => {
                rec.rounds_aborted += 1;
                if attack.is_some() {
                    rec.attack_rejected += 1;
                }
            }
        }
    }

    let tree = build_routing_tree(&topology);
    let convergecast = aggregate_up(&tree, &topology, &cluster_sums, &mut bus)?;
    rec.server_total = convergecast.total.value();
    rec.covered_sum = covered_sum.value();
    rec.exact = convergecast.total == covered_sum;

    rec.hello_messages = bus.count(MessageKind::Hello);
    rec.join_messages = bus.count(MessageKind::Join);
    rec.seed_broadcasts = bus.count(MessageKind::Seed);
    rec.share_unicasts = bus.count(MessageKind::Share);
    rec.blinded_broadcasts = bus.count(MessageKind::Fbcast);
    rec.convergecast_messages = bus.count(MessageKind::ClusterSum);
    Ok(rec)
}

/// Run the configured in-round attack against a completed cluster round
/// and fold its outcome into the trial counters.
fn run_pipeline_attack(
    role: PipelineRole,
    attacker: NodeId,
    transcript: &crate::cpda::ClusterTranscript,
    rec: &mut TrialRecord,
) -> Result<(), HarnessError> {
    let truth: BTreeMap<NodeId, PrivateState> = transcript
        .participants
        .iter()
        .filter(|&&p| p != attacker)
        .map(|&p| (p, transcript.privates[&p].clone()))
        .collect();
    let m = transcript.participants.len();
    let report = match role {
        PipelineRole::Leader => leader_attack(
            &transcript.shares_received_by(attacker),
            transcript.seeds[&attacker],
            m,
            &truth,
        ),
        PipelineRole::Member => {
            let own_blinded =
                assemble_blinded_sum(attacker, &transcript.shares_held_by(attacker))?.value;
            match member_attack(
                own_blinded,
                &transcript.shares_received_by(attacker),
                &transcript.privates[&attacker],
                &truth,
            ) {
                Ok(report) => report,
                // A failed cross-check is a failed attack, not a failed trial.
                Err(AttackError::InconsistentExtraction(_)) => {
                    rec.attack_targets += truth.len() as u64;
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            }
        }
        PipelineRole::Imbalanced => imbalanced_random_attack(
            &transcript.shares_received_by(attacker),
            transcript.seeds[&attacker],
            m,
            &truth,
        ),
    };
    rec.attack_targets += report.success.len() as u64;
    rec.attack_successes += report.success_count() as u64;
    Ok(())
}

/// What the formation subcommand shows: the landscape one formation pass
/// produces on trial 0's streams (identical to the first simulate trial).
pub struct FormationPreview {
    pub topology: Topology,
    pub assignment: ClusterAssignment,
    pub violations: Vec<Violation>,
}

pub fn run_formation_preview(config: &ExperimentConfig) -> Result<FormationPreview, HarnessError> {
    let rng = RngStream::new(config.master_seed, "trial:0");
    let topology = build_topology(&config.topology_config(), &rng.derive("topology"))?;
    let mut bus = MessageBus::new();
    let params = config.formation_params();
    let assignment =
        run_cluster_formation(&topology, &params, &rng.derive("formation"), &mut bus)?;
    let violations = validate_assignment(&assignment, &topology, params.min_cluster_size);
    Ok(FormationPreview { topology, assignment, violations })
}
