use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::keydist::SecurityMap;
use crate::sim::{KeyId, MessageBus, MessageKind, MessageRecord, NodeId, RngStream};

use super::{
    assemble_blinded_sum, checked_sum, compute_shares, generate_seed, solve_sum_efficient,
    solve_sum_standard, validate_seeds, validate_shares, CheckVerdict, CpdaError, PrivateState,
    Seed, ShareValue, WideInt,
};

/// How the leader recovers the cluster sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// All blinded sums are broadcast back and the leader solves the seed
    /// system exactly.
    Standard,
    /// The leader uses a private seed so large that its own blinded sum can
    /// be decoded by digit extraction; members broadcast nothing back.
    Efficient,
}

/// Which plausibility checks run during a round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Defenses {
    pub seed_check: bool,
    pub share_check: bool,
}

impl Defenses {
    pub fn all() -> Self {
        Defenses { seed_check: true, share_check: true }
    }

    pub fn none() -> Self {
        Defenses::default()
    }
}

/// Numeric protocol parameters.
#[derive(Debug, Clone)]
pub struct CpdaParams {
    /// Largest possible sensor reading.
    pub d_max: u64,
    /// Largest possible blinding random.
    pub r_max: u64,
    /// Inclusive range ordinary seeds are drawn from.
    pub seed_lo: u64,
    pub seed_hi: u64,
    /// Seed the leader announces in efficient mode.
    pub efficient_leader_seed: u64,
    /// How many times a cluster may redraw randoms after a share-check
    /// rejection before giving up.
    pub max_retries: u32,
}

impl Default for CpdaParams {
    fn default() -> Self {
        CpdaParams {
            d_max: 1023,
            r_max: u32::MAX as u64,
            seed_lo: 256,
            seed_hi: 65_535,
            efficient_leader_seed: 1 << 40,
            max_retries: 8,
        }
    }
}

/// Terminal state of a cluster round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundVerdict {
    /// A sum was computed.
    Completed,
    /// The seed plausibility check rejected the announced seeds.
    RejectedSeeds,
    /// The share plausibility check rejected and retrying was not allowed.
    RejectedShares,
    /// The share check kept rejecting until the retry budget ran out.
    Aborted,
}

impl RoundVerdict {
    pub fn token(self) -> &'static str {
        match self {
            RoundVerdict::Completed => "OK",
            RoundVerdict::RejectedSeeds => "REJECTED_SEEDS",
            RoundVerdict::RejectedShares => "REJECTED_SHARES",
            RoundVerdict::Aborted => "ABORTED",
        }
    }
}

/// Messages emitted by one cluster round, by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundMessageCounts {
    /// Seed announcements (broadcast, one per participant).
    pub seed_broadcasts: u64,
    /// Encrypted share transfers (unicast).
    pub share_unicasts: u64,
    /// Blinded-sum broadcasts from members back to the leader.
    pub blinded_broadcasts: u64,
}

impl RoundMessageCounts {
    pub fn broadcasts(self) -> u64 {
        self.seed_broadcasts + self.blinded_broadcasts
    }

    pub fn total(self) -> u64 {
        self.seed_broadcasts + self.share_unicasts + self.blinded_broadcasts
    }
}

/// The driver's summary of a round.
#[derive(Debug, Clone)]
pub struct ClusterRoundOutcome {
    /// The sum the leader computed, when the round completed.
    pub computed_sum: Option<WideInt>,
    /// Ground-truth sum of the participants' readings (simulator-side
    /// knowledge, for verification).
    pub true_sum: WideInt,
    pub messages: RoundMessageCounts,
    pub multiplications: u64,
    pub divisions: u64,
    pub retries: u32,
    pub verdict: RoundVerdict,
}

/// Everything that existed during the round, including private values.
/// This is simulator-side ground truth: attack code must only read the
/// parts its role could actually observe.
#[derive(Debug, Clone)]
pub struct ClusterTranscript {
    pub leader: NodeId,
    /// All participants (leader included), ascending.
    pub participants: Vec<NodeId>,
    pub seeds: BTreeMap<NodeId, Seed>,
    pub privates: BTreeMap<NodeId, PrivateState>,
    /// All `m * m` shares of the final attempt, sender-major.
    pub shares: Vec<ShareValue>,
    /// Blinded sums per node; empty if the round stopped before assembly.
    pub blinded: BTreeMap<NodeId, WideInt>,
}

impl ClusterTranscript {
    /// Shares evaluated at `node`'s seed — what that node holds after the
    /// exchange.
    pub fn shares_held_by(&self, node: NodeId) -> Vec<ShareValue> {
        self.shares.iter().filter(|s| s.eval_at == node).copied().collect()
    }

    /// Shares sent to `node` by others (excludes the self-share).
    pub fn shares_received_by(&self, node: NodeId) -> Vec<ShareValue> {
        self.shares
            .iter()
            .filter(|s| s.eval_at == node && s.from != node)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClusterRoundResult {
    pub outcome: ClusterRoundOutcome,
    pub transcript: ClusterTranscript,
}

/// Inputs to one cluster round.
pub struct RoundSetup<'a> {
    pub leader: NodeId,
    pub members: &'a [NodeId],
    /// Reading per participant; every participant must be present and
    /// within `0..=d_max`.
    pub readings: &'a BTreeMap<NodeId, u64>,
    pub security: &'a SecurityMap,
    pub mode: AggregationMode,
    pub defenses: Defenses,
    pub params: &'a CpdaParams,
    /// Honest clusters retry after a share-check rejection; attack
    /// scenarios treat the first rejection as final.
    pub retry_on_share_reject: bool,
    /// Seeds forced by an adversary (or a test) instead of drawn.
    pub seed_overrides: &'a BTreeMap<NodeId, Seed>,
    /// Blinding randoms forced instead of drawn; applied on every attempt.
    pub random_overrides: &'a BTreeMap<NodeId, Vec<u64>>,
}

/// Run one aggregation round for a single cluster.
///
/// All traffic is recorded on `bus` as cluster-scope messages; all
/// randomness comes from streams derived from `rng`, labelled by node, so
/// the round is a pure function of `(setup, rng)`.
pub fn run_cluster_round(
    setup: &RoundSetup,
    bus: &mut MessageBus,
    rng: &RngStream,
) -> Result<ClusterRoundResult, CpdaError> {
    let mut participants: Vec<NodeId> = Vec::with_capacity(setup.members.len() + 1);
    participants.push(setup.leader);
    participants.extend_from_slice(setup.members);
    participants.sort_unstable();
    let m = participants.len();
    if participants.windows(2).any(|w| w[0] == w[1]) {
        return Err(CpdaError::PreconditionViolated("duplicate participant".into()));
    }
    if m < 3 {
        return Err(CpdaError::PreconditionViolated(format!(
            "cluster of {m} too small for blinded aggregation (minimum 3)"
        )));
    }

    for p in &participants {
        match setup.readings.get(p) {
            None => {
                return Err(CpdaError::PreconditionViolated(format!("no reading for node {p}")))
            }
            Some(&r) if r > setup.params.d_max => {
                return Err(CpdaError::PreconditionViolated(format!(
                    "reading {r} of node {p} exceeds d_max {}",
                    setup.params.d_max
                )))
            }
            _ => {}
        }
    }
    let true_sum = checked_sum(participants.iter().map(|p| WideInt::from(setup.readings[p])))?;

    // Every pair must have a link key before any share can move.
    let mut link_keys: BTreeMap<(NodeId, NodeId), KeyId> = BTreeMap::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b) = (participants[i], participants[j]);
            match setup.security.link(a, b) {
                Some(link) => {
                    link_keys.insert((a, b), link.key_id());
                    link_keys.insert((b, a), link.key_id());
                }
                None => return Err(CpdaError::NoPairwiseKey { a, b }),
            }
        }
    }

    // Seed selection: overrides and the efficient-mode leader seed are
    // fixed first, everyone else draws from its own stream avoiding them.
    let mut seeds: BTreeMap<NodeId, Seed> = BTreeMap::new();
    let mut taken: BTreeSet<u64> = BTreeSet::new();
    for p in &participants {
        let fixed = setup.seed_overrides.get(p).copied().or_else(|| {
            (setup.mode == AggregationMode::Efficient && *p == setup.leader)
                .then_some(Seed(setup.params.efficient_leader_seed))
        });
        if let Some(s) = fixed {
            seeds.insert(*p, s);
            taken.insert(s.0);
        }
    }
    for p in &participants {
        if !seeds.contains_key(p) {
            let mut stream = rng.derive(&format!("node:{p}/seed"));
            let s = generate_seed(&mut stream, setup.params.seed_lo, setup.params.seed_hi, &taken)?;
            seeds.insert(*p, s);
            taken.insert(s.0);
        }
    }

    let mut counts = RoundMessageCounts::default();
    for p in &participants {
        bus.record(MessageRecord::broadcast(
            *p,
            MessageKind::Seed,
            vec![seeds[p].0 as i128],
        ));
        counts.seed_broadcasts += 1;
    }

    let transcript_stub = |privates, shares, blinded| ClusterTranscript {
        leader: setup.leader,
        participants: participants.clone(),
        seeds: seeds.clone(),
        privates,
        shares,
        blinded,
    };

    if setup.defenses.seed_check {
        let seed_list: Vec<Seed> = participants.iter().map(|p| seeds[p]).collect();
        if validate_seeds(&seed_list)? == CheckVerdict::Reject {
            return Ok(ClusterRoundResult {
                outcome: ClusterRoundOutcome {
                    computed_sum: None,
                    true_sum,
                    messages: counts,
                    multiplications: 0,
                    divisions: 0,
                    retries: 0,
                    verdict: RoundVerdict::RejectedSeeds,
                },
                transcript: transcript_stub(BTreeMap::new(), Vec::new(), BTreeMap::new()),
            });
        }
    }

    // Share exchange, redrawing randoms after share-check rejections while
    // the retry budget allows.
    let max_attempts = setup.params.max_retries + 1;
    let mut retries = 0u32;
    let mut attempt = 0u32;
    let (privates, all_shares) = loop {
        bus.advance_round();
        let mut privates: BTreeMap<NodeId, PrivateState> = BTreeMap::new();
        for p in &participants {
            let randoms = match setup.random_overrides.get(p) {
                Some(r) => {
                    if r.len() + 1 != m {
                        return Err(CpdaError::PreconditionViolated(format!(
                            "random override for {p} has {} values, cluster needs {}",
                            r.len(),
                            m - 1
                        )));
                    }
                    r.clone()
                }
                None => {
                    let mut stream = rng.derive(&format!("node:{p}/randoms/attempt:{attempt}"));
                    (0..m - 1).map(|_| stream.random_range(0..=setup.params.r_max)).collect()
                }
            };
            privates.insert(
                *p,
                PrivateState { reading: setup.readings[p], randoms, own_seed: seeds[p] },
            );
        }

        let mut all_shares = Vec::with_capacity(m * m);
        for p in &participants {
            all_shares.extend(compute_shares(*p, &privates[p], &seeds)?);
        }
        for share in &all_shares {
            if share.from != share.eval_at {
                let key = link_keys[&(share.from, share.eval_at)];
                bus.record(MessageRecord::encrypted_unicast(
                    share.from,
                    share.eval_at,
                    MessageKind::Share,
                    key,
                    vec![share.value.value()],
                ));
                counts.share_unicasts += 1;
            }
        }

        if setup.defenses.share_check {
            let mut rejected = false;
            for p in &participants {
                let held: Vec<ShareValue> =
                    all_shares.iter().filter(|s| s.eval_at == *p).copied().collect();
                if validate_shares(&held)? == CheckVerdict::Reject {
                    rejected = true;
                    break;
                }
            }
            if rejected {
                if setup.retry_on_share_reject && attempt + 1 < max_attempts {
                    retries += 1;
                    attempt += 1;
                    continue;
                }
                let verdict = if setup.retry_on_share_reject {
                    RoundVerdict::Aborted
                } else {
                    RoundVerdict::RejectedShares
                };
                return Ok(ClusterRoundResult {
                    outcome: ClusterRoundOutcome {
                        computed_sum: None,
                        true_sum,
                        messages: counts,
                        multiplications: 0,
                        divisions: 0,
                        retries,
                        verdict,
                    },
                    transcript: transcript_stub(privates, all_shares, BTreeMap::new()),
                });
            }
        }
        break (privates, all_shares);
    };

    let mut blinded: BTreeMap<NodeId, WideInt> = BTreeMap::new();
    for p in &participants {
        let held: Vec<ShareValue> =
            all_shares.iter().filter(|s| s.eval_at == *p).copied().collect();
        blinded.insert(*p, assemble_blinded_sum(*p, &held)?.value);
    }

    bus.advance_round();
    let (computed, multiplications, divisions) = match setup.mode {
        AggregationMode::Standard => {
            for p in &participants {
                if *p != setup.leader {
                    bus.record(MessageRecord::broadcast(
                        *p,
                        MessageKind::Fbcast,
                        vec![blinded[p].value()],
                    ));
                    counts.blinded_broadcasts += 1;
                }
            }
            let seed_list: Vec<Seed> = participants.iter().map(|p| seeds[p]).collect();
            let blinded_list: Vec<WideInt> = participants.iter().map(|p| blinded[p]).collect();
            let solved = solve_sum_standard(&seed_list, &blinded_list)?;
            (solved.sum, solved.ops.multiplications, solved.ops.divisions)
        }
        AggregationMode::Efficient => {
            let solved = solve_sum_efficient(
                blinded[&setup.leader],
                seeds[&setup.leader],
                m,
                setup.params.r_max,
                setup.params.d_max,
            )?;
            (solved.sum, 0, solved.divisions)
        }
    };

    Ok(ClusterRoundResult {
        outcome: ClusterRoundOutcome {
            computed_sum: Some(computed),
            true_sum,
            messages: counts,
            multiplications,
            divisions,
            retries,
            verdict: RoundVerdict::Completed,
        },
        transcript: transcript_stub(privates, all_shares, blinded),
    })
}
