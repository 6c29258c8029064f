//! Attacks on the aggregation protocol, and scenario drivers that measure
//! what each attacker actually recovers.
//!
//! All of the in-protocol attacks are honest-but-curious uses of digit
//! extraction: a participant that announces a seed far larger than every
//! reading and blinding random can read its incoming shares as base-seed
//! numerals, where the digits are the victim's randoms and the residual is
//! the victim's reading. The out-of-protocol attackers (colluding members,
//! a link eavesdropper) instead gather enough exact evaluations of one
//! victim's polynomial to reconstruct it outright.
//!
//! Every attack reports recovered values next to simulator ground truth;
//! success means exact equality, never approximation.

use std::collections::BTreeMap;

use crate::cpda::{
    assemble_blinded_sum, extract_base_coefficients, run_cluster_round, solve_vandermonde,
    AggregationMode, ClusterRoundOutcome, ClusterTranscript, CpdaError, CpdaParams, Defenses,
    Extraction, PrivateState, RoundSetup, RoundVerdict, Seed, ShareValue, WideInt,
};
use crate::keydist::{can_decrypt, synthetic_pairwise_security, KeyRing};
use crate::sim::{
    eavesdroppers_of, MessageBus, MessageKind, MessageRecord, NodeId, RngStream, SimError,
    Topology,
};

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("extraction cross-check failed: {0}")]
    InconsistentExtraction(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Protocol(#[from] CpdaError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Whether a plausibility defense examined the round, and what it said.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseVerdict {
    NotChecked,
    Accepted,
    Rejected,
}

impl DefenseVerdict {
    pub fn token(self) -> &'static str {
        match self {
            DefenseVerdict::NotChecked => "NOT_CHECKED",
            DefenseVerdict::Accepted => "ACCEPTED",
            DefenseVerdict::Rejected => "REJECTED",
        }
    }
}

/// Recovered values versus ground truth for one attack run.
#[derive(Debug, Clone)]
pub struct AttackReport {
    /// Simulator-side true readings of the attacked nodes.
    pub target_values: BTreeMap<NodeId, u64>,
    /// What the attacker claims each target's reading is; `None` when the
    /// attacker could not even form a claim.
    pub recovered: BTreeMap<NodeId, Option<i128>>,
    /// Exact-recovery flag per target. For the extraction attacks this
    /// demands the target's full private polynomial — reading and every
    /// blinding random — because `value mod seed` alone reproduces a small
    /// reading even when the digits above it have blended. For the
    /// reconstruction attacks it is reading equality.
    pub success: BTreeMap<NodeId, bool>,
    pub defense_verdict: DefenseVerdict,
}

impl AttackReport {
    /// An empty report over the given targets: nothing recovered yet.
    pub fn against(targets: &BTreeMap<NodeId, u64>) -> Self {
        AttackReport {
            target_values: targets.clone(),
            recovered: targets.keys().map(|&n| (n, None)).collect(),
            success: targets.keys().map(|&n| (n, false)).collect(),
            defense_verdict: DefenseVerdict::NotChecked,
        }
    }

    /// Record a reading claim for `node`; success is exact equality.
    pub fn record_reading(&mut self, node: NodeId, value: i128) {
        if let Some(&truth) = self.target_values.get(&node) {
            self.recovered.insert(node, Some(value));
            self.success.insert(node, value == truth as i128);
        }
    }

    /// Record an extracted polynomial for `node`; success requires every
    /// coefficient to match the target's true private state.
    pub fn record_extraction(&mut self, node: NodeId, extraction: &Extraction, truth: &PrivateState) {
        if self.target_values.contains_key(&node) {
            self.recovered.insert(node, Some(extraction.residual.value()));
            self.success.insert(node, extraction_matches(extraction, truth));
        }
    }
}

fn extraction_matches(extraction: &Extraction, truth: &PrivateState) -> bool {
    if extraction.residual.value() != truth.reading as i128 {
        return false;
    }
    let claimed = extraction.coefficients_low_to_high();
    claimed.len() == truth.randoms.len()
        && claimed.iter().zip(&truth.randoms).all(|(c, &r)| c.value() == r as i128)
}

impl AttackReport {

    /// Did the attacker recover every target exactly?
    pub fn all_exact(&self) -> bool {
        !self.success.is_empty() && self.success.values().all(|&s| s)
    }

    pub fn success_count(&self) -> usize {
        self.success.values().filter(|&&s| s).count()
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered.values().filter(|r| r.is_some()).count()
    }
}

/// Default adversarial seed: far above `m * (r_max + d_max)` for any small
/// cluster at default parameters, so extraction is guaranteed exact.
pub const DEFAULT_ATTACK_SEED: u64 = 1 << 40;

fn readings_of(truth: &BTreeMap<NodeId, PrivateState>) -> BTreeMap<NodeId, u64> {
    truth.iter().map(|(&n, s)| (n, s.reading)).collect()
}

/// Malicious leader: read each member's share at the leader's own dominant
/// seed as a base-seed numeral. The residual is the member's reading; the
/// digits above it are the member's blinding randoms.
///
/// Never errors: when the seed fails to dominate, the recovered values are
/// simply wrong and the success flags say so.
pub fn leader_attack(
    received_shares: &[ShareValue],
    attack_seed: Seed,
    cluster_size: usize,
    truth: &BTreeMap<NodeId, PrivateState>,
) -> AttackReport {
    let mut report = AttackReport::against(&readings_of(truth));
    let degree = cluster_size.saturating_sub(1) as u32;
    for share in received_shares {
        if let Some(state) = truth.get(&share.from) {
            let extraction = extract_base_coefficients(share.value, attack_seed, degree);
            report.record_extraction(share.from, &extraction, state);
        }
    }
    report
}

/// Malicious member: extract the aggregate randoms from its own blinded
/// sum, extract every other participant's polynomial (leader included)
/// from the share that participant sent, and cross-check the two views —
/// the aggregate coefficients must equal the attacker's own randoms plus
/// everyone else's extracted ones, and the blinded residual must equal the
/// sum of all readings. A failed cross-check means the dominance
/// precondition did not hold and is reported as an error.
pub fn member_attack(
    own_blinded: WideInt,
    received_shares: &[ShareValue],
    own_state: &PrivateState,
    truth: &BTreeMap<NodeId, PrivateState>,
) -> Result<AttackReport, AttackError> {
    let cluster_size = received_shares.len() + 1;
    if cluster_size < 3 {
        return Err(AttackError::InvalidScenario(format!(
            "member attack needs a cluster of at least 3, got {cluster_size}"
        )));
    }
    let attack_seed = own_state.own_seed;
    let degree = (cluster_size - 1) as u32;

    let aggregate = extract_base_coefficients(own_blinded, attack_seed, degree);
    let aggregate_low = aggregate.coefficients_low_to_high();

    let mut report = AttackReport::against(&readings_of(truth));
    let mut extractions = Vec::with_capacity(received_shares.len());
    for share in received_shares {
        let extraction = extract_base_coefficients(share.value, attack_seed, degree);
        if let Some(state) = truth.get(&share.from) {
            report.record_extraction(share.from, &extraction, state);
        }
        extractions.push(extraction);
    }

    // Subtraction view: aggregate coefficient minus everyone else's must be
    // the attacker's own random — i.e. the totals must reconcile exactly.
    for t in 0..degree as usize {
        let others: i128 = extractions
            .iter()
            .map(|e| e.coefficients_low_to_high()[t].value())
            .sum();
        let expected = own_state.randoms[t] as i128 + others;
        let got = aggregate_low[t].value();
        if got != expected {
            return Err(AttackError::InconsistentExtraction(format!(
                "degree-{} aggregate {} != own {} + extracted others {}",
                t + 1,
                got,
                own_state.randoms[t],
                others
            )));
        }
    }
    let residual_sum: i128 =
        own_state.reading as i128 + extractions.iter().map(|e| e.residual.value()).sum::<i128>();
    if aggregate.residual.value() != residual_sum {
        return Err(AttackError::InconsistentExtraction(format!(
            "blinded residual {} != sum of extracted readings {}",
            aggregate.residual.value(),
            residual_sum
        )));
    }
    Ok(report)
}

/// The same extraction as [`member_attack`], attempted with an ordinary
/// honest-range seed and no consistency checking. Succeeds only against
/// victims whose blinding randoms all happen to be smaller than the seed —
/// the structural weakness the share plausibility check exists to catch.
pub fn imbalanced_random_attack(
    received_shares: &[ShareValue],
    own_seed: Seed,
    cluster_size: usize,
    truth: &BTreeMap<NodeId, PrivateState>,
) -> AttackReport {
    let mut report = AttackReport::against(&readings_of(truth));
    let degree = cluster_size.saturating_sub(1) as u32;
    for share in received_shares {
        if let Some(state) = truth.get(&share.from) {
            let extraction = extract_base_coefficients(share.value, own_seed, degree);
            report.record_extraction(share.from, &extraction, state);
        }
    }
    report
}

/// Exact reconstruction of a single victim's polynomial from `m`
/// evaluations at distinct seeds; returns the constant term (the reading).
/// This is what colluding members and a successful eavesdropper reduce to.
pub fn reconstruct_from_evals(seeds: &[Seed], evals: &[WideInt]) -> Result<WideInt, CpdaError> {
    let solved = solve_vandermonde(seeds, evals)?;
    Ok(solved.coefficients[0])
}

/// The attack experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackScenario {
    /// Cluster leader announces a dominant seed and unblinds its members.
    Leader,
    /// Cluster member announces a dominant seed and unblinds everyone else.
    Member,
    /// Cluster member keeps an honest-range seed and tries extraction
    /// anyway, hoping the victims drew small randoms.
    Imbalanced,
    /// All other members pool their views to reconstruct the leader's
    /// polynomial.
    Collude,
    /// An adjacent non-participant reads what it can off the air and
    /// reconstructs member polynomials.
    Eavesdrop,
}

impl AttackScenario {
    pub fn token(self) -> &'static str {
        match self {
            AttackScenario::Leader => "leader",
            AttackScenario::Member => "member",
            AttackScenario::Imbalanced => "imbalanced",
            AttackScenario::Collude => "collude",
            AttackScenario::Eavesdrop => "eavesdrop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leader" => Some(AttackScenario::Leader),
            "member" => Some(AttackScenario::Member),
            "imbalanced" => Some(AttackScenario::Imbalanced),
            "collude" => Some(AttackScenario::Collude),
            "eavesdrop" => Some(AttackScenario::Eavesdrop),
            _ => None,
        }
    }
}

/// Configuration of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: AttackScenario,
    pub defenses: Defenses,
    pub params: CpdaParams,
    /// Seed the attacker announces. Defaults to [`DEFAULT_ATTACK_SEED`]
    /// for the dominant-seed scenarios and to the top of the honest range
    /// for the imbalanced one.
    pub attack_seed: Option<u64>,
    /// When false, everything on the air is readable by overhearers.
    pub encryption_enabled: bool,
    /// Whether the leader's own blinded sum is observable to the other
    /// members. The protocol never broadcasts it; this models any side
    /// channel (such as an unprotected upward report) as an explicit,
    /// reportable assumption.
    pub leak_leader_blinded: bool,
    /// Give the eavesdropper the cluster's link keys, making encrypted
    /// shares readable to it.
    pub outsider_has_keys: bool,
}

impl ScenarioConfig {
    pub fn new(scenario: AttackScenario) -> Self {
        ScenarioConfig {
            scenario,
            defenses: Defenses::none(),
            params: CpdaParams::default(),
            attack_seed: None,
            encryption_enabled: true,
            leak_leader_blinded: false,
            outsider_has_keys: false,
        }
    }

    fn effective_attack_seed(&self) -> u64 {
        self.attack_seed.unwrap_or(match self.scenario {
            AttackScenario::Imbalanced => self.params.seed_hi,
            _ => DEFAULT_ATTACK_SEED,
        })
    }
}

/// What a scenario run produced.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub report: AttackReport,
    pub round: ClusterRoundOutcome,
    /// Simulator ground truth for deeper checks in tests.
    pub transcript: ClusterTranscript,
}

const SERVER: NodeId = NodeId(0);
const LEADER: NodeId = NodeId(1);
const MEMBER_B: NodeId = NodeId(2);
const MEMBER_C: NodeId = NodeId(3);
const OUTSIDER: NodeId = NodeId(4);

fn scenario_topology() -> Topology {
    // Server - leader - two members forming a triangle, plus an outsider
    // within earshot of all three cluster nodes.
    Topology::from_edges(
        5,
        SERVER.0,
        &[(0, 1), (1, 2), (1, 3), (2, 3), (4, 1), (4, 2), (4, 3)],
    )
    .expect("fixed scenario topology is valid")
}

/// Run one cluster round with the chosen adversary wired in and report
/// what it recovered. Deterministic in `rng`.
///
/// The world is small and fixed: a three-node cluster (leader plus two
/// members) hanging off the server, and an outsider adjacent to all three
/// cluster nodes. Readings are drawn uniformly from `[0, d_max]`.
pub fn run_attack_scenario(
    cfg: &ScenarioConfig,
    rng: &RngStream,
) -> Result<ScenarioOutcome, AttackError> {
    use rand::Rng;

    let attack_seed = cfg.effective_attack_seed();
    if cfg.scenario == AttackScenario::Imbalanced
        && !(cfg.params.seed_lo..=cfg.params.seed_hi).contains(&attack_seed)
    {
        return Err(AttackError::InvalidScenario(format!(
            "imbalanced scenario requires a seed in the honest range [{}, {}], got {attack_seed}",
            cfg.params.seed_lo, cfg.params.seed_hi
        )));
    }

    let topology = scenario_topology();
    let cluster = [LEADER, MEMBER_B, MEMBER_C];
    let (mut rings, security) = synthetic_pairwise_security(&cluster, &[OUTSIDER], 0);
    if cfg.outsider_has_keys {
        let keys: Vec<_> = security.iter().map(|(_, link)| link.key_id()).collect();
        let outsider_ring = rings.get_mut(&OUTSIDER).expect("outsider ring");
        outsider_ring.ring.extend(keys);
    }

    let mut readings: BTreeMap<NodeId, u64> = BTreeMap::new();
    for n in cluster {
        let mut stream = rng.derive(&format!("reading/node:{n}"));
        readings.insert(n, stream.random_range(0..=cfg.params.d_max));
    }

    let seed_overrides: BTreeMap<NodeId, Seed> = match cfg.scenario {
        AttackScenario::Leader => [(LEADER, Seed(attack_seed))].into(),
        AttackScenario::Member | AttackScenario::Imbalanced => {
            [(MEMBER_B, Seed(attack_seed))].into()
        }
        AttackScenario::Collude | AttackScenario::Eavesdrop => BTreeMap::new(),
    };
    let random_overrides = BTreeMap::new();

    let setup = RoundSetup {
        leader: LEADER,
        members: &[MEMBER_B, MEMBER_C],
        readings: &readings,
        security: &security,
        mode: AggregationMode::Standard,
        defenses: cfg.defenses,
        params: &cfg.params,
        retry_on_share_reject: false,
        seed_overrides: &seed_overrides,
        random_overrides: &random_overrides,
    };
    let mut bus = MessageBus::new();
    let result = run_cluster_round(&setup, &mut bus, &rng.derive("round"))?;

    let target_nodes: &[NodeId] = match cfg.scenario {
        AttackScenario::Leader | AttackScenario::Eavesdrop => &[MEMBER_B, MEMBER_C],
        AttackScenario::Member | AttackScenario::Imbalanced => &[LEADER, MEMBER_C],
        AttackScenario::Collude => &[LEADER],
    };

    if result.outcome.verdict != RoundVerdict::Completed {
        let targets = target_nodes.iter().map(|n| (*n, readings[n])).collect();
        let mut report = AttackReport::against(&targets);
        report.defense_verdict = DefenseVerdict::Rejected;
        return Ok(ScenarioOutcome {
            report,
            round: result.outcome,
            transcript: result.transcript,
        });
    }

    let transcript = &result.transcript;
    let truth: BTreeMap<NodeId, PrivateState> = target_nodes
        .iter()
        .map(|n| (*n, transcript.privates[n].clone()))
        .collect();
    let mut report = match cfg.scenario {
        AttackScenario::Leader => leader_attack(
            &transcript.shares_received_by(LEADER),
            transcript.seeds[&LEADER],
            cluster.len(),
            &truth,
        ),
        AttackScenario::Member => {
            let own_state = &transcript.privates[&MEMBER_B];
            let own_blinded =
                assemble_blinded_sum(MEMBER_B, &transcript.shares_held_by(MEMBER_B))
                    .map_err(AttackError::Protocol)?
                    .value;
            member_attack(
                own_blinded,
                &transcript.shares_received_by(MEMBER_B),
                own_state,
                &truth,
            )?
        }
        AttackScenario::Imbalanced => imbalanced_random_attack(
            &transcript.shares_received_by(MEMBER_B),
            transcript.seeds[&MEMBER_B],
            cluster.len(),
            &truth,
        ),
        AttackScenario::Collude => collude_attack(cfg, transcript, &truth)?,
        AttackScenario::Eavesdrop => {
            eavesdrop_attack(cfg, &topology, &rings[&OUTSIDER], bus.trace(), &truth)?
        }
    };
    report.defense_verdict = if cfg.defenses.seed_check || cfg.defenses.share_check {
        DefenseVerdict::Accepted
    } else {
        DefenseVerdict::NotChecked
    };
    Ok(ScenarioOutcome { report, round: result.outcome, transcript: result.transcript })
}

/// All members pool what they legitimately hold: the shares the leader
/// sent each of them (evaluations of the leader's polynomial at their
/// seeds) and the shares they sent the leader. One more evaluation — the
/// leader's self-share — is needed, and equals the leader's blinded sum
/// minus the pooled sent shares; it is available only if that blinded sum
/// leaks (explicitly, or because nothing is encrypted).
fn collude_attack(
    cfg: &ScenarioConfig,
    transcript: &ClusterTranscript,
    truth: &BTreeMap<NodeId, PrivateState>,
) -> Result<AttackReport, AttackError> {
    let mut report = AttackReport::against(&readings_of(truth));
    let leader = transcript.leader;
    if !(cfg.leak_leader_blinded || !cfg.encryption_enabled) {
        return Ok(report);
    }
    let leader_blinded = match transcript.blinded.get(&leader) {
        Some(&v) => v,
        None => return Ok(report),
    };
    let mut sent_to_leader = WideInt::ZERO;
    for share in transcript.shares_received_by(leader) {
        sent_to_leader = sent_to_leader.checked_add(share.value).map_err(AttackError::Protocol)?;
    }
    let leader_self_share =
        leader_blinded.checked_sub(sent_to_leader).map_err(AttackError::Protocol)?;

    let mut seeds = Vec::new();
    let mut evals = Vec::new();
    for share in transcript.shares.iter().filter(|s| s.from == leader && s.eval_at != leader) {
        seeds.push(transcript.seeds[&share.eval_at]);
        evals.push(share.value);
    }
    seeds.push(transcript.seeds[&leader]);
    evals.push(leader_self_share);

    let reading = reconstruct_from_evals(&seeds, &evals).map_err(AttackError::Protocol)?;
    report.record_reading(leader, reading.value());
    Ok(report)
}

fn outsider_can_read(
    msg: &MessageRecord,
    topology: &Topology,
    ring: &KeyRing,
    encryption_enabled: bool,
) -> bool {
    if !eavesdroppers_of(topology, msg).contains(&ring.owner) {
        return false;
    }
    match msg.key_id {
        None => true,
        Some(key) => !encryption_enabled || can_decrypt(ring, key),
    }
}

/// The outsider reads what it can off the air. For a member victim it
/// needs the victim's outgoing shares (evaluations at the other seeds),
/// the victim's broadcast blinded sum, and the shares the others sent the
/// victim — the last two combine into the victim's self-evaluation. Any
/// unreadable piece leaves that victim unrecovered.
fn eavesdrop_attack(
    cfg: &ScenarioConfig,
    topology: &Topology,
    outsider_ring: &KeyRing,
    trace: &[MessageRecord],
    truth: &BTreeMap<NodeId, PrivateState>,
) -> Result<AttackReport, AttackError> {
    use crate::sim::Destination;

    let mut seeds: BTreeMap<NodeId, Seed> = BTreeMap::new();
    let mut shares: BTreeMap<(NodeId, NodeId), WideInt> = BTreeMap::new();
    let mut blinded: BTreeMap<NodeId, WideInt> = BTreeMap::new();
    for msg in trace {
        if !outsider_can_read(msg, topology, outsider_ring, cfg.encryption_enabled) {
            continue;
        }
        match (msg.kind, msg.dst) {
            (MessageKind::Seed, _) => {
                seeds.insert(msg.src, Seed(msg.payload[0] as u64));
            }
            (MessageKind::Share, Destination::Unicast(dst)) => {
                shares.insert(
                    (msg.src, dst),
                    WideInt::new(msg.payload[0]).map_err(AttackError::Protocol)?,
                );
            }
            (MessageKind::Fbcast, _) => {
                blinded.insert(
                    msg.src,
                    WideInt::new(msg.payload[0]).map_err(AttackError::Protocol)?,
                );
            }
            _ => {}
        }
    }

    let participants: Vec<NodeId> = seeds.keys().copied().collect();
    let mut report = AttackReport::against(&readings_of(truth));
    'victims: for &victim in truth.keys() {
        let Some(&victim_blinded) = blinded.get(&victim) else { continue };
        let others: Vec<NodeId> =
            participants.iter().copied().filter(|&p| p != victim).collect();
        let mut eval_seeds = Vec::new();
        let mut evals = Vec::new();
        let mut incoming = WideInt::ZERO;
        for &other in &others {
            let Some(&outgoing) = shares.get(&(victim, other)) else { continue 'victims };
            let Some(&received) = shares.get(&(other, victim)) else { continue 'victims };
            eval_seeds.push(seeds[&other]);
            evals.push(outgoing);
            incoming = incoming.checked_add(received).map_err(AttackError::Protocol)?;
        }
        let self_eval = victim_blinded.checked_sub(incoming).map_err(AttackError::Protocol)?;
        eval_seeds.push(seeds[&victim]);
        evals.push(self_eval);
        let reading = reconstruct_from_evals(&eval_seeds, &evals).map_err(AttackError::Protocol)?;
        report.record_reading(victim, reading.value());
    }
    Ok(report)
}
