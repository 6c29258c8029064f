//! The private aggregation protocol.
//!
//! Within a cluster of `m` nodes, each node hides its reading behind a
//! random polynomial of degree `m-1` (its reading as the constant term,
//! fresh uniform randoms as the other coefficients), evaluates that
//! polynomial at every cluster member's public seed, and sends each member
//! the share for that member's seed over an encrypted link. Every node sums
//! the `m` shares it holds into a blinded sum; the blinded sums are exactly
//! the cluster-total polynomial evaluated at the seeds, so the leader can
//! recover the sum of readings — and nothing about individual readings —
//! by solving a small Vandermonde system ([`solve_sum_standard`]) or, when
//! its own seed dwarfs every other quantity, by plain digit extraction
//! ([`solve_sum_efficient`]).
//!
//! The same digit-extraction trick is what a malicious participant uses to
//! unblind its neighbours (see [`crate::adversary`]); the plausibility
//! checks on seeds and shares defend against it by rejecting rounds in
//! which any one quantity dominates the rest.

mod round;
pub mod solve;
mod wideint;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::sim::{NodeId, RngStream};

pub use round::{
    run_cluster_round, AggregationMode, ClusterRoundOutcome, ClusterRoundResult,
    ClusterTranscript, CpdaParams, Defenses, RoundMessageCounts, RoundSetup, RoundVerdict,
};
pub use solve::{extract_base_coefficients, solve_vandermonde, Extraction, OpCounts, SolveOutcome};
pub use wideint::{checked_sum, WideInt, MAX_MAGNITUDE_BITS};

#[derive(Debug, thiserror::Error)]
pub enum CpdaError {
    #[error("value magnitude exceeds 2^{}", MAX_MAGNITUDE_BITS)]
    MagnitudeOverflow,
    #[error("no unused seed value left in the requested range")]
    RangeExhausted,
    #[error("seeds are not pairwise distinct")]
    DuplicateSeeds,
    #[error("linear system is singular")]
    SingularMatrix,
    #[error("linear system has no integer solution")]
    NonIntegerSolution,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no pairwise key between {a} and {b}")]
    NoPairwiseKey { a: NodeId, b: NodeId },
    #[error("share bookkeeping mismatch: {0}")]
    ShareMismatch(String),
}

/// A node's public evaluation point, announced in clear at the start of a
/// round. Always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seed(pub u64);

impl std::fmt::Display for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a node keeps to itself during a round: its reading and the random
/// polynomial coefficients blinding it (`randoms[t-1]` is the coefficient
/// of degree `t`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateState {
    pub reading: u64,
    pub randoms: Vec<u64>,
    pub own_seed: Seed,
}

/// One polynomial share: `from`'s private polynomial evaluated at
/// `eval_at`'s seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShareValue {
    pub from: NodeId,
    pub eval_at: NodeId,
    pub value: WideInt,
}

/// The sum of all `m` shares evaluated at one node's seed — the cluster
/// total still blinded by the aggregate randoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlindedSum {
    pub at: NodeId,
    pub value: WideInt,
}

/// Outcome of a plausibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckVerdict {
    Accept,
    Reject,
}

/// Draw a seed uniformly from `[lo, hi]`, rejecting values already in
/// `taken`. Errors with [`CpdaError::RangeExhausted`] when no free value
/// exists, and refuses degenerate ranges (`lo` must be at least 1).
pub fn generate_seed(
    rng: &mut RngStream,
    lo: u64,
    hi: u64,
    taken: &BTreeSet<u64>,
) -> Result<Seed, CpdaError> {
    if lo == 0 || lo > hi {
        return Err(CpdaError::PreconditionViolated(format!(
            "seed range [{lo}, {hi}] is empty or includes 0"
        )));
    }
    let range_size = hi - lo + 1;
    let taken_in_range = taken.range(lo..=hi).count() as u64;
    if taken_in_range >= range_size {
        return Err(CpdaError::RangeExhausted);
    }
    loop {
        let v = rng.random_range(lo..=hi);
        if !taken.contains(&v) {
            return Ok(Seed(v));
        }
    }
}

/// Triangle-style plausibility check over a cluster's seeds: accept only if
/// every seed is strictly smaller than the sum of all the others. A seed
/// large enough to dominate the rest is exactly what digit-extraction
/// attacks need, so such sets are rejected. Seeds must be pairwise
/// distinct.
pub fn validate_seeds(seeds: &[Seed]) -> Result<CheckVerdict, CpdaError> {
    let mut sorted: Vec<u64> = seeds.iter().map(|s| s.0).collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CpdaError::DuplicateSeeds);
    }
    let total: u128 = sorted.iter().map(|&s| s as u128).sum();
    for &s in &sorted {
        if (s as u128) * 2 >= total {
            return Ok(CheckVerdict::Reject);
        }
    }
    Ok(CheckVerdict::Accept)
}

/// Evaluate `owner`'s private polynomial at every seed in `seeds`,
/// producing one share per cluster member (including the share the owner
/// keeps for itself). The polynomial degree must match the cluster size:
/// `randoms.len() + 1 == seeds.len()`.
pub fn compute_shares(
    owner: NodeId,
    state: &PrivateState,
    seeds: &BTreeMap<NodeId, Seed>,
) -> Result<Vec<ShareValue>, CpdaError> {
    if state.randoms.len() + 1 != seeds.len() {
        return Err(CpdaError::PreconditionViolated(format!(
            "{} randoms for a cluster of {}: polynomial degree must be cluster size - 1",
            state.randoms.len(),
            seeds.len()
        )));
    }
    let mut shares = Vec::with_capacity(seeds.len());
    for (&member, &seed) in seeds {
        let s = WideInt::from(seed.0);
        let mut value = WideInt::from(state.reading);
        let mut power = WideInt::ONE;
        for &r in &state.randoms {
            power = power.checked_mul(s)?;
            value = value.checked_add(WideInt::from(r).checked_mul(power)?)?;
        }
        shares.push(ShareValue { from: owner, eval_at: member, value });
    }
    Ok(shares)
}

/// Triangle-style plausibility check over the `m` shares a node holds for
/// its own seed: accept only if every share is strictly smaller than the
/// sum of the others. All shares must be evaluations at the same seed and
/// non-negative (honest shares always are).
pub fn validate_shares(held: &[ShareValue]) -> Result<CheckVerdict, CpdaError> {
    let at = held
        .first()
        .map(|s| s.eval_at)
        .ok_or_else(|| CpdaError::ShareMismatch("no shares to check".into()))?;
    if let Some(bad) = held.iter().find(|s| s.eval_at != at) {
        return Err(CpdaError::ShareMismatch(format!(
            "shares evaluated at different seeds: {} vs {}",
            at, bad.eval_at
        )));
    }
    if held.iter().any(|s| s.value.is_negative()) {
        return Ok(CheckVerdict::Reject);
    }
    let total: i128 = held.iter().map(|s| s.value.value()).sum();
    for s in held {
        if s.value.value() * 2 >= total {
            return Ok(CheckVerdict::Reject);
        }
    }
    Ok(CheckVerdict::Accept)
}

/// Sum the shares held at one seed into that node's blinded sum. All shares
/// must be evaluations at `at`, from distinct senders.
pub fn assemble_blinded_sum(at: NodeId, held: &[ShareValue]) -> Result<BlindedSum, CpdaError> {
    if held.is_empty() {
        return Err(CpdaError::ShareMismatch("no shares to assemble".into()));
    }
    let mut senders = BTreeSet::new();
    for s in held {
        if s.eval_at != at {
            return Err(CpdaError::ShareMismatch(format!(
                "share from {} evaluated at {}, expected {}",
                s.from, s.eval_at, at
            )));
        }
        if !senders.insert(s.from) {
            return Err(CpdaError::ShareMismatch(format!("duplicate share from {}", s.from)));
        }
    }
    let value = checked_sum(held.iter().map(|s| s.value))?;
    Ok(BlindedSum { at, value })
}

/// Result of the exact (standard-mode) recovery.
#[derive(Debug, Clone)]
pub struct StandardSolve {
    pub sum: WideInt,
    /// Aggregate random coefficients in ascending degree order.
    pub aggregate_randoms: Vec<WideInt>,
    pub ops: OpCounts,
}

/// Recover the cluster sum from all `m` blinded sums by solving the seed
/// Vandermonde system exactly. `seeds[i]` and `blinded[i]` must belong to
/// the same node.
pub fn solve_sum_standard(seeds: &[Seed], blinded: &[WideInt]) -> Result<StandardSolve, CpdaError> {
    let out = solve_vandermonde(seeds, blinded)?;
    let mut coeffs = out.coefficients.into_iter();
    let sum = coeffs.next().expect("system has at least one unknown");
    Ok(StandardSolve { sum, aggregate_randoms: coeffs.collect(), ops: out.ops })
}

/// Result of the cheap (efficient-mode) recovery.
#[derive(Debug, Clone)]
pub struct EfficientSolve {
    pub sum: WideInt,
    /// Aggregate random coefficients in ascending degree order, as read off
    /// the digit extraction.
    pub aggregate_randoms: Vec<WideInt>,
    pub divisions: u64,
}

/// Recover the cluster sum from the leader's own blinded sum alone, by
/// base-`own_seed` digit extraction — `m - 1` divisions, no broadcasts
/// from the members needed.
///
/// Correct only when the leader's seed exceeds every quantity the digits
/// could carry, which is guaranteed by requiring
/// `own_seed > m * (r_max + d_max)`: each digit of the blinded sum is then
/// an aggregate random (at most `m * r_max`) and the residual is the sum of
/// readings (at most `m * d_max`), with no possibility of carries.
pub fn solve_sum_efficient(
    own_blinded: WideInt,
    own_seed: Seed,
    cluster_size: usize,
    r_max: u64,
    d_max: u64,
) -> Result<EfficientSolve, CpdaError> {
    if cluster_size < 2 {
        return Err(CpdaError::PreconditionViolated(format!(
            "cluster of {cluster_size} cannot run blinded aggregation"
        )));
    }
    let m = cluster_size as u128;
    let bound = m * (r_max as u128 + d_max as u128);
    if (own_seed.0 as u128) <= bound {
        return Err(CpdaError::PreconditionViolated(format!(
            "seed {} not above the digit bound {bound} for cluster size {cluster_size}",
            own_seed.0
        )));
    }
    if own_blinded.is_negative() {
        return Err(CpdaError::PreconditionViolated(
            "blinded sum must be non-negative".into(),
        ));
    }
    let extraction = extract_base_coefficients(own_blinded, own_seed, cluster_size as u32 - 1);
    Ok(EfficientSolve {
        sum: extraction.residual,
        aggregate_randoms: extraction.coefficients_low_to_high(),
        divisions: extraction.divisions,
    })
}
