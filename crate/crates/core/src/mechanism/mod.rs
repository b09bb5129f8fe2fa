//! Quantization, label counting, the peer-consistency reward and majority
//! vote. Everything here is a pure function of its inputs.
//!
//! A worker `i` reporting class `x` on sample `j` earns
//!
//! ```text
//! tau_ij = lambda * ( (1 / n_peers) * sum_p tau0(x, x_pj) - beta )
//! tau0(x, y) = 1 / R_i(x)   if x == y,   0 otherwise
//! ```
//!
//! where the sum runs over the peers that voted on `j` and `R_i` is the
//! label density of all revealed label counts with worker `i`'s own counts
//! removed. A worker's score is the plain sum of `tau_ij` over the samples it
//! voted on. Samples where it had no voting peer contribute nothing.

mod fixed;
mod types;

pub use fixed::{ptsfd_fixed, FixedParams, FixedRewardReport, FIXED_POINT_SCALE};
pub use types::{
    ClassLabel, LabelCount, MechanismParams, PeerDensity, RewardReport, SoftPrediction, Vote,
    VoteMatrix, SIMPLEX_TOLERANCE,
};

use crate::error::ErrorCategory;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid soft prediction: {0}")]
    InvalidSoftPrediction(String),
    #[error("soft prediction has {got} scores, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("worker {worker}, sample {sample}: class {class} out of range for {n_classes} classes")]
    VoteOutOfRange { worker: usize, sample: usize, class: usize, n_classes: usize },
    #[error("invalid mechanism parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("own count exceeds global count for class {class}")]
    OwnExceedsGlobal { class: usize },
    #[error("no peer reported any label; excluded density is undefined")]
    DegeneratePeerSet,
    #[error("matched class {class} has zero excluded density")]
    ZeroMatchDensity { class: usize },
    #[error("worker {worker} did not vote on sample {sample}")]
    NoVote { worker: usize, sample: usize },
    #[error("worker {worker}: revealed label count does not match its votes")]
    CountMismatch { worker: usize },
    #[error("sample {sample} has no votes")]
    UnvotedSample { sample: usize },
}

impl MechanismError {
    pub fn category(&self) -> ErrorCategory {
        ErrorCategory::Validation
    }
}

/// Reduces a soft prediction to its argmax class. Ties go to the lowest index.
pub fn quantize_1bit(
    soft: &SoftPrediction,
    n_classes: usize,
) -> Result<ClassLabel, MechanismError> {
    if soft.len() != n_classes {
        return Err(MechanismError::WrongLength { expected: n_classes, got: soft.len() });
    }
    let mut best = 0;
    for (c, &s) in soft.scores().iter().enumerate() {
        if s > soft.scores()[best] {
            best = c;
        }
    }
    ClassLabel::checked(best, n_classes)
}

/// Tallies the non-abstaining votes of one worker.
pub fn label_count(votes: &[Vote], n_classes: usize) -> Result<LabelCount, MechanismError> {
    let mut counts = LabelCount::zeros(n_classes);
    for vote in votes {
        if let Vote::Label(c) = vote {
            if c.index() >= n_classes {
                return Err(MechanismError::ClassOutOfRange { class: c.index(), n_classes });
            }
            counts.0[c.index()] += 1;
        }
    }
    Ok(counts)
}

/// Label density of everyone but the owner of `own`, normalized by the exact
/// excluded total so it always sums to one.
pub fn peer_density_excluding(
    global: &LabelCount,
    own: &LabelCount,
) -> Result<PeerDensity, MechanismError> {
    if global.n_classes() != own.n_classes() {
        return Err(MechanismError::Shape(format!(
            "global count has {} classes, own count has {}",
            global.n_classes(),
            own.n_classes()
        )));
    }
    let mut excluded = Vec::with_capacity(global.n_classes());
    for (class, (&g, &o)) in global.0.iter().zip(&own.0).enumerate() {
        if o > g {
            return Err(MechanismError::OwnExceedsGlobal { class });
        }
        excluded.push(g - o);
    }
    let total: u64 = excluded.iter().sum();
    if total == 0 {
        return Err(MechanismError::DegeneratePeerSet);
    }
    Ok(PeerDensity(excluded.into_iter().map(|e| e as f64 / total as f64).collect()))
}

/// Pairwise match payment: `1 / R(own)` on agreement, zero otherwise.
pub fn tau0(own: ClassLabel, peer: ClassLabel, r_excl: &PeerDensity) -> Result<f64, MechanismError> {
    if own != peer {
        return Ok(0.0);
    }
    let density = r_excl.get(own);
    if density <= 0.0 {
        return Err(MechanismError::ZeroMatchDensity { class: own.index() });
    }
    Ok(1.0 / density)
}

/// Reward of one worker on one sample, evaluated directly from the votes.
///
/// `densities[i]` is worker `i`'s excluded peer density. Returns `0.0` when
/// no peer voted on the sample.
pub fn reward_sample(
    worker: usize,
    sample: usize,
    votes: &VoteMatrix,
    densities: &[PeerDensity],
    params: &MechanismParams,
) -> Result<f64, MechanismError> {
    let own = votes.get(worker, sample).label().ok_or(MechanismError::NoVote { worker, sample })?;
    let mut n_peers = 0usize;
    let mut sum = 0.0;
    for (p, vote) in votes.column(sample).enumerate() {
        if p == worker {
            continue;
        }
        if let Vote::Label(peer) = vote {
            n_peers += 1;
            sum += tau0(own, peer, &densities[worker])?;
        }
    }
    if n_peers == 0 {
        return Ok(0.0);
    }
    Ok(params.lambda * (sum / n_peers as f64 - params.beta))
}

/// Checks shapes and that each revealed count equals the recount of its row.
/// Returns the global label count.
pub(crate) fn verify_inputs(
    votes: &VoteMatrix,
    label_counts: &[LabelCount],
    n_classes: usize,
) -> Result<LabelCount, MechanismError> {
    if label_counts.len() != votes.n_workers() {
        return Err(MechanismError::Shape(format!(
            "{} label counts for {} workers",
            label_counts.len(),
            votes.n_workers()
        )));
    }
    votes.validate(n_classes)?;
    let mut global = LabelCount::zeros(n_classes);
    for (worker, (row, claimed)) in votes.rows().zip(label_counts).enumerate() {
        if claimed.n_classes() != n_classes || label_count(row, n_classes)? != *claimed {
            return Err(MechanismError::CountMismatch { worker });
        }
        for (g, c) in global.0.iter_mut().zip(&claimed.0) {
            *g += c;
        }
    }
    Ok(global)
}

/// Per-sample class histograms, reused by the float and fixed-point paths.
pub(crate) struct SampleTally {
    pub hist: Vec<u64>,
    pub voters: u64,
}

impl SampleTally {
    pub fn new(n_classes: usize) -> Self {
        SampleTally { hist: vec![0; n_classes], voters: 0 }
    }

    pub fn fill(&mut self, votes: &VoteMatrix, sample: usize) {
        self.hist.iter_mut().for_each(|h| *h = 0);
        self.voters = 0;
        for vote in votes.column(sample) {
            if let Vote::Label(c) = vote {
                self.hist[c.index()] += 1;
                self.voters += 1;
            }
        }
    }

    /// Lowest class with the largest count, if anyone voted.
    pub fn majority(&self) -> Option<ClassLabel> {
        if self.voters == 0 {
            return None;
        }
        let mut best = 0;
        for (c, &n) in self.hist.iter().enumerate() {
            if n > self.hist[best] {
                best = c;
            }
        }
        Some(ClassLabel(best as u16))
    }
}

/// Rewards and aggregated labels for a set of revealed votes.
///
/// Per sample, agreement is read off the class histogram rather than by
/// comparing every pair, so the cost is `O(m * (n + |C|))`. The
/// `peer_comparisons` counter still reports the number of (worker, voting
/// peer) pairs the reward accounts for.
pub fn ptsfd(
    votes: &VoteMatrix,
    label_counts: &[LabelCount],
    params: &MechanismParams,
    retain_traces: bool,
) -> Result<RewardReport, MechanismError> {
    params.validate()?;
    let n = votes.n_workers();
    let m = votes.m_samples();
    let global = verify_inputs(votes, label_counts, params.n_classes)?;

    // 1 / R_i(x) per worker and class; None when the worker has no peers at all.
    let inverse_density: Vec<Option<Vec<f64>>> = label_counts
        .iter()
        .map(|own| match peer_density_excluding(&global, own) {
            Ok(r) => Some(r.0.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect()),
            Err(MechanismError::DegeneratePeerSet) => None,
            Err(e) => unreachable!("counts verified above: {e}"),
        })
        .collect();

    let mut reward_scores = vec![0.0; n];
    let mut per_sample = retain_traces.then(|| vec![vec![0.0; m]; n]);
    let mut aggregated = Vec::with_capacity(m);
    let mut peer_comparisons = 0u64;
    let mut tally = SampleTally::new(params.n_classes);

    for j in 0..m {
        tally.fill(votes, j);
        aggregated.push(tally.majority());
        if tally.voters < 2 {
            continue;
        }
        let n_peers = tally.voters - 1;
        for i in 0..n {
            let Vote::Label(x) = votes.get(i, j) else { continue };
            peer_comparisons += n_peers;
            let matches = tally.hist[x.index()] - 1;
            let inv = inverse_density[i]
                .as_ref()
                .expect("a worker with a voting peer has a non-degenerate peer set");
            if matches > 0 && inv[x.index()] == 0.0 {
                return Err(MechanismError::ZeroMatchDensity { class: x.index() });
            }
            let tau = params.lambda
                * (matches as f64 * inv[x.index()] / n_peers as f64 - params.beta);
            reward_scores[i] += tau;
            if let Some(trace) = per_sample.as_mut() {
                trace[i][j] = tau;
            }
        }
    }

    Ok(RewardReport { reward_scores, per_sample, aggregated, peer_comparisons })
}

/// Majority label per sample, lowest class index on ties.
pub fn majority_vote(votes: &VoteMatrix, n_classes: usize) -> Result<Vec<ClassLabel>, MechanismError> {
    votes.validate(n_classes)?;
    let mut tally = SampleTally::new(n_classes);
    (0..votes.m_samples())
        .map(|j| {
            tally.fill(votes, j);
            tally.majority().ok_or(MechanismError::UnvotedSample { sample: j })
        })
        .collect()
}

/// Difference between the top and runner-up vote counts per sample.
pub fn vote_margins(votes: &VoteMatrix, n_classes: usize) -> Vec<u64> {
    let mut tally = SampleTally::new(n_classes);
    (0..votes.m_samples())
        .map(|j| {
            tally.fill(votes, j);
            let mut sorted = tally.hist.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            sorted[0] - sorted.get(1).copied().unwrap_or(0)
        })
        .collect()
}
