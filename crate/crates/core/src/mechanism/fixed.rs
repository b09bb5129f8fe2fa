//! Integer-only variant of the reward for ledgers without floating point.
//!
//! Amounts are scaled integers with denominator [`FIXED_POINT_SCALE`]. Each
//! per-sample reward is computed as one exact rational and floored once, so
//! a score differs from the float path by less than one unit per sample.

use serde::{Deserialize, Serialize};

use super::{verify_inputs, ClassLabel, LabelCount, MechanismError, MechanismParams, SampleTally, Vote, VoteMatrix};

pub const FIXED_POINT_SCALE: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedParams {
    /// `lambda * FIXED_POINT_SCALE`
    pub lambda: i64,
    /// `beta * FIXED_POINT_SCALE`
    pub beta: i64,
    pub n_classes: usize,
}

impl FixedParams {
    pub fn from_float(params: &MechanismParams) -> Result<Self, MechanismError> {
        params.validate()?;
        let scale = FIXED_POINT_SCALE as f64;
        Ok(FixedParams {
            lambda: (params.lambda * scale).round() as i64,
            beta: (params.beta * scale).round() as i64,
            n_classes: params.n_classes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedRewardReport {
    /// Scores in units of `1 / FIXED_POINT_SCALE`.
    pub reward_scores: Vec<i64>,
    pub aggregated: Vec<Option<ClassLabel>>,
    pub peer_comparisons: u64,
}

pub fn ptsfd_fixed(
    votes: &VoteMatrix,
    label_counts: &[LabelCount],
    params: &FixedParams,
) -> Result<FixedRewardReport, MechanismError> {
    if params.lambda <= 0 || params.beta < 0 {
        return Err(MechanismError::InvalidParams(format!(
            "fixed-point lambda {} must be positive and beta {} non-negative",
            params.lambda, params.beta
        )));
    }
    let n = votes.n_workers();
    let global = verify_inputs(votes, label_counts, params.n_classes)?;
    let excluded: Vec<Vec<i128>> = label_counts
        .iter()
        .map(|own| global.0.iter().zip(&own.0).map(|(g, o)| (g - o) as i128).collect())
        .collect();
    let excluded_total: Vec<i128> = excluded.iter().map(|e| e.iter().sum()).collect();

    let scale = FIXED_POINT_SCALE as i128;
    let lambda = params.lambda as i128;
    let beta = params.beta as i128;
    let mut reward_scores = vec![0i64; n];
    let mut aggregated = Vec::with_capacity(votes.m_samples());
    let mut peer_comparisons = 0u64;
    let mut tally = SampleTally::new(params.n_classes);

    for j in 0..votes.m_samples() {
        tally.fill(votes, j);
        aggregated.push(tally.majority());
        if tally.voters < 2 {
            continue;
        }
        let n_peers = (tally.voters - 1) as i128;
        for i in 0..n {
            let Vote::Label(x) = votes.get(i, j) else { continue };
            peer_comparisons += n_peers as u64;
            let matches = (tally.hist[x.index()] - 1) as i128;
            let count = excluded[i][x.index()];
            if matches > 0 && count == 0 {
                return Err(MechanismError::ZeroMatchDensity { class: x.index() });
            }
            let count = count.max(1);
            let numerator = lambda * (matches * excluded_total[i] * scale - beta * count * n_peers);
            let denominator = scale * count * n_peers;
            reward_scores[i] += numerator.div_euclid(denominator) as i64;
        }
    }

    Ok(FixedRewardReport { reward_scores, aggregated, peer_comparisons })
}
