use serde::{Deserialize, Serialize};
use std::fmt;

use super::MechanismError;

/// Tolerance for probability vectors summing to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A class index in `[0, n_classes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub u16);

impl ClassLabel {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Builds a label, checking it against the class count.
    pub fn checked(value: usize, n_classes: usize) -> Result<Self, MechanismError> {
        if value >= n_classes || value > u16::MAX as usize {
            return Err(MechanismError::ClassOutOfRange { class: value, n_classes });
        }
        Ok(ClassLabel(value as u16))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One worker's 1-bit report on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Vote {
    Label(ClassLabel),
    #[default]
    Abstain,
}

impl Vote {
    pub fn of(class: u16) -> Self {
        Vote::Label(ClassLabel(class))
    }

    #[inline]
    pub fn label(self) -> Option<ClassLabel> {
        match self {
            Vote::Label(c) => Some(c),
            Vote::Abstain => None,
        }
    }

    #[inline]
    pub fn is_abstain(self) -> bool {
        matches!(self, Vote::Abstain)
    }
}

impl From<ClassLabel> for Vote {
    fn from(c: ClassLabel) -> Self {
        Vote::Label(c)
    }
}

/// A soft-label prediction: non-negative scores that sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrediction {
    scores: Vec<f64>,
}

impl SoftPrediction {
    pub fn new(scores: Vec<f64>) -> Result<Self, MechanismError> {
        if scores.is_empty() {
            return Err(MechanismError::InvalidSoftPrediction("empty score vector".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(MechanismError::InvalidSoftPrediction(format!(
                "score {bad} is negative or not finite"
            )));
        }
        let total: f64 = scores.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(MechanismError::InvalidSoftPrediction(format!(
                "scores sum to {total}, expected 1"
            )));
        }
        Ok(SoftPrediction { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-class vote tallies of one worker over the public dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelCount(pub Vec<u64>);

impl LabelCount {
    pub fn zeros(n_classes: usize) -> Self {
        LabelCount(vec![0; n_classes])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

/// Reward scale `lambda`, penalty `beta` and the size of the class set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub lambda: f64,
    pub beta: f64,
    pub n_classes: usize,
}

impl MechanismParams {
    pub fn new(lambda: f64, beta: f64, n_classes: usize) -> Result<Self, MechanismError> {
        let params = MechanismParams { lambda, beta, n_classes };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(MechanismError::InvalidParams(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(MechanismError::InvalidParams(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if self.n_classes == 0 || self.n_classes > u16::MAX as usize {
            return Err(MechanismError::InvalidParams(format!(
                "class count {} outside [1, {}]",
                self.n_classes,
                u16::MAX
            )));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        MechanismParams { lambda, ..self }
    }
}

/// Discrete density of the labels reported by everyone except one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerDensity(pub Vec<f64>);

impl PeerDensity {
    #[inline]
    pub fn get(&self, class: ClassLabel) -> f64 {
        self.0[class.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An `n_workers x m_samples` grid of votes, stored row-major by worker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteMatrix {
    n_workers: usize,
    m_samples: usize,
    entries: Vec<Vote>,
}

impl VoteMatrix {
    /// A matrix where every worker abstains on every sample.
    pub fn new(n_workers: usize, m_samples: usize) -> Self {
        VoteMatrix { n_workers, m_samples, entries: vec![Vote::Abstain; n_workers * m_samples] }
    }

    pub fn from_rows(rows: Vec<Vec<Vote>>) -> Result<Self, MechanismError> {
        let n_workers = rows.len();
        let m_samples = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != m_samples) {
            return Err(MechanismError::Shape(format!(
                "worker {i} has {} votes, expected {m_samples}",
                row.len()
            )));
        }
        Ok(VoteMatrix { n_workers, m_samples, entries: rows.into_iter().flatten().collect() })
    }

    #[inline]
    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    #[inline]
    pub fn m_samples(&self) -> usize {
        self.m_samples
    }

    #[inline]
    pub fn get(&self, worker: usize, sample: usize) -> Vote {
        self.entries[worker * self.m_samples + sample]
    }

    #[inline]
    pub fn set(&mut self, worker: usize, sample: usize, vote: Vote) {
        self.entries[worker * self.m_samples + sample] = vote;
    }

    pub fn row(&self, worker: usize) -> &[Vote] {
        &self.entries[worker * self.m_samples..(worker + 1) * self.m_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Vote]> {
        // chunks() panics on size 0
        self.entries.chunks(self.m_samples.max(1)).take(self.n_workers)
    }

    pub fn column(&self, sample: usize) -> impl Iterator<Item = Vote> + '_ {
        (0..self.n_workers).map(move |i| self.get(i, sample))
    }

    /// Checks every vote against the class count.
    pub fn validate(&self, n_classes: usize) -> Result<(), MechanismError> {
        for (idx, vote) in self.entries.iter().enumerate() {
            if let Vote::Label(c) = vote {
                if c.index() >= n_classes {
                    return Err(MechanismError::VoteOutOfRange {
                        worker: idx / self.m_samples.max(1),
                        sample: idx % self.m_samples.max(1),
                        class: c.index(),
                        n_classes,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Output of a reward computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    /// Total reward per worker.
    pub reward_scores: Vec<f64>,
    /// Per-(worker, sample) rewards when traces are retained. Samples where a
    /// worker abstained or had no voting peer contribute `0.0`.
    pub per_sample: Option<Vec<Vec<f64>>>,
    /// Majority label per sample; `None` where nobody voted.
    pub aggregated: Vec<Option<ClassLabel>>,
    /// Number of (worker, voting peer) pairs evaluated.
    pub peer_comparisons: u64,
}
