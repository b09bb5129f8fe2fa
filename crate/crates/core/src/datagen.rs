//! Ground truth: class priors, Dirichlet partitions of private data, the
//! public dataset and sample-to-worker assignment.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorCategory;
use crate::mechanism::{ClassLabel, SIMPLEX_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid class prior: {0}")]
    InvalidPrior(String),
    #[error("dirichlet concentration must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("need at least one worker")]
    NoWorkers,
    #[error("public dataset must have at least one sample")]
    EmptyDataset,
    #[error("peer assignment needs 2 <= k <= n workers, got k={k}, n={n}")]
    InvalidPeerCount { k: usize, n: usize },
}

impl DataError {
    pub fn category(&self) -> ErrorCategory {
        ErrorCategory::Validation
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassPrior {
    probs: Vec<f64>,
}

impl ClassPrior {
    pub fn new(probs: Vec<f64>) -> Result<Self, DataError> {
        if probs.is_empty() {
            return Err(DataError::InvalidPrior("no classes".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DataError::InvalidPrior("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(DataError::InvalidPrior(format!("probabilities sum to {total}")));
        }
        Ok(ClassPrior { probs })
    }

    pub fn uniform(n_classes: usize) -> Self {
        ClassPrior { probs: vec![1.0 / n_classes as f64; n_classes] }
    }

    /// Empirical class frequencies of a label sequence.
    pub fn empirical(labels: &[ClassLabel], n_classes: usize) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let mut counts = vec![0usize; n_classes];
        for l in labels {
            counts[l.index()] += 1;
        }
        Ok(ClassPrior {
            probs: counts.into_iter().map(|c| c as f64 / labels.len() as f64).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }

    /// Draws one class by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassLabel {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = c;
            }
            acc += p;
            if u < acc {
                return ClassLabel(c as u16);
            }
        }
        // u landed in the rounding gap above the cumulative sum
        ClassLabel(last_positive as u16)
    }
}

impl TryFrom<Vec<f64>> for ClassPrior {
    type Error = DataError;
    fn try_from(probs: Vec<f64>) -> Result<Self, DataError> {
        ClassPrior::new(probs)
    }
}

impl From<ClassPrior> for Vec<f64> {
    fn from(p: ClassPrior) -> Self {
        p.probs
    }
}

/// Private-data class counts per worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub per_worker_counts: Vec<Vec<u64>>,
}

impl Partition {
    pub fn class_totals(&self) -> Vec<u64> {
        let n_classes = self.per_worker_counts.first().map_or(0, Vec::len);
        (0..n_classes).map(|c| self.per_worker_counts.iter().map(|w| w[c]).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicDataset {
    pub true_classes: Vec<ClassLabel>,
    pub prior: ClassPrior,
}

impl PublicDataset {
    pub fn m(&self) -> usize {
        self.true_classes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Every worker labels every sample.
    Full,
    /// Each sample goes to exactly `k` distinct workers.
    KPeers(usize),
}

/// Worker indices assigned to each public sample, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub per_sample_workers: Vec<Vec<usize>>,
}

impl Assignment {
    /// Sample indices assigned to one worker, ascending.
    pub fn samples_of(&self, worker: usize) -> Vec<usize> {
        self.per_sample_workers
            .iter()
            .enumerate()
            .filter(|(_, ws)| ws.contains(&worker))
            .map(|(j, _)| j)
            .collect()
    }

    /// Number of samples per worker.
    pub fn loads(&self, n_workers: usize) -> Vec<usize> {
        let mut loads = vec![0; n_workers];
        for ws in &self.per_sample_workers {
            for &w in ws {
                loads[w] += 1;
            }
        }
        loads
    }
}

/// Symmetric Dirichlet(alpha) sample of dimension `n`.
pub(crate) fn dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha checked positive");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        // every gamma variate underflowed (tiny alpha): all mass on one coordinate
        let mut out = vec![0.0; n];
        out[rng.random_range(0..n)] = 1.0;
        out
    }
}

/// Integer shares of `total` proportional to `shares`, by largest remainder.
/// Ties in the remainder go to the lower index.
pub fn largest_remainder(total: u64, shares: &[f64]) -> Vec<u64> {
    let raw: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut out: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut rest = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

/// Splits per-class sample counts across workers with Dirichlet(alpha) shares.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    total_counts: &[u64],
    n_workers: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Partition, DataError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(DataError::InvalidAlpha(alpha));
    }
    if n_workers == 0 {
        return Err(DataError::NoWorkers);
    }
    let mut per_worker_counts = vec![vec![0u64; total_counts.len()]; n_workers];
    for (c, &total) in total_counts.iter().enumerate() {
        let shares = dirichlet(alpha, n_workers, rng);
        for (w, count) in largest_remainder(total, &shares).into_iter().enumerate() {
            per_worker_counts[w][c] = count;
        }
    }
    Ok(Partition { per_worker_counts })
}

/// `m` i.i.d. draws from `prior`.
pub fn make_public_dataset<R: Rng + ?Sized>(
    m: usize,
    prior: &ClassPrior,
    rng: &mut R,
) -> Result<PublicDataset, DataError> {
    if m == 0 {
        return Err(DataError::EmptyDataset);
    }
    let true_classes = (0..m).map(|_| prior.sample(rng)).collect();
    Ok(PublicDataset { true_classes, prior: prior.clone() })
}

/// Assigns workers to samples.
///
/// `KPeers(k)` walks a shuffled worker order cyclically, `k` slots per
/// sample, so per-worker loads differ by at most one and the `k` workers of a
/// sample are always distinct.
pub fn assign_samples<R: Rng + ?Sized>(
    m: usize,
    n_workers: usize,
    mode: AssignmentMode,
    rng: &mut R,
) -> Result<Assignment, DataError> {
    if n_workers == 0 {
        return Err(DataError::NoWorkers);
    }
    let per_sample_workers = match mode {
        AssignmentMode::Full => vec![(0..n_workers).collect(); m],
        AssignmentMode::KPeers(k) => {
            if k < 2 || k > n_workers {
                return Err(DataError::InvalidPeerCount { k, n: n_workers });
            }
            let mut order: Vec<usize> = (0..n_workers).collect();
            order.shuffle(rng);
            let mut samples: Vec<usize> = (0..m).collect();
            samples.shuffle(rng);
            let mut out = vec![Vec::new(); m];
            for (slot, &j) in samples.iter().enumerate() {
                let mut ws: Vec<usize> = (0..k).map(|t| order[(slot * k + t) % n_workers]).collect();
                ws.sort_unstable();
                out[j] = ws;
            }
            out
        }
    };
    Ok(Assignment { per_sample_workers })
}

/// Reproducibility record written next to simulation outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_workers: usize,
    pub m_samples: usize,
    pub n_classes: usize,
    pub alpha: f64,
    pub private_prior: Vec<f64>,
    pub public_prior: Vec<f64>,
    pub private_totals: Vec<u64>,
    pub assignment: AssignmentMode,
}

impl DatasetManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn prior_validation() {
        assert!(ClassPrior::new(vec![0.5, 0.5]).is_ok());
        assert!(ClassPrior::new(vec![0.5, 0.6]).is_err());
        assert!(ClassPrior::new(vec![1.2, -0.2]).is_err());
        assert!(ClassPrior::new(vec![]).is_err());
    }

    #[test]
    fn degenerate_prior_yields_constant_dataset() {
        let prior = ClassPrior::new(vec![1.0, 0.0]).unwrap();
        let ds = make_public_dataset(5, &prior, &mut stream(0, "t")).unwrap();
        assert_eq!(ds.true_classes, vec![ClassLabel(0); 5]);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(
            make_public_dataset(0, &ClassPrior::uniform(3), &mut stream(0, "t")),
            Err(DataError::EmptyDataset)
        );
    }

    #[test]
    fn uniform_public_dataset_frequencies() {
        // Binomial sd at m=40000, p=0.1 is 0.0015, so +-0.01 is > 6 sd.
        let ds = make_public_dataset(40_000, &ClassPrior::uniform(10), &mut stream(3, "pub")).unwrap();
        let freq = ClassPrior::empirical(&ds.true_classes, 10).unwrap();
        for f in freq.probs() {
            assert!((f - 0.1).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn prior_fidelity_shrinks_with_m() {
        // Max deviation of the empirical CDF should sit within a DKW band
        // eps = sqrt(ln(2/0.001) / (2m)).
        let prior = ClassPrior::new(vec![0.5, 0.2, 0.2, 0.1]).unwrap();
        for (m, seed) in [(1_000usize, 1u64), (10_000, 2)] {
            let ds = make_public_dataset(m, &prior, &mut stream(seed, "dkw")).unwrap();
            let emp = ClassPrior::empirical(&ds.true_classes, 4).unwrap();
            let (mut ce, mut cp, mut worst) = (0.0, 0.0, 0.0f64);
            for (e, p) in emp.probs().iter().zip(prior.probs()) {
                ce += e;
                cp += p;
                worst = worst.max((ce - cp).abs());
            }
            let eps = ((2.0f64 / 0.001).ln() / (2.0 * m as f64)).sqrt();
            assert!(worst < eps, "m={m}: {worst} >= {eps}");
        }
    }

    #[test]
    fn partition_conserves_class_totals() {
        let totals = [100, 0, 37, 5000, 1];
        for alpha in [0.01, 0.1, 1.0, 100.0] {
            let p = dirichlet_partition(&totals, 7, alpha, &mut stream(9, "part")).unwrap();
            assert_eq!(p.class_totals(), totals);
        }
    }

    #[test]
    fn partition_rejects_bad_alpha() {
        assert_eq!(
            dirichlet_partition(&[10], 2, 0.0, &mut stream(0, "x")),
            Err(DataError::InvalidAlpha(0.0))
        );
        assert!(dirichlet_partition(&[10], 2, -1.0, &mut stream(0, "x")).is_err());
    }

    #[test]
    fn single_worker_holds_everything() {
        let p = dirichlet_partition(&[3, 4, 5], 1, 0.5, &mut stream(0, "x")).unwrap();
        assert_eq!(p.per_worker_counts, vec![vec![3, 4, 5]]);
    }

    #[test]
    fn near_uniform_split_at_large_alpha() {
        // Share ~ Beta(100, 900): sd 0.0095, so +-0.02 is ~2.1 sd (about 96.5%).
        let mut rng = stream(11, "alpha100");
        let (mut inside, mut total) = (0, 0);
        for _ in 0..200 {
            let p = dirichlet_partition(&[100_000; 10], 10, 100.0, &mut rng).unwrap();
            for w in &p.per_worker_counts {
                for &c in w {
                    total += 1;
                    let share = c as f64 / 100_000.0;
                    if (share - 0.1).abs() <= 0.02 {
                        inside += 1;
                    }
                }
            }
        }
        let frac = inside as f64 / total as f64;
        assert!(frac >= 0.95, "only {frac} of shares within 20%");
    }

    #[test]
    fn extreme_skew_at_tiny_alpha() {
        let mut rng = stream(12, "alpha001");
        let mut medians = Vec::new();
        for _ in 0..200 {
            let p = dirichlet_partition(&[1000; 10], 10, 0.01, &mut rng).unwrap();
            let class = rng.random_range(0..10);
            let mut held: Vec<u64> = p.per_worker_counts.iter().map(|w| w[class]).collect();
            held.sort_unstable();
            medians.push(held[4]);
        }
        medians.sort_unstable();
        assert_eq!(medians[medians.len() / 2], 0);
    }

    #[test]
    fn full_assignment_covers_everything() {
        let a = assign_samples(2, 3, AssignmentMode::Full, &mut stream(0, "a")).unwrap();
        assert_eq!(a.per_sample_workers, vec![vec![0, 1, 2], vec![0, 1, 2]]);
    }

    #[test]
    fn two_peer_assignment_is_balanced() {
        let a = assign_samples(100, 10, AssignmentMode::KPeers(2), &mut stream(5, "a")).unwrap();
        for ws in &a.per_sample_workers {
            assert_eq!(ws.len(), 2);
            assert_ne!(ws[0], ws[1]);
        }
        for load in a.loads(10) {
            assert!((19..=21).contains(&load), "load {load}");
        }
    }

    #[test]
    fn k_peer_loads_differ_by_at_most_one() {
        let mut rng = stream(6, "loads");
        for _ in 0..200 {
            let n = rng.random_range(2..15);
            let k = rng.random_range(2..=n);
            let m = rng.random_range(1..200);
            let a = assign_samples(m, n, AssignmentMode::KPeers(k), &mut rng).unwrap();
            let loads = a.loads(n);
            assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
            for ws in &a.per_sample_workers {
                let mut d = ws.clone();
                d.dedup();
                assert_eq!(d.len(), k);
            }
        }
    }

    #[test]
    fn two_peers_of_two_workers_is_full() {
        let full = assign_samples(7, 2, AssignmentMode::Full, &mut stream(0, "a")).unwrap();
        let kp = assign_samples(7, 2, AssignmentMode::KPeers(2), &mut stream(0, "a")).unwrap();
        assert_eq!(full, kp);
    }

    #[test]
    fn lone_peer_is_rejected() {
        assert_eq!(
            assign_samples(5, 4, AssignmentMode::KPeers(1), &mut stream(0, "a")),
            Err(DataError::InvalidPeerCount { k: 1, n: 4 })
        );
        assert!(assign_samples(5, 4, AssignmentMode::KPeers(5), &mut stream(0, "a")).is_err());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = dirichlet_partition(&[50, 60], 4, 0.3, &mut stream(77, "p")).unwrap();
        let b = dirichlet_partition(&[50, 60], 4, 0.3, &mut stream(77, "p")).unwrap();
        assert_eq!(a, b);
        let a = assign_samples(30, 5, AssignmentMode::KPeers(3), &mut stream(77, "s")).unwrap();
        let b = assign_samples(30, 5, AssignmentMode::KPeers(3), &mut stream(77, "s")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn largest_remainder_conserves() {
        assert_eq!(largest_remainder(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(0, &[0.5, 0.5]), vec![0, 0]);
        assert_eq!(largest_remainder(7, &[0.0, 1.0]), vec![0, 7]);
    }
}
