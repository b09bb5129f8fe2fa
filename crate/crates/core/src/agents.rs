//! Simulated workers.
//!
//! A worker's model is abstracted to a confusion matrix: row `y` is the
//! distribution of the predicted class when the truth is `y`. Alongside each
//! prediction the classifier draws a `max_prob` confidence, and the worker's
//! certainty is `overall_accuracy * max_prob`. A strategy then turns the
//! prediction into a report, possibly abstaining.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{dirichlet, ClassPrior};
use crate::error::ErrorCategory;
use crate::ledger::Address;
use crate::mechanism::{label_count, ClassLabel, LabelCount, MechanismParams, PeerDensity, Vote, SIMPLEX_TOLERANCE};
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("local counts must not all be zero")]
    NoLocalData,
    #[error("effort must lie in [0, 1], got {0}")]
    InvalidEffort(f64),
    #[error("invalid report map: {0}")]
    InvalidReportMap(String),
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(f64),
}

impl AgentError {
    pub fn category(&self) -> ErrorCategory {
        ErrorCategory::Validation
    }
}

/// Shape of the classifier built from local data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Local count at which a class reaches half of the effort-weighted skill.
    pub saturation: f64,
    /// Dirichlet concentration of the random part of the error mass.
    pub concentration: f64,
    /// Share of the error mass, at full effort, that is random rather than
    /// proportional to the class prior.
    pub noise_share: f64,
    /// Confidence sharpness at full effort; scales linearly with effort.
    pub sharpness: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams { saturation: 50.0, concentration: 1.0, noise_share: 0.5, sharpness: 8.0 }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |what: &str, v: f64| Err(AgentError::InvalidNoise(format!("{what} = {v}")));
        if !(self.saturation.is_finite() && self.saturation >= 0.0) {
            return bad("saturation", self.saturation);
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return bad("concentration", self.concentration);
        }
        if !(0.0..=1.0).contains(&self.noise_share) {
            return bad("noise_share", self.noise_share);
        }
        if self.sharpness.is_nan() || self.sharpness < 0.0 {
            return bad("sharpness", self.sharpness);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassifier {
    confusion: Vec<Vec<f64>>,
    class_freq: Vec<f64>,
    overall_accuracy: f64,
    /// Extra Gamma shape on the true class when drawing `max_prob`.
    /// Infinite means every correct prediction is fully confident.
    sharpness: f64,
}

impl SyntheticClassifier {
    /// `class_freq` is the evaluation class distribution that weights the
    /// diagonal into `overall_accuracy`.
    pub fn new(confusion: Vec<Vec<f64>>, class_freq: &[f64], sharpness: f64) -> Result<Self, AgentError> {
        let c = confusion.len();
        if c == 0 || class_freq.len() != c {
            return Err(AgentError::InvalidConfusion(format!(
                "{c} rows for {} class frequencies",
                class_freq.len()
            )));
        }
        for (y, row) in confusion.iter().enumerate() {
            if row.len() != c || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(AgentError::InvalidConfusion(format!("row {y} malformed")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(AgentError::InvalidConfusion(format!("row {y} sums to {total}")));
            }
        }
        if sharpness.is_nan() || sharpness < 0.0 {
            return Err(AgentError::InvalidNoise(format!("sharpness = {sharpness}")));
        }
        let overall_accuracy = (0..c).map(|y| class_freq[y] * confusion[y][y]).sum();
        Ok(SyntheticClassifier { confusion, class_freq: class_freq.to_vec(), overall_accuracy, sharpness })
    }

    /// Correct with probability `accuracy` on every class, errors spread
    /// uniformly over the other classes.
    pub fn symmetric(accuracy: f64, n_classes: usize, class_freq: &[f64], sharpness: f64) -> Result<Self, AgentError> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(AgentError::InvalidConfusion(format!("accuracy {accuracy}")));
        }
        let off = if n_classes > 1 { (1.0 - accuracy) / (n_classes - 1) as f64 } else { 0.0 };
        let diag = if n_classes > 1 { accuracy } else { 1.0 };
        let confusion = (0..n_classes)
            .map(|y| (0..n_classes).map(|z| if z == y { diag } else { off }).collect())
            .collect();
        Self::new(confusion, class_freq, sharpness)
    }

    pub fn perfect(n_classes: usize) -> Self {
        Self::symmetric(1.0, n_classes, &vec![1.0 / n_classes as f64; n_classes], f64::INFINITY)
            .expect("identity is valid")
    }

    pub fn confusion(&self) -> &[Vec<f64>] {
        &self.confusion
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.overall_accuracy
    }

    pub fn n_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    pub fn class_freq(&self) -> &[f64] {
        &self.class_freq
    }

    /// Draws a prediction for one sample.
    ///
    /// `max_prob` is the largest coordinate of a normalized vector of Gamma
    /// variates. When the prediction is correct the true class gets shape
    /// `1 + sharpness`; wrong predictions get a flat vector. Confidence is
    /// therefore informative about correctness, as with a trained model.
    pub fn evaluate<R: Rng + ?Sized>(&self, true_class: ClassLabel, rng: &mut R) -> Evaluation {
        let row = &self.confusion[true_class.index()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut eval = row.len() - 1;
        for (z, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                eval = z;
                break;
            }
        }
        // float slack in the cumulative sum must not land on a zero-probability class
        while row[eval] == 0.0 && eval > 0 {
            eval -= 1;
        }
        let correct = eval == true_class.index();
        let max_prob = self.draw_max_prob(correct, rng);
        Evaluation { eval: ClassLabel(eval as u16), max_prob }
    }

    fn draw_max_prob<R: Rng + ?Sized>(&self, correct: bool, rng: &mut R) -> f64 {
        let c = self.n_classes();
        if c == 1 || (correct && self.sharpness.is_infinite()) {
            return 1.0;
        }
        let mut top = if correct && self.sharpness > 0.0 {
            Gamma::new(1.0 + self.sharpness, 1.0).expect("positive shape").sample(rng)
        } else {
            Exp1.sample(rng)
        };
        let mut total = top;
        for _ in 1..c {
            let g: f64 = Exp1.sample(rng);
            total += g;
            top = top.max(g);
        }
        if total > 0.0 {
            top / total
        } else {
            1.0 / c as f64
        }
    }
}

/// Builds a classifier from a worker's private class counts.
///
/// Per class `y` the skill weight is `w = effort * n_y / (n_y + saturation)`.
/// The diagonal is `w + (1 - w) * prior[y]`; the remaining mass is spread over
/// the other classes, partly in proportion to the prior and partly by a
/// Dirichlet draw. The random share grows with effort times `noise_share`,
/// so zero effort reproduces the prior in every row. The diagonal does not
/// depend on the random draw, which keeps it monotone in effort and counts.
pub fn build_classifier<R: Rng + ?Sized>(
    local_counts: &[u64],
    effort: f64,
    noise: &NoiseParams,
    eval_prior: &ClassPrior,
    rng: &mut R,
) -> Result<SyntheticClassifier, AgentError> {
    noise.validate()?;
    if !(0.0..=1.0).contains(&effort) {
        return Err(AgentError::InvalidEffort(effort));
    }
    if local_counts.iter().all(|&n| n == 0) {
        return Err(AgentError::NoLocalData);
    }
    let c = local_counts.len();
    let prior = eval_prior.probs();
    if prior.len() != c {
        return Err(AgentError::InvalidConfusion(format!("{c} local classes, prior over {}", prior.len())));
    }
    let random_share = effort * noise.noise_share;
    let mut confusion = Vec::with_capacity(c);
    for y in 0..c {
        let n_y = local_counts[y] as f64;
        let skill = if n_y + noise.saturation > 0.0 { n_y / (n_y + noise.saturation) } else { 0.0 };
        let w = effort * skill;
        let mut row = vec![0.0; c];
        row[y] = w + (1.0 - w) * prior[y];
        let err_mass = 1.0 - row[y];
        if c > 1 {
            let rest = 1.0 - prior[y];
            let noise_draw = dirichlet(noise.concentration, c - 1, rng);
            for (k, z) in (0..c).filter(|&z| z != y).enumerate() {
                let by_prior = if rest > 0.0 { prior[z] / rest } else { 1.0 / (c - 1) as f64 };
                row[z] = err_mass * ((1.0 - random_share) * by_prior + random_share * noise_draw[k]);
            }
        }
        confusion.push(row);
    }
    SyntheticClassifier::new(confusion, prior, noise.sharpness * effort)
}

/// Cost of producing predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortCostModel {
    pub effort: f64,
    /// Per-sample cost at zero effort.
    pub cost_low: f64,
    /// Per-sample cost at full effort.
    pub cost_high: f64,
    pub fixed_cost: f64,
}

impl Default for EffortCostModel {
    fn default() -> Self {
        EffortCostModel { effort: 1.0, cost_low: 0.0, cost_high: 0.0, fixed_cost: 0.0 }
    }
}

impl EffortCostModel {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.effort) {
            return Err(AgentError::InvalidEffort(self.effort));
        }
        let finite = [self.cost_low, self.cost_high, self.fixed_cost].iter().all(|c| c.is_finite() && *c >= 0.0);
        if !finite {
            return Err(AgentError::InvalidCost("costs must be finite and non-negative".into()));
        }
        // equal costs are allowed so that cost-free simulations stay expressible
        if self.cost_high < self.cost_low {
            return Err(AgentError::InvalidCost(format!(
                "cost at full effort {} below cost at zero effort {}",
                self.cost_high, self.cost_low
            )));
        }
        Ok(())
    }

    /// Per-sample cost at effort `e`, linear between the two endpoints.
    pub fn variable_cost(&self, e: f64) -> f64 {
        self.cost_low + e * (self.cost_high - self.cost_low)
    }
}

/// How a worker maps its evaluation to a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    Honest,
    /// Samples reports from a prior, ignoring the classifier.
    Heuristic,
    /// Reports `report_map[eval]`.
    Strategic { report_map: Vec<u16> },
}

impl StrategyKind {
    /// `{0..C/2} -> 0`, the rest `-> C-1`.
    pub fn collude_halves(n_classes: usize) -> Self {
        let last = (n_classes - 1) as u16;
        let report_map = (0..n_classes).map(|c| if c < n_classes / 2 { 0 } else { last }).collect();
        StrategyKind::Strategic { report_map }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Honest => "honest",
            StrategyKind::Heuristic => "heuristic",
            StrategyKind::Strategic { .. } => "strategic",
        }
    }
}

/// When an honest worker abstains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// Always report.
    None,
    /// Abstain when `max_prob` is below the given confidence.
    Fixed(f64),
    /// Abstain when `certainty < R(eval) * (cost / lambda + beta)`, the point
    /// at which the expected reward stops covering cost and penalty.
    Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub threshold: Threshold,
}

impl Strategy {
    pub fn honest() -> Self {
        Strategy { kind: StrategyKind::Honest, threshold: Threshold::None }
    }

    pub fn validate(&self, n_classes: usize) -> Result<(), AgentError> {
        if let StrategyKind::Strategic { report_map } = &self.kind {
            if report_map.len() != n_classes {
                return Err(AgentError::InvalidReportMap(format!(
                    "{} entries for {n_classes} classes",
                    report_map.len()
                )));
            }
            if let Some(&bad) = report_map.iter().find(|&&c| c as usize >= n_classes) {
                return Err(AgentError::InvalidReportMap(format!("target class {bad} out of range")));
            }
        }
        if let Threshold::Fixed(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(AgentError::InvalidThreshold(t));
            }
        }
        Ok(())
    }
}

/// Classifier output for one sample, before a strategy is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub eval: ClassLabel,
    pub max_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: usize,
    pub eval: ClassLabel,
    pub report: Vote,
    pub max_prob: f64,
    pub certainty: f64,
}

impl PredictionRecord {
    pub fn new(sample_id: usize, evaluation: Evaluation, overall_accuracy: f64) -> Self {
        PredictionRecord {
            sample_id,
            eval: evaluation.eval,
            report: Vote::Label(evaluation.eval),
            max_prob: evaluation.max_prob,
            certainty: overall_accuracy * evaluation.max_prob,
        }
    }
}

/// Applies a strategy to one prediction. `prior` is both the density used by
/// the rational threshold and the distribution heuristic workers draw from.
pub fn decide_report<R: Rng + ?Sized>(
    record: &PredictionRecord,
    strategy: &Strategy,
    params: &MechanismParams,
    prior: &PeerDensity,
    cost: f64,
    rng: &mut R,
) -> Vote {
    match &strategy.kind {
        StrategyKind::Honest => {
            let abstain = match strategy.threshold {
                Threshold::None => false,
                Threshold::Fixed(t) => record.max_prob < t,
                Threshold::Rational => record.certainty < prior.get(record.eval) * (cost / params.lambda + params.beta),
            };
            if abstain {
                Vote::Abstain
            } else {
                Vote::Label(record.eval)
            }
        }
        StrategyKind::Heuristic => Vote::Label(sample_density(prior, rng)),
        StrategyKind::Strategic { report_map } => Vote::of(report_map[record.eval.index()]),
    }
}

fn sample_density<R: Rng + ?Sized>(density: &PeerDensity, rng: &mut R) -> ClassLabel {
    let probs = density.as_slice();
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return ClassLabel(c as u16);
        }
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    ClassLabel(last as u16)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub address: Address,
    pub classifier: SyntheticClassifier,
    pub strategy: Strategy,
    pub cost: EffortCostModel,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOutput {
    /// One vote per public sample; unassigned samples are `Abstain`.
    pub votes: Vec<Vote>,
    pub label_count: LabelCount,
    pub incurred_cost: f64,
    pub records: Vec<PredictionRecord>,
}

/// Labels the assigned samples and tallies the result.
///
/// Cost is the per-sample variable cost for every submitted label plus the
/// fixed cost. Heuristic workers pay the zero-effort rate.
pub fn run_worker(
    profile: &WorkerProfile,
    assigned_samples: &[usize],
    true_classes: &[ClassLabel],
    params: &MechanismParams,
    prior: &PeerDensity,
) -> WorkerOutput {
    let mut rng = SimRng::seed_from_u64(profile.rng_seed);
    let classifier = &profile.classifier;
    let heuristic = profile.strategy.kind == StrategyKind::Heuristic;
    let per_sample_cost =
        profile.cost.variable_cost(if heuristic { 0.0 } else { profile.cost.effort });

    let mut votes = vec![Vote::Abstain; true_classes.len()];
    let mut records = Vec::with_capacity(assigned_samples.len());
    for &j in assigned_samples {
        let evaluation = if heuristic {
            // the classifier is never consulted
            Evaluation { eval: ClassLabel(0), max_prob: 0.0 }
        } else {
            classifier.evaluate(true_classes[j], &mut rng)
        };
        let mut record = PredictionRecord::new(j, evaluation, classifier.overall_accuracy());
        record.report = decide_report(&record, &profile.strategy, params, prior, per_sample_cost, &mut rng);
        votes[j] = record.report;
        records.push(record);
    }
    let label_count = label_count(&votes, params.n_classes).expect("reports stay within the class range");
    let submitted = label_count.total() as f64;
    WorkerOutput {
        votes,
        label_count,
        incurred_cost: per_sample_cost * submitted + profile.cost.fixed_cost,
        records,
    }
}
