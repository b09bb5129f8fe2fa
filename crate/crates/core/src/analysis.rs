//! Closed-form checks on the reward mechanism: expected profits per
//! strategy, the self-predicting condition on beliefs, the honesty-optimality
//! comparison against arbitrary peer strategies, and cost accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorCategory;
use crate::mechanism::{MechanismParams, SIMPLEX_TOLERANCE};

/// Margin below which the strict self-predicting inequality counts as a tie.
pub const CONDITION_TOLERANCE: f64 = 1e-12;

/// Encoding overhead, in bits, of the stored aggregate: a 32-bit length
/// prefix plus the one-byte format version.
pub const ETA_BITS: u64 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("density of class {class} is zero")]
    UndefinedDensity { class: usize },
    #[error("invalid belief model: {0}")]
    InvalidBelief(String),
    #[error("invalid peer strategy: {0}")]
    InvalidStrategy(String),
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("m and n must be at least 1")]
    EmptyDimensions,
}

impl AnalysisError {
    pub fn category(&self) -> ErrorCategory {
        ErrorCategory::Validation
    }
}

/// Expected per-sample profit of an honest report with certainty `A` on a
/// class of density `R`, against honest peers:
/// `A * lambda * (1/R - beta) + (1 - A) * lambda * (-beta) - c`.
pub fn expected_profit_honest(
    certainty: f64,
    r_of_report: f64,
    params: &MechanismParams,
    cost: f64,
) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&certainty) {
        return Err(AnalysisError::OutOfRange { name: "certainty", value: certainty });
    }
    if r_of_report <= 0.0 {
        return Err(AnalysisError::UndefinedDensity { class: 0 });
    }
    if r_of_report > 1.0 {
        return Err(AnalysisError::OutOfRange { name: "density", value: r_of_report });
    }
    let (l, b) = (params.lambda, params.beta);
    Ok(certainty * l * (1.0 / r_of_report - b) + (1.0 - certainty) * l * (-b) - cost)
}

/// Certainty at which [`expected_profit_honest`] is zero: `R * (c/lambda + beta)`.
pub fn min_certainty(r_of_report: f64, params: &MechanismParams, cost: f64) -> f64 {
    r_of_report * (cost / params.lambda + params.beta)
}

/// A report drawn from the prior matches an honest peer on class `x` with
/// probability `R(x)`, which cancels the `1/R(x)` scaling: `lambda * (1 - beta)`.
pub fn expected_profit_heuristic(params: &MechanismParams) -> f64 {
    params.lambda * (1.0 - params.beta)
}

/// A report that never matches an honest peer: `-lambda * beta - c`.
pub fn expected_profit_strategic(params: &MechanismParams, cost: f64) -> f64 {
    -params.lambda * params.beta - cost
}

/// Colluders merging classes `x` and `y` into one report are matched with
/// the merged density `R(x) + R(y)`.
pub fn expected_profit_collusion(
    certainty: f64,
    r_x: f64,
    r_y: f64,
    params: &MechanismParams,
    cost: f64,
) -> Result<f64, AnalysisError> {
    expected_profit_honest(certainty, r_x + r_y, params, cost)
}

fn check_stochastic(rows: &[Vec<f64>], c: usize, what: &str) -> Result<(), String> {
    if rows.len() != c {
        return Err(format!("{what} has {} rows, expected {c}", rows.len()));
    }
    for (x, row) in rows.iter().enumerate() {
        if row.len() != c || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(format!("{what} row {x} malformed"));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(format!("{what} row {x} sums to {total}"));
        }
    }
    Ok(())
}

/// A worker's belief about its peers: `joint[x][y]` is the probability that a
/// peer reports `y` given the worker evaluated `x`; `marginal[y]` is the
/// unconditional probability of a peer reporting `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefModel {
    pub joint: Vec<Vec<f64>>,
    pub marginal: Vec<f64>,
}

impl BeliefModel {
    pub fn new(joint: Vec<Vec<f64>>, marginal: Vec<f64>) -> Result<Self, AnalysisError> {
        let b = BeliefModel { joint, marginal };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let c = self.marginal.len();
        if c == 0 {
            return Err(AnalysisError::InvalidBelief("no classes".into()));
        }
        check_stochastic(&self.joint, c, "joint").map_err(AnalysisError::InvalidBelief)?;
        if self.marginal.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (self.marginal.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOLERANCE
        {
            return Err(AnalysisError::InvalidBelief("marginal is not a distribution".into()));
        }
        Ok(())
    }

    /// Belief of a worker whose peers share its confusion matrix, with true
    /// classes drawn from `prior`. `confusion[t][y]` is `P(report y | truth t)`.
    pub fn from_confusion(confusion: &[Vec<f64>], prior: &[f64]) -> Result<Self, AnalysisError> {
        let c = prior.len();
        check_stochastic(confusion, c, "confusion").map_err(AnalysisError::InvalidBelief)?;
        let marginal: Vec<f64> = (0..c).map(|y| (0..c).map(|t| prior[t] * confusion[t][y]).sum()).collect();
        let mut joint = vec![vec![0.0; c]; c];
        for x in 0..c {
            if marginal[x] <= 0.0 {
                // never evaluated; any row will do
                joint[x] = marginal.clone();
                continue;
            }
            for (y, cell) in joint[x].iter_mut().enumerate() {
                *cell = (0..c).map(|t| prior[t] * confusion[t][x] * confusion[t][y]).sum::<f64>() / marginal[x];
            }
        }
        Self::new(joint, marginal)
    }

    pub fn n_classes(&self) -> usize {
        self.marginal.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum SelfPredicting {
    Holds,
    /// `joint[x][x]/marginal[x] <= joint[x][y]/marginal[y]`; `tie` when the
    /// two sides agree within [`CONDITION_TOLERANCE`].
    Violated { x: usize, y: usize, tie: bool },
}

impl SelfPredicting {
    pub fn holds(self) -> bool {
        self == SelfPredicting::Holds
    }
}

/// Checks that every evaluation is relatively more likely among peers than
/// any other answer. Returns the first violating pair in row-major order.
pub fn check_self_predicting(belief: &BeliefModel) -> Result<SelfPredicting, AnalysisError> {
    belief.validate()?;
    if let Some(class) = belief.marginal.iter().position(|&p| p <= 0.0) {
        return Err(AnalysisError::UndefinedDensity { class });
    }
    let c = belief.n_classes();
    for x in 0..c {
        let own = belief.joint[x][x] / belief.marginal[x];
        for y in (0..c).filter(|&y| y != x) {
            let other = belief.joint[x][y] / belief.marginal[y];
            if own - other <= CONDITION_TOLERANCE {
                return Ok(SelfPredicting::Violated { x, y, tie: (own - other).abs() <= CONDITION_TOLERANCE });
            }
        }
    }
    Ok(SelfPredicting::Holds)
}

/// `q[z][y]`: probability that a peer who evaluated `z` reports `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerStrategyModel {
    pub q: Vec<Vec<f64>>,
}

impl PeerStrategyModel {
    pub fn new(q: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let c = q.len();
        check_stochastic(&q, c, "peer strategy").map_err(AnalysisError::InvalidStrategy)?;
        Ok(PeerStrategyModel { q })
    }

    pub fn honest(n_classes: usize) -> Self {
        let q = (0..n_classes).map(|z| (0..n_classes).map(|y| f64::from(u8::from(z == y))).collect()).collect();
        PeerStrategyModel { q }
    }
}

/// Expected rewards of every report against a given peer strategy, compared
/// with the honest benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestyGap {
    /// `rewards[x][y] = lambda * (Qw(y|x) / Qp(y) - beta)`: expected reward
    /// for reporting `y` after evaluating `x` when peers follow the strategy.
    pub rewards: Vec<Vec<f64>>,
    /// `lambda * (P(x|x) / P(x) - beta)`: expected reward when the worker and
    /// its peers all report honestly.
    pub honest_reward: Vec<f64>,
    /// `honest_reward[x] - rewards[x][y]`.
    pub gap: Vec<Vec<f64>>,
    pub condition: SelfPredicting,
}

impl HonestyGap {
    /// Whether no deviation by the worker, against any report of the
    /// modelled peers, beats the all-honest reward for its evaluation.
    pub fn honest_dominates(&self, tolerance: f64) -> bool {
        self.gap.iter().flatten().all(|&g| g >= -tolerance)
    }

    /// Index of the largest reward in row `x`; ties go to `x`, then to the
    /// lowest index.
    pub fn row_argmax(&self, x: usize) -> usize {
        let row = &self.rewards[x];
        let mut best = x;
        for (y, &r) in row.iter().enumerate() {
            if r > row[best] {
                best = y;
            }
        }
        best
    }

    /// Whether every row of `rewards` peaks on the diagonal.
    pub fn diagonal_row_max(&self) -> bool {
        (0..self.rewards.len()).all(|x| self.row_argmax(x) == x)
    }
}

/// Expected reward for every (evaluation, report) pair when peers report
/// through `peer_strategy`. Computed regardless of whether the belief is
/// self-predicting; the verdict is recorded alongside.
pub fn honesty_optimality_gap(
    belief: &BeliefModel,
    peer_strategy: &PeerStrategyModel,
    params: &MechanismParams,
) -> Result<HonestyGap, AnalysisError> {
    let condition = check_self_predicting(belief)?;
    let c = belief.n_classes();
    if peer_strategy.q.len() != c {
        return Err(AnalysisError::InvalidStrategy(format!("{} rows for {c} classes", peer_strategy.q.len())));
    }
    let q = &peer_strategy.q;
    let qp: Vec<f64> = (0..c).map(|y| (0..c).map(|z| q[z][y] * belief.marginal[z]).sum()).collect();
    let mut rewards = vec![vec![0.0; c]; c];
    for x in 0..c {
        for y in 0..c {
            let qw: f64 = (0..c).map(|z| q[z][y] * belief.joint[x][z]).sum();
            let ratio = if qp[y] > 0.0 {
                qw / qp[y]
            } else if qw == 0.0 {
                // no peer ever reports y: the report can only be penalized
                0.0
            } else {
                return Err(AnalysisError::UndefinedDensity { class: y });
            };
            rewards[x][y] = params.lambda * (ratio - params.beta);
        }
    }
    let honest_reward: Vec<f64> =
        (0..c).map(|x| params.lambda * (belief.joint[x][x] / belief.marginal[x] - params.beta)).collect();
    let gap = (0..c).map(|x| (0..c).map(|y| honest_reward[x] - rewards[x][y]).collect()).collect();
    Ok(HonestyGap { rewards, honest_reward, gap, condition })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Full,
    KPeers2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub compute_ops: u64,
    pub memory_cells: u64,
    /// `m * ceil(log2 C) + eta`: one class label per public sample.
    pub permanent_bits: u64,
    /// `n * C + eta`, the per-worker one-bit-per-class reading, for comparison.
    pub permanent_bits_per_worker_reading: u64,
    pub eta: u64,
}

pub fn estimate_costs(m: u64, n: u64, n_classes: u64, mode: CostMode) -> Result<CostEstimate, AnalysisError> {
    if m == 0 || n == 0 {
        return Err(AnalysisError::EmptyDimensions);
    }
    let compute_ops = match mode {
        CostMode::Full => m * (n * n + n_classes),
        CostMode::KPeers2 => m * (2 * n + n_classes),
    };
    let label_bits = if n_classes <= 1 { 0 } else { u64::from(64 - (n_classes - 1).leading_zeros()) };
    Ok(CostEstimate {
        compute_ops,
        memory_cells: n_classes * (m + 2) + n,
        permanent_bits: m * label_bits + ETA_BITS,
        permanent_bits_per_worker_reading: n * n_classes + ETA_BITS,
        eta: ETA_BITS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lambda: f64, beta: f64) -> MechanismParams {
        MechanismParams::new(lambda, beta, 2).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn honest_profit_examples() {
        assert!(close(expected_profit_honest(1.0, 1.0, &p(1.0, 1.0), 0.0).unwrap(), 0.0));
        assert!(close(expected_profit_honest(0.72, 0.1, &p(1.0, 1.0), 0.0).unwrap(), 6.2));
        let r = 0.2;
        let a = min_certainty(r, &p(2.0, 1.5), 0.4);
        assert!(close(expected_profit_honest(a, r, &p(2.0, 1.5), 0.4).unwrap(), 0.0));
        assert_eq!(
            expected_profit_honest(0.5, 0.0, &p(1.0, 1.0), 0.0),
            Err(AnalysisError::UndefinedDensity { class: 0 })
        );
    }

    #[test]
    fn min_certainty_examples() {
        assert!(close(min_certainty(0.1, &p(1.0, 1.0), 0.0), 0.1));
        assert_eq!(min_certainty(0.3, &p(1.0, 0.0), 0.0), 0.0);
        assert!(close(min_certainty(0.5, &p(1.0, 1.0), 0.5), 0.75));
    }

    #[test]
    fn heuristic_and_strategic_examples() {
        assert_eq!(expected_profit_heuristic(&p(1.0, 1.0)), 0.0);
        assert_eq!(expected_profit_heuristic(&p(1.0, 2.0)), -1.0);
        assert_eq!(expected_profit_heuristic(&p(3.0, 0.0)), 3.0);
        assert_eq!(expected_profit_strategic(&p(1.0, 1.0), 0.0), -1.0);
        assert_eq!(expected_profit_strategic(&p(1.0, 0.0), 0.0), 0.0);
        assert!(close(expected_profit_collusion(1.0, 0.5, 0.5, &p(1.0, 1.0), 0.0).unwrap(), 0.0));
    }

    #[test]
    fn identity_belief_holds() {
        let b = BeliefModel::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], vec![1.0 / 3.0; 3])
            .unwrap();
        assert_eq!(check_self_predicting(&b).unwrap(), SelfPredicting::Holds);
    }

    #[test]
    fn skewed_prior_counterexample() {
        let b = BeliefModel::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.9, 0.1]).unwrap();
        assert_eq!(check_self_predicting(&b).unwrap(), SelfPredicting::Violated { x: 0, y: 1, tie: false });
    }

    #[test]
    fn uniform_rows_violate() {
        let b = BeliefModel::new(vec![vec![0.3, 0.7]; 2], vec![0.3, 0.7]).unwrap();
        assert!(matches!(check_self_predicting(&b).unwrap(), SelfPredicting::Violated { tie: true, .. }));
        let b = BeliefModel::new(vec![vec![0.5, 0.5]; 2], vec![0.4, 0.6]).unwrap();
        assert!(!check_self_predicting(&b).unwrap().holds());
    }

    #[test]
    fn zero_marginal_is_undefined() {
        let b = BeliefModel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(check_self_predicting(&b), Err(AnalysisError::UndefinedDensity { class: 1 }));
    }

    #[test]
    fn honest_peers_reduce_to_the_match_term() {
        let b = BeliefModel::from_confusion(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0.6, 0.4]).unwrap();
        let gap = honesty_optimality_gap(&b, &PeerStrategyModel::honest(2), &p(1.0, 1.0)).unwrap();
        assert!(gap.condition.holds());
        for x in 0..2 {
            assert!(close(gap.rewards[x][x], gap.honest_reward[x]));
            assert_eq!(gap.row_argmax(x), x);
        }
        assert!(gap.diagonal_row_max());
        assert!(gap.honest_dominates(1e-12));
    }

    #[test]
    fn violated_belief_still_computes() {
        let b = BeliefModel::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.9, 0.1]).unwrap();
        let gap = honesty_optimality_gap(&b, &PeerStrategyModel::honest(2), &p(1.0, 1.0)).unwrap();
        assert!(!gap.condition.holds());
        // reporting the rare class pays more than the honest report
        assert_eq!(gap.row_argmax(0), 1);
    }

    #[test]
    fn unreachable_reports_are_penalized_not_errors() {
        let b = BeliefModel::from_confusion(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0.5, 0.5]).unwrap();
        let everyone_says_zero = PeerStrategyModel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let gap = honesty_optimality_gap(&b, &everyone_says_zero, &p(1.0, 1.0)).unwrap();
        assert_eq!(gap.rewards[0][1], -1.0);
        assert!(close(gap.rewards[0][0], 0.0));
    }

    #[test]
    fn cost_examples() {
        let full = estimate_costs(40_000, 10, 10, CostMode::Full).unwrap();
        assert_eq!(full.compute_ops, 4_400_000);
        assert_eq!(estimate_costs(40_000, 10, 10, CostMode::KPeers2).unwrap().compute_ops, 1_200_000);
        assert_eq!(estimate_costs(1, 1, 1, CostMode::Full).unwrap().compute_ops, 2);
        assert_eq!(full.memory_cells, 10 * 40_002 + 10);
        assert_eq!(full.permanent_bits, 40_000 * 4 + ETA_BITS);
        assert_eq!(full.permanent_bits_per_worker_reading, 100 + ETA_BITS);
        assert_eq!(estimate_costs(8, 3, 2, CostMode::Full).unwrap().permanent_bits, 8 + ETA_BITS);
        assert!(estimate_costs(0, 3, 2, CostMode::Full).is_err());
    }

    fn stochastic(c: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, c).prop_map(|v| {
            let t: f64 = v.iter().sum();
            v.into_iter().map(|x| x / t).collect()
        })
    }

    proptest! {
        #[test]
        fn verdict_survives_row_rescaling(
            rows in proptest::collection::vec(stochastic(3), 3),
            marginal in stochastic(3),
            k in 0.1f64..10.0,
        ) {
            let b = BeliefModel::new(rows.clone(), marginal.clone()).unwrap();
            let scaled: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let s: Vec<f64> = r.iter().map(|x| x * k).collect();
                    let t: f64 = s.iter().sum();
                    s.into_iter().map(|x| x / t).collect()
                })
                .collect();
            let b2 = BeliefModel::new(scaled, marginal).unwrap();
            prop_assert_eq!(
                check_self_predicting(&b).unwrap().holds(),
                check_self_predicting(&b2).unwrap().holds()
            );
        }

        #[test]
        fn compute_ops_match_formula(m in 1u64..10_000, n in 1u64..100, c in 1u64..100) {
            prop_assert_eq!(estimate_costs(m, n, c, CostMode::Full).unwrap().compute_ops, m * (n * n + c));
            prop_assert_eq!(estimate_costs(m, n, c, CostMode::KPeers2).unwrap().compute_ops, m * (2 * n + c));
        }
    }
}
