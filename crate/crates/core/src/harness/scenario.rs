//! Scenario files.
//!
//! A scenario is a TOML document with top-level settings and one
//! `[[workers]]` table per group of identical workers:
//!
//! ```toml
//! seed = 7
//! n_classes = 10
//! m_samples = 2000
//! beta = 1.0
//!
//! [[workers]]
//! count = 9
//! accuracy = 0.9
//!
//! [[workers]]
//! count = 1
//! strategy = "heuristic"
//! ```
//!
//! Every field except `n_classes`, `m_samples` and `workers` has a default.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::HarnessError;
use crate::agents::{EffortCostModel, NoiseParams, Strategy, StrategyKind, Threshold};
use crate::datagen::{AssignmentMode, ClassPrior};
use crate::ledger::{sha3_256, MAX_CLASSES};
use crate::mechanism::MechanismParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentKind {
    #[default]
    Full,
    KPeers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StrategySpec {
    #[default]
    Honest,
    Heuristic,
    /// Reports through `report_map`.
    Strategic,
    /// Strategic with the map `{0..C/2} -> 0`, rest `-> C-1`.
    Collude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSpec {
    #[default]
    None,
    Rational,
    /// Abstain below `confidence`.
    Fixed,
}

/// Protocol behaviour layered on top of the reporting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    #[default]
    Normal,
    /// Registers but never commits.
    Absent,
    /// Commits but never reveals.
    Withhold,
    /// Reveals a payload with one vote changed after committing.
    Tamper,
    /// Commits and reveals a label count that disagrees with its votes.
    Miscount,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerGroup {
    #[serde(default = "one_usize")]
    pub count: usize,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_map: Option<Vec<u16>>,
    #[serde(default = "one")]
    pub effort: f64,
    /// Replaces the data-driven classifier with a symmetric one of this accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub confidence: f64,
    #[serde(default)]
    pub behavior: Behavior,
    #[serde(default)]
    pub cost_low: f64,
    #[serde(default)]
    pub cost_high: f64,
    #[serde(default)]
    pub fixed_cost: f64,
    /// Deposit this group offers at registration; defaults to the required one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deposit: Option<u64>,
}

impl Default for WorkerGroup {
    fn default() -> Self {
        WorkerGroup {
            count: 1,
            strategy: StrategySpec::Honest,
            report_map: None,
            effort: 1.0,
            accuracy: None,
            threshold: ThresholdSpec::None,
            confidence: 0.0,
            behavior: Behavior::Normal,
            cost_low: 0.0,
            cost_high: 0.0,
            fixed_cost: 0.0,
            deposit: None,
        }
    }
}

impl WorkerGroup {
    pub fn strategy(&self, n_classes: usize) -> Strategy {
        let kind = match self.strategy {
            StrategySpec::Honest => StrategyKind::Honest,
            StrategySpec::Heuristic => StrategyKind::Heuristic,
            StrategySpec::Strategic => {
                StrategyKind::Strategic { report_map: self.report_map.clone().unwrap_or_default() }
            }
            StrategySpec::Collude => StrategyKind::collude_halves(n_classes),
        };
        let threshold = match self.threshold {
            ThresholdSpec::None => Threshold::None,
            ThresholdSpec::Rational => Threshold::Rational,
            ThresholdSpec::Fixed => Threshold::Fixed(self.confidence),
        };
        Strategy { kind, threshold }
    }

    pub fn cost(&self) -> EffortCostModel {
        EffortCostModel {
            effort: self.effort,
            cost_low: self.cost_low,
            cost_high: self.cost_high,
            fixed_cost: self.fixed_cost,
        }
    }
}

fn default_alpha() -> f64 {
    100.0
}

fn default_deposit() -> u64 {
    100
}

fn default_scale() -> f64 {
    10.0
}

fn default_ticks() -> u64 {
    8
}

fn default_k() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub n_classes: usize,
    pub m_samples: usize,
    /// Dirichlet concentration of the private-data split.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Size of the private dataset split across workers; defaults to
    /// 600 samples per worker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_samples: Option<u64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub beta: f64,
    /// Number of rounds when `lambdas` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Per-round lambda; overrides `lambda` and fixes the number of rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub assignment: AssignmentKind,
    #[serde(default = "default_k")]
    pub peers_per_sample: usize,
    #[serde(default = "default_deposit")]
    pub deposit: u64,
    #[serde(default = "default_scale")]
    pub payout_scale: f64,
    #[serde(default = "default_ticks")]
    pub t_max_commit: u64,
    #[serde(default = "default_ticks")]
    pub t_max_reveal: u64,
    /// Class distribution of the public dataset; uniform by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_prior: Option<Vec<f64>>,
    /// Class distribution of the private data; the public prior by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_prior: Option<Vec<f64>>,
    /// Distribution heuristic workers draw from; the empirical public
    /// class frequencies by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic_prior: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseParams,
    pub workers: Vec<WorkerGroup>,
}

impl Scenario {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self, HarnessError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() as u64 + 1);
            HarnessError::parse(source_name, line, e.message())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn n_workers(&self) -> usize {
        self.workers.iter().map(|g| g.count).sum()
    }

    /// Group index of each worker, in worker order.
    pub fn group_of_worker(&self) -> Vec<usize> {
        self.workers.iter().enumerate().flat_map(|(g, grp)| std::iter::repeat_n(g, grp.count)).collect()
    }

    pub fn lambda_schedule(&self) -> Vec<f64> {
        match &self.lambdas {
            Some(ls) => ls.clone(),
            None => vec![self.lambda; self.rounds.unwrap_or(1)],
        }
    }

    pub fn params(&self, lambda: f64) -> Result<MechanismParams, HarnessError> {
        Ok(MechanismParams::new(lambda, self.beta, self.n_classes)?)
    }

    pub fn assignment_mode(&self) -> AssignmentMode {
        match self.assignment {
            AssignmentKind::Full => AssignmentMode::Full,
            AssignmentKind::KPeers => AssignmentMode::KPeers(self.peers_per_sample),
        }
    }

    pub fn public_prior(&self) -> Result<ClassPrior, HarnessError> {
        match &self.public_prior {
            Some(p) => Ok(ClassPrior::new(p.clone())?),
            None => Ok(ClassPrior::uniform(self.n_classes)),
        }
    }

    pub fn private_prior(&self) -> Result<ClassPrior, HarnessError> {
        match &self.private_prior {
            Some(p) => Ok(ClassPrior::new(p.clone())?),
            None => self.public_prior(),
        }
    }

    pub fn private_samples(&self) -> u64 {
        self.private_samples.unwrap_or(600 * self.n_workers() as u64)
    }

    /// Hex SHA3-256 of the scenario's canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(sha3_256(&serde_json::to_vec(self).expect("scenario serializes")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: String| Err(HarnessError::Invalid(msg));
        let n = self.n_workers();
        if n < 2 {
            return invalid(format!("need at least 2 workers, got {n}"));
        }
        if self.m_samples == 0 {
            return invalid("m_samples must be at least 1".into());
        }
        if self.n_classes == 0 || self.n_classes > MAX_CLASSES {
            return invalid(format!("n_classes must lie in 1..={MAX_CLASSES}"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        let schedule = self.lambda_schedule();
        if schedule.is_empty() {
            return invalid("at least one round is required".into());
        }
        if let (Some(r), Some(ls)) = (self.rounds, &self.lambdas) {
            if r != ls.len() {
                return invalid(format!("rounds = {r} but {} lambdas given", ls.len()));
            }
        }
        for &l in &schedule {
            self.params(l)?;
        }
        if !(self.payout_scale.is_finite() && self.payout_scale >= 0.0) {
            return invalid(format!("payout_scale must be non-negative, got {}", self.payout_scale));
        }
        if self.assignment == AssignmentKind::KPeers && !(2..=n).contains(&self.peers_per_sample) {
            return invalid(format!("peers_per_sample must lie in 2..={n}"));
        }
        for (name, prior) in
            [("public_prior", &self.public_prior), ("private_prior", &self.private_prior), ("heuristic_prior", &self.heuristic_prior)]
        {
            if let Some(p) = prior {
                if p.len() != self.n_classes {
                    return invalid(format!("{name} has {} entries for {} classes", p.len(), self.n_classes));
                }
                ClassPrior::new(p.clone())?;
            }
        }
        self.noise.validate()?;
        for (g, group) in self.workers.iter().enumerate() {
            if group.strategy == StrategySpec::Strategic && group.report_map.is_none() {
                return invalid(format!("worker group {g}: strategic workers need a report_map"));
            }
            if let Some(a) = group.accuracy {
                if !(0.0..=1.0).contains(&a) {
                    return invalid(format!("worker group {g}: accuracy {a} outside [0, 1]"));
                }
            }
            group.strategy(self.n_classes).validate(self.n_classes)?;
            group.cost().validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n_classes = 3
m_samples = 10

[[workers]]
count = 2
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_toml_str(MINIMAL, "t").unwrap();
        assert_eq!(s.n_workers(), 2);
        assert_eq!(s.lambda_schedule(), vec![1.0]);
        assert_eq!(s.deposit, 100);
        assert_eq!(s.assignment_mode(), AssignmentMode::Full);
        assert_eq!(s.private_samples(), 1200);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::from_toml_str(MINIMAL, "t").unwrap();
        let again = Scenario::from_toml_str(&s.to_toml(), "t").unwrap();
        assert_eq!(s, again);
        assert_eq!(s.digest(), again.digest());
    }

    #[test]
    fn digest_tracks_content() {
        let a = Scenario::from_toml_str(MINIMAL, "t").unwrap();
        let mut b = a.clone();
        b.beta = 2.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn unknown_keys_report_a_line() {
        let err = Scenario::from_toml_str("n_classes = 3\nm_samples = 1\nbogus = 1\n[[workers]]\ncount = 2\n", "f.toml")
            .unwrap_err();
        match err {
            HarnessError::Parse { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let one_worker = MINIMAL.replace("count = 2", "count = 1");
        assert!(matches!(Scenario::from_toml_str(&one_worker, "t"), Err(HarnessError::Invalid(_))));
        let no_map = format!("{MINIMAL}\n[[workers]]\nstrategy = \"strategic\"\n");
        assert!(Scenario::from_toml_str(&no_map, "t").is_err());
        let bad_rounds = format!("rounds = 2\nlambdas = [1.0]\n{MINIMAL}");
        assert!(Scenario::from_toml_str(&bad_rounds, "t").is_err());
        let bad_prior = format!("public_prior = [0.5, 0.5]\n{MINIMAL}");
        assert!(Scenario::from_toml_str(&bad_prior, "t").is_err());
        let bad_k = format!("assignment = \"kpeers\"\npeers_per_sample = 3\n{MINIMAL}");
        assert!(Scenario::from_toml_str(&bad_k, "t").is_err());
    }

    #[test]
    fn groups_expand_in_order() {
        let text = format!("{MINIMAL}\n[[workers]]\nstrategy = \"collude\"\n");
        let s = Scenario::from_toml_str(&text, "t").unwrap();
        assert_eq!(s.group_of_worker(), vec![0, 0, 1]);
        assert_eq!(s.workers[1].strategy(3).kind, StrategyKind::Strategic { report_map: vec![0, 2, 2] });
    }
}
