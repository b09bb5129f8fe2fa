//! End-to-end protocol execution.
//!
//! One run draws the public dataset, splits private data, builds each
//! worker's classifier, then for every round: registers workers with their
//! deposits, lets them label the public set, commits, reveals, and settles.
//! Labels from the final round are the run's output.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use super::io::{export_counts, export_votes};
use super::scenario::{Behavior, Scenario};
use super::HarnessError;
use crate::agents::{build_classifier, run_worker, StrategyKind, SyntheticClassifier, WorkerOutput, WorkerProfile};
use crate::analysis::{estimate_costs, expected_profit_heuristic, expected_profit_strategic, CostMode};
use crate::datagen::{
    assign_samples, dirichlet_partition, largest_remainder, make_public_dataset, AssignmentMode, ClassPrior,
    DatasetManifest,
};
use crate::ledger::{commitment_hash, Address, Ledger, LedgerConfig, LedgerError, Phase, Salt, WorkerStatus};
use crate::mechanism::{vote_margins, ClassLabel, LabelCount, PeerDensity, Vote, VoteMatrix};
use crate::rng::{derive_seed, stream};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerResult {
    pub address: String,
    pub group: usize,
    pub strategy: String,
    pub behavior: Behavior,
    pub accuracy: f64,
    /// Summed over rounds.
    pub reward_score: f64,
    /// Samples the worker was rewarded on, summed over rounds.
    pub rewarded_samples: u64,
    pub payout: u64,
    pub deposit: u64,
    pub incurred_cost: f64,
    /// Ledger status after the final round; `Unregistered` when registration failed.
    pub status: String,
}

impl WorkerResult {
    /// Mean reward per sample voted on; zero when the worker never voted.
    pub fn per_sample_reward(&self) -> f64 {
        if self.rewarded_samples == 0 {
            0.0
        } else {
            self.reward_score / self.rewarded_samples as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: usize,
    pub lambda: f64,
    pub pool_in: u64,
    pub pool_out: u64,
    pub retained: u64,
    pub slashed: Vec<String>,
    pub forfeited: Vec<String>,
    pub label_accuracy: f64,
    pub peer_comparisons: u64,
}

/// Closed-form predictions next to what the run measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossChecks {
    pub predicted_heuristic_profit: f64,
    pub measured_heuristic_profit: Option<f64>,
    pub predicted_misreport_profit: f64,
    pub measured_strategic_profit: Option<f64>,
    pub peer_comparisons: u64,
    /// `m * n * (n - 1)` over revealed workers, when every one of them voted
    /// on every sample.
    pub full_participation_comparisons: Option<u64>,
    pub estimated_compute_ops: u64,
    pub estimated_permanent_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub digest: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub workers: Vec<WorkerResult>,
    pub rounds: Vec<RoundSummary>,
    pub true_classes: Vec<ClassLabel>,
    /// Final round; `None` where no worker voted.
    pub aggregated: Vec<Option<ClassLabel>>,
    pub vote_margins: Vec<u64>,
    pub label_accuracy: f64,
    pub cross_checks: CrossChecks,
    /// Accepted transactions of every round, in order.
    pub transaction_log: Vec<String>,
    /// Final-round votes of revealed workers, the input the rewards were computed on.
    pub revealed_ids: Vec<String>,
    pub revealed_votes: VoteMatrix,
    pub revealed_counts: Vec<LabelCount>,
    pub manifest: DatasetManifest,
}

impl RunResult {
    pub fn mean_reward_where(&self, pred: impl Fn(&WorkerResult) -> bool) -> Option<(f64, f64)> {
        let xs: Vec<f64> = self.workers.iter().filter(|w| pred(w)).map(|w| w.reward_score).collect();
        (!xs.is_empty()).then(|| (stats::mean(&xs), stats::std_error(&xs)))
    }
}

fn abort(ledger: &Ledger, source: LedgerError) -> HarnessError {
    HarnessError::LedgerAbort { source, log: ledger.log_lines() }
}

/// Changes one submitted vote, or the salt if the worker submitted none.
fn tamper(votes: &mut [Vote], salt: &mut Salt, n_classes: usize) {
    match votes.iter_mut().find(|v| !v.is_abstain()) {
        Some(v) if n_classes > 1 => {
            let c = v.label().expect("not abstain").0;
            *v = Vote::of((c + 1) % n_classes as u16);
        }
        _ => salt[0] ^= 1,
    }
}

struct Setup {
    public_classes: Vec<ClassLabel>,
    density: PeerDensity,
    heuristic_density: PeerDensity,
    assignment_lists: Vec<Vec<usize>>,
    classifiers: Vec<SyntheticClassifier>,
    manifest: DatasetManifest,
}

fn setup(sc: &Scenario, seed: u64) -> Result<Setup, HarnessError> {
    let n = sc.n_workers();
    let c = sc.n_classes;
    let public_prior = sc.public_prior()?;
    let private_prior = sc.private_prior()?;
    let public = make_public_dataset(sc.m_samples, &public_prior, &mut stream(seed, "public"))?;
    let empirical = ClassPrior::empirical(&public.true_classes, c)?;
    let heuristic_prior = match &sc.heuristic_prior {
        Some(p) => ClassPrior::new(p.clone())?,
        None => empirical.clone(),
    };
    let totals = largest_remainder(sc.private_samples(), private_prior.probs());
    let partition = dirichlet_partition(&totals, n, sc.alpha, &mut stream(seed, "partition"))?;
    let assignment = assign_samples(sc.m_samples, n, sc.assignment_mode(), &mut stream(seed, "assignment"))?;

    let groups = sc.group_of_worker();
    let classifiers = (0..n)
        .map(|i| {
            let group = &sc.workers[groups[i]];
            let sharpness = sc.noise.sharpness * group.effort;
            let mut rng = stream(seed, &format!("classifier/w{i}"));
            let counts = &partition.per_worker_counts[i];
            let clf = match group.accuracy {
                Some(a) => SyntheticClassifier::symmetric(a, c, empirical.probs(), sharpness)?,
                // without private data the worker can only echo the prior
                None if counts.iter().all(|&k| k == 0) => {
                    SyntheticClassifier::new(vec![empirical.probs().to_vec(); c], empirical.probs(), 0.0)?
                }
                None => build_classifier(counts, group.effort, &sc.noise, &empirical, &mut rng)?,
            };
            Ok(clf)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let mut assignment_lists = vec![Vec::new(); n];
    for (j, ws) in assignment.per_sample_workers.iter().enumerate() {
        for &w in ws {
            assignment_lists[w].push(j);
        }
    }
    let manifest = DatasetManifest {
        seed,
        n_workers: n,
        m_samples: sc.m_samples,
        n_classes: c,
        alpha: sc.alpha,
        private_prior: private_prior.probs().to_vec(),
        public_prior: public_prior.probs().to_vec(),
        private_totals: totals,
        assignment: sc.assignment_mode(),
    };
    Ok(Setup {
        public_classes: public.true_classes,
        density: PeerDensity(empirical.probs().to_vec()),
        heuristic_density: PeerDensity(heuristic_prior.probs().to_vec()),
        assignment_lists,
        classifiers,
        manifest,
    })
}

/// Runs the scenario with its own seed.
pub fn run_scenario(sc: &Scenario) -> Result<RunResult, HarnessError> {
    run_scenario_seeded(sc, sc.seed)
}

/// Runs the scenario with `seed` replacing the configured one.
pub fn run_scenario_seeded(sc: &Scenario, seed: u64) -> Result<RunResult, HarnessError> {
    let mut sc = sc.clone();
    sc.seed = seed;
    sc.validate()?;
    let n = sc.n_workers();
    let c = sc.n_classes;
    let m = sc.m_samples;
    let groups = sc.group_of_worker();
    let addresses: Vec<Address> = (0..n).map(|i| Address::new(format!("w{i}"))).collect();
    let s = setup(&sc, seed)?;

    let mut workers: Vec<WorkerResult> = (0..n)
        .map(|i| {
            let g = &sc.workers[groups[i]];
            WorkerResult {
                address: addresses[i].0.clone(),
                group: groups[i],
                strategy: g.strategy(c).kind.name().to_owned(),
                behavior: g.behavior,
                accuracy: s.classifiers[i].overall_accuracy(),
                reward_score: 0.0,
                rewarded_samples: 0,
                payout: 0,
                deposit: 0,
                incurred_cost: 0.0,
                status: String::new(),
            }
        })
        .collect();
    let mut rounds = Vec::new();
    let mut transaction_log = Vec::new();
    let mut last = None;

    for (r, &lambda) in sc.lambda_schedule().iter().enumerate() {
        let params = sc.params(lambda)?;
        let mut ledger = Ledger::new(LedgerConfig {
            roster: addresses.iter().cloned().collect(),
            required_deposit: sc.deposit,
            m_samples: m,
            n_classes: c,
            t_max_commit: sc.t_max_commit,
            t_max_reveal: sc.t_max_reveal,
            payout_scale: sc.payout_scale,
            late_registration: false,
        });
        let registered: Vec<bool> = (0..n)
            .map(|i| {
                let offered = sc.workers[groups[i]].deposit.unwrap_or(sc.deposit);
                match ledger.register(&addresses[i], offered) {
                    Ok(()) => true,
                    Err(e) => {
                        log::warn!("round {r}: {} not registered: {e}", addresses[i]);
                        false
                    }
                }
            })
            .collect();
        ledger.open_commit().map_err(|e| abort(&ledger, e))?;

        let outputs: Vec<WorkerOutput> = (0..n)
            .into_par_iter()
            .map(|i| {
                let g = &sc.workers[groups[i]];
                let strategy = g.strategy(c);
                let density =
                    if strategy.kind == StrategyKind::Heuristic { &s.heuristic_density } else { &s.density };
                let profile = WorkerProfile {
                    address: addresses[i].clone(),
                    classifier: s.classifiers[i].clone(),
                    strategy,
                    cost: g.cost(),
                    rng_seed: derive_seed(seed, &format!("worker/w{i}/round/{r}")),
                };
                run_worker(&profile, &s.assignment_lists[i], &s.public_classes, &params, density)
            })
            .collect();

        // commit
        let mut payloads: Vec<Option<(Vec<Vote>, LabelCount, Salt)>> = vec![None; n];
        for i in (0..n).filter(|&i| registered[i]) {
            let behavior = sc.workers[groups[i]].behavior;
            if behavior == Behavior::Absent {
                continue;
            }
            let salt: Salt = stream(seed, &format!("salt/w{i}/round/{r}")).random();
            let mut counts = outputs[i].label_count.clone();
            if behavior == Behavior::Miscount {
                counts.0[0] += 1;
            }
            let hash = commitment_hash(&outputs[i].votes, &counts, &salt).map_err(|e| abort(&ledger, e))?;
            ledger.commit(&addresses[i], hash).map_err(|e| abort(&ledger, e))?;
            payloads[i] = Some((outputs[i].votes.clone(), counts, salt));
        }
        while ledger.phase() == Phase::Commit {
            ledger.advance_tick().map_err(|e| abort(&ledger, e))?;
        }

        // reveal
        for i in 0..n {
            let Some((mut votes, counts, mut salt)) = payloads[i].take() else { continue };
            let behavior = sc.workers[groups[i]].behavior;
            if behavior == Behavior::Withhold {
                continue;
            }
            if behavior == Behavior::Tamper {
                tamper(&mut votes, &mut salt, c);
            }
            match ledger.reveal(&addresses[i], votes, counts, salt) {
                Ok(()) => {}
                Err(e @ (LedgerError::TamperRejected(_) | LedgerError::CountMismatch(_))) => {
                    log::info!("round {r}: {e}");
                }
                Err(e) => return Err(abort(&ledger, e)),
            }
        }
        ledger.run_until_settle().map_err(|e| abort(&ledger, e))?;
        if let Err(e) = ledger.finalize(&params) {
            return Err(abort(&ledger, e));
        }
        let report = ledger.settlement().expect("finalized").clone();
        let rewards = report.rewards.clone().expect("not aborted");

        // participants are registered workers that revealed, in worker order
        let mut revealed_ids = Vec::new();
        let mut revealed_rows = Vec::new();
        let mut revealed_counts = Vec::new();
        for (k, addr) in report.participants.iter().enumerate() {
            let i = addresses.iter().position(|a| a == addr).expect("known address");
            let acct = ledger.account(addr).expect("registered");
            let reveal = acct.reveal.as_ref().expect("revealed");
            workers[i].reward_score += rewards.reward_scores[k];
            workers[i].rewarded_samples += reveal.label_count.total();
            revealed_ids.push(addr.0.clone());
            revealed_rows.push(reveal.votes.clone());
            revealed_counts.push(reveal.label_count.clone());
        }
        for i in 0..n {
            workers[i].payout += report.payouts.get(&addresses[i]).copied().unwrap_or(0);
            workers[i].incurred_cost += outputs[i].incurred_cost;
            workers[i].status = match ledger.account(&addresses[i]) {
                Some(a) => a.status.to_string(),
                None => "Unregistered".to_owned(),
            };
            if let Some(a) = ledger.account(&addresses[i]) {
                workers[i].deposit += a.deposit;
            }
        }

        let label_accuracy = accuracy(&rewards.aggregated, &s.public_classes);
        rounds.push(RoundSummary {
            round: r,
            lambda,
            pool_in: report.pool_in,
            pool_out: report.pool_out,
            retained: report.retained,
            slashed: report.slashed.iter().map(|a| a.0.clone()).collect(),
            forfeited: report.forfeited.iter().map(|a| a.0.clone()).collect(),
            label_accuracy,
            peer_comparisons: rewards.peer_comparisons,
        });
        transaction_log.extend(ledger.log_lines());
        let matrix = VoteMatrix::from_rows(revealed_rows)?;
        last = Some((rewards, revealed_ids, matrix, revealed_counts, params));
    }

    let (rewards, revealed_ids, revealed_votes, revealed_counts, params) = last.expect("at least one round");
    let final_round = rounds.last().expect("at least one round");
    let label_accuracy = final_round.label_accuracy;
    let margins = vote_margins(&revealed_votes, c);

    let per_sample_mean = |kind: &str| {
        let xs: Vec<f64> = workers
            .iter()
            .filter(|w| w.strategy == kind && w.rewarded_samples > 0 && w.status == WorkerStatus::Settled.to_string())
            .map(WorkerResult::per_sample_reward)
            .collect();
        (!xs.is_empty()).then(|| stats::mean(&xs))
    };
    let n_revealed = revealed_votes.n_workers() as u64;
    let everyone_voted = revealed_votes.rows().all(|row| row.iter().all(|v| !v.is_abstain()));
    let cost_mode = match sc.assignment_mode() {
        AssignmentMode::KPeers(2) => CostMode::KPeers2,
        _ => CostMode::Full,
    };
    let costs = estimate_costs(m as u64, n as u64, c as u64, cost_mode)?;
    let cross_checks = CrossChecks {
        predicted_heuristic_profit: expected_profit_heuristic(&params),
        measured_heuristic_profit: per_sample_mean("heuristic"),
        predicted_misreport_profit: expected_profit_strategic(&params, 0.0),
        measured_strategic_profit: per_sample_mean("strategic"),
        peer_comparisons: rewards.peer_comparisons,
        full_participation_comparisons: everyone_voted.then(|| m as u64 * n_revealed * n_revealed.saturating_sub(1)),
        estimated_compute_ops: costs.compute_ops,
        estimated_permanent_bits: costs.permanent_bits,
    };

    Ok(RunResult {
        digest: sc.digest(),
        seed,
        scenario: sc,
        workers,
        rounds,
        true_classes: s.public_classes,
        aggregated: rewards.aggregated,
        vote_margins: margins,
        label_accuracy,
        cross_checks,
        transaction_log,
        revealed_ids,
        revealed_votes,
        revealed_counts,
        manifest: s.manifest,
    })
}

fn accuracy(aggregated: &[Option<ClassLabel>], truth: &[ClassLabel]) -> f64 {
    let hits = aggregated.iter().zip(truth).filter(|(a, t)| **a == Some(**t)).count();
    hits as f64 / truth.len() as f64
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario_digest: &'a str,
    seed: u64,
    n_workers: usize,
    m_samples: usize,
    n_classes: usize,
    label_accuracy: f64,
    rounds: &'a [RoundSummary],
    cross_checks: &'a CrossChecks,
    workers: &'a [WorkerResult],
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Writes `rewards.csv`, `aggregate.csv`, `summary.json`, `transactions.log`,
/// `votes.csv`, `counts.csv`, `manifest.toml` and `scenario.toml`.
pub fn emit_results(result: &RunResult, out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let io_err = |name: &str, e: std::io::Error| HarnessError::io(out_dir.join(name), e);

    let mut rewards = csv::Writer::from_writer(Vec::new());
    let mut rewards_rows = || -> Result<Vec<u8>, std::io::Error> {
        rewards.write_record(["worker_id", "strategy", "reward_score", "payout", "status"])?;
        for w in &result.workers {
            rewards.write_record([
                w.address.as_str(),
                &w.strategy,
                &w.reward_score.to_string(),
                &w.payout.to_string(),
                &w.status,
            ])?;
        }
        rewards.flush()?;
        Ok(rewards.get_ref().clone())
    };
    let bytes = rewards_rows().map_err(|e| io_err("rewards.csv", e))?;
    write_file(out_dir, "rewards.csv", &bytes)?;

    let mut aggregate = csv::Writer::from_writer(Vec::new());
    let mut aggregate_rows = || -> Result<Vec<u8>, std::io::Error> {
        aggregate.write_record(["sample_id", "label", "vote_margin"])?;
        for (j, (label, margin)) in result.aggregated.iter().zip(&result.vote_margins).enumerate() {
            let label = label.map(|l| l.0.to_string()).unwrap_or_default();
            aggregate.write_record([j.to_string(), label, margin.to_string()])?;
        }
        aggregate.flush()?;
        Ok(aggregate.get_ref().clone())
    };
    let bytes = aggregate_rows().map_err(|e| io_err("aggregate.csv", e))?;
    write_file(out_dir, "aggregate.csv", &bytes)?;

    let summary = Summary {
        scenario_digest: &result.digest,
        seed: result.seed,
        n_workers: result.workers.len(),
        m_samples: result.true_classes.len(),
        n_classes: result.scenario.n_classes,
        label_accuracy: result.label_accuracy,
        rounds: &result.rounds,
        cross_checks: &result.cross_checks,
        workers: &result.workers,
    };
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    json.push(b'\n');
    write_file(out_dir, "summary.json", &json)?;

    let mut log = result.transaction_log.join("\n");
    log.push('\n');
    write_file(out_dir, "transactions.log", log.as_bytes())?;

    let mut votes = Vec::new();
    export_votes(&mut votes, &result.revealed_ids, &result.revealed_votes).map_err(|e| io_err("votes.csv", e))?;
    write_file(out_dir, "votes.csv", &votes)?;
    let mut counts = Vec::new();
    export_counts(&mut counts, &result.revealed_ids, &result.revealed_counts).map_err(|e| io_err("counts.csv", e))?;
    write_file(out_dir, "counts.csv", &counts)?;

    write_file(out_dir, "manifest.toml", result.manifest.to_toml().as_bytes())?;
    write_file(out_dir, "scenario.toml", result.scenario.to_toml().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::WorkerGroup;
    use crate::mechanism::ptsfd;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_toml_str(text, "t").unwrap()
    }

    const PERFECT: &str = r#"
seed = 3
n_classes = 10
m_samples = 500
beta = 1.0

[[workers]]
count = 10
accuracy = 1.0
"#;

    #[test]
    fn perfect_workers_recover_truth_and_break_even() {
        let mut sc = scenario(PERFECT);
        sc.noise.sharpness = f64::INFINITY;
        let r = run_scenario(&sc).unwrap();
        assert_eq!(r.label_accuracy, 1.0);
        assert!(r.workers.iter().all(|w| w.payout == 100 && w.status == "Settled"));
        assert_eq!(r.rounds[0].retained, 0);
        assert_eq!(r.cross_checks.full_participation_comparisons, Some(r.cross_checks.peer_comparisons));
    }

    #[test]
    fn withholder_is_slashed() {
        let mut sc = scenario(PERFECT);
        sc.workers = vec![
            WorkerGroup { count: 9, accuracy: Some(0.9), ..WorkerGroup::default() },
            WorkerGroup { count: 1, accuracy: Some(0.9), behavior: Behavior::Withhold, ..WorkerGroup::default() },
        ];
        let r = run_scenario(&sc).unwrap();
        assert_eq!(r.workers[9].status, "Slashed");
        assert_eq!(r.workers[9].payout, 0);
        assert!(r.workers[..9].iter().all(|w| w.status == "Settled"));
        assert_eq!(r.rounds[0].slashed, ["w9"]);
        assert_eq!(r.rounds[0].pool_out + r.rounds[0].retained, r.rounds[0].pool_in);
    }

    #[test]
    fn protocol_violations_are_slashed_or_forfeited() {
        let mut sc = scenario(PERFECT);
        sc.workers = vec![
            WorkerGroup { count: 4, accuracy: Some(0.8), ..WorkerGroup::default() },
            WorkerGroup { behavior: Behavior::Tamper, ..WorkerGroup::default() },
            WorkerGroup { behavior: Behavior::Miscount, ..WorkerGroup::default() },
            WorkerGroup { behavior: Behavior::Absent, ..WorkerGroup::default() },
            WorkerGroup { deposit: Some(5), ..WorkerGroup::default() },
        ];
        let r = run_scenario(&sc).unwrap();
        let status: Vec<&str> = r.workers.iter().map(|w| w.status.as_str()).collect();
        assert_eq!(status, ["Settled", "Settled", "Settled", "Settled", "Slashed", "Slashed", "Registered", "Unregistered"]);
        assert_eq!(r.rounds[0].forfeited, ["w6"]);
        assert_eq!(r.revealed_ids, ["w0", "w1", "w2", "w3"]);
    }

    #[test]
    fn runs_are_reproducible_and_seed_sensitive() {
        let sc = scenario(&PERFECT.replace("accuracy = 1.0", "accuracy = 0.7"));
        let a = run_scenario(&sc).unwrap();
        assert_eq!(a, run_scenario(&sc).unwrap());
        let b = run_scenario_seeded(&sc, 4).unwrap();
        assert_ne!(a.true_classes, b.true_classes);
    }

    #[test]
    fn rewards_match_a_direct_mechanism_call() {
        let text = r#"
n_classes = 4
m_samples = 300
beta = 0.5
assignment = "kpeers"
peers_per_sample = 3

[[workers]]
count = 4
threshold = "rational"

[[workers]]
count = 2
strategy = "heuristic"
"#;
        let sc = scenario(text);
        let r = run_scenario(&sc).unwrap();
        let direct = ptsfd(&r.revealed_votes, &r.revealed_counts, &sc.params(1.0).unwrap(), false).unwrap();
        for (k, id) in r.revealed_ids.iter().enumerate() {
            let w = r.workers.iter().find(|w| &w.address == id).unwrap();
            assert_eq!(w.reward_score, direct.reward_scores[k]);
        }
        assert_eq!(r.aggregated, direct.aggregated);
    }

    #[test]
    fn multi_round_applies_each_lambda() {
        let text = PERFECT.replace("beta = 1.0", "beta = 0.0\nlambdas = [2.0, 1.0]");
        let r = run_scenario(&scenario(&text)).unwrap();
        assert_eq!(r.rounds.len(), 2);
        assert_eq!(r.rounds[1].lambda, 1.0);
        // every sample is a full match worth 1/R(x) = m / count(x), so a round
        // pays lambda * m per class present
        assert!((r.workers[0].reward_score - 3.0 * 10.0 * 500.0).abs() < 1e-6);
    }

    #[test]
    fn lone_participant_aborts_with_log() {
        let mut sc = scenario(PERFECT);
        sc.workers = vec![
            WorkerGroup::default(),
            WorkerGroup { behavior: Behavior::Withhold, ..WorkerGroup::default() },
        ];
        match run_scenario(&sc) {
            Err(HarnessError::LedgerAbort { source: LedgerError::FederationFailure { revealed: 1 }, log }) => {
                assert!(log.iter().any(|l| l.contains(",abort,")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn emitted_files_are_complete_and_stable() {
        let sc = scenario(&PERFECT.replace("accuracy = 1.0", "accuracy = 0.8"));
        let r = run_scenario(&sc).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_results(&r, a.path()).unwrap();
        emit_results(&r, b.path()).unwrap();
        for name in ["rewards.csv", "aggregate.csv", "summary.json", "transactions.log", "votes.csv", "counts.csv", "manifest.toml", "scenario.toml"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        let rewards = std::fs::read_to_string(a.path().join("rewards.csv")).unwrap();
        assert_eq!(rewards.lines().count(), 1 + 10);
        let agg = std::fs::read_to_string(a.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 1 + 500);
    }
}
