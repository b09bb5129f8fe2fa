//! Parameter sweeps: one run per (value, replicate), executed in parallel
//! and reported in input order.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::run::{run_scenario_seeded, RunResult};
use super::scenario::{Scenario, StrategySpec, WorkerGroup};
use super::HarnessError;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta,
    Lambda,
    Alpha,
    MSamples,
    /// Share of workers replaced by colluders; the rest are honest.
    ColluderFraction,
    /// Share of workers replaced by heuristic workers; the rest are honest.
    HeuristicFraction,
    /// Accuracy of every honest worker.
    Accuracy,
}

const AXES: [(&str, SweepAxis); 7] = [
    ("beta", SweepAxis::Beta),
    ("lambda", SweepAxis::Lambda),
    ("alpha", SweepAxis::Alpha),
    ("m_samples", SweepAxis::MSamples),
    ("colluder_fraction", SweepAxis::ColluderFraction),
    ("heuristic_fraction", SweepAxis::HeuristicFraction),
    ("accuracy", SweepAxis::Accuracy),
];

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AXES.iter().find(|(name, _)| *name == s).map(|(_, a)| *a).ok_or_else(|| HarnessError::UnknownAxis(s.to_owned()))
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = AXES.iter().find(|(_, a)| a == self).map(|(n, _)| *n).expect("every axis is listed");
        f.write_str(name)
    }
}

/// Rebuilds the worker list as `n - k` honest workers and `k` adversaries,
/// `k = round(fraction * n)`. Both copy the first honest group's settings.
fn mix_workers(sc: &mut Scenario, fraction: f64, adversary: StrategySpec) -> Result<(), HarnessError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarnessError::Invalid(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = sc.n_workers();
    let k = (fraction * n as f64).round() as usize;
    let template =
        sc.workers.iter().find(|g| g.strategy == StrategySpec::Honest).cloned().unwrap_or_default();
    let honest = WorkerGroup { count: n - k, ..template.clone() };
    let other = WorkerGroup { count: k, strategy: adversary, report_map: None, ..template };
    sc.workers = [honest, other].into_iter().filter(|g| g.count > 0).collect();
    Ok(())
}

pub fn apply_axis(base: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario, HarnessError> {
    let mut sc = base.clone();
    match axis {
        SweepAxis::Beta => sc.beta = value,
        SweepAxis::Lambda => {
            sc.lambda = value;
            sc.lambdas = None;
        }
        SweepAxis::Alpha => sc.alpha = value,
        SweepAxis::MSamples => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(HarnessError::Invalid(format!("m_samples must be a positive integer, got {value}")));
            }
            sc.m_samples = value as usize;
        }
        SweepAxis::ColluderFraction => mix_workers(&mut sc, value, StrategySpec::Collude)?,
        SweepAxis::HeuristicFraction => mix_workers(&mut sc, value, StrategySpec::Heuristic)?,
        SweepAxis::Accuracy => {
            for g in sc.workers.iter_mut().filter(|g| g.strategy == StrategySpec::Honest) {
                g.accuracy = Some(value);
            }
        }
    }
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Replicate `r` runs with seed `base.seed + r`.
    pub replicates: usize,
}

/// One run of a sweep. Rewards are per-worker totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub replicate: usize,
    pub seed: u64,
    pub honest_mean: Option<f64>,
    pub honest_se: Option<f64>,
    pub other_mean: Option<f64>,
    pub other_se: Option<f64>,
    pub label_accuracy: f64,
    pub digest: String,
}

impl SweepRow {
    fn from_run(axis: SweepAxis, value: f64, replicate: usize, run: &RunResult) -> Self {
        let honest = run.mean_reward_where(|w| w.strategy == "honest");
        let other = run.mean_reward_where(|w| w.strategy != "honest");
        SweepRow {
            axis,
            value,
            replicate,
            seed: run.seed,
            honest_mean: honest.map(|h| h.0),
            honest_se: honest.map(|h| h.1),
            other_mean: other.map(|o| o.0),
            other_se: other.map(|o| o.1),
            label_accuracy: run.label_accuracy,
            digest: run.digest.clone(),
        }
    }

    /// Whether honest workers strictly out-earned the rest; `None` when
    /// either group is empty.
    pub fn honest_wins(&self) -> Option<bool> {
        Some(self.honest_mean? > self.other_mean?)
    }
}

/// Runs every (value, replicate) pair and returns the rows in input order.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    let jobs: Vec<(f64, usize)> =
        spec.values.iter().flat_map(|&v| (0..spec.replicates).map(move |r| (v, r))).collect();
    jobs.par_iter()
        .map(|&(value, replicate)| {
            let sc = apply_axis(&spec.base, spec.axis, value)?;
            let run = run_scenario_seeded(&sc, spec.base.seed.wrapping_add(replicate as u64))?;
            Ok(SweepRow::from_run(spec.axis, value, replicate, &run))
        })
        .collect()
}

/// Per-value aggregate over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub replicates: usize,
    pub honest_mean: Option<f64>,
    pub other_mean: Option<f64>,
    /// Share of replicates in which honest workers strictly out-earned the rest.
    pub honest_win_rate: Option<f64>,
    pub label_accuracy: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SweepPoint> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    values
        .into_iter()
        .map(|value| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value).collect();
            let mean_of = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                let xs: Vec<f64> = at.iter().filter_map(|r| f(r)).collect();
                (!xs.is_empty()).then(|| stats::mean(&xs))
            };
            let wins: Vec<f64> = at.iter().filter_map(|r| r.honest_wins()).map(|w| f64::from(u8::from(w))).collect();
            SweepPoint {
                value,
                replicates: at.len(),
                honest_mean: mean_of(&|r| r.honest_mean),
                other_mean: mean_of(&|r| r.other_mean),
                honest_win_rate: (!wins.is_empty()).then(|| stats::mean(&wins)),
                label_accuracy: stats::mean(&at.iter().map(|r| r.label_accuracy).collect::<Vec<_>>()),
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `sweep.csv` (one row per run) and `sweep_summary.csv` (one row per value).
pub fn write_sweep_csv(rows: &[SweepRow], out_dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let path = out_dir.join("sweep.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e.into()))?;
    let io = |e: csv::Error| HarnessError::io(out_dir.join("sweep.csv"), e.into());
    wtr.write_record([
        "axis", "value", "replicate", "seed", "honest_mean", "honest_se", "other_mean", "other_se", "label_accuracy",
        "digest",
    ])
    .map_err(io)?;
    for r in rows {
        wtr.write_record([
            r.axis.to_string(),
            r.value.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            opt(r.honest_mean),
            opt(r.honest_se),
            opt(r.other_mean),
            opt(r.other_se),
            r.label_accuracy.to_string(),
            r.digest.clone(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| HarnessError::io(&path, e))?;

    let path = out_dir.join("sweep_summary.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e.into()))?;
    let io = |e: csv::Error| HarnessError::io(out_dir.join("sweep_summary.csv"), e.into());
    wtr.write_record(["value", "replicates", "honest_mean", "other_mean", "honest_win_rate", "label_accuracy"])
        .map_err(io)?;
    for p in summarize(rows) {
        wtr.write_record([
            p.value.to_string(),
            p.replicates.to_string(),
            opt(p.honest_mean),
            opt(p.other_mean),
            opt(p.honest_win_rate),
            p.label_accuracy.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| HarnessError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Scenario {
        Scenario::from_toml_str(
            "seed = 1\nn_classes = 4\nm_samples = 200\n[[workers]]\ncount = 10\naccuracy = 0.8\n",
            "t",
        )
        .unwrap()
    }

    #[test]
    fn axis_names_round_trip() {
        for (name, axis) in AXES {
            assert_eq!(name.parse::<SweepAxis>().unwrap(), axis);
            assert_eq!(axis.to_string(), name);
        }
        assert!(matches!("gamma".parse::<SweepAxis>(), Err(HarnessError::UnknownAxis(_))));
    }

    #[test]
    fn fractions_rebuild_the_roster() {
        let sc = apply_axis(&base(), SweepAxis::ColluderFraction, 0.3).unwrap();
        assert_eq!(sc.n_workers(), 10);
        assert_eq!(sc.workers[1].count, 3);
        assert_eq!(sc.workers[1].strategy, StrategySpec::Collude);
        assert_eq!(sc.workers[1].accuracy, Some(0.8));
        let all = apply_axis(&base(), SweepAxis::HeuristicFraction, 1.0).unwrap();
        assert_eq!(all.workers.len(), 1);
        assert!(apply_axis(&base(), SweepAxis::HeuristicFraction, 1.5).is_err());
        assert!(apply_axis(&base(), SweepAxis::MSamples, 2.5).is_err());
    }

    #[test]
    fn empty_values_give_empty_table() {
        let spec = SweepSpec { base: base(), axis: SweepAxis::Beta, values: vec![], replicates: 3 };
        assert!(sweep(&spec).unwrap().is_empty());
    }

    #[test]
    fn rows_come_back_in_order_and_reproducibly() {
        let spec = SweepSpec { base: base(), axis: SweepAxis::HeuristicFraction, values: vec![0.2, 0.5], replicates: 3 };
        let rows = sweep(&spec).unwrap();
        let order: Vec<(f64, usize)> = rows.iter().map(|r| (r.value, r.replicate)).collect();
        assert_eq!(order, [(0.2, 0), (0.2, 1), (0.2, 2), (0.5, 0), (0.5, 1), (0.5, 2)]);
        assert_eq!(rows, sweep(&spec).unwrap());
        let points = summarize(&rows);
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].honest_win_rate, Some(1.0));

        let dir = tempfile::tempdir().unwrap();
        write_sweep_csv(&rows, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(text.lines().count(), 7);
    }
}
