//! `ptsfd`: run protocol simulations, sweeps and one-off checks from the
//! command line.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 parse, 5 ledger,
//! 6 rejected reveal, 7 I/O. `PTSFD_LOG` sets log verbosity
//! (`error`..`trace`, default `warn`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ptsfd_core::analysis::{check_self_predicting, estimate_costs, CostMode, SelfPredicting};
use ptsfd_core::harness::{
    emit_results, ingest_belief, ingest_counts, ingest_votes, run_scenario_seeded, summarize, sweep, verify_counts,
    write_sweep_csv, HarnessError, Scenario, SweepAxis, SweepSpec, VoteDims,
};
use ptsfd_core::ledger::{commitment_hash, Address, LedgerError, Salt};
use ptsfd_core::{label_count, ptsfd, ErrorCategory, LabelCount, MechanismError, MechanismParams};

#[derive(Parser)]
#[command(name = "ptsfd", version, about = "Peer-consistency rewards and commit-reveal settlement for 1-bit federated distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and write its outputs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vary one scenario parameter and replicate each point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// beta, lambda, alpha, m_samples, colluder_fraction, heuristic_fraction or accuracy.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute reward scores for a vote file; prints `worker_id,reward_score`.
    Reward {
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        lambda: f64,
        /// Declared label counts, checked against the votes.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Number of classes; inferred from the counts header or the largest class seen.
        #[arg(long)]
        classes: Option<usize>,
        /// Number of public samples; inferred from the largest sample id seen.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Check a belief model against the self-predicting condition.
    CheckCondition {
        #[arg(long)]
        belief: PathBuf,
    },
    /// Computation, memory and storage estimates.
    Costs {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        classes: u64,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Check one worker's votes and salt against a commitment hash.
    VerifyReveal {
        #[arg(long)]
        commit: String,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        salt: String,
        /// Required when the file holds more than one worker.
        #[arg(long)]
        worker: Option<String>,
        /// Declared counts; recomputed from the votes when absent.
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Kpeers2,
}

struct Failure {
    category: ErrorCategory,
    error: anyhow::Error,
}

impl Failure {
    fn new(category: ErrorCategory, error: impl Into<anyhow::Error>) -> Self {
        Failure { category, error: error.into() }
    }

    fn msg(category: ErrorCategory, msg: String) -> Self {
        Failure { category, error: anyhow::Error::msg(msg) }
    }
}

macro_rules! categorized {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(e.category(), e)
            }
        }
    )*};
}
categorized!(HarnessError, LedgerError, MechanismError, ptsfd_core::analysis::AnalysisError);

/// Appends one line to a command's stdout buffer.
macro_rules! outln {
    ($out:ident, $($arg:tt)*) => {{
        $out.push_str(&format!($($arg)*));
        $out.push('\n');
    }};
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(ErrorCategory::Io, anyhow::Error::new(e).context(path.display().to_string()))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    let scenario = Scenario::load(config)?;
    let seed = seed.unwrap_or(scenario.seed);
    info!("running {} workers on {} samples, seed {seed}", scenario.n_workers(), scenario.m_samples);
    let result = run_scenario_seeded(&scenario, seed)?;
    emit_results(&result, out)?;
    outln!(text, "scenario {} seed {seed}", result.digest);
    outln!(text, "label accuracy {:.4}", result.label_accuracy);
    for w in &result.workers {
        outln!(text, "{} {} reward {:.4} payout {} {}", w.address, w.strategy, w.reward_score, w.payout, w.status);
    }
    outln!(text, "outputs written to {}", out.display());
    Ok(text)
}

fn run_sweep(config: &Path, axis: &str, values: Vec<f64>, replicates: usize, out: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    let axis: SweepAxis = axis.parse()?;
    let base = Scenario::load(config)?;
    if values.is_empty() {
        warn!("no sweep values given; writing empty tables");
    }
    let rows = sweep(&SweepSpec { base, axis, values, replicates })?;
    write_sweep_csv(&rows, out)?;
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
    outln!(text, "{axis} replicates honest_mean other_mean honest_win_rate label_accuracy");
    for p in summarize(&rows) {
        outln!(text, 
            "{} {} {} {} {} {:.4}",
            p.value,
            p.replicates,
            fmt(p.honest_mean),
            fmt(p.other_mean),
            fmt(p.honest_win_rate),
            p.label_accuracy
        );
    }
    Ok(text)
}

/// Reads the declared counts first so their width can fix the class count.
fn read_votes(
    votes: &Path,
    counts: Option<&Path>,
    classes: Option<usize>,
    m: Option<usize>,
) -> Result<(ptsfd_core::harness::IngestedVotes, Option<Vec<LabelCount>>), Failure> {
    let header_width = match counts {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_failure(path))?;
            let first = text.lines().next().unwrap_or_default();
            Some(first.split(',').count().saturating_sub(1))
        }
        None => None,
    };
    let n_classes = match (classes, header_width) {
        (Some(c), Some(w)) if c != w => {
            return Err(Failure::msg(
                ErrorCategory::Validation,
                format!("--classes {c} disagrees with the {w} count columns"),
            ))
        }
        (c, w) => c.or(w),
    };
    let ingested = ingest_votes(votes, VoteDims { n_classes, m_samples: m })?;
    let declared = counts.map(|path| ingest_counts(path, &ingested.worker_ids)).transpose()?;
    Ok((ingested, declared))
}

fn reward(
    votes: &Path,
    beta: f64,
    lambda: f64,
    counts: Option<&Path>,
    classes: Option<usize>,
    m: Option<usize>,
) -> Result<String, Failure> {
    let mut text = String::new();
    let (ingested, declared) = read_votes(votes, counts, classes, m)?;
    if let Some(declared) = &declared {
        let liars = verify_counts(&ingested, declared);
        if !liars.is_empty() {
            return Err(Failure::msg(
                ErrorCategory::Validation,
                format!("declared label counts do not match the votes of: {}", liars.join(", ")),
            ));
        }
    }
    let params = MechanismParams::new(lambda, beta, ingested.n_classes)?;
    let report = ptsfd(&ingested.matrix, &ingested.label_counts, &params, false)?;
    info!("{} peer comparisons", report.peer_comparisons);
    outln!(text, "worker_id,reward_score");
    for (id, score) in ingested.worker_ids.iter().zip(&report.reward_scores) {
        outln!(text, "{id},{score}");
    }
    Ok(text)
}

fn check_condition(belief: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    let model = ingest_belief(belief)?;
    match check_self_predicting(&model)? {
        SelfPredicting::Holds => outln!(text, "holds"),
        SelfPredicting::Violated { x, y, tie } => {
            let own = model.joint[x][x] / model.marginal[x];
            let other = model.joint[x][y] / model.marginal[y];
            let relation = if tie { "ties with" } else { "is below" };
            outln!(text, "violated: evaluation {x}, report {y} (P({x}|{x})/P({x}) = {own:.6} {relation} P({y}|{x})/P({y}) = {other:.6})");
        }
    }
    Ok(text)
}

fn costs(m: u64, n: u64, classes: u64, mode: ModeArg) -> Result<String, Failure> {
    let mut text = String::new();
    let mode = match mode {
        ModeArg::Full => CostMode::Full,
        ModeArg::Kpeers2 => CostMode::KPeers2,
    };
    let c = estimate_costs(m, n, classes, mode)?;
    outln!(text, "compute_ops {}", c.compute_ops);
    outln!(text, "memory_cells {}", c.memory_cells);
    outln!(text, "permanent_bits {}", c.permanent_bits);
    outln!(text, "permanent_bits_per_worker_reading {}", c.permanent_bits_per_worker_reading);
    outln!(text, "eta {}", c.eta);
    Ok(text)
}

fn decode_32(name: &str, text: &str) -> Result<[u8; 32], Failure> {
    let text = text.strip_prefix("0x").unwrap_or(text);
    let bytes = hex::decode(text)
        .map_err(|e| Failure::msg(ErrorCategory::Validation, format!("--{name} is not valid hex: {e}")))?;
    bytes.try_into().map_err(|b: Vec<u8>| {
        Failure::msg(ErrorCategory::Validation, format!("--{name} must be 32 bytes, got {}", b.len()))
    })
}

#[allow(clippy::too_many_arguments)]
fn verify_reveal(
    commit: &str,
    votes: &Path,
    salt: &str,
    worker: Option<&str>,
    counts: Option<&Path>,
    classes: Option<usize>,
    m: Option<usize>,
) -> Result<String, Failure> {
    let mut text = String::new();
    let commit = decode_32("commit", commit)?;
    let salt: Salt = decode_32("salt", salt)?;
    let (ingested, declared) = read_votes(votes, counts, classes, m)?;
    let row = match worker {
        Some(id) => ingested.worker_ids.iter().position(|w| w == id).ok_or_else(|| {
            Failure::msg(ErrorCategory::Validation, format!("worker {id} has no votes in {}", votes.display()))
        })?,
        None if ingested.worker_ids.len() == 1 => 0,
        None => {
            return Err(Failure::msg(
                ErrorCategory::Validation,
                format!("{} workers in the vote file; pick one with --worker", ingested.worker_ids.len()),
            ))
        }
    };
    let own_votes = ingested.matrix.row(row);
    let count = match declared {
        Some(mut d) => d.swap_remove(row),
        None => label_count(own_votes, ingested.n_classes)?,
    };
    let hash = commitment_hash(own_votes, &count, &salt)?;
    if hash != commit {
        return Err(Failure::msg(
            ErrorCategory::Rejected,
            format!("rejected: payload hashes to {}, commitment is {}", hex::encode(hash), hex::encode(commit)),
        ));
    }
    let recount = label_count(own_votes, ingested.n_classes)?;
    if recount != count {
        return Err(LedgerError::CountMismatch(Address::new(ingested.worker_ids[row].clone())).into());
    }
    outln!(text, "accepted");
    Ok(text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PTSFD_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Sweep { config, axis, values, replicates, out } => run_sweep(&config, &axis, values, replicates, &out),
        Command::Reward { votes, beta, lambda, counts, classes, m } => {
            reward(&votes, beta, lambda, counts.as_deref(), classes, m)
        }
        Command::CheckCondition { belief } => check_condition(&belief),
        Command::Costs { m, n, classes, mode } => costs(m, n, classes, mode),
        Command::VerifyReveal { commit, votes, salt, worker, counts, classes, m } => {
            verify_reveal(&commit, &votes, &salt, worker.as_deref(), counts.as_deref(), classes, m)
        }
    };
    let result = result.and_then(|text| {
        let mut stdout = std::io::stdout().lock();
        match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
            // a closed pipe (`ptsfd ... | head`) is not a failure
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::new(ErrorCategory::Io, e)),
            _ => Ok(()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {:#}", f.category, f.error);
            ExitCode::from(f.category.exit_code() as u8)
        }
    }
}
