//! Scenario files, end-to-end protocol runs, parameter sweeps and CSV I/O.

mod io;
mod run;
mod scenario;
mod sweep;

pub use io::{
    export_counts, export_votes, ingest_belief, ingest_counts, ingest_votes, parse_belief, parse_counts, parse_votes,
    verify_counts, IngestedVotes, VoteDims,
};
pub use run::{emit_results, run_scenario, run_scenario_seeded, CrossChecks, RoundSummary, RunResult, WorkerResult};
pub use scenario::{AssignmentKind, Behavior, Scenario, StrategySpec, ThresholdSpec, WorkerGroup};
pub use sweep::{apply_axis, summarize, sweep, write_sweep_csv, SweepAxis, SweepPoint, SweepRow, SweepSpec};

use std::path::PathBuf;
use thiserror::Error;

use crate::agents::AgentError;
use crate::analysis::AnalysisError;
use crate::datagen::DataError;
use crate::error::ErrorCategory;
use crate::ledger::LedgerError;
use crate::mechanism::MechanismError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{source_name}{}: {msg}", line.map(|l| format!(", line {l}")).unwrap_or_default())]
    Parse { source_name: String, line: Option<u64>, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("ledger aborted: {source} ({} transactions logged)", log.len())]
    LedgerAbort { source: LedgerError, log: Vec<String> },
}

impl HarnessError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            HarnessError::Io { .. } => ErrorCategory::Io,
            HarnessError::Parse { .. } => ErrorCategory::Parse,
            HarnessError::Invalid(_) | HarnessError::UnknownAxis(_) => ErrorCategory::Validation,
            HarnessError::Mechanism(e) => e.category(),
            HarnessError::Data(e) => e.category(),
            HarnessError::Agent(e) => e.category(),
            HarnessError::Analysis(e) => e.category(),
            HarnessError::LedgerAbort { .. } => ErrorCategory::Ledger,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: Option<u64>, msg: impl Into<String>) -> Self {
        HarnessError::Parse { source_name: source_name.into(), line, msg: msg.into() }
    }
}
