//! Deterministic replica of the federation contract.
//!
//! Life cycle: workers on the roster register with the required deposit
//! during `Setup`; the owner opens `Commit`; each worker posts
//! `SHA3-256(canonical_encode(votes, label_count, salt))`; once everyone has
//! committed or the commit budget elapses the contract moves to `Reveal`,
//! where payloads are checked against their commitments; once every
//! committed worker has resolved or the reveal budget elapses it moves to
//! `Settle`, and [`Ledger::finalize`] computes rewards, payouts and the
//! aggregated labels, then closes the contract.
//!
//! Time is a logical tick counter advanced by [`Ledger::advance_tick`].
//! Transactions are applied strictly in call order.

mod encoding;
mod settlement;

pub use encoding::{
    canonical_encode, commitment_hash, sha3_256, Digest32, Salt, ABSTAIN_CODE, ENCODING_VERSION,
    MAX_CLASSES,
};
pub use settlement::settle_payouts;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::error::ErrorCategory;
use crate::mechanism::{
    ptsfd, ClassLabel, LabelCount, MechanismError, MechanismParams, RewardReport, Vote,
    VoteMatrix,
};

/// Opaque worker identifier (a public key or account name).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub String);

impl Address {
    pub fn new(s: impl Into<String>) -> Self {
        Address(s.into())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Commit,
    Reveal,
    Settle,
    Closed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkerStatus {
    Registered,
    Committed,
    Revealed,
    Slashed,
    Settled,
}

impl fmt::Display for WorkerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    pub hash: Digest32,
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reveal {
    pub votes: Vec<Vote>,
    pub label_count: LabelCount,
    pub salt: Salt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerAccount {
    pub address: Address,
    pub deposit: u64,
    pub status: WorkerStatus,
    pub commitment: Option<Commitment>,
    pub reveal: Option<Reveal>,
    /// Set when a reveal failed the hash check. Terminal: the worker is
    /// treated as a non-revealer.
    pub tamper_rejected: bool,
}

impl WorkerAccount {
    /// Committed and no longer able to change its reveal outcome.
    fn reveal_resolved(&self) -> bool {
        self.commitment.is_some()
            && (self.tamper_rejected
                || matches!(self.status, WorkerStatus::Revealed | WorkerStatus::Slashed | WorkerStatus::Settled))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseClock {
    pub phase: Phase,
    pub tick: u64,
    pub phase_started_at: u64,
    pub t_max_commit: u64,
    pub t_max_reveal: u64,
}

impl PhaseClock {
    pub fn elapsed(&self) -> u64 {
        self.tick - self.phase_started_at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub roster: BTreeSet<Address>,
    pub required_deposit: u64,
    pub m_samples: usize,
    pub n_classes: usize,
    pub t_max_commit: u64,
    pub t_max_reveal: u64,
    /// Currency units per unit of reward score above or below the mean.
    pub payout_scale: f64,
    /// Accept registrations while the commit phase is open.
    pub late_registration: bool,
}

/// Outcome of settlement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    /// Payout per registered address; zero for slashed and forfeited workers.
    pub payouts: BTreeMap<Address, u64>,
    /// Committed workers that failed to reveal a valid payload.
    pub slashed: BTreeSet<Address>,
    /// Registered workers that never committed; their deposit stays in the pool.
    pub forfeited: BTreeSet<Address>,
    pub pool_in: u64,
    pub pool_out: u64,
    /// `pool_in - pool_out`: slashed deposits, forfeits and rounding dust.
    pub retained: u64,
    /// Revealed workers, in registration order; row `i` of the reward report.
    pub participants: Vec<Address>,
    /// `None` when the federation aborted.
    pub rewards: Option<RewardReport>,
    pub aborted: bool,
}

impl SettlementReport {
    pub fn aggregated(&self) -> Option<&[Option<ClassLabel>]> {
        self.rewards.as_ref().map(|r| r.aggregated.as_slice())
    }
}

/// One line of the audit log: `tick,op,address,args-digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tick: u64,
    pub op: String,
    pub address: String,
    pub args_digest: Digest32,
}

impl fmt::Display for TxRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.tick, self.op, self.address, hex::encode(self.args_digest))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("{0} is not part of the federation roster")]
    Unauthorized(Address),
    #[error("deposit mismatch: required {required}, got {got}")]
    DepositMismatch { required: u64, got: u64 },
    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("{0} is not registered")]
    NotRegistered(Address),
    #[error("{op} not allowed in phase {phase}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("{0} already committed")]
    AlreadyCommitted(Address),
    #[error("{0} has no commitment")]
    NotCommitted(Address),
    #[error("{0} already revealed or was rejected")]
    AlreadyResolved(Address),
    #[error("reveal by {0} does not match its commitment")]
    TamperRejected(Address),
    #[error("{0} revealed a label count that does not match its votes; deposit slashed")]
    CountMismatch(Address),
    #[error("reveal by {address} malformed, deposit slashed: {reason}")]
    MalformedReveal { address: Address, reason: String },
    #[error("encoding range error: {0}")]
    EncodingRange(String),
    #[error("federation failed: only {revealed} worker(s) revealed; revealed deposits refunded")]
    FederationFailure { revealed: usize },
    #[error("contract is closed")]
    Closed,
    #[error("reward computation failed: {0}")]
    Mechanism(#[from] MechanismError),
}

impl LedgerError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            LedgerError::TamperRejected(_) => ErrorCategory::Rejected,
            LedgerError::EncodingRange(_) | LedgerError::MalformedReveal { .. } => ErrorCategory::Validation,
            _ => ErrorCategory::Ledger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    config: LedgerConfig,
    clock: PhaseClock,
    accounts: Vec<WorkerAccount>,
    pool: u64,
    log: Vec<TxRecord>,
    settlement: Option<SettlementReport>,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Self {
        let clock = PhaseClock {
            phase: Phase::Setup,
            tick: 0,
            phase_started_at: 0,
            t_max_commit: config.t_max_commit,
            t_max_reveal: config.t_max_reveal,
        };
        Ledger { config, clock, accounts: Vec::new(), pool: 0, log: Vec::new(), settlement: None }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.clock.phase
    }

    pub fn clock(&self) -> &PhaseClock {
        &self.clock
    }

    pub fn pool(&self) -> u64 {
        self.pool
    }

    /// Accounts in registration order.
    pub fn accounts(&self) -> &[WorkerAccount] {
        &self.accounts
    }

    pub fn account(&self, address: &Address) -> Option<&WorkerAccount> {
        self.accounts.iter().find(|a| &a.address == address)
    }

    pub fn log(&self) -> &[TxRecord] {
        &self.log
    }

    pub fn log_lines(&self) -> Vec<String> {
        self.log.iter().map(ToString::to_string).collect()
    }

    pub fn settlement(&self) -> Option<&SettlementReport> {
        self.settlement.as_ref()
    }

    fn index_of(&self, address: &Address) -> Option<usize> {
        self.accounts.iter().position(|a| &a.address == address)
    }

    fn record(&mut self, op: &str, address: &str, args: &[u8]) {
        self.log.push(TxRecord {
            tick: self.clock.tick,
            op: op.to_owned(),
            address: address.to_owned(),
            args_digest: sha3_256(args),
        });
    }

    fn enter(&mut self, phase: Phase) {
        self.clock.phase = phase;
        self.clock.phase_started_at = self.clock.tick;
    }

    /// Applies every transition whose condition currently holds.
    fn apply_transitions(&mut self) {
        loop {
            let next = match self.clock.phase {
                Phase::Commit => {
                    let all_committed = !self.accounts.is_empty()
                        && self.accounts.iter().all(|a| a.commitment.is_some());
                    (all_committed || self.clock.elapsed() >= self.clock.t_max_commit)
                        .then_some(Phase::Reveal)
                }
                Phase::Reveal => {
                    let all_resolved = self
                        .accounts
                        .iter()
                        .filter(|a| a.commitment.is_some())
                        .all(WorkerAccount::reveal_resolved);
                    (all_resolved || self.clock.elapsed() >= self.clock.t_max_reveal)
                        .then_some(Phase::Settle)
                }
                Phase::Setup | Phase::Settle | Phase::Closed => None,
            };
            match next {
                Some(phase) => self.enter(phase),
                None => break,
            }
        }
    }

    pub fn register(&mut self, address: &Address, deposit: u64) -> Result<(), LedgerError> {
        let open = self.clock.phase == Phase::Setup
            || (self.config.late_registration && self.clock.phase == Phase::Commit);
        if !open {
            return Err(LedgerError::WrongPhase { op: "register", phase: self.clock.phase });
        }
        if !self.config.roster.contains(address) {
            return Err(LedgerError::Unauthorized(address.clone()));
        }
        if deposit != self.config.required_deposit {
            return Err(LedgerError::DepositMismatch { required: self.config.required_deposit, got: deposit });
        }
        if self.index_of(address).is_some() {
            return Err(LedgerError::AlreadyRegistered(address.clone()));
        }
        self.accounts.push(WorkerAccount {
            address: address.clone(),
            deposit,
            status: WorkerStatus::Registered,
            commitment: None,
            reveal: None,
            tamper_rejected: false,
        });
        self.pool += deposit;
        self.record("register", &address.0, &deposit.to_le_bytes());
        Ok(())
    }

    /// Closes registration and opens the commit phase.
    pub fn open_commit(&mut self) -> Result<(), LedgerError> {
        if self.clock.phase != Phase::Setup {
            return Err(LedgerError::WrongPhase { op: "open_commit", phase: self.clock.phase });
        }
        self.enter(Phase::Commit);
        self.record("open_commit", "contract", &[]);
        self.apply_transitions();
        Ok(())
    }

    pub fn commit(&mut self, address: &Address, hash: Digest32) -> Result<(), LedgerError> {
        if self.clock.phase != Phase::Commit {
            return Err(LedgerError::WrongPhase { op: "commit", phase: self.clock.phase });
        }
        let idx = self.index_of(address).ok_or_else(|| LedgerError::NotRegistered(address.clone()))?;
        let tick = self.clock.tick;
        let account = &mut self.accounts[idx];
        if account.commitment.is_some() {
            return Err(LedgerError::AlreadyCommitted(address.clone()));
        }
        account.commitment = Some(Commitment { hash, submitted_at: tick });
        account.status = WorkerStatus::Committed;
        self.record("commit", &address.0, &hash);
        self.apply_transitions();
        Ok(())
    }

    /// Checks a payload against the stored commitment.
    ///
    /// A hash mismatch is terminal for the worker. A payload whose label
    /// count disagrees with its votes slashes the worker immediately; the
    /// error is returned after the slash is recorded.
    pub fn reveal(
        &mut self,
        address: &Address,
        votes: Vec<Vote>,
        label_count: LabelCount,
        salt: Salt,
    ) -> Result<(), LedgerError> {
        if self.clock.phase != Phase::Reveal {
            return Err(LedgerError::WrongPhase { op: "reveal", phase: self.clock.phase });
        }
        let idx = self.index_of(address).ok_or_else(|| LedgerError::NotRegistered(address.clone()))?;
        let account = &self.accounts[idx];
        let Some(commitment) = account.commitment.as_ref() else {
            return Err(LedgerError::NotCommitted(address.clone()));
        };
        if account.reveal_resolved() {
            return Err(LedgerError::AlreadyResolved(address.clone()));
        }

        let bytes = canonical_encode(&votes, &label_count, &salt);
        let matches = match &bytes {
            Ok(b) => sha3_256(b) == commitment.hash,
            Err(_) => false,
        };
        if !matches {
            self.accounts[idx].tamper_rejected = true;
            self.record("reveal_rejected", &address.0, bytes.as_deref().unwrap_or(&[]));
            self.apply_transitions();
            return Err(LedgerError::TamperRejected(address.clone()));
        }
        let bytes = bytes.expect("matched payload encodes");
        let shape_ok = votes.len() == self.config.m_samples && label_count.n_classes() == self.config.n_classes;
        let failure = match crate::mechanism::label_count(&votes, self.config.n_classes) {
            Ok(_) if !shape_ok => Some(LedgerError::MalformedReveal {
                address: address.clone(),
                reason: format!(
                    "expected {} votes over {} classes, got {} over {}",
                    self.config.m_samples,
                    self.config.n_classes,
                    votes.len(),
                    label_count.n_classes()
                ),
            }),
            Ok(recount) if recount != label_count => Some(LedgerError::CountMismatch(address.clone())),
            Ok(_) => None,
            Err(e) => Some(LedgerError::MalformedReveal { address: address.clone(), reason: e.to_string() }),
        };

        let account = &mut self.accounts[idx];
        account.reveal = Some(Reveal { votes, label_count, salt });
        match failure {
            None => {
                account.status = WorkerStatus::Revealed;
                self.record("reveal", &address.0, &bytes);
                self.apply_transitions();
                Ok(())
            }
            Some(err) => {
                account.status = WorkerStatus::Slashed;
                self.record("slash", &address.0, &bytes);
                self.apply_transitions();
                Err(err)
            }
        }
    }

    pub fn advance_tick(&mut self) -> Result<(), LedgerError> {
        if self.clock.phase == Phase::Closed {
            return Err(LedgerError::Closed);
        }
        self.clock.tick += 1;
        self.apply_transitions();
        Ok(())
    }

    /// Advances ticks until the contract reaches `Settle` (or a phase that
    /// cannot progress by time alone).
    pub fn run_until_settle(&mut self) -> Result<(), LedgerError> {
        while matches!(self.clock.phase, Phase::Commit | Phase::Reveal) {
            self.advance_tick()?;
        }
        Ok(())
    }

    /// Slashes non-revealers, computes rewards over revealed workers, pays
    /// out and closes the contract.
    ///
    /// With fewer than two revealed workers the federation aborts: revealed
    /// workers get their deposits back, slashing still applies, the
    /// settlement is stored and `FederationFailure` is returned.
    pub fn finalize(&mut self, params: &MechanismParams) -> Result<&SettlementReport, LedgerError> {
        if self.clock.phase != Phase::Settle {
            return Err(LedgerError::WrongPhase { op: "finalize", phase: self.clock.phase });
        }
        params.validate()?;

        let mut slashed = BTreeSet::new();
        let mut forfeited = BTreeSet::new();
        let mut participants = Vec::new();
        for account in &mut self.accounts {
            match account.status {
                WorkerStatus::Registered => {
                    forfeited.insert(account.address.clone());
                }
                WorkerStatus::Committed | WorkerStatus::Slashed => {
                    account.status = WorkerStatus::Slashed;
                    slashed.insert(account.address.clone());
                }
                WorkerStatus::Revealed => participants.push(account.address.clone()),
                WorkerStatus::Settled => unreachable!("settled before finalize"),
            }
        }

        let mut payouts: BTreeMap<Address, u64> =
            self.accounts.iter().map(|a| (a.address.clone(), 0)).collect();
        let revealed: Vec<&WorkerAccount> =
            self.accounts.iter().filter(|a| a.status == WorkerStatus::Revealed).collect();
        let aborted = revealed.len() < 2;

        let rewards = if aborted {
            for account in &revealed {
                payouts.insert(account.address.clone(), account.deposit);
            }
            None
        } else {
            let rows: Vec<Vec<Vote>> =
                revealed.iter().map(|a| a.reveal.as_ref().expect("revealed").votes.clone()).collect();
            let counts: Vec<LabelCount> =
                revealed.iter().map(|a| a.reveal.as_ref().expect("revealed").label_count.clone()).collect();
            let votes = VoteMatrix::from_rows(rows)?;
            let report = ptsfd(&votes, &counts, params, false)?;
            let deposits: Vec<u64> = revealed.iter().map(|a| a.deposit).collect();
            let amounts = settle_payouts(&deposits, &report.reward_scores, self.config.payout_scale);
            for (account, amount) in revealed.iter().zip(amounts) {
                payouts.insert(account.address.clone(), amount);
            }
            Some(report)
        };

        if !aborted {
            for account in &mut self.accounts {
                if account.status == WorkerStatus::Revealed {
                    account.status = WorkerStatus::Settled;
                }
            }
        }

        let pool_in = self.pool;
        let pool_out: u64 = payouts.values().sum();
        let report = SettlementReport {
            payouts,
            slashed,
            forfeited,
            pool_in,
            pool_out,
            retained: pool_in - pool_out,
            participants,
            rewards,
            aborted,
        };
        let mut args = Vec::new();
        args.extend_from_slice(&params.lambda.to_le_bytes());
        args.extend_from_slice(&params.beta.to_le_bytes());
        args.extend_from_slice(&pool_out.to_le_bytes());
        self.record(if aborted { "abort" } else { "finalize" }, "contract", &args);
        self.pool = report.retained;
        self.settlement = Some(report);
        self.enter(Phase::Closed);

        if aborted {
            return Err(LedgerError::FederationFailure { revealed: revealed_count(&self.accounts) });
        }
        Ok(self.settlement.as_ref().expect("just stored"))
    }
}

fn revealed_count(accounts: &[WorkerAccount]) -> usize {
    accounts
        .iter()
        .filter(|a| a.reveal.is_some() && a.status != WorkerStatus::Slashed)
        .count()
}
