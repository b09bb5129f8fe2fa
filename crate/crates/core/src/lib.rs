//! Reward-based 1-bit compressed federated distillation, simulated end to end.
//!
//! Workers predict labels for a shared public dataset, quantize them to a
//! single class index, bind themselves to the result with a hash commitment
//! and reveal it to a contract replica. The contract aggregates labels by
//! majority vote and pays each worker according to a peer-consistency score
//! that rewards agreement with peers, scaled by the inverse frequency of the
//! agreed label and offset by a penalty.
//!
//! Module map:
//!
//! * [`mechanism`]: quantization, label counts, the peer-consistency reward
//!   and majority-vote aggregation (float and fixed-point).
//! * [`ledger`]: the deterministic contract state machine with deposits,
//!   commit-reveal, slashing and settlement.
//! * [`agents`]: synthetic classifiers and the honest / heuristic / strategic
//!   reporting strategies.
//! * [`datagen`]: class priors, Dirichlet partitions, public datasets and
//!   sample assignment.
//! * [`analysis`]: closed-form expected profits, the self-predicting
//!   condition, the honesty-optimality check and cost accounting.
//! * [`harness`]: scenario files, end-to-end runs, sweeps and CSV I/O.

pub mod agents;
pub mod analysis;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod mechanism;
pub mod rng;
pub mod stats;

pub use error::ErrorCategory;
pub use mechanism::{
    label_count, majority_vote, peer_density_excluding, ptsfd, quantize_1bit, reward_sample,
    tau0, ClassLabel, LabelCount, MechanismError, MechanismParams, PeerDensity, RewardReport,
    SoftPrediction, Vote, VoteMatrix,
};
