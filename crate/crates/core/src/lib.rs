//! Deterministic simulation laboratory for permissioned-ledger consensus.
//!
//! The crate drives distilled replicas of several consensus protocols
//! (leader-based crash-tolerant ordering, BFT three-phase ordering, a
//! deliberately flawed BFT-over-single-echo variant, federated block
//! endorsement, maker/voter chains, diversity mining, and round-threshold
//! voting) inside a single-threaded discrete-event simulator with
//! adversary-controlled scheduling. Property checkers consume the resulting
//! traces and either certify the run or return a witness for the violated
//! property. A bounded exhaustive schedule explorer doubles as the oracle
//! for "there exists / for all schedules" claims.

pub mod adversary;
pub mod broadcast;
pub mod checkers;
pub mod harness;
pub mod protocols;
pub mod quorum;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod types;
