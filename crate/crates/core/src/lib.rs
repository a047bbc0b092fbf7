//! Proof-of-useful-work blockchain where mining a block means training a
//! neural network whose architecture is derived from the block hash.
//!
//! Modules, bottom up:
//! - [`grammar`]: BNF grammars, hash-driven derivation, architecture specs.
//! - [`chain`]: blocks, hashing, ledger, mempool, persistence.
//! - [`model`]: from-scratch 1-D conv / dense networks and their blobs.
//! - [`mining`]: candidate construction, threshold schedule, validation.
//! - [`storage`]: keepers holding replicated models and datasets.
//! - [`governance`]: stake-weighted selection of problems and grammars.
//! - [`sim`]: the deterministic discrete-event simulator.

pub mod grammar;
mod hash;

pub use hash::{Hash512, ParseHashError};
pub mod chain;
pub mod mining;
pub mod governance;
pub mod model;
pub mod sim;
pub mod storage;
