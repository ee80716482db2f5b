//! Tabular federated Q-learning with compressed uploads.
//!
//! The crate covers the whole pipeline of a communication-efficient federated
//! Q-learning study on grid-world MDPs with generative-model access:
//!
//! * [`grid`] and [`mdp`]: map parsing, maze MDPs, synchronous sampling.
//! * [`bellman`]: exact/empirical Bellman operators and the `Q*` oracle.
//! * [`compression`]: Top-K, Sparsified-K and error-feedback memory.
//! * [`engine`]: the federated training loop and per-round metrics.
//! * [`analysis`]: convergence-bound evaluators and payload bit accounting.
//! * [`harness`]: manifests, sweeps and CSV/JSON output used by the CLI.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bellman;
pub mod compression;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harness;
pub mod mdp;
pub mod qtable;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{NoiseSpec, TabularMdp};
pub use qtable::{Policy, QTable};
pub use rng::{RngStream, StreamPath};
