//! Simulation toolkit for binary distributed detection in sensor networks
//! under Byzantine data falsification.
//!
//! A fusion center collects one-bit reports from `n` nodes over `m` epochs
//! and must recover the underlying binary state sequence while a fraction of
//! the nodes lies strategically. This crate provides, as composable library
//! modules:
//!
//! - [`model`] — the generative model: state priors, local sensing channels,
//!   Byzantine placement priors, and report sampling;
//! - [`fusion`] — classic hard fusion rules (AND/OR/k-out-of-n/majority),
//!   their analytic performance, and the weighted log-likelihood-ratio rule
//!   for heterogeneous sensors;
//! - [`isolation`] — reputation-based defences that score nodes over an
//!   observation window and isolate outliers before fusing the survivors;
//! - [`optimal`] — the jointly optimal (MAP) sequence decision under each
//!   Byzantine prior, with the transfer-matrix style sum over placements;
//! - [`mp`] — a loopy sum-product message-passing approximation of the MAP
//!   rule with per-iteration cost linear in `n` and `m`;
//! - [`consensus`] — fully distributed detection: linear average consensus
//!   on censored analog measurements under data-injection attack;
//! - [`game`] — zero-sum game machinery: Monte-Carlo payoff estimation,
//!   iterated elimination of dominated strategies, pure equilibria, and an
//!   LP solver for mixed equilibria;
//! - [`harness`] — reproducible experiment drivers behind TOML configs,
//!   with CSV/JSON artifacts and deterministic, thread-count-independent
//!   output.
//!
//! Everything randomized is driven by explicit seeds through [`rng`], so any
//! experiment is reproducible bit-for-bit.

pub mod consensus;
pub mod error;
pub mod fusion;
pub mod game;
pub mod isolation;
pub mod model;
pub mod mp;
pub mod optimal;
pub mod rng;

pub use error::{Error, Result};
