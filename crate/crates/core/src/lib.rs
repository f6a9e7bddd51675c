//! Baseline manipulation in average-baseline demand response programs.
//!
//! A customer enrolled in a peak-time rebate program is paid for reducing
//! load below a baseline computed from recent non-event days. This crate
//! models the customer's payoff-maximizing consumption as a finite-horizon
//! Markov decision process and solves it exactly by backward induction
//! ([`dp`]) and approximately by a rollout policy ([`rollout`]). The
//! simulation and reporting modules measure how far strategic consumption
//! inflates the baseline.
//!
//! Runnable walkthroughs live in this crate's `examples/` directory:
//!
//! ```bash
//! cargo run --release --example baselines
//! cargo run --release --example fit_utility
//! cargo run --release --example threshold_policy
//! cargo run --release --example scenarios
//! cargo run --release --example exact_dp
//! cargo run --release --example rollout
//! cargo run --release --example manipulation_curve
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod check;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod rollout;
pub mod scenario;
pub mod utility;
pub mod validate;

pub use error::{Error, Result};
