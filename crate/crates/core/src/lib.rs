//! Average-reward reinforcement learning with delayed, composite and
//! partially anonymous rewards.
//!
//! The crate is organised bottom-up: [`mdp`] holds the true model and exact
//! solvers, [`channel`] the delayed reward generation, [`sim`] the interaction
//! loop, [`evi`] the optimistic planner, [`learner`] the epoch-based learner,
//! and [`harness`] the experiments and invariant probes. [`config`] and
//! [`cli`] wire them to TOML files and the `ducrl` binary.

pub mod channel;
pub mod cli;
pub mod config;
pub mod evi;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod rng;
pub mod sim;
