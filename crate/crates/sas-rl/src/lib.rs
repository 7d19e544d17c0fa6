//! Reinforcement learning for MDPs whose available action set is a random
//! subset of a base action set, resampled every step.
//!
//! The crate provides the environment abstraction and concrete domains,
//! masked-softmax policies with linear value baselines, policy-gradient and
//! action-value learners aware of the stochastic action sets, closed-form
//! adaptive baseline weighting, exact enumeration oracles for testing, and
//! an experiment harness with a CLI.

pub mod algorithms;
pub mod core;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod features;
pub mod harness;
pub mod oracle;
pub mod policy;
pub mod variance;
