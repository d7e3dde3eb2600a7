//! Approximate policy iteration with KL greedification toward Boltzmann
//! targets, on small fully-known MDPs.
//!
//! The crate has three layers:
//!
//! * ground truth — [`mdp`] computes exact soft values, visitation
//!   distributions, and performance criteria on tabular MDPs;
//! * greedification — [`policy`], [`target`], [`greedify`], and [`optim`]
//!   implement the forward/reverse KL objectives against Boltzmann targets,
//!   their gradient estimators, and the optimizers that consume them;
//! * studies — [`theory`] numerically verifies the policy-improvement
//!   identities and bounds, and [`agent`] runs the replay-buffer training
//!   loop and the maze exploration experiments.

pub mod agent;
pub mod error;
pub mod greedify;
pub mod mdp;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod target;
pub mod theory;

pub use error::{Error, Result};
