//! Experiment driver library behind the `klgreed` binary: one module per
//! subcommand, plus config and output plumbing. The binary is a thin
//! argument parser over these.

pub mod bandit_surface;
pub mod config;
pub mod maze_cmd;
pub mod out;
pub mod switch_stay_cmd;
pub mod theory_cmd;
