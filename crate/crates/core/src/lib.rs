//! Exact, approximate and entropy-regularized dynamic programming on tabular MDPs.
//!
//! The crate covers modified policy iteration and its approximate and regularized
//! variants, soft value iteration, advantage learning and conservative value iteration,
//! together with the finite-time error bounds that govern them and a cliff-walking
//! test bed.

pub mod algorithms;
pub mod bounds;
pub mod cliff;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod regularize;
pub mod schedule;

pub use error::{Error, Result};
pub use mdp::{sup_dist, GridLayout, QFn, StochasticPolicy, TabularMDP, ValueFn};
pub use schedule::Schedule;
