//! Task-to-machine assignment under conditional rules, solved by contracting
//! a tensor network built from an imaginary-time-evolved superposition and
//! diagonal rule layers.
//!
//! The usual entry points are [`solve_full`] for a prepared instance,
//! [`solve_iterative`] and [`solve_genetic`] for larger rule sets, and
//! [`brute_force`] as a reference.

pub mod casegen;
pub mod engine;
pub mod error;
pub mod format;
pub mod model;
pub mod oracle;
pub mod rules;
pub mod solvers;
pub mod tensor;

pub use engine::{run_engine, solve_full, Limits, DEFAULT_TAU};
pub use error::{Error, Result};
pub use model::{check_rules, cost, total_cost, Assignment, Instance, NormalizedInstance, Rule};
pub use oracle::{brute_force, OracleReport};
pub use solvers::{
    solve_combined, solve_genetic, solve_iterative, GeneticConfig, IterativeConfig, Solution,
};
