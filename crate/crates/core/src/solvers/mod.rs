//! Meta-solvers that keep the contracted network small: iterative rule
//! injection and a genetic search over restricted sub-problems.

mod genetic;
mod iterative;

pub use genetic::{
    crossover, mutate, random_individual, repair_rules, solve_combined, solve_genetic,
    solve_genetic_with, Evaluator, GenerationStats, GeneticConfig, GeneticReport, Individual,
    Ranked,
};
pub use iterative::{solve_iterative, solve_iterative_with, IterativeConfig};

use serde::Serialize;

use crate::engine::EngineStats;
use crate::error::{Error, Result};
use crate::model::{Assignment, NormalizedInstance};

/// Per-machine argmin of the scaled times, lowest index on ties. Positions
/// follow the instance's machine order.
pub fn unrestricted_minimum(instance: &NormalizedInstance) -> Assignment {
    Assignment(
        restricted_minimum(instance, &[]).expect("no task is excluded"),
    )
}

/// Per-position argmin over the tasks not listed in `forbidden`.
pub(crate) fn restricted_minimum(
    instance: &NormalizedInstance,
    forbidden: &[(usize, usize)],
) -> Result<Vec<usize>> {
    instance
        .scaled_times
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| !forbidden.contains(&(i, *j)))
                .fold(None, |best: Option<(usize, f64)>, (j, &t)| match best {
                    Some((_, b)) if b <= t => best,
                    _ => Some((j, t)),
                })
                .map(|(j, _)| j)
                .ok_or_else(|| Error::Infeasible(format!("every task of position {i} is excluded")))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub generations: usize,
    pub active_rules: usize,
    pub engine: EngineStats,
}

/// A single solver answer in original machine numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Assignment,
    /// Execution time plus fired extra costs.
    pub cost: f64,
    pub stats: SolveStats,
}
