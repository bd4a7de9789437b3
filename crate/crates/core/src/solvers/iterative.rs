use serde::{Deserialize, Serialize};

use super::{restricted_minimum, Solution, SolveStats};
use crate::engine::{run_engine, Limits, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::model::{total_cost, Instance, NormalizedInstance};
use crate::rules::RuleGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterativeConfig {
    /// Maximum number of rule-group injections.
    pub max_iterations: usize,
    pub tau: f64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig {
            max_iterations: 100,
            tau: DEFAULT_TAU,
        }
    }
}

impl IterativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

pub fn solve_iterative(instance: &Instance, config: &IterativeConfig) -> Result<Solution> {
    solve_iterative_with(instance, config, &Limits::default())
}

/// Starts from the unconstrained minimum and, while the candidate breaks a
/// rule, injects the lowest-index broken rule (plus every inactive rule that
/// condenses with it) and re-solves over the active rules only.
///
/// Fails with [`Error::NoSolutionFound`] once `max_iterations` injections
/// have not produced a globally feasible candidate.
pub fn solve_iterative_with(
    instance: &Instance,
    config: &IterativeConfig,
    limits: &Limits,
) -> Result<Solution> {
    config.validate()?;
    let norm = NormalizedInstance::prepare(instance);
    let all: Vec<usize> = (0..instance.rules().len()).collect();
    let (positions, stats) = iterate(&norm, &all, &[], config, limits)?;
    let assignment = norm.to_original(&positions);
    let cost = total_cost(instance, &assignment)?;
    Ok(Solution {
        assignment,
        cost,
        stats,
    })
}

/// Iterative scheme over the rule subset `rule_ids` with some tasks
/// excluded. Returns the answer in position order.
pub(crate) fn iterate(
    norm: &NormalizedInstance,
    rule_ids: &[usize],
    forbidden: &[(usize, usize)],
    config: &IterativeConfig,
    limits: &Limits,
) -> Result<(Vec<usize>, SolveStats)> {
    let rules = norm.base.rules();
    let counts = norm.task_counts();
    let mut stats = SolveStats::default();
    let mut active: Vec<usize> = Vec::new();
    let mut candidate = restricted_minimum(norm, forbidden)
        .map_err(|_| Error::NoSolutionFound { iterations: 0 })?;

    loop {
        let violated: Vec<usize> = rule_ids
            .iter()
            .copied()
            .filter(|&k| rules[k].is_violated_by(&candidate))
            .collect();
        if violated.is_empty() {
            stats.active_rules = active.len();
            return Ok((candidate, stats));
        }
        if stats.iterations == config.max_iterations {
            return Err(Error::NoSolutionFound {
                iterations: stats.iterations,
            });
        }
        let Some(&pick) = violated.iter().find(|k| !active.contains(k)) else {
            // the engine only returns candidates feasible for the active set
            return Err(Error::NoSolutionFound {
                iterations: stats.iterations,
            });
        };

        let r = &rules[pick];
        let mut batch = RuleGroup {
            first: r.first_machine(),
            last: r.last_machine(),
            target: r.target_machine,
            rules: vec![pick],
        };
        for &k in rule_ids {
            if k != pick && !active.contains(&k) && batch.accepts(&rules[k], rules, &counts) {
                batch.rules.push(k);
            }
        }
        active.extend(batch.rules.iter().copied());
        active.sort_unstable();
        stats.iterations += 1;
        log::debug!(
            "iteration={} injected={:?} active={}",
            stats.iterations,
            batch.rules,
            active.len()
        );

        let subset = active.iter().map(|&k| norm.scaled_rules[k].clone()).collect();
        let run = match run_engine(norm, subset, forbidden, config.tau, limits) {
            Ok(run) => run,
            Err(Error::Infeasible(_)) => {
                return Err(Error::NoSolutionFound {
                    iterations: stats.iterations,
                })
            }
            Err(e) => return Err(e),
        };
        stats.engine.merge(&run.stats);
        candidate = run.positions;
    }
}
