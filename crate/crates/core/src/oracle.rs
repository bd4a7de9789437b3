//! Exhaustive enumeration, used as ground truth on small instances.

use crate::error::{Error, Result};
use crate::model::{Assignment, Instance};

/// Largest state space `brute_force` will enumerate by default.
pub const DEFAULT_STATE_LIMIT: u128 = 10_000_000;

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Lexicographically smallest minimum-cost feasible assignment.
    pub optimum: Option<Assignment>,
    /// Execution time plus fired extra costs; infinite when infeasible.
    pub optimal_cost: f64,
    pub optima_count: usize,
    /// Normalized-cost distance from the optimum to the next best feasible
    /// assignment; zero under ties, infinite with a single feasible state.
    pub runner_up_gap: f64,
    pub feasible_count: u64,
}

/// Visits every assignment in lexicographic order.
fn for_each_assignment(task_counts: &[usize], mut visit: impl FnMut(&[usize])) {
    let m = task_counts.len();
    let mut x = vec![0usize; m];
    loop {
        visit(&x);
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            x[i] += 1;
            if x[i] < task_counts[i] {
                break;
            }
            x[i] = 0;
        }
    }
}

fn guard(instance: &Instance, limit: u128) -> Result<()> {
    let states = instance.state_count();
    if states > limit {
        return Err(Error::SizeGuard { states, limit });
    }
    Ok(())
}

/// Total cost and feasibility of `x` under every rule.
fn evaluate(instance: &Instance, x: &[usize]) -> (f64, bool) {
    let mut total: f64 = x.iter().zip(instance.times()).map(|(&t, row)| row[t]).sum();
    for rule in instance.rules() {
        if rule.fires(x) {
            if !rule.allows(x[rule.target_machine]) {
                return (total, false);
            }
            total += rule.extra_cost.unwrap_or(0.0);
        }
    }
    (total, true)
}

fn spread(instance: &Instance) -> (f64, f64) {
    let c_min: f64 = instance
        .times()
        .iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    let c_max: f64 = instance
        .times()
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    (c_min, c_max)
}

pub fn brute_force(instance: &Instance) -> Result<OracleReport> {
    brute_force_with_limit(instance, DEFAULT_STATE_LIMIT)
}

pub fn brute_force_with_limit(instance: &Instance, limit: u128) -> Result<OracleReport> {
    guard(instance, limit)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut second = f64::INFINITY;
    let mut optima_count = 0;
    let mut feasible_count = 0u64;
    for_each_assignment(&instance.task_counts(), |x| {
        let (c, ok) = evaluate(instance, x);
        if !ok {
            return;
        }
        feasible_count += 1;
        match &mut best {
            None => {
                best = Some((c, x.to_vec()));
                optima_count = 1;
            }
            Some((b, bx)) => {
                if c < *b - TIE_TOLERANCE {
                    second = second.min(*b);
                    *b = c;
                    *bx = x.to_vec();
                    optima_count = 1;
                } else {
                    if (c - *b).abs() <= TIE_TOLERANCE {
                        optima_count += 1;
                    }
                    second = second.min(c);
                }
            }
        }
    });
    let (c_min, c_max) = spread(instance);
    let scale = if c_max > c_min { 2.0 / (c_max - c_min) } else { 1.0 };
    Ok(match best {
        None => OracleReport {
            optimum: None,
            optimal_cost: f64::INFINITY,
            optima_count: 0,
            runner_up_gap: f64::INFINITY,
            feasible_count,
        },
        Some((c, x)) => OracleReport {
            optimum: Some(Assignment(x)),
            optimal_cost: c,
            optima_count,
            runner_up_gap: if second.is_finite() {
                ((second - c) * scale).max(0.0)
            } else {
                f64::INFINITY
            },
            feasible_count,
        },
    })
}

/// `sum over feasible x with x[q] = j of exp(-tau * normalized_cost(x))`.
pub fn brute_force_marginal(instance: &Instance, tau: f64, q: usize) -> Result<Vec<f64>> {
    guard(instance, DEFAULT_STATE_LIMIT)?;
    let counts = instance.task_counts();
    if q >= counts.len() {
        return Err(Error::InvalidAssignment(format!("machine {q} out of range")));
    }
    let (c_min, c_max) = spread(instance);
    let mut out = vec![0.0; counts[q]];
    for_each_assignment(&counts, |x| {
        let (c, ok) = evaluate(instance, x);
        if !ok {
            return;
        }
        let normalized = if c_max > c_min {
            (2.0 * c - (c_max + c_min)) / (c_max - c_min)
        } else {
            // every assignment has the same base time; only extras remain
            c - c_min
        };
        out[x[q]] += (-tau * normalized).exp();
    });
    Ok(out)
}
