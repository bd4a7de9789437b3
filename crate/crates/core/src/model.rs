//! Problem representation: machines, tasks, execution times and conditional
//! rules, together with cost evaluation, normalization and machine ordering.

use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A conditional constraint: when every `(machine, task)` condition holds,
/// the target machine must run one of `target_tasks`.
///
/// A rule carrying an `extra_cost` additionally charges that time (in the
/// instance's time units) whenever it fires.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<(usize, usize)>,
    pub target_machine: usize,
    /// Sorted, deduplicated.
    pub target_tasks: Vec<usize>,
    pub extra_cost: Option<f64>,
}

impl Rule {
    pub fn new(
        conditions: Vec<(usize, usize)>,
        target_machine: usize,
        mut target_tasks: Vec<usize>,
        extra_cost: Option<f64>,
    ) -> Self {
        target_tasks.sort_unstable();
        target_tasks.dedup();
        Rule {
            conditions,
            target_machine,
            target_tasks,
            extra_cost,
        }
    }

    /// Single condition, single target task.
    pub fn simple(cond: (usize, usize), target: (usize, usize)) -> Self {
        Rule::new(vec![cond], target.0, vec![target.1], None)
    }

    /// True when every condition holds under `tasks`.
    pub fn fires(&self, tasks: &[usize]) -> bool {
        self.conditions.iter().all(|&(m, t)| tasks[m] == t)
    }

    pub fn allows(&self, task: usize) -> bool {
        self.target_tasks.binary_search(&task).is_ok()
    }

    pub fn is_violated_by(&self, tasks: &[usize]) -> bool {
        self.fires(tasks) && !self.allows(tasks[self.target_machine])
    }

    pub fn is_soft(&self) -> bool {
        self.extra_cost.is_some_and(|c| c > 0.0)
    }

    /// Machines mentioned by the rule, conditions first, target last.
    pub fn machines(&self) -> impl Iterator<Item = usize> + '_ {
        self.conditions
            .iter()
            .map(|&(m, _)| m)
            .chain(std::iter::once(self.target_machine))
    }

    pub fn first_machine(&self) -> usize {
        self.machines().min().expect("rule mentions at least one machine")
    }

    pub fn last_machine(&self) -> usize {
        self.machines().max().expect("rule mentions at least one machine")
    }

    pub fn condition_on(&self, machine: usize) -> Option<usize> {
        self.conditions
            .iter()
            .find(|&&(m, _)| m == machine)
            .map(|&(_, t)| t)
    }

    fn condition_key(&self) -> Vec<(usize, usize)> {
        let mut key = self.conditions.clone();
        key.sort_unstable();
        key
    }

    fn validate(&self, task_counts: &[usize]) -> std::result::Result<(), String> {
        let m = task_counts.len();
        if self.conditions.is_empty() {
            return Err("rule has no conditions".into());
        }
        if self.target_machine >= m {
            return Err(format!("target machine {} out of range", self.target_machine));
        }
        for (k, &(cm, ct)) in self.conditions.iter().enumerate() {
            if cm >= m {
                return Err(format!("condition machine {cm} out of range"));
            }
            if ct >= task_counts[cm] {
                return Err(format!("condition task {ct} out of range for machine {cm}"));
            }
            if cm == self.target_machine {
                return Err(format!("machine {cm} is both condition and target"));
            }
            if self.conditions[..k].iter().any(|&(o, _)| o == cm) {
                return Err(format!("machine {cm} appears twice among conditions"));
            }
        }
        if self.target_tasks.is_empty() {
            return Err("rule has an empty target task set".into());
        }
        let pt = task_counts[self.target_machine];
        if let Some(&t) = self.target_tasks.iter().find(|&&t| t >= pt) {
            return Err(format!(
                "target task {t} out of range for machine {}",
                self.target_machine
            ));
        }
        if let Some(c) = self.extra_cost {
            if !c.is_finite() || c < 0.0 {
                return Err(format!("extra cost {c} must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Two rules conflict when the same condition set sends the same target
/// machine to disjoint task sets.
pub fn rules_compatible(a: &Rule, b: &Rule) -> bool {
    if a.target_machine != b.target_machine || a.condition_key() != b.condition_key() {
        return true;
    }
    a.target_tasks.iter().any(|t| b.allows(*t))
}

/// One chosen task per machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn tasks(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// A validated scheduling instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    times: Vec<Vec<f64>>,
    rules: Vec<Rule>,
}

impl Instance {
    pub fn new(times: Vec<Vec<f64>>, rules: Vec<Rule>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInstance("no machines".into()));
        }
        for (i, row) in times.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidInstance(format!("machine {i} has no tasks")));
            }
            if let Some(t) = row.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "machine {i} has invalid time {t}"
                )));
            }
        }
        let counts: Vec<usize> = times.iter().map(Vec::len).collect();
        for (k, rule) in rules.iter().enumerate() {
            rule.validate(&counts)
                .map_err(|e| Error::InvalidInstance(format!("rule {k}: {e}")))?;
        }
        Ok(Instance { times, rules })
    }

    pub fn machine_count(&self) -> usize {
        self.times.len()
    }

    pub fn task_counts(&self) -> Vec<usize> {
        self.times.iter().map(Vec::len).collect()
    }

    pub fn times(&self) -> &[Vec<f64>] {
        &self.times
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Number of distinct assignments, saturating.
    pub fn state_count(&self) -> u128 {
        self.times
            .iter()
            .fold(1u128, |acc, row| acc.saturating_mul(row.len() as u128))
    }

    pub fn validate_assignment(&self, x: &Assignment) -> Result<()> {
        if x.0.len() != self.machine_count() {
            return Err(Error::InvalidAssignment(format!(
                "expected {} tasks, got {}",
                self.machine_count(),
                x.0.len()
            )));
        }
        for (i, (&t, row)) in x.0.iter().zip(&self.times).enumerate() {
            if t >= row.len() {
                return Err(Error::InvalidAssignment(format!(
                    "task {t} out of range for machine {i} ({} tasks)",
                    row.len()
                )));
            }
        }
        Ok(())
    }

    /// Rewrites the instance so that position `p` holds original machine
    /// `order[p]`.
    pub fn permuted(&self, order: &[usize]) -> Instance {
        let inverse = invert(order);
        let times = order.iter().map(|&m| self.times[m].clone()).collect();
        let rules = self
            .rules
            .iter()
            .map(|r| Rule {
                conditions: r
                    .conditions
                    .iter()
                    .map(|&(m, t)| (inverse[m], t))
                    .collect(),
                target_machine: inverse[r.target_machine],
                target_tasks: r.target_tasks.clone(),
                extra_cost: r.extra_cost,
            })
            .collect();
        Instance { times, rules }
    }
}

pub fn invert(order: &[usize]) -> Vec<usize> {
    let mut inverse = vec![0; order.len()];
    for (p, &m) in order.iter().enumerate() {
        inverse[m] = p;
    }
    inverse
}

/// Total execution time of an assignment.
pub fn cost(instance: &Instance, x: &Assignment) -> Result<f64> {
    instance.validate_assignment(x)?;
    Ok(x.0
        .iter()
        .zip(instance.times())
        .map(|(&t, row)| row[t])
        .sum())
}

/// Execution time plus the extra cost of every soft rule that fires.
pub fn total_cost(instance: &Instance, x: &Assignment) -> Result<f64> {
    let base = cost(instance, x)?;
    let extra: f64 = instance
        .rules()
        .iter()
        .filter(|r| r.fires(&x.0))
        .filter_map(|r| r.extra_cost)
        .sum();
    Ok(base + extra)
}

/// Indices of the rules `x` violates; empty means feasible.
pub fn check_rules(x: &Assignment, rules: &[Rule]) -> Vec<usize> {
    rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_violated_by(&x.0))
        .map(|(k, _)| k)
        .collect()
}

/// Machine order placing the machines with the most rule participations in
/// the centre. Entry `p` is the original machine placed at position `p`.
pub fn order_machines(instance: &Instance) -> Vec<usize> {
    let m = instance.machine_count();
    let mut counts = vec![0usize; m];
    for rule in instance.rules() {
        for machine in rule.machines() {
            counts[machine] += 1;
        }
    }
    let mut by_count: Vec<usize> = (0..m).collect();
    by_count.sort_by_key(|&i| (counts[i], Reverse(i)));

    let mut order = vec![0; m];
    let (mut left, mut right) = (0, m);
    for (k, machine) in by_count.into_iter().enumerate() {
        if k % 2 == 0 {
            order[left] = machine;
            left += 1;
        } else {
            right -= 1;
            order[right] = machine;
        }
    }
    order
}

/// An instance rescaled so every assignment's cost lies in [-1, 1].
#[derive(Debug, Clone)]
pub struct NormalizedInstance {
    /// The instance in position order.
    pub base: Instance,
    pub scaled_times: Vec<Vec<f64>>,
    /// `base.rules` with extra costs expressed on the normalized scale.
    pub scaled_rules: Vec<Rule>,
    /// Position -> original machine.
    pub permutation: Vec<usize>,
    pub c_min: f64,
    pub c_max: f64,
    /// Factor converting a raw time difference into a normalized one.
    pub scale: f64,
}

impl NormalizedInstance {
    /// Orders the machines, then normalizes.
    pub fn prepare(instance: &Instance) -> Self {
        let order = order_machines(instance);
        Self::with_order(instance, order)
    }

    pub fn with_order(instance: &Instance, order: Vec<usize>) -> Self {
        let base = instance.permuted(&order);
        let mins: Vec<f64> = base
            .times()
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let maxs: Vec<f64> = base
            .times()
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let c_min: f64 = mins.iter().sum();
        let c_max: f64 = maxs.iter().sum();
        let span = c_max - c_min;
        let degenerate = span <= 0.0;
        let scaled_times = base
            .times()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|&t| {
                        if degenerate {
                            0.0
                        } else {
                            (2.0 * t - (mins[i] + maxs[i])) / span
                        }
                    })
                    .collect()
            })
            .collect();
        let scale = if degenerate { 1.0 } else { 2.0 / span };
        let scaled_rules = base
            .rules()
            .iter()
            .map(|r| Rule {
                extra_cost: r.extra_cost.map(|c| c * scale),
                ..r.clone()
            })
            .collect();
        NormalizedInstance {
            base,
            scaled_times,
            scaled_rules,
            permutation: order,
            c_min,
            c_max,
            scale,
        }
    }

    pub fn task_counts(&self) -> Vec<usize> {
        self.scaled_times.iter().map(Vec::len).collect()
    }

    /// Normalized cost of an assignment given in position order.
    pub fn normalized_cost(&self, positions: &[usize]) -> f64 {
        positions
            .iter()
            .zip(&self.scaled_times)
            .map(|(&t, row)| row[t])
            .sum()
    }

    /// Maps a raw cost onto the normalized scale.
    pub fn normalize_value(&self, raw: f64) -> f64 {
        if self.c_max > self.c_min {
            (2.0 * raw - (self.c_max + self.c_min)) / (self.c_max - self.c_min)
        } else {
            // all scaled times are zero; only unscaled extras remain
            raw - self.c_min
        }
    }

    pub fn to_original(&self, positions: &[usize]) -> Assignment {
        let mut tasks = vec![0; positions.len()];
        for (p, &t) in positions.iter().enumerate() {
            tasks[self.permutation[p]] = t;
        }
        Assignment(tasks)
    }

    pub fn to_positions(&self, x: &Assignment) -> Vec<usize> {
        self.permutation.iter().map(|&m| x.0[m]).collect()
    }
}

/// Normalizes without reordering machines.
pub fn normalize(instance: &Instance) -> NormalizedInstance {
    NormalizedInstance::with_order(instance, (0..instance.machine_count()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance_a() -> Instance {
        Instance::new(
            vec![vec![0.2, 0.8], vec![0.5, 0.1]],
            vec![Rule::simple((0, 0), (1, 0))],
        )
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        let inst = instance_a();
        assert!((cost(&inst, &Assignment(vec![0, 1])).unwrap() - 0.3).abs() < 1e-12);
        assert!((cost(&inst, &Assignment(vec![1, 0])).unwrap() - 1.3).abs() < 1e-12);
        let zero = Instance::new(vec![vec![0.0; 3]; 2], vec![]).unwrap();
        assert_eq!(cost(&zero, &Assignment(vec![2, 1])).unwrap(), 0.0);
    }

    #[test]
    fn cost_rejects_bad_assignment() {
        let inst = instance_a();
        assert!(matches!(
            cost(&inst, &Assignment(vec![0, 2])),
            Err(Error::InvalidAssignment(_))
        ));
        assert!(matches!(
            cost(&inst, &Assignment(vec![0])),
            Err(Error::InvalidAssignment(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&instance_a());
        assert!((n.c_min - 0.3).abs() < 1e-12);
        assert!((n.c_max - 1.3).abs() < 1e-12);
        assert!((n.normalized_cost(&[0, 1]) + 1.0).abs() < 1e-12);
        assert!((n.normalized_cost(&[1, 0]) - 1.0).abs() < 1e-12);

        let flat = normalize(&Instance::new(vec![vec![5.0, 5.0]], vec![]).unwrap());
        assert_eq!(flat.scaled_times, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn ordering_reproduces_reference_example() {
        // participation counts m0:3 m1:2 m2:1 m3:7 m4:3
        let mut rules = Vec::new();
        let mut add = |c: usize, t: usize| rules.push(Rule::simple((c, 0), (t, 0)));
        add(3, 0);
        add(3, 0);
        add(3, 0);
        add(3, 1);
        add(3, 1);
        add(3, 4);
        add(3, 4);
        add(2, 4);
        let inst = Instance::new(vec![vec![1.0; 11]; 5], rules).unwrap();
        let order = order_machines(&inst);
        assert_eq!(order, vec![2, 4, 3, 0, 1]);

        let x = [4, 5, 10, 2, 7];
        let moved: Vec<usize> = order.iter().map(|&m| x[m]).collect();
        assert_eq!(moved, vec![10, 7, 2, 4, 5]);
    }

    #[test]
    fn ordering_tie_break() {
        let inst = Instance::new(vec![vec![1.0]; 3], vec![]).unwrap();
        // ascending count, ties by descending index: 2,1,0 placed left,
        // right, left.
        assert_eq!(order_machines(&inst), vec![2, 0, 1]);
    }

    #[test]
    fn check_rules_examples() {
        let rules = vec![Rule::simple((0, 0), (1, 0))];
        assert_eq!(check_rules(&Assignment(vec![0, 1]), &rules), vec![0]);
        assert!(check_rules(&Assignment(vec![1, 1]), &rules).is_empty());
        assert!(check_rules(&Assignment(vec![0, 0]), &rules).is_empty());
    }

    #[test]
    fn validation_rejects_ill_formed_rules() {
        let times = vec![vec![1.0, 2.0]; 3];
        let cases = vec![
            Rule::new(vec![], 1, vec![0], None),
            Rule::new(vec![(1, 0)], 1, vec![0], None),
            Rule::new(vec![(0, 0), (0, 1)], 1, vec![0], None),
            Rule::new(vec![(0, 2)], 1, vec![0], None),
            Rule::new(vec![(0, 0)], 3, vec![0], None),
            Rule::new(vec![(0, 0)], 1, vec![], None),
            Rule::new(vec![(0, 0)], 1, vec![5], None),
            Rule::new(vec![(0, 0)], 1, vec![0], Some(-1.0)),
        ];
        for rule in cases {
            assert!(
                Instance::new(times.clone(), vec![rule.clone()]).is_err(),
                "accepted {rule:?}"
            );
        }
        assert!(Instance::new(vec![], vec![]).is_err());
        assert!(Instance::new(vec![vec![]], vec![]).is_err());
        assert!(Instance::new(vec![vec![f64::NAN]], vec![]).is_err());
    }

    #[test]
    fn compatibility() {
        let a = Rule::simple((0, 1), (2, 3));
        let b = Rule::simple((0, 1), (2, 4));
        let c = Rule::simple((0, 1), (1, 4));
        let d = Rule::new(vec![(0, 1)], 2, vec![3, 4], None);
        assert!(!rules_compatible(&a, &b));
        assert!(rules_compatible(&a, &c));
        assert!(rules_compatible(&a, &d));
        assert!(rules_compatible(&a, &a));
    }
}
