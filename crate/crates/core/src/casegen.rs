//! Seeded random instances: uniform times in [0, 1) and pairwise compatible
//! rules.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Rule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub machines: usize,
    pub tasks_per_machine: usize,
    pub rule_count: usize,
    pub min_conditions: usize,
    pub max_conditions: usize,
    pub seed: u64,
    /// Per-machine task counts overriding `tasks_per_machine`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_counts: Option<Vec<usize>>,
}

impl GenSpec {
    /// One or two conditions per rule.
    pub fn new(machines: usize, tasks_per_machine: usize, rule_count: usize, seed: u64) -> Self {
        GenSpec {
            machines,
            tasks_per_machine,
            rule_count,
            min_conditions: 1,
            max_conditions: 2,
            seed,
            task_counts: None,
        }
    }

    /// Machines with differing task counts.
    pub fn jagged(task_counts: Vec<usize>, rule_count: usize, seed: u64) -> Self {
        GenSpec {
            machines: task_counts.len(),
            tasks_per_machine: task_counts.iter().copied().max().unwrap_or(0),
            task_counts: Some(task_counts),
            ..GenSpec::new(0, 0, rule_count, seed)
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.task_counts
            .clone()
            .unwrap_or_else(|| vec![self.tasks_per_machine; self.machines])
    }

    pub fn with_conditions(mut self, min: usize, max: usize) -> Self {
        self.min_conditions = min;
        self.max_conditions = max;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.task_counts.as_ref().is_some_and(|c| c.len() != self.machines) {
            return Err(Error::Generation("task_counts length differs from machines".into()));
        }
        if self.machines == 0 || self.counts().contains(&0) {
            return Err(Error::Generation(
                "machines and tasks per machine must be positive".into(),
            ));
        }
        if self.min_conditions == 0 || self.max_conditions < self.min_conditions {
            return Err(Error::Generation(format!(
                "invalid condition range {}..={}",
                self.min_conditions, self.max_conditions
            )));
        }
        if self.rule_count > 0 && self.machines < self.min_conditions + 1 {
            return Err(Error::Generation(format!(
                "{} machines cannot host rules with {} conditions and a distinct target",
                self.machines, self.min_conditions
            )));
        }
        Ok(())
    }
}

/// Small oracle-tractable spec drawn from `seed`: 3 to 5 machines with 2 to
/// 4 tasks each and 1 to 6 rules.
pub fn small_spec(seed: u64) -> GenSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let m = rng.gen_range(3..=5);
    let counts = (0..m).map(|_| rng.gen_range(2..=4)).collect();
    let rules = rng.gen_range(1..=6);
    GenSpec::jagged(counts, rules, seed)
}

pub fn generate(spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.machines;
    let counts = spec.counts();
    let times: Vec<Vec<f64>> = counts
        .iter()
        .map(|&p| (0..p).map(|_| rng.gen::<f64>()).collect())
        .collect();

    let max_conditions = spec.max_conditions.min(m - 1).max(spec.min_conditions);
    // condition set -> targets already constrained by it
    let mut seen: HashMap<Vec<(usize, usize)>, Vec<usize>> = HashMap::new();
    let mut rules = Vec::with_capacity(spec.rule_count);
    let budget = spec.rule_count.saturating_mul(200).saturating_add(1000);
    let mut attempts = 0;
    while rules.len() < spec.rule_count {
        if attempts == budget {
            return Err(Error::Generation(format!(
                "placed {} of {} compatible rules before the rejection budget ran out",
                rules.len(),
                spec.rule_count
            )));
        }
        attempts += 1;
        let c = rng.gen_range(spec.min_conditions..=max_conditions);
        let machines = sample(&mut rng, m, c + 1).into_vec();
        let target = machines[c];
        let mut conditions: Vec<(usize, usize)> = machines[..c]
            .iter()
            .map(|&machine| (machine, rng.gen_range(0..counts[machine])))
            .collect();
        conditions.sort_unstable();
        let task = rng.gen_range(0..counts[target]);
        let targets = seen.entry(conditions.clone()).or_default();
        if targets.contains(&target) {
            continue;
        }
        targets.push(target);
        rules.push(Rule::new(conditions, target, vec![task], None));
    }
    Instance::new(times, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rules_compatible;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&GenSpec::new(6, 4, 20, 11)).unwrap();
        let b = generate(&GenSpec::new(6, 4, 20, 11)).unwrap();
        let c = generate(&GenSpec::new(6, 4, 20, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shapes_and_ranges() {
        let inst = generate(&GenSpec::new(10, 10, 30, 7)).unwrap();
        assert_eq!(inst.machine_count(), 10);
        assert!(inst.task_counts().iter().all(|&p| p == 10));
        assert_eq!(inst.rules().len(), 30);
        assert!(inst.times().iter().flatten().all(|&t| (0.0..1.0).contains(&t)));
        assert!(inst
            .rules()
            .iter()
            .all(|r| (1..=2).contains(&r.conditions.len())));

        let jagged = generate(&GenSpec::jagged(vec![2, 4, 3], 3, 1)).unwrap();
        assert_eq!(jagged.task_counts(), vec![2, 4, 3]);
        assert_eq!(jagged.rules().len(), 3);

        let empty = generate(&GenSpec::new(2, 2, 0, 1)).unwrap();
        assert!(empty.rules().is_empty());
    }

    #[test]
    fn small_specs_stay_small() {
        for seed in 0..50 {
            let spec = small_spec(seed);
            assert!((3..=5).contains(&spec.machines));
            assert!(spec.counts().iter().all(|p| (2..=4).contains(p)));
            assert!((1..=6).contains(&spec.rule_count));
        }
    }

    #[test]
    fn rules_pairwise_compatible() {
        let inst = generate(&GenSpec::new(10, 10, 1000, 3)).unwrap();
        let rules = inst.rules();
        for i in 0..rules.len() {
            for j in i + 1..rules.len() {
                assert!(rules_compatible(&rules[i], &rules[j]), "{i} vs {j}");
            }
        }
    }

    #[test]
    fn impossible_specs() {
        assert!(generate(&GenSpec::new(1, 3, 1, 0)).is_err());
        assert!(generate(&GenSpec::new(0, 3, 0, 0)).is_err());
        assert!(generate(&GenSpec::new(3, 3, 1, 0).with_conditions(2, 1)).is_err());
        // only 2*2 condition sets times 1 target each with one condition
        assert!(matches!(
            generate(&GenSpec::new(2, 2, 5, 0).with_conditions(1, 1)),
            Err(Error::Generation(_))
        ));
    }
}
