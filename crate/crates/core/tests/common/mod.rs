#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnsched::{Instance, NormalizedInstance, Rule};

/// Random small instance with target sets and soft rules. Rules need not be
/// mutually compatible.
pub fn random_instance(seed: u64, max_machines: usize, max_tasks: usize, max_rules: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=max_machines);
    let counts: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=max_tasks)).collect();
    let times = counts
        .iter()
        .map(|&p| (0..p).map(|_| (rng.gen_range(0..100) as f64) / 100.0).collect())
        .collect();
    let n = rng.gen_range(0..=max_rules);
    let rules = (0..n).map(|_| random_rule(&mut rng, &counts)).collect();
    Instance::new(times, rules).expect("builder emits valid rules")
}

pub fn random_rule(rng: &mut ChaCha8Rng, counts: &[usize]) -> Rule {
    let m = counts.len();
    let c = rng.gen_range(1..m.min(4));
    let machines = sample(rng, m, c + 1).into_vec();
    let target = machines[c];
    let conditions = machines[..c]
        .iter()
        .map(|&i| (i, rng.gen_range(0..counts[i])))
        .collect();
    let p = counts[target];
    let size = rng.gen_range(1..=p);
    let tasks = sample(rng, p, size).into_vec();
    let extra = rng.gen_bool(0.3).then(|| rng.gen_range(0..50) as f64 / 100.0);
    Rule::new(conditions, target, tasks, extra)
}

/// Every assignment of the given shape in lexicographic order.
pub fn all_states(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &p in counts {
        out = out
            .into_iter()
            .flat_map(|x| {
                (0..p).map(move |t| {
                    let mut y = x.clone();
                    y.push(t);
                    y
                })
            })
            .collect();
    }
    out
}

/// Amplitude of a position-ordered state computed straight from the
/// normalized data: product of evolved entries and per-rule factors.
pub fn naive_amplitude(norm: &NormalizedInstance, rules: &[Rule], x: &[usize], tau: f64) -> f64 {
    let mut a: f64 = x
        .iter()
        .zip(&norm.scaled_times)
        .map(|(&t, row)| (-tau * row[t]).exp())
        .product();
    for r in rules {
        let fires = r.conditions.iter().all(|&(m, t)| x[m] == t);
        if fires {
            if !r.target_tasks.contains(&x[r.target_machine]) {
                return 0.0;
            }
            if let Some(e) = r.extra_cost {
                a *= (-tau * e).exp();
            }
        }
    }
    a
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
