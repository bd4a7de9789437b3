mod common;

use std::collections::BTreeSet;

use common::{all_states, random_instance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnsched::casegen::{generate, GenSpec};
use tnsched::engine::simplify_rules;
use tnsched::format::{instance_to_json, parse_instance};
use tnsched::model::{invert, order_machines};
use tnsched::solvers::{crossover, mutate, random_individual, repair_rules, solve_iterative};
use tnsched::{brute_force, check_rules, solve_full, total_cost, Assignment, Error, IterativeConfig, NormalizedInstance, Rule};

fn extra(rules: &[Rule], x: &[usize]) -> f64 {
    rules
        .iter()
        .filter(|r| r.fires(x))
        .filter_map(|r| r.extra_cost)
        .sum()
}

fn violates(rules: &[Rule], x: &[usize]) -> bool {
    rules.iter().any(|r| r.is_violated_by(x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn check_rules_matches_direct_predicate(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 3, 6);
        for x in all_states(&inst.task_counts()) {
            let direct: Vec<usize> = inst
                .rules()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.conditions.iter().all(|&(m, t)| x[m] == t) && !r.target_tasks.contains(&x[r.target_machine]))
                .map(|(k, _)| k)
                .collect();
            prop_assert_eq!(check_rules(&Assignment(x), inst.rules()), direct);
        }
    }

    #[test]
    fn normalization_is_affine_with_unit_bounds(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 3, 0);
        let norm = NormalizedInstance::prepare(&inst);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in all_states(&inst.task_counts()) {
            let raw = total_cost(&inst, &Assignment(x.clone())).unwrap();
            let scaled = norm.normalized_cost(&norm.to_positions(&Assignment(x)));
            prop_assert!((scaled - norm.normalize_value(raw)).abs() < 1e-12);
            lo = lo.min(scaled);
            hi = hi.max(scaled);
        }
        if norm.c_max > norm.c_min {
            prop_assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12, "{lo} {hi}");
        } else {
            prop_assert!(lo == 0.0 && hi == 0.0);
        }
    }

    #[test]
    fn machine_order_is_a_bijection(seed in any::<u64>()) {
        let inst = random_instance(seed, 7, 3, 8);
        let order = order_machines(&inst);
        let set: BTreeSet<usize> = order.iter().copied().collect();
        prop_assert_eq!(set.len(), inst.machine_count());
        prop_assert!(set.iter().all(|&i| i < inst.machine_count()));
        let inv = invert(&order);
        for (p, &m) in order.iter().enumerate() {
            prop_assert_eq!(inv[m], p);
        }
        let norm = NormalizedInstance::prepare(&inst);
        for x in all_states(&inst.task_counts()).into_iter().take(50) {
            let a = Assignment(x);
            prop_assert_eq!(norm.to_original(&norm.to_positions(&a)), a.clone());
            let pos = norm.to_positions(&a);
            prop_assert_eq!(violates(norm.base.rules(), &pos), !check_rules(&a, inst.rules()).is_empty());
        }
    }

    /// Fixing machines one after another and simplifying keeps exactly the
    /// feasible completions, with extra costs shifted by a constant.
    #[test]
    fn simplification_preserves_feasible_completions(seed in any::<u64>(), picks in prop::collection::vec(any::<usize>(), 1..4)) {
        let inst = random_instance(seed, 5, 3, 6);
        let counts = inst.task_counts();
        let m = counts.len();
        let original = inst.rules().to_vec();
        let mut rules = original.clone();
        let mut fixed = vec![None; m];
        let mut forced: Vec<(usize, usize)> = Vec::new();
        let mut forbidden: Vec<(usize, usize)> = Vec::new();
        for pick in picks {
            let free: Vec<usize> = (0..m).filter(|&i| fixed[i].is_none()).collect();
            if free.is_empty() {
                break;
            }
            let f = free[pick % free.len()];
            let v = (pick / 7) % counts[f];
            fixed[f] = Some(v);
            let consistent = |x: &Vec<usize>| fixed.iter().zip(x).all(|(fx, &t)| fx.is_none_or(|w| w == t));
            match simplify_rules(&rules, f, v, &fixed, &counts) {
                Err(Error::Infeasible(_)) => {
                    let any = all_states(&counts).into_iter().any(|x| {
                        consistent(&x)
                            && !violates(&original, &x)
                            && forced.iter().all(|&(a, b)| x[a] == b)
                            && forbidden.iter().all(|&(a, b)| x[a] != b)
                    });
                    prop_assert!(!any, "conflict reported although a completion exists");
                    return Ok(());
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
                Ok(s) => {
                    rules = s.rules;
                    forced.extend(s.forced);
                    forbidden.extend(s.forbidden);
                }
            }
            let mut shift: Option<f64> = None;
            for x in all_states(&counts).into_iter().filter(|x| consistent(x)) {
                let before = !violates(&original, &x);
                let after = !violates(&rules, &x)
                    && forced.iter().all(|&(a, b)| x[a] == b)
                    && forbidden.iter().all(|&(a, b)| x[a] != b);
                prop_assert_eq!(before, after, "state {:?}", x);
                if before {
                    let d = extra(&original, &x) - extra(&rules, &x);
                    match shift {
                        None => shift = Some(d),
                        Some(s) => prop_assert!((s - d).abs() < 1e-12),
                    }
                }
            }
        }
    }

    #[test]
    fn full_solve_is_feasible_exactly_when_instance_is(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 3, 5);
        let oracle = brute_force(&inst).unwrap();
        match solve_full(&NormalizedInstance::prepare(&inst), 10.0) {
            Ok(x) => {
                prop_assert!(oracle.optimum.is_some());
                prop_assert!(check_rules(&x, inst.rules()).is_empty());
            }
            Err(Error::Infeasible(_)) => prop_assert!(oracle.optimum.is_none()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn iterative_answers_are_feasible(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 3, 6);
        match solve_iterative(&inst, &IterativeConfig::default()) {
            Ok(s) => prop_assert!(check_rules(&s.assignment, inst.rules()).is_empty()),
            Err(Error::NoSolutionFound { iterations }) => prop_assert!(iterations <= inst.rules().len()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn instance_json_round_trips(seed in any::<u64>()) {
        let inst = random_instance(seed, 6, 4, 6);
        let text = instance_to_json(&inst);
        prop_assert_eq!(parse_instance(&text).unwrap(), inst);
    }

    #[test]
    fn genetic_operators_keep_shapes(seed in any::<u64>(), swaps in 0usize..5, mutations in 0usize..4) {
        let inst = generate(&GenSpec::new(6, 5, 40, seed)).unwrap();
        let counts = inst.task_counts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = repair_rules(&random_individual(&counts, 2, &mut rng), inst.rules(), 6, &mut rng);
        let b = repair_rules(&random_individual(&counts, 2, &mut rng), inst.rules(), 6, &mut rng);
        let (c, d) = crossover(&a, &b, swaps, &mut rng);
        let e = mutate(&c, &counts, mutations, &mut rng);
        let r = repair_rules(&e, inst.rules(), 6, &mut rng);
        for ind in [&c, &d, &e, &r] {
            prop_assert!(ind.chromosomes.iter().all(|ch| ch.len() == 2 && ch[0] < ch[1]));
        }
        prop_assert!(r.phenotype.len() <= 6);
        for &k in &r.phenotype {
            let rule = &inst.rules()[k];
            prop_assert!(rule.conditions.iter().all(|&(m, t)| r.chromosomes[m].contains(&t)));
        }
    }
}
