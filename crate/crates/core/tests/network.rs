//! The contracted network against direct state enumeration.

mod common;

use common::{all_states, close, naive_amplitude, random_instance};
use proptest::prelude::*;
use tnsched::engine::{build_state, marginal, EvolvedState};
use tnsched::oracle::brute_force_marginal;
use tnsched::rules::{compile_all, compile_group, operator_network, RuleGroup};
use tnsched::tensor::{full_contract, operator_element};
use tnsched::NormalizedInstance;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn trace_equals_sum_of_amplitudes(seed in any::<u64>(), tau in 0.1f64..4.0) {
        let inst = random_instance(seed, 5, 3, 5);
        let norm = NormalizedInstance::prepare(&inst);
        let state = build_state(&norm, tau, &[]).unwrap();
        let total = full_contract(&state.network(None)).unwrap().scalar();
        let expected: f64 = all_states(&norm.task_counts())
            .iter()
            .map(|x| naive_amplitude(&norm, &norm.scaled_rules, x, tau))
            .sum();
        prop_assert!(close(total, expected, 1e-10), "{total} vs {expected}");
    }

    #[test]
    fn marginals_match_enumeration(seed in any::<u64>(), q_pick in any::<usize>()) {
        let inst = random_instance(seed, 5, 3, 5);
        let norm = NormalizedInstance::prepare(&inst);
        let tau = 1.0;
        let q = q_pick % inst.machine_count();
        let Ok(state) = build_state(&norm, tau, &[]) else { return Ok(()) };
        let counts = norm.task_counts();
        let mut expected = vec![0.0; counts[q]];
        for x in all_states(&counts) {
            expected[x[q]] += naive_amplitude(&norm, &norm.scaled_rules, &x, tau);
        }
        match marginal(&state, q) {
            Ok(got) => {
                for (g, e) in got.iter().zip(&expected) {
                    prop_assert!(close(*g, *e, 1e-9), "{got:?} vs {expected:?}");
                }
                // the oracle works in original machine numbering
                let oracle = brute_force_marginal(&inst, tau, norm.permutation[q]).unwrap();
                for (g, o) in got.iter().zip(&oracle) {
                    prop_assert!(close(*g, *o, 1e-9), "{got:?} vs oracle {oracle:?}");
                }
            }
            Err(_) => prop_assert!(expected.iter().all(|&e| e == 0.0)),
        }
    }

    #[test]
    fn right_to_left_contraction_agrees(seed in any::<u64>(), open in any::<bool>()) {
        let inst = random_instance(seed, 5, 3, 5);
        let norm = NormalizedInstance::prepare(&inst);
        let Ok(state) = build_state(&norm, 2.0, &[]) else { return Ok(()) };
        let q = (seed as usize) % inst.machine_count();
        let net = state.network(open.then_some(q));
        let forward = full_contract(&net).unwrap();
        let backward = full_contract(&net.mirrored()).unwrap();
        prop_assert_eq!(forward.values.len(), backward.values.len());
        for (a, b) in forward.values.iter().zip(&backward.values) {
            prop_assert!(close(*a, *b, 1e-12), "{:?} vs {:?}", forward.values, backward.values);
        }
    }

    #[test]
    fn layers_are_diagonal_with_rule_weights(seed in any::<u64>()) {
        let inst = random_instance(seed, 4, 3, 4);
        let norm = NormalizedInstance::prepare(&inst);
        let counts = norm.task_counts();
        let tau = 3.0;
        let layers = compile_all(&norm.scaled_rules, &counts, tau).unwrap();
        let states = all_states(&counts);
        for layer in &layers {
            let net = operator_network(std::slice::from_ref(layer), &counts);
            for ket in &states {
                for bra in &states {
                    let v = operator_element(&net, bra, ket).unwrap();
                    if bra != ket {
                        prop_assert_eq!(v, 0.0);
                        continue;
                    }
                    let group: Vec<_> = layer.rules.iter().map(|&k| norm.scaled_rules[k].clone()).collect();
                    let want = group.iter().fold(1.0, |acc, r| {
                        if !r.fires(ket) {
                            acc
                        } else if !r.allows(ket[r.target_machine]) {
                            0.0
                        } else {
                            acc * r.extra_cost.map_or(1.0, |e| (-tau * e).exp())
                        }
                    });
                    prop_assert!((v - want).abs() <= 1e-12, "layer {:?} at {ket:?}: {v} vs {want}", layer.rules);
                }
            }
        }
    }

    #[test]
    fn condensed_layer_equals_stacked_singletons(seed in any::<u64>()) {
        let inst = random_instance(seed, 4, 3, 6);
        let norm = NormalizedInstance::prepare(&inst);
        let counts = norm.task_counts();
        let tau = 2.0;
        for layer in compile_all(&norm.scaled_rules, &counts, tau).unwrap() {
            if layer.rules.len() < 2 {
                continue;
            }
            let singles: Vec<_> = layer
                .rules
                .iter()
                .map(|&k| {
                    let g = RuleGroup { first: layer.first, last: layer.last, target: layer.target, rules: vec![k] };
                    compile_group(&g, &norm.scaled_rules, &counts, tau).unwrap()
                })
                .collect();
            let condensed = operator_network(std::slice::from_ref(&layer), &counts);
            let stacked = operator_network(&singles, &counts);
            for x in all_states(&counts) {
                let a = operator_element(&condensed, &x, &x).unwrap();
                let b = operator_element(&stacked, &x, &x).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forbidden_and_fixed_columns_zero_their_states(seed in any::<u64>()) {
        let inst = random_instance(seed, 4, 3, 3);
        let norm = NormalizedInstance::prepare(&inst);
        let counts = norm.task_counts();
        let mut fixed = vec![None; counts.len()];
        fixed[0] = Some(0);
        let forbidden: Vec<(usize, usize)> = (1..counts.len()).filter(|&i| counts[i] > 1).map(|i| (i, 0)).collect();
        let Ok(state) = EvolvedState::new(&norm.scaled_times, norm.scaled_rules.clone(), 1.0, &forbidden, &fixed) else {
            return Ok(());
        };
        let total = full_contract(&state.network(None)).unwrap().scalar();
        let expected: f64 = all_states(&counts)
            .iter()
            .filter(|x| x[0] == 0 && forbidden.iter().all(|&(m, t)| x[m] != t))
            .map(|x| naive_amplitude(&norm, &norm.scaled_rules, x, 1.0))
            .sum();
        prop_assert!(close(total, expected, 1e-10));
    }
}

#[test]
fn open_column_matches_boundary_of_every_position() {
    let inst = random_instance(42, 5, 3, 5);
    let norm = NormalizedInstance::prepare(&inst);
    let state = build_state(&norm, 1.5, &[]).unwrap();
    let total = full_contract(&state.network(None)).unwrap().scalar();
    for q in 0..inst.machine_count() {
        let m = marginal(&state, q).unwrap();
        assert!(close(m.iter().sum::<f64>(), total, 1e-12));
    }
}
