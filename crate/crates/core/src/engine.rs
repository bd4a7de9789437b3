//! Evolved superposition, marginal amplitudes and machine-by-machine
//! determination with rule simplification.

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Assignment, NormalizedInstance, Rule};
use crate::rules::{compile_all, operator_network, RuleLayer};
use crate::tensor::{full_contract, Network, Plug};

/// Damping constant used when none is given.
pub const DEFAULT_TAU: f64 = 10.0;

/// Resource limits checked before each contraction.
#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub memory_cap_bytes: Option<u64>,
    pub deadline: Option<Instant>,
}

impl Limits {
    pub fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::Timeout),
            _ => Ok(()),
        }
    }

    fn check_network(&self, network: &Network) -> Result<()> {
        if let Some(cap) = self.memory_cap_bytes {
            // working buffer plus the one being filled
            let needed = network.projected_peak().saturating_mul(16);
            if needed > cap as u128 {
                return Err(Error::MemoryCap {
                    needed_bytes: u64::try_from(needed).unwrap_or(u64::MAX),
                    cap_bytes: cap,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    pub contractions: usize,
    pub max_boundary: usize,
    pub max_intermediate: usize,
}

impl EngineStats {
    pub fn merge(&mut self, other: &EngineStats) {
        self.contractions += other.contractions;
        self.max_boundary = self.max_boundary.max(other.max_boundary);
        self.max_intermediate = self.max_intermediate.max(other.max_intermediate);
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive and finite, got {tau}")));
    }
    Ok(())
}

/// Per-machine amplitude vectors `exp(-tau * scaled_time)` together with the
/// compiled rule layers. Everything is indexed by machine position.
#[derive(Debug, Clone)]
pub struct EvolvedState {
    pub tau: f64,
    pub vectors: Vec<Vec<f64>>,
    pub rules: Vec<Rule>,
    pub layers: Vec<RuleLayer>,
    pub fixed: Vec<Option<usize>>,
}

impl EvolvedState {
    pub fn new(
        scaled_times: &[Vec<f64>],
        rules: Vec<Rule>,
        tau: f64,
        forbidden: &[(usize, usize)],
        fixed: &[Option<usize>],
    ) -> Result<Self> {
        check_tau(tau)?;
        let mut vectors: Vec<Vec<f64>> = scaled_times
            .iter()
            .zip(fixed)
            .map(|(row, fix)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &t)| match fix {
                        Some(v) if *v != j => 0.0,
                        _ => (-tau * t).exp(),
                    })
                    .collect()
            })
            .collect();
        for &(m, t) in forbidden {
            if let Some(slot) = vectors.get_mut(m).and_then(|row| row.get_mut(t)) {
                *slot = 0.0;
            }
        }
        if let Some(m) = vectors.iter().position(|row| row.iter().all(|&a| a == 0.0)) {
            return Err(Error::Infeasible(format!("every task of machine {m} is excluded")));
        }
        let counts: Vec<usize> = scaled_times.iter().map(Vec::len).collect();
        let layers = compile_all(&rules, &counts, tau)?;
        Ok(EvolvedState {
            tau,
            vectors,
            rules,
            layers,
            fixed: fixed.to_vec(),
        })
    }

    /// The network with every plug traced except `open`.
    pub fn network(&self, open: Option<usize>) -> Network {
        let counts: Vec<usize> = self.vectors.iter().map(Vec::len).collect();
        let mut network = operator_network(&self.layers, &counts);
        for (i, column) in network.columns.iter_mut().enumerate() {
            column.input = self.vectors[i].clone();
            if open == Some(i) {
                column.plug = Plug::Open;
            }
        }
        network
    }
}

/// State for the full rule set of a prepared instance.
pub fn build_state(
    instance: &NormalizedInstance,
    tau: f64,
    forbidden: &[(usize, usize)],
) -> Result<EvolvedState> {
    let fixed = vec![None; instance.scaled_times.len()];
    EvolvedState::new(
        &instance.scaled_times,
        instance.scaled_rules.clone(),
        tau,
        forbidden,
        &fixed,
    )
}

/// Amplitudes of position `q` with every other machine traced out.
pub fn marginal(state: &EvolvedState, q: usize) -> Result<Vec<f64>> {
    marginal_limited(state, q, &Limits::default(), &mut EngineStats::default())
}

pub fn marginal_limited(
    state: &EvolvedState,
    q: usize,
    limits: &Limits,
    stats: &mut EngineStats,
) -> Result<Vec<f64>> {
    if q >= state.vectors.len() {
        return Err(Error::Shape(format!("machine position {q} out of range")));
    }
    limits.check_deadline()?;
    let network = state.network(Some(q));
    limits.check_network(&network)?;
    let c = full_contract(&network)?;
    stats.contractions += 1;
    stats.max_boundary = stats.max_boundary.max(c.stats.max_boundary);
    stats.max_intermediate = stats.max_intermediate.max(c.stats.max_intermediate);
    if c.values.iter().all(|&a| a == 0.0) {
        return Err(Error::Infeasible(format!(
            "no assignment satisfies the rules (marginal of position {q} vanishes)"
        )));
    }
    Ok(c.values)
}

/// Index of the largest absolute entry; the lowest index wins ties.
pub fn argmax(amplitudes: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, a) in amplitudes.iter().map(|a| a.abs()).enumerate() {
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((j, a));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::Infeasible("all amplitudes vanish".into()))
}

pub fn determine(state: &EvolvedState, q: usize) -> Result<usize> {
    argmax(&marginal(state, q)?)
}

/// Outcome of simplifying the rule set after fixing machines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Simplification {
    pub rules: Vec<Rule>,
    /// Machines whose task is now implied.
    pub forced: Vec<(usize, usize)>,
    /// Tasks that can no longer be chosen.
    pub forbidden: Vec<(usize, usize)>,
}

/// Rewrites `rules` given that machine `f` was fixed to `v`; `fixed` holds
/// every machine determined so far (including `f`).
///
/// Rules whose fixed conditions fail are dropped. Fixed conditions that
/// hold are removed. A rule left without conditions always fires, so its
/// target is forced (or restricted, for task sets). A rule whose target is
/// fixed inside its task set is dropped; outside it, the rule turns into an
/// exclusion of its remaining conditions, expressed as a rule on the last of
/// those machines or, with one condition left, as a forbidden task.
pub fn simplify_rules(
    rules: &[Rule],
    f: usize,
    v: usize,
    fixed: &[Option<usize>],
    task_counts: &[usize],
) -> Result<Simplification> {
    debug_assert_eq!(fixed.get(f).copied().flatten(), Some(v));
    let mut out = Simplification::default();
    for rule in rules {
        let mut conditions = Vec::with_capacity(rule.conditions.len());
        let mut never_fires = false;
        for &(m, t) in &rule.conditions {
            match fixed[m] {
                Some(w) if w != t => {
                    never_fires = true;
                    break;
                }
                Some(_) => {}
                None => conditions.push((m, t)),
            }
        }
        if never_fires {
            continue;
        }
        let target = rule.target_machine;
        if conditions.is_empty() {
            if let [only] = rule.target_tasks[..] {
                out.forced.push((target, only));
            } else {
                out.forbidden.extend(
                    (0..task_counts[target])
                        .filter(|&t| !rule.allows(t))
                        .map(|t| (target, t)),
                );
            }
            continue;
        }
        match fixed[target] {
            Some(w) if rule.allows(w) => {
                // A soft rule still charges its extra cost when it fires.
                if rule.is_soft() {
                    out.rules.push(Rule {
                        conditions,
                        ..rule.clone()
                    });
                }
            }
            Some(_) => exclude(conditions, task_counts, &mut out)?,
            None => out.rules.push(Rule {
                conditions,
                ..rule.clone()
            }),
        }
    }

    out.forced.sort_unstable();
    out.forced.dedup();
    out.forbidden.sort_unstable();
    out.forbidden.dedup();
    for pair in out.forced.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Infeasible(format!(
                "machine {} forced to both {} and {}",
                pair[0].0, pair[0].1, pair[1].1
            )));
        }
    }
    for &(m, t) in &out.forced {
        if matches!(fixed[m], Some(w) if w != t) || out.forbidden.contains(&(m, t)) {
            return Err(Error::Infeasible(format!(
                "machine {m} cannot take forced task {t}"
            )));
        }
    }
    for &(m, t) in &out.forbidden {
        if fixed[m] == Some(t) {
            return Err(Error::Infeasible(format!(
                "machine {m} is fixed to forbidden task {t}"
            )));
        }
    }
    Ok(out)
}

/// Records that the conditions must not all hold at once.
fn exclude(
    mut conditions: Vec<(usize, usize)>,
    task_counts: &[usize],
    out: &mut Simplification,
) -> Result<()> {
    // a single-task machine always meets its condition
    conditions.retain(|&(m, _)| task_counts[m] > 1);
    match conditions.len() {
        0 => Err(Error::Infeasible(
            "a violated rule can no longer be avoided".into(),
        )),
        1 => {
            out.forbidden.push(conditions[0]);
            Ok(())
        }
        _ => {
            let last = conditions
                .iter()
                .enumerate()
                .max_by_key(|(_, &(m, _))| m)
                .map(|(k, _)| k)
                .expect("nonempty");
            let (m, t) = conditions.remove(last);
            out.rules.push(Rule::new(
                conditions,
                m,
                (0..task_counts[m]).filter(|&o| o != t).collect(),
                None,
            ));
            Ok(())
        }
    }
}

/// One determination step, for verbose output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub position: usize,
    pub machine: usize,
    pub task: usize,
    /// Implied by the rules rather than read from a marginal.
    pub forced: bool,
    pub rules_remaining: usize,
    pub layers: usize,
    pub max_boundary: usize,
}

#[derive(Debug, Clone)]
pub struct EngineRun {
    /// Chosen task per position.
    pub positions: Vec<usize>,
    /// The same assignment in original machine numbering.
    pub assignment: Assignment,
    pub stats: EngineStats,
    pub trace: Vec<TraceStep>,
}

/// Determines every machine in position order, contracting the network for
/// one marginal per step and simplifying the rules after each fix.
///
/// `rules` are in position numbering with extra costs on the normalized
/// scale (as in `instance.scaled_rules`).
pub fn run_engine(
    instance: &NormalizedInstance,
    mut rules: Vec<Rule>,
    forbidden: &[(usize, usize)],
    tau: f64,
    limits: &Limits,
) -> Result<EngineRun> {
    check_tau(tau)?;
    let counts = instance.task_counts();
    let m = counts.len();
    let mut fixed: Vec<Option<usize>> = vec![None; m];
    let mut excluded: BTreeSet<(usize, usize)> = forbidden.iter().copied().collect();
    let mut stats = EngineStats::default();
    let mut trace = Vec::new();

    while let Some(q) = fixed.iter().position(Option::is_none) {
        let excluded_list: Vec<(usize, usize)> = excluded.iter().copied().collect();
        let state = EvolvedState::new(&instance.scaled_times, rules.clone(), tau, &excluded_list, &fixed)?;
        let mut step = EngineStats::default();
        let amplitudes = marginal_limited(&state, q, limits, &mut step)?;
        stats.merge(&step);
        let task = argmax(&amplitudes)?;
        let layers = state.layers.len();
        log::debug!(
            "position={q} machine={} task={task} rules={} layers={layers} boundary={}",
            instance.permutation[q],
            rules.len(),
            step.max_boundary
        );
        trace.push(TraceStep {
            position: q,
            machine: instance.permutation[q],
            task,
            forced: false,
            rules_remaining: rules.len(),
            layers,
            max_boundary: step.max_boundary,
        });

        let mut queue = VecDeque::from([(q, task, false)]);
        while let Some((f, v, forced)) = queue.pop_front() {
            match fixed[f] {
                Some(w) if w == v => continue,
                Some(w) => {
                    return Err(Error::Infeasible(format!(
                        "position {f} fixed to {w} but forced to {v}"
                    )))
                }
                None => {}
            }
            if excluded.contains(&(f, v)) {
                return Err(Error::Infeasible(format!(
                    "position {f} forced to excluded task {v}"
                )));
            }
            fixed[f] = Some(v);
            let s = simplify_rules(&rules, f, v, &fixed, &counts)?;
            rules = s.rules;
            for pair in s.forbidden {
                excluded.insert(pair);
            }
            queue.extend(s.forced.into_iter().map(|(m, t)| (m, t, true)));
            if forced {
                log::debug!(
                    "position={f} machine={} task={v} forced rules={}",
                    instance.permutation[f],
                    rules.len()
                );
                trace.push(TraceStep {
                    position: f,
                    machine: instance.permutation[f],
                    task: v,
                    forced: true,
                    rules_remaining: rules.len(),
                    layers: 0,
                    max_boundary: 0,
                });
            }
        }
    }

    let positions: Vec<usize> = fixed.into_iter().map(|f| f.expect("all fixed")).collect();
    Ok(EngineRun {
        assignment: instance.to_original(&positions),
        positions,
        stats,
        trace,
    })
}

/// Solves the prepared instance with its full rule set.
pub fn solve_full(instance: &NormalizedInstance, tau: f64) -> Result<Assignment> {
    run_engine(
        instance,
        instance.scaled_rules.clone(),
        &[],
        tau,
        &Limits::default(),
    )
    .map(|run| run.assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize, Instance};

    fn instance_a() -> Instance {
        Instance::new(
            vec![vec![0.2, 0.8], vec![0.5, 0.1]],
            vec![Rule::simple((0, 0), (1, 0))],
        )
        .unwrap()
    }

    #[test]
    fn evolved_vectors() {
        let inst = Instance::new(vec![vec![0.0, 1.0]], vec![]).unwrap();
        let n = normalize(&inst);
        assert_eq!(n.scaled_times, vec![vec![-1.0, 1.0]]);
        let s = build_state(&n, 10.0, &[]).unwrap();
        assert!((s.vectors[0][0] - 10f64.exp()).abs() < 1e-6);
        assert!((s.vectors[0][1] - (-10f64).exp()).abs() < 1e-15);

        let flat = normalize(&Instance::new(vec![vec![3.0, 3.0, 3.0]], vec![]).unwrap());
        assert_eq!(build_state(&flat, 4.0, &[]).unwrap().vectors[0], vec![1.0; 3]);

        let a = normalize(&instance_a());
        let s = build_state(&a, 2.0, &[(0, 1)]).unwrap();
        assert_eq!(s.vectors[0][1], 0.0);
        assert!((s.vectors[0][0] - (-2.0 * a.scaled_times[0][0]).exp()).abs() < 1e-12);

        assert!(matches!(
            build_state(&a, 2.0, &[(0, 0), (0, 1)]),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(build_state(&a, 0.0, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn instance_a_marginal() {
        let n = normalize(&instance_a());
        let s = build_state(&n, 1.0, &[]).unwrap();
        let m = marginal(&s, 0).unwrap();
        // states (0,0), (1,0), (1,1)
        assert!((m[0] - 0.2f64.exp()).abs() < 1e-12, "{m:?}");
        assert!((m[1] - ((-1.0f64).exp() + (-0.2f64).exp())).abs() < 1e-12, "{m:?}");
        assert!((m[1] - 1.18661).abs() < 1e-5);
        assert_eq!(argmax(&m).unwrap(), 0);
    }

    #[test]
    fn product_marginal_without_rules() {
        let inst = Instance::new(vec![vec![0.2, 0.8], vec![0.5, 0.1]], vec![]).unwrap();
        let n = normalize(&inst);
        let s = build_state(&n, 1.0, &[]).unwrap();
        let z1: f64 = n.scaled_times[1].iter().map(|t| (-t).exp()).sum();
        let m = marginal(&s, 0).unwrap();
        for (got, t) in m.iter().zip(&n.scaled_times[0]) {
            assert!((got - (-t).exp() * z1).abs() < 1e-12);
        }
        let one = normalize(&Instance::new(vec![vec![0.3, 0.9, 0.1]], vec![]).unwrap());
        let s = build_state(&one, 1.0, &[]).unwrap();
        assert_eq!(marginal(&s, 0).unwrap(), s.vectors[0]);
    }

    #[test]
    fn argmax_ties_and_zeros() {
        assert_eq!(argmax(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(argmax(&[0.0, 3.2]).unwrap(), 1);
        assert!(matches!(argmax(&[0.0, 0.0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn simplify_cases() {
        let counts = [4, 4, 4];
        let fixed = [Some(0), None, None];
        // case 1
        let s = simplify_rules(&[Rule::simple((0, 1), (2, 3))], 0, 0, &fixed, &counts).unwrap();
        assert_eq!(s, Simplification::default());
        // case 3
        let s = simplify_rules(&[Rule::simple((0, 0), (2, 3))], 0, 0, &fixed, &counts).unwrap();
        assert!(s.rules.is_empty());
        assert_eq!(s.forced, vec![(2, 3)]);
        // case 5, single condition
        let s = simplify_rules(&[Rule::simple((1, 2), (0, 1))], 0, 0, &fixed, &counts).unwrap();
        assert!(s.rules.is_empty());
        assert_eq!(s.forbidden, vec![(1, 2)]);
        // case 4
        let s = simplify_rules(&[Rule::simple((1, 2), (0, 0))], 0, 0, &fixed, &counts).unwrap();
        assert_eq!(s, Simplification::default());
        // case 2
        let r = Rule::new(vec![(0, 0), (1, 1)], 2, vec![3], None);
        let s = simplify_rules(&[r], 0, 0, &fixed, &counts).unwrap();
        assert_eq!(s.rules, vec![Rule::new(vec![(1, 1)], 2, vec![3], None)]);
    }

    #[test]
    fn simplify_case5_with_two_conditions() {
        let counts = [3, 3, 3, 3];
        let fixed = [Some(2), None, None, None];
        let r = Rule::new(vec![(1, 0), (3, 2)], 0, vec![1], None);
        let s = simplify_rules(&[r], 0, 2, &fixed, &counts).unwrap();
        assert_eq!(s.rules, vec![Rule::new(vec![(1, 0)], 3, vec![0, 1], None)]);
    }

    #[test]
    fn simplify_target_set_restricts() {
        let counts = [2, 4];
        let fixed = [Some(1), None];
        let r = Rule::new(vec![(0, 1)], 1, vec![0, 2], None);
        let s = simplify_rules(&[r], 0, 1, &fixed, &counts).unwrap();
        assert_eq!(s.forbidden, vec![(1, 1), (1, 3)]);
        assert!(s.forced.is_empty());
    }

    #[test]
    fn simplify_detects_conflicts() {
        let counts = [2, 2];
        let fixed = [Some(0), None];
        let rules = [Rule::simple((0, 0), (1, 0)), Rule::simple((0, 0), (1, 1))];
        assert!(matches!(
            simplify_rules(&rules, 0, 0, &fixed, &counts),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn solve_instance_a() {
        let n = normalize(&instance_a());
        assert_eq!(solve_full(&n, 10.0).unwrap(), Assignment(vec![0, 0]));
        let prepared = NormalizedInstance::prepare(&instance_a());
        assert_eq!(solve_full(&prepared, 10.0).unwrap(), Assignment(vec![0, 0]));
    }

    #[test]
    fn solve_without_rules_is_argmin() {
        let inst = Instance::new(
            vec![vec![0.4, 0.2, 0.9], vec![0.1, 0.7], vec![0.6, 0.6, 0.3]],
            vec![],
        )
        .unwrap();
        let n = NormalizedInstance::prepare(&inst);
        assert_eq!(solve_full(&n, 10.0).unwrap(), Assignment(vec![1, 0, 2]));
    }
}
