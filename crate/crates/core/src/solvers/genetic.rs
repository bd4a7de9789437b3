use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::iterative::iterate;
use super::IterativeConfig;
use crate::engine::{run_engine, EngineStats, Limits, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::model::{check_rules, rules_compatible, total_cost, Assignment, Instance, NormalizedInstance, Rule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneticConfig {
    pub population: usize,
    /// Chromosome size: activable tasks per machine.
    pub active_tasks_per_machine: usize,
    pub rules_per_individual: usize,
    pub mutations_per_child: usize,
    pub survival_ratio: f64,
    pub max_generations: usize,
    pub crossover_swaps: usize,
    pub seed: u64,
    pub tau: f64,
}

impl Default for GeneticConfig {
    fn default() -> Self {
        GeneticConfig {
            population: 10,
            active_tasks_per_machine: 2,
            rules_per_individual: 6,
            mutations_per_child: 1,
            survival_ratio: 1.0 / 3.0,
            max_generations: 25,
            crossover_swaps: 2,
            seed: 0,
            tau: DEFAULT_TAU,
        }
    }
}

impl GeneticConfig {
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let min_p = instance.task_counts().into_iter().min().unwrap_or(0);
        if self.population == 0 || self.max_generations == 0 || self.crossover_swaps == 0 {
            return Err(Error::Config(
                "population, max_generations and crossover_swaps must be positive".into(),
            ));
        }
        if self.active_tasks_per_machine == 0 || self.active_tasks_per_machine > min_p {
            return Err(Error::Config(format!(
                "active_tasks_per_machine must lie in 1..={min_p}, got {}",
                self.active_tasks_per_machine
            )));
        }
        if !(self.survival_ratio > 0.0 && self.survival_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "survival_ratio must lie in (0, 1], got {}",
                self.survival_ratio
            )));
        }
        if self.survival_ratio * (self.population as f64) < 1.0 - 1e-9 {
            return Err(Error::Config(
                "survival_ratio * population must keep at least one survivor".into(),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    fn survivors(&self) -> usize {
        ((self.survival_ratio * self.population as f64) - 1e-9)
            .ceil()
            .clamp(1.0, self.population as f64) as usize
    }
}

/// Chromosomes and phenotype; identifies an individual for dedup and caching.
type IndividualKey = (Vec<Vec<usize>>, Vec<usize>);

/// A population member. Chromosomes and rule indices refer to the original
/// instance numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Sorted activable tasks per machine.
    pub chromosomes: Vec<Vec<usize>>,
    /// Sorted indices of the rules applied to this individual.
    pub phenotype: Vec<usize>,
    pub result: Option<Assignment>,
    /// Raw cost of `result`, infinite when there is none.
    pub cost: f64,
    pub feasible_globally: Option<bool>,
    /// Number of rules of the full set broken by `result`.
    pub violations: usize,
}

impl Individual {
    pub fn new(mut chromosomes: Vec<Vec<usize>>, mut phenotype: Vec<usize>) -> Self {
        for c in &mut chromosomes {
            c.sort_unstable();
            c.dedup();
        }
        phenotype.sort_unstable();
        phenotype.dedup();
        Individual {
            chromosomes,
            phenotype,
            result: None,
            cost: f64::INFINITY,
            feasible_globally: None,
            violations: usize::MAX,
        }
    }

    fn key(&self) -> IndividualKey {
        (self.chromosomes.clone(), self.phenotype.clone())
    }

    fn supports(&self, rule: &Rule) -> bool {
        supported(&self.chromosomes, rule)
    }

    /// Ranking: globally feasible first, then fewer broken rules, then cost.
    fn rank_cmp(&self, other: &Individual) -> Ordering {
        let key = |i: &Individual| (i.feasible_globally != Some(true), i.violations);
        key(self)
            .cmp(&key(other))
            .then(self.cost.total_cmp(&other.cost))
            .then_with(|| self.chromosomes.cmp(&other.chromosomes))
            .then_with(|| self.phenotype.cmp(&other.phenotype))
    }
}

fn supported(chromosomes: &[Vec<usize>], rule: &Rule) -> bool {
    rule.conditions
        .iter()
        .all(|&(m, t)| chromosomes[m].binary_search(&t).is_ok())
}

/// Random chromosomes of `size` tasks per machine with an empty phenotype.
pub fn random_individual<R: Rng>(task_counts: &[usize], size: usize, rng: &mut R) -> Individual {
    let chromosomes = task_counts
        .iter()
        .map(|&p| rand::seq::index::sample(rng, p, size.min(p)).into_vec())
        .collect();
    Individual::new(chromosomes, Vec::new())
}

/// Performs `swaps` exchanges of one activable task between the parents at
/// a random machine each. An exchange that would duplicate a task inside a
/// chromosome is re-drawn.
pub fn crossover<R: Rng>(
    parent_a: &Individual,
    parent_b: &Individual,
    swaps: usize,
    rng: &mut R,
) -> (Individual, Individual) {
    let mut a = Individual::new(parent_a.chromosomes.clone(), parent_a.phenotype.clone());
    let mut b = Individual::new(parent_b.chromosomes.clone(), parent_b.phenotype.clone());
    let m = a.chromosomes.len();
    if m == 0 || a == b {
        return (a, b);
    }
    for _ in 0..swaps {
        for _attempt in 0..32 {
            let i = rng.gen_range(0..m);
            let ia = rng.gen_range(0..a.chromosomes[i].len());
            let ib = rng.gen_range(0..b.chromosomes[i].len());
            let (ta, tb) = (a.chromosomes[i][ia], b.chromosomes[i][ib]);
            if ta == tb {
                break;
            }
            if a.chromosomes[i].contains(&tb) || b.chromosomes[i].contains(&ta) {
                continue;
            }
            a.chromosomes[i][ia] = tb;
            b.chromosomes[i][ib] = ta;
            a.chromosomes[i].sort_unstable();
            b.chromosomes[i].sort_unstable();
            break;
        }
    }
    (a, b)
}

/// Replaces `mutations` random activable tasks with non-active tasks of the
/// same machine. Machines whose chromosome already holds every task are
/// skipped.
pub fn mutate<R: Rng>(
    individual: &Individual,
    task_counts: &[usize],
    mutations: usize,
    rng: &mut R,
) -> Individual {
    let mut out = Individual::new(individual.chromosomes.clone(), individual.phenotype.clone());
    if out.chromosomes.is_empty() {
        return out;
    }
    for _ in 0..mutations {
        let i = rng.gen_range(0..out.chromosomes.len());
        let chromosome = &mut out.chromosomes[i];
        let inactive: Vec<usize> = (0..task_counts[i])
            .filter(|t| chromosome.binary_search(t).is_err())
            .collect();
        let Some(&fresh) = inactive.choose(rng) else {
            continue;
        };
        let slot = rng.gen_range(0..chromosome.len());
        chromosome[slot] = fresh;
        chromosome.sort_unstable();
    }
    out
}

/// Drops phenotype rules whose conditions are not activable and refills up
/// to `quota` with random supported rules compatible with the rest.
pub fn repair_rules<R: Rng>(
    individual: &Individual,
    all_rules: &[Rule],
    quota: usize,
    rng: &mut R,
) -> Individual {
    let mut out = Individual::new(individual.chromosomes.clone(), individual.phenotype.clone());
    let chromosomes = &out.chromosomes;
    out.phenotype.retain(|&k| supported(chromosomes, &all_rules[k]));
    out.phenotype.truncate(quota);
    if out.phenotype.len() < quota {
        let mut candidates: Vec<usize> = (0..all_rules.len())
            .filter(|k| out.phenotype.binary_search(k).is_err() && out.supports(&all_rules[*k]))
            .collect();
        candidates.shuffle(rng);
        for k in candidates {
            if out.phenotype.len() == quota {
                break;
            }
            if out
                .phenotype
                .iter()
                .all(|&j| rules_compatible(&all_rules[j], &all_rules[k]))
            {
                out.phenotype.push(k);
            }
        }
        out.phenotype.sort_unstable();
    }
    out
}

/// How each individual's restricted problem is solved.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluator {
    /// All phenotype rules at once.
    Full,
    /// Iterative injection over the phenotype.
    Iterative(IterativeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub assignment: Assignment,
    pub cost: f64,
    /// First generation in which this assignment was produced.
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best globally feasible cost found so far.
    pub best_cost: Option<f64>,
    /// Globally feasible individuals in this generation.
    pub feasible_count: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneticReport {
    /// Distinct globally feasible results, best first.
    pub ranked: Vec<Ranked>,
    pub generations: usize,
    /// Generation in which the head of `ranked` first appeared.
    pub best_generation: Option<usize>,
    pub history: Vec<GenerationStats>,
    pub engine: EngineStats,
    /// Survivors of the last generation, best first.
    pub population: Vec<Individual>,
}

impl GeneticReport {
    pub fn best(&self) -> Option<&Ranked> {
        self.ranked.first()
    }
}

pub fn solve_genetic(instance: &Instance, config: &GeneticConfig) -> Result<GeneticReport> {
    solve_genetic_with(instance, config, &Evaluator::Full, Vec::new(), &Limits::default())
}

/// Genetic search with each individual evaluated by the iterative solver.
pub fn solve_combined(
    instance: &Instance,
    iterative: &IterativeConfig,
    genetic: &GeneticConfig,
) -> Result<GeneticReport> {
    iterative.validate()?;
    solve_genetic_with(
        instance,
        genetic,
        &Evaluator::Iterative(iterative.clone()),
        Vec::new(),
        &Limits::default(),
    )
}

fn rng_for(seed: u64, generation: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | slot as u64);
    rng
}

struct Evaluation {
    result: Option<Assignment>,
    cost: f64,
    violations: usize,
    engine: EngineStats,
}

fn evaluate(
    instance: &Instance,
    norm: &NormalizedInstance,
    individual: &Individual,
    evaluator: &Evaluator,
    tau: f64,
    limits: &Limits,
) -> Result<Evaluation> {
    let position_of = crate::model::invert(&norm.permutation);
    let mut forbidden = Vec::new();
    for (machine, chromosome) in individual.chromosomes.iter().enumerate() {
        for t in 0..instance.task_counts()[machine] {
            if chromosome.binary_search(&t).is_err() {
                forbidden.push((position_of[machine], t));
            }
        }
    }
    forbidden.sort_unstable();
    let outcome = match evaluator {
        Evaluator::Full => {
            let rules = individual
                .phenotype
                .iter()
                .map(|&k| norm.scaled_rules[k].clone())
                .collect();
            run_engine(norm, rules, &forbidden, tau, limits).map(|run| (run.positions, run.stats))
        }
        Evaluator::Iterative(cfg) => {
            let cfg = IterativeConfig { tau, ..cfg.clone() };
            iterate(norm, &individual.phenotype, &forbidden, &cfg, limits)
                .map(|(positions, stats)| (positions, stats.engine))
        }
    };
    match outcome {
        Ok((positions, engine)) => {
            let assignment = norm.to_original(&positions);
            let cost = total_cost(instance, &assignment)?;
            let violations = check_rules(&assignment, instance.rules()).len();
            Ok(Evaluation {
                result: Some(assignment),
                cost,
                violations,
                engine,
            })
        }
        Err(Error::Infeasible(_) | Error::NoSolutionFound { .. } | Error::MemoryCap { .. }) => {
            Ok(Evaluation {
                result: None,
                cost: f64::INFINITY,
                violations: usize::MAX,
                engine: EngineStats::default(),
            })
        }
        Err(e) => Err(e),
    }
}

fn check_seed(individual: &Individual, counts: &[usize], config: &GeneticConfig, rules: usize) -> Result<()> {
    let shape_ok = individual.chromosomes.len() == counts.len()
        && individual
            .chromosomes
            .iter()
            .zip(counts)
            .all(|(c, &p)| c.len() == config.active_tasks_per_machine && c.iter().all(|&t| t < p));
    if !shape_ok || individual.phenotype.iter().any(|&k| k >= rules) {
        return Err(Error::Config(
            "seeded individual does not match the instance and chromosome size".into(),
        ));
    }
    Ok(())
}

/// Full genetic loop. `seeds` are placed in the initial population ahead of
/// random individuals (after rule repair); extra seeds beyond the population
/// size are ignored.
pub fn solve_genetic_with(
    instance: &Instance,
    config: &GeneticConfig,
    evaluator: &Evaluator,
    seeds: Vec<Individual>,
    limits: &Limits,
) -> Result<GeneticReport> {
    config.validate(instance)?;
    let norm = NormalizedInstance::prepare(instance);
    let counts = instance.task_counts();
    let rules = instance.rules();
    let k = config.active_tasks_per_machine;
    let quota = config.rules_per_individual;

    let mut population: Vec<Individual> = Vec::with_capacity(config.population);
    for (slot, seed) in seeds.into_iter().take(config.population).enumerate() {
        check_seed(&seed, &counts, config, rules.len())?;
        let mut rng = rng_for(config.seed, 0, slot);
        population.push(repair_rules(&seed, rules, quota, &mut rng));
    }
    refill(&mut population, &counts, config, rules, 0);

    let mut cache: HashMap<IndividualKey, (Option<Assignment>, f64, usize)> = HashMap::new();
    // assignment -> (cost, first generation)
    let mut archive: BTreeMap<Assignment, (f64, usize)> = BTreeMap::new();
    let mut history = Vec::new();
    let mut engine = EngineStats::default();
    let mut best: Option<f64> = None;
    let mut stable = 0;
    let mut generations = 0;

    for generation in 0..config.max_generations {
        limits.check_deadline()?;
        generations = generation + 1;
        let pending: Vec<usize> = population
            .iter()
            .enumerate()
            .filter(|(_, ind)| ind.feasible_globally.is_none())
            .filter(|(_, ind)| !cache.contains_key(&ind.key()))
            .map(|(i, _)| i)
            .collect();
        let mut unique: Vec<usize> = Vec::new();
        let mut seen = HashSet::new();
        for i in pending {
            if seen.insert(population[i].key()) {
                unique.push(i);
            }
        }
        let evaluated: Vec<Result<Evaluation>> = unique
            .par_iter()
            .map(|&i| evaluate(instance, &norm, &population[i], evaluator, config.tau, limits))
            .collect();
        let evaluations = evaluated.len();
        for (&i, ev) in unique.iter().zip(evaluated) {
            let ev = ev?;
            engine.merge(&ev.engine);
            cache.insert(population[i].key(), (ev.result, ev.cost, ev.violations));
        }
        for ind in &mut population {
            if ind.feasible_globally.is_none() {
                let (result, cost, violations) = cache[&ind.key()].clone();
                ind.feasible_globally = Some(result.is_some() && violations == 0);
                ind.result = result;
                ind.cost = cost;
                ind.violations = violations;
            }
        }
        population.sort_by(Individual::rank_cmp);

        let mut feasible_count = 0;
        for ind in &population {
            if ind.feasible_globally == Some(true) {
                feasible_count += 1;
                let a = ind.result.clone().expect("feasible individuals carry a result");
                archive.entry(a).or_insert((ind.cost, generation));
            }
        }
        let current = archive.values().map(|v| v.0).min_by(f64::total_cmp);
        match (best, current) {
            (Some(b), Some(c)) if b == c => stable += 1,
            _ => stable = 0,
        }
        best = current;
        log::debug!(
            "generation={generation} best={best:?} feasible={feasible_count} evaluations={evaluations}"
        );
        history.push(GenerationStats {
            generation,
            best_cost: best,
            feasible_count,
            evaluations,
        });
        if stable >= 3 || generation + 1 == config.max_generations {
            break;
        }

        population = breed(&population, &counts, config, rules, generation + 1, k);
    }

    population.truncate(config.survivors());
    let mut ranked: Vec<Ranked> = archive
        .into_iter()
        .map(|(assignment, (cost, generation))| Ranked {
            assignment,
            cost,
            generation,
        })
        .collect();
    ranked.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.assignment.cmp(&b.assignment)));
    Ok(GeneticReport {
        best_generation: ranked.first().map(|r| r.generation),
        ranked,
        generations,
        history,
        engine,
        population,
    })
}

/// Survivors (unchanged), crossover children and mutated copies of the
/// survivors, deduplicated and refilled with random individuals.
fn breed(
    ranked: &[Individual],
    counts: &[usize],
    config: &GeneticConfig,
    rules: &[Rule],
    generation: usize,
    _k: usize,
) -> Vec<Individual> {
    let survivors = &ranked[..config.survivors().min(ranked.len())];
    let mut next: Vec<Individual> = survivors.to_vec();
    let mut offspring = Vec::new();
    let mut slot = 0;
    let mut stream = || {
        slot += 1;
        rng_for(config.seed, generation, slot)
    };
    let pairs = survivors.len() / 2;
    for p in 0..survivors.len() {
        if p < pairs * 2 && p % 2 == 0 {
            let mut rng = stream();
            let (a, b) = crossover(&survivors[p], &survivors[p + 1], config.crossover_swaps, &mut rng);
            offspring.push(repair_rules(&a, rules, config.rules_per_individual, &mut rng));
            offspring.push(repair_rules(&b, rules, config.rules_per_individual, &mut rng));
        }
        let mut rng = stream();
        let child = mutate(&survivors[p], counts, config.mutations_per_child, &mut rng);
        offspring.push(repair_rules(&child, rules, config.rules_per_individual, &mut rng));
    }
    let mut seen: HashSet<_> = next.iter().map(Individual::key).collect();
    for child in offspring {
        if next.len() == config.population {
            break;
        }
        if seen.insert(child.key()) {
            next.push(child);
        }
    }
    refill(&mut next, counts, config, rules, generation);
    next
}

fn refill(
    population: &mut Vec<Individual>,
    counts: &[usize],
    config: &GeneticConfig,
    rules: &[Rule],
    generation: usize,
) {
    let mut seen: HashSet<_> = population.iter().map(Individual::key).collect();
    let mut slot = 1 << 16;
    let mut misses = 0;
    while population.len() < config.population {
        let mut rng = rng_for(config.seed, generation, slot);
        slot += 1;
        let fresh = random_individual(counts, config.active_tasks_per_machine, &mut rng);
        let fresh = repair_rules(&fresh, rules, config.rules_per_individual, &mut rng);
        // tiny search spaces may not hold enough distinct individuals
        if seen.insert(fresh.key()) || misses >= 64 {
            population.push(fresh);
        } else {
            misses += 1;
        }
    }
}
