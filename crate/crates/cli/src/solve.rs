use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use tnsched::engine::{run_engine, EngineStats};
use tnsched::format::{parse_config, ConfigFile};
use tnsched::solvers::{
    solve_genetic_with, solve_iterative_with, Evaluator, GenerationStats, GeneticConfig,
};
use tnsched::{brute_force, check_rules, total_cost, Assignment, Error, Instance, IterativeConfig, Limits, NormalizedInstance};

use crate::{emit, read_instance, Method, NO_SOLUTION};

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Full)]
    pub method: Method,
    /// JSON file with solver settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub chromosome_size: Option<usize>,
    #[arg(long)]
    pub rules_per_individual: Option<usize>,
    #[arg(long)]
    pub mutations: Option<usize>,
    #[arg(long)]
    pub survival_ratio: Option<f64>,
    #[arg(long)]
    pub max_generations: Option<usize>,
    #[arg(long)]
    pub crossover_swaps: Option<usize>,
    #[arg(long)]
    pub memory_cap_mb: Option<u64>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Result document path; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Line-delimited per-generation records (genetic methods).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Include wall time in the result document.
    #[arg(long)]
    pub timing: bool,
}

/// Solver settings after merging defaults, the config file and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub iterative: IterativeConfig,
    pub genetic: GeneticConfig,
    pub limits: LimitSpec,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LimitSpec {
    pub memory_cap_mb: Option<u64>,
    pub timeout_s: Option<f64>,
}

impl LimitSpec {
    /// Starts the timeout clock.
    pub fn start(&self) -> Limits {
        Limits {
            memory_cap_bytes: self.memory_cap_mb.map(|mb| mb.saturating_mul(1 << 20)),
            deadline: self
                .timeout_s
                .map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0))),
        }
    }
}

impl Settings {
    pub fn from_file(file: &ConfigFile) -> Settings {
        let mut s = Settings {
            iterative: IterativeConfig::default(),
            genetic: GeneticConfig::default(),
            limits: LimitSpec::default(),
        };
        if let Some(t) = file.tau {
            s.iterative.tau = t;
            s.genetic.tau = t;
        }
        let g = &mut s.genetic;
        set(&mut s.iterative.max_iterations, file.max_iterations);
        set(&mut g.population, file.population);
        set(&mut g.active_tasks_per_machine, file.active_tasks_per_machine);
        set(&mut g.rules_per_individual, file.rules_per_individual);
        set(&mut g.mutations_per_child, file.mutations_per_child);
        set(&mut g.survival_ratio, file.survival_ratio);
        set(&mut g.max_generations, file.max_generations);
        set(&mut g.crossover_swaps, file.crossover_swaps);
        set(&mut g.seed, file.seed);
        s
    }

    fn from_args(args: &SolveArgs) -> Result<Settings> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let mut s = Settings::from_file(&file);
        if let Some(t) = args.tau {
            s.iterative.tau = t;
            s.genetic.tau = t;
        }
        let g = &mut s.genetic;
        set(&mut s.iterative.max_iterations, args.max_iterations);
        set(&mut g.population, args.population);
        set(&mut g.active_tasks_per_machine, args.chromosome_size);
        set(&mut g.rules_per_individual, args.rules_per_individual);
        set(&mut g.mutations_per_child, args.mutations);
        set(&mut g.survival_ratio, args.survival_ratio);
        set(&mut g.max_generations, args.max_generations);
        set(&mut g.crossover_swaps, args.crossover_swaps);
        set(&mut g.seed, args.seed);
        s.limits = LimitSpec {
            memory_cap_mb: args.memory_cap_mb,
            timeout_s: args.timeout_s,
        };
        Ok(s)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DocStats {
    pub iterations: usize,
    pub generations: usize,
    pub best_generation: Option<usize>,
    pub active_rules: usize,
    pub contractions: usize,
    pub max_boundary: usize,
    pub max_intermediate: usize,
}

impl DocStats {
    fn absorb(&mut self, e: &EngineStats) {
        self.contractions += e.contractions;
        self.max_boundary = self.max_boundary.max(e.max_boundary);
        self.max_intermediate = self.max_intermediate.max(e.max_intermediate);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedDoc {
    pub assignment: Assignment,
    pub raw_cost: f64,
    pub generation: usize,
}

/// Raw solver outcome shared by `solve` and `bench`.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub assignment: Option<Assignment>,
    pub ranked: Vec<RankedDoc>,
    pub history: Vec<GenerationStats>,
    pub stats: DocStats,
    /// Set when the solver gave up without an answer.
    pub failure: Option<String>,
    /// Short status tag: ok, no_solution, memory_cap, timeout or size_guard.
    pub status: &'static str,
}

/// Runs `method`. Invalid settings come back as `Err`; solver-side failures
/// (no solution, memory cap, timeout, size guard) land in `Outcome::failure`.
pub fn execute(instance: &Instance, method: Method, settings: &Settings) -> Result<Outcome> {
    let limits = settings.limits.start();
    let mut out = Outcome {
        status: "ok",
        ..Outcome::default()
    };
    let result: tnsched::Result<()> = (|| {
        match method {
            Method::Full => {
                settings.iterative.validate()?;
                let norm = NormalizedInstance::prepare(instance);
                let run = run_engine(&norm, norm.scaled_rules.clone(), &[], settings.iterative.tau, &limits)?;
                out.stats.absorb(&run.stats);
                out.stats.active_rules = instance.rules().len();
                out.assignment = Some(run.assignment);
            }
            Method::Iterative => {
                let s = solve_iterative_with(instance, &settings.iterative, &limits)?;
                out.stats.iterations = s.stats.iterations;
                out.stats.active_rules = s.stats.active_rules;
                out.stats.absorb(&s.stats.engine);
                out.assignment = Some(s.assignment);
            }
            Method::Genetic | Method::Combined => {
                let evaluator = if method == Method::Genetic {
                    Evaluator::Full
                } else {
                    settings.iterative.validate()?;
                    Evaluator::Iterative(settings.iterative.clone())
                };
                let report = solve_genetic_with(instance, &settings.genetic, &evaluator, Vec::new(), &limits)?;
                out.stats.generations = report.generations;
                out.stats.best_generation = report.best_generation;
                out.stats.active_rules = settings.genetic.rules_per_individual;
                out.stats.absorb(&report.engine);
                out.assignment = report.best().map(|r| r.assignment.clone());
                out.ranked = report
                    .ranked
                    .iter()
                    .map(|r| RankedDoc {
                        assignment: r.assignment.clone(),
                        raw_cost: r.cost,
                        generation: r.generation,
                    })
                    .collect();
                out.history = report.history;
                if out.assignment.is_none() {
                    out.status = "no_solution";
                    out.failure = Some("no globally feasible individual was found".into());
                }
            }
            Method::Oracle => {
                let report = brute_force(instance)?;
                out.assignment = report.optimum;
                if out.assignment.is_none() {
                    out.status = "no_solution";
                    out.failure = Some("the instance has no feasible assignment".into());
                }
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(out),
        Err(
            e @ (Error::NoSolutionFound { .. }
            | Error::Infeasible(_)
            | Error::MemoryCap { .. }
            | Error::Timeout
            | Error::SizeGuard { .. }),
        ) => {
            out.status = match e {
                Error::MemoryCap { .. } => "memory_cap",
                Error::Timeout => "timeout",
                Error::SizeGuard { .. } => "size_guard",
                _ => "no_solution",
            };
            out.assignment = None;
            out.failure = Some(e.to_string());
            Ok(out)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Serialize)]
pub struct ResultDoc {
    pub method: &'static str,
    pub assignment: Option<Assignment>,
    pub raw_cost: Option<f64>,
    pub normalized_cost: Option<f64>,
    pub feasible: bool,
    pub violated_rules: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ranked: Vec<RankedDoc>,
    pub stats: DocStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ResultDoc {
    pub fn build(instance: &Instance, method: Method, outcome: &Outcome) -> Result<ResultDoc> {
        let norm = NormalizedInstance::prepare(instance);
        let (raw_cost, violated_rules) = match &outcome.assignment {
            Some(x) => (Some(total_cost(instance, x)?), check_rules(x, instance.rules())),
            None => (None, Vec::new()),
        };
        Ok(ResultDoc {
            method: method.name(),
            assignment: outcome.assignment.clone(),
            raw_cost,
            normalized_cost: raw_cost.map(|c| norm.normalize_value(c)),
            feasible: outcome.assignment.is_some() && violated_rules.is_empty(),
            violated_rules,
            error: outcome.failure.clone(),
            ranked: outcome.ranked.clone(),
            stats: outcome.stats.clone(),
            wall_time_s: None,
        })
    }
}

pub fn run(args: &SolveArgs) -> Result<ExitCode> {
    let instance = read_instance(&args.instance)?;
    let settings = Settings::from_args(args)?;
    let started = Instant::now();
    let outcome = execute(&instance, args.method, &settings)?;
    let elapsed = started.elapsed().as_secs_f64();

    if let Some(path) = &args.stats {
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for record in &outcome.history {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }

    let mut doc = ResultDoc::build(&instance, args.method, &outcome)?;
    if args.timing {
        doc.wall_time_s = Some(elapsed);
    }
    if let Some(msg) = &doc.error {
        log::warn!("{} solver gave no answer: {msg}", args.method.name());
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(&text, args.output.as_deref())?;
    Ok(if doc.feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NO_SOLUTION)
    })
}
