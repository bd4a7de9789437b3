use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use tnsched::casegen::{generate, small_spec, GenSpec};
use tnsched::format::ConfigFile;
use tnsched::{brute_force, NormalizedInstance};

use crate::solve::{execute, LimitSpec, ResultDoc, Settings};
use crate::{emit, Method};

/// Largest state space for which the oracle gap is computed.
const ORACLE_STATES: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// 3 to 5 machines, 2 to 4 tasks, 1 to 6 rules.
    Small,
    /// 10 machines x 10 tasks x 30 rules.
    PaperIterative,
    /// 10 machines x 10 tasks x 1000 rules.
    PaperGenetic,
    /// No cases; prints only the header.
    Empty,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Suite::Small)]
    pub suite: Suite,
    /// Comma-separated methods; each suite has its own default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 20)]
    pub cases: u64,
    /// First instance seed; later cases use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the generator's condition-count range, e.g. `3` or `2..3`.
    #[arg(long)]
    pub conditions: Option<String>,
    #[arg(long)]
    pub memory_cap_mb: Option<u64>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Fill the time_s column with wall times.
    #[arg(long)]
    pub timing: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    suite: &'static str,
    seed: u64,
    machines: usize,
    tasks: usize,
    rules: usize,
    method: &'static str,
    status: String,
    feasible: bool,
    raw_cost: Option<f64>,
    normalized_cost: Option<f64>,
    oracle_gap: Option<f64>,
    iterations: usize,
    generations: usize,
    best_generation: Option<usize>,
    max_boundary: usize,
    time_s: Option<f64>,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Small => "small",
            Suite::PaperIterative => "paper-iterative",
            Suite::PaperGenetic => "paper-genetic",
            Suite::Empty => "empty",
        }
    }

    fn spec(self, seed: u64) -> Option<GenSpec> {
        match self {
            Suite::Small => Some(small_spec(seed)),
            Suite::PaperIterative => Some(GenSpec::new(10, 10, 30, seed)),
            Suite::PaperGenetic => Some(GenSpec::new(10, 10, 1000, seed)),
            Suite::Empty => None,
        }
    }

    fn default_methods(self) -> Vec<Method> {
        match self {
            Suite::Small => vec![Method::Full, Method::Iterative],
            Suite::PaperIterative => vec![Method::Iterative],
            Suite::PaperGenetic => vec![Method::Genetic],
            Suite::Empty => Vec::new(),
        }
    }
}

fn parse_conditions(text: &str) -> Result<(usize, usize)> {
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse()?, b.trim().parse()?),
        None => {
            let v = text.trim().parse()?;
            (v, v)
        }
    };
    Ok((lo, hi))
}

fn bench_case(
    suite: Suite,
    spec: &GenSpec,
    methods: &[Method],
    limits: LimitSpec,
    timing: bool,
) -> Vec<Row> {
    let blank = |method: Method, status: String| Row {
        suite: suite.name(),
        seed: spec.seed,
        machines: spec.machines,
        tasks: spec.counts().into_iter().max().unwrap_or(0),
        rules: spec.rule_count,
        method: method.name(),
        status,
        feasible: false,
        raw_cost: None,
        normalized_cost: None,
        oracle_gap: None,
        iterations: 0,
        generations: 0,
        best_generation: None,
        max_boundary: 0,
        time_s: None,
    };
    let instance = match generate(spec) {
        Ok(i) => i,
        Err(e) => {
            return methods
                .iter()
                .map(|&m| blank(m, format!("generation_error: {e}")))
                .collect()
        }
    };
    let norm = NormalizedInstance::prepare(&instance);
    let oracle_norm = (instance.state_count() <= ORACLE_STATES)
        .then(|| brute_force(&instance).ok())
        .flatten()
        .filter(|r| r.optimum.is_some())
        .map(|r| norm.normalize_value(r.optimal_cost));

    let mut settings = Settings::from_file(&ConfigFile::default());
    settings.genetic.seed = spec.seed;
    settings.limits = limits;
    methods
        .iter()
        .map(|&method| {
            let started = Instant::now();
            let outcome = execute(&instance, method, &settings);
            let elapsed = started.elapsed().as_secs_f64();
            let mut row = blank(method, String::new());
            match outcome.and_then(|o| Ok((ResultDoc::build(&instance, method, &o)?, o))) {
                Ok((doc, o)) => {
                    row.status = o.status.to_string();
                    row.feasible = doc.feasible;
                    row.raw_cost = doc.raw_cost;
                    row.normalized_cost = doc.normalized_cost;
                    row.oracle_gap = match (doc.normalized_cost, oracle_norm) {
                        (Some(c), Some(o)) => Some(c - o),
                        _ => None,
                    };
                    row.iterations = doc.stats.iterations;
                    row.generations = doc.stats.generations;
                    row.best_generation = doc.stats.best_generation;
                    row.max_boundary = doc.stats.max_boundary;
                }
                Err(e) => row.status = format!("error: {e}"),
            }
            if timing {
                row.time_s = Some(elapsed);
            }
            row
        })
        .collect()
}

pub fn run(args: &BenchArgs) -> Result<ExitCode> {
    let methods = if args.methods.is_empty() {
        args.suite.default_methods()
    } else {
        args.methods.clone()
    };
    let conditions = args.conditions.as_deref().map(parse_conditions).transpose()?;
    let limits = LimitSpec {
        memory_cap_mb: args.memory_cap_mb,
        timeout_s: args.timeout_s,
    };
    let specs: Vec<GenSpec> = (0..args.cases)
        .filter_map(|i| args.suite.spec(args.seed + i))
        .map(|s| match conditions {
            Some((lo, hi)) => s.with_conditions(lo, hi),
            None => s,
        })
        .collect();
    let rows: Vec<Vec<Row>> = specs
        .par_iter()
        .map(|spec| bench_case(args.suite, spec, &methods, limits, args.timing))
        .collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    if specs.is_empty() {
        writer.write_record([
            "suite", "seed", "machines", "tasks", "rules", "method", "status", "feasible",
            "raw_cost", "normalized_cost", "oracle_gap", "iterations", "generations",
            "best_generation", "max_boundary", "time_s",
        ])?;
    }
    for row in rows.iter().flatten() {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner()?;
    emit(&String::from_utf8(bytes)?, args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
