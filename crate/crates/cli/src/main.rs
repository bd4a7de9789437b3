use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod bench;
mod solve;

use tnsched::casegen::{generate, GenSpec};
use tnsched::format::{instance_to_json, parse_assignment, parse_instance};
use tnsched::{check_rules, total_cost, NormalizedInstance};

#[derive(Parser)]
#[command(name = "tnsched", version, about = "Tensor-network task scheduling under conditional rules")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Solve an instance file.
    Solve(solve::SolveArgs),
    /// Check an assignment against an instance.
    Verify(VerifyArgs),
    /// Run a seeded benchmark suite and print CSV rows.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short = 'm', long, default_value_t = 10)]
    machines: usize,
    #[arg(short = 'p', long, default_value_t = 10)]
    tasks: usize,
    #[arg(short = 'r', long, default_value_t = 30)]
    rules: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_conditions: usize,
    #[arg(long, default_value_t = 2)]
    max_conditions: usize,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    /// JSON array of task indices, or a solve result document.
    assignment: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Full,
    Iterative,
    Genetic,
    Combined,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Iterative => "iterative",
            Method::Genetic => "genetic",
            Method::Combined => "combined",
            Method::Oracle => "oracle",
        }
    }
}

/// Exit status for solver outcomes without a feasible answer.
pub const NO_SOLUTION: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Solve(args) => solve::run(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bench(args) => bench::run(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn read_instance(path: &Path) -> Result<tnsched::Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let spec = GenSpec::new(args.machines, args.tasks, args.rules, args.seed)
        .with_conditions(args.min_conditions, args.max_conditions);
    let instance = match generate(&spec) {
        Ok(instance) => instance,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(NO_SOLUTION));
        }
    };
    emit(&instance_to_json(&instance), args.output.as_deref())?;
    eprintln!(
        "generated {} machines x {} tasks with {} rules (seed {})",
        args.machines, args.tasks, args.rules, args.seed
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct VerifyReport {
    feasible: bool,
    raw_cost: f64,
    normalized_cost: f64,
    violated_rules: Vec<usize>,
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let instance = read_instance(&args.instance)?;
    let text = fs::read_to_string(&args.assignment)
        .with_context(|| format!("reading {}", args.assignment.display()))?;
    let x = parse_assignment(&text).with_context(|| format!("parsing {}", args.assignment.display()))?;
    let raw_cost = total_cost(&instance, &x)?;
    let violated_rules = check_rules(&x, instance.rules());
    let norm = NormalizedInstance::prepare(&instance);
    let report = VerifyReport {
        feasible: violated_rules.is_empty(),
        raw_cost,
        normalized_cost: norm.normalize_value(raw_cost),
        violated_rules,
    };
    let mut doc = serde_json::to_string_pretty(&report)?;
    doc.push('\n');
    emit(&doc, None)?;
    Ok(if report.feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NO_SOLUTION)
    })
}
