//! Command-line driver: run, compare, validate and oracle subcommands.

pub mod oracle;
pub mod policy;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gospa_sm::planners::Policy;
use gospa_sm::rng::SeedKey;
use gospa_sm::simulator::{run_batch, run_comparison, write_outputs, PolicyBatch, ScenarioConfig, Summary};

use policy::{override_policy, parse_policy, Overrides};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration: exit status 1.
    Config(String),
    /// Failure while running: exit status 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gospa-sm", version, about = "GOSPA-driven sensor management experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo batch of one policy.
    Run(RunArgs),
    /// Paired-seed batches of several policies.
    Compare(RunArgs),
    /// Parse and validate a config, printing the resolved document.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Small-instance planner and bound checks.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// `name[:key=value,...]` or `mcts-N`; repeat for compare.
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    /// MCTS node budget.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Discount factor for MCTS and exhaustive planning.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Worker threads for the Monte Carlo runs.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random micro-scenarios for the planner check.
    #[arg(long, default_value_t = 10)]
    pub cases: usize,
    /// Posteriors for the bound check.
    #[arg(long, default_value_t = 100)]
    pub bound_cases: usize,
    #[arg(long, default_value_t = 2000)]
    pub bound_samples: usize,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_json_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The config with command-line overrides applied and the policies each
/// batch will use.
pub fn resolve(args: &RunArgs) -> Result<(ScenarioConfig, Vec<Policy>), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.mc_runs = runs;
    }
    if args.parallel == Some(0) {
        return Err(CliError::Config("--parallel must be at least 1".into()));
    }
    let overrides = Overrides {
        budget: args.budget,
        lambda: args.lambda,
    };
    cfg.policy = override_policy(&cfg.policy, overrides)?;
    let policies = if args.policies.is_empty() {
        vec![cfg.policy.clone()]
    } else {
        args.policies
            .iter()
            .map(|p| parse_policy(p, overrides))
            .collect::<Result<Vec<_>, _>>()?
    };
    if let [only] = policies.as_slice() {
        cfg.policy = only.clone();
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok((cfg, policies))
}

fn write_resolved(out: &Path, cfg: &ScenarioConfig, policies: &[Policy]) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(runtime)?;
    fs::write(out.join("resolved_config.json"), cfg.to_json_pretty() + "\n").map_err(runtime)?;
    let list = serde_json::to_string_pretty(policies).map_err(runtime)?;
    fs::write(out.join("policies.json"), list + "\n").map_err(runtime)
}

fn print_table(summary: &Summary) {
    println!(
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12}",
        "policy", "rms", "loc", "missed", "false", "after_trap", "step_ms"
    );
    for p in &summary.policies {
        let trap = p.rms_after_trap.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<16} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>12} {:>12.3}",
            p.policy,
            p.rms_gospa,
            p.rms_loc,
            p.rms_missed,
            p.rms_false,
            trap,
            p.mean_step_seconds * 1e3
        );
    }
}

pub fn run(args: &RunArgs) -> Result<Summary, CliError> {
    let (cfg, policies) = resolve(args)?;
    if policies.len() != 1 {
        return Err(CliError::Config("run takes at most one --policy; use compare".into()));
    }
    let batch = run_batch(&cfg, args.parallel).map_err(runtime)?;
    finish(&args.out, &cfg, &policies, &[batch], false)
}

pub fn compare(args: &RunArgs) -> Result<Summary, CliError> {
    let (cfg, policies) = resolve(args)?;
    if policies.len() < 2 {
        return Err(CliError::Config("compare needs at least two --policy values".into()));
    }
    let batches = run_comparison(&cfg, &policies, args.parallel).map_err(runtime)?;
    finish(&args.out, &cfg, &policies, &batches, true)
}

fn finish(
    out: &Path,
    cfg: &ScenarioConfig,
    policies: &[Policy],
    batches: &[PolicyBatch],
    comparison: bool,
) -> Result<Summary, CliError> {
    write_resolved(out, cfg, policies)?;
    let summary = write_outputs(out, batches, comparison).map_err(runtime)?;
    print_table(&summary);
    Ok(summary)
}

pub fn oracle(args: &OracleArgs) -> Result<bool, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let planner = oracle::planner_equivalence(&cfg, args.cases).map_err(runtime)?;
    let key = SeedKey::new(cfg.seed).with(0xB0B0);
    let bound = oracle::bound_check(cfg.gospa_c, args.bound_cases, args.bound_samples, key);
    println!("{planner}");
    println!("{bound}");
    Ok(!planner.failed() && !bound.failed())
}

/// Runs the CLI and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Validate { config } => load_config(config).map(|cfg| {
            println!("{}", cfg.to_json_pretty());
            true
        }),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
