use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use stap_core::cost_analysis::{al_cost, non_al_cost, CostModel};
use stap_core::experiment::{self, Experiment, ExperimentConfig, RoundOutcome};
use stap_core::metrics::MetricsEntry;
use stap_core::{PdeKind, StapError};

#[derive(Parser)]
#[command(name = "stap", version, about = "Active learning of PDE surrogates with selective time-step acquisition")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "STAP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a pool of initial conditions and a ground-truth test set.
    GenPool {
        #[arg(long)]
        pde: PdeKind,
        #[arg(long, default_value_t = 512)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        test_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Recompute a round's test metrics from its stored committee.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        /// Defaults to the last persisted round.
        #[arg(long)]
        round: Option<usize>,
    },
    /// Print the 0/1 sampling-pattern grid of a round as CSV.
    Patterns {
        #[arg(long)]
        run_dir: PathBuf,
        /// Defaults to the last persisted round.
        #[arg(long)]
        round: Option<usize>,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the wall-clock cost of active and passive learning.
    Cost {
        #[arg(long)]
        params: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<StapError> for Failure {
    fn from(e: StapError) -> Self {
        if e.is_validation() {
            Failure::Usage(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn read_input<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {what} {}", path.display()))
        .map_err(Failure::Usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid {what} {}", path.display()))
        .map_err(Failure::Usage)
}

fn pick_round(run_dir: &Path, round: Option<usize>) -> Result<usize, Failure> {
    if !run_dir.join("config.json").is_file() {
        return Err(usage(format!("{} is not a run directory", run_dir.display())));
    }
    let rounds = experiment::persisted_rounds(run_dir)?;
    match round {
        None => rounds.last().copied().ok_or_else(|| usage(format!("no rounds under {}", run_dir.display()))),
        Some(r) if rounds.contains(&r) => Ok(r),
        Some(r) => Err(usage(format!("round {r} not found under {}", run_dir.display()))),
    }
}

fn gen_pool(pde: PdeKind, count: usize, test_count: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    if count == 0 || test_count == 0 {
        return Err(usage("--count and --test-count must be at least 1"));
    }
    let config = ExperimentConfig { pool_size: count, test_size: test_count, master_seed: seed, ..ExperimentConfig::desk_default(pde) };
    let (pool, test) = experiment::generate_pool_and_test(&config)?;
    experiment::write_pool_and_test(out, &config, &pool, &test)?;
    println!("pool: {} initial conditions (master_seed={seed} stream=pool)", pool.len());
    println!("test: {} trajectories of {} steps (master_seed={seed} stream=test)", test.len(), config.pde.trajectory_length);
    println!("written to {}", out.display());
    Ok(())
}

fn print_round(o: &RoundOutcome) {
    let m = &o.metrics;
    println!(
        "{:>5} {:>8} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>8.3}",
        o.round, o.dataset_size, o.solver_calls, m.log_rmse, m.log_nrmse, m.log_mae, m.q50
    );
}

fn run(config_path: &Path, out: Option<PathBuf>, force: bool) -> Result<(), Failure> {
    let mut config: ExperimentConfig = read_input(config_path, "config")?;
    let out = out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set output_dir"))?;
    config.output_dir = Some(out.clone());
    config.validate()?;
    if out.exists() && fs::read_dir(&out)?.next().is_some() {
        if !force {
            return Err(usage(format!("{} already exists; pass --force to replace it", out.display())));
        }
        if !out.join("config.json").is_file() {
            return Err(usage(format!("{} is not a previous run directory; refusing to replace it", out.display())));
        }
        fs::remove_dir_all(&out)?;
    }
    let experiment = Experiment::new(config)?;
    println!("{:>5} {:>8} {:>8} {:>10} {:>10} {:>10} {:>8}", "round", "pairs", "solver", "log_rmse", "log_nrmse", "log_mae", "q50");
    let artifacts = experiment.run_with(Some(&out), |o| {
        print_round(o);
        let _ = std::io::stdout().flush();
    })?;
    if let Some(avg) = artifacts.report.averaged {
        println!(
            "rounds {}..={} averaged: log_rmse {:.4} log_nrmse {:.4} log_mae {:.4} (natural log)",
            avg.first_round, avg.last_round, avg.log_rmse, avg.log_nrmse, avg.log_mae
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn bits_equal(a: &MetricsEntry, b: &MetricsEntry) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn eval(run_dir: &Path, round: Option<usize>) -> Result<(), Failure> {
    let round = pick_round(run_dir, round)?;
    let (stored, fresh) = experiment::reevaluate_round(run_dir, round)?;
    println!("round {round}");
    for (name, value) in MetricsEntry::NAMES.iter().zip(fresh.values()) {
        println!("{name:>10} {value:.6}");
    }
    if !bits_equal(&stored, &fresh) {
        return Err(Failure::Runtime(anyhow!("recomputed metrics differ from the stored report")));
    }
    println!("matches stored report");
    Ok(())
}

fn patterns(run_dir: &Path, round: Option<usize>, out: Option<&Path>) -> Result<(), Failure> {
    let round = pick_round(run_dir, round)?;
    let outcome: RoundOutcome = experiment::io::read_json(&experiment::round_dir(run_dir, round).join("outcome.json"))?;
    let config: ExperimentConfig = experiment::io::read_json(&run_dir.join("config.json"))?;
    let csv = outcome.patterns_csv(config.pde.trajectory_length);
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("cannot write {}", path.display())).map_err(Failure::Runtime)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cost(params: &Path) -> Result<(), Failure> {
    let model: CostModel = read_input(params, "cost parameters")?;
    let passive = non_al_cost(&model)?;
    let active = al_cost(&model)?;
    println!("{:<10} {:>10} {:>10} {:>10} {:>10}", "", "acquire", "train", "select", "total");
    println!("{:<10} {:>10.1} {:>10.1} {:>10.1} {:>10.1}", "non-AL", passive.acquire, passive.train, 0.0, passive.total);
    println!("{:<10} {:>10.1} {:>10.1} {:>10.1} {:>10.1}", "AL", active.acquire, active.train, active.select, active.total);
    println!("AL rounds: {}", active.rounds);
    println!("AL reduces cost: {}", if passive.total > active.total { "T" } else { "F" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::GenPool { pde, count, test_count, seed, out } => gen_pool(pde, count, test_count, seed, &out),
        Command::Run { config, out, force } => run(&config, out, force),
        Command::Eval { run_dir, round } => eval(&run_dir, round),
        Command::Patterns { run_dir, round, out } => patterns(&run_dir, round, out.as_deref()),
        Command::Cost { params } => cost(&params),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
