//! The round-based active-learning driver and its on-disk artifacts.
//!
//! Round 0 trains a committee on the initial dataset. Every later round
//! builds a batch with the previous committee, acquires it with interleaved
//! rollouts, and trains a fresh committee on the grown dataset. Every random
//! choice derives from the master seed, so a run is a pure function of its
//! configuration.

mod config;
pub mod io;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;

use crate::error::{Result, StapError};
use crate::initial_conditions::generate_initial_conditions;
use crate::metrics::{evaluate_committee, MetricsEntry, MetricsReport, RoundMetrics};
use crate::rng::RandomStream;
use crate::rollout::{rollout_interleaved, SamplingPattern};
use crate::selection::{build_batch, CandidatePool};
use crate::solvers::{Solver, State, Trajectory};
use crate::surrogate::{read_committee, train_committee, write_committee, Committee, Dataset, NormStats, TrainConfig, TransitionPair};

/// Warmed-up pool initial conditions and ground-truth test trajectories.
pub fn generate_pool_and_test(config: &ExperimentConfig) -> Result<(Vec<State>, Vec<Trajectory>)> {
    let solver = Solver::new(&config.pde)?;
    let root = RandomStream::new(config.master_seed);
    let (pool, _) = generate_initial_conditions(&config.ic, &solver, &root, "pool", config.pool_size)?;
    let (test_ics, _) = generate_initial_conditions(&config.ic, &solver, &root, "test", config.test_size)?;
    let steps = config.pde.trajectory_length;
    let test = test_ics.par_iter().map(|u| solver.evolve(u, steps)).collect::<Result<Vec<_>>>()?;
    Ok((pool, test))
}

fn pairs_of(trajectory: &Trajectory) -> impl Iterator<Item = TransitionPair> + '_ {
    trajectory.states.windows(2).map(|w| TransitionPair { input: w[0].clone(), output: w[1].clone() })
}

/// Full solver trajectories from the first `initial_trajectories` pool
/// entries; normalisation comes from these trajectories alone.
pub fn build_initial_dataset(
    pool: &[State],
    config: &ExperimentConfig,
    solver: &Solver,
) -> Result<(Dataset, CandidatePool)> {
    let n = config.initial_trajectories;
    if pool.len() <= n {
        return Err(StapError::PoolExhausted { remaining: n + 1 - pool.len() });
    }
    let steps = config.pde.trajectory_length;
    let trajectories = pool[..n].par_iter().map(|u| solver.evolve(u, steps)).collect::<Result<Vec<_>>>()?;
    let norm = NormStats::from_trajectories(&trajectories)?;
    let pairs = trajectories.iter().flat_map(pairs_of).collect();
    let remaining = CandidatePool { indices: (n..pool.len()).collect(), states: pool[n..].to_vec() };
    Ok((Dataset { pairs, norm }, remaining))
}

/// What happened to one batch item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub pool_index: usize,
    pub pattern: String,
    pub base_score: Option<f64>,
    pub pattern_value: Option<f64>,
    pub retained: usize,
    pub solver_calls: usize,
    pub filtered: usize,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    pub dataset_size: usize,
    /// Cumulative solver invocations, initial dataset included.
    pub solver_calls: usize,
    pub metrics: MetricsEntry,
    pub acquisitions: Vec<AcquisitionRecord>,
}

impl RoundOutcome {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.acquisitions.iter().map(|a| a.pool_index).collect()
    }

    pub fn filtered(&self) -> usize {
        self.acquisitions.iter().map(|a| a.filtered).sum()
    }

    /// 0/1 grid with one row per acquired trajectory.
    pub fn patterns_csv(&self, steps: usize) -> String {
        let header: Vec<String> = (1..=steps).map(|i| format!("step_{i}")).collect();
        let mut out = header.join(",") + "\n";
        for a in &self.acquisitions {
            let row: Vec<&str> = a.pattern.chars().map(|c| if c == '1' { "1" } else { "0" }).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Dataset, unused pool and committee at the end of a round.
#[derive(Clone, Debug, PartialEq)]
pub struct RunState {
    pub round: usize,
    pub dataset: Dataset,
    pub pool: CandidatePool,
    pub committee: Committee,
    pub solver_calls: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub rounds: Vec<RoundOutcome>,
    pub report: MetricsReport,
    pub final_state: RunState,
}

#[derive(Serialize, Deserialize)]
struct RunSummary {
    metrics: MetricsReport,
    dataset_sizes: Vec<usize>,
    solver_calls: usize,
    filtered: usize,
}

pub fn round_dir(run_dir: &Path, round: usize) -> PathBuf {
    run_dir.join(format!("round_{round:03}"))
}

/// A configured run: pool, test set and seeds, ready to execute rounds.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub solver: Solver,
    pub pool: Vec<State>,
    pub test: Vec<Trajectory>,
    root: RandomStream,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (pool, test) = generate_pool_and_test(&config)?;
        Self::with_data(config, pool, test)
    }

    /// Uses an already generated pool and test set.
    pub fn with_data(config: ExperimentConfig, pool: Vec<State>, test: Vec<Trajectory>) -> Result<Self> {
        config.validate()?;
        let solver = Solver::new(&config.pde)?;
        let root = RandomStream::new(config.master_seed);
        Ok(Experiment { config, solver, pool, test, root })
    }

    /// A fresh committee for `round`, trained on `dataset`.
    pub fn train_round(&self, round: usize, dataset: &Dataset) -> Result<Committee> {
        let arch = self.config.architecture();
        let init = self.root.derive("committee", round as u64);
        let committee = Committee::initialize(&arch, self.config.pde.grid, dataset.norm, self.config.committee_size, &init)?;
        let cfg = TrainConfig { seed: self.root.derive("train", round as u64).seed(), ..self.config.train.clone() };
        train_committee(&committee, dataset, &cfg)
    }

    pub fn evaluate(&self, committee: &Committee) -> Result<MetricsEntry> {
        evaluate_committee(committee, &self.test)
    }

    pub fn initial_round(&self) -> Result<(RunState, RoundOutcome)> {
        let (dataset, pool) = build_initial_dataset(&self.pool, &self.config, &self.solver)?;
        let committee = self.train_round(0, &dataset)?;
        let metrics = self.evaluate(&committee)?;
        let solver_calls = self.config.initial_trajectories * self.config.pde.trajectory_length;
        let outcome =
            RoundOutcome { round: 0, dataset_size: dataset.len(), solver_calls, metrics, acquisitions: Vec::new() };
        Ok((RunState { round: 0, dataset, pool, committee, solver_calls }, outcome))
    }

    /// Acquires one batch with `state.committee`, then retrains and evaluates.
    pub fn run_round(&self, state: &RunState) -> Result<(RunState, RoundOutcome)> {
        let round = state.round + 1;
        let steps = self.config.pde.trajectory_length;
        let mut pool = state.pool.clone();
        let items = build_batch(
            &mut pool,
            &state.committee,
            steps,
            self.config.budget(),
            self.config.base_selector,
            self.config.pattern_mode,
            &self.config.greedy,
            &self.root.derive("batch", round as u64),
        )?;
        let filter = self.config.filter.as_ref();
        let results = items
            .par_iter()
            .map(|item| rollout_interleaved(&self.solver, &state.committee, &item.initial_condition, &item.pattern, filter))
            .collect::<Result<Vec<_>>>()?;

        let mut dataset = state.dataset.clone();
        let mut acquisitions = Vec::with_capacity(items.len());
        let mut solver_calls = state.solver_calls;
        for (item, result) in items.iter().zip(results) {
            solver_calls += result.solver_calls;
            acquisitions.push(AcquisitionRecord {
                pool_index: item.pool_index,
                pattern: item.pattern.to_bit_string(),
                base_score: item.base_score,
                pattern_value: item.pattern_value,
                retained: result.cost,
                solver_calls: result.solver_calls,
                filtered: result.filtered,
                aborted: result.aborted,
            });
            dataset.pairs.extend(result.acquired_pairs);
        }

        let committee = self.train_round(round, &dataset)?;
        let metrics = self.evaluate(&committee)?;
        let outcome = RoundOutcome { round, dataset_size: dataset.len(), solver_calls, metrics, acquisitions };
        Ok((RunState { round, dataset, pool, committee, solver_calls }, outcome))
    }

    /// Runs every round, calling `observer` after each.
    pub fn run_with(&self, out: Option<&Path>, mut observer: impl FnMut(&RoundOutcome)) -> Result<RunArtifacts> {
        if let Some(dir) = out {
            self.write_inputs(dir)?;
        }
        let (mut state, outcome) = self.initial_round()?;
        let mut rounds = Vec::with_capacity(self.config.rounds + 1);
        let mut record = |state: &RunState, outcome: RoundOutcome, rounds: &mut Vec<RoundOutcome>| -> Result<()> {
            if let Some(dir) = out {
                write_round(dir, state, &outcome, &self.config)?;
            }
            observer(&outcome);
            rounds.push(outcome);
            Ok(())
        };
        record(&state, outcome, &mut rounds)?;
        for _ in 0..self.config.rounds {
            let (next, outcome) = self.run_round(&state)?;
            state = next;
            record(&state, outcome, &mut rounds)?;
        }
        let report = MetricsReport::new(
            rounds.iter().map(|r| RoundMetrics { round: r.round, entry: r.metrics }).collect(),
        );
        if let Some(dir) = out {
            write_text(&dir.join("metrics.csv"), &report.to_csv())?;
            let summary = RunSummary {
                metrics: report.clone(),
                dataset_sizes: rounds.iter().map(|r| r.dataset_size).collect(),
                solver_calls: state.solver_calls,
                filtered: rounds.iter().map(RoundOutcome::filtered).sum(),
            };
            io::write_json(&dir.join("summary.json"), &summary)?;
        }
        Ok(RunArtifacts { rounds, report, final_state: state })
    }

    pub fn run(&self, out: Option<&Path>) -> Result<RunArtifacts> {
        self.run_with(out, |_| {})
    }

    fn write_inputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| StapError::io(dir, e))?;
        io::write_json(&dir.join("config.json"), &self.config)?;
        write_pool_and_test(dir, &self.config, &self.pool, &self.test)
    }

    /// Restores the state persisted at the end of `round`.
    pub fn load_state(&self, run_dir: &Path, round: usize) -> Result<RunState> {
        let dir = round_dir(run_dir, round);
        if !dir.is_dir() {
            return Err(StapError::Artifact { path: dir, reason: "round was not persisted".into() });
        }
        let norm: NormStats = io::read_json(&dir.join("norm.json"))?;
        let (_, records) = io::read_records(&dir.join("dataset"))?;
        let pairs = records
            .into_iter()
            .map(|mut r| {
                let output = r.pop();
                let input = r.pop();
                match (input, output) {
                    (Some(input), Some(output)) => Ok(TransitionPair { input, output }),
                    _ => Err(StapError::Artifact { path: dir.join("dataset.json"), reason: "records are not pairs".into() }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let indices: Vec<usize> = io::read_json(&dir.join("pool_remaining.json"))?;
        let states = indices
            .iter()
            .map(|i| {
                self.pool.get(*i).cloned().ok_or_else(|| StapError::Artifact {
                    path: dir.join("pool_remaining.json"),
                    reason: format!("pool index {i} out of range"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let committee = read_committee(&dir.join("committee"), self.config.committee_size)?;
        let outcome: RoundOutcome = io::read_json(&dir.join("outcome.json"))?;
        Ok(RunState {
            round,
            dataset: Dataset { pairs, norm },
            pool: CandidatePool { indices, states },
            committee,
            solver_calls: outcome.solver_calls,
        })
    }
}

/// Convenience wrapper: generate data, run every round, optionally persist.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let experiment = Experiment::new(config.clone())?;
    experiment.run(config.output_dir.as_deref())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| StapError::io(path, e))
}

fn lineage(config: &ExperimentConfig, label: &str) -> String {
    format!("master_seed={} stream={label}", config.master_seed)
}

/// `pool.{json,f64}` and `test.{json,f64}` under `dir`.
pub fn write_pool_and_test(dir: &Path, config: &ExperimentConfig, pool: &[State], test: &[Trajectory]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| StapError::io(dir, e))?;
    let dt = config.pde.macro_dt();
    io::write_states(&dir.join("pool"), pool, dt, config.pde.trajectory_length, &lineage(config, "pool"))?;
    io::write_trajectories(&dir.join("test"), test, dt, &lineage(config, "test"))
}

fn write_round(run_dir: &Path, state: &RunState, outcome: &RoundOutcome, config: &ExperimentConfig) -> Result<()> {
    let steps = config.pde.trajectory_length;
    let dir = round_dir(run_dir, state.round);
    fs::create_dir_all(&dir).map_err(|e| StapError::io(&dir, e))?;
    let records: Vec<Vec<State>> =
        state.dataset.pairs.iter().map(|p| vec![p.input.clone(), p.output.clone()]).collect();
    let lineage = format!("{} round={}", lineage(config, "dataset"), state.round);
    io::write_records(&dir.join("dataset"), &records, config.pde.macro_dt(), steps, &lineage)?;
    io::write_json(&dir.join("norm.json"), &state.dataset.norm)?;
    io::write_json(&dir.join("pool_remaining.json"), &state.pool.indices)?;
    write_committee(&state.committee, &dir.join("committee"))?;
    io::write_json(&dir.join("metrics.json"), &RoundMetrics { round: outcome.round, entry: outcome.metrics })?;
    io::write_json(&dir.join("outcome.json"), outcome)?;
    io::write_json(&dir.join("acquisitions.json"), &outcome.acquisitions)?;
    write_text(&dir.join("patterns.csv"), &outcome.patterns_csv(steps))
}

/// Rounds persisted under `run_dir`, ascending.
pub fn persisted_rounds(run_dir: &Path) -> Result<Vec<usize>> {
    let entries = fs::read_dir(run_dir).map_err(|e| StapError::io(run_dir, e))?;
    let mut rounds: Vec<usize> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_prefix("round_")).and_then(|n| n.parse().ok()))
        .collect();
    rounds.sort_unstable();
    Ok(rounds)
}

/// Re-evaluates the committee stored for `round` on the stored test set.
pub fn reevaluate_round(run_dir: &Path, round: usize) -> Result<(MetricsEntry, MetricsEntry)> {
    let config: ExperimentConfig = io::read_json(&run_dir.join("config.json"))?;
    let dir = round_dir(run_dir, round);
    if !dir.is_dir() {
        return Err(StapError::Artifact { path: dir, reason: "round was not persisted".into() });
    }
    let stored: RoundMetrics = io::read_json(&dir.join("metrics.json"))?;
    let test = io::read_trajectories(&run_dir.join("test"))?;
    let committee = read_committee(&dir.join("committee"), config.committee_size)?;
    Ok((stored.entry, evaluate_committee(&committee, &test)?))
}

/// Patterns acquired in `round`, in acquisition order.
pub fn read_patterns(run_dir: &Path, round: usize) -> Result<Vec<SamplingPattern>> {
    let dir = round_dir(run_dir, round);
    if !dir.is_dir() {
        return Err(StapError::Artifact { path: dir, reason: "round was not persisted".into() });
    }
    let records: Vec<AcquisitionRecord> = io::read_json(&dir.join("acquisitions.json"))?;
    Ok(records.iter().map(|r| SamplingPattern::new(r.pattern.chars().map(|c| c == '1').collect())).collect())
}

#[cfg(test)]
mod tests;
