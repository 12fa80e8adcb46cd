//! Trajectory error metrics, quantiles and per-round reports.
//!
//! Logarithms are natural. Rollouts that diverge are scored with a log RMSE
//! of [`DIVERGED_LOG_ERROR`] so that one bad trajectory cannot turn a
//! round's average into infinity or NaN.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StapError};
use crate::rollout::rollout_surrogate;
use crate::solvers::Trajectory;
use crate::surrogate::Committee;

pub const DIVERGED_LOG_ERROR: f64 = 20.0;

fn check(pred: &Trajectory, truth: &Trajectory) -> Result<()> {
    if pred.states.len() != truth.states.len() || pred.states.len() < 2 {
        return Err(StapError::ShapeMismatch(format!(
            "trajectories of {} and {} states",
            pred.states.len(),
            truth.states.len()
        )));
    }
    if pred.states.iter().zip(&truth.states).any(|(p, t)| p.values.len() != t.values.len()) {
        return Err(StapError::ShapeMismatch("trajectories on different grids".into()));
    }
    Ok(())
}

fn residuals<'a>(pred: &'a Trajectory, truth: &'a Trajectory) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.states[1..]
        .iter()
        .zip(&truth.states[1..])
        .flat_map(|(p, t)| p.values.iter().zip(&t.values).map(|(p, t)| (p - t, *t)))
}

fn entries(truth: &Trajectory) -> f64 {
    (truth.steps() * truth.states[0].values.len()) as f64
}

/// Root-mean-square error over steps `1..=L` and all grid points.
pub fn rmse(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    check(pred, truth)?;
    let sq: f64 = residuals(pred, truth).map(|(r, _)| r * r).sum();
    Ok((sq / entries(truth)).sqrt())
}

/// Residual norm relative to the reference norm.
pub fn nrmse(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    check(pred, truth)?;
    let (res, reference) = residuals(pred, truth).fold((0.0, 0.0), |(a, b), (r, t)| (a + r * r, b + t * t));
    if reference == 0.0 {
        return Err(StapError::ZeroReference);
    }
    Ok((res / reference).sqrt())
}

/// Mean absolute error over steps `1..=L` and all grid points.
pub fn mae(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    check(pred, truth)?;
    let abs: f64 = residuals(pred, truth).map(|(r, _)| r.abs()).sum();
    Ok(abs / entries(truth))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(StapError::ShapeMismatch("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StapError::InvalidConfig(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Errors of one predicted trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    pub rmse: f64,
    pub nrmse: f64,
    pub mae: f64,
}

impl TrajectoryErrors {
    pub fn diverged() -> Self {
        let cap = DIVERGED_LOG_ERROR.exp();
        TrajectoryErrors { rmse: cap, nrmse: cap, mae: cap }
    }

    pub fn compute(pred: &Trajectory, truth: &Trajectory) -> Result<Self> {
        let e = TrajectoryErrors { rmse: rmse(pred, truth)?, nrmse: nrmse(pred, truth)?, mae: mae(pred, truth)? };
        let cap = DIVERGED_LOG_ERROR.exp();
        if !(e.rmse <= cap && e.nrmse <= cap && e.mae <= cap) {
            return Ok(Self::diverged());
        }
        Ok(e)
    }
}

/// Test-set errors of a committee for one round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub rmse: f64,
    pub nrmse: f64,
    pub mae: f64,
    pub log_rmse: f64,
    pub log_nrmse: f64,
    pub log_mae: f64,
    /// Quantiles of per-trajectory log RMSE, pooled over members.
    pub q99: f64,
    pub q95: f64,
    pub q50: f64,
}

impl MetricsEntry {
    pub const NAMES: [&'static str; 9] =
        ["rmse", "nrmse", "mae", "log_rmse", "log_nrmse", "log_mae", "q99", "q95", "q50"];

    pub fn values(&self) -> [f64; 9] {
        [self.rmse, self.nrmse, self.mae, self.log_rmse, self.log_nrmse, self.log_mae, self.q99, self.q95, self.q50]
    }

    /// Averages per member over trajectories, then over members.
    /// `errors[m][t]` holds member `m` on test trajectory `t`.
    pub fn from_errors(errors: &[Vec<TrajectoryErrors>]) -> Result<Self> {
        if errors.is_empty() || errors.iter().any(|e| e.is_empty()) {
            return Err(StapError::ShapeMismatch("no errors to aggregate".into()));
        }
        let mut sums = [0.0; 3];
        let mut logs = Vec::new();
        for member in errors {
            let n = member.len() as f64;
            let mut local = [0.0; 3];
            for e in member {
                local[0] += e.rmse;
                local[1] += e.nrmse;
                local[2] += e.mae;
                logs.push(e.rmse.ln().min(DIVERGED_LOG_ERROR));
            }
            for k in 0..3 {
                sums[k] += local[k] / n;
            }
        }
        let m = errors.len() as f64;
        let [rmse, nrmse, mae] = sums.map(|s| s / m);
        Ok(MetricsEntry {
            rmse,
            nrmse,
            mae,
            log_rmse: rmse.ln(),
            log_nrmse: nrmse.ln(),
            log_mae: mae.ln(),
            q99: quantile(&logs, 0.99)?,
            q95: quantile(&logs, 0.95)?,
            q50: quantile(&logs, 0.50)?,
        })
    }
}

/// Per-member, per-trajectory errors of autoregressive rollouts from each
/// test initial state.
pub fn committee_errors(committee: &Committee, test_set: &[Trajectory]) -> Result<Vec<Vec<TrajectoryErrors>>> {
    if test_set.is_empty() {
        return Err(StapError::ShapeMismatch("empty test set".into()));
    }
    let jobs: Vec<(usize, usize)> =
        (0..committee.size()).flat_map(|m| (0..test_set.len()).map(move |t| (m, t))).collect();
    let flat = jobs
        .par_iter()
        .map(|&(m, t)| {
            let truth = &test_set[t];
            match rollout_surrogate(&committee.members[m], truth.initial(), truth.steps()) {
                Ok(pred) => TrajectoryErrors::compute(&pred, truth),
                Err(StapError::NonFiniteOutput { .. }) => Ok(TrajectoryErrors::diverged()),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flat.chunks(test_set.len()).map(|c| c.to_vec()).collect())
}

pub fn evaluate_committee(committee: &Committee, test_set: &[Trajectory]) -> Result<MetricsEntry> {
    MetricsEntry::from_errors(&committee_errors(committee, test_set)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    #[serde(flatten)]
    pub entry: MetricsEntry,
}

/// Round-averaged log errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedLogs {
    pub log_rmse: f64,
    pub log_nrmse: f64,
    pub log_mae: f64,
    /// Rounds included in the average.
    pub first_round: usize,
    pub last_round: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub log_base: String,
    pub rounds: Vec<RoundMetrics>,
    pub averaged: Option<AveragedLogs>,
}

impl MetricsReport {
    pub fn new(rounds: Vec<RoundMetrics>) -> Self {
        let averaged = round_average(&rounds);
        MetricsReport { log_base: "e".into(), rounds, averaged }
    }

    /// `round,metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,metric,value\n");
        for r in &self.rounds {
            for (name, value) in MetricsEntry::NAMES.iter().zip(r.entry.values()) {
                out.push_str(&format!("{},{name},{value:?}\n", r.round));
            }
        }
        out
    }
}

/// Mean of the log metrics over acquisition rounds `1..=R`, or over round 0
/// alone when no acquisition round ran.
pub fn round_average(rounds: &[RoundMetrics]) -> Option<AveragedLogs> {
    let acquired: Vec<&RoundMetrics> = rounds.iter().filter(|r| r.round > 0).collect();
    let chosen: Vec<&RoundMetrics> = if acquired.is_empty() { rounds.iter().collect() } else { acquired };
    if chosen.is_empty() {
        return None;
    }
    let n = chosen.len() as f64;
    let mean = |f: fn(&MetricsEntry) -> f64| chosen.iter().map(|r| f(&r.entry)).sum::<f64>() / n;
    Some(AveragedLogs {
        log_rmse: mean(|e| e.log_rmse),
        log_nrmse: mean(|e| e.log_nrmse),
        log_mae: mean(|e| e.log_mae),
        first_round: chosen.iter().map(|r| r.round).min().unwrap_or(0),
        last_round: chosen.iter().map(|r| r.round).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::solvers::{SpatialGrid, State};
    use crate::surrogate::{init_model, Activation, Architecture, NormStats, SurrogateModel};

    fn traj(values: &[&[f64]]) -> Trajectory {
        let g = SpatialGrid::new(values[0].len(), 1.0).unwrap();
        Trajectory { states: values.iter().map(|v| State::new(g, v.to_vec()).unwrap()).collect() }
    }

    #[test]
    fn hand_cases() {
        let t = traj(&[&[5.0, 5.0], &[0.0, 0.0]]);
        let p = traj(&[&[5.0, 5.0], &[3.0, 4.0]]);
        assert!((rmse(&p, &t).unwrap() - (12.5f64).sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let truth = traj(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let pred = traj(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!((nrmse(&pred, &truth).unwrap() - 0.5).abs() < 1e-12);
        let twice = traj(&[&[0.0, 0.0], &[4.0, 4.0]]);
        assert!((nrmse(&twice, &truth).unwrap() - 1.0).abs() < 1e-12);
        let m = traj(&[&[0.0, 0.0], &[1.0, -3.0]]);
        let zero = traj(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!((mae(&m, &zero).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(nrmse(&m, &zero), Err(StapError::ZeroReference)));
        let shifted = traj(&[&[0.0, 0.0], &[3.0, 3.0], &[3.0, 3.0]]);
        let base = traj(&[&[0.0, 0.0], &[2.0, 2.0], &[2.0, 2.0]]);
        assert!((rmse(&shifted, &base).unwrap() - 1.0).abs() < 1e-12);
        assert!((mae(&shifted, &base).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(rmse(&shifted, &truth), Err(StapError::ShapeMismatch(_))));
    }

    #[test]
    fn quantile_convention() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[7.0; 5], 0.99).unwrap(), 7.0);
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!((quantile(&v, 0.95).unwrap() - 94.05).abs() < 1e-12);
        assert!(quantile(&[], 0.5).is_err());
    }

    fn model(seed: u64, grid: SpatialGrid) -> SurrogateModel {
        let arch = Architecture { num_layers: 1, channels: 4, fourier_modes: 4, activation: Activation::Gelu };
        let mut m = init_model(&arch, grid, NormStats { mean: 0.0, std: 0.5 }, &mut RandomStream::new(seed)).unwrap();
        let mut rng = RandomStream::new(seed + 77);
        m.params.iter_mut().for_each(|p| *p = rng.uniform_range(-0.2, 0.2));
        m
    }

    fn test_set(grid: SpatialGrid, count: usize) -> Vec<Trajectory> {
        let mut rng = RandomStream::new(31);
        (0..count)
            .map(|_| Trajectory {
                states: (0..4)
                    .map(|_| State::new(grid, (0..grid.num_points).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap())
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn committee_evaluation_matches_scalar_loop() {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        let members = vec![model(1, grid), model(2, grid)];
        let c = Committee::new(members.clone()).unwrap();
        let tests = test_set(grid, 8);
        let got = evaluate_committee(&c, &tests).unwrap();

        let mut rmse_sum = 0.0;
        let mut logs = Vec::new();
        for m in &members {
            let mut acc = 0.0;
            for t in &tests {
                let mut u = t.states[0].clone();
                let mut sq = 0.0;
                for i in 1..4 {
                    u = m.forward(&u).unwrap();
                    for j in 0..16 {
                        let r = u.values[j] - t.states[i].values[j];
                        sq += r * r;
                    }
                }
                let e = (sq / 48.0).sqrt();
                acc += e;
                logs.push(e.ln());
            }
            rmse_sum += acc / 8.0;
        }
        let expected = rmse_sum / 2.0;
        assert!((got.rmse - expected).abs() < 1e-12);
        assert!((got.log_rmse - expected.ln()).abs() < 1e-12);
        logs.sort_by(f64::total_cmp);
        let pos = 0.5 * 15.0;
        let q50 = logs[7] + (pos - 7.0) * (logs[8] - logs[7]);
        assert!((got.q50 - q50).abs() < 1e-12);
        assert!(got.q50 <= got.q95 && got.q95 <= got.q99);
    }

    #[test]
    fn duplicate_members_equal_single_member() {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        let m = model(3, grid);
        let tests = test_set(grid, 3);
        let one = evaluate_committee(&Committee::new(vec![m.clone()]).unwrap(), &tests).unwrap();
        let two = evaluate_committee(&Committee::new(vec![m.clone(), m.clone()]).unwrap(), &tests).unwrap();
        assert_eq!(one.rmse, two.rmse);
        assert_eq!(one.log_mae, two.log_mae);
        let single = evaluate_committee(&Committee::new(vec![m.clone()]).unwrap(), &tests[..1]).unwrap();
        let pred = rollout_surrogate(&m, tests[0].initial(), 3).unwrap();
        assert_eq!(single.rmse, rmse(&pred, &tests[0]).unwrap());
        assert_eq!(single.nrmse, nrmse(&pred, &tests[0]).unwrap());
        assert_eq!(single.mae, mae(&pred, &tests[0]).unwrap());
    }

    #[test]
    fn diverged_rollouts_are_capped() {
        let e = TrajectoryErrors::diverged();
        let entry = MetricsEntry::from_errors(&[vec![e, e]]).unwrap();
        assert!((entry.log_rmse - DIVERGED_LOG_ERROR).abs() < 1e-9);
        assert!((entry.q99 - DIVERGED_LOG_ERROR).abs() < 1e-9);
    }

    #[test]
    fn round_average_and_csv() {
        let entry = |v: f64| MetricsEntry {
            rmse: v.exp(),
            nrmse: 1.0,
            mae: 1.0,
            log_rmse: v,
            log_nrmse: 0.0,
            log_mae: 0.0,
            q99: v,
            q95: v,
            q50: v,
        };
        let rounds: Vec<RoundMetrics> =
            [-1.0, -2.0, -4.0].iter().enumerate().map(|(r, v)| RoundMetrics { round: r, entry: entry(*v) }).collect();
        let report = MetricsReport::new(rounds.clone());
        let avg = report.averaged.unwrap();
        assert_eq!(avg.log_rmse, -3.0);
        assert_eq!((avg.first_round, avg.last_round), (1, 2));
        let only_initial = MetricsReport::new(rounds[..1].to_vec());
        assert_eq!(only_initial.averaged.unwrap().log_rmse, -1.0);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 9);
        assert!(csv.contains("2,log_rmse,-4.0\n"));
    }
}
