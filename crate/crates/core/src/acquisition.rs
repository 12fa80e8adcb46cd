//! Committee disagreement scores for initial conditions and sampling patterns.
//!
//! Squared norms are plain sums of squares over grid points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StapError};
use crate::rollout::{rollout_mixed_from, rollout_stepper, SamplingPattern, Stepper};
use crate::solvers::{State, Trajectory};
use crate::surrogate::Committee;

/// Which member plays the role of the substituted model in a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StapVariant {
    /// Average over all ordered member pairs.
    Pairwise,
    /// The committee-average surrogate against each member.
    MeanField,
}

fn check_shapes(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.states.len() != b.states.len() {
        return Err(StapError::ShapeMismatch(format!(
            "trajectories of {} and {} states",
            a.states.len(),
            b.states.len()
        )));
    }
    if a.states.iter().zip(&b.states).any(|(x, y)| x.values.len() != y.values.len()) {
        return Err(StapError::ShapeMismatch("trajectories on different grids".into()));
    }
    Ok(())
}

fn summed_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states[1..].iter().zip(&b.states[1..]).map(|(x, y)| x.squared_distance(y)).sum()
}

/// `(1/M) sum_m sum_i |u_m^i - mean^i|^2` over member rollouts.
pub fn qbc_from_rollouts(rollouts: &[Trajectory]) -> Result<f64> {
    let first = rollouts.first().ok_or_else(|| StapError::InvalidModel("no rollouts to compare".into()))?;
    for r in &rollouts[1..] {
        check_shapes(first, r)?;
    }
    let m = rollouts.len() as f64;
    let n = first.states[0].values.len();
    let mut total = 0.0;
    for i in 1..first.states.len() {
        let mut mean = vec![0.0; n];
        for r in rollouts {
            for (acc, v) in mean.iter_mut().zip(&r.states[i].values) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for r in rollouts {
            total += r.states[i].values.iter().zip(&mean).map(|(v, mu)| (v - mu) * (v - mu)).sum::<f64>();
        }
    }
    Ok(total / m)
}

pub(crate) fn member_rollouts(committee: &Committee, u0: &State, steps: usize) -> Result<Vec<Trajectory>> {
    committee
        .members
        .par_iter()
        .map(|m| rollout_stepper(Stepper::Model(m), u0, steps))
        .collect()
}

/// Query-by-committee score of `u0` over `steps` rollout steps.
pub fn qbc_score(committee: &Committee, u0: &State, steps: usize) -> Result<f64> {
    if committee.size() < 2 {
        return Err(StapError::InvalidModel("disagreement needs at least two members".into()));
    }
    qbc_from_rollouts(&member_rollouts(committee, u0, steps)?)
}

/// `sum_i |a^i - b^i|^2 - |a^i - bsa^i|^2`, initial states excluded.
pub fn variance_reduction(traj_a: &Trajectory, traj_b: &Trajectory, traj_bsa: &Trajectory) -> Result<f64> {
    check_shapes(traj_a, traj_b)?;
    check_shapes(traj_a, traj_bsa)?;
    Ok(summed_distance(traj_a, traj_b) - summed_distance(traj_a, traj_bsa))
}

/// Pattern scores for one initial condition, with the member rollouts
/// computed once and reused for every pattern.
pub struct PatternScorer<'a> {
    committee: &'a Committee,
    variant: StapVariant,
    rollouts: Vec<Trajectory>,
    mean_rollout: Option<Trajectory>,
}

impl<'a> PatternScorer<'a> {
    pub fn new(committee: &'a Committee, u0: &State, steps: usize, variant: StapVariant) -> Result<Self> {
        if committee.size() < 2 {
            return Err(StapError::InvalidModel("disagreement needs at least two members".into()));
        }
        let rollouts = member_rollouts(committee, u0, steps)?;
        let mean_rollout = match variant {
            StapVariant::Pairwise => None,
            StapVariant::MeanField => Some(rollout_stepper(Stepper::Mean(committee), u0, steps)?),
        };
        Ok(PatternScorer { committee, variant, rollouts, mean_rollout })
    }

    pub fn steps(&self) -> usize {
        self.rollouts[0].steps()
    }

    /// Member self-rollouts, in member order.
    pub fn rollouts(&self) -> &[Trajectory] {
        &self.rollouts
    }

    pub fn try_score(&self, pattern: &SamplingPattern) -> Result<f64> {
        if pattern.len() != self.steps() {
            return Err(StapError::ShapeMismatch(format!(
                "pattern of length {} for rollouts of length {}",
                pattern.len(),
                self.steps()
            )));
        }
        let members = &self.committee.members;
        let m = members.len();
        match (self.variant, &self.mean_rollout) {
            (StapVariant::MeanField, Some(mean)) => {
                let terms = (0..m)
                    .into_par_iter()
                    .map(|b| {
                        let bsa = rollout_mixed_from(
                            Stepper::Mean(self.committee),
                            Stepper::Model(&members[b]),
                            &self.rollouts[b],
                            pattern,
                        )?;
                        variance_reduction(mean, &self.rollouts[b], &bsa)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(terms.iter().sum::<f64>() / m as f64)
            }
            _ => {
                let pairs: Vec<(usize, usize)> =
                    (0..m).flat_map(|a| (0..m).filter(move |b| *b != a).map(move |b| (a, b))).collect();
                let terms = pairs
                    .par_iter()
                    .map(|&(a, b)| {
                        let bsa = rollout_mixed_from(
                            Stepper::Model(&members[a]),
                            Stepper::Model(&members[b]),
                            &self.rollouts[b],
                            pattern,
                        )?;
                        variance_reduction(&self.rollouts[a], &self.rollouts[b], &bsa)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(terms.iter().sum::<f64>() / (m * (m - 1)) as f64)
            }
        }
    }

    /// Like [`try_score`](Self::try_score) but maps failed or non-finite
    /// rollouts to negative infinity.
    pub fn score(&self, pattern: &SamplingPattern) -> f64 {
        match self.try_score(pattern) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Average variance reduction over ordered member pairs.
pub fn stap_acquisition(committee: &Committee, u0: &State, pattern: &SamplingPattern) -> Result<f64> {
    PatternScorer::new(committee, u0, pattern.len(), StapVariant::Pairwise)?.try_score(pattern)
}

/// Average variance reduction of the mean surrogate against each member.
pub fn stap_mf_acquisition(committee: &Committee, u0: &State, pattern: &SamplingPattern) -> Result<f64> {
    PatternScorer::new(committee, u0, pattern.len(), StapVariant::MeanField)?.try_score(pattern)
}

/// Score per solver invocation.
pub fn cost_weighted(score: f64, pattern: &SamplingPattern) -> Result<f64> {
    match pattern.cost() {
        0 => Err(StapError::ZeroCostPattern),
        c => Ok(score / c as f64),
    }
}
