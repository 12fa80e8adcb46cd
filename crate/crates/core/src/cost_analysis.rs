//! Closed-form wall-clock cost of active versus passive data acquisition.
//!
//! Sizes are counted in transition pairs. `t_acquire` is seconds per
//! simulated pair, `t_train` seconds per training pair and `t_select`
//! seconds per active-learning round.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StapError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Factor by which active learning reduces the data needed.
    pub efficiency_gain: f64,
    pub t_acquire: f64,
    pub t_train: f64,
    pub t_select: f64,
    pub initial_size: u64,
    pub per_round: u64,
    pub rounds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonAlCost {
    pub acquire: f64,
    pub train: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlCost {
    pub acquire: f64,
    pub train: f64,
    pub select: f64,
    pub total: f64,
    /// Rounds needed to reach the passive learner's accuracy.
    pub rounds: u64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency_gain > 0.0 && self.efficiency_gain.is_finite()) {
            return Err(StapError::InvalidModel(format!("efficiency gain {} must be positive", self.efficiency_gain)));
        }
        for (name, v) in [("t_acquire", self.t_acquire), ("t_train", self.t_train), ("t_select", self.t_select)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(StapError::InvalidModel(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    /// `M / E` rounded to the nearest integer.
    pub fn al_rounds(&self) -> u64 {
        (self.rounds as f64 / self.efficiency_gain).round() as u64
    }
}

pub fn non_al_cost(cm: &CostModel) -> Result<NonAlCost> {
    cm.validate()?;
    let acquired = (cm.per_round * cm.rounds) as f64;
    let acquire = acquired * cm.t_acquire;
    let train = (cm.initial_size as f64 + acquired) * cm.t_train;
    Ok(NonAlCost { acquire, train, total: acquire + train })
}

pub fn al_cost(cm: &CostModel) -> Result<AlCost> {
    cm.validate()?;
    let rounds = cm.al_rounds();
    let acquire = (cm.per_round * cm.rounds) as f64 / cm.efficiency_gain * cm.t_acquire;
    let train: f64 = (0..=rounds).map(|r| (cm.initial_size + cm.per_round * r) as f64 * cm.t_train).sum();
    let select = rounds as f64 * cm.t_select;
    Ok(AlCost { acquire, train, select, total: acquire + train + select, rounds })
}

/// Whether active learning is cheaper in total.
pub fn al_reduces_cost(cm: &CostModel) -> Result<bool> {
    Ok(non_al_cost(cm)?.total > al_cost(cm)?.total)
}
