use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Committee, Dataset, SurrogateModel, TransitionPair};
use crate::{RandomStream, Result, StapError};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with a cosine-annealed learning rate over shuffled mini-batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Seed of the data-order stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, learning_rate: 1e-3, batch_size: 32, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(StapError::InvalidConfig("batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate used throughout `epoch` (annealed to zero at `epochs`).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        0.5 * self.learning_rate * (1.0 + (PI * epoch as f64 / self.epochs as f64).cos())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean mini-batch loss per epoch, before each update.
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

pub fn train(model: &SurrogateModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<SurrogateModel> {
    train_with_report(model, dataset, cfg).map(|(m, _)| m)
}

pub fn train_with_report(
    model: &SurrogateModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(StapError::InvalidConfig("cannot train on an empty dataset".into()));
    }
    let mut model = model.clone();
    let mut adam = Adam::new(model.param_count());
    let mut report = TrainReport::default();
    let order_stream = RandomStream::new(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order_stream.derive("epoch", epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TransitionPair> = chunk.iter().map(|&i| &dataset.pairs[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(StapError::NonFiniteLoss { epoch });
            }
            adam.update(&mut model.params, &grad, lr);
            epoch_loss += loss;
            batches += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok((model, report))
}

/// Trains every member on the same data; member `m` shuffles with a stream
/// derived from `(cfg.seed, m)`.
pub fn train_committee(committee: &Committee, dataset: &Dataset, cfg: &TrainConfig) -> Result<Committee> {
    let root = RandomStream::new(cfg.seed);
    let members = committee
        .members
        .par_iter()
        .enumerate()
        .map(|(m, member)| {
            let member_cfg = TrainConfig { seed: root.derive("shuffle", m as u64).seed(), ..cfg.clone() };
            train(member, dataset, &member_cfg).map_err(|e| StapError::MemberFailed { member: m, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Committee::new(members)
}
