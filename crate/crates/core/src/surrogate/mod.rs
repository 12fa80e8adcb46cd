//! Spectral neural-operator surrogate predicting one-step state differences.
//!
//! `forward(u) = u + sigma * f((u - mu) / sigma)` where `f` is a lift to
//! `channels` features, `num_layers` blocks of truncated spectral convolution
//! plus pointwise linear followed by GELU, and a final linear projection. The
//! projection is zero-initialised, so an untrained model is exactly the identity map.

mod checkpoint;
mod network;
mod train;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::solvers::{PdeKind, SpatialGrid, State, Trajectory};
use crate::{RandomStream, Result, StapError};

pub use checkpoint::{read_committee, read_model, write_committee, write_model};
pub use train::{train, train_committee, train_with_report, TrainConfig, TrainReport};

use network::{fourier_basis, FourierBasis, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_layers: usize,
    pub channels: usize,
    pub fourier_modes: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Gelu
}

impl Architecture {
    /// Desk-scale default: 2 spectral layers, 32 channels, per-PDE mode count
    /// capped at `Nx / 2`.
    pub fn desk_default(kind: PdeKind, grid: SpatialGrid) -> Self {
        let modes = match kind {
            PdeKind::Burgers => 32,
            PdeKind::Kdv => 256,
            PdeKind::Ks => 128,
        };
        Architecture {
            num_layers: 2,
            channels: 32,
            fourier_modes: modes.min(grid.num_points / 2),
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self, grid: SpatialGrid) -> Result<()> {
        if self.channels == 0 || self.fourier_modes == 0 {
            return Err(StapError::InvalidArchitecture("channels and fourier_modes must be positive".into()));
        }
        if self.fourier_modes > grid.num_points / 2 {
            return Err(StapError::InvalidArchitecture(format!(
                "fourier_modes {} exceeds Nx/2 = {}",
                self.fourier_modes,
                grid.num_points / 2
            )));
        }
        Ok(())
    }

    /// `2C + L (2 K C^2 + C^2 + C) + C + 1`.
    pub fn parameter_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerOffsets {
    /// `[k][out][in][re, im]`
    pub spectral: usize,
    /// `[out][in]`
    pub pointwise: usize,
    pub bias: usize,
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub lift_w: usize,
    pub lift_b: usize,
    pub layers: Vec<LayerOffsets>,
    pub proj_w: usize,
    pub proj_b: usize,
    pub total: usize,
}

impl Layout {
    pub(crate) fn new(arch: &Architecture) -> Self {
        let c = arch.channels;
        let k = arch.fourier_modes;
        let mut at = 0;
        let mut take = |len: usize| {
            let start = at;
            at += len;
            start
        };
        let lift_w = take(c);
        let lift_b = take(c);
        let layers = (0..arch.num_layers)
            .map(|_| LayerOffsets { spectral: take(2 * k * c * c), pointwise: take(c * c), bias: take(c) })
            .collect();
        let proj_w = take(c);
        let proj_b = take(1);
        Layout { lift_w, lift_b, layers, proj_w, proj_b, total: at }
    }
}

/// Scalar normalisation statistics of the initial dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats { mean: 0.0, std: 1.0 }
    }

    /// Mean and population standard deviation over every entry of every state.
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        Self::from_states(trajectories.iter().flat_map(|t| t.states.iter()))
    }

    pub fn from_states<'a>(states: impl Iterator<Item = &'a State> + Clone) -> Result<Self> {
        let (mut sum, mut count) = (0.0, 0usize);
        for s in states.clone() {
            sum += s.values.iter().sum::<f64>();
            count += s.values.len();
        }
        if count == 0 {
            return Err(StapError::InvalidConfig("cannot normalise an empty dataset".into()));
        }
        let mean = sum / count as f64;
        let var = states
            .flat_map(|s| s.values.iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count as f64;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(StapError::InvalidConfig(format!("dataset standard deviation {std} is not positive")));
        }
        Ok(NormStats { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPair {
    pub input: State,
    pub output: State,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<TransitionPair>,
    pub norm: NormStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone)]
pub struct SurrogateModel {
    pub architecture: Architecture,
    pub grid: SpatialGrid,
    pub norm: NormStats,
    pub params: Vec<f64>,
    /// Seed the parameters were initialised from.
    pub seed: u64,
    layout: Arc<Layout>,
    basis: Arc<FourierBasis>,
}

impl std::fmt::Debug for SurrogateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurrogateModel")
            .field("architecture", &self.architecture)
            .field("grid", &self.grid)
            .field("norm", &self.norm)
            .field("seed", &self.seed)
            .field("param_count", &self.params.len())
            .finish()
    }
}

impl PartialEq for SurrogateModel {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.grid == other.grid
            && self.norm == other.norm
            && self.params == other.params
    }
}

impl SurrogateModel {
    /// Builds a model around existing parameters.
    pub fn from_parts(
        architecture: Architecture,
        grid: SpatialGrid,
        norm: NormStats,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        architecture.validate(grid)?;
        let layout = Layout::new(&architecture);
        if params.len() != layout.total {
            return Err(StapError::ShapeMismatch(format!(
                "{} parameters for an architecture needing {}",
                params.len(),
                layout.total
            )));
        }
        let basis = fourier_basis(grid.num_points, architecture.fourier_modes);
        Ok(SurrogateModel { architecture, grid, norm, params, seed, layout: Arc::new(layout), basis })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn network(&self) -> Network<'_> {
        Network { arch: &self.architecture, layout: &self.layout, basis: &self.basis, params: &self.params }
    }

    fn check_grid(&self, u: &State) -> Result<()> {
        if u.values.len() != self.grid.num_points {
            return Err(StapError::ShapeMismatch(format!(
                "state has {} values, model grid has {}",
                u.values.len(),
                self.grid.num_points
            )));
        }
        Ok(())
    }

    /// Network output on a normalised state: the predicted normalised difference.
    pub fn predict_normalized_difference(&self, normalized: &[f64]) -> Vec<f64> {
        self.network().forward(normalized, false).0
    }

    pub fn normalize(&self, u: &State) -> Vec<f64> {
        let (mu, inv) = (self.norm.mean, 1.0 / self.norm.std);
        u.values.iter().map(|v| (v - mu) * inv).collect()
    }

    /// `u + sigma * f((u - mu) / sigma)`.
    pub fn forward(&self, u: &State) -> Result<State> {
        self.check_grid(u)?;
        let diff = self.predict_normalized_difference(&self.normalize(u));
        let sigma = self.norm.std;
        let values: Vec<f64> = u.values.iter().zip(&diff).map(|(v, d)| v + sigma * d).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StapError::NonFiniteOutput { step: 0 });
        }
        Ok(State { values, grid: u.grid })
    }

    /// Mean squared error between predicted and true normalised differences,
    /// averaged over batch and grid, with its parameter gradient.
    pub fn loss_and_gradient(&self, batch: &[&TransitionPair]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(StapError::ShapeMismatch("empty batch".into()));
        }
        let n = self.grid.num_points;
        let scale = 1.0 / (batch.len() * n) as f64;
        let inv_sigma = 1.0 / self.norm.std;
        let net = self.network();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for pair in batch {
            self.check_grid(&pair.input)?;
            self.check_grid(&pair.output)?;
            let x = self.normalize(&pair.input);
            let (pred, tape) = net.forward(&x, true);
            let tape = tape.expect("tape requested");
            let mut d_out = vec![0.0; n];
            for j in 0..n {
                let target = (pair.output.values[j] - pair.input.values[j]) * inv_sigma;
                let r = pred[j] - target;
                loss += r * r * scale;
                d_out[j] = 2.0 * r * scale;
            }
            net.backward(&tape, &d_out, &mut grad);
        }
        Ok((loss, grad))
    }
}

/// Random parameters with variance scaled by fan-in; zero final projection.
pub fn init_model(
    architecture: &Architecture,
    grid: SpatialGrid,
    norm: NormStats,
    rng: &mut RandomStream,
) -> Result<SurrogateModel> {
    architecture.validate(grid)?;
    let layout = Layout::new(architecture);
    let c = architecture.channels;
    let mut params = vec![0.0; layout.total];
    let mut fill = |range: std::ops::Range<usize>, bound: f64, rng: &mut RandomStream| {
        for p in &mut params[range] {
            *p = rng.uniform_range(-bound, bound);
        }
    };
    fill(layout.lift_w..layout.lift_w + c, 1.0, rng);
    fill(layout.lift_b..layout.lift_b + c, 1.0, rng);
    let fan = 1.0 / (c as f64).sqrt();
    for off in &layout.layers {
        let spectral_len = 2 * architecture.fourier_modes * c * c;
        fill(off.spectral..off.spectral + spectral_len, 1.0 / c as f64, rng);
        fill(off.pointwise..off.pointwise + c * c, fan, rng);
        fill(off.bias..off.bias + c, fan, rng);
    }
    SurrogateModel::from_parts(architecture.clone(), grid, norm, params, rng.seed())
}

/// `M` surrogates sharing architecture and normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Committee {
    pub members: Vec<SurrogateModel>,
}

impl Committee {
    pub fn new(members: Vec<SurrogateModel>) -> Result<Self> {
        let first = members.first().ok_or_else(|| StapError::InvalidModel("empty committee".into()))?;
        if members
            .iter()
            .any(|m| m.architecture != first.architecture || m.norm != first.norm || m.grid != first.grid)
        {
            return Err(StapError::InvalidModel("committee members disagree on architecture or normalisation".into()));
        }
        Ok(Committee { members })
    }

    /// Freshly initialised members; member `m` draws from `root.derive("init", m)`.
    pub fn initialize(
        architecture: &Architecture,
        grid: SpatialGrid,
        norm: NormStats,
        size: usize,
        root: &RandomStream,
    ) -> Result<Self> {
        let members = (0..size)
            .map(|m| init_model(architecture, grid, norm, &mut root.derive("init", m as u64)))
            .collect::<Result<Vec<_>>>()?;
        Committee::new(members)
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn grid(&self) -> SpatialGrid {
        self.members[0].grid
    }

    /// Average of the member predictions.
    pub fn mean_forward(&self, u: &State) -> Result<State> {
        let outputs = self.members.par_iter().map(|m| m.forward(u)).collect::<Result<Vec<_>>>()?;
        let inv = 1.0 / outputs.len() as f64;
        let mut values = vec![0.0; u.values.len()];
        for o in &outputs {
            for (acc, v) in values.iter_mut().zip(&o.values) {
                *acc += v;
            }
        }
        values.iter_mut().for_each(|v| *v *= inv);
        Ok(State { values, grid: u.grid })
    }
}
