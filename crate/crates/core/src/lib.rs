//! Active learning of autoregressive PDE surrogates with selective time-step
//! acquisition.
//!
//! The crate is organised bottom-up:
//!
//! * [`solvers`] – ground-truth evolution operators for 1D periodic Burgers,
//!   KdV and Kuramoto–Sivashinsky.
//! * [`initial_conditions`] – samplers for initial states plus warmup.
//! * [`surrogate`] – a small spectral neural operator with hand-written
//!   reverse-mode gradients, Adam training and committees.
//! * [`rollout`] – solver, surrogate and interleaved trajectories.
//! * [`acquisition`] – QbC and variance-reduction scores for sampling patterns.
//! * [`selection`] – base selectors, the greedy bit-flip pattern optimiser and
//!   budgeted batch construction.
//! * [`metrics`] – trajectory error metrics and quantiles.
//! * [`cost_analysis`] – closed-form wall-clock cost model.
//! * [`experiment`] – the round-based driver and on-disk artifacts.

pub mod acquisition;
pub mod cost_analysis;
pub mod error;
pub mod experiment;
pub mod initial_conditions;
pub mod metrics;
pub mod rng;
pub mod rollout;
pub mod selection;
pub mod solvers;
pub mod surrogate;

pub use error::{Result, StapError};
pub use rng::RandomStream;

pub use rollout::{SamplingPattern, StabilityFilter};
pub use solvers::{PdeKind, PdeSpec, Solver, SpatialGrid, State, Trajectory};
pub use surrogate::{Architecture, Committee, Dataset, NormStats, SurrogateModel, TrainConfig, TransitionPair};

