//! Ground-truth evolution operators for 1D periodic PDEs.
//!
//! A [`Solver`] advances a [`State`] by one macro step `T/L`, sub-stepping
//! internally. Kernels precompute their FFT plans and coefficients once and are
//! immutable afterwards, so a single solver can be shared across threads.

mod burgers;
mod kdv;
mod ks;
pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::{Result, StapError};

pub use burgers::cfl_substeps;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub num_points: usize,
    pub domain_length: f64,
}

impl SpatialGrid {
    pub fn new(num_points: usize, domain_length: f64) -> Result<Self> {
        let grid = SpatialGrid { num_points, domain_length };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_points < 2 || !self.num_points.is_power_of_two() {
            return Err(StapError::InvalidConfig(format!(
                "grid size {} is not a power of two >= 2",
                self.num_points
            )));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(StapError::InvalidConfig(format!(
                "domain length {} must be positive",
                self.domain_length
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.domain_length / self.num_points as f64
    }

    /// Grid point coordinates `x_j = j * dx`.
    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.num_points).map(|j| j as f64 * dx).collect()
    }
}

/// A discretised field on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub values: Vec<f64>,
    pub grid: SpatialGrid,
}

impl State {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_points {
            return Err(StapError::ShapeMismatch(format!(
                "state has {} values, grid has {} points",
                values.len(),
                grid.num_points
            )));
        }
        Ok(State { values, grid })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        State { values: vec![0.0; grid.num_points], grid }
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Self {
        State { values: vec![c; grid.num_points], grid }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Plain sum of squared differences over grid points.
    pub fn squared_distance(&self, other: &State) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Ordered states `u^0, ..., u^L` at fixed spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    /// Number of transitions, i.e. `states.len() - 1`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeKind {
    Burgers,
    Kdv,
    Ks,
}

impl std::str::FromStr for PdeKind {
    type Err = StapError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "burgers" => Ok(PdeKind::Burgers),
            "kdv" => Ok(PdeKind::Kdv),
            "ks" => Ok(PdeKind::Ks),
            other => Err(StapError::InvalidConfig(format!("unknown PDE '{other}'"))),
        }
    }
}

impl std::fmt::Display for PdeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PdeKind::Burgers => "burgers",
            PdeKind::Kdv => "kdv",
            PdeKind::Ks => "ks",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative tolerance of the adaptive integrator.
    pub rtol: f64,
    /// Absolute tolerance of the adaptive integrator.
    pub atol: f64,
    /// Adaptive step floor.
    pub min_step: f64,
    /// Any |u| above this aborts the step.
    pub blowup_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rtol: 1e-8, atol: 1e-8, min_step: 1e-10, blowup_cap: 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub kind: PdeKind,
    #[serde(default)]
    pub viscosity: f64,
    pub time_horizon: f64,
    pub trajectory_length: usize,
    pub grid: SpatialGrid,
    /// Internal steps per macro step; `None` picks the per-PDE default.
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
}

const KS_DEFAULT_SUBSTEPS: usize = 20;

impl PdeSpec {
    pub fn burgers() -> Self {
        PdeSpec {
            kind: PdeKind::Burgers,
            viscosity: 0.01,
            time_horizon: 2.0,
            trajectory_length: 13,
            grid: SpatialGrid { num_points: 256, domain_length: 1.0 },
            substeps: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn kdv() -> Self {
        PdeSpec {
            kind: PdeKind::Kdv,
            viscosity: 0.0,
            time_horizon: 52.0,
            trajectory_length: 13,
            grid: SpatialGrid { num_points: 256, domain_length: 128.0 },
            substeps: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn ks() -> Self {
        PdeSpec {
            kind: PdeKind::Ks,
            viscosity: 0.0,
            time_horizon: 13.0,
            trajectory_length: 26,
            grid: SpatialGrid { num_points: 256, domain_length: 1.0 },
            substeps: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn default_for(kind: PdeKind) -> Self {
        match kind {
            PdeKind::Burgers => Self::burgers(),
            PdeKind::Kdv => Self::kdv(),
            PdeKind::Ks => Self::ks(),
        }
    }

    pub fn macro_dt(&self) -> f64 {
        self.time_horizon / self.trajectory_length as f64
    }

    /// Internal steps per macro step. For KdV this bounds the adaptive step
    /// from above (`macro_dt / substeps`).
    pub fn effective_substeps(&self) -> usize {
        self.substeps.unwrap_or_else(|| match self.kind {
            PdeKind::Burgers => cfl_substeps(self.viscosity, self.macro_dt(), self.grid.spacing()),
            PdeKind::Kdv => 1,
            PdeKind::Ks => KS_DEFAULT_SUBSTEPS,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.trajectory_length == 0 {
            return Err(StapError::InvalidConfig("trajectory_length must be positive".into()));
        }
        if !(self.time_horizon > 0.0 && self.time_horizon.is_finite()) {
            return Err(StapError::InvalidConfig("time_horizon must be positive".into()));
        }
        if self.kind == PdeKind::Burgers && !(self.viscosity > 0.0) {
            return Err(StapError::InvalidConfig("Burgers viscosity must be positive".into()));
        }
        if self.substeps == Some(0) {
            return Err(StapError::InvalidConfig("substeps must be positive".into()));
        }
        let o = &self.solver;
        if !(o.rtol > 0.0 && o.atol > 0.0 && o.min_step > 0.0 && o.blowup_cap > 0.0) {
            return Err(StapError::InvalidConfig("solver options must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_blowup(values: &[f64], cap: f64) -> Result<()> {
    for (j, v) in values.iter().enumerate() {
        if !v.is_finite() || v.abs() > cap {
            return Err(StapError::NumericalBlowup(format!("|u[{j}]| = {v} exceeds cap {cap:e}")));
        }
    }
    Ok(())
}

enum Kernel {
    Burgers(burgers::BurgersKernel),
    Kdv(kdv::KdvKernel),
    Ks(ks::KsKernel),
}

/// The evolution operator for one [`PdeSpec`].
pub struct Solver {
    spec: PdeSpec,
    kernel: Kernel,
}

impl Solver {
    pub fn new(spec: &PdeSpec) -> Result<Self> {
        spec.validate()?;
        let mut resolved = spec.clone();
        resolved.substeps = Some(spec.effective_substeps());
        let kernel = match spec.kind {
            PdeKind::Burgers => Kernel::Burgers(burgers::BurgersKernel::new(&resolved)),
            PdeKind::Kdv => Kernel::Kdv(kdv::KdvKernel::new(&resolved)),
            PdeKind::Ks => Kernel::Ks(ks::KsKernel::new(&resolved)),
        };
        Ok(Solver { spec: resolved, kernel })
    }

    /// KdV solver with overridden adaptive tolerances; other kinds ignore them.
    pub fn with_tolerance(spec: &PdeSpec, rtol: f64, atol: f64) -> Result<Self> {
        let mut s = spec.clone();
        s.solver.rtol = rtol;
        s.solver.atol = atol;
        let solver = Solver::new(&s)?;
        Ok(match solver.kernel {
            Kernel::Kdv(k) => Solver { spec: solver.spec, kernel: Kernel::Kdv(k.with_tolerance(rtol, atol)) },
            other => Solver { spec: solver.spec, kernel: other },
        })
    }

    pub fn spec(&self) -> &PdeSpec {
        &self.spec
    }

    /// Advances `state` by one macro step.
    pub fn step(&self, state: &State) -> Result<State> {
        if state.values.len() != self.spec.grid.num_points {
            return Err(StapError::ShapeMismatch(format!(
                "state has {} values, solver grid has {}",
                state.values.len(),
                self.spec.grid.num_points
            )));
        }
        check_blowup(&state.values, self.spec.solver.blowup_cap)?;
        match &self.kernel {
            Kernel::Burgers(k) => k.step(state),
            Kernel::Kdv(k) => k.step(state),
            Kernel::Ks(k) => k.step(state),
        }
    }

    /// Applies [`Solver::step`] `n_steps` times, keeping every state.
    pub fn evolve(&self, u0: &State, n_steps: usize) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(u0.clone());
        for i in 0..n_steps {
            let next = self
                .step(&states[i])
                .map_err(|e| StapError::StepFailed { index: i + 1, source: Box::new(e) })?;
            states.push(next);
        }
        Ok(Trajectory { states })
    }
}

fn require_kind(spec: &PdeSpec, kind: PdeKind) -> Result<()> {
    if spec.kind != kind {
        return Err(StapError::InvalidConfig(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    Ok(())
}

pub fn step_burgers(state: &State, spec: &PdeSpec) -> Result<State> {
    require_kind(spec, PdeKind::Burgers)?;
    Solver::new(spec)?.step(state)
}

pub fn step_kdv(state: &State, spec: &PdeSpec) -> Result<State> {
    require_kind(spec, PdeKind::Kdv)?;
    Solver::new(spec)?.step(state)
}

pub fn step_ks(state: &State, spec: &PdeSpec) -> Result<State> {
    require_kind(spec, PdeKind::Ks)?;
    Solver::new(spec)?.step(state)
}

pub fn evolve(u0: &State, spec: &PdeSpec, n_steps: usize) -> Result<Trajectory> {
    Solver::new(spec)?.evolve(u0, n_steps)
}

/// Relative L2 distance `|a - b| / |b|`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests;
