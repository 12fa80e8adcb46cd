//! Initial-condition distributions and warmup.
//!
//! Raw states are drawn from a truncated random Fourier series (Burgers, KdV)
//! or a periodic Gaussian random field (KS) and then evolved a few macro steps
//! with the numerical solver.

use std::f64::consts::PI;

use rayon::prelude::*;
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::solvers::spectral::{fft_plans, wavenumbers};
use crate::solvers::{PdeKind, PdeSpec, Solver, SpatialGrid, State};
use crate::{RandomStream, Result, StapError};

/// Warmup attempts before giving up on one initial condition.
pub const MAX_WARMUP_ATTEMPTS: usize = 10;
pub const DEFAULT_WARMUP_STEPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IcKind {
    /// `sum_i A_i sin(2 pi k_i x / X + phi_i)`.
    FourierSum { num_terms: usize, wavenumbers: Vec<u32> },
    /// Covariance `scale * (-Laplacian + shift)^-1`, zero mean mode.
    GaussianRandomField { scale: f64, shift: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    #[serde(flatten)]
    pub kind: IcKind,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_warmup() -> usize {
    DEFAULT_WARMUP_STEPS
}

impl IcSpec {
    pub fn default_for(kind: PdeKind) -> Self {
        let kind = match kind {
            PdeKind::Burgers => IcKind::FourierSum { num_terms: 2, wavenumbers: vec![1, 2, 3, 4] },
            PdeKind::Kdv => IcKind::FourierSum { num_terms: 10, wavenumbers: vec![1, 2, 3] },
            PdeKind::Ks => IcKind::GaussianRandomField { scale: 25.0, shift: 25.0 },
        };
        IcSpec { kind, warmup_steps: DEFAULT_WARMUP_STEPS }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            IcKind::FourierSum { num_terms, wavenumbers } => {
                if *num_terms == 0 || wavenumbers.is_empty() {
                    return Err(StapError::InvalidConfig(
                        "Fourier-sum initial conditions need at least one term and wavenumber".into(),
                    ));
                }
            }
            IcKind::GaussianRandomField { scale, shift } => {
                if !(*scale > 0.0 && *shift > 0.0) {
                    return Err(StapError::InvalidConfig("GRF scale and shift must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// One term `A sin(2 pi k x / X + phi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierTerm {
    pub amplitude: f64,
    pub wavenumber: u32,
    pub phase: f64,
}

/// Draws `num_terms` terms with `A ~ U[0,1]`, `phi ~ U[0, 2 pi]`, `k` uniform over the set.
pub fn sample_fourier_terms(num_terms: usize, wavenumbers: &[u32], rng: &mut RandomStream) -> Vec<FourierTerm> {
    (0..num_terms)
        .map(|_| {
            let amplitude = rng.uniform();
            let phase = rng.uniform_range(0.0, 2.0 * PI);
            let wavenumber = wavenumbers[rng.index(wavenumbers.len())];
            FourierTerm { amplitude, wavenumber, phase }
        })
        .collect()
}

pub fn fourier_sum_state(terms: &[FourierTerm], grid: SpatialGrid) -> State {
    let values = grid
        .coordinates()
        .into_iter()
        .map(|x| {
            terms
                .iter()
                .map(|t| t.amplitude * (2.0 * PI * f64::from(t.wavenumber) * x / grid.domain_length + t.phase).sin())
                .sum()
        })
        .collect();
    State { values, grid }
}

pub fn sample_fourier_sum(ic: &IcSpec, grid: SpatialGrid, rng: &mut RandomStream) -> Result<State> {
    match &ic.kind {
        IcKind::FourierSum { num_terms, wavenumbers } => {
            ic.validate()?;
            Ok(fourier_sum_state(&sample_fourier_terms(*num_terms, wavenumbers, rng), grid))
        }
        _ => Err(StapError::InvalidConfig("expected a Fourier-sum initial condition spec".into())),
    }
}

/// Variance of the complex Fourier coefficient at angular wavenumber `kappa`.
pub fn grf_mode_variance(scale: f64, shift: f64, kappa: f64) -> f64 {
    scale / (kappa * kappa + shift)
}

/// Real periodic field `u(x) = sum_{k != 0} c_k exp(i kappa_k x)` with
/// `c_{-k} = conj(c_k)` and `E|c_k|^2 = scale / (kappa_k^2 + shift)`.
pub fn sample_grf(ic: &IcSpec, grid: SpatialGrid, rng: &mut RandomStream) -> Result<State> {
    let (scale, shift) = match ic.kind {
        IcKind::GaussianRandomField { scale, shift } => (scale, shift),
        _ => return Err(StapError::InvalidConfig("expected a GRF initial condition spec".into())),
    };
    ic.validate()?;
    let n = grid.num_points;
    let plans = fft_plans(n);
    let kappa = wavenumbers(n, grid.domain_length);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); plans.spectrum_len()];
    // skip the mean and the Nyquist mode
    for k in 1..n / 2 {
        let sd = (grf_mode_variance(scale, shift, kappa[k]) / 2.0).sqrt();
        let re = sd * rng.standard_normal();
        let im = sd * rng.standard_normal();
        // the normalised inverse transform divides by n
        spectrum[k] = Complex64::new(re, im) * n as f64;
    }
    let mut values = vec![0.0; n];
    plans.inverse(&spectrum, &mut values);
    Ok(State { values, grid })
}

pub fn sample_raw(ic: &IcSpec, grid: SpatialGrid, rng: &mut RandomStream) -> Result<State> {
    match ic.kind {
        IcKind::FourierSum { .. } => sample_fourier_sum(ic, grid, rng),
        IcKind::GaussianRandomField { .. } => sample_grf(ic, grid, rng),
    }
}

/// Samples and warms up one initial condition, returning the number of
/// resamples caused by warmup blowups.
pub fn make_initial_condition_with(
    ic: &IcSpec,
    solver: &Solver,
    rng: &mut RandomStream,
) -> Result<(State, usize)> {
    let grid = solver.spec().grid;
    let mut last_err = None;
    for attempt in 0..MAX_WARMUP_ATTEMPTS {
        let raw = sample_raw(ic, grid, rng)?;
        if ic.warmup_steps == 0 {
            return Ok((raw, attempt));
        }
        match solver.evolve(&raw, ic.warmup_steps) {
            Ok(mut traj) => return Ok((traj.states.pop().expect("non-empty trajectory"), attempt)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(StapError::WarmupExhausted { index: 0, attempts: MAX_WARMUP_ATTEMPTS }))
}

pub fn make_initial_condition(ic: &IcSpec, spec: &PdeSpec, rng: &mut RandomStream) -> Result<State> {
    let solver = Solver::new(spec)?;
    make_initial_condition_with(ic, &solver, rng).map(|(s, _)| s)
}

/// `count` initial conditions, the i-th drawn from `root.derive(label, i)`.
///
/// Returns the states and the per-index resample counts. The result does not
/// depend on the number of worker threads.
pub fn generate_initial_conditions(
    ic: &IcSpec,
    solver: &Solver,
    root: &RandomStream,
    label: &str,
    count: usize,
) -> Result<(Vec<State>, Vec<usize>)> {
    let results: Vec<Result<(State, usize)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.derive(label, i as u64);
            make_initial_condition_with(ic, solver, &mut rng).map_err(|e| match e {
                StapError::WarmupExhausted { attempts, .. } => StapError::WarmupExhausted { index: i, attempts },
                StapError::NumericalBlowup(_) | StapError::StepFailed { .. } => {
                    StapError::WarmupExhausted { index: i, attempts: MAX_WARMUP_ATTEMPTS }
                }
                other => other,
            })
        })
        .collect();
    let mut states = Vec::with_capacity(count);
    let mut resamples = Vec::with_capacity(count);
    for r in results {
        let (s, n) = r?;
        states.push(s);
        resamples.push(n);
    }
    Ok((states, resamples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers_ic() -> IcSpec {
        IcSpec::default_for(PdeKind::Burgers)
    }

    #[test]
    fn single_forced_term_is_a_sine() {
        let grid = SpatialGrid::new(64, 2.0).unwrap();
        let s = fourier_sum_state(&[FourierTerm { amplitude: 1.0, wavenumber: 1, phase: 0.0 }], grid);
        for (x, v) in grid.coordinates().iter().zip(&s.values) {
            assert!((v - (2.0 * PI * x / 2.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn fourier_samples_are_bounded_by_term_count() {
        let grid = SpatialGrid::new(128, 128.0).unwrap();
        let ic = IcSpec::default_for(PdeKind::Kdv);
        let mut rng = RandomStream::new(3);
        for _ in 0..200 {
            let s = sample_fourier_sum(&ic, grid, &mut rng).unwrap();
            assert!(s.max_abs() <= 10.0);
        }
    }

    #[test]
    fn amplitude_mean_matches_uniform_moments() {
        let mut rng = RandomStream::new(11);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_fourier_terms(1, &[1, 2, 3, 4], &mut rng)[0].amplitude)
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // U[0,1]: sd = 1/sqrt(12)
        let se = (1.0f64 / 12.0).sqrt() / (draws.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn grf_is_real_with_zero_mean_and_reproducible() {
        let ic = IcSpec::default_for(PdeKind::Ks);
        let grid = SpatialGrid::new(256, 1.0).unwrap();
        let a = sample_grf(&ic, grid, &mut RandomStream::new(5)).unwrap();
        let b = sample_grf(&ic, grid, &mut RandomStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.mean().abs() < 1e-14);
        assert!(a.is_finite());
    }

    #[test]
    fn grf_mode_variances_match_spectrum() {
        let ic = IcSpec::default_for(PdeKind::Ks);
        let grid = SpatialGrid::new(32, 1.0).unwrap();
        let plans = fft_plans(32);
        let kappa = wavenumbers(32, 1.0);
        let mut rng = RandomStream::new(99);
        let draws = 10_000;
        let mut acc = [0.0f64; 3];
        let modes = [1usize, 2, 4];
        let mut spec = vec![Complex64::new(0.0, 0.0); plans.spectrum_len()];
        for _ in 0..draws {
            let s = sample_grf(&ic, grid, &mut rng).unwrap();
            plans.forward(&s.values, &mut spec);
            for (a, &k) in acc.iter_mut().zip(&modes) {
                *a += (spec[k] / 32.0).norm_sqr();
            }
        }
        for (a, &k) in acc.iter().zip(&modes) {
            let empirical = a / draws as f64;
            let expected = grf_mode_variance(25.0, 25.0, kappa[k]);
            assert!(((empirical - expected) / expected).abs() < 0.05, "mode {k}: {empirical} vs {expected}");
        }
    }

    #[test]
    fn warmup_composes_with_evolve() {
        let spec = PdeSpec::burgers();
        let solver = Solver::new(&spec).unwrap();
        let mut ic = burgers_ic();
        ic.warmup_steps = 0;
        let raw = make_initial_condition(&ic, &spec, &mut RandomStream::new(4)).unwrap();
        assert_eq!(raw, sample_raw(&ic, spec.grid, &mut RandomStream::new(4)).unwrap());
        ic.warmup_steps = 2;
        let warmed = make_initial_condition(&ic, &spec, &mut RandomStream::new(4)).unwrap();
        assert_eq!(warmed, solver.evolve(&raw, 2).unwrap().states[2]);
    }

    #[test]
    fn pool_generation_is_reproducible() {
        let spec = PdeSpec::burgers();
        let solver = Solver::new(&spec).unwrap();
        let root = RandomStream::new(7);
        let (a, ra) = generate_initial_conditions(&burgers_ic(), &solver, &root, "pool", 512).unwrap();
        let (b, _) = generate_initial_conditions(&burgers_ic(), &solver, &root, "pool", 512).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 512);
        assert!(ra.iter().all(|&n| n == 0));
        assert!(a.iter().all(|s| s.is_finite() && s.values.len() == 256));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        let mut rng = RandomStream::new(0);
        assert!(sample_grf(&burgers_ic(), grid, &mut rng).is_err());
        assert!(sample_fourier_sum(&IcSpec::default_for(PdeKind::Ks), grid, &mut rng).is_err());
    }
}
