//! Trajectories built from solver steps, surrogate steps or a mixture of both.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StapError};
use crate::solvers::{PdeKind, Solver, State, Trajectory};
use crate::surrogate::{Committee, SurrogateModel, TransitionPair};

/// Which of the `L` transitions of a trajectory are simulated.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplingPattern {
    pub bits: Vec<bool>,
}

impl SamplingPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        SamplingPattern { bits }
    }

    pub fn all_true(len: usize) -> Self {
        SamplingPattern { bits: vec![true; len] }
    }

    pub fn all_false(len: usize) -> Self {
        SamplingPattern { bits: vec![false; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of solver invocations the pattern asks for.
    pub fn cost(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn first_true(&self) -> Option<usize> {
        self.bits.iter().position(|b| *b)
    }

    /// `"1011..."`, one character per step.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }
}

/// Drops training pairs whose input exceeds a magnitude threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityFilter {
    pub magnitude_threshold: f64,
}

impl Default for StabilityFilter {
    fn default() -> Self {
        StabilityFilter { magnitude_threshold: 10.0 }
    }
}

impl StabilityFilter {
    /// Enabled for KdV only.
    pub fn default_for(kind: PdeKind) -> Option<Self> {
        (kind == PdeKind::Kdv).then(StabilityFilter::default)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_threshold > 0.0) {
            return Err(StapError::InvalidConfig("filter threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn accepts(&self, input: &State) -> bool {
        input.max_abs() <= self.magnitude_threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionResult {
    pub trajectory: Trajectory,
    pub acquired_pairs: Vec<TransitionPair>,
    /// Retained solver pairs.
    pub cost: usize,
    /// Solver invocations, retained or not.
    pub solver_calls: usize,
    /// Pairs computed by the solver but dropped by the filter.
    pub filtered: usize,
    /// Why the trajectory stopped early, if it did.
    pub aborted: Option<String>,
}

fn rollout_with(
    u0: &State,
    steps: usize,
    mut step: impl FnMut(usize, &State) -> Result<State>,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u0.clone());
    for i in 0..steps {
        let next = step(i, &states[i])?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

fn at_step(err: StapError, step: usize) -> StapError {
    match err {
        StapError::NonFiniteOutput { .. } => StapError::NonFiniteOutput { step },
        other => other,
    }
}

/// A single surrogate step operator: one model or the committee average.
#[derive(Clone, Copy)]
pub(crate) enum Stepper<'a> {
    Model(&'a SurrogateModel),
    Mean(&'a Committee),
}

impl Stepper<'_> {
    pub(crate) fn step(&self, u: &State) -> Result<State> {
        match self {
            Stepper::Model(m) => m.forward(u),
            Stepper::Mean(c) => c.mean_forward(u),
        }
    }
}

pub(crate) fn rollout_stepper(stepper: Stepper<'_>, u0: &State, steps: usize) -> Result<Trajectory> {
    rollout_with(u0, steps, |i, u| stepper.step(u).map_err(|e| at_step(e, i + 1)))
}

/// `a` on true steps, `b` on false steps, reusing `b`'s own rollout for the
/// prefix before the first true step.
pub(crate) fn rollout_mixed_from(a: Stepper<'_>, b: Stepper<'_>, b_rollout: &Trajectory, pattern: &SamplingPattern) -> Result<Trajectory> {
    let Some(first) = pattern.first_true() else {
        return Ok(b_rollout.clone());
    };
    let mut states = b_rollout.states[..=first].to_vec();
    for (i, bit) in pattern.bits.iter().enumerate().skip(first) {
        let stepper = if *bit { a } else { b };
        let next = stepper.step(&states[i]).map_err(|e| at_step(e, i + 1))?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// `L` autoregressive applications of `model` starting at `u0`.
pub fn rollout_surrogate(model: &SurrogateModel, u0: &State, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(StapError::InvalidConfig("rollout length must be at least 1".into()));
    }
    rollout_stepper(Stepper::Model(model), u0, steps)
}

/// The committee-average surrogate rolled out for `steps` steps.
pub fn rollout_mean(committee: &Committee, u0: &State, steps: usize) -> Result<Trajectory> {
    rollout_stepper(Stepper::Mean(committee), u0, steps)
}

/// `model_a` on true steps of `pattern`, `model_b` on false steps.
pub fn rollout_pairwise(
    model_a: &SurrogateModel,
    model_b: &SurrogateModel,
    u0: &State,
    pattern: &SamplingPattern,
) -> Result<Trajectory> {
    if model_a.grid != model_b.grid || model_a.norm != model_b.norm {
        return Err(StapError::InvalidModel("paired models must share grid and normalisation".into()));
    }
    let (a, b) = (Stepper::Model(model_a), Stepper::Model(model_b));
    rollout_with(u0, pattern.len(), |i, u| {
        let stepper = if pattern.bits[i] { a } else { b };
        stepper.step(u).map_err(|e| at_step(e, i + 1))
    })
}

/// Solver on true steps, committee mean on false steps; solver pairs are
/// collected unless the filter rejects their input.
///
/// A solver blowup or non-finite surrogate output ends the trajectory early;
/// pairs gathered up to that point are still returned.
pub fn rollout_interleaved(
    solver: &Solver,
    committee: &Committee,
    u0: &State,
    pattern: &SamplingPattern,
    filter: Option<&StabilityFilter>,
) -> Result<AcquisitionResult> {
    let steps = solver.spec().trajectory_length;
    if pattern.len() != steps {
        return Err(StapError::ShapeMismatch(format!(
            "pattern of length {} for trajectories of length {steps}",
            pattern.len()
        )));
    }
    let mut states = vec![u0.clone()];
    let mut acquired_pairs = Vec::new();
    let (mut solver_calls, mut filtered) = (0, 0);
    let mut aborted = None;
    for (i, bit) in pattern.bits.iter().enumerate() {
        let input = &states[i];
        let next = if *bit {
            solver_calls += 1;
            match solver.step(input) {
                Ok(out) => {
                    if filter.is_none_or(|f| f.accepts(input)) {
                        acquired_pairs.push(TransitionPair { input: input.clone(), output: out.clone() });
                    } else {
                        filtered += 1;
                    }
                    out
                }
                Err(e) => {
                    aborted = Some(format!("solver failed at step {}: {e}", i + 1));
                    break;
                }
            }
        } else {
            match committee.mean_forward(input) {
                Ok(out) => out,
                Err(e) => {
                    aborted = Some(format!("surrogate failed at step {}: {}", i + 1, at_step(e, i + 1)));
                    break;
                }
            }
        };
        states.push(next);
    }
    Ok(AcquisitionResult {
        trajectory: Trajectory { states },
        cost: acquired_pairs.len(),
        acquired_pairs,
        solver_calls,
        filtered,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::solvers::{PdeSpec, SpatialGrid};
    use crate::surrogate::{init_model, Activation, Architecture, NormStats};

    fn small_spec() -> PdeSpec {
        PdeSpec { grid: SpatialGrid::new(32, 1.0).unwrap(), trajectory_length: 5, time_horizon: 2.0 * 5.0 / 13.0, ..PdeSpec::burgers() }
    }

    fn seeded_model(seed: u64, grid: SpatialGrid) -> SurrogateModel {
        let arch = Architecture { num_layers: 1, channels: 4, fourier_modes: 6, activation: Activation::Gelu };
        let mut m = init_model(&arch, grid, NormStats { mean: 0.0, std: 0.5 }, &mut RandomStream::new(seed)).unwrap();
        let mut rng = RandomStream::new(seed + 1000);
        m.params.iter_mut().for_each(|p| *p = rng.uniform_range(-0.3, 0.3));
        m
    }

    fn wave(grid: SpatialGrid) -> State {
        let x = grid.coordinates();
        State::new(grid, x.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect()).unwrap()
    }

    fn pattern(s: &str) -> SamplingPattern {
        SamplingPattern::new(s.chars().map(|c| c == '1').collect())
    }

    #[test]
    fn pattern_cost_and_strings() {
        let p = pattern("10110");
        assert_eq!(p.cost(), 3);
        assert_eq!(p.first_true(), Some(0));
        assert_eq!(p.to_bit_string(), "10110");
        assert_eq!(SamplingPattern::all_false(4).first_true(), None);
    }

    #[test]
    fn identity_model_rollout_is_constant() {
        let grid = small_spec().grid;
        let arch = Architecture { num_layers: 1, channels: 4, fourier_modes: 6, activation: Activation::Gelu };
        let m = init_model(&arch, grid, NormStats::identity(), &mut RandomStream::new(1)).unwrap();
        let u0 = wave(grid);
        let t = rollout_surrogate(&m, &u0, 4).unwrap();
        assert!(t.states.iter().all(|s| *s == u0));
        assert_eq!(rollout_surrogate(&m, &u0, 1).unwrap().states, vec![u0.clone(), m.forward(&u0).unwrap()]);
    }

    #[test]
    fn surrogate_rollout_is_manual_composition() {
        let grid = small_spec().grid;
        let m = seeded_model(2, grid);
        let u0 = wave(grid);
        let t = rollout_surrogate(&m, &u0, 5).unwrap();
        let mut u = u0;
        for i in 1..=5 {
            u = m.forward(&u).unwrap();
            assert_eq!(t.states[i], u);
        }
    }

    #[test]
    fn pairwise_extremes_and_cache() {
        let grid = small_spec().grid;
        let (a, b) = (seeded_model(3, grid), seeded_model(4, grid));
        let u0 = wave(grid);
        let ra = rollout_surrogate(&a, &u0, 5).unwrap();
        let rb = rollout_surrogate(&b, &u0, 5).unwrap();
        assert_eq!(rollout_pairwise(&a, &b, &u0, &SamplingPattern::all_true(5)).unwrap(), ra);
        assert_eq!(rollout_pairwise(&a, &b, &u0, &SamplingPattern::all_false(5)).unwrap(), rb);
        for s in ["00100", "01011", "10000", "00001"] {
            let p = pattern(s);
            let direct = rollout_pairwise(&a, &b, &u0, &p).unwrap();
            let cached = rollout_mixed_from(Stepper::Model(&a), Stepper::Model(&b), &rb, &p).unwrap();
            assert_eq!(direct, cached);
            assert_eq!(rollout_pairwise(&a, &a, &u0, &p).unwrap(), ra);
        }
    }

    #[test]
    fn interleaved_extremes_and_manual_composition() {
        let spec = small_spec();
        let solver = Solver::new(&spec).unwrap();
        let committee = Committee::new(vec![seeded_model(5, spec.grid), seeded_model(6, spec.grid)]).unwrap();
        let u0 = wave(spec.grid);

        let full = rollout_interleaved(&solver, &committee, &u0, &SamplingPattern::all_true(5), None).unwrap();
        assert_eq!(full.trajectory, solver.evolve(&u0, 5).unwrap());
        assert_eq!((full.cost, full.solver_calls, full.acquired_pairs.len()), (5, 5, 5));

        let none = rollout_interleaved(&solver, &committee, &u0, &SamplingPattern::all_false(5), None).unwrap();
        assert_eq!(none.trajectory, rollout_mean(&committee, &u0, 5).unwrap());
        assert_eq!(none.cost, 0);
        assert!(none.acquired_pairs.is_empty());

        let p = pattern("01101");
        let mixed = rollout_interleaved(&solver, &committee, &u0, &p, None).unwrap();
        let mut u = u0.clone();
        let mut pairs = Vec::new();
        for (i, bit) in p.bits.iter().enumerate() {
            let next = if *bit { solver.step(&u).unwrap() } else { committee.mean_forward(&u).unwrap() };
            if *bit {
                pairs.push(TransitionPair { input: u.clone(), output: next.clone() });
            }
            assert_eq!(mixed.trajectory.states[i + 1], next);
            u = next;
        }
        assert_eq!(mixed.acquired_pairs, pairs);
        assert_eq!(mixed.cost, 3);
    }

    #[test]
    fn filter_drops_pairs_but_charges_solver() {
        let spec = small_spec();
        let solver = Solver::new(&spec).unwrap();
        let committee = Committee::new(vec![seeded_model(7, spec.grid)]).unwrap();
        let u0 = State::new(spec.grid, wave(spec.grid).values.iter().map(|v| 0.5 * v).collect()).unwrap();
        let strict = StabilityFilter { magnitude_threshold: 0.1 };
        let r = rollout_interleaved(&solver, &committee, &u0, &SamplingPattern::all_true(5), Some(&strict)).unwrap();
        assert_eq!((r.cost, r.solver_calls, r.filtered), (0, 5, 5));
        assert_eq!(r.trajectory, solver.evolve(&u0, 5).unwrap());
        let loose = StabilityFilter::default();
        let r = rollout_interleaved(&solver, &committee, &u0, &SamplingPattern::all_true(5), Some(&loose)).unwrap();
        assert_eq!((r.cost, r.filtered), (5, 0));
    }

    #[test]
    fn blowup_returns_partial_results() {
        let mut spec = small_spec();
        spec.solver.blowup_cap = 0.5;
        let solver = Solver::new(&spec).unwrap();
        let committee = Committee::new(vec![seeded_model(8, spec.grid)]).unwrap();
        let u0 = wave(spec.grid);
        let r = rollout_interleaved(&solver, &committee, &u0, &SamplingPattern::all_true(5), None).unwrap();
        assert!(r.aborted.is_some());
        assert!(r.acquired_pairs.len() < 5);
        assert_eq!(r.trajectory.states.len(), r.acquired_pairs.len() + 1);
    }

    #[test]
    fn pattern_length_is_checked() {
        let spec = small_spec();
        let solver = Solver::new(&spec).unwrap();
        let committee = Committee::new(vec![seeded_model(9, spec.grid)]).unwrap();
        let err = rollout_interleaved(&solver, &committee, &wave(spec.grid), &SamplingPattern::all_true(4), None);
        assert!(matches!(err, Err(StapError::ShapeMismatch(_))));
    }
}
