//! Batch construction: base selectors for initial conditions, the greedy
//! bit-flip pattern search, budget truncation and Bernoulli patterns.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{cost_weighted, member_rollouts, qbc_from_rollouts, PatternScorer, StapVariant};
use crate::error::{Result, StapError};
use crate::rng::RandomStream;
use crate::rollout::SamplingPattern;
use crate::solvers::State;
use crate::surrogate::Committee;

/// How initial conditions are drawn from the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseSelector {
    Random,
    Qbc,
    Sbal,
}

impl std::str::FromStr for BaseSelector {
    type Err = StapError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(BaseSelector::Random),
            "qbc" => Ok(BaseSelector::Qbc),
            "sbal" => Ok(BaseSelector::Sbal),
            other => Err(StapError::InvalidConfig(format!("unknown base selector `{other}`"))),
        }
    }
}

/// How the sampling pattern of a selected initial condition is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PatternMode {
    Full,
    Stap,
    StapMf,
    Bernoulli { p: f64 },
    InitialBernoulli { p: f64 },
}

impl PatternMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            PatternMode::Bernoulli { p } | PatternMode::InitialBernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(StapError::InvalidConfig(format!("Bernoulli probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    pub iterations: usize,
    pub flip_probability: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { iterations: 100, flip_probability: 0.1 }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.flip_probability > 0.0 && self.flip_probability < 1.0) {
            return Err(StapError::InvalidConfig("flip probability must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    pub pattern: SamplingPattern,
    /// Cost-weighted score of `pattern`.
    pub value: f64,
    /// Values of the starting pattern and of every accepted proposal.
    pub accepted: Vec<f64>,
}

fn weighted(scorer: &PatternScorer<'_>, pattern: &SamplingPattern) -> Option<f64> {
    let score = scorer.score(pattern);
    // an exactly zero reduction means the members never disagree under this pattern
    if !score.is_finite() || score == 0.0 {
        return None;
    }
    cost_weighted(score, pattern).ok()
}

/// Greedy bit-flip search starting from the all-true pattern.
///
/// A proposal replaces the incumbent when it has at least one true entry,
/// a finite non-zero score and a cost-weighted value at least as large.
pub fn optimize_with_scorer(scorer: &PatternScorer<'_>, cfg: &GreedyConfig, rng: &mut RandomStream) -> GreedyOutcome {
    let steps = scorer.steps();
    let mut pattern = SamplingPattern::all_true(steps);
    let mut value = scorer.score(&pattern) / steps as f64;
    let mut accepted = vec![value];
    // memoised values of proposals already seen
    let mut seen: HashMap<Vec<bool>, Option<f64>> = HashMap::new();
    for _ in 0..cfg.iterations {
        let bits = pattern.bits.iter().map(|b| b ^ rng.bernoulli(cfg.flip_probability)).collect();
        let proposal = SamplingPattern::new(bits);
        if proposal.cost() == 0 {
            continue;
        }
        let v = *seen.entry(proposal.bits.clone()).or_insert_with(|| weighted(scorer, &proposal));
        if let Some(v) = v {
            if v >= value {
                pattern = proposal;
                value = v;
                accepted.push(v);
            }
        }
    }
    GreedyOutcome { pattern, value, accepted }
}

pub fn optimize_pattern(
    committee: &Committee,
    u0: &State,
    steps: usize,
    variant: StapVariant,
    cfg: &GreedyConfig,
    rng: &mut RandomStream,
) -> Result<GreedyOutcome> {
    if steps == 0 {
        return Err(StapError::InvalidConfig("patterns need at least one step".into()));
    }
    let scorer = PatternScorer::new(committee, u0, steps, variant)?;
    Ok(optimize_with_scorer(&scorer, cfg, rng))
}

/// Keeps the first `remaining_budget` true entries.
pub fn truncate_pattern(pattern: &SamplingPattern, remaining_budget: usize) -> SamplingPattern {
    let mut kept = 0;
    let bits = pattern
        .bits
        .iter()
        .map(|b| {
            if *b && kept < remaining_budget {
                kept += 1;
                true
            } else {
                false
            }
        })
        .collect();
    SamplingPattern::new(bits)
}

pub fn bernoulli_pattern(p: f64, steps: usize, rng: &mut RandomStream) -> SamplingPattern {
    SamplingPattern::new((0..steps).map(|_| rng.bernoulli(p)).collect())
}

/// A Bernoulli draw with its true entries moved to the front.
pub fn initial_bernoulli_pattern(p: f64, steps: usize, rng: &mut RandomStream) -> SamplingPattern {
    let k = bernoulli_pattern(p, steps, rng).cost();
    SamplingPattern::new((0..steps).map(|i| i < k).collect())
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_first(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(StapError::EmptyPool);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Index drawn with probability proportional to the positive scores, or
/// uniformly when no score is positive.
pub fn sample_proportional(scores: &[f64], rng: &mut RandomStream) -> Result<usize> {
    if scores.is_empty() {
        return Err(StapError::EmptyPool);
    }
    let weight = |s: f64| if s.is_finite() && s > 0.0 { s } else { 0.0 };
    let total: f64 = scores.iter().map(|s| weight(*s)).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Ok(rng.index(scores.len()));
    }
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, s) in scores.iter().enumerate() {
        let w = weight(*s);
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Query-by-committee scores of every candidate; failed rollouts score
/// negative infinity.
pub fn qbc_pool_scores(pool: &[State], committee: &Committee, steps: usize) -> Result<Vec<f64>> {
    if committee.size() < 2 {
        return Err(StapError::InvalidModel("disagreement needs at least two members".into()));
    }
    Ok(pool
        .par_iter()
        .map(|u0| match member_rollouts(committee, u0, steps).and_then(|r| qbc_from_rollouts(&r)) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        })
        .collect())
}

pub fn select_initial_random(pool: &[State], rng: &mut RandomStream) -> Result<usize> {
    if pool.is_empty() {
        return Err(StapError::EmptyPool);
    }
    Ok(rng.index(pool.len()))
}

pub fn select_initial_qbc(pool: &[State], committee: &Committee, steps: usize) -> Result<usize> {
    if pool.is_empty() {
        return Err(StapError::EmptyPool);
    }
    argmax_first(&qbc_pool_scores(pool, committee, steps)?)
}

pub fn select_initial_sbal(pool: &[State], committee: &Committee, steps: usize, rng: &mut RandomStream) -> Result<usize> {
    if pool.is_empty() {
        return Err(StapError::EmptyPool);
    }
    sample_proportional(&qbc_pool_scores(pool, committee, steps)?, rng)
}

/// Unused initial conditions, kept in ascending pool-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePool {
    pub indices: Vec<usize>,
    pub states: Vec<State>,
}

impl CandidatePool {
    pub fn new(states: Vec<State>) -> Self {
        CandidatePool { indices: (0..states.len()).collect(), states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn remove(&mut self, position: usize) -> (usize, State) {
        (self.indices.remove(position), self.states.remove(position))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub pool_index: usize,
    pub initial_condition: State,
    pub pattern: SamplingPattern,
    /// Base acquisition score at selection time, for score-based selectors.
    pub base_score: Option<f64>,
    /// Cost-weighted pattern value, for optimised patterns.
    pub pattern_value: Option<f64>,
}

/// Selects initial conditions and patterns until the patterns' total cost
/// equals `budget`. Item `j` draws from `rng.derive("item", j)`.
///
/// Initial conditions whose pattern ends up empty are consumed without
/// being added.
#[allow(clippy::too_many_arguments)]
pub fn build_batch(
    pool: &mut CandidatePool,
    committee: &Committee,
    steps: usize,
    budget: usize,
    base: BaseSelector,
    mode: PatternMode,
    greedy: &GreedyConfig,
    rng: &RandomStream,
) -> Result<Vec<BatchItem>> {
    if budget == 0 {
        return Err(StapError::InvalidConfig("budget must be at least 1".into()));
    }
    mode.validate()?;
    let mut scores = match base {
        BaseSelector::Random => None,
        _ => Some(qbc_pool_scores(&pool.states, committee, steps)?),
    };
    let mut items = Vec::new();
    let mut spent = 0;
    let mut j = 0u64;
    while spent < budget {
        if pool.is_empty() {
            return Err(StapError::PoolExhausted { remaining: budget - spent });
        }
        let item_rng = rng.derive("item", j);
        j += 1;
        let mut select_rng = item_rng.derive("select", 0);
        let position = match (base, &scores) {
            (BaseSelector::Qbc, Some(s)) => argmax_first(s)?,
            (BaseSelector::Sbal, Some(s)) => sample_proportional(s, &mut select_rng)?,
            _ => select_initial_random(&pool.states, &mut select_rng)?,
        };
        let base_score = scores.as_mut().map(|s| s.remove(position));
        let (pool_index, u0) = pool.remove(position);

        let mut pattern_rng = item_rng.derive("pattern", 0);
        let (pattern, pattern_value) = match mode {
            PatternMode::Full => (SamplingPattern::all_true(steps), None),
            PatternMode::Stap | PatternMode::StapMf => {
                let variant = if mode == PatternMode::Stap { StapVariant::Pairwise } else { StapVariant::MeanField };
                match PatternScorer::new(committee, &u0, steps, variant) {
                    Ok(scorer) => {
                        let out = optimize_with_scorer(&scorer, greedy, &mut pattern_rng);
                        (out.pattern, Some(out.value))
                    }
                    Err(StapError::NonFiniteOutput { .. }) => (SamplingPattern::all_true(steps), None),
                    Err(e) => return Err(e),
                }
            }
            PatternMode::Bernoulli { p } => (bernoulli_pattern(p, steps, &mut pattern_rng), None),
            PatternMode::InitialBernoulli { p } => (initial_bernoulli_pattern(p, steps, &mut pattern_rng), None),
        };
        let pattern = truncate_pattern(&pattern, budget - spent);
        if pattern.cost() == 0 {
            continue;
        }
        spent += pattern.cost();
        items.push(BatchItem { pool_index, initial_condition: u0, pattern, base_score, pattern_value });
    }
    Ok(items)
}
