use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StapError};
use crate::initial_conditions::IcSpec;
use crate::rollout::StabilityFilter;
use crate::selection::{BaseSelector, GreedyConfig, PatternMode};
use crate::solvers::{PdeKind, PdeSpec};
use crate::surrogate::{Architecture, TrainConfig};

fn default_initial_trajectories() -> usize {
    32
}

fn default_rounds() -> usize {
    10
}

fn default_committee_size() -> usize {
    2
}

/// Everything a run depends on. Mirrors the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pde: PdeSpec,
    pub ic: IcSpec,
    pub pool_size: usize,
    pub test_size: usize,
    #[serde(default = "default_initial_trajectories")]
    pub initial_trajectories: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Solver invocations per round; `8 L` when absent.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_committee_size")]
    pub committee_size: usize,
    pub base_selector: BaseSelector,
    pub pattern_mode: PatternMode,
    #[serde(default)]
    pub greedy: GreedyConfig,
    /// The `seed` field is ignored; each round derives its own.
    #[serde(default)]
    pub train: TrainConfig,
    /// Per-PDE desk default when absent.
    #[serde(default)]
    pub architecture: Option<Architecture>,
    /// No filtering when absent.
    #[serde(default)]
    pub filter: Option<StabilityFilter>,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: pool 512, test 128, SBAL with STAP patterns.
    pub fn desk_default(kind: PdeKind) -> Self {
        ExperimentConfig {
            pde: PdeSpec::default_for(kind),
            ic: IcSpec::default_for(kind),
            pool_size: 512,
            test_size: 128,
            initial_trajectories: default_initial_trajectories(),
            rounds: default_rounds(),
            budget: None,
            committee_size: default_committee_size(),
            base_selector: BaseSelector::Sbal,
            pattern_mode: PatternMode::Stap,
            greedy: GreedyConfig::default(),
            train: TrainConfig::default(),
            architecture: None,
            filter: StabilityFilter::default_for(kind),
            master_seed: 0,
            output_dir: None,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(8 * self.pde.trajectory_length)
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture.clone().unwrap_or_else(|| Architecture::desk_default(self.pde.kind, self.pde.grid))
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(StapError::InvalidConfig(msg));
        self.pde.validate()?;
        self.ic.validate()?;
        self.greedy.validate()?;
        self.train.validate()?;
        self.pattern_mode.validate()?;
        self.architecture().validate(self.pde.grid)?;
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        if self.budget() == 0 {
            return invalid("budget must be at least 1".into());
        }
        if self.initial_trajectories == 0 {
            return invalid("initial_trajectories must be at least 1".into());
        }
        if self.pool_size <= self.initial_trajectories {
            return invalid(format!(
                "pool_size {} leaves nothing after {} initial trajectories",
                self.pool_size, self.initial_trajectories
            ));
        }
        if self.test_size == 0 {
            return invalid("test_size must be at least 1".into());
        }
        if self.committee_size == 0 {
            return invalid("committee_size must be at least 1".into());
        }
        let needs_disagreement = self.base_selector != BaseSelector::Random
            || matches!(self.pattern_mode, PatternMode::Stap | PatternMode::StapMf);
        if needs_disagreement && self.committee_size < 2 {
            return invalid("committee-based selection needs committee_size >= 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for kind in [PdeKind::Burgers, PdeKind::Kdv, PdeKind::Ks] {
            let cfg = ExperimentConfig::desk_default(kind);
            cfg.validate().unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        }
        let cfg = ExperimentConfig::desk_default(PdeKind::Burgers);
        assert_eq!(cfg.budget(), 104);
        assert!(cfg.filter.is_none());
        assert!(ExperimentConfig::desk_default(PdeKind::Kdv).filter.is_some());
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let text = r#"{
            "pde": {"kind": "burgers", "viscosity": 0.01, "time_horizon": 2.0, "trajectory_length": 13,
                    "grid": {"num_points": 256, "domain_length": 1.0}},
            "ic": {"kind": "fourier_sum", "num_terms": 2, "wavenumbers": [1, 2, 3, 4], "warmup_steps": 4},
            "pool_size": 64, "test_size": 8,
            "base_selector": "random", "pattern_mode": {"mode": "full"},
            "master_seed": 1
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!((cfg.initial_trajectories, cfg.rounds, cfg.committee_size), (32, 10, 2));
        assert_eq!(cfg.greedy, GreedyConfig::default());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let base = ExperimentConfig::desk_default(PdeKind::Burgers);
        let bad = [
            ExperimentConfig { budget: Some(0), ..base.clone() },
            ExperimentConfig { pool_size: 32, ..base.clone() },
            ExperimentConfig { test_size: 0, ..base.clone() },
            ExperimentConfig { committee_size: 1, ..base.clone() },
        ];
        for cfg in bad {
            assert!(cfg.validate().unwrap_err().is_validation());
        }
        let single = ExperimentConfig {
            committee_size: 1,
            base_selector: BaseSelector::Random,
            pattern_mode: PatternMode::Full,
            ..base
        };
        single.validate().unwrap();
    }
}
