use super::*;
use crate::initial_conditions::IcSpec;
use crate::selection::{BaseSelector, PatternMode};
use crate::solvers::{PdeKind, PdeSpec, SpatialGrid};
use crate::surrogate::{Activation, Architecture};

fn tiny(kind: PdeKind) -> ExperimentConfig {
    let base = PdeSpec::default_for(kind);
    let steps = 4;
    let pde = PdeSpec {
        grid: SpatialGrid::new(32, base.grid.domain_length).unwrap(),
        trajectory_length: steps,
        time_horizon: base.macro_dt() * steps as f64,
        ..base
    };
    ExperimentConfig {
        pde,
        ic: IcSpec::default_for(kind),
        pool_size: 14,
        test_size: 3,
        initial_trajectories: 4,
        rounds: 2,
        budget: Some(6),
        committee_size: 2,
        base_selector: BaseSelector::Sbal,
        pattern_mode: PatternMode::Stap,
        greedy: crate::selection::GreedyConfig { iterations: 8, flip_probability: 0.2 },
        train: TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() },
        architecture: Some(Architecture { num_layers: 1, channels: 4, fourier_modes: 6, activation: Activation::Gelu }),
        filter: None,
        master_seed: 21,
        output_dir: None,
    }
}

#[test]
fn pool_and_test_are_reproducible_and_disjoint() {
    let cfg = tiny(PdeKind::Burgers);
    let (pool, test) = generate_pool_and_test(&cfg).unwrap();
    let (pool2, test2) = generate_pool_and_test(&cfg).unwrap();
    assert_eq!((&pool, &test), (&pool2, &test2));
    assert_eq!((pool.len(), test.len()), (14, 3));
    assert!(test.iter().all(|t| t.steps() == 4));
    assert!(test.iter().all(|t| !pool.contains(t.initial())));
}

#[test]
fn kdv_test_trajectories_conserve_mean() {
    let cfg = tiny(PdeKind::Kdv);
    let (_, test) = generate_pool_and_test(&cfg).unwrap();
    for t in &test {
        let m0 = t.initial().mean();
        for s in &t.states {
            assert!((s.mean() - m0).abs() <= 1e-8 * m0.abs().max(1.0));
        }
    }
}

#[test]
fn initial_dataset_takes_full_trajectories() {
    let cfg = tiny(PdeKind::Burgers);
    let exp = Experiment::new(cfg).unwrap();
    let (dataset, pool) = build_initial_dataset(&exp.pool, &exp.config, &exp.solver).unwrap();
    assert_eq!(dataset.len(), 16);
    assert!(dataset.norm.std > 0.0);
    assert_eq!(pool.len(), 10);
    assert_eq!(pool.indices[0], 4);
}

#[test]
fn full_random_rounds_grow_by_budget() {
    let cfg = ExperimentConfig {
        base_selector: BaseSelector::Random,
        pattern_mode: PatternMode::Full,
        budget: Some(8),
        ..tiny(PdeKind::Burgers)
    };
    let run = Experiment::new(cfg).unwrap().run(None).unwrap();
    assert_eq!(run.rounds.len(), 3);
    for (r, outcome) in run.rounds.iter().enumerate() {
        assert_eq!(outcome.dataset_size, 16 + 8 * r);
        assert_eq!(outcome.solver_calls, 16 + 8 * r);
        assert!(outcome.acquisitions.iter().all(|a| a.pattern == "1111"));
    }
    assert!(run.report.averaged.is_some());
}

#[test]
fn zero_rounds_emit_only_the_initial_evaluation() {
    let cfg = ExperimentConfig { rounds: 0, ..tiny(PdeKind::Burgers) };
    let run = Experiment::new(cfg).unwrap().run(None).unwrap();
    assert_eq!(run.rounds.len(), 1);
    assert_eq!(run.report.averaged.unwrap().log_rmse, run.rounds[0].metrics.log_rmse);
}

#[test]
fn stap_run_is_budget_exact_and_reproducible_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = tiny(PdeKind::Burgers);
    let run = Experiment::new(cfg.clone()).unwrap().run(Some(&a)).unwrap();
    Experiment::new(cfg.clone()).unwrap().run(Some(&b)).unwrap();
    for r in &run.rounds[1..] {
        assert_eq!(r.acquisitions.iter().map(|x| x.solver_calls).sum::<usize>(), 6);
    }
    assert_eq!(run.final_state.solver_calls, 16 + 2 * 6);
    for file in ["metrics.csv", "summary.json", "round_002/patterns.csv", "round_002/dataset.f64", "round_001/committee/member_1.f64"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(persisted_rounds(&a).unwrap(), vec![0, 1, 2]);

    let (stored, fresh) = reevaluate_round(&a, 2).unwrap();
    assert_eq!(stored, fresh);
    let patterns = read_patterns(&a, 1).unwrap();
    assert_eq!(patterns.len(), run.rounds[1].acquisitions.len());
    assert_eq!(patterns.iter().map(|p| p.cost()).sum::<usize>(), 6);

    let exp = Experiment::new(cfg).unwrap();
    let state = exp.load_state(&a, 1).unwrap();
    assert_eq!(state.dataset.len(), run.rounds[1].dataset_size);
    let (next, outcome) = exp.run_round(&state).unwrap();
    assert_eq!(outcome, run.rounds[2]);
    assert_eq!(next.committee, run.final_state.committee);
    assert!(exp.load_state(&a, 7).is_err());
}

#[test]
fn filtered_pairs_reduce_growth_but_not_solver_calls() {
    let cfg = ExperimentConfig {
        base_selector: BaseSelector::Random,
        pattern_mode: PatternMode::Full,
        budget: Some(8),
        rounds: 1,
        filter: Some(crate::rollout::StabilityFilter { magnitude_threshold: 1.0 }),
        ..tiny(PdeKind::Kdv)
    };
    let run = Experiment::new(cfg).unwrap().run(None).unwrap();
    let r1 = &run.rounds[1];
    assert!(r1.filtered() > 0, "threshold should bite on KdV states");
    assert_eq!(r1.dataset_size, 16 + 8 - r1.filtered());
    assert_eq!(r1.solver_calls, 16 + 8);
}
