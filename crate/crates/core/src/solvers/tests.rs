use std::f64::consts::PI;

use super::*;

fn sines(grid: SpatialGrid, terms: &[(f64, f64, f64)], offset: f64) -> State {
    let x = grid.coordinates();
    let values = x
        .iter()
        .map(|&x| {
            offset
                + terms
                    .iter()
                    .map(|&(a, k, phi)| a * (2.0 * PI * k * x / grid.domain_length + phi).sin())
                    .sum::<f64>()
        })
        .collect();
    State::new(grid, values).unwrap()
}

fn assert_fixed_point(spec: &PdeSpec, c: f64) {
    let solver = Solver::new(spec).unwrap();
    let u = State::constant(spec.grid, c);
    let out = solver.step(&u).unwrap();
    for v in &out.values {
        assert!((v - c).abs() <= 1e-12, "{:?}: {} drifted from {}", spec.kind, v, c);
    }
}

#[test]
fn zero_and_constant_fields_are_fixed_points() {
    for spec in [PdeSpec::burgers(), PdeSpec::kdv(), PdeSpec::ks()] {
        assert_fixed_point(&spec, 0.0);
        assert_fixed_point(&spec, 0.75);
        assert_fixed_point(&spec, -1.5);
    }
}

#[test]
fn burgers_default_substeps_follow_cfl() {
    let spec = PdeSpec::burgers();
    // dx = 1/256, dt_max = 0.5 * dx / 5
    let expected = ((2.0f64 / 13.0) / (0.5 / 256.0 / 5.0)).ceil() as usize;
    assert_eq!(spec.effective_substeps(), expected);
}

#[test]
fn burgers_self_converges_under_substep_refinement() {
    let spec = PdeSpec::burgers();
    let u0 = sines(spec.grid, &[(1.0, 1.0, 0.0)], 0.0);
    let coarse = step_burgers(&u0, &spec).unwrap();
    let mut fine_spec = spec.clone();
    fine_spec.substeps = Some(4 * spec.effective_substeps());
    let fine = step_burgers(&u0, &fine_spec).unwrap();
    let err = relative_l2(&coarse.values, &fine.values);
    assert!(err < 1e-4, "relative L2 {err}");
}

#[test]
fn kdv_conserves_mean_over_a_trajectory() {
    let spec = PdeSpec::kdv();
    let u0 = sines(spec.grid, &[(0.6, 1.0, 0.3), (0.4, 3.0, 1.1), (0.5, 2.0, 2.0)], 0.5);
    let traj = evolve(&u0, &spec, spec.trajectory_length).unwrap();
    let m0 = traj.states[0].mean();
    let ml = traj.states.last().unwrap().mean();
    assert!(((ml - m0) / m0).abs() < 1e-8, "mean drift {}", (ml - m0) / m0);
    let single = step_kdv(&u0, &spec).unwrap();
    assert!(((single.mean() - m0) / m0).abs() < 1e-10);
}

fn soliton(grid: SpatialGrid, speed: f64, centre: f64) -> State {
    let x = grid.coordinates();
    let values = x
        .iter()
        .map(|&x| {
            let s = 0.5 * speed.sqrt() * (x - centre);
            3.0 * speed / s.cosh().powi(2)
        })
        .collect();
    State::new(grid, values).unwrap()
}

#[test]
fn kdv_soliton_matches_tight_tolerance_oracle() {
    let spec = PdeSpec::kdv();
    let u0 = soliton(spec.grid, 0.5, 40.0);
    let out = step_kdv(&u0, &spec).unwrap();
    let oracle = Solver::with_tolerance(&spec, 1e-10, 1e-10).unwrap().step(&u0).unwrap();
    let err = relative_l2(&out.values, &oracle.values);
    assert!(err < 1e-5, "relative L2 {err}");
    // the pulse travels right at its speed: peak moves by about speed * dt = 2
    let peak = |s: &State| {
        s.values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0 as f64
            * spec.grid.spacing()
    };
    let shift = peak(&out) - peak(&u0);
    assert!((shift - 2.0).abs() <= 2.0 * spec.grid.spacing(), "shift {shift}");
}

#[test]
fn ks_self_converges_when_substeps_double() {
    for spec in [PdeSpec::ks(), {
        let mut s = PdeSpec::ks();
        s.grid = SpatialGrid { num_points: 128, domain_length: 32.0 * PI };
        s
    }] {
        let u0 = sines(spec.grid, &[(0.8, 1.0, 0.2), (0.5, 2.0, 1.3), (0.3, 5.0, 0.4)], 0.0);
        let out = step_ks(&u0, &spec).unwrap();
        let mut fine = spec.clone();
        fine.substeps = Some(2 * spec.effective_substeps());
        let reference = step_ks(&u0, &fine).unwrap();
        let err = relative_l2(&out.values, &reference.values);
        assert!(err < 1e-5, "relative L2 {err} on X = {}", spec.grid.domain_length);
    }
}

#[test]
fn evolve_composes_steps_deterministically() {
    for spec in [PdeSpec::burgers(), PdeSpec::ks()] {
        let solver = Solver::new(&spec).unwrap();
        let u0 = sines(spec.grid, &[(0.7, 2.0, 0.1)], 0.1);
        let t0 = solver.evolve(&u0, 0).unwrap();
        assert_eq!(t0.states, vec![u0.clone()]);
        let t2 = solver.evolve(&u0, 2).unwrap();
        let once = solver.step(&u0).unwrap();
        let twice = solver.step(&once).unwrap();
        assert_eq!(t2.states[1], once);
        assert_eq!(t2.states[2], twice);
        assert_eq!(solver.evolve(&u0, 2).unwrap(), t2);
    }
}

#[test]
fn blowup_is_reported_with_step_index() {
    let mut spec = PdeSpec::burgers();
    spec.solver.blowup_cap = 0.5;
    let u0 = sines(spec.grid, &[(0.4, 1.0, 0.0)], 0.0);
    let solver = Solver::new(&spec).unwrap();
    let mut big = u0.clone();
    big.values[3] = 10.0;
    assert!(matches!(solver.step(&big), Err(StapError::NumericalBlowup(_))));
    let mut nan = u0;
    nan.values[0] = f64::NAN;
    match solver.evolve(&nan, 3) {
        Err(StapError::StepFailed { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn step_operators_check_kind() {
    let u = State::zeros(PdeSpec::kdv().grid);
    assert!(step_burgers(&u, &PdeSpec::kdv()).is_err());
}

#[test]
fn grid_validation() {
    assert!(SpatialGrid::new(100, 1.0).is_err());
    assert!(SpatialGrid::new(128, 0.0).is_err());
    let g = SpatialGrid::new(256, 2.0).unwrap();
    assert!((g.spacing() * 256.0 - 2.0).abs() < 1e-15);
}
