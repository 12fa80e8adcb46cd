//! Shared fixtures for the stap benchmarks in `benches/`.

use stap_core::initial_conditions::{make_initial_condition, IcSpec};
use stap_core::surrogate::{init_model, Activation};
use stap_core::{Architecture, Committee, NormStats, PdeKind, PdeSpec, RandomStream, State, TransitionPair};

/// A warmed-up default initial condition for `kind`.
pub fn initial_state(kind: PdeKind, seed: u64) -> State {
    let spec = PdeSpec::default_for(kind);
    make_initial_condition(&IcSpec::default_for(kind), &spec, &mut RandomStream::new(seed)).expect("default IC")
}

/// Committee on the Burgers grid with perturbed, non-trivial weights.
pub fn burgers_committee(size: usize, arch: &Architecture) -> Committee {
    let grid = PdeSpec::burgers().grid;
    let members = (0..size as u64)
        .map(|m| {
            let mut model = init_model(arch, grid, NormStats { mean: 0.0, std: 0.5 }, &mut RandomStream::new(m)).unwrap();
            let mut rng = RandomStream::new(100 + m);
            let scale = 0.3 / arch.channels as f64;
            model.params.iter_mut().for_each(|p| *p += rng.uniform_range(-scale, scale));
            model
        })
        .collect();
    Committee::new(members).unwrap()
}

pub fn small_architecture() -> Architecture {
    Architecture { num_layers: 2, channels: 16, fourier_modes: 16, activation: Activation::Gelu }
}

/// Solver pairs from one Burgers trajectory.
pub fn burgers_pairs(seed: u64) -> Vec<TransitionPair> {
    let spec = PdeSpec::burgers();
    let u0 = initial_state(PdeKind::Burgers, seed);
    let t = stap_core::Solver::new(&spec).unwrap().evolve(&u0, spec.trajectory_length).unwrap();
    t.states.windows(2).map(|w| TransitionPair { input: w[0].clone(), output: w[1].clone() }).collect()
}
