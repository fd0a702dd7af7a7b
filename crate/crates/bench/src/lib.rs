//! Shared setup for the benchmarks.

use std::sync::Arc;

use gridtsc::{
    build_grid, DemandProfile, EpisodeConfig, FlowParams, GridGeometry, Scenario, SignalConstants, SimState,
};

/// Reference 5x5 grid under moderate uniform demand.
pub fn reference_episode() -> EpisodeConfig {
    let net = build_grid(5, 5, GridGeometry::default()).expect("reference grid");
    let demand = DemandProfile::uniform(&net, 900.0, 700.0, 0, 16_200);
    EpisodeConfig::new(Scenario::new(net, demand))
}

/// A simulator on an `n`x`n` grid, already run past a 1800 s warm-up.
pub fn warm_sim(n: usize, seed: u64) -> SimState {
    let net = Arc::new(build_grid(n, n, GridGeometry::default()).expect("grid"));
    let demand = DemandProfile::uniform(&net, 900.0, 700.0, 0, u64::MAX / 2);
    let c = SignalConstants::default();
    let mut sim = SimState::with_splits(
        Arc::clone(&net),
        &demand,
        FlowParams::default(),
        c,
        &vec![c.default_split; n * n],
        seed,
    )
    .expect("valid scenario");
    sim.advance(1800);
    sim
}
