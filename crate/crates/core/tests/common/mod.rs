#![allow(dead_code)]

pub mod props;

use ppdispatch::atdm::BlaParams;
use ppdispatch::scenario::{build_scenario, Scenario, ScenarioFile, BUNDLED_SCENARIO};

/// The bundled network cut to `t` periods with the first `k` aggregators.
pub fn small_scenario(t: usize, k: usize) -> Scenario {
    let mut f: ScenarioFile = serde_json::from_str(BUNDLED_SCENARIO).unwrap();
    f.horizon = t;
    f.blas.truncate(k);
    for b in &mut f.blas {
        b.gamma.truncate(t);
    }
    let keep: Vec<String> = f.blas.iter().map(|b| b.id.clone()).collect();
    f.network.placements.retain(|p| keep.contains(&p.bla));
    f.experiments.band_centers.retain(|id, _| keep.contains(id));
    build_scenario(f, format!("small-{t}-{k}")).unwrap()
}

/// A first-order aggregator with a constant drift.
pub fn first_order(id: &str, t: usize) -> BlaParams {
    BlaParams {
        id: id.into(),
        horizon: t,
        order: 1,
        alpha: vec![0.96],
        beta: vec![0.005, 0.003],
        gamma: vec![0.02; t],
        temp_hi: 27.0,
        temp_lo: 23.0,
        hist_x: vec![23.0],
        hist_u: vec![100.0],
    }
}
