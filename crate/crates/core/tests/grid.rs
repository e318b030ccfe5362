mod common;

use ppdispatch::atdm::build_compact;
use ppdispatch::dispatch::simplex::BruteForceBackend;
use ppdispatch::dispatch::{assemble, extract_dispatch, solve, BlaPayload, HighsBackend, Mode, SolveOptions};
use ppdispatch::grid::{build_grid_block, coupling_matrix, Battery, Bus, NetworkModel};
use proptest::prelude::*;

fn solved(t: usize, k: usize) -> (ppdispatch::scenario::Scenario, ppdispatch::dispatch::AssembledProblem, Vec<f64>) {
    let s = common::small_scenario(t, k);
    let compact: Vec<_> = s.blas.iter().map(|b| build_compact(b).unwrap()).collect();
    let g = build_grid_block(&s.network, t).unwrap();
    let a = coupling_matrix(&g, &s.bla_ids()).unwrap();
    let ap = assemble(&g, &a, BlaPayload::Plaintext(&compact), Mode::Plaintext).unwrap();
    let r = solve(&ap.problem, &HighsBackend, &s.solver).unwrap();
    assert!(r.is_optimal());
    (s, ap, r.values)
}

#[test]
fn network_power_balances_every_period() {
    let (s, ap, x) = solved(6, 3);
    let n = &s.network;
    let ix = &ap.layout.grid;
    for t in 0..6 {
        let mut supply = x[ix.p_buy[t]] - x[ix.p_sell[t]];
        for r in &ix.renewables {
            supply += x[r.p[t]];
        }
        for b in &ix.batteries {
            supply += x[b.p_dis[t]] - x[b.p_chr[t]];
        }
        let mut demand: f64 = n.buses.iter().map(|b| b.p_load[t]).sum();
        for cols in ix.p_bla.values() {
            demand += x[cols[t]];
        }
        assert!((supply - demand).abs() <= 1e-6 * demand.abs().max(1.0), "period {t}: {supply} vs {demand}");
    }
}

#[test]
fn voltages_follow_the_branch_drops() {
    let (s, ap, x) = solved(6, 3);
    let n = &s.network;
    let ix = &ap.layout.grid;
    for t in 0..6 {
        assert!((x[ix.v[&n.root][t]] - n.v0).abs() < 1e-9);
        for (j, br) in n.branches.iter().enumerate() {
            let drop = (br.r * x[ix.p_br[j][t]] + br.x * x[ix.q_br[j][t]]) / n.v0;
            let v_to = x[ix.v[&br.to][t]];
            assert!((v_to - (x[ix.v[&br.from][t]] - drop)).abs() < 1e-7);
            let bus = n.buses.iter().find(|b| b.id == br.to).unwrap();
            assert!(v_to >= bus.v_min - 1e-7 && v_to <= bus.v_max + 1e-7);
        }
    }
}

#[test]
fn objective_is_rebuilt_from_network_prices() {
    let (s, ap, x) = solved(6, 3);
    let n = &s.network;
    let ix = &ap.layout.grid;
    let mut cost = 0.0;
    for t in 0..6 {
        cost += n.price_buy[t] * x[ix.p_buy[t]] - n.price_sell[t] * x[ix.p_sell[t]];
        for (b, bi) in n.batteries.iter().zip(&ix.batteries) {
            cost += b.cost * (x[bi.p_chr[t]] + x[bi.p_dis[t]]);
        }
        for (r, ri) in n.renewables.iter().zip(&ix.renewables) {
            cost += r.cost * x[ri.p[t]];
        }
    }
    let r = solve(&ap.problem, &HighsBackend, &s.solver).unwrap();
    assert!((cost - r.objective).abs() <= 1e-6 * cost.abs().max(1.0));
    let d = extract_dispatch(&r, &ap).unwrap();
    assert!((d.c_grid + d.c_om - d.objective).abs() <= 1e-6 * cost.abs().max(1.0));
}

#[test]
fn aggregator_power_equals_the_bus_draw() {
    let (_, ap, x) = solved(5, 2);
    for b in &ap.layout.blas {
        let cols = &ap.layout.grid.p_bla[&b.id];
        for (u, p) in b.u.iter().zip(cols) {
            assert!((x[*u] - x[*p]).abs() < 1e-9);
        }
    }
}

fn arbitrage(prices: &[f64], e0: f64) -> NetworkModel {
    let t = prices.len();
    NetworkModel {
        buses: vec![Bus {
            id: 1,
            v_min: 0.9,
            v_max: 1.1,
            p_load: vec![5.0; t],
            q_load: vec![0.0; t],
        }],
        branches: vec![],
        root: 1,
        tie_max: vec![50.0; t],
        price_buy: prices.to_vec(),
        price_sell: prices.iter().map(|p| 0.6 * p).collect(),
        batteries: vec![Battery {
            bus: 1,
            p_chr_max: 10.0,
            p_dis_max: 10.0,
            q_max: 5.0,
            eta_chr: 0.95,
            eta_dis: 0.9,
            sigma: 0.001,
            e_max: 20.0,
            e_min: 2.0,
            e0,
            cost: 0.01,
            terminal: true,
        }],
        renewables: vec![],
        v0: 1.0,
        dt: 1.0,
        placements: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn highs_matches_exhaustive_search_on_battery_arbitrage(
        prices in prop::collection::vec(0.1f64..2.0, 2),
        e0 in 2.0f64..20.0,
    ) {
        let g = build_grid_block(&arbitrage(&prices, e0), 2).unwrap();
        let opts = SolveOptions { mip_gap: 0.0, ..SolveOptions::default() };
        let h = solve(&g.problem, &HighsBackend, &opts).unwrap();
        let b = solve(&g.problem, &BruteForceBackend, &opts).unwrap();
        prop_assert_eq!(h.status, b.status);
        if h.is_optimal() {
            prop_assert!((h.objective - b.objective).abs() <= 1e-6 * (1.0 + b.objective.abs()),
                "highs {} brute {}", h.objective, b.objective);
            prop_assert!(g.problem.max_violation(&h.values) <= 1e-6);
        }
    }
}
