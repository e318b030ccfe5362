//! Radial distribution network: linearized DistFlow constraints, tie-line
//! exchange, batteries and renewables, and the coupling between BLA power
//! and the bus injections.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::milp::Milp;

const INF: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// kW per period.
    #[serde(default)]
    pub p_load: Vec<f64>,
    /// kvar per period.
    #[serde(default)]
    pub q_load: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Resistance in p.u. voltage drop per kW.
    pub r: f64,
    /// Reactance in p.u. voltage drop per kvar.
    pub x: f64,
    /// kW.
    pub p_max: f64,
}

fn default_sigma() -> f64 {
    0.001
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub bus: usize,
    pub p_chr_max: f64,
    pub p_dis_max: f64,
    pub q_max: f64,
    pub eta_chr: f64,
    pub eta_dis: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub e_max: f64,
    pub e_min: f64,
    pub e0: f64,
    /// Per kWh charged or discharged.
    pub cost: f64,
    /// Require end-of-horizon energy ≥ `e0`.
    #[serde(default = "default_true")]
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Renewable {
    pub bus: usize,
    pub p_max: Vec<f64>,
    #[serde(default)]
    pub q_max: Vec<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub bla: String,
    pub bus: usize,
    /// Optional limits on the power exchanged with this aggregator; free when absent.
    #[serde(default)]
    pub p_min: Option<f64>,
    #[serde(default)]
    pub p_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Bus connected to the upstream grid.
    pub root: usize,
    pub tie_max: Vec<f64>,
    pub price_buy: Vec<f64>,
    pub price_sell: Vec<f64>,
    #[serde(default)]
    pub batteries: Vec<Battery>,
    #[serde(default)]
    pub renewables: Vec<Renewable>,
    #[serde(default = "default_v0")]
    pub v0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

fn default_v0() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1.0
}

/// Itemized findings; an empty list means the input passed.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<String>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.pass() {
            Ok(())
        } else {
            Err(Error::Validation(self.findings))
        }
    }
}

impl NetworkModel {
    pub fn horizon(&self) -> usize {
        self.price_buy.len()
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

}

fn check_series(f: &mut Vec<String>, what: &str, s: &[f64], t: usize, nonneg: bool) {
    if s.len() < t {
        f.push(format!("{what}: {} values, horizon needs {t}", s.len()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        f.push(format!("{what}: non-finite value"));
    } else if nonneg && s.iter().any(|v| *v < 0.0) {
        f.push(format!("{what}: negative value"));
    }
}

pub fn validate_network(n: &NetworkModel) -> ValidationReport {
    let mut f = Vec::new();
    let t = n.horizon();
    if t == 0 {
        f.push("price_buy is empty: horizon must be at least 1".into());
    }
    let ids: BTreeSet<usize> = n.buses.iter().map(|b| b.id).collect();
    if ids.len() != n.buses.len() {
        f.push("duplicate bus id".into());
    }
    if !ids.contains(&n.root) {
        f.push(format!("root bus {} is not declared", n.root));
    }
    for b in &n.buses {
        if !(b.v_min <= b.v_max) || b.v_min < 0.0 {
            f.push(format!("bus {}: voltage bounds [{}, {}] invalid", b.id, b.v_min, b.v_max));
        }
        if b.id == n.root && (n.v0 < b.v_min || n.v0 > b.v_max) {
            f.push(format!("root bus {}: V0 = {} outside its voltage bounds", b.id, n.v0));
        }
        if !b.p_load.is_empty() {
            check_series(&mut f, &format!("bus {} p_load", b.id), &b.p_load, t, false);
        }
        if !b.q_load.is_empty() {
            check_series(&mut f, &format!("bus {} q_load", b.id), &b.q_load, t, false);
        }
    }

    // radial: n-1 branches, every non-root bus has exactly one parent, and
    // every bus is reachable from the root
    if n.branches.len() + 1 != n.buses.len() {
        f.push(format!(
            "not radial: {} buses need {} branches, found {}",
            n.buses.len(),
            n.buses.len().saturating_sub(1),
            n.branches.len()
        ));
    }
    let mut parents: BTreeMap<usize, usize> = BTreeMap::new();
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, br) in n.branches.iter().enumerate() {
        for end in [br.from, br.to] {
            if !ids.contains(&end) {
                f.push(format!("branch {j}: bus {end} is not declared"));
            }
        }
        if br.from == br.to {
            f.push(format!("branch {j}: self loop at bus {}", br.from));
        }
        if br.to == n.root {
            f.push(format!("not radial: branch {j} feeds the root bus"));
        }
        if let Some(prev) = parents.insert(br.to, br.from) {
            f.push(format!(
                "not radial: bus {} has two parents ({prev} and {})",
                br.to, br.from
            ));
        }
        children.entry(br.from).or_default().push(br.to);
        if br.p_max < 0.0 || br.r < 0.0 || br.x < 0.0 {
            f.push(format!("branch {j}: negative impedance or limit"));
        }
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![n.root];
    while let Some(b) = stack.pop() {
        if !seen.insert(b) {
            f.push(format!("not radial: cycle through bus {b}"));
            continue;
        }
        if let Some(ch) = children.get(&b) {
            stack.extend(ch.iter().copied());
        }
    }
    for id in &ids {
        if !seen.contains(id) {
            f.push(format!("bus {id} is not connected to the root"));
        }
    }

    check_series(&mut f, "tie_max", &n.tie_max, t, true);
    check_series(&mut f, "price_buy", &n.price_buy, t, false);
    check_series(&mut f, "price_sell", &n.price_sell, t, false);
    if !(n.dt > 0.0) {
        f.push("dt must be positive".into());
    }
    if !(n.v0 > 0.0) {
        f.push("v0 must be positive".into());
    }

    for (i, b) in n.batteries.iter().enumerate() {
        let tag = format!("battery {i} (bus {})", b.bus);
        if !ids.contains(&b.bus) {
            f.push(format!("{tag}: bus not declared"));
        }
        for (name, eta) in [("eta_chr", b.eta_chr), ("eta_dis", b.eta_dis)] {
            if !(eta > 0.0 && eta <= 1.0) {
                f.push(format!("{tag}: efficiency {name} = {eta} out of range (0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&b.sigma) {
            f.push(format!("{tag}: sigma = {} out of range [0, 1)", b.sigma));
        }
        if [b.p_chr_max, b.p_dis_max, b.q_max, b.e_min, b.e_max, b.e0, b.cost]
            .iter()
            .any(|v| *v < 0.0 || !v.is_finite())
        {
            f.push(format!("{tag}: negative or non-finite bound"));
        }
        if !(b.e_min <= b.e0 && b.e0 <= b.e_max) {
            f.push(format!("{tag}: initial energy outside [e_min, e_max]"));
        }
    }
    for (i, r) in n.renewables.iter().enumerate() {
        let tag = format!("renewable {i} (bus {})", r.bus);
        if !ids.contains(&r.bus) {
            f.push(format!("{tag}: bus not declared"));
        }
        check_series(&mut f, &format!("{tag} p_max"), &r.p_max, t, true);
        if !r.q_max.is_empty() {
            check_series(&mut f, &format!("{tag} q_max"), &r.q_max, t, true);
        }
    }
    let mut placed = BTreeSet::new();
    for p in &n.placements {
        if !ids.contains(&p.bus) {
            f.push(format!("placement {}: bus {} not declared", p.bla, p.bus));
        }
        if !placed.insert(p.bla.clone()) {
            f.push(format!("placement {}: aggregator placed twice", p.bla));
        }
        if let (Some(lo), Some(hi)) = (p.p_min, p.p_max) {
            if lo > hi {
                f.push(format!("placement {}: p_min exceeds p_max", p.bla));
            }
        }
    }
    ValidationReport { findings: f }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatteryIndex {
    pub p_chr: Vec<usize>,
    pub p_dis: Vec<usize>,
    pub q: Vec<usize>,
    pub e: Vec<usize>,
    pub eps_chr: Vec<usize>,
    pub eps_dis: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenewableIndex {
    pub p: Vec<usize>,
    pub q: Vec<usize>,
}

/// Variable positions inside [`GridBlock::problem`], one entry per period.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridIndex {
    pub horizon: usize,
    pub p_buy: Vec<usize>,
    pub p_sell: Vec<usize>,
    pub eps_buy: Vec<usize>,
    pub eps_sell: Vec<usize>,
    pub q_grid: Vec<usize>,
    pub batteries: Vec<BatteryIndex>,
    pub renewables: Vec<RenewableIndex>,
    /// Keyed by bus id.
    pub v: BTreeMap<usize, Vec<usize>>,
    pub p_inj: BTreeMap<usize, Vec<usize>>,
    pub q_inj: BTreeMap<usize, Vec<usize>>,
    pub p_br: Vec<Vec<usize>>,
    pub q_br: Vec<Vec<usize>>,
    /// Keyed by aggregator id.
    pub p_bla: BTreeMap<String, Vec<usize>>,
}

/// The DSO's own constraint set and objective.
#[derive(Clone, Debug, PartialEq)]
pub struct GridBlock {
    pub problem: Milp,
    pub index: GridIndex,
}

pub fn build_grid_block(n: &NetworkModel, t: usize) -> Result<GridBlock> {
    let report = validate_network(n);
    if !report.pass() {
        return Err(Error::InvalidModel(report.findings.join("; ")));
    }
    if t == 0 || t > n.horizon() {
        return Err(Error::InvalidModel(format!(
            "requested horizon {t}, network data covers {}",
            n.horizon()
        )));
    }
    let dt = n.dt;
    let mut m = Milp::new();
    let mut ix = GridIndex {
        horizon: t,
        ..Default::default()
    };

    for s in 0..t {
        let pb = m.add_var(format!("p_buy_{s}"), 0.0, INF, n.price_buy[s] * dt);
        let ps = m.add_var(format!("p_sell_{s}"), 0.0, INF, -n.price_sell[s] * dt);
        let eb = m.add_binary(format!("eps_buy_{s}"), 0.0);
        let es = m.add_binary(format!("eps_sell_{s}"), 0.0);
        m.add_le(format!("buy_lim_{s}"), vec![(pb, 1.0), (eb, -n.tie_max[s])], 0.0);
        m.add_le(format!("sell_lim_{s}"), vec![(ps, 1.0), (es, -n.tie_max[s])], 0.0);
        m.add_le(format!("tie_excl_{s}"), vec![(eb, 1.0), (es, 1.0)], 1.0);
        ix.p_buy.push(pb);
        ix.p_sell.push(ps);
        ix.eps_buy.push(eb);
        ix.eps_sell.push(es);
        ix.q_grid.push(m.add_var(format!("q_grid_{s}"), -INF, INF, 0.0));
    }

    for (i, r) in n.renewables.iter().enumerate() {
        let mut ri = RenewableIndex::default();
        for s in 0..t {
            let qmax = r.q_max.get(s).copied().unwrap_or(0.0);
            ri.p.push(m.add_var(format!("p_res_{i}_{s}"), 0.0, r.p_max[s], r.cost * dt));
            ri.q.push(m.add_var(format!("q_res_{i}_{s}"), 0.0, qmax, 0.0));
        }
        ix.renewables.push(ri);
    }

    for (i, b) in n.batteries.iter().enumerate() {
        let mut bi = BatteryIndex::default();
        for s in 0..t {
            let pc = m.add_var(format!("p_chr_{i}_{s}"), 0.0, INF, b.cost * dt);
            let pd = m.add_var(format!("p_dis_{i}_{s}"), 0.0, INF, b.cost * dt);
            let q = m.add_var(format!("q_bt_{i}_{s}"), -b.q_max, b.q_max, 0.0);
            let e = m.add_var(format!("e_bt_{i}_{s}"), b.e_min, b.e_max, 0.0);
            let ec = m.add_binary(format!("eps_chr_{i}_{s}"), 0.0);
            let ed = m.add_binary(format!("eps_dis_{i}_{s}"), 0.0);
            m.add_le(format!("chr_lim_{i}_{s}"), vec![(pc, 1.0), (ec, -b.p_chr_max)], 0.0);
            m.add_le(format!("dis_lim_{i}_{s}"), vec![(pd, 1.0), (ed, -b.p_dis_max)], 0.0);
            m.add_le(format!("bt_excl_{i}_{s}"), vec![(ec, 1.0), (ed, 1.0)], 1.0);
            let mut coefs = vec![(e, 1.0), (pc, -b.eta_chr * dt), (pd, dt / b.eta_dis)];
            let rhs = if s == 0 {
                (1.0 - b.sigma) * b.e0
            } else {
                coefs.push((bi.e[s - 1], -(1.0 - b.sigma)));
                0.0
            };
            m.add_eq(format!("energy_{i}_{s}"), coefs, rhs);
            bi.p_chr.push(pc);
            bi.p_dis.push(pd);
            bi.q.push(q);
            bi.e.push(e);
            bi.eps_chr.push(ec);
            bi.eps_dis.push(ed);
        }
        if b.terminal {
            m.add_row(format!("terminal_{i}"), vec![(bi.e[t - 1], 1.0)], b.e0, INF);
        }
        ix.batteries.push(bi);
    }

    for p in &n.placements {
        let (lo, hi) = (p.p_min.unwrap_or(-INF), p.p_max.unwrap_or(INF));
        let v: Vec<usize> = (0..t)
            .map(|s| m.add_var(format!("p_bla_{}_{s}", p.bla), lo, hi, 0.0))
            .collect();
        ix.p_bla.insert(p.bla.clone(), v);
    }

    for b in &n.buses {
        let (lo, hi) = if b.id == n.root { (n.v0, n.v0) } else { (b.v_min, b.v_max) };
        let mut vv = Vec::with_capacity(t);
        let mut pi = Vec::with_capacity(t);
        let mut qi = Vec::with_capacity(t);
        for s in 0..t {
            vv.push(m.add_var(format!("v_{}_{s}", b.id), lo, hi, 0.0));
            pi.push(m.add_var(format!("p_inj_{}_{s}", b.id), -INF, INF, 0.0));
            qi.push(m.add_var(format!("q_inj_{}_{s}", b.id), -INF, INF, 0.0));
        }
        ix.v.insert(b.id, vv);
        ix.p_inj.insert(b.id, pi);
        ix.q_inj.insert(b.id, qi);
    }

    for (j, br) in n.branches.iter().enumerate() {
        let p: Vec<usize> = (0..t)
            .map(|s| m.add_var(format!("p_br_{j}_{s}"), -br.p_max, br.p_max, 0.0))
            .collect();
        let q: Vec<usize> = (0..t)
            .map(|s| m.add_var(format!("q_br_{j}_{s}"), -INF, INF, 0.0))
            .collect();
        ix.p_br.push(p);
        ix.q_br.push(q);
    }

    // injection definitions
    for b in &n.buses {
        for s in 0..t {
            let mut pc = vec![(ix.p_inj[&b.id][s], 1.0)];
            let mut qc = vec![(ix.q_inj[&b.id][s], 1.0)];
            for (i, _) in n.renewables.iter().enumerate().filter(|(_, r)| r.bus == b.id) {
                pc.push((ix.renewables[i].p[s], -1.0));
                qc.push((ix.renewables[i].q[s], -1.0));
            }
            for (i, _) in n.batteries.iter().enumerate().filter(|(_, x)| x.bus == b.id) {
                pc.push((ix.batteries[i].p_dis[s], -1.0));
                pc.push((ix.batteries[i].p_chr[s], 1.0));
                qc.push((ix.batteries[i].q[s], -1.0));
            }
            for p in n.placements.iter().filter(|p| p.bus == b.id) {
                pc.push((ix.p_bla[&p.bla][s], 1.0));
            }
            if b.id == n.root {
                pc.push((ix.p_buy[s], -1.0));
                pc.push((ix.p_sell[s], 1.0));
                qc.push((ix.q_grid[s], -1.0));
            }
            let pl = b.p_load.get(s).copied().unwrap_or(0.0);
            let ql = b.q_load.get(s).copied().unwrap_or(0.0);
            m.add_eq(format!("p_inj_def_{}_{s}", b.id), pc, -pl);
            m.add_eq(format!("q_inj_def_{}_{s}", b.id), qc, -ql);
        }
    }

    // nodal balance: injection plus inflow equals outflow
    for b in &n.buses {
        for s in 0..t {
            let mut pc = vec![(ix.p_inj[&b.id][s], 1.0)];
            let mut qc = vec![(ix.q_inj[&b.id][s], 1.0)];
            for (j, br) in n.branches.iter().enumerate() {
                let sign = if br.to == b.id {
                    1.0
                } else if br.from == b.id {
                    -1.0
                } else {
                    continue;
                };
                pc.push((ix.p_br[j][s], sign));
                qc.push((ix.q_br[j][s], sign));
            }
            m.add_eq(format!("p_bal_{}_{s}", b.id), pc, 0.0);
            m.add_eq(format!("q_bal_{}_{s}", b.id), qc, 0.0);
        }
    }

    for (j, br) in n.branches.iter().enumerate() {
        for s in 0..t {
            m.add_eq(
                format!("vdrop_{j}_{s}"),
                vec![
                    (ix.v[&br.to][s], 1.0),
                    (ix.v[&br.from][s], -1.0),
                    (ix.p_br[j][s], br.r / n.v0),
                    (ix.q_br[j][s], br.x / n.v0),
                ],
                0.0,
            );
        }
    }

    Ok(GridBlock { problem: m, index: ix })
}

/// Sparse selector `A` with `A·z + u = 0`. Row `k·T + t` belongs to
/// aggregator `bla_order[k]` at period `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub ids: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CouplingMatrix {
    pub fn to_dense(&self) -> Mat {
        let mut a = Mat::zeros(self.rows, self.cols);
        for (i, j, v) in &self.entries {
            a[(*i, *j)] = *v;
        }
        a
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

pub fn coupling_matrix(g: &GridBlock, bla_order: &[String]) -> Result<CouplingMatrix> {
    let t = g.index.horizon;
    let mut entries = Vec::with_capacity(bla_order.len() * t);
    for (k, id) in bla_order.iter().enumerate() {
        let slots = g
            .index
            .p_bla
            .get(id)
            .ok_or_else(|| Error::InvalidPlacement(format!("aggregator {id} is not placed on any bus")))?;
        for (s, col) in slots.iter().enumerate() {
            entries.push((k * t + s, *col, -1.0));
        }
    }
    Ok(CouplingMatrix {
        ids: bla_order.to_vec(),
        rows: bla_order.len() * t,
        cols: g.problem.num_vars(),
        entries,
    })
}

/// Converts ohms into the per-kW voltage-drop coefficient used by
/// [`Branch`], for a base line-to-line voltage in kV.
pub fn ohms_to_per_kw(ohms: f64, base_kv: f64) -> f64 {
    ohms * 1000.0 / (base_kv * 1000.0).powi(2)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn single_bus(t: usize, load: f64) -> NetworkModel {
        NetworkModel {
            buses: vec![Bus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                p_load: vec![load; t],
                q_load: vec![0.0; t],
            }],
            branches: vec![],
            root: 1,
            tie_max: vec![1000.0; t],
            price_buy: vec![1.0; t],
            price_sell: vec![0.5; t],
            batteries: vec![],
            renewables: vec![],
            v0: 1.0,
            dt: 1.0,
            placements: vec![],
        }
    }

    pub fn two_bus(t: usize) -> NetworkModel {
        let mut n = single_bus(t, 0.0);
        n.buses.push(Bus {
            id: 2,
            v_min: 0.9,
            v_max: 1.1,
            p_load: vec![10.0; t],
            q_load: vec![5.0; t],
        });
        n.branches.push(Branch {
            from: 1,
            to: 2,
            r: 1e-5,
            x: 1e-5,
            p_max: 100.0,
        });
        n
    }

    #[test]
    fn two_bus_network_is_valid() {
        assert!(validate_network(&two_bus(2)).pass());
    }

    #[test]
    fn cycle_is_rejected() {
        let mut n = two_bus(2);
        n.buses.push(Bus {
            id: 3,
            v_min: 0.9,
            v_max: 1.1,
            p_load: vec![],
            q_load: vec![],
        });
        n.branches.push(Branch { from: 2, to: 3, r: 0.0, x: 0.0, p_max: 1.0 });
        n.branches.push(Branch { from: 3, to: 2, r: 0.0, x: 0.0, p_max: 1.0 });
        let r = validate_network(&n);
        assert!(!r.pass());
        assert!(r.findings.iter().any(|f| f.contains("not radial")), "{:?}", r.findings);
    }

    #[test]
    fn bad_efficiency_is_rejected() {
        let mut n = single_bus(2, 0.0);
        n.batteries.push(Battery {
            bus: 1,
            p_chr_max: 10.0,
            p_dis_max: 10.0,
            q_max: 0.0,
            eta_chr: 1.2,
            eta_dis: 0.9,
            sigma: 0.001,
            e_max: 10.0,
            e_min: 0.0,
            e0: 5.0,
            cost: 0.0,
            terminal: true,
        });
        let r = validate_network(&n);
        assert!(r.findings.iter().any(|f| f.contains("efficiency")));
    }

    #[test]
    fn unknown_placement_bus_is_rejected() {
        let mut n = single_bus(1, 0.0);
        n.placements.push(Placement { bla: "a".into(), bus: 9, p_min: None, p_max: None });
        assert!(!validate_network(&n).pass());
    }

    #[test]
    fn grid_block_binaries_are_exactly_the_exclusion_flags() {
        let mut n = two_bus(3);
        n.batteries.push(Battery {
            bus: 2,
            p_chr_max: 10.0,
            p_dis_max: 10.0,
            q_max: 5.0,
            eta_chr: 0.95,
            eta_dis: 0.95,
            sigma: 0.001,
            e_max: 50.0,
            e_min: 5.0,
            e0: 20.0,
            cost: 0.01,
            terminal: true,
        });
        let g = build_grid_block(&n, 3).unwrap();
        let names: Vec<String> = g
            .problem
            .binaries()
            .iter()
            .map(|j| g.problem.vars[*j].name.clone())
            .collect();
        assert_eq!(names.len(), 12);
        assert!(names.iter().all(|s| s.starts_with("eps_")));
        g.problem.check_indices().unwrap();
    }

    #[test]
    fn coupling_examples() {
        let mut n = two_bus(1);
        n.placements.push(Placement { bla: "a".into(), bus: 2, p_min: None, p_max: None });
        let g = build_grid_block(&n, 1).unwrap();
        let a = coupling_matrix(&g, &["a".to_string()]).unwrap();
        assert_eq!(a.rows, 1);
        assert_eq!(a.entries, vec![(0, g.index.p_bla["a"][0], -1.0)]);
        assert!(matches!(
            coupling_matrix(&g, &["zz".to_string()]),
            Err(Error::InvalidPlacement(_))
        ));
        let empty = coupling_matrix(&g, &[]).unwrap();
        assert_eq!((empty.rows, empty.nnz()), (0, 0));
    }

    #[test]
    fn coupling_has_one_entry_per_row() {
        let mut n = two_bus(24);
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            n.placements.push(Placement { bla: id.to_string(), bus: 1 + i % 2, p_min: None, p_max: None });
        }
        let g = build_grid_block(&n, 24).unwrap();
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let a = coupling_matrix(&g, &ids).unwrap();
        assert_eq!(a.rows, 72);
        let dense = a.to_dense();
        for i in 0..72 {
            assert_eq!(dense.row(i).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn ohm_conversion() {
        // 12.66 kV base: Z_base = 160.2756 ohm at 1 MVA
        let c = ohms_to_per_kw(160.2756, 12.66);
        assert!((c - 1e-3).abs() < 1e-9);
    }
}
