//! Scenario files: network data, aggregator models, masking policy, solver
//! settings, seeds and experiment knobs, in one versioned JSON document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atdm::{aggregate_zones, BlaParams, ZoneAggregation};
use crate::dispatch::SolveOptions;
use crate::error::{Error, Result};
use crate::grid::{
    ohms_to_per_kw, validate_network, Battery, Branch, Bus, NetworkModel, Placement, Renewable,
};
use crate::masking::MaskingPolicy;

pub const SCHEMA_VERSION: u32 = 1;

/// The IEEE 33-bus feeder with three aggregators.
pub const BUNDLED_SCENARIO: &str = include_str!("../../../scenarios/ieee33.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: usize,
    /// Base active load, scaled by the load profile.
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default)]
    pub q_kvar: f64,
    #[serde(default)]
    pub v_min: Option<f64>,
    #[serde(default)]
    pub v_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub base_kv: f64,
    #[serde(default = "one")]
    pub v0: f64,
    pub root: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Per-period multiplier applied to every bus's base load.
    pub load_profile: Vec<f64>,
    pub tie_max: Vec<f64>,
    pub price_buy: Vec<f64>,
    pub price_sell: Vec<f64>,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub batteries: Vec<Battery>,
    #[serde(default)]
    pub renewables: Vec<Renewable>,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlaSpec {
    pub id: String,
    pub order: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub temp_hi: f64,
    pub temp_lo: f64,
    #[serde(default)]
    pub hist_x: Vec<f64>,
    pub hist_u: Vec<f64>,
    /// Zone weights and temperatures; when present, the aggregate replaces `hist_x`.
    #[serde(default)]
    pub zones: Option<ZoneAggregation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_gap")]
    pub mip_gap: f64,
    #[serde(default)]
    pub time_limit: Option<f64>,
}

fn default_gap() -> f64 {
    1e-6
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            mip_gap: default_gap(),
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub masking: u64,
    #[serde(default)]
    pub attack: u64,
    #[serde(default)]
    pub ppdc: u64,
}

/// Knobs for the sweeps; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentKnobs {
    pub tau_const: Vec<f64>,
    pub band_centers: BTreeMap<String, f64>,
    pub band_delta: f64,
    pub band_multipliers: Vec<f64>,
    pub phi: Vec<f64>,
    /// Aggregators that keep their comfort band, one list per case. The rest
    /// are pinned at `tau_const`. Empty means the nested default: all, then
    /// dropping the last aggregator one at a time.
    pub cases: Vec<Vec<String>>,
    /// Horizon used for the inference attack.
    pub attack_horizon: usize,
    pub attack_attempts: usize,
    pub timing_repeats: usize,
}

impl Default for ExperimentKnobs {
    fn default() -> Self {
        Self {
            tau_const: vec![23.5, 24.0, 24.5],
            band_centers: BTreeMap::new(),
            band_delta: 0.2,
            band_multipliers: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            phi: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            cases: vec![],
            attack_horizon: 8,
            attack_attempts: 20,
            timing_repeats: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub horizon: usize,
    #[serde(default = "one")]
    pub dt: f64,
    pub network: NetworkSpec,
    pub blas: Vec<BlaSpec>,
    #[serde(default)]
    pub masking: MaskingPolicy,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub experiments: ExperimentKnobs,
}

/// A validated scenario ready for the experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub horizon: usize,
    pub network: NetworkModel,
    pub blas: Vec<BlaParams>,
    pub masking: MaskingPolicy,
    pub solver: SolveOptions,
    pub seeds: Seeds,
    pub experiments: ExperimentKnobs,
    /// sha256 of the source text.
    pub digest: String,
}

impl Scenario {
    pub fn bla_ids(&self) -> Vec<String> {
        self.blas.iter().map(|b| b.id.clone()).collect()
    }

    pub fn bla(&self, id: &str) -> Option<&BlaParams> {
        self.blas.iter().find(|b| b.id == id)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn bundled_scenario() -> Scenario {
    parse_scenario(BUNDLED_SCENARIO, "<bundled>").expect("bundled scenario is valid")
}

/// Parses and validates scenario text; `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: format!(
            "at `{}` (line {}, column {}): {}",
            e.path(),
            e.inner().line(),
            e.inner().column(),
            e.inner()
        ),
    })?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    build_scenario(file, digest)
}

pub fn build_scenario(file: ScenarioFile, digest: String) -> Result<Scenario> {
    let mut findings = Vec::new();
    if file.schema_version != SCHEMA_VERSION {
        findings.push(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        ));
    }
    let t = file.horizon;
    let net = &file.network;
    if net.load_profile.len() < t {
        findings.push(format!(
            "network.load_profile: {} values, horizon needs {t}",
            net.load_profile.len()
        ));
    }
    if !(net.base_kv > 0.0) {
        findings.push("network.base_kv must be positive".into());
    }
    let profile = |s: usize| net.load_profile.get(s).copied().unwrap_or(0.0);
    let network = NetworkModel {
        buses: net
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                v_min: b.v_min.unwrap_or(net.v_min),
                v_max: b.v_max.unwrap_or(net.v_max),
                p_load: (0..t).map(|s| b.p_kw * profile(s)).collect(),
                q_load: (0..t).map(|s| b.q_kvar * profile(s)).collect(),
            })
            .collect(),
        branches: net
            .branches
            .iter()
            .map(|b| Branch {
                from: b.from,
                to: b.to,
                r: ohms_to_per_kw(b.r_ohm, net.base_kv),
                x: ohms_to_per_kw(b.x_ohm, net.base_kv),
                p_max: b.p_max,
            })
            .collect(),
        root: net.root,
        tie_max: net.tie_max.iter().take(t).copied().collect(),
        price_buy: net.price_buy.iter().take(t).copied().collect(),
        price_sell: net.price_sell.iter().take(t).copied().collect(),
        batteries: net.batteries.clone(),
        renewables: net.renewables.clone(),
        v0: net.v0,
        dt: file.dt,
        placements: net.placements.clone(),
    };
    if net.price_buy.len() < t {
        findings.push(format!("network.price_buy: {} values, horizon needs {t}", net.price_buy.len()));
    }
    findings.extend(validate_network(&network).findings);

    let mut blas = Vec::with_capacity(file.blas.len());
    for (i, b) in file.blas.iter().enumerate() {
        let mut hist_x = b.hist_x.clone();
        if let Some(z) = &b.zones {
            match aggregate_zones(z) {
                Ok(agg) => hist_x = agg.iter().copied().collect(),
                Err(e) => findings.push(format!("blas[{i}] ({}) zones: {e}", b.id)),
            }
        }
        let p = BlaParams {
            id: b.id.clone(),
            horizon: t,
            order: b.order,
            alpha: b.alpha.clone(),
            beta: b.beta.clone(),
            gamma: b.gamma.clone(),
            temp_hi: b.temp_hi,
            temp_lo: b.temp_lo,
            hist_x,
            hist_u: b.hist_u.clone(),
        };
        if let Err(e) = p.validate_for_masking() {
            findings.push(format!("blas[{i}] ({}): {e}", b.id));
        }
        if !network.placements.iter().any(|pl| pl.bla == b.id) {
            findings.push(format!("blas[{i}] ({}): not placed on any bus", b.id));
        }
        blas.push(p);
    }
    for pl in &network.placements {
        if !file.blas.iter().any(|b| b.id == pl.bla) {
            findings.push(format!("placement references unknown aggregator {}", pl.bla));
        }
    }
    let x = &file.experiments;
    let grids = [
        ("tau_const", x.tau_const.len()),
        ("band_multipliers", x.band_multipliers.len()),
        ("phi", x.phi.len()),
    ];
    for (name, len) in grids {
        if len == 0 {
            findings.push(format!("experiments.{name} must not be empty"));
        }
    }
    for (i, case) in x.cases.iter().enumerate() {
        for id in case {
            if !file.blas.iter().any(|b| &b.id == id) {
                findings.push(format!("experiments.cases[{i}] references unknown aggregator {id}"));
            }
        }
    }
    if x.phi.iter().any(|p| !(0.0..1.0).contains(p)) {
        findings.push("experiments.phi values must lie in [0, 1)".into());
    }
    if x.attack_horizon < 3 || x.attack_attempts == 0 || x.timing_repeats == 0 {
        findings.push("experiments.attack_horizon must be at least 3 and attack_attempts, timing_repeats at least 1".into());
    }
    for id in file.experiments.band_centers.keys() {
        if !file.blas.iter().any(|b| &b.id == id) {
            findings.push(format!("experiments.band_centers references unknown aggregator {id}"));
        }
    }
    if file.masking.duplication == 0 {
        findings.push("masking.duplication must be at least 1".into());
    }
    if !findings.is_empty() {
        return Err(Error::Validation(findings));
    }
    Ok(Scenario {
        name: file.name,
        horizon: t,
        network,
        blas,
        masking: file.masking,
        solver: SolveOptions {
            mip_gap: file.solver.mip_gap,
            time_limit: file.solver.time_limit,
            ..SolveOptions::default()
        },
        seeds: file.seeds,
        experiments: file.experiments,
        digest,
    })
}
