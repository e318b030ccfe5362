//! Experiment drivers. Each run produces a bundle of CSV files; the console
//! summary is always derived from the CSV text, so a bundle read back from
//! disk reproduces the same summary.

use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::atdm::{build_compact, BlaParams, CompactBla};
use crate::audit::{
    count_inference, empirical_attack, masking_distance, structural_count, write_heatmap_csv,
    AttackModel, Scheme, StructureHints,
};
use crate::dispatch::{
    assemble, extract_dispatch, solve, BlaPayload, DispatchSolution, HighsBackend, Mode,
};
use crate::error::{Error, Result};
use crate::grid::{build_grid_block, coupling_matrix};
use crate::masking::{build_blocks, generate_keys, mask, mask_insecure, InsecureMasked, InsecureVariant};
use crate::ppdc::{run_ppdc, write_trace_csv, PpdcConfig};
use crate::protocol::{actor_seeds, run_protocol, ProtocolOptions, ProtocolRun};
use crate::scenario::{Scenario, Seeds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Accuracy,
    Audit,
    CaseSweep,
    BandSweep,
    PpdcSweep,
    Timing,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "accuracy" => Ok(Self::Accuracy),
            "audit" => Ok(Self::Audit),
            "case-sweep" => Ok(Self::CaseSweep),
            "band-sweep" => Ok(Self::BandSweep),
            "ppdc" | "ppdc-sweep" => Ok(Self::PpdcSweep),
            "timing" => Ok(Self::Timing),
            other => Err(Error::InvalidArgument(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Replaces every seed of the scenario when set.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub kind: ExperimentKind,
    pub scenario: String,
    pub digest: String,
    pub seeds: Seeds,
    pub files: Vec<ReportFile>,
    pub summary: Vec<String>,
    /// Set when the run stopped early; the files hold what was finished.
    pub failure: Option<String>,
}

pub const MANIFEST: &str = "manifest.json";

impl ReportBundle {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    /// Writes every file plus a manifest with digest, seeds, summary and
    /// the failure marker.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for f in &self.files {
            fs::write(dir.join(&f.name), &f.contents)?;
        }
        let manifest = serde_json::json!({
            "kind": self.kind,
            "scenario": self.scenario,
            "digest": self.digest,
            "seeds": self.seeds,
            "files": self.files.iter().map(|f| &f.name).collect::<Vec<_>>(),
            "summary": self.summary,
            "failure": self.failure,
        });
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a bundle written by [`ReportBundle::write_to`].
    pub fn read_from(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        let names: Vec<String> = serde_json::from_value(m["files"].clone())?;
        let files = names
            .into_iter()
            .map(|name| {
                let contents = fs::read_to_string(dir.join(&name))?;
                Ok(ReportFile { name, contents })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: serde_json::from_value(m["kind"].clone())?,
            scenario: serde_json::from_value(m["scenario"].clone())?,
            digest: serde_json::from_value(m["digest"].clone())?,
            seeds: serde_json::from_value(m["seeds"].clone())?,
            files,
            summary: serde_json::from_value(m["summary"].clone())?,
            failure: serde_json::from_value(m["failure"].clone())?,
        })
    }
}

#[derive(Debug)]
pub struct ExperimentFailure {
    pub partial: ReportBundle,
    pub error: Error,
}

impl std::fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for ExperimentFailure {}

/// Timings of one method, in seconds.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub dispatch: DispatchSolution,
    pub modeling: f64,
    pub solving: f64,
}

/// Plaintext centralized dispatch.
pub fn solve_nppcc(s: &Scenario) -> Result<MethodRun> {
    let start = Instant::now();
    let ids = s.bla_ids();
    let compact: Vec<CompactBla> = s.blas.iter().map(build_compact).collect::<Result<_>>()?;
    let g = build_grid_block(&s.network, s.horizon)?;
    let a = coupling_matrix(&g, &ids)?;
    let ap = assemble(&g, &a, BlaPayload::Plaintext(&compact), Mode::Plaintext)?;
    let before = start.elapsed().as_secs_f64();
    let r = solve(&ap.problem, &HighsBackend, &s.solver)?;
    if !r.is_optimal() {
        return Err(Error::Solver(format!("plaintext dispatch ended with status {:?}", r.status)));
    }
    let after = Instant::now();
    let dispatch = extract_dispatch(&r, &ap)?;
    Ok(MethodRun {
        dispatch,
        modeling: before + after.elapsed().as_secs_f64(),
        solving: r.wall_time,
    })
}

/// Masked centralized dispatch through the aggregator/DSO exchange.
pub fn solve_ppcc(s: &Scenario, seed: u64) -> Result<(MethodRun, ProtocolRun)> {
    let seeds = actor_seeds(seed, &s.bla_ids());
    let start = Instant::now();
    let run = run_protocol(s, &seeds, &HighsBackend, &ProtocolOptions::default())?;
    let total = start.elapsed().as_secs_f64();
    let dispatch = match (&run.dispatch, run.abort_reason()) {
        (Some(d), None) => d.clone(),
        (_, reason) => {
            return Err(Error::Solver(format!(
                "protocol aborted: {}",
                reason.unwrap_or("no dispatch")
            )))
        }
    };
    Ok((
        MethodRun {
            dispatch,
            modeling: total - run.solve_time,
            solving: run.solve_time,
        },
        run,
    ))
}

/// Copy of `s` with the comfort band of `id` replaced.
pub fn with_band(s: &Scenario, id: &str, lo: f64, hi: f64) -> Result<Scenario> {
    let mut out = s.clone();
    let b = out
        .blas
        .iter_mut()
        .find(|b| b.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregator {id}")))?;
    b.temp_lo = lo;
    b.temp_hi = hi;
    Ok(out)
}

/// Participation lists for the flexibility cases.
pub fn case_masks(s: &Scenario) -> Vec<Vec<String>> {
    if !s.experiments.cases.is_empty() {
        return s.experiments.cases.clone();
    }
    let ids = s.bla_ids();
    (0..=ids.len()).rev().map(|n| ids[..n].to_vec()).collect()
}

fn seeded(s: &Scenario, seed: Option<u64>) -> Seeds {
    match seed {
        Some(v) => Seeds {
            masking: v,
            attack: v,
            ppdc: v,
        },
        None => s.seeds.clone(),
    }
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub method: String,
    pub objective: f64,
    pub c_grid: f64,
    pub c_om: f64,
    pub digest: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchRow {
    pub period: usize,
    pub u_nppcc: f64,
    pub u_ppcc: f64,
    pub x_nppcc: f64,
    pub x_ppcc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub bla: String,
    pub scheme: String,
    pub t: u64,
    pub m: u64,
    pub equations: u64,
    pub unknowns: u64,
    pub structural_equations: u64,
    pub structural_unknowns: u64,
    pub verdict: String,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub bla: String,
    pub scheme: String,
    pub t: usize,
    pub attempt: usize,
    pub residual: f64,
    pub r_distance: f64,
    pub s_distance: f64,
    pub d_distance: f64,
    pub family_dim: usize,
    pub upload_rank: usize,
    pub digest: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingRow {
    pub bla: String,
    pub max_abs_correlation: f64,
    pub original_min: f64,
    pub original_max: f64,
    pub masked_min: f64,
    pub masked_max: f64,
    pub digest: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub tau_const: f64,
    pub case: usize,
    pub participants: String,
    pub cost: f64,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub bla: String,
    pub multiplier: f64,
    pub temp_lo: f64,
    pub temp_hi: f64,
    pub cost: f64,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpdcRow {
    pub phi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub reference_cost: f64,
    pub loss_percent: f64,
    pub fixed_binaries: usize,
    pub digest: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub repeats: usize,
    pub modeling: f64,
    pub solving: f64,
    pub total: f64,
    pub digest: String,
    pub seed: u64,
}

struct Builder {
    bundle: ReportBundle,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.bundle.files.push(ReportFile {
            name: name.into(),
            contents,
        });
    }
}

/// Runs one experiment. On error the bundle built so far is returned with a
/// failure marker.
pub fn run_experiment(
    s: &Scenario,
    e: &ExperimentSpec,
) -> std::result::Result<ReportBundle, Box<ExperimentFailure>> {
    let seeds = seeded(s, e.seed);
    let mut b = Builder {
        bundle: ReportBundle {
            kind: e.kind,
            scenario: s.name.clone(),
            digest: s.digest.clone(),
            seeds: seeds.clone(),
            files: vec![],
            summary: vec![],
            failure: None,
        },
    };
    let outcome = match e.kind {
        ExperimentKind::Accuracy => accuracy(s, &seeds, &mut b),
        ExperimentKind::Audit => audit(s, &seeds, &mut b),
        ExperimentKind::CaseSweep => case_sweep(s, &mut b),
        ExperimentKind::BandSweep => band_sweep(s, &mut b),
        ExperimentKind::PpdcSweep => ppdc_sweep(s, &seeds, &mut b),
        ExperimentKind::Timing => timing(s, &seeds, &mut b),
    };
    let mut bundle = b.bundle;
    let summary = summarize(bundle.kind, &bundle.files);
    let error = match (outcome, summary) {
        (Ok(()), Ok(lines)) => {
            bundle.summary = lines;
            return Ok(bundle);
        }
        (Err(e), Ok(lines)) => {
            bundle.summary = lines;
            e
        }
        (Err(e), Err(_)) | (Ok(()), Err(e)) => e,
    };
    bundle.failure = Some(error.to_string());
    Err(Box::new(ExperimentFailure { partial: bundle, error }))
}

fn accuracy(s: &Scenario, seeds: &Seeds, b: &mut Builder) -> Result<()> {
    let plain = solve_nppcc(s)?;
    let (masked, run) = solve_ppcc(s, seeds.masking)?;
    let rows: Vec<ObjectiveRow> = [("nppcc", &plain.dispatch), ("ppcc", &masked.dispatch)]
        .into_iter()
        .map(|(m, d)| ObjectiveRow {
            method: m.into(),
            objective: d.objective,
            c_grid: d.c_grid,
            c_om: d.c_om,
            digest: s.digest.clone(),
            seed: seeds.masking,
        })
        .collect();
    b.add("objective.csv", csv_text(&rows)?);
    for id in s.bla_ids() {
        let p = plain.dispatch.bla(&id).expect("placed aggregator");
        let m = masked.dispatch.bla(&id).expect("placed aggregator");
        let x = run
            .blas
            .iter()
            .find(|o| o.id == id)
            .and_then(|o| o.x.clone())
            .ok_or_else(|| Error::Unavailable(format!("no recovered state for {id}")))?;
        let rows: Vec<DispatchRow> = (0..s.horizon)
            .map(|t| DispatchRow {
                period: t + 1,
                u_nppcc: p.u[t],
                u_ppcc: m.u[t],
                x_nppcc: p.x[t],
                x_ppcc: x[t],
            })
            .collect();
        b.add(format!("dispatch_{id}.csv"), csv_text(&rows)?);
    }
    let mut log = vec![];
    run.transcript.write_jsonl(&mut log, false)?;
    b.add("transcript.log", String::from_utf8(log).expect("json is utf-8"));
    Ok(())
}

fn truncated(p: &BlaParams, t: usize) -> BlaParams {
    let mut q = p.clone();
    q.horizon = t;
    q.gamma.truncate(t);
    q
}

fn audit(s: &Scenario, seeds: &Seeds, b: &mut Builder) -> Result<()> {
    let mut counts = vec![];
    for p in &s.blas {
        for scheme in [Scheme::Full, Scheme::NoCet, Scheme::NoCrt] {
            let c = count_inference(p.horizon as u64, p.order as u64, scheme)?;
            let st = structural_count(p.horizon, p.order, scheme, s.masking.duplication)?;
            counts.push(CountRow {
                bla: p.id.clone(),
                scheme: scheme.to_string(),
                t: c.t,
                m: c.m,
                equations: c.equations,
                unknowns: c.unknowns,
                structural_equations: st.equations,
                structural_unknowns: st.unknowns,
                verdict: serde_json::to_value(c.verdict)?.as_str().unwrap_or_default().to_string(),
                digest: s.digest.clone(),
            });
        }
    }
    b.add("counts.csv", csv_text(&counts)?);

    let key_seeds = actor_seeds(seeds.masking, &s.bla_ids());
    let ta = s.experiments.attack_horizon;
    let mut attack = vec![];
    let mut distances = vec![];
    for p in &s.blas {
        let short = truncated(p, ta.min(p.horizon));
        let c = build_compact(&short)?;
        let k = generate_keys(c.horizon(), key_seeds[&p.id], &s.masking)?;
        let full = mask(&c, &k, &p.id)?;
        let InsecureMasked::NoCet(no_cet) = mask_insecure(&c, &k, InsecureVariant::NoCet, &p.id)? else {
            unreachable!()
        };
        for (scheme, up, q) in [("full", &full, s.masking.duplication), ("no_cet", &no_cet, 1)] {
            let hints = StructureHints {
                t: c.horizon(),
                m: p.order,
                duplication: q,
                model: AttackModel::Blocks,
            };
            let r = empirical_attack(up, hints, s.experiments.attack_attempts, seeds.attack, &c)?;
            for i in 0..r.attempts {
                attack.push(AttackRow {
                    bla: p.id.clone(),
                    scheme: scheme.into(),
                    t: c.horizon(),
                    attempt: i,
                    residual: r.residuals[i],
                    r_distance: r.r_distance[i],
                    s_distance: r.s_distance[i],
                    d_distance: r.d_distance[i],
                    family_dim: r.family_dim,
                    upload_rank: r.upload_rank,
                    digest: s.digest.clone(),
                    seed: seeds.attack,
                });
            }
        }

        let c = build_compact(p)?;
        let k = generate_keys(c.horizon(), key_seeds[&p.id], &s.masking)?;
        let g = build_blocks(&c, &k)?.g;
        let vg = mask(&c, &k, &p.id)?.f2;
        let d = masking_distance(&g, &vg)?;
        distances.push(MaskingRow {
            bla: p.id.clone(),
            max_abs_correlation: d.max_abs_correlation,
            original_min: d.original_range.0,
            original_max: d.original_range.1,
            masked_min: d.masked_range.0,
            masked_max: d.masked_range.1,
            digest: s.digest.clone(),
            seed: seeds.masking,
        });
        let rows = s.horizon.min(g.nrows());
        for (name, m) in [("G", &g), ("VG", &vg)] {
            let mut buf = vec![];
            write_heatmap_csv(m, rows, &mut buf)?;
            b.add(format!("heatmap_{name}_{}.csv", p.id), String::from_utf8(buf).expect("utf-8"));
        }
    }
    b.add("attack.csv", csv_text(&attack)?);
    b.add("masking.csv", csv_text(&distances)?);
    Ok(())
}

fn nppcc_cost(s: &Scenario) -> Result<f64> {
    Ok(solve_nppcc(s)?.dispatch.objective)
}

fn case_sweep(s: &Scenario, b: &mut Builder) -> Result<()> {
    let masks = case_masks(s);
    let mut rows = vec![];
    let result = (|| {
        for tau in &s.experiments.tau_const {
            for (i, keep) in masks.iter().enumerate() {
                let mut sc = s.clone();
                for id in s.bla_ids() {
                    if !keep.contains(&id) {
                        sc = with_band(&sc, &id, *tau, *tau)?;
                    }
                }
                rows.push(CaseRow {
                    tau_const: *tau,
                    case: i + 1,
                    participants: keep.join(" "),
                    cost: nppcc_cost(&sc)?,
                    digest: s.digest.clone(),
                });
            }
        }
        Ok(())
    })();
    b.add("cases.csv", csv_text(&rows)?);
    result
}

fn band_sweep(s: &Scenario, b: &mut Builder) -> Result<()> {
    let x = &s.experiments;
    let mut rows = vec![];
    let result = (|| {
        for (id, center) in &x.band_centers {
            for m in &x.band_multipliers {
                let (lo, hi) = (center - m * x.band_delta, center + m * x.band_delta);
                let sc = with_band(s, id, lo, hi)?;
                rows.push(BandRow {
                    bla: id.clone(),
                    multiplier: *m,
                    temp_lo: lo,
                    temp_hi: hi,
                    cost: nppcc_cost(&sc)?,
                    digest: s.digest.clone(),
                });
            }
        }
        Ok(())
    })();
    b.add("bands.csv", csv_text(&rows)?);
    result
}

/// Configuration used for every point of the distributed-baseline sweep.
pub fn ppdc_config(phi: f64, seed: u64) -> PpdcConfig {
    PpdcConfig {
        phi,
        seed,
        ..PpdcConfig::default()
    }
}

fn ppdc_sweep(s: &Scenario, seeds: &Seeds, b: &mut Builder) -> Result<()> {
    let reference = nppcc_cost(s)?;
    let mut rows = vec![];
    let result = (|| {
        for phi in &s.experiments.phi {
            let r = run_ppdc(s, &ppdc_config(*phi, seeds.ppdc), Some(reference))?;
            let mut buf = vec![];
            write_trace_csv(&r, &mut buf)?;
            b.add(format!("ppdc_trace_phi{phi}.csv"), String::from_utf8(buf).expect("utf-8"));
            rows.push(PpdcRow {
                phi: *phi,
                converged: r.converged,
                iterations: r.iterations,
                final_cost: r.final_cost,
                reference_cost: r.reference_cost,
                loss_percent: r.loss_percent,
                fixed_binaries: r.fixed_binaries,
                digest: s.digest.clone(),
                seed: seeds.ppdc,
            });
        }
        Ok(())
    })();
    b.add("ppdc.csv", csv_text(&rows)?);
    result
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn timing(s: &Scenario, seeds: &Seeds, b: &mut Builder) -> Result<()> {
    let reps = s.experiments.timing_repeats;
    let mut plain = (vec![], vec![], vec![]);
    let mut masked = (vec![], vec![], vec![]);
    for i in 0..reps {
        let p = solve_nppcc(s)?;
        let (m, _) = solve_ppcc(s, seeds.masking.wrapping_add(i as u64))?;
        for (acc, r) in [(&mut plain, &p), (&mut masked, &m)] {
            acc.0.push(r.modeling);
            acc.1.push(r.solving);
            acc.2.push(r.modeling + r.solving);
        }
    }
    let rows: Vec<TimingRow> = [("ppcc", masked), ("nppcc", plain)]
        .into_iter()
        .map(|(m, (a, c, t))| TimingRow {
            method: m.into(),
            repeats: reps,
            modeling: median(a),
            solving: median(c),
            total: median(t),
            digest: s.digest.clone(),
            seed: seeds.masking,
        })
        .collect();
    b.add("timing.csv", csv_text(&rows)?);
    Ok(())
}

/// Console summary of a bundle, computed from its CSV files only.
pub fn summarize(kind: ExperimentKind, files: &[ReportFile]) -> Result<Vec<String>> {
    let get = |name: &str| -> Result<&str> {
        files
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.contents.as_str())
            .ok_or_else(|| Error::Unavailable(format!("{name} missing from the bundle")))
    };
    let mut out = vec![];
    match kind {
        ExperimentKind::Accuracy => {
            let rows: Vec<ObjectiveRow> = parse_csv(get("objective.csv")?)?;
            for r in &rows {
                out.push(format!("{} objective {:.4}", r.method.to_uppercase(), r.objective));
            }
            if let [a, b] = rows.as_slice() {
                let rel = (a.objective - b.objective).abs() / a.objective.abs().max(f64::MIN_POSITIVE);
                out.push(format!("relative difference {rel:.3e}"));
            }
            let mut names: Vec<&str> = files
                .iter()
                .map(|f| f.name.as_str())
                .filter(|n| n.starts_with("dispatch_"))
                .collect();
            names.sort();
            for n in names {
                let rows: Vec<DispatchRow> = parse_csv(get(n)?)?;
                let gap = rows.iter().map(|r| (r.u_nppcc - r.u_ppcc).abs()).fold(0.0, f64::max);
                out.push(format!("{n}: max |u_nppcc - u_ppcc| {gap:.3e}"));
            }
        }
        ExperimentKind::Audit => {
            let rows: Vec<CountRow> = parse_csv(get("counts.csv")?)?;
            for r in &rows {
                out.push(format!(
                    "{} {} T={} M={}: {} equations, {} unknowns, {}",
                    r.bla, r.scheme, r.t, r.m, r.equations, r.unknowns, r.verdict
                ));
            }
            let rows: Vec<AttackRow> = parse_csv(get("attack.csv")?)?;
            let mut keys: Vec<(String, String)> =
                rows.iter().map(|r| (r.bla.clone(), r.scheme.clone())).collect();
            keys.dedup();
            for (bla, scheme) in keys {
                let sel: Vec<&AttackRow> = rows.iter().filter(|r| r.bla == bla && r.scheme == scheme).collect();
                let best = sel.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
                let fits = sel.iter().filter(|r| r.residual <= crate::audit::FIT_TOL);
                let (mut rr, mut sr) = (0, 0);
                for r in fits {
                    rr += (r.r_distance <= crate::audit::RECOVERY_TOL) as usize;
                    sr += (r.s_distance <= crate::audit::RECOVERY_TOL) as usize;
                }
                out.push(format!(
                    "attack {bla} {scheme}: best residual {best:.2e}, R recovered {rr}/{n}, S recovered {sr}/{n}",
                    n = sel.len()
                ));
            }
            let rows: Vec<MaskingRow> = parse_csv(get("masking.csv")?)?;
            for r in &rows {
                out.push(format!(
                    "{} G vs VG: max |corr| {:.3}, range [{:.3}, {:.3}] -> [{:.3}, {:.3}]",
                    r.bla, r.max_abs_correlation, r.original_min, r.original_max, r.masked_min, r.masked_max
                ));
            }
        }
        ExperimentKind::CaseSweep => {
            let rows: Vec<CaseRow> = parse_csv(get("cases.csv")?)?;
            let mut taus: Vec<f64> = rows.iter().map(|r| r.tau_const).collect();
            taus.dedup();
            for tau in taus {
                let costs: Vec<String> = rows
                    .iter()
                    .filter(|r| r.tau_const == tau)
                    .map(|r| format!("case{} {:.2}", r.case, r.cost))
                    .collect();
                out.push(format!("tau_const {tau}: {}", costs.join(", ")));
            }
        }
        ExperimentKind::BandSweep => {
            let rows: Vec<BandRow> = parse_csv(get("bands.csv")?)?;
            let mut ids: Vec<String> = rows.iter().map(|r| r.bla.clone()).collect();
            ids.dedup();
            for id in ids {
                let costs: Vec<String> = rows
                    .iter()
                    .filter(|r| r.bla == id)
                    .map(|r| format!("x{} {:.2}", r.multiplier, r.cost))
                    .collect();
                out.push(format!("{id}: {}", costs.join(", ")));
            }
        }
        ExperimentKind::PpdcSweep => {
            let rows: Vec<PpdcRow> = parse_csv(get("ppdc.csv")?)?;
            for r in &rows {
                out.push(format!(
                    "phi {}: cost {:.4}, loss {:.4}% after {} iterations{}",
                    r.phi,
                    r.final_cost,
                    r.loss_percent,
                    r.iterations,
                    if r.converged { "" } else { " (not converged)" }
                ));
            }
        }
        ExperimentKind::Timing => {
            let rows: Vec<TimingRow> = parse_csv(get("timing.csv")?)?;
            for r in &rows {
                out.push(format!(
                    "{}: modeling {:.4} s, solving {:.4} s, total {:.4} s (median of {})",
                    r.method.to_uppercase(),
                    r.modeling,
                    r.solving,
                    r.total,
                    r.repeats
                ));
            }
            if let (Some(p), Some(n)) = (
                rows.iter().find(|r| r.method == "ppcc"),
                rows.iter().find(|r| r.method == "nppcc"),
            ) {
                out.push(format!("total ratio PPCC/NPPCC {:.3}", p.total / n.total));
            }
        }
    }
    Ok(out)
}
