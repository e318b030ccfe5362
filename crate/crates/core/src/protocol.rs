//! The coordination exchange between aggregators and the DSO, run over an
//! in-process channel with a logical clock, plus a transcript and a scanner
//! that looks for private values inside it.

use std::collections::BTreeMap;
use std::io::Write;
use std::thread;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atdm::{build_compact, CompactBla};
use crate::dispatch::{
    assemble_with, extract_dispatch, solve, AssemblyOptions, BlaPayload, DispatchSolution,
    SolverBackend,
};
use crate::error::{Error, Result};
use crate::grid::{build_grid_block, coupling_matrix};
use crate::linalg::{Mat, Vector};
use crate::masking::{
    generate_keys, mask, recover_state, verify_recovered, FeasibilityReport, MaskedBla,
    MaskingKeys,
};
use crate::scenario::Scenario;

pub const DSO: &str = "dso";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTag {
    UploadMaskedModel,
    /// Masked state and control series for one aggregator. The control series
    /// is the dispatch command.
    MaskedStateResult,
    Abort,
}

/// Row-major matrix on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl WireMatrix {
    pub fn from_mat(m: &Mat) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Upload {
        f1: WireMatrix,
        f2: WireMatrix,
        f3: WireMatrix,
        f4: Vec<f64>,
    },
    MaskedState {
        x_tilde: Vec<f64>,
        u: Vec<f64>,
    },
    Abort {
        reason: String,
    },
}

impl Payload {
    pub fn upload(m: &MaskedBla) -> Self {
        Payload::Upload {
            f1: WireMatrix::from_mat(&m.f1),
            f2: WireMatrix::from_mat(&m.f2),
            f3: WireMatrix::from_mat(&m.f3),
            f4: m.f4.as_slice().to_vec(),
        }
    }

    /// Number of reals carried.
    pub fn len(&self) -> usize {
        match self {
            Payload::Upload { f1, f2, f3, f4 } => {
                f1.data.len() + f2.data.len() + f3.data.len() + f4.len()
            }
            Payload::MaskedState { x_tilde, u } => x_tilde.len() + u.len(),
            Payload::Abort { .. } => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrices(&self) -> Vec<&WireMatrix> {
        match self {
            Payload::Upload { f1, f2, f3, .. } => vec![f1, f2, f3],
            _ => vec![],
        }
    }

    pub fn scalars(&self) -> Vec<f64> {
        match self {
            Payload::Upload { f1, f2, f3, f4 } => f1
                .data
                .iter()
                .chain(&f2.data)
                .chain(&f3.data)
                .chain(f4)
                .copied()
                .collect(),
            Payload::MaskedState { x_tilde, u } => x_tilde.iter().chain(u).copied().collect(),
            Payload::Abort { .. } => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub timestamp: u64,
    pub sender: String,
    pub receiver: String,
    pub tag: StepTag,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.payload).expect("payload serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ActorOutcome {
    Completed,
    Aborted { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub messages: Vec<ProtocolMessage>,
    pub seeds: BTreeMap<String, u64>,
    pub outcomes: BTreeMap<String, ActorOutcome>,
}

/// One line of the exported record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub timestamp: u64,
    pub sender: String,
    pub receiver: String,
    pub tag: StepTag,
    pub digest: String,
    pub reals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
}

impl ProtocolTranscript {
    pub fn records(&self, with_payloads: bool) -> Vec<TranscriptRecord> {
        self.messages
            .iter()
            .map(|m| TranscriptRecord {
                timestamp: m.timestamp,
                sender: m.sender.clone(),
                receiver: m.receiver.clone(),
                tag: m.tag,
                digest: m.digest(),
                reals: m.payload.len(),
                payload: with_payloads.then(|| m.payload.clone()),
            })
            .collect()
    }

    /// Line-delimited JSON, one record per message.
    pub fn write_jsonl(&self, mut out: impl Write, with_payloads: bool) -> Result<()> {
        for r in self.records(with_payloads) {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Hash over every message with its full payload, the seeds and the outcomes.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("transcript serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Messages an actor sent or received.
    pub fn view(&self, actors: &[&str]) -> Vec<&ProtocolMessage> {
        self.messages
            .iter()
            .filter(|m| actors.contains(&m.sender.as_str()) || actors.contains(&m.receiver.as_str()))
            .collect()
    }

    pub fn count(&self, tag: StepTag) -> usize {
        self.messages.iter().filter(|m| m.tag == tag).count()
    }
}

/// In-process channel. Every send gets the next logical timestamp, is
/// recorded once, and is copied to the tap when one is attached.
#[derive(Debug, Default)]
pub struct Channel {
    clock: u64,
    log: Vec<ProtocolMessage>,
    tap: Option<Vec<ProtocolMessage>>,
}

impl Channel {
    pub fn with_tap() -> Self {
        Self {
            tap: Some(vec![]),
            ..Self::default()
        }
    }

    pub fn send(&mut self, sender: &str, receiver: &str, tag: StepTag, payload: Payload) -> ProtocolMessage {
        self.clock += 1;
        let m = ProtocolMessage {
            timestamp: self.clock,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            tag,
            payload,
        };
        self.log.push(m.clone());
        if let Some(tap) = &mut self.tap {
            tap.push(m.clone());
        }
        m
    }

    pub fn tap(&self) -> Option<&[ProtocolMessage]> {
        self.tap.as_deref()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KeySource {
    #[default]
    Random,
    /// V = I, W = I, E = I. A deliberately broken run.
    Identity,
}

#[derive(Clone, Debug, Default)]
pub struct ProtocolOptions {
    pub keys: KeySource,
    pub assembly: AssemblyOptions,
    pub eavesdropper: bool,
}

/// One key seed per aggregator, drawn from a base seed.
pub fn actor_seeds(base: u64, ids: &[String]) -> BTreeMap<String, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    ids.iter().map(|id| (id.clone(), rng.next_u64())).collect()
}

/// What an aggregator keeps to itself.
#[derive(Clone, Debug, PartialEq)]
pub struct BlaSecrets {
    pub id: String,
    pub compact: CompactBla,
    pub keys: MaskingKeys,
    pub x: Option<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlaOutcome {
    pub id: String,
    pub outcome: ActorOutcome,
    pub x: Option<Vector>,
    pub u: Option<Vector>,
    pub report: Option<FeasibilityReport>,
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub dispatch: Option<DispatchSolution>,
    pub blas: Vec<BlaOutcome>,
    pub transcript: ProtocolTranscript,
    /// Copies seen by the passive eavesdropper.
    pub tapped: Option<Vec<ProtocolMessage>>,
    /// Held by the aggregators; returned for auditing only.
    pub secrets: Vec<BlaSecrets>,
    /// Seconds spent in the DSO solve.
    pub solve_time: f64,
}

impl ProtocolRun {
    pub fn completed(&self) -> bool {
        self.transcript
            .outcomes
            .values()
            .all(|o| *o == ActorOutcome::Completed)
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.transcript.outcomes.values().find_map(|o| match o {
            ActorOutcome::Aborted { reason } => Some(reason.as_str()),
            ActorOutcome::Completed => None,
        })
    }
}

struct BlaActor {
    id: String,
    compact: Option<CompactBla>,
    keys: Option<MaskingKeys>,
}

fn prepare(s: &Scenario, id: &str, seed: u64, src: KeySource) -> (BlaActor, Result<MaskedBla>) {
    let p = s.bla(id).expect("id comes from the scenario");
    let mut actor = BlaActor {
        id: id.to_string(),
        compact: None,
        keys: None,
    };
    let masked = (|| {
        p.validate_for_masking()?;
        let c = build_compact(p)?;
        let k = match src {
            KeySource::Random => generate_keys(c.horizon(), seed, &s.masking)?,
            KeySource::Identity => MaskingKeys::identity(c.horizon(), s.masking.duplication),
        };
        let m = mask(&c, &k, id)?;
        actor.compact = Some(c);
        actor.keys = Some(k);
        Ok(m)
    })();
    (actor, masked)
}

/// Runs the exchange: every aggregator masks and uploads, the DSO solves the
/// masked problem and returns each aggregator's masked state and control
/// series, and each aggregator recovers and checks its state.
pub fn run_protocol(
    s: &Scenario,
    seeds: &BTreeMap<String, u64>,
    backend: &(dyn SolverBackend + Sync),
    opts: &ProtocolOptions,
) -> Result<ProtocolRun> {
    let ids = s.bla_ids();
    for id in &ids {
        if !seeds.contains_key(id) {
            return Err(Error::InvalidArgument(format!("no seed for aggregator {id}")));
        }
    }
    let mut ch = if opts.eavesdropper {
        Channel::with_tap()
    } else {
        Channel::default()
    };
    let mut outcomes: BTreeMap<String, ActorOutcome> = BTreeMap::new();

    let prepared: Vec<(BlaActor, Result<MaskedBla>)> = thread::scope(|sc| {
        let handles: Vec<_> = ids
            .iter()
            .map(|id| {
                let seed = seeds[id];
                sc.spawn(move || prepare(s, id, seed, opts.keys))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("aggregator thread")).collect()
    });

    let mut actors = Vec::with_capacity(ids.len());
    let mut uploads = Vec::with_capacity(ids.len());
    let mut failure: Option<String> = None;
    for (actor, masked) in prepared {
        match masked {
            Ok(m) => {
                ch.send(&actor.id, DSO, StepTag::UploadMaskedModel, Payload::upload(&m));
                uploads.push(m);
            }
            Err(e) => {
                let reason = format!("{}: {e}", actor.id);
                ch.send(&actor.id, DSO, StepTag::Abort, Payload::Abort { reason: reason.clone() });
                failure.get_or_insert(reason);
            }
        }
        actors.push(actor);
    }

    let mut dispatch = None;
    let mut solve_time = 0.0;
    if failure.is_none() {
        match dso_solve(s, &uploads, backend, opts) {
            Ok((d, t)) => {
                solve_time = t;
                dispatch = Some(d);
            }
            Err(e) => failure = Some(format!("{DSO}: {e}")),
        }
    }

    let mut blas = Vec::with_capacity(actors.len());
    match (&failure, &dispatch) {
        (None, Some(d)) => {
            for a in &actors {
                let series = d.bla(&a.id).expect("assembled aggregator");
                ch.send(
                    DSO,
                    &a.id,
                    StepTag::MaskedStateResult,
                    Payload::MaskedState {
                        x_tilde: series.x.clone(),
                        u: series.u.clone(),
                    },
                );
            }
            let recovered: Vec<BlaOutcome> = thread::scope(|sc| {
                let handles: Vec<_> = actors
                    .iter()
                    .map(|a| {
                        let series = d.bla(&a.id).expect("assembled aggregator");
                        sc.spawn(move || recover(a, series.x.as_slice(), series.u.as_slice()))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("aggregator thread")).collect()
            });
            outcomes.insert(DSO.into(), ActorOutcome::Completed);
            for b in &recovered {
                outcomes.insert(b.id.clone(), b.outcome.clone());
            }
            blas = recovered;
        }
        _ => {
            let reason = failure.clone().unwrap_or_default();
            for a in &actors {
                ch.send(DSO, &a.id, StepTag::Abort, Payload::Abort { reason: reason.clone() });
                outcomes.insert(a.id.clone(), ActorOutcome::Aborted { reason: reason.clone() });
                blas.push(BlaOutcome {
                    id: a.id.clone(),
                    outcome: ActorOutcome::Aborted { reason: reason.clone() },
                    x: None,
                    u: None,
                    report: None,
                });
            }
            outcomes.insert(DSO.into(), ActorOutcome::Aborted { reason });
            dispatch = None;
        }
    }

    let secrets = actors
        .iter()
        .filter_map(|a| {
            Some(BlaSecrets {
                id: a.id.clone(),
                compact: a.compact.clone()?,
                keys: a.keys.clone()?,
                x: blas.iter().find(|b| b.id == a.id).and_then(|b| b.x.clone()),
            })
        })
        .collect();
    let tapped = ch.tap().map(|t| t.to_vec());
    Ok(ProtocolRun {
        dispatch,
        blas,
        transcript: ProtocolTranscript {
            messages: ch.log,
            seeds: seeds.clone(),
            outcomes,
        },
        tapped,
        secrets,
        solve_time,
    })
}

fn dso_solve(
    s: &Scenario,
    uploads: &[MaskedBla],
    backend: &dyn SolverBackend,
    opts: &ProtocolOptions,
) -> Result<(DispatchSolution, f64)> {
    let g = build_grid_block(&s.network, s.horizon)?;
    let order: Vec<String> = uploads.iter().map(|m| m.id.clone()).collect();
    let a = coupling_matrix(&g, &order)?;
    let ap = assemble_with(&g, &a, BlaPayload::Masked(uploads), crate::dispatch::Mode::Masked, &opts.assembly)?;
    let r = solve(&ap.problem, backend, &s.solver)?;
    if !r.is_optimal() {
        return Err(Error::Solver(format!("masked problem ended with status {:?}", r.status)));
    }
    Ok((extract_dispatch(&r, &ap)?, r.wall_time))
}

/// Feasibility tolerance each aggregator applies to its recovered state.
pub const RECOVERY_TOL: f64 = 1e-6;

fn recover(a: &BlaActor, x_tilde: &[f64], u: &[f64]) -> BlaOutcome {
    let (c, k) = (a.compact.as_ref().expect("prepared"), a.keys.as_ref().expect("prepared"));
    let u = Vector::from_column_slice(u);
    match recover_state(&Vector::from_column_slice(x_tilde), &k.w) {
        Ok(x) => {
            let report = verify_recovered(c, &x, &u, RECOVERY_TOL);
            let outcome = if report.pass {
                ActorOutcome::Completed
            } else {
                ActorOutcome::Aborted {
                    reason: format!(
                        "{}: recovered state fails the model check (dynamics {:.3e}, bounds {:.3e})",
                        a.id, report.dynamics_residual, report.bound_violation
                    ),
                }
            };
            BlaOutcome {
                id: a.id.clone(),
                outcome,
                x: Some(x),
                u: Some(u),
                report: Some(report),
            }
        }
        Err(e) => BlaOutcome {
            id: a.id.clone(),
            outcome: ActorOutcome::Aborted {
                reason: format!("{}: {e}", a.id),
            },
            x: None,
            u: Some(u),
            report: None,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakMatch {
    pub message: usize,
    pub owner: String,
    pub secret: String,
    /// `row` for a full matrix row, `value` for a single entry.
    pub kind: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LeakageReport {
    pub scanned_messages: usize,
    pub scanned_reals: usize,
    pub matches: Vec<LeakMatch>,
}

impl LeakageReport {
    pub fn clean(&self) -> bool {
        self.matches.is_empty()
    }
}

pub const LEAK_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEAK_TOL * a.abs().max(1.0)
}

/// Scans every payload for a row of R, S, W or V, or for a model value
/// (d, bounds, diag(E), true state).
pub fn inspect_transcript(t: &ProtocolTranscript, secrets: &[BlaSecrets]) -> LeakageReport {
    let mut report = LeakageReport {
        scanned_messages: t.messages.len(),
        ..LeakageReport::default()
    };
    for (i, m) in t.messages.iter().enumerate() {
        report.scanned_reals += m.payload.len();
        let mats = m.payload.matrices();
        let scalars = m.payload.scalars();
        for s in secrets {
            let row_secrets: [(&str, &Mat); 4] =
                [("R", &s.compact.r), ("S", &s.compact.s), ("W", &s.keys.w), ("V", &s.keys.v)];
            for (name, sm) in row_secrets {
                for r in 0..sm.nrows() {
                    let row: Vec<f64> = sm.row(r).iter().copied().collect();
                    if row.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let hit = mats.iter().any(|wm| {
                        wm.cols == row.len()
                            && (0..wm.rows).any(|k| wm.row(k).iter().zip(&row).all(|(a, b)| close(*a, *b)))
                    });
                    if hit {
                        report.matches.push(LeakMatch {
                            message: i,
                            owner: s.id.clone(),
                            secret: format!("{name}[{r}]"),
                            kind: "row",
                            value: row[0],
                        });
                    }
                }
            }
            let mut values: Vec<(String, f64)> = vec![];
            values.extend(s.compact.d.iter().enumerate().map(|(j, v)| (format!("d[{j}]"), *v)));
            values.push(("x_hi".into(), s.compact.x_hi));
            values.push(("x_lo".into(), s.compact.x_lo));
            values.extend(s.keys.e_diag.iter().enumerate().map(|(j, v)| (format!("E[{j}]"), *v)));
            if let Some(x) = &s.x {
                values.extend(x.iter().enumerate().map(|(j, v)| (format!("x[{j}]"), *v)));
            }
            for (name, v) in values {
                if v == 0.0 {
                    continue;
                }
                if scalars.iter().any(|p| close(*p, v)) {
                    report.matches.push(LeakMatch {
                        message: i,
                        owner: s.id.clone(),
                        secret: name,
                        kind: "value",
                        value: v,
                    });
                }
            }
        }
    }
    report
}
