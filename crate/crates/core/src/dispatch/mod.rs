//! Assembly of the coordinated dispatch problem, in plaintext form (the DSO
//! sees every aggregator model) or masked form (the DSO sees only the
//! uploaded blocks), and extraction of named dispatch series.

pub mod simplex;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::atdm::CompactBla;
use crate::error::{Error, Result};
use crate::grid::{CouplingMatrix, GridBlock, GridIndex};
use crate::linalg::{hstack, Mat, Vector};
use crate::masking::MaskedBla;
use crate::milp::Milp;

pub use simplex::{solve_lp, BruteForceBackend, LpOutcome, BRUTE_FORCE_MAX_BINARIES};
pub use solver::{HighsBackend, SolveOptions, SolveStatus, SolverBackend, SolverResult};

const INF: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plaintext,
    Masked,
}

/// How the DSO enters uploaded masked blocks into the MILP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskedForm {
    /// The uploaded rows as they are, each scaled to unit ∞-norm.
    Raw,
    /// A row basis of the uploaded system in reduced form (identity on the
    /// pivot columns), each row scaled to unit ∞-norm.
    #[default]
    Reduced,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub masked_form: MaskedForm,
}

#[derive(Clone, Copy, Debug)]
pub enum BlaPayload<'a> {
    Plaintext(&'a [CompactBla]),
    Masked(&'a [MaskedBla]),
}

impl BlaPayload<'_> {
    fn len(&self) -> usize {
        match self {
            BlaPayload::Plaintext(v) => v.len(),
            BlaPayload::Masked(v) => v.len(),
        }
    }

    fn horizon(&self, k: usize) -> usize {
        match self {
            BlaPayload::Plaintext(v) => v[k].horizon(),
            BlaPayload::Masked(v) => v[k].horizon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlaLayout {
    pub id: String,
    pub u: Vec<usize>,
    /// `x` in plaintext mode, `x̃` in masked mode.
    pub x: Vec<usize>,
    /// Slacks; empty in plaintext mode.
    pub w: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub mode: Mode,
    pub grid: GridIndex,
    pub blas: Vec<BlaLayout>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembledProblem {
    pub problem: Milp,
    pub layout: Layout,
}

/// Row-reduces an uploaded system `[f1 f2 f3 | f4]` using only its own
/// entries: an orthonormal basis of its row space, then Gauss-Jordan on
/// pivot columns chosen by a column-pivoted QR. The solution set is unchanged.
pub fn reduce_masked_rows(m: &MaskedBla) -> Mat {
    let t = m.horizon();
    let f4 = Mat::from_column_slice(m.f4.len(), 1, m.f4.as_slice());
    let full = hstack(&[&m.f1, &m.f2, &m.f3, &f4]);
    let svd = full.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-10 * smax)
        .count();
    let u = svd.u.expect("left singular vectors requested");
    let basis = u.columns(0, rank).transpose() * &full;
    let coef = basis.columns(0, 4 * t).into_owned();
    let qr = coef.col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let r11 = r.view((0, 0), (rank, rank)).into_owned();
    let rotated = q.transpose() * &basis;
    let mut reduced = match r11.solve_upper_triangular(&rotated) {
        Some(x) => x,
        None => return basis,
    };
    let scale = reduced.amax();
    for v in reduced.iter_mut() {
        if v.abs() < 1e-13 * scale {
            *v = 0.0;
        }
    }
    reduced
}

/// Builds the dispatch MILP. `blas` must follow the aggregator order of `a`.
pub fn assemble(
    g: &GridBlock,
    a: &CouplingMatrix,
    blas: BlaPayload<'_>,
    mode: Mode,
) -> Result<AssembledProblem> {
    assemble_with(g, a, blas, mode, &AssemblyOptions::default())
}

pub fn assemble_with(
    g: &GridBlock,
    a: &CouplingMatrix,
    blas: BlaPayload<'_>,
    mode: Mode,
    opts: &AssemblyOptions,
) -> Result<AssembledProblem> {
    match (&blas, mode) {
        (BlaPayload::Plaintext(_), Mode::Plaintext) | (BlaPayload::Masked(_), Mode::Masked) => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} mode does not accept this aggregator payload"
            )))
        }
    }
    let t = g.index.horizon;
    let k = blas.len();
    if a.ids.len() != k || a.rows != k * t || a.cols != g.problem.num_vars() {
        return Err(Error::InvalidArgument(format!(
            "coupling matrix is {}x{} for {} aggregators, expected {}x{} for {k}",
            a.rows,
            a.cols,
            a.ids.len(),
            k * t,
            g.problem.num_vars()
        )));
    }
    for i in 0..k {
        if blas.horizon(i) != t {
            return Err(Error::InvalidArgument(format!(
                "aggregator {} has horizon {}, grid has {t}",
                a.ids[i],
                blas.horizon(i)
            )));
        }
    }
    if let BlaPayload::Masked(m) = &blas {
        for (i, mb) in m.iter().enumerate() {
            if mb.id != a.ids[i] {
                return Err(Error::InvalidArgument(format!(
                    "masked model {} is in the slot of aggregator {}",
                    mb.id, a.ids[i]
                )));
            }
        }
    }

    let mut p = g.problem.clone();
    let mut layouts = Vec::with_capacity(k);
    for (i, id) in a.ids.iter().enumerate() {
        let u: Vec<usize> = (0..t).map(|s| p.add_var(format!("u_{id}_{s}"), -INF, INF, 0.0)).collect();
        let (x, w) = match &blas {
            BlaPayload::Plaintext(c) => {
                let c = &c[i];
                let x: Vec<usize> = (0..t)
                    .map(|s| p.add_var(format!("x_{id}_{s}"), c.x_lo, c.x_hi, 0.0))
                    .collect();
                for r in 0..t {
                    let mut coefs = Vec::new();
                    for j in 0..=r {
                        if c.r[(r, j)] != 0.0 {
                            coefs.push((x[j], c.r[(r, j)]));
                        }
                        if c.s[(r, j)] != 0.0 {
                            coefs.push((u[j], -c.s[(r, j)]));
                        }
                    }
                    p.add_eq(format!("dyn_{id}_{r}"), coefs, c.d[r]);
                }
                (x, vec![])
            }
            BlaPayload::Masked(m) => {
                let m = &m[i];
                let x: Vec<usize> = (0..t)
                    .map(|s| p.add_var(format!("xt_{id}_{s}"), -INF, INF, 0.0))
                    .collect();
                let w: Vec<usize> = (0..2 * t)
                    .map(|s| p.add_var(format!("w_{id}_{s}"), 0.0, INF, 0.0))
                    .collect();
                let system = match opts.masked_form {
                    MaskedForm::Raw => {
                        let f4 = Mat::from_column_slice(m.f4.len(), 1, m.f4.as_slice());
                        hstack(&[&m.f1, &m.f2, &m.f3, &f4])
                    }
                    MaskedForm::Reduced => reduce_masked_rows(m),
                };
                let cols: Vec<usize> = x.iter().chain(&u).chain(&w).copied().collect();
                for r in 0..system.nrows() {
                    let coefs: Vec<(usize, f64)> =
                        cols.iter().enumerate().map(|(c, j)| (*j, system[(r, c)])).collect();
                    let scale = coefs.iter().fold(0.0_f64, |acc, (_, v)| acc.max(v.abs()));
                    let scale = if scale > 0.0 { scale } else { 1.0 };
                    let coefs: Vec<(usize, f64)> = coefs
                        .into_iter()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|(j, v)| (j, v / scale))
                        .collect();
                    p.add_eq(format!("mask_{id}_{r}"), coefs, system[(r, 4 * t)] / scale);
                }
                (x, w)
            }
        };
        layouts.push(BlaLayout {
            id: id.clone(),
            u,
            x,
            w,
        });
    }

    // A·z + u = 0
    let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); a.rows];
    for (r, c, v) in &a.entries {
        per_row[*r].push((*c, *v));
    }
    for (r, mut coefs) in per_row.into_iter().enumerate() {
        let (kk, s) = (r / t, r % t);
        coefs.push((layouts[kk].u[s], 1.0));
        p.add_eq(format!("couple_{}_{s}", a.ids[kk]), coefs, 0.0);
    }

    Ok(AssembledProblem {
        problem: p,
        layout: Layout {
            mode,
            grid: g.index.clone(),
            blas: layouts,
        },
    })
}

pub fn solve(p: &Milp, backend: &dyn SolverBackend, opts: &SolveOptions) -> Result<SolverResult> {
    backend.solve(p, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatterySeries {
    pub p_chr: Vec<f64>,
    pub p_dis: Vec<f64>,
    pub q: Vec<f64>,
    pub energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewableSeries {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlaSeries {
    pub id: String,
    pub u: Vec<f64>,
    /// `x` (plaintext) or `x̃` (masked).
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispatchSolution {
    pub mode: Mode,
    pub objective: f64,
    pub c_grid: f64,
    pub c_om: f64,
    pub p_buy: Vec<f64>,
    pub p_sell: Vec<f64>,
    pub batteries: Vec<BatterySeries>,
    pub renewables: Vec<RenewableSeries>,
    pub blas: Vec<BlaSeries>,
}

impl DispatchSolution {
    pub fn bla(&self, id: &str) -> Option<&BlaSeries> {
        self.blas.iter().find(|b| b.id == id)
    }

    pub fn u_vector(&self, id: &str) -> Option<Vector> {
        self.bla(id).map(|b| Vector::from_vec(b.u.clone()))
    }
}

pub fn extract_dispatch(r: &SolverResult, ap: &AssembledProblem) -> Result<DispatchSolution> {
    if r.status != SolveStatus::Optimal {
        return Err(Error::Unavailable(format!(
            "dispatch needs an optimal solve, status is {:?}",
            r.status
        )));
    }
    let x = &r.values;
    if x.len() != ap.problem.num_vars() {
        return Err(Error::InvalidArgument(format!(
            "solution has {} values, problem has {} variables",
            x.len(),
            ap.problem.num_vars()
        )));
    }
    let pick = |ix: &[usize]| -> Vec<f64> { ix.iter().map(|j| x[*j]).collect() };
    let cost_of = |ix: &[usize]| -> f64 { ix.iter().map(|j| ap.problem.vars[*j].cost * x[*j]).sum() };
    let gi = &ap.layout.grid;
    let c_grid = cost_of(&gi.p_buy) + cost_of(&gi.p_sell);
    let mut c_om = 0.0;
    for b in &gi.batteries {
        c_om += cost_of(&b.p_chr) + cost_of(&b.p_dis);
    }
    for rs in &gi.renewables {
        c_om += cost_of(&rs.p);
    }
    Ok(DispatchSolution {
        mode: ap.layout.mode,
        objective: r.objective,
        c_grid,
        c_om,
        p_buy: pick(&gi.p_buy),
        p_sell: pick(&gi.p_sell),
        batteries: gi
            .batteries
            .iter()
            .map(|b| BatterySeries {
                p_chr: pick(&b.p_chr),
                p_dis: pick(&b.p_dis),
                q: pick(&b.q),
                energy: pick(&b.e),
            })
            .collect(),
        renewables: gi
            .renewables
            .iter()
            .map(|rs| RenewableSeries {
                p: pick(&rs.p),
                q: pick(&rs.q),
            })
            .collect(),
        blas: ap
            .layout
            .blas
            .iter()
            .map(|b| BlaSeries {
                id: b.id.clone(),
                u: pick(&b.u),
                x: pick(&b.x),
                w: pick(&b.w),
            })
            .collect(),
    })
}
