use std::time::Instant;

use highs::{HessianFormat, HighsModelStatus, RowProblem, Sense};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{Milp, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time or iteration limit reached; values may hold an incumbent.
    Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative MIP gap.
    pub mip_gap: f64,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub seed: u64,
    /// Primal feasibility tolerance handed to the backend, if it has one.
    pub feasibility_tol: Option<f64>,
    pub threads: Option<u32>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mip_gap: 1e-6,
            time_limit: None,
            seed: 0,
            feasibility_tol: None,
            threads: Some(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub mip_gap: f64,
    /// Seconds.
    pub wall_time: f64,
}

impl SolverResult {
    pub fn infeasible(wall_time: f64) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            objective: f64::INFINITY,
            values: vec![],
            mip_gap: f64::NAN,
            wall_time,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub trait SolverBackend {
    fn name(&self) -> &str;
    fn solve(&self, p: &Milp, opts: &SolveOptions) -> Result<SolverResult>;
}

#[derive(Clone, Debug, Default)]
pub struct HighsBackend;

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, p: &Milp, opts: &SolveOptions) -> Result<SolverResult> {
        run_highs(p, None, opts)
    }
}

impl HighsBackend {
    /// Minimises `cᵀx + ½ Σ h_j x_j²` over the rows of `p`. `hessian_diag`
    /// has one entry per variable, all non-negative.
    pub fn solve_qp(&self, p: &Milp, hessian_diag: &[f64], opts: &SolveOptions) -> Result<SolverResult> {
        if hessian_diag.len() != p.num_vars() || hessian_diag.iter().any(|h| !(*h >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "Hessian diagonal needs {} non-negative entries",
                p.num_vars()
            )));
        }
        run_highs(p, Some(hessian_diag), opts)
    }
}

fn run_highs(p: &Milp, hessian_diag: Option<&[f64]>, opts: &SolveOptions) -> Result<SolverResult> {
    p.check_indices()?;
    let start = Instant::now();
    let mut pb = RowProblem::default();
    let cols: Vec<_> = p
        .vars
        .iter()
        .map(|v| match v.kind {
            VarKind::Continuous => pb.add_column(v.cost, v.lower..=v.upper),
            VarKind::Binary => pb.add_integer_column(v.cost, 0.0..=1.0),
        })
        .collect();
    for r in &p.rows {
        let coefs: Vec<_> = r.coefs.iter().map(|(j, a)| (cols[*j], *a)).collect();
        pb.add_row(r.lower..=r.upper, coefs);
    }
    let mut model = pb.optimise(Sense::Minimise);
    model.make_quiet();
    if let Some(h) = hessian_diag {
        let columns = h
            .iter()
            .enumerate()
            .map(|(j, v)| if *v > 0.0 { vec![(j as i32, *v)] } else { vec![] });
        model
            .try_pass_hessian(HessianFormat::Triangular, columns)
            .map_err(|e| Error::Solver(format!("Hessian: {e}")))?;
    }
    let set = |m: &mut highs::Model, k: &str, v: f64| {
        m.try_set_option(k, v)
            .map_err(|e| Error::Solver(format!("option {k}: {e:?}")))
    };
    set(&mut model, "mip_rel_gap", opts.mip_gap)?;
    if let Some(tl) = opts.time_limit {
        set(&mut model, "time_limit", tl)?;
    }
    if let Some(tol) = opts.feasibility_tol {
        set(&mut model, "primal_feasibility_tolerance", tol)?;
        set(&mut model, "mip_feasibility_tolerance", tol)?;
    }
    model
        .try_set_option("random_seed", (opts.seed % i32::MAX as u64) as i32)
        .map_err(|e| Error::Solver(format!("option random_seed: {e:?}")))?;
    if let Some(th) = opts.threads {
        model
            .try_set_option("threads", th as i32)
            .map_err(|e| Error::Solver(format!("option threads: {e:?}")))?;
    }
    let solved = model
        .try_solve()
        .map_err(|e| Error::Solver(format!("HiGHS run failed: {e:?}")))?;
    let wall_time = start.elapsed().as_secs_f64();
    let status = match solved.status() {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Unbounded
        }
        HighsModelStatus::ReachedTimeLimit
        | HighsModelStatus::ReachedIterationLimit
        | HighsModelStatus::ReachedSolutionLimit
        | HighsModelStatus::ReachedInterrupt
        | HighsModelStatus::ReachedMemoryLimit => SolveStatus::Limit,
        HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        other => return Err(Error::Solver(format!("HiGHS returned status {other:?}"))),
    };
    let has_binaries = p.vars.iter().any(|v| v.kind == VarKind::Binary);
    let (values, objective, mip_gap) = match status {
        SolveStatus::Optimal | SolveStatus::Limit => {
            let values = solved.get_solution().columns().to_vec();
            let gap = if has_binaries { solved.mip_gap() } else { 0.0 };
            (values, solved.objective_value(), gap)
        }
        SolveStatus::Infeasible => (vec![], f64::INFINITY, f64::NAN),
        SolveStatus::Unbounded => (vec![], f64::NEG_INFINITY, f64::NAN),
    };
    // an empty model has no columns to report
    let values = if values.is_empty() && status == SolveStatus::Optimal {
        vec![0.0; p.num_vars()]
    } else {
        values
    };
    Ok(SolverResult {
        status,
        objective,
        values,
        mip_gap,
        wall_time,
    })
}
