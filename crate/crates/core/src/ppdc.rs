//! Distributed baseline: consensus ADMM between the DSO and the aggregators
//! on the plaintext problem, with decaying Gaussian noise added to every
//! control series an aggregator sends.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::atdm::{build_compact, CompactBla};
use crate::dispatch::{
    assemble, solve, BlaPayload, HighsBackend, Mode, SolveOptions,
};
use crate::error::{Error, Result};
use crate::grid::{build_grid_block, coupling_matrix, GridBlock};
use crate::milp::{Milp, VarKind};
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpdcConfig {
    /// Noise decay factor; amplitude at iteration `l` is `|φ|^l`.
    pub phi: f64,
    pub rho: f64,
    pub noise_variance: f64,
    pub max_iter: usize,
    /// 2-norm over every aggregator and period, in kW.
    pub primal_tol: f64,
    /// 2-norm of `ρ·Δũ`.
    pub dual_tol: f64,
    /// Primal residual beyond which the run is declared divergent.
    pub blowup: f64,
    pub seed: u64,
}

impl Default for PpdcConfig {
    fn default() -> Self {
        Self {
            phi: 0.0,
            rho: 0.01,
            noise_variance: 10.0,
            max_iter: 400,
            primal_tol: 5.0,
            dual_tol: 0.15,
            blowup: 1e9,
            seed: 0,
        }
    }
}

impl PpdcConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = vec![];
        if !(0.0..1.0).contains(&self.phi) {
            bad.push(format!("phi {} outside [0, 1)", self.phi));
        }
        if !(self.rho > 0.0) {
            bad.push(format!("rho {} must be positive", self.rho));
        }
        if !(self.noise_variance >= 0.0) {
            bad.push(format!("noise variance {} must be non-negative", self.noise_variance));
        }
        if self.max_iter == 0 {
            bad.push("max_iter must be at least 1".into());
        }
        if !(self.primal_tol > 0.0 && self.dual_tol > 0.0) {
            bad.push("tolerances must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub noise_amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PpdcResult {
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    /// Cost of the grid dispatch that serves the aggregators' final schedules.
    pub final_cost: f64,
    pub reference_cost: f64,
    pub loss_percent: f64,
    /// Binaries held at the centralized incumbent during the iterations.
    pub fixed_binaries: usize,
    pub trace: Vec<IterationRecord>,
    pub schedules: Vec<(String, Vec<f64>)>,
}

/// `|c_ppdc - c_ref| / |c_ref| · 100`.
pub fn optimality_loss(c_ppdc: f64, c_ref: f64) -> Result<f64> {
    if c_ref == 0.0 || !c_ref.is_finite() {
        return Err(Error::UndefinedReference(format!(
            "reference cost {c_ref} cannot normalise a loss"
        )));
    }
    Ok(((c_ppdc - c_ref) / c_ref).abs() * 100.0)
}

fn bla_problem(c: &CompactBla) -> (Milp, Vec<usize>) {
    let t = c.horizon();
    let mut p = Milp::default();
    let u: Vec<usize> = (0..t)
        .map(|s| p.add_var(format!("u_{s}"), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    let x: Vec<usize> = (0..t).map(|s| p.add_var(format!("x_{s}"), c.x_lo, c.x_hi, 0.0)).collect();
    for r in 0..t {
        let mut coefs = vec![];
        for j in 0..=r {
            if c.r[(r, j)] != 0.0 {
                coefs.push((x[j], c.r[(r, j)]));
            }
            if c.s[(r, j)] != 0.0 {
                coefs.push((u[j], -c.s[(r, j)]));
            }
        }
        p.add_eq(format!("dyn_{r}"), coefs, c.d[r]);
    }
    (p, u)
}

fn optimal_values(
    backend: &HighsBackend,
    p: &Milp,
    h: &[f64],
    opts: &SolveOptions,
    what: &str,
) -> Result<Vec<f64>> {
    let r = backend.solve_qp(p, h, opts)?;
    if !r.is_optimal() {
        return Err(Error::Solver(format!("{what} subproblem ended with status {:?}", r.status)));
    }
    Ok(r.values)
}

/// Cost of serving fixed aggregator schedules from the grid.
pub fn cost_with_schedules(g: &GridBlock, schedules: &[(String, Vec<f64>)], opts: &SolveOptions) -> Result<f64> {
    let mut p = g.problem.clone();
    for (id, u) in schedules {
        let cols = g
            .index
            .p_bla
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("aggregator {id} is not placed")))?;
        for (j, v) in cols.iter().zip(u) {
            p.vars[*j].lower = *v;
            p.vars[*j].upper = *v;
        }
    }
    let r = solve(&p, &HighsBackend, opts)?;
    if r.is_optimal() {
        Ok(r.objective)
    } else {
        Err(Error::Solver(format!("grid cannot serve the schedules: {:?}", r.status)))
    }
}

/// Runs the baseline. `reference` is the centralized cost used for the loss;
/// when absent, the plaintext problem is solved and its objective used.
pub fn run_ppdc(s: &Scenario, cfg: &PpdcConfig, reference: Option<f64>) -> Result<PpdcResult> {
    cfg.validate()?;
    let backend = HighsBackend;
    let t = s.horizon;
    let ids = s.bla_ids();
    let compact: Vec<CompactBla> = s.blas.iter().map(build_compact).collect::<Result<_>>()?;
    let g = build_grid_block(&s.network, t)?;
    let a = coupling_matrix(&g, &ids)?;
    let p0 = assemble(&g, &a, BlaPayload::Plaintext(&compact), Mode::Plaintext)?;
    let r0 = solve(&p0.problem, &backend, &s.solver)?;
    if !r0.is_optimal() {
        return Err(Error::Solver(format!("centralized problem ended with status {:?}", r0.status)));
    }
    let reference_cost = reference.unwrap_or(r0.objective);

    let mut dso = g.problem.clone();
    let mut fixed_binaries = 0;
    for (j, v) in dso.vars.iter_mut().enumerate() {
        if v.kind == VarKind::Binary {
            let b = r0.values[j].round();
            v.kind = VarKind::Continuous;
            v.lower = b;
            v.upper = b;
            fixed_binaries += 1;
        }
    }
    let base_cost: Vec<f64> = dso.vars.iter().map(|v| v.cost).collect();
    let p_cols: Vec<&Vec<usize>> = ids.iter().map(|id| &g.index.p_bla[id]).collect();
    let mut dso_h = vec![0.0; dso.num_vars()];
    for cols in &p_cols {
        for j in *cols {
            dso_h[*j] = cfg.rho;
        }
    }
    let blas: Vec<(Milp, Vec<usize>)> = compact.iter().map(bla_problem).collect();

    let normal = Normal::new(0.0, cfg.noise_variance.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = ids.len();
    let mut sent = vec![vec![0.0; t]; k];
    let mut true_u = vec![vec![0.0; t]; k];
    let mut dual = vec![vec![0.0; t]; k];
    let mut trace = vec![];
    let (mut converged, mut diverged) = (false, false);

    for l in 1..=cfg.max_iter {
        for (j, c) in base_cost.iter().enumerate() {
            dso.vars[j].cost = *c;
        }
        for (b, cols) in p_cols.iter().enumerate() {
            for (s_, j) in cols.iter().enumerate() {
                dso.vars[*j].cost += cfg.rho * (dual[b][s_] - sent[b][s_]);
            }
        }
        let z = optimal_values(&backend, &dso, &dso_h, &s.solver, "DSO")?;
        let amplitude = cfg.phi.abs().powi(l as i32);
        let mut primal = 0.0;
        let mut change = 0.0;
        for (b, (bp, ucols)) in blas.iter().enumerate() {
            let mut bp = bp.clone();
            let mut h = vec![0.0; bp.num_vars()];
            for (s_, j) in ucols.iter().enumerate() {
                let target = z[p_cols[b][s_]] + dual[b][s_];
                bp.vars[*j].cost = -cfg.rho * target;
                h[*j] = cfg.rho;
            }
            let sol = optimal_values(&backend, &bp, &h, &s.solver, &ids[b])?;
            for (s_, j) in ucols.iter().enumerate() {
                true_u[b][s_] = sol[*j];
                let noisy = sol[*j] + amplitude * normal.sample(&mut rng);
                change += (noisy - sent[b][s_]).powi(2);
                sent[b][s_] = noisy;
                let gap = z[p_cols[b][s_]] - noisy;
                dual[b][s_] += gap;
                primal += gap * gap;
            }
        }
        let rec = IterationRecord {
            iteration: l,
            primal: primal.sqrt(),
            dual: cfg.rho * change.sqrt(),
            noise_amplitude: amplitude,
        };
        trace.push(rec.clone());
        if !rec.primal.is_finite() || rec.primal > cfg.blowup {
            diverged = true;
            break;
        }
        if rec.primal <= cfg.primal_tol && rec.dual <= cfg.dual_tol {
            converged = true;
            break;
        }
    }

    let schedules: Vec<(String, Vec<f64>)> = ids.iter().cloned().zip(true_u).collect();
    let final_cost = if diverged {
        f64::INFINITY
    } else {
        cost_with_schedules(&g, &schedules, &s.solver)?
    };
    let loss_percent = optimality_loss(final_cost, reference_cost)?;
    Ok(PpdcResult {
        converged,
        diverged,
        iterations: trace.len(),
        final_cost,
        reference_cost,
        loss_percent,
        fixed_binaries,
        trace,
        schedules,
    })
}

pub fn write_trace_csv(r: &PpdcResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in &r.trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_formula() {
        assert!((optimality_loss(42227.0, 42097.0).unwrap() - 0.3088).abs() < 5e-5);
        assert!((optimality_loss(42348.0, 42097.0).unwrap() - 0.5962).abs() < 5e-5);
        assert_eq!(optimality_loss(7.0, 7.0).unwrap(), 0.0);
        assert!(matches!(optimality_loss(1.0, 0.0), Err(Error::UndefinedReference(_))));
    }

    #[test]
    fn config_checks() {
        assert!(PpdcConfig::default().validate().is_ok());
        let bad = PpdcConfig { phi: 1.0, rho: 0.0, ..PpdcConfig::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("phi") && msg.contains("rho"));
    }
}
