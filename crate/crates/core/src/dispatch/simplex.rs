//! Dense two-phase simplex with Bland's rule, and a brute-force MILP backend
//! built on it. Meant for small instances and as a reference in tests.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::milp::{Milp, VarKind};

use super::solver::{SolveOptions, SolveStatus, SolverBackend, SolverResult};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// How an original variable maps onto nonnegative columns:
/// `x = offset + sign_a·y[a] (- y[b])`.
struct VarMap {
    offset: f64,
    col: usize,
    sign: f64,
    neg_col: Option<usize>,
}

/// Solves the LP relaxation of `m` with the given variables fixed.
/// Binaries are relaxed to `[0, 1]`.
pub fn solve_lp(m: &Milp, fixed: &[(usize, f64)]) -> LpOutcome {
    let n = m.num_vars();
    let mut lo: Vec<f64> = m.vars.iter().map(|v| v.lower).collect();
    let mut up: Vec<f64> = m.vars.iter().map(|v| v.upper).collect();
    for (j, v) in fixed {
        lo[*j] = *v;
        up[*j] = *v;
    }
    for j in 0..n {
        if lo[j] > up[j] + EPS {
            return LpOutcome::Infeasible;
        }
    }

    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        let map = if lo[j].is_finite() {
            VarMap { offset: lo[j], col: ncols, sign: 1.0, neg_col: None }
        } else if up[j].is_finite() {
            VarMap { offset: up[j], col: ncols, sign: -1.0, neg_col: None }
        } else {
            ncols += 1;
            VarMap { offset: 0.0, col: ncols - 1, sign: 1.0, neg_col: Some(ncols) }
        };
        ncols += 1;
        maps.push(map);
    }

    // constraint rows over y: (coefs, sense, rhs), sense -1 for ≤, 0 for =, 1 for ≥
    let mut cons: Vec<(Vec<f64>, i8, f64)> = Vec::new();
    for j in 0..n {
        if lo[j].is_finite() && up[j].is_finite() {
            let mut a = vec![0.0; ncols];
            a[maps[j].col] = 1.0;
            let width = up[j] - lo[j];
            if width <= EPS {
                cons.push((a, 0, 0.0));
            } else {
                cons.push((a, -1, width));
            }
        }
    }
    for r in &m.rows {
        let mut a = vec![0.0; ncols];
        let mut shift = 0.0;
        for (j, c) in &r.coefs {
            let mp = &maps[*j];
            shift += c * mp.offset;
            a[mp.col] += c * mp.sign;
            if let Some(nc) = mp.neg_col {
                a[nc] -= c;
            }
        }
        if r.lower.is_finite() && r.upper.is_finite() && (r.upper - r.lower).abs() <= EPS {
            cons.push((a, 0, r.lower - shift));
            continue;
        }
        if r.lower.is_finite() {
            cons.push((a.clone(), 1, r.lower - shift));
        }
        if r.upper.is_finite() {
            cons.push((a, -1, r.upper - shift));
        }
    }

    let mut cost = vec![0.0; ncols];
    let mut c0 = 0.0;
    for (j, v) in m.vars.iter().enumerate() {
        let mp = &maps[j];
        c0 += v.cost * mp.offset;
        cost[mp.col] += v.cost * mp.sign;
        if let Some(nc) = mp.neg_col {
            cost[nc] -= v.cost;
        }
    }

    let y = match simplex_standard(&cons, &cost, ncols) {
        Ok(y) => y,
        Err(outcome) => return outcome,
    };
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| {
            let mut v = mp.offset + mp.sign * y[mp.col];
            if let Some(nc) = mp.neg_col {
                v -= y[nc];
            }
            v
        })
        .collect();
    let objective = m.objective(&x);
    debug_assert!((objective - (c0 + cost.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>())).abs() < 1e-6 * (1.0 + objective.abs()));
    LpOutcome::Optimal { x, objective }
}

/// min cost·y s.t. rows, y ≥ 0. Returns y or the failure outcome.
fn simplex_standard(cons: &[(Vec<f64>, i8, f64)], cost: &[f64], ny: usize) -> std::result::Result<Vec<f64>, LpOutcome> {
    let m = cons.len();
    let n_slack = cons.iter().filter(|c| c.1 != 0).count();
    let n_struct = ny + n_slack;
    let n_total = n_struct + m;
    let width = n_total + 1;
    let mut tab = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut s = ny;
    for (i, (a, sense, rhs)) in cons.iter().enumerate() {
        let row = &mut tab[i * width..(i + 1) * width];
        row[..ny].copy_from_slice(a);
        if *sense != 0 {
            row[s] = if *sense < 0 { 1.0 } else { -1.0 };
            s += 1;
        }
        row[n_total] = *rhs;
        if *rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n_struct + i] = 1.0;
        basis[i] = n_struct + i;
    }

    // phase one
    let mut phase1 = vec![0.0; n_total];
    for c in phase1.iter_mut().skip(n_struct) {
        *c = 1.0;
    }
    run_simplex(&mut tab, &mut basis, &phase1, m, width, n_total)
        .map_err(|_| LpOutcome::Infeasible)?;
    let infeas: f64 = (0..m)
        .filter(|i| basis[*i] >= n_struct)
        .map(|i| tab[i * width + n_total])
        .sum();
    let scale = 1.0 + cons.iter().map(|c| c.2.abs()).fold(0.0, f64::max);
    if infeas > 1e-7 * scale {
        return Err(LpOutcome::Infeasible);
    }
    // drive artificials out of the basis
    for i in 0..m {
        if basis[i] >= n_struct {
            if let Some(j) = (0..n_struct).find(|j| tab[i * width + j].abs() > EPS) {
                pivot(&mut tab, &mut basis, m, width, i, j);
            }
        }
    }
    // artificials may not re-enter
    let mut phase2 = vec![0.0; n_total];
    phase2[..ny].copy_from_slice(cost);
    run_simplex(&mut tab, &mut basis, &phase2, m, width, n_struct)
        .map_err(|_| LpOutcome::Unbounded)?;

    let mut y = vec![0.0; ny];
    for i in 0..m {
        if basis[i] < ny {
            y[basis[i]] = tab[i * width + n_total].max(0.0);
        }
    }
    Ok(y)
}

fn pivot(tab: &mut [f64], basis: &mut [usize], m: usize, width: usize, r: usize, c: usize) {
    let p = tab[r * width + c];
    for v in tab[r * width..(r + 1) * width].iter_mut() {
        *v /= p;
    }
    let prow: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
    for i in 0..m {
        if i == r {
            continue;
        }
        let f = tab[i * width + c];
        if f != 0.0 {
            for (v, pv) in tab[i * width..(i + 1) * width].iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
    basis[r] = c;
}

/// Bland's rule over columns `0..enter_limit`.
fn run_simplex(
    tab: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    m: usize,
    width: usize,
    enter_limit: usize,
) -> std::result::Result<(), ()> {
    let rhs = width - 1;
    for _ in 0..50_000 {
        // reduced costs
        let mut enter = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = cost[j];
            for i in 0..m {
                rc -= cost[basis[i]] * tab[i * width + j];
            }
            if rc < -EPS {
                enter = Some(j);
                break;
            }
        }
        let Some(c) = enter else { return Ok(()) };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = tab[i * width + c];
            if a > EPS {
                let ratio = tab[i * width + rhs] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - EPS || (ratio <= lr + EPS && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else { return Err(()) };
        pivot(tab, basis, m, width, r, c);
    }
    Err(())
}

/// Enumerates every binary pattern and solves the remaining LP densely.
#[derive(Clone, Debug, Default)]
pub struct BruteForceBackend;

pub const BRUTE_FORCE_MAX_BINARIES: usize = 16;

impl SolverBackend for BruteForceBackend {
    fn name(&self) -> &str {
        "brute-force"
    }

    fn solve(&self, p: &Milp, _opts: &SolveOptions) -> Result<SolverResult> {
        let start = Instant::now();
        let bins = p.binaries();
        if bins.len() > BRUTE_FORCE_MAX_BINARIES {
            return Err(Error::Solver(format!(
                "brute-force backend handles at most {BRUTE_FORCE_MAX_BINARIES} binaries, problem has {}",
                bins.len()
            )));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut any_unbounded = false;
        for pattern in 0u32..(1u32 << bins.len()) {
            let fixed: Vec<(usize, f64)> = bins
                .iter()
                .enumerate()
                .map(|(b, j)| (*j, ((pattern >> b) & 1) as f64))
                .collect();
            match solve_lp(p, &fixed) {
                LpOutcome::Optimal { x, objective } => {
                    if best.as_ref().map_or(true, |(o, _)| objective < *o - 1e-12) {
                        best = Some((objective, x));
                    }
                }
                LpOutcome::Unbounded => any_unbounded = true,
                LpOutcome::Infeasible => {}
            }
        }
        let wall_time = start.elapsed().as_secs_f64();
        Ok(match (any_unbounded, best) {
            (true, _) => SolverResult {
                status: SolveStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                values: vec![],
                mip_gap: f64::NAN,
                wall_time,
            },
            (false, None) => SolverResult::infeasible(wall_time),
            (false, Some((objective, mut values))) => {
                for j in &bins {
                    values[*j] = values[*j].round();
                }
                debug_assert!(p.vars.iter().all(|v| v.kind == VarKind::Continuous || v.lower >= 0.0));
                SolverResult {
                    status: SolveStatus::Optimal,
                    objective,
                    values,
                    mip_gap: 0.0,
                    wall_time,
                }
            }
        })
    }
}
