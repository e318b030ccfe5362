//! Privacy audit: equation/unknown counting for each masking variant, an
//! inference attack on uploaded blocks, and row-level similarity metrics.

use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::atdm::CompactBla;
use crate::error::{Error, Result};
use crate::linalg::{hstack, lstsq, relative_frobenius, Mat, Vector};
use crate::masking::{mask, mask_insecure, InsecureMasked, InsecureVariant, MaskedBla, MaskingKeys};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Full,
    NoCet,
    NoCrt,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scheme::Full),
            "no_cet" => Ok(Scheme::NoCet),
            "no_crt" => Ok(Scheme::NoCrt),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme `{other}` (expected full, no_cet or no_crt)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Full => "full",
            Scheme::NoCet => "no_cet",
            Scheme::NoCrt => "no_crt",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    UnderDetermined,
    OverDetermined,
    Square,
}

impl Verdict {
    pub fn of(equations: u64, unknowns: u64) -> Self {
        match equations.cmp(&unknowns) {
            std::cmp::Ordering::Less => Verdict::UnderDetermined,
            std::cmp::Ordering::Greater => Verdict::OverDetermined,
            std::cmp::Ordering::Equal => Verdict::Square,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountReport {
    pub scheme: Scheme,
    pub t: u64,
    pub m: u64,
    pub duplication: u64,
    pub equations: u64,
    /// Unknowns under the counting convention of the scheme (key entries
    /// only for the full scheme).
    pub unknowns: u64,
    pub verdict: Verdict,
    /// Every private quantity behind the upload and its size.
    pub inventory: Vec<(String, u64)>,
}

fn inventory(t: u64, m: u64, v_side: u64, v_name: &str, e_len: u64) -> Vec<(String, u64)> {
    vec![
        (v_name.to_string(), v_side * v_side),
        ("W".into(), t * t),
        ("E".into(), e_len),
        ("d".into(), t),
        ("alpha".into(), m),
        ("beta".into(), m + 1),
        ("bounds".into(), 2),
    ]
}

/// Closed-form counts. The full scheme uses duplication factor 2.
pub fn count_inference(t: u64, m: u64, scheme: Scheme) -> Result<CountReport> {
    match scheme {
        Scheme::Full => count_inference_dup(t, m, 2),
        Scheme::NoCet => {
            check_tm(t, m)?;
            let equations = 12 * t * t + 3 * t;
            let unknowns = 10 * t * t + 3 * t + 2 * m + 3;
            Ok(CountReport {
                scheme,
                t,
                m,
                duplication: 1,
                equations,
                unknowns,
                verdict: Verdict::of(equations, unknowns),
                inventory: inventory(t, m, 3 * t, "V'", 2 * t),
            })
        }
        Scheme::NoCrt => {
            check_tm(t, m)?;
            let equations = 3 * t * t + 3 * t;
            let unknowns = 2 * t * t + 3 * t + 2 * m + 3;
            let mut inv = inventory(t, m, t, "V1", 0);
            inv[2] = ("V2".into(), 2 * t);
            Ok(CountReport {
                scheme,
                t,
                m,
                duplication: 1,
                equations,
                unknowns,
                verdict: Verdict::of(equations, unknowns),
                inventory: inv,
            })
        }
    }
}

/// Full scheme with `q` stacked copies: `12qT² + 3qT` equations against
/// `(3qT)²` key entries.
pub fn count_inference_dup(t: u64, m: u64, q: u64) -> Result<CountReport> {
    check_tm(t, m)?;
    if q == 0 {
        return Err(Error::InvalidArgument("duplication factor must be at least 1".into()));
    }
    let equations = 12 * q * t * t + 3 * q * t;
    let unknowns = (3 * q * t) * (3 * q * t);
    Ok(CountReport {
        scheme: Scheme::Full,
        t,
        m,
        duplication: q,
        equations,
        unknowns,
        verdict: Verdict::of(equations, unknowns),
        inventory: inventory(t, m, 3 * q * t, "V", 2 * t),
    })
}

fn check_tm(t: u64, m: u64) -> Result<()> {
    if t == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("T={t} and M={m} must both be at least 1")));
    }
    Ok(())
}

/// Counts by building the upload for a `T`-period model and measuring the
/// arrays involved. Values play no role, so unit blocks and identity keys
/// are used.
pub fn structural_count(t: usize, m: usize, scheme: Scheme, q: usize) -> Result<CountReport> {
    check_tm(t as u64, m as u64)?;
    if q == 0 {
        return Err(Error::InvalidArgument("duplication factor must be at least 1".into()));
    }
    let c = CompactBla {
        r: Mat::identity(t, t),
        s: Mat::identity(t, t),
        d: Vector::zeros(t),
        x_hi: 1.0,
        x_lo: 0.0,
    };
    let k = MaskingKeys::identity(t, q);
    let model = (m + (m + 1) + 2) as u64;
    let (equations, unknowns, inv, dup) = match scheme {
        Scheme::Full => {
            let up = mask(&c, &k, "count")?;
            let inv = vec![
                ("V".to_string(), k.v.len() as u64),
                ("W".into(), k.w.len() as u64),
                ("E".into(), k.e_diag.len() as u64),
                ("d".into(), c.d.len() as u64),
            ];
            (up.payload_len() as u64, k.v.len() as u64, inv, q as u64)
        }
        Scheme::NoCet => {
            let InsecureMasked::NoCet(up) = mask_insecure(&c, &k, InsecureVariant::NoCet, "count")? else {
                unreachable!()
            };
            let side = up.rows() as u64;
            let inv = vec![
                ("V'".to_string(), side * side),
                ("W".into(), k.w.len() as u64),
                ("E".into(), k.e_diag.len() as u64),
                ("d".into(), c.d.len() as u64),
            ];
            let n = inv.iter().map(|(_, v)| v).sum::<u64>() + model;
            (up.payload_len() as u64, n, inv, 1)
        }
        Scheme::NoCrt => {
            let InsecureMasked::NoCrt(up) = mask_insecure(&c, &k, InsecureVariant::NoCrt, "count")? else {
                unreachable!()
            };
            let inv = vec![
                ("V1".to_string(), up.rw.nrows() as u64 * up.rw.nrows() as u64),
                ("W".into(), k.w.len() as u64),
                ("V2".into(), up.bounds.len() as u64),
                ("d".into(), c.d.len() as u64),
            ];
            let n = inv.iter().map(|(_, v)| v).sum::<u64>() + model;
            (up.payload_len() as u64, n, inv, 1)
        }
    };
    let mut inventory = inv;
    inventory.push(("alpha".into(), m as u64));
    inventory.push(("beta".into(), m as u64 + 1));
    inventory.push(("bounds".into(), 2));
    Ok(CountReport {
        scheme,
        t: t as u64,
        m: m as u64,
        duplication: dup,
        equations,
        unknowns,
        verdict: Verdict::of(equations, unknowns),
        inventory,
    })
}

/// How much structure the attacker imposes on the blocks it fits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackModel {
    /// Zero pattern, copies, `±W` coupling, diagonal slack scaling and
    /// constant bound columns.
    #[default]
    Blocks,
    /// `Blocks` plus a lower-banded Toeplitz `S` with `M + 1` bands.
    Banded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StructureHints {
    pub t: usize,
    pub m: usize,
    pub duplication: usize,
    pub model: AttackModel,
}

/// A fit counts when its relative residual is at most this.
pub const FIT_TOL: f64 = 1e-6;
/// An estimate counts as recovered within this relative Frobenius distance.
pub const RECOVERY_TOL: f64 = 0.01;
/// Alternating least-squares sweeps run from each starting point.
pub const ALS_SWEEPS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub attempts: usize,
    pub upload_rows: usize,
    /// Numerical rank of the upload; below `upload_rows` when copies repeat.
    pub upload_rank: usize,
    /// Dimension of the family of structured blocks that fit the upload.
    pub family_dim: usize,
    pub residuals: Vec<f64>,
    pub r_distance: Vec<f64>,
    pub s_distance: Vec<f64>,
    pub d_distance: Vec<f64>,
    pub best_residual: f64,
    pub fits: usize,
    pub r_recovered: usize,
    pub s_recovered: usize,
    pub d_recovered: usize,
    /// Some attempt fits and recovers R, S and d.
    pub success: bool,
}

struct Layout {
    t: usize,
    q: usize,
}

impl Layout {
    fn n(&self) -> usize {
        3 * self.q * self.t
    }
    fn cols(&self) -> usize {
        4 * self.t + 1
    }
    /// Rows of the stacked blocks holding core row `i` (`0..3T`).
    fn copies(&self, i: usize) -> Vec<usize> {
        let t = self.t;
        (0..self.q)
            .map(|r| if i < t { r * t + i } else { self.q * t + r * 2 * t + (i - t) })
            .collect()
    }
    fn duplicate(&self, core: &Mat) -> Mat {
        let mut b = Mat::zeros(self.n(), self.cols());
        for i in 0..3 * self.t {
            for row in self.copies(i) {
                b.row_mut(row).copy_from(&core.row(i));
            }
        }
        b
    }
    fn core(&self, b: &Mat) -> Mat {
        Mat::from_fn(3 * self.t, self.cols(), |i, c| b[(self.copies(i)[0], c)])
    }
}

/// Linear conditions on the core blocks `[P G 0 d; W 0 E1 h·1; -W 0 E2 -l·1]`.
fn structure_conditions(l: &Layout, m: usize, model: AttackModel) -> Vec<Vec<((usize, usize), f64)>> {
    let t = l.t;
    let mut out: Vec<Vec<((usize, usize), f64)>> = vec![];
    for i in 0..t {
        for c in 2 * t..4 * t {
            out.push(vec![((i, c), 1.0)]);
        }
    }
    for i in t..3 * t {
        for c in t..2 * t {
            out.push(vec![((i, c), 1.0)]);
        }
        for j in 0..2 * t {
            if j != i - t {
                out.push(vec![((i, 2 * t + j), 1.0)]);
            }
        }
    }
    for i in 0..t {
        for c in 0..t {
            out.push(vec![((t + i, c), 1.0), ((2 * t + i, c), 1.0)]);
        }
    }
    for i in 1..t {
        out.push(vec![((t + i, 4 * t), 1.0), ((t, 4 * t), -1.0)]);
        out.push(vec![((2 * t + i, 4 * t), 1.0), ((2 * t, 4 * t), -1.0)]);
    }
    if model == AttackModel::Banded {
        for i in 0..t {
            for j in 0..t {
                if j > i || i - j > m {
                    out.push(vec![((i, t + j), 1.0)]);
                } else if i > 0 && j > 0 {
                    out.push(vec![((i, t + j), 1.0), ((i - 1, t + j - 1), -1.0)]);
                }
            }
        }
    }
    out
}

fn numerical_rank(sv: &Vector, rel: f64) -> usize {
    let max = sv.max();
    sv.iter().filter(|s| **s > rel * max).count()
}

/// Completes `f·B⁺` to an invertible key by adding a random map on the
/// complement of `B`'s column space.
fn fit_key(f: &Mat, b: &Mat, rng: &mut ChaCha8Rng) -> Mat {
    let pinv = b.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
    let n = b.nrows();
    let proj = Mat::identity(n, n) - b * &pinv;
    let z = Mat::from_fn(f.nrows(), n, |_, _| StandardNormal.sample(rng));
    f * &pinv + z * proj
}

fn residual(f: &Mat, v: &Mat, b: &Mat) -> f64 {
    (v * b - f).norm() / f.norm().max(f64::MIN_POSITIVE)
}

/// Least-squares fit of the structured blocks for a fixed key, column by column.
fn theta_step(f: &Mat, v: &Mat, l: &Layout, m: usize, model: AttackModel) -> Mat {
    let (t, n) = (l.t, l.n());
    let mut core = Mat::zeros(3 * t, l.cols());
    let select = |rows: &[(usize, f64)]| -> Vector {
        let mut e = Vector::zeros(n);
        for (r, s) in rows {
            for row in l.copies(*r) {
                e[row] += s;
            }
        }
        v * e
    };
    let fit = |design: Vec<Vector>, target: &Mat| -> Vector {
        let a = Mat::from_columns(&design);
        lstsq(&a, target).column(0).into_owned()
    };
    for j in 0..t {
        let mut design: Vec<Vector> = (0..t).map(|i| select(&[(i, 1.0)])).collect();
        design.extend((0..t).map(|i| select(&[(t + i, 1.0), (2 * t + i, -1.0)])));
        let sol = fit(design, &f.columns(j, 1).into_owned());
        for i in 0..t {
            core[(i, j)] = sol[i];
            core[(t + i, j)] = sol[t + i];
            core[(2 * t + i, j)] = -sol[t + i];
        }
    }
    match model {
        AttackModel::Blocks => {
            for j in 0..t {
                let design: Vec<Vector> = (0..t).map(|i| select(&[(i, 1.0)])).collect();
                let sol = fit(design, &f.columns(t + j, 1).into_owned());
                for i in 0..t {
                    core[(i, t + j)] = sol[i];
                }
            }
        }
        AttackModel::Banded => {
            let bands = (m + 1).min(t);
            let stacked_target = Mat::from_column_slice(n * t, 1, f.columns(t, t).into_owned().as_slice());
            let design: Vec<Vector> = (0..bands)
                .map(|k| {
                    let mut col = Vector::zeros(n * t);
                    for j in 0..t - k {
                        let s = select(&[(j + k, 1.0)]);
                        col.rows_mut(j * n, n).copy_from(&s);
                    }
                    col
                })
                .collect();
            let sol = fit(design, &stacked_target);
            for k in 0..bands {
                for j in 0..t - k {
                    core[(j + k, t + j)] = sol[k];
                }
            }
        }
    }
    for j in 0..2 * t {
        let s = select(&[(t + j, 1.0)]);
        let target = f.column(2 * t + j);
        core[(t + j, 2 * t + j)] = s.dot(&target) / s.dot(&s).max(f64::MIN_POSITIVE);
    }
    let mut design: Vec<Vector> = (0..t).map(|i| select(&[(i, 1.0)])).collect();
    let hi: Vec<(usize, f64)> = (0..t).map(|i| (t + i, 1.0)).collect();
    let lo: Vec<(usize, f64)> = (0..t).map(|i| (2 * t + i, -1.0)).collect();
    design.push(select(&hi));
    design.push(select(&lo));
    let sol = fit(design, &f.columns(4 * t, 1).into_owned());
    for i in 0..t {
        core[(i, 4 * t)] = sol[i];
        core[(t + i, 4 * t)] = sol[t];
        core[(2 * t + i, 4 * t)] = -sol[t + 1];
    }
    core
}

/// Attacks an upload `V·[F G H e]` knowing only the public block structure.
///
/// Attempt 0 starts from `V = I`. Every later attempt starts from a random
/// member of the linear family of structured blocks spanning the upload's row
/// space. Each start is refined by alternating least squares. The private
/// model in `truth` is used only to score the estimates.
pub fn empirical_attack(
    up: &MaskedBla,
    hints: StructureHints,
    attempts: usize,
    seed: u64,
    truth: &CompactBla,
) -> Result<AttackReport> {
    let (t, q) = (hints.t, hints.duplication);
    let l = Layout { t, q };
    if up.horizon() != t || up.rows() != l.n() || truth.horizon() != t {
        return Err(Error::InvalidArgument(format!(
            "hints T={t}, q={q} do not match an upload of {}x{}",
            up.rows(),
            up.horizon()
        )));
    }
    let f4 = Mat::from_column_slice(up.f4.len(), 1, up.f4.as_slice());
    let f = hstack(&[&up.f1, &up.f2, &up.f3, &f4]);
    let svd = f.clone().svd(false, true);
    let rank = numerical_rank(&svd.singular_values, 1e-10);
    let vt = svd.v_t.expect("right singular vectors requested");
    let basis = vt.rows(0, rank).into_owned();

    // conditions on K (3T x rank) with core = K·basis
    let conds = structure_conditions(&l, hints.m, hints.model);
    let unknowns = 3 * t * rank;
    let mut a = Mat::zeros(conds.len().max(unknowns), unknowns);
    for (k, cond) in conds.iter().enumerate() {
        for ((i, c), coef) in cond {
            for j in 0..rank {
                a[(k, i * rank + j)] += coef * basis[(j, *c)];
            }
        }
    }
    let asvd = a.svd(false, true);
    let avt = asvd.v_t.expect("right singular vectors requested");
    let kept = numerical_rank(&asvd.singular_values, 1e-10);
    let family: Vec<Vector> = (kept..unknowns)
        .map(|r| avt.row(r).transpose().into_owned())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AttackReport {
        attempts,
        upload_rows: l.n(),
        upload_rank: rank,
        family_dim: family.len(),
        residuals: vec![],
        r_distance: vec![],
        s_distance: vec![],
        d_distance: vec![],
        best_residual: f64::INFINITY,
        fits: 0,
        r_recovered: 0,
        s_recovered: 0,
        d_recovered: 0,
        success: false,
    };
    for attempt in 0..attempts {
        let mut core = if attempt == 0 || family.is_empty() {
            theta_step(&f, &Mat::identity(l.n(), l.n()), &l, hints.m, hints.model)
        } else {
            let mut k = Vector::zeros(unknowns);
            for v in &family {
                let z: f64 = StandardNormal.sample(&mut rng);
                k.axpy(z, v, 1.0);
            }
            Mat::from_row_slice(3 * t, rank, k.as_slice()) * &basis
        };
        let mut b = l.duplicate(&core);
        let mut v = fit_key(&f, &b, &mut rng);
        let mut res = residual(&f, &v, &b);
        for _ in 0..ALS_SWEEPS {
            if res <= 1e-12 {
                break;
            }
            core = theta_step(&f, &v, &l, hints.m, hints.model);
            b = l.duplicate(&core);
            v = fit_key(&f, &b, &mut rng);
            res = residual(&f, &v, &b);
        }
        let core = l.core(&b);
        let p = core.view((0, 0), (t, t)).into_owned();
        let s_hat = -core.view((0, t), (t, t)).into_owned();
        let w_hat = core.view((t, 0), (t, t)).into_owned();
        let d_hat = core.view((0, 4 * t), (t, 1)).into_owned();
        let r_dist = match w_hat.try_inverse() {
            Some(wi) => relative_frobenius(&(p * wi), &truth.r),
            None => f64::INFINITY,
        };
        let s_dist = relative_frobenius(&s_hat, &truth.s);
        let d_true = Mat::from_column_slice(t, 1, truth.d.as_slice());
        let d_dist = relative_frobenius(&d_hat, &d_true);
        let fit = res <= FIT_TOL;
        report.best_residual = report.best_residual.min(res);
        report.fits += fit as usize;
        let (r_ok, s_ok, d_ok) = (r_dist <= RECOVERY_TOL, s_dist <= RECOVERY_TOL, d_dist <= RECOVERY_TOL);
        report.r_recovered += (fit && r_ok) as usize;
        report.s_recovered += (fit && s_ok) as usize;
        report.d_recovered += (fit && d_ok) as usize;
        report.success |= fit && r_ok && s_ok && d_ok;
        report.residuals.push(res);
        report.r_distance.push(r_dist);
        report.s_distance.push(s_dist);
        report.d_distance.push(d_dist);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskingDistance {
    /// Largest `|corr|` between any original row and any masked row.
    pub max_abs_correlation: f64,
    pub original_range: (f64, f64),
    pub masked_range: (f64, f64),
}

fn centered(row: &[f64]) -> Option<Vec<f64>> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    let c: Vec<f64> = row.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 1e-300).then(|| c.into_iter().map(|v| v / norm).collect())
}

fn range(m: &Mat) -> (f64, f64) {
    (m.min(), m.max())
}

/// Constant rows carry no correlation and are skipped.
pub fn masking_distance(original: &Mat, masked: &Mat) -> Result<MaskingDistance> {
    if original.ncols() != masked.ncols() {
        return Err(Error::InvalidArgument(format!(
            "column counts differ: {} vs {}",
            original.ncols(),
            masked.ncols()
        )));
    }
    let rows = |m: &Mat| -> Vec<Vec<f64>> {
        m.row_iter()
            .filter_map(|r| centered(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    };
    let (a, b) = (rows(original), rows(masked));
    let mut best = 0.0_f64;
    for x in &a {
        for y in &b {
            let c: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            best = best.max(c.abs());
        }
    }
    Ok(MaskingDistance {
        max_abs_correlation: best.min(1.0),
        original_range: range(original),
        masked_range: range(masked),
    })
}

/// Writes the first `rows` rows of `m` as `row,col,value` lines.
pub fn write_heatmap_csv(m: &Mat, rows: usize, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "value"])?;
    for i in 0..rows.min(m.nrows()) {
        for j in 0..m.ncols() {
            w.write_record([i.to_string(), j.to_string(), m[(i, j)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atdm::{build_compact, tests::bla1};
    use crate::masking::{generate_keys, MaskingPolicy};

    #[test]
    fn closed_forms_at_a_day() {
        let full = count_inference(24, 1, Scheme::Full).unwrap();
        assert_eq!((full.equations, full.unknowns), (13968, 20736));
        assert_eq!(full.verdict, Verdict::UnderDetermined);
        let no_cet = count_inference(24, 1, Scheme::NoCet).unwrap();
        assert_eq!((no_cet.equations, no_cet.unknowns), (6984, 5837));
        assert_eq!(no_cet.verdict, Verdict::OverDetermined);
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("no_crt".parse::<Scheme>().unwrap(), Scheme::NoCrt);
        assert!(matches!("cet".parse::<Scheme>(), Err(Error::InvalidArgument(_))));
        assert!(count_inference(0, 1, Scheme::Full).is_err());
    }

    #[test]
    fn structural_count_matches_closed_form_small() {
        for scheme in [Scheme::Full, Scheme::NoCet, Scheme::NoCrt] {
            let a = count_inference(5, 2, scheme).unwrap();
            let b = structural_count(5, 2, scheme, 2).unwrap();
            assert_eq!((a.equations, a.unknowns), (b.equations, b.unknowns), "{scheme}");
        }
    }

    #[test]
    fn identity_keys_are_read_off_directly() {
        let t = 6;
        let c = build_compact(&bla1(t, 100.0)).unwrap();
        let up = mask(&c, &MaskingKeys::identity(t, 2), "bla1").unwrap();
        let hints = StructureHints { t, m: 1, duplication: 2, model: AttackModel::Blocks };
        let r = empirical_attack(&up, hints, 1, 0, &c).unwrap();
        assert!(r.residuals[0] < 1e-12);
        assert!(r.success);
    }

    #[test]
    fn random_keys_fit_without_recovery() {
        let t = 6;
        let c = build_compact(&bla1(t, 100.0)).unwrap();
        let k = generate_keys(t, 4, &MaskingPolicy::default()).unwrap();
        let up = mask(&c, &k, "bla1").unwrap();
        let hints = StructureHints { t, m: 1, duplication: 2, model: AttackModel::Blocks };
        let r = empirical_attack(&up, hints, 6, 1, &c).unwrap();
        assert_eq!(r.upload_rank, 3 * t);
        assert!(r.best_residual <= FIT_TOL);
        assert_eq!(r.r_recovered, 0);
        assert!(!r.success);
    }

    #[test]
    fn masking_distance_examples() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 0.0, 1.0, -1.0]);
        let d = masking_distance(&m, &m).unwrap();
        assert!((d.max_abs_correlation - 1.0).abs() < 1e-12);
        assert_eq!(d.original_range, (-1.0, 4.0));
        assert!(masking_distance(&m, &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn heatmap_rows_are_capped() {
        let m = Mat::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut buf = vec![];
        write_heatmap_csv(&m, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.contains("1,1,4"));
    }
}
