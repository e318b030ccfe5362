//! Masking pipeline run privately by each aggregator before it uploads its
//! model: variable remapping (`x = W·x̃`), conversion of the comfort band into
//! equalities with positively scaled slacks, duplication of the resulting
//! equality system, and left multiplication by a dense secret matrix `V`.
//!
//! The two weakened pipelines (`no_crt`, `no_cet`) are kept for the privacy
//! audit: they show what the attacker can infer once either safeguard is
//! dropped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::atdm::CompactBla;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, inf_norm, vstack, Mat, Vector};

/// Condition number above which a key matrix is treated as singular.
const SINGULAR_COND: f64 = 1e13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingPolicy {
    /// Mean of the Gaussian the key entries are drawn from.
    pub mean: f64,
    /// Variance (not standard deviation) of that Gaussian.
    pub variance: f64,
    pub cond_max: f64,
    pub e_floor: f64,
    pub max_attempts: usize,
    /// How many copies of the equality system are stacked before `V` is applied.
    pub duplication: usize,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            mean: 0.1,
            variance: 0.1,
            cond_max: 1e8,
            e_floor: 1e-3,
            max_attempts: 16,
            duplication: 2,
        }
    }
}

/// Secret key material owned by one aggregator.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskingKeys {
    pub w: Mat,
    /// Diagonal of `E` (length `2T`).
    pub e_diag: Vector,
    pub v: Mat,
    pub seed: u64,
}

impl MaskingKeys {
    /// `W = I`, `E = I`, `V = I`: no masking at all. Only for negative controls.
    pub fn identity(t: usize, duplication: usize) -> Self {
        let n = 3 * duplication * t;
        Self {
            w: Mat::identity(t, t),
            e_diag: Vector::from_element(2 * t, 1.0),
            v: Mat::identity(n, n),
            seed: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.w.nrows()
    }

    pub fn duplication(&self) -> usize {
        let t = self.horizon();
        if t == 0 {
            0
        } else {
            self.v.nrows() / (3 * t)
        }
    }

    pub fn e_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.e_diag)
    }
}

pub fn generate_keys(t: usize, seed: u64, policy: &MaskingPolicy) -> Result<MaskingKeys> {
    if t == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if policy.duplication == 0 {
        return Err(Error::InvalidArgument("duplication must be at least 1".into()));
    }
    let normal = Normal::new(policy.mean, policy.variance.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("key distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let draw_invertible = |n: usize, rng: &mut ChaCha8Rng| -> Result<Mat> {
        for _ in 0..policy.max_attempts.max(1) {
            let m = Mat::from_fn(n, n, |_, _| normal.sample(rng));
            if condition_number(&m) <= policy.cond_max {
                return Ok(m);
            }
        }
        Err(Error::KeyGeneration(format!(
            "no {n}x{n} matrix with condition number <= {:e} after {} attempts",
            policy.cond_max, policy.max_attempts
        )))
    };

    let w = draw_invertible(t, &mut rng)?;
    let e_diag = Vector::from_fn(2 * t, |_, _| normal.sample(&mut rng).abs().max(policy.e_floor));
    let v = draw_invertible(3 * policy.duplication * t, &mut rng)?;
    Ok(MaskingKeys { w, e_diag, v, seed })
}

/// The duplicated equality system `F·x̃ + G·u + H·w = e` before `V` is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityBlocks {
    pub f: Mat,
    pub g: Mat,
    pub h: Mat,
    pub e: Vector,
    pub duplication: usize,
}

impl FeasibilityBlocks {
    pub fn horizon(&self) -> usize {
        self.f.ncols()
    }
}

/// What the aggregator uploads: `V·F`, `V·G`, `V·H`, `V·e`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedBla {
    pub id: String,
    pub f1: Mat,
    pub f2: Mat,
    pub f3: Mat,
    pub f4: Vector,
}

impl MaskedBla {
    pub fn horizon(&self) -> usize {
        self.f1.ncols()
    }

    pub fn rows(&self) -> usize {
        self.f1.nrows()
    }

    /// Number of reals carried by the upload.
    pub fn payload_len(&self) -> usize {
        self.f1.len() + self.f2.len() + self.f3.len() + self.f4.len()
    }
}

/// `D = [W; -W]`.
fn bound_map(w: &Mat) -> Mat {
    vstack(&[w, &(-w)])
}

/// `x_bd = [x_hi·1; -x_lo·1]`.
fn bound_vector(c: &CompactBla) -> Vector {
    let t = c.horizon();
    Vector::from_fn(2 * t, |i, _| if i < t { c.x_hi } else { -c.x_lo })
}

pub fn build_blocks(c: &CompactBla, k: &MaskingKeys) -> Result<FeasibilityBlocks> {
    let t = c.horizon();
    if k.horizon() != t || k.e_diag.len() != 2 * t || k.v.nrows() % (3 * t) != 0 || k.v.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "key dimensions (W {}x{}, E {}, V {}x{}) do not match horizon {t}",
            k.w.nrows(),
            k.w.ncols(),
            k.e_diag.len(),
            k.v.nrows(),
            k.v.ncols()
        )));
    }
    let q = k.duplication();
    let rw = &c.r * &k.w;
    let d_map = bound_map(&k.w);
    let e_mat = k.e_matrix();
    let x_bd = bound_vector(c);
    let zeros_g = Mat::zeros(2 * t, t);
    let zeros_h = Mat::zeros(t, 2 * t);

    let mut f_parts: Vec<&Mat> = vec![&rw; q];
    f_parts.extend(std::iter::repeat(&d_map).take(q));
    let neg_s = -&c.s;
    let mut g_parts: Vec<&Mat> = vec![&neg_s; q];
    g_parts.extend(std::iter::repeat(&zeros_g).take(q));
    let mut h_parts: Vec<&Mat> = vec![&zeros_h; q];
    h_parts.extend(std::iter::repeat(&e_mat).take(q));

    let d_col = Mat::from_column_slice(t, 1, c.d.as_slice());
    let bd_col = Mat::from_column_slice(2 * t, 1, x_bd.as_slice());
    let mut e_parts: Vec<&Mat> = vec![&d_col; q];
    e_parts.extend(std::iter::repeat(&bd_col).take(q));

    Ok(FeasibilityBlocks {
        f: vstack(&f_parts),
        g: vstack(&g_parts),
        h: vstack(&h_parts),
        e: Vector::from_column_slice(vstack(&e_parts).as_slice()),
        duplication: q,
    })
}

fn check_invertible(v: &Mat, what: &str) -> Result<()> {
    if !v.is_square() {
        return Err(Error::InvalidKey(format!("{what} is not square")));
    }
    let cond = condition_number(v);
    if !cond.is_finite() || cond > SINGULAR_COND {
        return Err(Error::InvalidKey(format!(
            "{what} is singular (condition number {cond:e})"
        )));
    }
    Ok(())
}

pub fn apply_te2(b: &FeasibilityBlocks, v: &Mat, id: &str) -> Result<MaskedBla> {
    if v.nrows() != b.f.nrows() {
        return Err(Error::InvalidArgument(format!(
            "V is {}x{}, blocks have {} rows",
            v.nrows(),
            v.ncols(),
            b.f.nrows()
        )));
    }
    check_invertible(v, "V")?;
    Ok(MaskedBla {
        id: id.to_string(),
        f1: v * &b.f,
        f2: v * &b.g,
        f3: v * &b.h,
        f4: v * &b.e,
    })
}

/// Full pipeline: blocks, then left multiplication by `V`.
pub fn mask(c: &CompactBla, k: &MaskingKeys, id: &str) -> Result<MaskedBla> {
    let blocks = build_blocks(c, k)?;
    apply_te2(&blocks, &k.v, id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsecureVariant {
    /// Box constraints kept as inequalities, scaled by a positive diagonal.
    NoCrt,
    /// Slack equalities masked without duplication.
    NoCet,
}

/// Upload produced when the comfort band stays an inequality:
/// `V¹RW·x̃ - V¹S·u = V¹d` and `Δx_lo·1 ≤ ΔW·x̃ ≤ Δx_hi·1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoCrtUpload {
    pub rw: Mat,
    pub s: Mat,
    pub d: Vector,
    /// `[Δ·x_hi·1; Δ·x_lo·1]`.
    pub bounds: Vector,
    pub w: Mat,
}

impl NoCrtUpload {
    pub fn payload_len(&self) -> usize {
        self.rw.len() + self.s.len() + self.d.len() + self.bounds.len() + self.w.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsecureMasked {
    NoCrt(NoCrtUpload),
    NoCet(MaskedBla),
}

impl InsecureMasked {
    pub fn payload_len(&self) -> usize {
        match self {
            InsecureMasked::NoCrt(u) => u.payload_len(),
            InsecureMasked::NoCet(m) => m.payload_len(),
        }
    }
}

/// Masks with one safeguard removed. Sub-keys come from the leading principal
/// blocks of the aggregator's keys (`V¹`, `V'`) and the first `T` slack
/// scalings (`Δ`).
pub fn mask_insecure(
    c: &CompactBla,
    k: &MaskingKeys,
    variant: InsecureVariant,
    id: &str,
) -> Result<InsecureMasked> {
    let t = c.horizon();
    if k.horizon() != t || k.v.nrows() < 3 * t || k.e_diag.len() != 2 * t {
        return Err(Error::InvalidArgument("key dimensions do not match horizon".into()));
    }
    match variant {
        InsecureVariant::NoCrt => {
            let v1 = k.v.view((0, 0), (t, t)).into_owned();
            check_invertible(&v1, "V1")?;
            let delta = Mat::from_diagonal(&k.e_diag.rows(0, t).into_owned());
            let ones = Vector::from_element(t, 1.0);
            let hi = &delta * &ones * c.x_hi;
            let lo = &delta * &ones * c.x_lo;
            let bounds = Vector::from_iterator(2 * t, hi.iter().chain(lo.iter()).cloned());
            Ok(InsecureMasked::NoCrt(NoCrtUpload {
                rw: &v1 * &c.r * &k.w,
                s: &v1 * &c.s,
                d: &v1 * &c.d,
                bounds,
                w: &delta * &k.w,
            }))
        }
        InsecureVariant::NoCet => {
            let single = MaskingKeys {
                w: k.w.clone(),
                e_diag: k.e_diag.clone(),
                v: k.v.view((0, 0), (3 * t, 3 * t)).into_owned(),
                seed: k.seed,
            };
            Ok(InsecureMasked::NoCet(mask(c, &single, id)?))
        }
    }
}

pub fn recover_state(x_tilde: &Vector, w: &Mat) -> Result<Vector> {
    if w.ncols() != x_tilde.len() || !w.is_square() {
        return Err(Error::InvalidArgument(format!(
            "W is {}x{}, pseudo-state has length {}",
            w.nrows(),
            w.ncols(),
            x_tilde.len()
        )));
    }
    Ok(w * x_tilde)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `‖R·x - S·u - d‖∞`.
    pub dynamics_residual: f64,
    pub worst_dynamics_period: Option<usize>,
    /// Largest excursion outside `[x_lo, x_hi]` (0 when inside).
    pub bound_violation: f64,
    pub worst_bound_period: Option<usize>,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks a recovered `(x, u)` against the plaintext model.
pub fn verify_recovered(c: &CompactBla, x: &Vector, u: &Vector, tol: f64) -> FeasibilityReport {
    let t = c.horizon();
    let threshold = tol * (1.0 + inf_norm(c.d.as_slice()));
    if x.len() != t || u.len() != t {
        return FeasibilityReport {
            dynamics_residual: f64::INFINITY,
            worst_dynamics_period: None,
            bound_violation: f64::INFINITY,
            worst_bound_period: None,
            threshold,
            pass: false,
        };
    }
    let resid = &c.r * x - &c.s * u - &c.d;
    let (mut dyn_res, mut dyn_at) = (0.0, None);
    for (i, r) in resid.iter().enumerate() {
        if r.abs() > dyn_res {
            dyn_res = r.abs();
            dyn_at = Some(i);
        }
    }
    let (mut bnd, mut bnd_at) = (0.0, None);
    for (i, v) in x.iter().enumerate() {
        let viol = (v - c.x_hi).max(c.x_lo - v).max(0.0);
        if viol > bnd {
            bnd = viol;
            bnd_at = Some(i);
        }
    }
    FeasibilityReport {
        dynamics_residual: dyn_res,
        worst_dynamics_period: dyn_at,
        bound_violation: bnd,
        worst_bound_period: bnd_at,
        threshold,
        pass: dyn_res <= threshold && bnd <= threshold,
    }
}
