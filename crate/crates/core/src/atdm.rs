//! Aggregate thermal dynamic model of a building load aggregator (BLA).
//!
//! The aggregate indoor temperature `x` of a building cluster follows the
//! autoregressive recursion
//!
//! ```text
//! x[t] = Σ_{m=1..M} α[m]·x[t-m] + Σ_{m=0..M} β[m]·u[t-m] + γ[t]
//! ```
//!
//! where `u` is the electric heating/cooling power injected into the cluster.
//! Stacking the horizon turns it into `R·x - S·u = d` with `R` unit
//! lower-triangular and `S` lower-triangular, both banded with width `M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Private thermal model of one aggregator.
///
/// `alpha` holds α¹..α^M, `beta` holds β⁰..β^M, `gamma` holds γ¹..γ^T.
/// History vectors are ordered oldest first: `hist_x = [x^{1-M}, .., x^0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlaParams {
    pub id: String,
    pub horizon: usize,
    pub order: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub temp_hi: f64,
    pub temp_lo: f64,
    pub hist_x: Vec<f64>,
    pub hist_u: Vec<f64>,
}

impl BlaParams {
    /// Checks the shape and bound invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let (t, m) = (self.horizon, self.order);
        let mut problems = Vec::new();
        if t == 0 {
            problems.push("horizon must be at least 1".to_string());
        }
        if m == 0 {
            problems.push("model order must be at least 1".to_string());
        }
        if self.temp_lo > self.temp_hi {
            problems.push(format!(
                "temp_lo {} exceeds temp_hi {}",
                self.temp_lo, self.temp_hi
            ));
        }
        let lens = [
            ("alpha", self.alpha.len(), m),
            ("beta", self.beta.len(), m + 1),
            ("gamma", self.gamma.len(), t),
            ("hist_x", self.hist_x.len(), m),
            ("hist_u", self.hist_u.len(), m),
        ];
        for (name, got, want) in lens {
            if got != want {
                problems.push(format!("{name} has length {got}, expected {want}"));
            }
        }
        let finite = self
            .alpha
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .chain(&self.hist_x)
            .chain(&self.hist_u)
            .chain([&self.temp_hi, &self.temp_lo])
            .all(|v| v.is_finite());
        if !finite {
            problems.push("non-finite parameter".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "BLA {}: {}",
                self.id,
                problems.join("; ")
            )))
        }
    }

    /// The constraint-extension counting argument needs `T ≥ M + 2`.
    pub fn validate_for_masking(&self) -> Result<()> {
        self.validate()?;
        if self.horizon < self.order + 2 {
            return Err(Error::InvalidModel(format!(
                "BLA {}: horizon T={} must satisfy T >= M + 2 (M={}) for the constraint extension to mask the model",
                self.id, self.horizon, self.order
            )));
        }
        Ok(())
    }

    fn hist_x_at(&self, idx: isize) -> f64 {
        // idx in 1-M..=0
        self.hist_x[(idx + self.order as isize - 1) as usize]
    }

    fn hist_u_at(&self, idx: isize) -> f64 {
        self.hist_u[(idx + self.order as isize - 1) as usize]
    }
}

/// Matrix form `R·x - S·u = d`, `x_lo ≤ x ≤ x_hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactBla {
    pub r: Mat,
    pub s: Mat,
    pub d: Vector,
    pub x_hi: f64,
    pub x_lo: f64,
}

impl CompactBla {
    pub fn horizon(&self) -> usize {
        self.d.len()
    }

    /// Solves `R·x = d + S·u` by forward substitution.
    pub fn state_for(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "control has length {}, expected {}",
                u.len(),
                self.horizon()
            )));
        }
        let rhs = &self.d + &self.s * u;
        self.r
            .solve_lower_triangular(&rhs)
            .ok_or_else(|| Error::InvalidModel("R is singular".into()))
    }
}

/// Zone temperatures and their aggregation weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneAggregation {
    pub xi: Vec<f64>,
    pub zone_temps: Vec<Vec<f64>>,
}

impl ZoneAggregation {
    pub fn validate(&self) -> Result<()> {
        if self.xi.is_empty() {
            return Err(Error::InvalidWeights("no zones".into()));
        }
        if self.xi.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidWeights("weights must be nonnegative".into()));
        }
        let sum: f64 = self.xi.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        if self.zone_temps.len() != self.xi.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} zones",
                self.xi.len(),
                self.zone_temps.len()
            )));
        }
        Ok(())
    }
}

/// The `m`-th subdiagonal shift matrix of size `t × t`; `m = 0` is the identity.
pub fn lambda_matrix(m: usize, t: usize) -> Result<Mat> {
    if t == 0 || m > t {
        return Err(Error::InvalidArgument(format!(
            "shift index {m} invalid for dimension {t}"
        )));
    }
    Ok(Mat::from_fn(t, t, |i, j| if i >= j && i - j == m { 1.0 } else { 0.0 }))
}

pub fn build_compact(p: &BlaParams) -> Result<CompactBla> {
    p.validate()?;
    let (t, m) = (p.horizon, p.order);
    let mut r = Mat::identity(t, t);
    let mut s = Mat::zeros(t, t);
    for k in 0..=m.min(t) {
        if k >= 1 {
            r -= lambda_matrix(k, t)? * p.alpha[k - 1];
        }
        s += lambda_matrix(k, t)? * p.beta[k];
    }
    let d = Vector::from_fn(t, |row, _| {
        let tt = row + 1;
        let mut v = p.gamma[row];
        if tt <= m {
            for k in tt..=m {
                let idx = tt as isize - k as isize;
                v += p.alpha[k - 1] * p.hist_x_at(idx) + p.beta[k] * p.hist_u_at(idx);
            }
        }
        v
    });
    Ok(CompactBla {
        r,
        s,
        d,
        x_hi: p.temp_hi,
        x_lo: p.temp_lo,
    })
}

/// Runs the scalar recursion forward from the stored history.
pub fn simulate(p: &BlaParams, u: &[f64]) -> Result<Vector> {
    p.validate()?;
    if u.len() != p.horizon {
        return Err(Error::InvalidArgument(format!(
            "control has length {}, expected {}",
            u.len(),
            p.horizon
        )));
    }
    let m = p.order as isize;
    let mut x: Vec<f64> = Vec::with_capacity(p.horizon);
    let state = |x: &Vec<f64>, idx: isize| -> f64 {
        if idx >= 1 {
            x[(idx - 1) as usize]
        } else {
            p.hist_x_at(idx)
        }
    };
    let control = |idx: isize| -> f64 {
        if idx >= 1 {
            u[(idx - 1) as usize]
        } else {
            p.hist_u_at(idx)
        }
    };
    for t in 1..=p.horizon as isize {
        let mut v = p.gamma[(t - 1) as usize];
        for k in 1..=m {
            v += p.alpha[(k - 1) as usize] * state(&x, t - k);
        }
        for k in 0..=m {
            v += p.beta[k as usize] * control(t - k);
        }
        x.push(v);
    }
    Ok(Vector::from_vec(x))
}

/// Weighted aggregate of the zone temperatures, per period.
pub fn aggregate_zones(z: &ZoneAggregation) -> Result<Vec<f64>> {
    z.validate()?;
    let len = z.zone_temps[0].len();
    if z.zone_temps.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidArgument("zone series have unequal lengths".into()));
    }
    Ok((0..len)
        .map(|t| z.xi.iter().zip(&z.zone_temps).map(|(w, s)| w * s[t]).sum())
        .collect())
}
