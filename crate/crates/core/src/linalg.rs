//! Small dense linear-algebra helpers shared by the masking, audit and
//! dispatch code.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Vertically stacks matrices with equal column counts.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontally stacks matrices with equal row counts.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Spectral condition number; `inf` for singular input.
pub fn condition_number(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Least-squares solve `a * x = b` through the SVD pseudo-inverse.
pub fn lstsq(a: &Mat, b: &Mat) -> Mat {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1e-300);
    svd.solve(b, eps).expect("svd with u and v_t")
}

pub fn relative_frobenius(estimate: &Mat, truth: &Mat) -> f64 {
    let denom = truth.norm();
    let diff = (estimate - truth).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}
