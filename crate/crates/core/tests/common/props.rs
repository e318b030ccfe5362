use ppdispatch::atdm::{build_compact, lambda_matrix, simulate, BlaParams};
use ppdispatch::linalg::{lstsq, Mat, Vector};
use ppdispatch::masking::{generate_keys, mask, recover_state, verify_recovered, MaskedBla, MaskingPolicy};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 256;

pub fn params() -> impl Strategy<Value = BlaParams> {
    (1usize..=3)
        .prop_flat_map(|m| (Just(m), (m + 2)..=14))
        .prop_flat_map(|(m, t)| {
            (
                Just((m, t)),
                prop::collection::vec(-1.0f64..1.0, m),
                prop::collection::vec(-0.02f64..0.02, m + 1),
                prop::collection::vec(-0.5f64..0.5, t),
                prop::collection::vec(18.0f64..28.0, m),
                prop::collection::vec(0.0f64..200.0, m),
                (15.0f64..25.0, 0.5f64..12.0),
            )
        })
        .prop_map(|((m, t), a, beta, gamma, hist_x, hist_u, (lo, width))| {
            let norm: f64 = a.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
            let alpha = a.iter().map(|v| 0.95 * v / norm).collect();
            BlaParams {
                id: "p".into(),
                horizon: t,
                order: m,
                alpha,
                beta,
                gamma,
                temp_hi: lo + width,
                temp_lo: lo,
                hist_x,
                hist_u,
            }
        })
}

pub fn controls(t: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..t).map(|_| rng.gen_range(-150.0..150.0)).collect()
}

pub fn scale(v: &Vector) -> f64 {
    1.0 + v.amax()
}

/// `(x̃, u)` is feasible for the upload when some `w ≥ 0` closes the system.
pub fn masked_feasible(up: &MaskedBla, xt: &Vector, u: &Vector) -> bool {
    let rhs = &up.f4 - &up.f1 * xt - &up.f2 * u;
    let rhs = Mat::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let w = lstsq(&up.f3, &rhs);
    let resid = (&up.f3 * &w - &rhs).amax();
    resid <= 1e-7 * scale(&up.f4) && w.iter().all(|v| *v >= -1e-7)
}

pub fn shift_pair() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..20).prop_flat_map(|t| (Just(t), 0..=t, 0..=t))
}

pub fn shift_composition((t, a, b): (usize, usize, usize)) -> Result<(), TestCaseError> {
    let prod = lambda_matrix(a, t).unwrap() * lambda_matrix(b, t).unwrap();
    for i in 0..t {
        for j in 0..t {
            let want = if i >= j && i - j == a + b { 1.0 } else { 0.0 };
            prop_assert_eq!(prod[(i, j)], want);
        }
    }
    Ok(())
}

pub fn simulate_matches_compact((p, seed): (BlaParams, u64)) -> Result<(), TestCaseError> {
    let u = controls(p.horizon, seed);
    let x = simulate(&p, &u).unwrap();
    let c = build_compact(&p).unwrap();
    let uv = Vector::from_vec(u);
    let resid = &c.r * &x - &c.s * &uv - &c.d;
    prop_assert!(resid.amax() <= 1e-9 * scale(&x), "residual {}", resid.amax());
    let back = c.state_for(&uv).unwrap();
    prop_assert!((&back - &x).amax() <= 1e-9 * scale(&x));
    Ok(())
}

pub fn feasible_sets_agree((p, seed, kick): (BlaParams, u64, f64)) -> Result<(), TestCaseError> {
    let mut c = build_compact(&p).unwrap();
    let u = Vector::from_vec(controls(p.horizon, seed ^ 0x5eed));
    let x = c.state_for(&u).unwrap();
    if seed % 2 == 0 {
        c.x_lo = x.min() - 0.5;
        c.x_hi = x.max() + 0.5;
    }
    let k = generate_keys(p.horizon, seed, &MaskingPolicy::default()).unwrap();
    let up = mask(&c, &k, "p").unwrap();
    let margin = x
        .iter()
        .map(|v| (v - c.x_lo).abs().min((c.x_hi - v).abs()))
        .fold(f64::INFINITY, f64::min);
    prop_assume!(margin > 1e-6);
    let inside = x.iter().all(|v| *v >= c.x_lo && *v <= c.x_hi);
    let xt = k.w.clone().lu().solve(&x).unwrap();
    prop_assert_eq!(masked_feasible(&up, &xt, &u), inside);

    let mut moved = xt.clone();
    moved[seed as usize % p.horizon] += kick * scale(&xt);
    let wx = &k.w * &moved;
    prop_assert!(!verify_recovered(&c, &wx, &u, 1e-9).pass);
    prop_assert!(!masked_feasible(&up, &moved, &u));
    Ok(())
}

pub fn recover_round_trip((p, seed): (BlaParams, u64)) -> Result<(), TestCaseError> {
    let c = build_compact(&p).unwrap();
    let k = generate_keys(p.horizon, seed, &MaskingPolicy::default()).unwrap();
    let u = Vector::from_vec(controls(p.horizon, seed));
    let x = c.state_for(&u).unwrap();
    let xt = k.w.clone().lu().solve(&x).unwrap();
    let back = recover_state(&xt, &k.w).unwrap();
    prop_assert!((&back - &x).amax() <= 1e-9 * scale(&x));
    Ok(())
}
