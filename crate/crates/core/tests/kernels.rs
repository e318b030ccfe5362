mod common;

use common::props::*;
use ppdispatch::atdm::{build_compact, simulate};
use ppdispatch::masking::{generate_keys, MaskingPolicy};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn shift_powers_compose(c in shift_pair()) {
        shift_composition(c)?;
    }

    #[test]
    fn compact_form_matches_the_recursion(p in params(), seed in any::<u64>()) {
        simulate_matches_compact((p, seed))?;
    }

    #[test]
    fn masked_and_plain_feasible_sets_agree(p in params(), seed in any::<u64>(), kick in 1e-3f64..1.0) {
        feasible_sets_agree((p, seed, kick))?;
    }

    #[test]
    fn recovered_state_round_trips(p in params(), seed in any::<u64>()) {
        recover_round_trip((p, seed))?;
    }

    #[test]
    fn keys_are_well_conditioned_with_positive_slack_scaling(t in 1usize..12, q in 1usize..3, seed in any::<u64>()) {
        let policy = MaskingPolicy { duplication: q, ..MaskingPolicy::default() };
        let k = generate_keys(t, seed, &policy).unwrap();
        prop_assert_eq!(k.v.nrows(), 3 * q * t);
        prop_assert!(k.e_diag.iter().all(|e| *e >= policy.e_floor));
        let sv = k.v.clone().singular_values();
        prop_assert!(sv.max() / sv.min() <= policy.cond_max);
    }
}

#[test]
fn first_period_state_by_hand() {
    let p = common::first_order("bla1", 6);
    let x = simulate(&p, &[0.0; 6]).unwrap();
    // x1 = 0.96·23 + 0.003·100 + 0.02
    assert!((x[0] - (0.96 * 23.0 + 0.3 + 0.02)).abs() < 1e-12);
    let c = build_compact(&p).unwrap();
    assert!((c.d[0] - (0.02 + 0.96 * 23.0 + 0.003 * 100.0)).abs() < 1e-12);
}
