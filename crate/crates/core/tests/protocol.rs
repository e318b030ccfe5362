mod common;

use ppdispatch::dispatch::HighsBackend;
use ppdispatch::experiments::solve_nppcc;
use ppdispatch::masking::verify_recovered;
use ppdispatch::protocol::{
    actor_seeds, inspect_transcript, run_protocol, ActorOutcome, KeySource, ProtocolOptions, StepTag, RECOVERY_TOL,
};
use ppdispatch::scenario::{build_scenario, ScenarioFile, BUNDLED_SCENARIO};

fn run(s: &ppdispatch::scenario::Scenario, base: u64, opts: &ProtocolOptions) -> ppdispatch::protocol::ProtocolRun {
    run_protocol(s, &actor_seeds(base, &s.bla_ids()), &HighsBackend, opts).unwrap()
}

#[test]
fn same_seeds_replay_the_same_transcript() {
    let s = common::small_scenario(6, 2);
    let a = run(&s, 3, &ProtocolOptions::default());
    let b = run(&s, 3, &ProtocolOptions::default());
    let c = run(&s, 4, &ProtocolOptions::default());
    assert_eq!(a.transcript.hash(), b.transcript.hash());
    assert_ne!(a.transcript.hash(), c.transcript.hash());
    assert_eq!(a.transcript.seeds, actor_seeds(3, &s.bla_ids()));
}

#[test]
fn one_upload_and_one_reply_per_aggregator() {
    let s = common::small_scenario(6, 3);
    let r = run(&s, 1, &ProtocolOptions::default());
    assert!(r.completed());
    assert_eq!(r.transcript.messages.len(), 2 * 3);
    assert_eq!(r.transcript.count(StepTag::UploadMaskedModel), 3);
    assert_eq!(r.transcript.count(StepTag::MaskedStateResult), 3);
    let stamps: Vec<u64> = r.transcript.messages.iter().map(|m| m.timestamp).collect();
    assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    for id in s.bla_ids() {
        let view = r.transcript.view(&[&id]);
        assert_eq!(view.len(), 2);
        assert!(view.iter().all(|m| m.sender == id || m.receiver == id));
    }
}

#[test]
fn masked_exchange_reaches_the_plaintext_optimum() {
    let s = common::small_scenario(8, 3);
    let plain = solve_nppcc(&s).unwrap().dispatch.objective;
    for base in 0..3 {
        let r = run(&s, base, &ProtocolOptions::default());
        let masked = r.dispatch.as_ref().unwrap().objective;
        assert!((masked - plain).abs() <= 1e-6 * plain.abs(), "seed {base}: {masked} vs {plain}");
        for (o, sec) in r.blas.iter().zip(&r.secrets) {
            assert_eq!(o.outcome, ActorOutcome::Completed);
            let rep = verify_recovered(&sec.compact, o.x.as_ref().unwrap(), o.u.as_ref().unwrap(), RECOVERY_TOL);
            assert!(rep.pass, "{}: {rep:?}", o.id);
        }
    }
}

#[test]
fn eavesdropper_sees_exactly_the_log() {
    let s = common::small_scenario(5, 2);
    let r = run(&s, 9, &ProtocolOptions { eavesdropper: true, ..ProtocolOptions::default() });
    assert_eq!(r.tapped.as_deref().unwrap(), r.transcript.messages.as_slice());
    assert!(run(&s, 9, &ProtocolOptions::default()).tapped.is_none());
}

#[test]
fn honest_runs_are_clean_and_identity_keys_leak() {
    let s = common::small_scenario(6, 2);
    let honest = run(&s, 5, &ProtocolOptions::default());
    let rep = inspect_transcript(&honest.transcript, &honest.secrets);
    assert!(rep.clean(), "{:?}", rep.matches);
    assert!(rep.scanned_reals > 0);
    let broken = run(&s, 5, &ProtocolOptions { keys: KeySource::Identity, ..ProtocolOptions::default() });
    let rep = inspect_transcript(&broken.transcript, &broken.secrets);
    assert!(!rep.clean());
    assert!(rep.matches.iter().any(|m| m.secret.starts_with('S') || m.secret.starts_with('d')));
}

#[test]
fn unreachable_comfort_band_aborts_every_aggregator() {
    let mut f: ScenarioFile = serde_json::from_str(BUNDLED_SCENARIO).unwrap();
    f.horizon = 4;
    f.blas.truncate(2);
    f.network.placements.truncate(2);
    f.experiments.band_centers.clear();
    for b in &mut f.blas {
        b.gamma.truncate(4);
    }
    f.blas[0].temp_lo = 60.0;
    f.blas[0].temp_hi = 60.0;
    let s = build_scenario(f, "abort".into()).unwrap();
    let r = run(&s, 0, &ProtocolOptions::default());
    assert!(!r.completed());
    assert!(r.dispatch.is_none());
    assert!(r.abort_reason().is_some());
    assert_eq!(r.transcript.count(StepTag::Abort), 2);
    assert_eq!(r.transcript.count(StepTag::MaskedStateResult), 0);
}

#[test]
fn missing_seed_is_rejected() {
    let s = common::small_scenario(4, 2);
    let mut seeds = actor_seeds(0, &s.bla_ids());
    seeds.remove("bla2");
    assert!(run_protocol(&s, &seeds, &HighsBackend, &ProtocolOptions::default()).is_err());
}

#[test]
fn protocol_equals_the_monolithic_masked_pipeline() {
    use ppdispatch::atdm::build_compact;
    use ppdispatch::dispatch::{assemble, extract_dispatch, solve, BlaPayload, Mode};
    use ppdispatch::grid::{build_grid_block, coupling_matrix};
    use ppdispatch::masking::{generate_keys, mask, recover_state};

    let s = common::small_scenario(6, 3);
    let seeds = actor_seeds(21, &s.bla_ids());
    let r = run_protocol(&s, &seeds, &HighsBackend, &ProtocolOptions::default()).unwrap();

    let mut keys = vec![];
    let masked: Vec<_> = s
        .blas
        .iter()
        .map(|p| {
            let c = build_compact(p).unwrap();
            let k = generate_keys(s.horizon, seeds[&p.id], &s.masking).unwrap();
            let m = mask(&c, &k, &p.id).unwrap();
            keys.push(k);
            m
        })
        .collect();
    let g = build_grid_block(&s.network, s.horizon).unwrap();
    let a = coupling_matrix(&g, &s.bla_ids()).unwrap();
    let ap = assemble(&g, &a, BlaPayload::Masked(&masked), Mode::Masked).unwrap();
    let d = extract_dispatch(&solve(&ap.problem, &HighsBackend, &s.solver).unwrap(), &ap).unwrap();

    let pd = r.dispatch.as_ref().unwrap();
    assert_eq!(pd.objective, d.objective);
    for ((mine, theirs), k) in d.blas.iter().zip(&r.blas).zip(&keys) {
        assert_eq!(Some(&mine.u), theirs.u.as_ref().map(|u| u.as_slice().to_vec()).as_ref());
        let x = recover_state(&ppdispatch::linalg::Vector::from_vec(mine.x.clone()), &k.w).unwrap();
        assert_eq!(Some(&x), theirs.x.as_ref());
    }
}

#[test]
fn upload_size_matches_the_block_shapes() {
    let s = common::small_scenario(5, 2);
    let r = run(&s, 2, &ProtocolOptions::default());
    let t = 5;
    for m in r.transcript.messages.iter().filter(|m| m.tag == StepTag::UploadMaskedModel) {
        assert_eq!(m.payload.len(), 6 * t * t + 6 * t * t + 6 * t * 2 * t + 6 * t);
    }
}
