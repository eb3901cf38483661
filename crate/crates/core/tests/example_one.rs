use brace_core::canonical::{example_one, example_one_split};
use brace_core::economy::{build_economy, EconomySpec};
use brace_core::experiments::{Baseline, EvalConfig};
use brace_core::harness::AttackSpec;
use brace_core::solver::{solve_brace, verify_clearing, SolverConfig};
use brace_core::apply_attack;

#[test]
fn base_equilibrium_prices_a_c_d_equally() {
    let e = example_one(0.05);
    let r = solve_brace(&e, &SolverConfig::default()).unwrap();
    assert!(r.converged);
    let p = r.prices.as_slice();
    for j in [0, 2, 3] {
        assert!((p[j] - 1.0 / 3.0).abs() < 1e-6, "{p:?}");
    }
    assert!(p[1] < 1e-9);
    assert!(verify_clearing(&e, &r, 1e-4, 1e-3).unwrap().pass);
}

#[test]
fn split_raises_price_of_b_and_helps_p() {
    let e = example_one(0.05);
    let cfg = EvalConfig::default();
    let base = Baseline::new(&e, &cfg, false).unwrap();
    let attacked = apply_attack(&e, &example_one_split()).unwrap();
    assert_eq!(attacked.n(), 4);
    let eq = base.solve_attacked(&attacked, &cfg.solver).unwrap();
    assert!(eq.converged);
    assert!(eq.prices.as_slice()[1] - base.p0().as_slice()[1] >= 1e-3);
    let g = base.gains(&attacked, "P", &eq.prices, &cfg).unwrap();
    assert!(g.realized >= 1e-3, "{g:?}");
}

#[test]
fn spec_file_round_trip_rebuilds_same_economy() {
    let e = example_one(0.05);
    let text = EconomySpec::from_economy(&e).to_json().unwrap();
    let back = build_economy(&EconomySpec::from_json(&text).unwrap()).unwrap();
    assert_eq!(EconomySpec::from_economy(&back), EconomySpec::from_economy(&e));
}

#[test]
fn split_attack_file_matches_builtin_split() {
    let e = example_one(0.05);
    let spec = AttackSpec::from_json(
        r#"{"kind":"split","principal":"P","identity":"1","pieces":[
            {"id":"1a","share":0.5,"order":[[[1,0,0,0]]]},
            {"id":"1b","share":0.5,"order":[[[0,1,0,0]]]}]}"#,
    )
    .unwrap();
    let from_file = apply_attack(&e, &spec.build(&e).unwrap()).unwrap();
    let builtin = apply_attack(&e, &example_one_split()).unwrap();
    assert_eq!(EconomySpec::from_economy(&from_file), EconomySpec::from_economy(&builtin));
}

#[test]
fn attack_by_non_owner_is_rejected() {
    let e = example_one(0.05);
    let spec = AttackSpec::from_json(r#"{"kind":"split","principal":"Q2","identity":"1","pieces":[]}"#).unwrap();
    assert!(spec.build(&e).is_err());
}
