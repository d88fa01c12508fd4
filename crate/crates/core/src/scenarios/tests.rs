use super::*;

fn opts() -> ScenarioOptions {
    ScenarioOptions::default()
}

fn small(name: &str, n: usize, options: &ScenarioOptions) -> RunReport {
    let mut spec = lookup(name, options).unwrap();
    spec.n = n;
    run_scenario(&spec, false).unwrap().report
}

fn result<'a>(r: &'a RunReport, name: &str) -> &'a AssertionResult {
    r.assertions.iter().find(|a| a.name == name).unwrap()
}

#[test]
fn catalog_names_are_unique_and_valid() {
    let entries = catalog();
    assert_eq!(entries.len(), 8);
    for e in &entries {
        let spec = (e.build)(&opts()).unwrap();
        assert_eq!(spec.name, e.name);
        spec.validate().unwrap();
        compile(&spec).unwrap();
    }
    let mut names: Vec<_> = entries.iter().map(|e| e.name).collect();
    names.dedup();
    assert_eq!(names.len(), 8);
}

#[test]
fn unknown_scenario_is_rejected() {
    assert!(matches!(lookup("nope", &opts()), Err(Error::Scenario(_))));
}

#[test]
fn bad_specs_fail_validation() {
    let base = lookup("born_measurement", &opts()).unwrap();
    let mut s = base.clone();
    s.dt = 0.0;
    assert!(s.validate().is_err());
    let mut s = base.clone();
    s.branches[0].packets.pop();
    assert!(s.validate().is_err());
    let mut s = base.clone();
    s.events.push(EventDecl::Collapse { t: 0.1, label: "psi0".into() });
    assert!(s.validate().is_err(), "events out of order");
    let mut s = base.clone();
    s.plot_coord = "q".into();
    assert!(s.validate().is_err());
    let mut s = base;
    s.assertions.push(s.assertions[0].clone());
    assert!(s.validate().is_err());
}

#[test]
fn weights_are_checked() {
    for w in [vec![1.0], vec![0.5, 0.6], vec![-0.5, 1.5], vec![0.2; 5]] {
        let o = ScenarioOptions { weights: Some(w), ..opts() };
        assert!(lookup("born_measurement", &o).is_err());
    }
    let o = ScenarioOptions { weights: Some(vec![0.5, 0.5]), ..opts() };
    assert!(lookup("fig4_no_influence", &o).is_err());
}

#[test]
fn eigenstate_input_gives_one_outcome() {
    let o = ScenarioOptions { weights: Some(vec![1.0, 0.0]), ..opts() };
    let r = small("born_measurement", 300, &o);
    assert_eq!(r.stats.arrivals.get("psi0/a0"), Some(&300));
    assert!(r.passed, "{:?}", r.assertions);
}

#[test]
fn three_outcomes_follow_weights() {
    let o = ScenarioOptions { weights: Some(vec![0.2, 0.3, 0.5]), collapse_comparator: true, ..opts() };
    let r = small("born_measurement", 2000, &o);
    assert!(r.passed, "{:?}", r.assertions);
    let total: usize = r.stats.arrivals.values().sum();
    assert_eq!(total, 2000);
    assert!(result(&r, "collapse_comparator").measured.unwrap() < 1e-6);
}

#[test]
fn reports_are_deterministic() {
    let a = small("born_measurement", 200, &opts());
    let b = small("born_measurement", 200, &opts());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn results_follow_spec_order() {
    let spec = lookup("protective_empty_wave", &opts()).unwrap();
    let r = small("protective_empty_wave", 20, &opts());
    let names: Vec<_> = r.assertions.iter().map(|a| a.name.clone()).collect();
    let want: Vec<_> = spec.assertions.iter().map(|a| a.name.clone()).collect();
    assert_eq!(names, want);
    assert!(r.passed, "{:?}", r.assertions);
}

#[test]
fn unevaluated_assertions_fail() {
    let mut spec = lookup("protective_empty_wave", &opts()).unwrap();
    spec.n = 5;
    spec.assertions.push(AssertionSpec { name: "extra".into(), description: "never computed".into(), threshold: 0.0 });
    let r = run_scenario(&spec, false).unwrap().report;
    let extra = result(&r, "extra");
    assert!(!extra.passed);
    assert_eq!(extra.measured, None);
    assert!(!r.passed);
}

#[test]
fn protective_models_differ() {
    let r = small("protective_discriminate", 50, &opts());
    assert!(r.passed, "{:?}", r.assertions);
    let a = r.metrics["model_a_shift"];
    assert!(a < 0.0 && r.metrics["model_b_shift"].abs() < 1e-12);
}

#[test]
fn bare_convention_changes_control_only() {
    let o = ScenarioOptions { coeff_convention: CoeffConvention::Bare, ..opts() };
    let full = small("protective_discriminate", 10, &opts());
    let bare = small("protective_discriminate", 10, &o);
    assert!(bare.passed, "{:?}", bare.assertions);
    let ratio = bare.metrics["model_a_shift"] / full.metrics["model_a_shift"];
    assert!((ratio - 1.0 / 0.64).abs() < 1e-9, "ratio {ratio}");
}

#[test]
fn fig4_zeroing_is_invisible() {
    let r = small("fig4_no_influence", 100, &opts());
    assert!(r.passed, "{:?}", r.assertions);
}

#[test]
fn coord_marginals_are_normalized() {
    let spec = lookup("fig1_two_slit", &opts()).unwrap();
    let c = compile(&spec).unwrap();
    for k in 0..2 {
        let (x, d) = coord_marginal(&c.initial, k).unwrap();
        let dx = x[1] - x[0];
        assert!((d.iter().sum::<f64>() * dx - 1.0).abs() < 1e-9);
    }
}
