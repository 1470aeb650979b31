use serde_json::Value;
use txmonsim_demo::{counterexample, counterexample_names, example_scenario, flashloan_matrix, run_scenario, EXAMPLES};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn examples_run_with_expected_verdicts() {
    for (name, commits) in EXAMPLES.iter().zip([true, false, false]) {
        let out = parse(&run_scenario(&example_scenario(name)));
        assert_eq!(out["ok"], true, "{name}: {out}");
        assert_eq!(out["transactions"][0]["committed"], commits, "{name}");
    }
    let out = parse(&run_scenario(&example_scenario("flashloan_trmon")));
    assert_eq!(out["final_balances"]["L1"], 100);
    assert_eq!(out["transactions"][0]["queues"][0][0], "Cl.borrow_and_invest");
}

#[test]
fn bad_input_is_reported_not_thrown() {
    assert_eq!(parse(&run_scenario("{"))["ok"], false);
    assert_eq!(parse(&example_scenario("nope"))["ok"], false);
    assert_eq!(parse(&counterexample("nope"))["ok"], false);
    let msg = parse(&run_scenario(r#"{"contracts": [], "transactions": [{"dest": "Z", "method": "m"}]}"#));
    assert!(msg["error"].as_str().unwrap().contains("transactions[0]"));
}

#[test]
fn every_counterexample_verifies() {
    let names: Vec<String> = serde_json::from_str(&counterexample_names()).unwrap();
    assert_eq!(names.len(), 5);
    for n in names {
        let r = parse(&counterexample(&n));
        assert_eq!(r["verified"], true, "{n}");
        assert!(r["text"].as_str().unwrap().contains("conclusion"));
    }
}

#[test]
fn matrix_holds() {
    let m = parse(&flashloan_matrix());
    assert_eq!(m["holds"], true);
    assert_eq!(m["rows"].as_array().unwrap().len(), 7 * 9);
}
