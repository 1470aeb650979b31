//! Browser bindings. Every export takes and returns JSON text, so the same
//! functions run natively in tests and in the page through wasm-bindgen.

use serde_json::{json, Value as Json};
use txmonsim::scenarios::flashloan::{correct_variants, flashloan_scenario, run_flashloan_suite};
use txmonsim::scenarios::reports::{queue_shapes, report_by_name, REPORT_NAMES};
use txmonsim::scenarios::{Scenario, ScenarioSpec};
use wasm_bindgen::prelude::*;

fn error(msg: impl ToString) -> String {
    json!({ "ok": false, "error": msg.to_string() }).to_string()
}

/// Names accepted by [`example_scenario`].
pub const EXAMPLES: &[&str] = &["flashloan_trmon", "flashloan_malicious", "flashloan_underpay"];

/// A ready-made scenario file for the editor.
#[wasm_bindgen]
pub fn example_scenario(name: &str) -> String {
    let case = match name {
        "flashloan_trmon" => "two_loans",
        "flashloan_malicious" => "malicious",
        "flashloan_underpay" => "underpay",
        _ => return error(format!("unknown example `{name}`")),
    };
    let lender = correct_variants().into_iter().next().expect("at least one lender");
    let mut spec = flashloan_scenario(case, &lender).expect("known case");
    spec.name = Some(name.into());
    spec.to_json()
}

/// Runs a scenario file: per transaction the outcome, gas and queue
/// evolution, then the final balances.
#[wasm_bindgen]
pub fn run_scenario(scenario_json: &str) -> String {
    let sc = match ScenarioSpec::from_json(scenario_json).and_then(Scenario::from_spec) {
        Ok(sc) => sc,
        Err(e) => return error(e),
    };
    let run = match sc.run() {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    let txs: Vec<Json> = run
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "operation": sc.operation(i).to_string(),
                "committed": r.outcome.is_committed(),
                "outcome": r.outcome.summary().to_string(),
                "gas_used": r.gas_used,
                "records": r.trace.len(),
                "queues": queue_shapes(&r.trace),
            })
        })
        .collect();
    let balances: serde_json::Map<String, Json> =
        run.final_state.accounts.iter().map(|(a, acc)| (a.to_string(), json!(acc.balance))).collect();
    json!({ "ok": true, "transactions": txs, "final_balances": balances }).to_string()
}

/// Names accepted by [`counterexample`], as a JSON array.
#[wasm_bindgen]
pub fn counterexample_names() -> String {
    json!(REPORT_NAMES).to_string()
}

/// Builds a counter-example report, re-verifies it and returns its text
/// summary with the verdict.
#[wasm_bindgen]
pub fn counterexample(name: &str) -> String {
    match report_by_name(name) {
        None => error(format!("unknown report `{name}`")),
        Some(Err(e)) => error(e),
        Some(Ok(r)) => json!({
            "ok": true,
            "name": r.name,
            "verified": r.verify(),
            "text": r.to_text(),
            "conclusion": r.conclusion,
        })
        .to_string(),
    }
}

/// Every lender against every client behaviour.
#[wasm_bindgen]
pub fn flashloan_matrix() -> String {
    match run_flashloan_suite() {
        Err(e) => error(e),
        Ok(s) => json!({
            "ok": true,
            "holds": s.holds(),
            "text": s.to_text(),
            "rows": s.rows.iter().map(|r| json!({
                "case": r.case,
                "variant": r.variant,
                "committed": r.outcome.committed,
                "outcome": r.outcome.to_string(),
            })).collect::<Vec<_>>(),
        })
        .to_string(),
    }
}
