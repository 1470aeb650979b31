//! Flash-loan suite: every lender implementation against a fixed set of
//! client behaviours, with cross-implementation agreement and the safety
//! property "no committed transaction lowers a lender's balance".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::reports::Expectation;
use super::{ContractSpec, ExternalSpec, Scenario, ScenarioError, ScenarioSpec, TxSpec};
use crate::engine::{EngineConfig, MonitorMode, SchedulerKind};
use crate::mechanisms::Mechanism;
use crate::model::OutcomeSummary;
use crate::value::{Address, Amt, Value};

/// A lender implementation and the engine it needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LenderVariant {
    pub name: String,
    pub builtin: String,
    pub engine: EngineConfig,
}

const GAS: u64 = 5_000;

fn variant(name: &str, builtin: &str, scheduler: SchedulerKind, ms: &[Mechanism], mode: MonitorMode) -> LenderVariant {
    LenderVariant {
        name: name.into(),
        builtin: builtin.into(),
        engine: EngineConfig::new(scheduler, GAS).with_mechanisms(ms.iter().copied()).with_monitors(mode),
    }
}

/// The lenders that are supposed to be correct.
pub fn correct_variants() -> Vec<LenderVariant> {
    use Mechanism::*;
    use MonitorMode::{None as Plain, Transaction};
    use SchedulerKind::*;
    vec![
        variant("trmon/dfs", "lender_trmon", Dfs, &[], Transaction),
        variant("trmon/bfs", "lender_trmon", Bfs, &[], Transaction),
        variant("ustore/dfs", "lender_ustore", Dfs, &[UStore], Plain),
        variant("ustore/bfs", "lender_ustore", Bfs, &[UStore], Plain),
        variant("first_fail/dfs", "lender_first_fail", Dfs, &[First, Fail], Plain),
        variant("first_fail/bfs", "lender_first_fail", Bfs, &[First, Fail], Plain),
        variant("bfs_first", "lender_bfs_first", Bfs, &[First], Plain),
        variant("bfs_queue", "lender_bfs_queue", Bfs, &[Queue], Plain),
    ]
}

pub fn naive_variant() -> LenderVariant {
    variant("naive/dfs", "lender_naive", SchedulerKind::Dfs, &[], MonitorMode::None)
}

/// A client behaviour, with the verdict a correct lender must give.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCase {
    pub name: String,
    pub expect_commit: bool,
}

fn case(name: &str, expect_commit: bool) -> ClientCase {
    ClientCase { name: name.into(), expect_commit }
}

pub fn client_cases() -> Vec<ClientCase> {
    vec![
        case("two_loans", true),
        case("malicious", false),
        case("underpay", false),
        case("fee", true),
        case("single_loan", true),
        case("deposit", true),
        case("overborrow", false),
    ]
}

fn amts(xs: &[Amt]) -> Value {
    Value::Seq(xs.iter().map(|a| Value::Amt(*a)).collect())
}

fn addrs(xs: &[&str]) -> Value {
    Value::Seq(xs.iter().map(|a| Value::addr(*a)).collect())
}

fn two_loans(lenders: &[&str], amounts: &[Amt], repay: &[Amt]) -> Value {
    Value::rec([
        ("lenders", addrs(lenders)),
        ("amounts", amts(amounts)),
        ("repay", amts(repay)),
        ("sink", Value::addr("S")),
    ])
}

/// The scenario for one client case against one lender variant. Lenders
/// hold exactly the amount they are asked for (`L1` 100, `L2` 200).
pub fn flashloan_scenario(case: &str, lender: &LenderVariant) -> Option<ScenarioSpec> {
    let mut client_balance = 0;
    let mut tx = TxSpec::new("Cl", "borrow_and_invest", Value::Unit);
    let client = match case {
        "two_loans" => ContractSpec::new("Cl", "client_two_loans", two_loans(&["L1", "L2"], &[100, 200], &[100, 200]), 0),
        "malicious" => ContractSpec::new(
            "Cl",
            "client_malicious",
            Value::rec([("lender", Value::addr("L1")), ("amount", Value::Amt(100)), ("sink", Value::addr("S"))]),
            0,
        ),
        "underpay" => ContractSpec::new("Cl", "client_two_loans", two_loans(&["L1", "L2"], &[100, 200], &[100, 150]), 0),
        "fee" => {
            client_balance = 1;
            ContractSpec::new("Cl", "client_two_loans", two_loans(&["L1", "L2"], &[100, 200], &[101, 200]), 0)
        }
        "single_loan" => ContractSpec::new("Cl", "client_two_loans", two_loans(&["L2"], &[200], &[200]), 0),
        "deposit" => {
            tx = TxSpec { money: 50, ..TxSpec::new("L1", "receive", Value::Unit) };
            ContractSpec::new("Cl", "client_two_loans", two_loans(&["L1", "L2"], &[100, 200], &[100, 200]), 0)
        }
        "overborrow" => ContractSpec::new("Cl", "client_two_loans", two_loans(&["L1"], &[150], &[150]), 0),
        _ => return None,
    };
    let client = ContractSpec { balance: client_balance, ..client };
    Some(ScenarioSpec {
        name: Some(format!("{case} vs {}", lender.name)),
        engine: lender.engine.clone(),
        contracts: vec![
            ContractSpec::new("L1", &lender.builtin, Value::Unit, 100),
            ContractSpec::new("L2", &lender.builtin, Value::Unit, 200),
            client,
            ContractSpec::new("S", "invest_sink", Value::Unit, 0),
        ],
        externals: vec![ExternalSpec { addr: Address::new("u"), balance: 1_000 }],
        transactions: vec![tx],
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashloanRow {
    pub case: String,
    pub variant: String,
    pub outcome: OutcomeSummary,
    pub lenders_before: Vec<Amt>,
    pub lenders_after: Vec<Amt>,
    /// Total supply unchanged (trivially true on abort).
    pub conserved: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashloanSuite {
    pub rows: Vec<FlashloanRow>,
    pub expectations: Vec<Expectation>,
}

impl FlashloanSuite {
    pub fn row(&self, case: &str, variant: &str) -> Option<&FlashloanRow> {
        self.rows.iter().find(|r| r.case == case && r.variant == variant)
    }

    pub fn holds(&self) -> bool {
        self.expectations.iter().all(|e| e.holds)
    }

    /// Cases on which the correct variants do not all agree.
    pub fn disagreements(&self) -> Vec<String> {
        let correct: Vec<String> = correct_variants().into_iter().map(|v| v.name).collect();
        client_cases()
            .into_iter()
            .filter(|c| {
                let verdicts: Vec<bool> = self
                    .rows
                    .iter()
                    .filter(|r| r.case == c.name && correct.contains(&r.variant))
                    .map(|r| r.outcome.committed)
                    .collect();
                verdicts.windows(2).any(|w| w[0] != w[1])
            })
            .map(|c| c.name)
            .collect()
    }

    /// Agreement table: one line per case, one column per variant.
    pub fn to_text(&self) -> String {
        let mut variants: Vec<String> = correct_variants().into_iter().map(|v| v.name).collect();
        variants.push(naive_variant().name);
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "case");
        for v in &variants {
            let _ = write!(s, " {v:>14}");
        }
        s.push('\n');
        for c in client_cases() {
            let _ = write!(s, "{:<12}", c.name);
            for v in &variants {
                let cell = match self.row(&c.name, v) {
                    Some(r) if r.outcome.committed => "commit".to_string(),
                    Some(r) => r.outcome.reason.as_ref().map_or("abort", |x| x.kind()).to_string(),
                    None => "-".into(),
                };
                let _ = write!(s, " {cell:>14}");
            }
            s.push('\n');
        }
        for e in &self.expectations {
            let _ = writeln!(s, "[{}] {}", if e.holds { "ok" } else { "FAILED" }, e.claim);
        }
        s
    }
}

fn run_row(case: &ClientCase, v: &LenderVariant) -> Result<FlashloanRow, ScenarioError> {
    let spec = flashloan_scenario(&case.name, v).expect("known case");
    let sc = Scenario::from_spec(spec)?;
    let out = sc.run()?;
    let run = &out.runs[0];
    let lenders = ["L1", "L2"].map(Address::new);
    let before: Vec<Amt> = lenders.iter().map(|a| sc.initial.balance(a)).collect();
    let after: Vec<Amt> = lenders.iter().map(|a| out.final_state.balance(a)).collect();
    Ok(FlashloanRow {
        case: case.name.clone(),
        variant: v.name.clone(),
        outcome: run.outcome.summary(),
        lenders_before: before,
        lenders_after: after,
        conserved: sc.initial.total_supply() == out.final_state.total_supply(),
    })
}

pub fn run_flashloan_suite() -> Result<FlashloanSuite, ScenarioError> {
    let mut rows = Vec::new();
    let mut variants = correct_variants();
    variants.push(naive_variant());
    for c in client_cases() {
        for v in &variants {
            rows.push(run_row(&c, v)?);
        }
    }
    let mut suite = FlashloanSuite { rows: rows.clone(), expectations: Vec::new() };
    let mut expect = |claim: String, holds: bool| suite.expectations.push(Expectation { claim, holds });

    let correct: Vec<String> = correct_variants().into_iter().map(|v| v.name).collect();
    for c in client_cases() {
        for r in rows.iter().filter(|r| r.case == c.name && correct.contains(&r.variant)) {
            expect(
                format!("{} / {}: {} (got {})", c.name, r.variant, if c.expect_commit { "commits" } else { "aborts" }, r.outcome),
                r.outcome.committed == c.expect_commit,
            );
        }
    }
    let safe = rows
        .iter()
        .filter(|r| r.outcome.committed)
        .all(|r| r.lenders_after.iter().zip(&r.lenders_before).all(|(a, b)| a >= b));
    expect("no committed run lowers a lender's balance".into(), safe);
    expect("every run conserves the total supply".into(), rows.iter().all(|r| r.conserved));
    let naive = rows.iter().find(|r| r.case == "two_loans" && r.variant == "naive/dfs");
    expect(
        "the naive lender refuses the honest two-loan client".into(),
        naive.is_some_and(|r| !r.outcome.committed),
    );
    let trmon = rows.iter().find(|r| r.case == "two_loans" && r.variant == "trmon/dfs");
    expect(
        "the monitored lenders end the honest two-loan run with unchanged balances".into(),
        trmon.is_some_and(|r| r.outcome.committed && r.lenders_after == r.lenders_before),
    );
    let disagreements = suite.disagreements();
    suite.expectations.push(Expectation {
        claim: format!("all correct lenders agree on every case (disagreements: {disagreements:?})"),
        holds: disagreements.is_empty(),
    });
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_holds() {
        let s = run_flashloan_suite().unwrap();
        assert!(s.holds(), "{}", s.to_text());
    }

    #[test]
    fn unknown_case_has_no_scenario() {
        assert!(flashloan_scenario("nope", &naive_variant()).is_none());
    }
}
