//! Executable counter-examples. Each report embeds the traces it argues
//! from, and every observational-equivalence claim in it is recomputed
//! from those traces by [`CounterexampleReport::verify`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::builtins::plan_call;
use super::obs::{check_obs_window, ObsCheck};
use super::{ContractSpec, ExternalSpec, Scenario, ScenarioError, ScenarioSpec};
use crate::engine::{EngineConfig, MonitorMode, TxRun};
use crate::mechanisms::Mechanism;
use crate::model::{AbortReason, Operation, OutcomeSummary, RecordKind, Trace};
use crate::value::{Address, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub name: String,
    pub engine: EngineConfig,
    pub outcome: OutcomeSummary,
    /// Pending queue before the first operation and after each one, as
    /// `dest.method` labels.
    pub queues: Vec<Vec<String>>,
    pub trace: Trace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsClaim {
    pub left: String,
    pub right: String,
    pub expect_equal: bool,
    pub check: ObsCheck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub claim: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub name: String,
    pub traces: Vec<NamedTrace>,
    pub obs_claims: Vec<ObsClaim>,
    pub expectations: Vec<Expectation>,
    pub conclusion: String,
}

/// Queue states of a trace: before the first operation, then after each.
pub fn queue_shapes(trace: &Trace) -> Vec<Vec<String>> {
    let labels = |q: &[Operation]| q.iter().map(Operation::label).collect::<Vec<_>>();
    let mut ops = trace.of_kind(RecordKind::Op);
    let mut out = Vec::new();
    if let Some(first) = ops.next() {
        out.push(labels(&first.queue_before));
        out.push(labels(&first.queue_after));
    }
    out.extend(ops.map(|r| labels(&r.queue_after)));
    out
}

fn starts_with(shapes: &[Vec<String>], expected: &[&[&str]]) -> bool {
    shapes.len() >= expected.len() && expected.iter().zip(shapes).all(|(e, s)| s.iter().map(String::as_str).eq(e.iter().copied()))
}

impl CounterexampleReport {
    fn new(name: &str) -> Self {
        CounterexampleReport {
            name: name.into(),
            traces: Vec::new(),
            obs_claims: Vec::new(),
            expectations: Vec::new(),
            conclusion: String::new(),
        }
    }

    pub fn trace(&self, name: &str) -> Option<&NamedTrace> {
        self.traces.iter().find(|t| t.name == name)
    }

    fn add(&mut self, name: impl Into<String>, run: &TxRun) {
        self.traces.push(NamedTrace {
            name: name.into(),
            engine: run.config.clone(),
            outcome: run.outcome.summary(),
            queues: queue_shapes(&run.trace),
            trace: run.trace.clone(),
        });
    }

    fn outcome(&self, name: &str) -> OutcomeSummary {
        self.trace(name).map(|t| t.outcome.clone()).expect("trace recorded")
    }

    fn expect(&mut self, claim: impl Into<String>, holds: bool) {
        self.expectations.push(Expectation { claim: claim.into(), holds });
    }

    fn expect_queues(&mut self, name: &str, expected: &[&[&str]]) {
        let shown: Vec<String> = expected.iter().map(|q| format!("[{}]", q.join(","))).collect();
        let holds = self.trace(name).is_some_and(|t| starts_with(&t.queues, expected));
        self.expect(format!("{name}: queue evolves {}", shown.join(" -> ")), holds);
    }

    fn expect_outcome(&mut self, name: &str, want: impl Fn(&OutcomeSummary) -> bool, what: &str) {
        let got = self.outcome(name);
        self.expect(format!("{name}: {what} (got {got})"), want(&got));
    }

    #[allow(clippy::too_many_arguments)]
    fn obs(&mut self, left: &str, right: &str, subject: &str, start_l: usize, start_r: usize, len: usize, expect_equal: bool) {
        let (a, b) = (&self.trace(left).expect("left trace").trace, &self.trace(right).expect("right trace").trace);
        let check = check_obs_window(a, b, &Address::new(subject), start_l, start_r, len);
        self.obs_claims.push(ObsClaim { left: left.into(), right: right.into(), expect_equal, check });
    }

    /// Recomputes every observational claim from the embedded traces and
    /// checks every expectation.
    pub fn verify(&self) -> bool {
        let claims_ok = self.obs_claims.iter().all(|c| {
            let (Some(a), Some(b)) = (self.trace(&c.left), self.trace(&c.right)) else {
                return false;
            };
            let again = check_obs_window(&a.trace, &b.trace, &c.check.subject, c.check.start_a, c.check.start_b, c.check.len);
            again == c.check && again.equal == c.expect_equal
        });
        claims_ok && self.expectations.iter().all(|e| e.holds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Human-readable summary; traces are summarized by their queues.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {} ==", self.name);
        for t in &self.traces {
            let _ = writeln!(s, "trace {:<28} {}", t.name, t.outcome);
            for q in t.queues.iter().take(6) {
                let _ = writeln!(s, "    [{}]", q.join(", "));
            }
            if t.queues.len() > 6 {
                let _ = writeln!(s, "    ... {} more queue states", t.queues.len() - 6);
            }
        }
        for c in &self.obs_claims {
            let verdict = if c.check.equal { "equal" } else { "differ" };
            let _ = write!(
                s,
                "obs {} {}#{}..{} vs {}#{}..{}: {verdict} (expected {})",
                c.check.subject,
                c.left,
                c.check.start_a,
                c.check.start_a + c.check.len,
                c.right,
                c.check.start_b,
                c.check.start_b + c.check.len,
                if c.expect_equal { "equal" } else { "differ" },
            );
            if let Some(d) = &c.check.divergence {
                let _ = write!(s, " at position {} on {}: {} vs {}", d.position, d.field, d.left, d.right);
            }
            s.push('\n');
        }
        for e in &self.expectations {
            let _ = writeln!(s, "[{}] {}", if e.holds { "ok" } else { "FAILED" }, e.claim);
        }
        let _ = writeln!(s, "conclusion: {}", self.conclusion);
        let _ = writeln!(s, "verified: {}", self.verify());
        s
    }
}

// ---------------------------------------------------------------------------
// Fixtures

const USER: &str = "u";

fn ext(dest: &str, method: &str, param: Value) -> Operation {
    Operation::call(dest, method, param).from_src(USER)
}

fn plan(entries: &[(&str, &[(&str, &str)])]) -> Value {
    Value::rec(entries.iter().map(|(m, calls)| {
        (m.to_string(), Value::Seq(calls.iter().map(|(d, meth)| plan_call(d, meth)).collect()))
    }))
}

fn bench(engine: EngineConfig, contracts: Vec<ContractSpec>) -> Result<Scenario, ScenarioError> {
    Scenario::from_spec(ScenarioSpec {
        name: None,
        engine,
        contracts,
        externals: vec![ExternalSpec { addr: Address::new(USER), balance: 0 }],
        transactions: Vec::new(),
    })
}

fn run(sc: &Scenario, ops: Vec<Operation>) -> Result<TxRun, ScenarioError> {
    Ok(sc.engine().run_ops(&sc.initial, ops, sc.spec.engine.gas_limit)?)
}

/// Runs one-operation transactions back to back.
fn run_seq(sc: &Scenario, ops: Vec<Operation>) -> Result<Vec<TxRun>, ScenarioError> {
    let g = sc.spec.engine.gas_limit;
    Ok(sc.engine().run_sequence(&sc.initial, ops.into_iter().map(|o| (vec![o], g)))?.1)
}

fn is_term_fail(o: &OutcomeSummary, who: &str) -> bool {
    o.reason == Some(AbortReason::MonitorTermFail(Address::new(who)))
}

fn committed(o: &OutcomeSummary) -> bool {
    o.committed
}

fn gas_exhausted(o: &OutcomeSummary) -> bool {
    o.reason == Some(AbortReason::GasExhausted)
}

/// `B` forwards to `A` once (`o1`) or twice (`o2`), then calls `C`.
fn dfs_once_plan() -> Value {
    plan(&[("o1", &[("A", "call"), ("C", "call")]), ("o2", &[("A", "call"), ("A", "call"), ("C", "call")])])
}

fn only_once_bench(engine: EngineConfig, a: ContractSpec) -> Result<Scenario, ScenarioError> {
    bench(
        engine,
        vec![
            a,
            ContractSpec::new("B", "forwarder_B", Value::rec([("plan", dfs_once_plan())]), 0),
            ContractSpec::new("C", "sink_C", Value::Unit, 0),
            ContractSpec::new("D", "flagger", Value::Unit, 0),
        ],
    )
}

fn monitored_a(probe: &[&str]) -> ContractSpec {
    let probe = Value::Seq(probe.iter().map(|m| Value::text(*m)).collect());
    ContractSpec::new("A", "once_monitored_A", Value::rec([("probe", probe)]), 0)
}

// ---------------------------------------------------------------------------
// Reports

/// DFS, only-once monitor: even with `first` and `queue` the first
/// invocation of `A` sees the same thing whether `A` is called once or
/// twice, while the monitor must reject one and accept the other.
pub fn run_dfs_only_once() -> Result<CounterexampleReport, ScenarioError> {
    let cfg = EngineConfig::dfs(1_000)
        .with_mechanisms([Mechanism::First, Mechanism::Queue])
        .with_monitors(MonitorMode::Transaction);
    let sc = only_once_bench(cfg, monitored_a(&["first", "queue"]))?;
    let mut r = CounterexampleReport::new("dfs_only_once");
    r.add("o1", &run(&sc, vec![ext("B", "o1", Value::Unit)])?);
    r.add("o2", &run(&sc, vec![ext("B", "o2", Value::Unit)])?);

    r.expect_queues("o1", &[&["B.o1"], &["A.call", "C.call"]]);
    r.expect_queues("o2", &[&["B.o2"], &["A.call", "A.call", "C.call"]]);
    r.obs("o1", "o2", "A", 0, 0, 1, true);
    r.obs("o1", "o2", "A", 0, 0, 2, false);
    let a1 = r.trace("o1").and_then(|t| t.trace.observations(&Address::new("A")).next().map(|(_, o)| o.clone()));
    let readings = a1.map(|o| o.mechanism_readings).unwrap_or_default();
    r.expect(
        "first invocation of A reads first = true and queue = false (C is pending)",
        readings.get("first") == Some(&Value::Bool(true)) && readings.get("queue") == Some(&Value::Bool(false)),
    );
    r.expect_outcome("o1", |o| is_term_fail(o, "A"), "monitor rejects a single call");
    r.expect_outcome("o2", committed, "monitor accepts two calls");
    r.conclusion = "A's first invocation is observationally identical in both runs, and in the single-call run it \
                    is the only chance A has to act, so no contract-level check using first and queue can reproduce \
                    the monitor's verdicts under DFS."
        .into();
    Ok(r)
}

/// Candidate fail-bit policies under DFS with `fail` and `queue`; each one
/// misjudges one of `o1`, `o2`, or the transaction starting with both
/// `[o2; o1]`.
pub fn run_dfs_fail_queue() -> Result<CounterexampleReport, ScenarioError> {
    let mut r = CounterexampleReport::new("dfs_fail_queue");
    let native_cfg = EngineConfig::dfs(1_000).with_monitors(MonitorMode::Transaction);
    let native = only_once_bench(native_cfg, monitored_a(&[]))?;
    let o1 = || ext("B", "o1", Value::Unit);
    let o2 = || ext("B", "o2", Value::Unit);

    r.add("monitor/o1", &run(&native, vec![o1()])?);
    r.add("monitor/o2", &run(&native, vec![o2()])?);
    r.add("monitor/[o2;o1]", &run(&native, vec![o2(), o1()])?);
    let seq = run_seq(&native, vec![o2(), o1()])?;
    r.add("monitor/o2 then o1", &seq[0]);
    r.add("monitor/o1 after o2", &seq[1]);
    r.expect_outcome("monitor/o1", |o| is_term_fail(o, "A"), "monitor rejects one call");
    r.expect_outcome("monitor/o2", committed, "monitor accepts two calls");
    r.expect_outcome("monitor/[o2;o1]", committed, "monitor accepts three calls in one transaction");
    r.expect_outcome("monitor/o2 then o1", committed, "first of two transactions commits");
    r.expect_outcome("monitor/o1 after o2", |o| is_term_fail(o, "A"), "second of two transactions aborts");

    let cfg = EngineConfig::dfs(1_000).with_mechanisms([Mechanism::Fail, Mechanism::Queue]);
    let policies = [("idle", "o1"), ("fail", "o2"), ("set_true", "o2"), ("toggle", "[o2;o1]"), ("delegate", "[o2;o1]")];
    for (policy, misjudged) in policies {
        let params = Value::rec([
            ("policy", Value::text(policy)),
            ("read_queue", Value::Bool(true)),
            ("flagger", Value::addr("D")),
        ]);
        let sc = only_once_bench(cfg.clone(), ContractSpec::new("A", "candidate_fail_A", params, 0))?;
        let name = |s: &str| format!("{policy}/{s}");
        r.add(name("o1"), &run(&sc, vec![o1()])?);
        r.add(name("o2"), &run(&sc, vec![o2()])?);
        r.add(name("[o2;o1]"), &run(&sc, vec![o2(), o1()])?);
        let seq = run_seq(&sc, vec![o2(), o1()])?;
        r.add(name("o1 after o2"), &seq[1]);

        r.obs(&name("o1"), &name("o2"), "A", 0, 0, 1, true);
        let wrong: Vec<&str> = ["o1", "o2", "[o2;o1]"]
            .into_iter()
            .filter(|s| r.outcome(&name(s)).committed != r.outcome(&format!("monitor/{s}")).committed)
            .collect();
        r.expect(
            format!("policy {policy} misjudges {misjudged} (misjudged: {})", wrong.join(", ")),
            wrong.contains(&misjudged),
        );
        if matches!(policy, "toggle" | "delegate") {
            // o1's call to A inside [o2;o1] runs in the configuration a
            // separate o1 transaction sees after o2 committed
            r.obs(&name("[o2;o1]"), &name("o1 after o2"), "A", 2, 0, 1, true);
        }
    }
    r.expect_queues("delegate/o1", &[&["B.o1"], &["A.call", "C.call"], &["D.toggle", "C.call"]]);
    r.expect_queues("delegate/o2", &[&["B.o2"], &["A.call", "A.call", "C.call"], &["D.toggle", "A.call", "C.call"]]);
    r.conclusion = "Every candidate must flag o1's lone call to A without failing outright, so it sets a fail bit \
                    that a later call clears; the call to A that o1 contributes to [o2;o1] then behaves as in a \
                    lone o1 and leaves the bit set, aborting a transaction the monitor accepts."
        .into();
    Ok(r)
}

/// `B.f` calls `A` then `C`; `B.g` only calls `A`. `A` wants to fail iff
/// something is pending after it.
fn queue_gap(
    name: &str,
    base: EngineConfig,
) -> Result<CounterexampleReport, ScenarioError> {
    let mut r = CounterexampleReport::new(name);
    let forwarder = Value::rec([("plan", plan(&[("f", &[("A", "call"), ("C", "call")]), ("g", &[("A", "call")])]))]);
    for (label, probe) in [("blind", false), ("queue", true)] {
        let mut cfg = base.clone();
        if probe {
            cfg.mechanisms.insert(Mechanism::Queue);
        }
        let sc = bench(
            cfg,
            vec![
                ContractSpec::new("A", "queue_prober_A", Value::rec([("probe", Value::Bool(probe))]), 0),
                ContractSpec::new("B", "forwarder_B", forwarder.clone(), 0),
                ContractSpec::new("C", "sink_C", Value::Unit, 0),
            ],
        )?;
        r.add(format!("{label}/o1"), &run(&sc, vec![ext("B", "f", Value::Unit)])?);
        r.add(format!("{label}/o2"), &run(&sc, vec![ext("B", "g", Value::Unit)])?);
        r.obs(&format!("{label}/o1"), &format!("{label}/o2"), "A", 0, 0, 1, !probe);
    }
    r.expect_queues("blind/o1", &[&["B.f"], &["A.call", "C.call"]]);
    r.expect_queues("blind/o2", &[&["B.g"], &["A.call"]]);
    let (b1, b2) = (r.outcome("blind/o1"), r.outcome("blind/o2"));
    r.expect("without queue info both runs get the same verdict", b1 == b2);
    r.expect_outcome("queue/o1", |o| matches!(o.reason, Some(AbortReason::ContractFail(ref a, _)) if a.as_str() == "A"), "prober aborts while C is pending");
    r.expect_outcome("queue/o2", committed, "prober accepts when nothing is pending");
    Ok(r)
}

/// DFS without `queue`: `A`'s call is identical whether or not `C` is
/// still pending.
pub fn run_dfs_no_queue() -> Result<CounterexampleReport, ScenarioError> {
    let mut r = queue_gap("dfs_no_queue", EngineConfig::dfs(1_000))?;
    r.conclusion = "Without queue info A's only invocation is observationally identical in both runs, so A cannot \
                    fail in exactly the run where C is still pending; with queue info the prober separates them."
        .into();
    Ok(r)
}

/// BFS with storage hookups but no `queue`: the same indistinguishability,
/// and the hookup of `A` cannot help since `A` ran once in both.
pub fn run_bfs_queue_gap() -> Result<CounterexampleReport, ScenarioError> {
    let mut r = queue_gap("bfs_queue_gap", EngineConfig::bfs(1_000).with_mechanisms([Mechanism::UStore]))?;
    r.conclusion = "Under BFS with unbounded hookups but without queue info, A's only invocation (and so its hookup) \
                    behaves identically in both runs; enabling queue info makes the prober abort exactly the run \
                    with the pending call to C."
        .into();
    Ok(r)
}

/// BFS, only-once monitor: a recurring "wait for another call" strategy
/// accepts `t_k` and rejects `t`, but a third call arriving after its
/// recurring check stopped is indistinguishable from a lone call.
pub fn run_bfs_only_once() -> Result<CounterexampleReport, ScenarioError> {
    let mut r = CounterexampleReport::new("bfs_only_once");
    let start = |steps: &[Option<i64>]| {
        let v = steps.iter().map(|s| s.map_or(Value::Unit, Value::Int)).collect();
        ext("B", "start", Value::Seq(v))
    };
    let t = || start(&[None]);
    let tk = |k: i64| start(&[Some(k), None]);
    let t0p = || start(&[Some(0), None, Some(0)]);
    let b = ContractSpec::new("B", "recursive_f", Value::rec([("target", Value::addr("A"))]), 0);

    let native = bench(EngineConfig::bfs(200).with_monitors(MonitorMode::Transaction), vec![monitored_a(&[]), b.clone()])?;
    let strat = bench(
        EngineConfig::bfs(200),
        vec![ContractSpec::new("A", "recurring_once_A", Value::Unit, 0), b],
    )?;
    for (who, sc) in [("monitor", &native), ("strategy", &strat)] {
        r.add(format!("{who}/t"), &run(sc, vec![t()])?);
        for k in 0..3 {
            r.add(format!("{who}/t{k}"), &run(sc, vec![tk(k)])?);
        }
        r.add(format!("{who}/t'0"), &run(sc, vec![t0p()])?);
    }
    let seq = run_seq(&strat, vec![tk(0), t()])?;
    r.add("strategy/t after t0", &seq[1]);

    r.expect_outcome("monitor/t", |o| is_term_fail(o, "A"), "monitor rejects t");
    for k in 0..3 {
        r.expect_outcome(&format!("monitor/t{k}"), committed, "monitor accepts");
        r.expect_outcome(&format!("strategy/t{k}"), committed, "strategy accepts");
    }
    r.expect_outcome("monitor/t'0", committed, "monitor accepts three calls");
    r.expect_outcome("strategy/t", gas_exhausted, "strategy rejects t by gas exhaustion");
    r.expect_outcome("strategy/t'0", gas_exhausted, "strategy wrongly rejects t'0 by gas exhaustion");

    r.expect_queues("strategy/t", &[&["B.start"], &["A.call"], &["A.check"], &["A.check"]]);
    r.expect_queues("strategy/t0", &[&["B.start"], &["B.f", "A.call"], &["A.call", "A.call"], &["A.call", "A.check"], &["A.check"], &[]]);
    r.expect_queues(
        "strategy/t1",
        &[&["B.start"], &["B.f", "A.call"], &["A.call", "B.f"], &["B.f", "A.check"], &["A.check", "A.call"]],
    );
    r.expect_queues(
        "strategy/t'0",
        &[&["B.start"], &["B.f", "A.call", "B.f"], &["A.call", "B.f", "A.call"], &["B.f", "A.call", "A.check"], &["A.call", "A.check", "A.call"]],
    );
    for k in 0..3 {
        r.obs("strategy/t", &format!("strategy/t{k}"), "A", 0, 0, 1, true);
    }
    // a3 in t'0 (A's invocations there: a1, a2, the stopped check, a3)
    // against a1 in a t run after t0 committed
    r.obs("strategy/t'0", "strategy/t after t0", "A", 3, 0, 1, true);
    r.conclusion = "The first call to A is identical in t and every t_k, forcing a recurring check that waits for a \
                    second call. In t'0 the third call runs after that check stopped, in the same configuration as \
                    a lone call, so it starts a check that never ends and the transaction runs out of gas although \
                    the monitor accepts it. Our strategy stops the check immediately; a check that lingers for a \
                    bounded number of steps is defeated by a longer recursion in the same way."
        .into();
    Ok(r)
}

pub const REPORT_NAMES: &[&str] = &["dfs_only_once", "dfs_fail_queue", "dfs_no_queue", "bfs_only_once", "bfs_queue_gap"];

pub fn report_by_name(name: &str) -> Option<Result<CounterexampleReport, ScenarioError>> {
    Some(match name {
        "dfs_only_once" => run_dfs_only_once(),
        "dfs_fail_queue" => run_dfs_fail_queue(),
        "dfs_no_queue" => run_dfs_no_queue(),
        "bfs_only_once" => run_bfs_only_once(),
        "bfs_queue_gap" => run_bfs_queue_gap(),
        _ => return None,
    })
}

pub fn all_reports() -> Result<Vec<CounterexampleReport>, ScenarioError> {
    REPORT_NAMES.iter().map(|n| report_by_name(n).expect("listed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_verified(r: &CounterexampleReport) {
        assert!(r.verify(), "{}", r.to_text());
    }

    #[test]
    fn every_report_verifies() {
        for r in all_reports().unwrap() {
            assert_verified(&r);
        }
    }

    #[test]
    fn tampered_claim_fails_verification() {
        let mut r = run_dfs_only_once().unwrap();
        r.obs_claims[0].expect_equal = false;
        assert!(!r.verify());
        let mut r = run_dfs_only_once().unwrap();
        r.traces[1].trace.records.truncate(1);
        assert!(!r.verify());
    }

    #[test]
    fn report_json_round_trip() {
        let r = run_dfs_no_queue().unwrap();
        let back = CounterexampleReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(back.verify());
    }
}
