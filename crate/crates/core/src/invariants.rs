//! Laws every trace must satisfy, checked from the records alone.
//!
//! [`check_trace`] looks at one transaction; [`check_scenario`] adds the
//! laws that need re-execution (determinism, atomicity, conservation).
//! Debug builds of the engine run [`check_trace`] on every trace they
//! produce.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, MonitorMode, SchedulerKind};
use crate::model::{Operation, Outcome, RecordKind, StepRecord, Trace};
use crate::scenarios::{Scenario, ScenarioError};
use crate::value::Address;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Law {
    Indexing,
    QueueDiscipline,
    Gas,
    Bracketing,
    InitOnce,
    TermAfterDrain,
    Conservation,
    Atomicity,
    Determinism,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub law: Law,
    pub record: Option<u64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            Some(i) => write!(f, "{:?} at record {i}: {}", self.law, self.detail),
            None => write!(f, "{:?}: {}", self.law, self.detail),
        }
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, law: Law, r: Option<&StepRecord>, detail: impl Into<String>) {
        self.out.push(Violation { law, record: r.map(|r| r.index), detail: detail.into() });
    }
}

fn labels(q: &[Operation]) -> String {
    let v: Vec<String> = q.iter().map(Operation::label).collect();
    format!("[{}]", v.join(","))
}

fn is(r: Option<&StepRecord>, kind: RecordKind, subject: &Address) -> bool {
    r.is_some_and(|r| r.kind == kind && &r.subject == subject)
}

/// What a trace needs to be judged on its own.
#[derive(Clone, Copy, Debug)]
pub struct TraceSetting {
    pub scheduler: SchedulerKind,
    pub monitor_mode: MonitorMode,
    pub aborted: bool,
}

impl TraceSetting {
    pub fn new(config: &EngineConfig, aborted: bool) -> Self {
        TraceSetting { scheduler: config.scheduler, monitor_mode: config.monitor_mode, aborted }
    }
}

/// Checks record indexing, the scheduler's queue discipline, gas
/// accounting and, when monitors are on, bracketing, init-once and
/// term-after-drain. `monitored` tells which addresses carry monitor hooks.
pub fn check_trace(trace: &Trace, setting: TraceSetting, monitored: &dyn Fn(&Address) -> bool) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };
    let rs = &trace.records;
    let at = |i: usize| rs.get(i);
    let halted_at = |i: usize| setting.aborted && i + 1 == rs.len();

    for (i, r) in rs.iter().enumerate() {
        if r.index != i as u64 {
            c.fail(Law::Indexing, Some(r), format!("index {} at position {i}", r.index));
        }
        if let Some(prev) = i.checked_sub(1).and_then(at) {
            if prev.queue_after != r.queue_before {
                c.fail(Law::QueueDiscipline, Some(r), "queue differs from the previous record's");
            }
            if prev.gas_after != r.gas_before {
                c.fail(Law::Gas, Some(r), format!("gas {} after {} left", r.gas_before, prev.gas_after));
            }
        }
        if r.gas_after > r.gas_before {
            c.fail(Law::Gas, Some(r), "gas increased");
        }

        if r.kind != RecordKind::Op {
            if r.queue_before != r.queue_after || !r.emitted.is_empty() || r.gas_before != r.gas_after {
                c.fail(Law::QueueDiscipline, Some(r), format!("{:?} record changed queue or gas", r.kind));
            }
            continue;
        }

        let Some((head, rest)) = r.queue_before.split_first() else {
            c.fail(Law::QueueDiscipline, Some(r), "operation executed from an empty queue");
            continue;
        };
        if r.executed.as_ref() != Some(head) {
            c.fail(Law::QueueDiscipline, Some(r), "executed operation is not the head of the queue");
        }
        let expected: Vec<Operation> = match setting.scheduler {
            SchedulerKind::Dfs => r.emitted.iter().chain(rest).cloned().collect(),
            SchedulerKind::Bfs => rest.iter().chain(&r.emitted).cloned().collect(),
        };
        if r.queue_after != expected {
            c.fail(
                Law::QueueDiscipline,
                Some(r),
                format!("{:?} expects {} but found {}", setting.scheduler, labels(&expected), labels(&r.queue_after)),
            );
        }
        let used = r.gas_before - r.gas_after.min(r.gas_before);
        if used != 1 + r.emitted.len() as u64 {
            c.fail(Law::Gas, Some(r), format!("used {used} gas for {} emitted operations", r.emitted.len()));
        }
    }

    let monitor_kinds = [RecordKind::Init, RecordKind::Begin, RecordKind::End, RecordKind::Term];
    let allowed: &[RecordKind] = match setting.monitor_mode {
        MonitorMode::None => &[],
        MonitorMode::Operation => &[RecordKind::Begin, RecordKind::End],
        MonitorMode::Transaction => &monitor_kinds,
    };
    for r in rs.iter().filter(|r| monitor_kinds.contains(&r.kind) && !allowed.contains(&r.kind)) {
        c.fail(Law::Bracketing, Some(r), format!("{:?} record with monitor mode {:?}", r.kind, setting.monitor_mode));
    }

    if setting.monitor_mode != MonitorMode::None {
        for (i, r) in rs.iter().enumerate() {
            let s = &r.subject;
            match r.kind {
                RecordKind::Op if monitored(s) && !halted_at(i) => {
                    if !is(i.checked_sub(1).and_then(at), RecordKind::Begin, s) {
                        c.fail(Law::Bracketing, Some(r), format!("{s} executed without begin"));
                    }
                    if !is(at(i + 1), RecordKind::End, s) {
                        c.fail(Law::Bracketing, Some(r), format!("{s} executed without end"));
                    }
                }
                RecordKind::Begin if !is(at(i + 1), RecordKind::Op, s) => {
                    c.fail(Law::Bracketing, Some(r), "begin not followed by its operation")
                }
                RecordKind::End if !is(i.checked_sub(1).and_then(at), RecordKind::Op, s) => {
                    c.fail(Law::Bracketing, Some(r), "end not preceded by its operation")
                }
                RecordKind::Begin | RecordKind::End if !monitored(s) => {
                    c.fail(Law::Bracketing, Some(r), format!("{s} has no monitor"))
                }
                _ => {}
            }
        }
    }

    if setting.monitor_mode == MonitorMode::Transaction {
        let mut inits = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, r) in rs.iter().enumerate() {
            let s = &r.subject;
            match r.kind {
                RecordKind::Init => {
                    if !seen.insert(s.clone()) {
                        c.fail(Law::InitOnce, Some(r), format!("second init of {s}"));
                    }
                    inits.push(s.clone());
                    let next = at(i + 1);
                    if !(halted_at(i) || is(next, RecordKind::Begin, s) || is(next, RecordKind::Op, s)) {
                        c.fail(Law::InitOnce, Some(r), "init not immediately before the contract's first step");
                    }
                }
                RecordKind::Op | RecordKind::Begin if monitored(s) && !seen.contains(s) => {
                    c.fail(Law::InitOnce, Some(r), format!("{s} stepped before its init"));
                }
                _ => {}
            }
        }

        let last_op = rs.iter().rposition(|r| r.kind == RecordKind::Op);
        let end_phase = [RecordKind::Hookup, RecordKind::FailBitCheck, RecordKind::Term];
        let mut terms = Vec::new();
        let mut term_started = false;
        for (i, r) in rs.iter().enumerate() {
            if !end_phase.contains(&r.kind) {
                continue;
            }
            if last_op.is_some_and(|l| i < l) || !r.queue_before.is_empty() {
                c.fail(Law::TermAfterDrain, Some(r), format!("{:?} before the queue drained", r.kind));
            }
            if r.kind == RecordKind::Term {
                term_started = true;
                terms.push(r.subject.clone());
            } else if term_started {
                c.fail(Law::TermAfterDrain, Some(r), format!("{:?} after a term", r.kind));
            }
        }
        let prefix = terms.len() <= inits.len() && terms[..] == inits[..terms.len()];
        let complete = setting.aborted || terms == inits;
        if !prefix || !complete {
            c.fail(Law::TermAfterDrain, None, format!("terms {terms:?} against inits {inits:?}"));
        }
    }
    c.out
}

/// Runs `sc` twice and checks every law: [`check_trace`] on each
/// transaction, identical re-runs, conservation of the total supply on
/// every commit, and that aborted transactions leave no mark (replaying
/// only the committed ones reaches the same final state).
pub fn check_scenario(sc: &Scenario) -> Result<Vec<Violation>, ScenarioError> {
    let first = sc.run()?;
    let again = sc.run()?;
    let mut out = Vec::new();
    let mut fail = |law, detail: String| out.push(Violation { law, record: None, detail });

    let traces = |r: &crate::scenarios::ScenarioRun| r.runs.iter().map(|t| t.trace.clone()).collect::<Vec<_>>();
    if traces(&first) != traces(&again) || first.final_state.digest() != again.final_state.digest() {
        fail(Law::Determinism, "re-running the scenario changed its traces or final state".into());
    }

    let monitored = |a: &Address| sc.registry.contract(a).is_some_and(|c| c.monitor().is_some());
    let mut cur = sc.initial.clone();
    let mut committed_ops = Vec::new();
    for (i, run) in first.runs.iter().enumerate() {
        let setting = TraceSetting::new(&sc.spec.engine, !run.outcome.is_committed());
        for mut v in check_trace(&run.trace, setting, &monitored) {
            v.detail = format!("transaction {i}: {}", v.detail);
            out.push(v);
        }
        if let Outcome::Committed(s) = &run.outcome {
            if s.total_supply() != cur.total_supply() {
                out.push(Violation {
                    law: Law::Conservation,
                    record: None,
                    detail: format!("transaction {i}: supply {} became {}", cur.total_supply(), s.total_supply()),
                });
            }
            cur = s.clone();
            let gas = sc.spec.transactions[i].gas_limit.unwrap_or(sc.spec.engine.gas_limit);
            committed_ops.push((vec![sc.operation(i)], gas));
        }
    }
    let (replayed, _) = sc.engine().run_sequence(&sc.initial, committed_ops)?;
    if replayed.digest() != first.final_state.digest() {
        out.push(Violation {
            law: Law::Atomicity,
            record: None,
            detail: "replaying only the committed transactions reaches a different state".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::scenarios::flashloan::{correct_variants, flashloan_scenario};

    fn trmon_run() -> (Scenario, crate::engine::TxRun) {
        let v = correct_variants().into_iter().next().unwrap();
        let sc = Scenario::from_spec(flashloan_scenario("two_loans", &v).unwrap()).unwrap();
        let run = sc.run().unwrap().runs.remove(0);
        (sc, run)
    }

    #[test]
    fn a_real_monitored_trace_is_lawful() {
        let (sc, run) = trmon_run();
        let monitored = |a: &Address| sc.registry.contract(a).is_some_and(|c| c.monitor().is_some());
        assert!(check_trace(&run.trace, TraceSetting::new(&sc.spec.engine, false), &monitored).is_empty());
        assert!(check_scenario(&sc).unwrap().is_empty());
    }

    #[test]
    fn wrong_scheduler_breaks_the_queue_law() {
        let (sc, run) = trmon_run();
        let bfs = TraceSetting::new(&EngineConfig { scheduler: SchedulerKind::Bfs, ..sc.spec.engine.clone() }, false);
        let v = check_trace(&run.trace, bfs, &|_| true);
        assert!(v.iter().any(|v| v.law == Law::QueueDiscipline), "{v:?}");
    }

    #[test]
    fn tampering_is_caught() {
        let (sc, run) = trmon_run();
        let setting = TraceSetting::new(&sc.spec.engine, false);
        let monitored = |a: &Address| sc.registry.contract(a).is_some_and(|c| c.monitor().is_some());
        let laws = |t: &Trace| check_trace(t, setting, &monitored).into_iter().map(|v| v.law).collect::<BTreeSet<_>>();

        let mut t = run.trace.clone();
        let i = t.records.iter().position(|r| r.kind == RecordKind::End).unwrap();
        t.records.remove(i);
        for (k, r) in t.records.iter_mut().enumerate() {
            r.index = k as u64;
        }
        assert!(laws(&t).contains(&Law::Bracketing));

        let mut t = run.trace.clone();
        let i = t.records.iter().position(|r| r.kind == RecordKind::Op && !r.emitted.is_empty()).unwrap();
        t.records[i].gas_after += 1;
        assert!(laws(&t).contains(&Law::Gas));

        let mut t = run.trace.clone();
        let term = t.records.iter().position(|r| r.kind == RecordKind::Term).unwrap();
        let init = t.records[..term].iter().rposition(|r| r.kind == RecordKind::Init).unwrap();
        t.records[init].kind = RecordKind::Term;
        assert!(!laws(&t).is_empty());
    }
}
