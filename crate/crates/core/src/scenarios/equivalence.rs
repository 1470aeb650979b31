//! Seeded differential testing of the transformers: random probe scenarios
//! run natively and through a transformer must give the same verdicts, the
//! same projected storages on commit, and the same operations towards
//! other contracts.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::builtins::{plan_call, probe_script, ProbeMode};
use super::reports::Expectation;
use super::{ContractSpec, ExternalSpec, Scenario, ScenarioError, ScenarioRun, ScenarioSpec, TxSpec};
use crate::engine::{EngineConfig, MonitorMode, SchedulerKind};
use crate::mechanisms::{Mechanism, MechanismSet};
use crate::model::{AbortReason, RecordKind, Trace};
use crate::value::{Address, Value};

pub const DEFAULT_CASES: usize = 200;
const GAS: u64 = 2_000;

/// One native-vs-simulated comparison family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub name: &'static str,
    /// Probe mode of the contracts under test.
    pub mode: ProbeMode,
    /// Transformers applied to them, innermost first.
    pub transforms: &'static [&'static str],
    /// Mechanisms of the simulating engine.
    pub target: &'static [Mechanism],
    /// Schedulers to draw from.
    pub schedulers: &'static [SchedulerKind],
    /// Simulated gas exhaustion stands for a native abort.
    pub gas_is_failure: bool,
}

const BOTH: &[SchedulerKind] = &[SchedulerKind::Dfs, SchedulerKind::Bfs];
const BFS: &[SchedulerKind] = &[SchedulerKind::Bfs];

pub const PAIRS: &[Pair] = &[
    Pair { name: "count_via_first", mode: ProbeMode::Count, transforms: &["sim_count_via_first"], target: &[Mechanism::First], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "first_via_count", mode: ProbeMode::First, transforms: &["sim_first_via_count"], target: &[Mechanism::Count], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "first_via_txmem", mode: ProbeMode::First, transforms: &["sim_first_via_txmem"], target: &[Mechanism::TxMem], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "txmem_via_first", mode: ProbeMode::TxMem, transforms: &["sim_txmem_via_first"], target: &[Mechanism::First], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "bstore_via_first", mode: ProbeMode::BStore, transforms: &["sim_bstore_via_first"], target: &[Mechanism::First], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "first_via_bstore", mode: ProbeMode::First, transforms: &["sim_first_via_bstore"], target: &[Mechanism::BStore], schedulers: BOTH, gas_is_failure: false },
    Pair {
        name: "count_first_round_trip",
        mode: ProbeMode::Count,
        transforms: &["sim_count_via_first", "sim_first_via_count"],
        target: &[Mechanism::Count],
        schedulers: BOTH,
        gas_is_failure: false,
    },
    Pair {
        name: "first_count_round_trip",
        mode: ProbeMode::First,
        transforms: &["sim_first_via_count", "sim_count_via_first"],
        target: &[Mechanism::First],
        schedulers: BOTH,
        gas_is_failure: false,
    },
    Pair { name: "fail_via_ustore", mode: ProbeMode::Fail, transforms: &["sim_fail_via_ustore"], target: &[Mechanism::UStore], schedulers: BOTH, gas_is_failure: false },
    Pair { name: "fail_via_recurring_bfs", mode: ProbeMode::Fail, transforms: &["sim_fail_via_recurring_bfs"], target: &[], schedulers: BFS, gas_is_failure: true },
    Pair { name: "ustore_via_first_bfs", mode: ProbeMode::UStore, transforms: &["sim_ustore_via_first_bfs"], target: &[Mechanism::First], schedulers: BFS, gas_is_failure: true },
    Pair { name: "ustore_via_queue_bfs", mode: ProbeMode::UStore, transforms: &["sim_ustore_via_queue_bfs"], target: &[Mechanism::Queue], schedulers: BFS, gas_is_failure: false },
];

pub fn pair(name: &str) -> Option<&'static Pair> {
    PAIRS.iter().find(|p| p.name == name)
}

fn native_mechanism(mode: ProbeMode) -> Option<Mechanism> {
    match mode {
        ProbeMode::None => None,
        ProbeMode::First => Some(Mechanism::First),
        ProbeMode::Count => Some(Mechanism::Count),
        ProbeMode::TxMem => Some(Mechanism::TxMem),
        ProbeMode::Fail => Some(Mechanism::Fail),
        ProbeMode::BStore => Some(Mechanism::BStore),
        ProbeMode::UStore => Some(Mechanism::UStore),
    }
}

/// A random script: bounded call depth, at most two calls per level.
fn random_script(rng: &mut ChaCha8Rng, addrs: &[Address], mode: ProbeMode, depth: usize) -> Value {
    let delta = rng.gen_range(-3..=3);
    let fail = match (mode, rng.gen_range(0..10)) {
        (ProbeMode::Fail, 0..=1) => Some(true),
        (ProbeMode::Fail, 2..=4) => Some(false),
        _ => None,
    };
    let n = if depth == 0 { 0 } else { rng.gen_range(0..=2) };
    let calls = (0..n)
        .map(|_| {
            let to = addrs.choose(rng).expect("non-empty").clone();
            (to, random_script(rng, addrs, mode, depth - 1))
        })
        .collect();
    probe_script(delta, fail, calls)
}

/// The native scenario of case `case` for `pair`; `seed` fixes everything.
pub fn random_case(pair: &Pair, seed: u64, case: usize) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (case as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = rng.gen_range(2..=4);
    let addrs: Vec<Address> = (0..n).map(|i| Address::new(format!("P{i}"))).collect();
    let contracts = addrs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            // P0 always runs the mode under test
            let mode = if i == 0 || rng.gen_bool(0.7) { pair.mode } else { ProbeMode::None };
            ContractSpec::new(a.as_str(), "probe", Value::rec([("mode", Value::text(mode.name()))]), 0)
        })
        .collect();
    let txs = (0..rng.gen_range(1..=6))
        .map(|_| {
            let dest = addrs.choose(&mut rng).expect("non-empty").clone();
            let script = random_script(&mut rng, &addrs, pair.mode, 3);
            TxSpec { dest, ..TxSpec::new("", "run", script) }
        })
        .collect();
    let scheduler = *pair.schedulers.choose(&mut rng).expect("non-empty");
    let mut engine = EngineConfig::new(scheduler, GAS);
    engine.mechanisms = native_mechanism(pair.mode).into_iter().collect();
    ScenarioSpec {
        name: Some(format!("{} case {case}", pair.name)),
        engine,
        contracts,
        externals: vec![ExternalSpec { addr: Address::new("u"), balance: 0 }],
        transactions: txs,
    }
}

/// The same scenario with every probe under test transformed and the
/// engine switched to the simulating mechanisms.
pub fn simulated(pair: &Pair, native: &ScenarioSpec) -> ScenarioSpec {
    let mut spec = native.clone();
    for c in &mut spec.contracts {
        if c.params.get("mode").and_then(Value::as_text) == Some(pair.mode.name()) {
            c.transform = pair.transforms.iter().map(|s| s.to_string()).collect();
        }
    }
    spec.engine.mechanisms = pair.target.iter().copied().collect::<MechanismSet>();
    spec
}

/// Operations a run executed on behalf of the original contracts, i.e.
/// without the wrappers' own methods.
fn visible_ops(trace: &Trace) -> Vec<String> {
    trace
        .of_kind(RecordKind::Op)
        .filter_map(|r| r.executed.as_ref())
        .filter(|o| !o.method.starts_with("__"))
        .map(|o| format!("{}>{}.{}({}) {}", o.src, o.dest, o.method, o.param, o.money))
        .collect()
}

/// Compares a native and a simulated run transaction by transaction.
pub fn compare_runs(
    pair: &Pair,
    native_sc: &Scenario,
    native: &ScenarioRun,
    sim_sc: &Scenario,
    sim: &ScenarioRun,
) -> Result<(), String> {
    for (i, (n, s)) in native.runs.iter().zip(&sim.runs).enumerate() {
        if n.outcome.is_committed() != s.outcome.is_committed() {
            return Err(format!("tx {i}: native {} vs simulated {}", n.outcome.summary(), s.outcome.summary()));
        }
        if let Some(r) = s.outcome.reason() {
            if *r == AbortReason::GasExhausted && !pair.gas_is_failure && n.outcome.reason() != Some(r) {
                return Err(format!("tx {i}: simulated run exhausted gas"));
            }
        }
        if n.outcome.is_committed() {
            let (vn, vs) = (visible_ops(&n.trace), visible_ops(&s.trace));
            if vn != vs {
                return Err(format!("tx {i}: operations differ\n  native    {vn:?}\n  simulated {vs:?}"));
            }
        }
    }
    for c in &native_sc.spec.contracts {
        let a = native_sc.projected_storage(&native.final_state, &c.addr);
        let b = sim_sc.projected_storage(&sim.final_state, &c.addr);
        if a != b {
            return Err(format!("final storage of {}: native {a} vs simulated {b}", c.addr));
        }
        if native.final_state.balance(&c.addr) != sim.final_state.balance(&c.addr) {
            return Err(format!("final balance of {} differs", c.addr));
        }
    }
    Ok(())
}

/// Runs one random case; `Err` describes the first difference.
pub fn run_case(pair: &Pair, seed: u64, case: usize) -> Result<(), String> {
    let native = random_case(pair, seed, case);
    let sim = simulated(pair, &native);
    let go = |spec: ScenarioSpec| -> Result<(Scenario, ScenarioRun), ScenarioError> {
        let sc = Scenario::from_spec(spec)?;
        let run = sc.run()?;
        Ok((sc, run))
    };
    let (nsc, nrun) = go(native).map_err(|e| format!("native setup: {e}"))?;
    let (ssc, srun) = go(sim).map_err(|e| format!("simulated setup: {e}"))?;
    compare_runs(pair, &nsc, &nrun, &ssc, &srun)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case: usize,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairResult {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    pub failures: Vec<CaseFailure>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub seed: u64,
    pub cases: usize,
    pub pairs: Vec<PairResult>,
}

impl EquivalenceReport {
    pub fn holds(&self) -> bool {
        self.pairs.iter().all(|p| p.failures.is_empty())
    }

    pub fn pair(&self, name: &str) -> Option<&PairResult> {
        self.pairs.iter().find(|p| p.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("seed {} / {} cases per pair\n", self.seed, self.cases);
        for p in &self.pairs {
            let _ = writeln!(s, "{:<26} {:>4}/{:<4} {}", p.name, p.passed, p.cases, if p.failures.is_empty() { "ok" } else { "FAILED" });
            for f in p.failures.iter().take(3) {
                let _ = writeln!(s, "    case {}: {}", f.case, f.detail);
            }
        }
        s
    }
}

pub fn run_pair(pair: &Pair, seed: u64, cases: usize) -> PairResult {
    let failures: Vec<CaseFailure> = (0..cases)
        .filter_map(|case| run_case(pair, seed, case).err().map(|detail| CaseFailure { case, detail }))
        .collect();
    PairResult { name: pair.name.into(), cases, passed: cases - failures.len(), failures }
}

/// Runs `cases` random cases for each of `pairs`, one thread per pair.
pub fn run_equivalence(pairs: &[&Pair], seed: u64, cases: usize) -> EquivalenceReport {
    let results = std::thread::scope(|s| {
        let handles: Vec<_> = pairs.iter().map(|p| s.spawn(move || run_pair(p, seed, cases))).collect();
        handles.into_iter().map(|h| h.join().expect("pair thread")).collect()
    });
    EquivalenceReport { seed, cases, pairs: results }
}

pub fn run_equivalence_suite(seed: u64, cases: usize) -> EquivalenceReport {
    let all: Vec<&Pair> = PAIRS.iter().collect();
    run_equivalence(&all, seed, cases)
}

// ---------------------------------------------------------------------------
// Inlined transaction monitors

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub scheduler: SchedulerKind,
    pub pattern: String,
    pub native: Vec<bool>,
    pub inlined: Vec<bool>,
}

/// Only-once monitor against its `first` + `fail` inlining, for `k` calls
/// to `A` (k = 1..=5) and for `o2` then `o1` as two transactions, under
/// both schedulers. Verdicts are `true` for commit.
pub fn monitor_inlining_matrix() -> Result<(Vec<MonitorRow>, Vec<Expectation>), ScenarioError> {
    let mut rows = Vec::new();
    let mut expectations = Vec::new();
    let calls = |k: usize| Value::Seq(std::iter::repeat_with(|| plan_call("A", "call")).take(k).collect());
    let mut plan: Vec<(String, Value)> = (1..=5).map(|k| (format!("k{k}"), calls(k))).collect();
    plan.push(("o1".into(), Value::Seq(vec![plan_call("A", "call"), plan_call("C", "call")])));
    plan.push(("o2".into(), Value::Seq(vec![plan_call("A", "call"), plan_call("A", "call"), plan_call("C", "call")])));
    let plan = Value::rec([("plan", Value::rec(plan))]);

    for scheduler in [SchedulerKind::Dfs, SchedulerKind::Bfs] {
        let build = |inline: bool, txs: Vec<TxSpec>| {
            let mut a = ContractSpec::new("A", "once_monitored_A", Value::Unit, 0);
            let mut engine = EngineConfig::new(scheduler, 1_000);
            if inline {
                a = a.transformed(&["monitor_via_first_fail"]);
                engine = engine.with_mechanisms([Mechanism::First, Mechanism::Fail]);
            } else {
                engine = engine.with_monitors(MonitorMode::Transaction);
            }
            ScenarioSpec {
                name: None,
                engine,
                contracts: vec![
                    a,
                    ContractSpec::new("B", "forwarder_B", plan.clone(), 0),
                    ContractSpec::new("C", "sink_C", Value::Unit, 0),
                ],
                externals: vec![ExternalSpec { addr: Address::new("u"), balance: 0 }],
                transactions: txs,
            }
        };
        let verdicts = |inline: bool, txs: Vec<TxSpec>| -> Result<Vec<bool>, ScenarioError> {
            let run = Scenario::from_spec(build(inline, txs))?.run()?;
            Ok(run.runs.iter().map(|r| r.outcome.is_committed()).collect())
        };
        let mut patterns: Vec<(String, Vec<TxSpec>, Vec<bool>)> = (1..=5)
            .map(|k| (format!("k={k}"), vec![TxSpec::new("B", &format!("k{k}"), Value::Unit)], vec![k != 1]))
            .collect();
        patterns.push((
            "o2 then o1".into(),
            vec![TxSpec::new("B", "o2", Value::Unit), TxSpec::new("B", "o1", Value::Unit)],
            vec![true, false],
        ));
        for (pattern, txs, want) in patterns {
            let native = verdicts(false, txs.clone())?;
            let inlined = verdicts(true, txs)?;
            expectations.push(Expectation {
                claim: format!("{scheduler:?} {pattern}: native {native:?} = inlined {inlined:?} = expected {want:?}"),
                holds: native == want && inlined == want,
            });
            rows.push(MonitorRow { scheduler, pattern, native, inlined });
        }
    }
    Ok((rows, expectations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_are_reproducible() {
        let p = pair("count_via_first").unwrap();
        assert_eq!(random_case(p, 7, 3), random_case(p, 7, 3));
        assert_ne!(random_case(p, 7, 3), random_case(p, 8, 3));
    }

    #[test]
    fn simulated_spec_transforms_only_the_mode_under_test() {
        let p = pair("first_via_count").unwrap();
        let native = random_case(p, 0, 0);
        let sim = simulated(p, &native);
        for (n, s) in native.contracts.iter().zip(&sim.contracts) {
            let tested = n.params.get("mode").and_then(Value::as_text) == Some("first");
            assert_eq!(s.transform.is_empty(), !tested);
        }
        assert_eq!(sim.engine.mechanisms, [Mechanism::Count].into_iter().collect());
    }

    #[test]
    fn small_sample_of_every_pair() {
        let r = run_equivalence_suite(1, 10);
        assert!(r.holds(), "{}", r.to_text());
    }

    #[test]
    fn monitor_inlining_agrees() {
        let (_, ex) = monitor_inlining_matrix().unwrap();
        for e in ex {
            assert!(e.holds, "{}", e.claim);
        }
    }
}
