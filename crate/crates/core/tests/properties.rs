use proptest::prelude::*;

use txmonsim::engine::{EngineConfig, SchedulerKind};
use txmonsim::invariants::check_scenario;
use txmonsim::model::{AbortReason, Trace};
use txmonsim::scenarios::equivalence::{random_case, run_case, PAIRS};
use txmonsim::scenarios::obs::check_obs_all;
use txmonsim::scenarios::{ContractSpec, ExternalSpec, Scenario, ScenarioSpec, TxSpec};
use txmonsim::value::{Address, Value};

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Unit),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        any::<u64>().prop_map(Value::Amt),
        "[a-z]{1,4}".prop_map(|s| Value::Addr(Address::new(s))),
        ".{0,6}".prop_map(Value::Text),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Seq),
            prop::collection::btree_map("[a-z_]{1,5}", inner, 0..4).prop_map(Value::Rec),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_round_trip_through_json(v in value()) {
        let s = serde_json::to_string(&v).unwrap();
        prop_assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random probe scenarios obey every law under both schedulers.
    #[test]
    fn random_scenarios_are_lawful(pair in 0..PAIRS.len(), seed in any::<u64>(), case in 0usize..1000, bfs in any::<bool>()) {
        let mut spec = random_case(&PAIRS[pair], seed, case);
        spec.engine.scheduler = if bfs { SchedulerKind::Bfs } else { SchedulerKind::Dfs };
        let sc = Scenario::from_spec(spec).unwrap();
        let v = check_scenario(&sc).unwrap();
        prop_assert!(v.is_empty(), "{:?}", v);
    }

    /// Trace files round-trip and a trace is observationally equal to
    /// itself for every contract.
    #[test]
    fn traces_round_trip(seed in any::<u64>(), case in 0usize..1000) {
        let sc = Scenario::from_spec(random_case(&PAIRS[0], seed, case)).unwrap();
        for run in sc.run().unwrap().runs {
            let back = Trace::from_jsonl(&run.trace.to_jsonl()).unwrap();
            prop_assert_eq!(&back, &run.trace);
            for c in &sc.spec.contracts {
                prop_assert!(check_obs_all(&back, &run.trace, &c.addr).equal);
            }
        }
    }

    /// Differential cases at seeds the fixed suites never use.
    #[test]
    fn transformers_agree_on_fresh_seeds(pair in 0..PAIRS.len(), seed in any::<u64>(), case in 0usize..50) {
        let r = run_case(&PAIRS[pair], seed, case);
        prop_assert!(r.is_ok(), "{}: {}", PAIRS[pair].name, r.unwrap_err());
    }
}

/// A lone call to `A` under BFS: its recurring check waits forever.
fn spinner(gas: u64) -> Scenario {
    Scenario::from_spec(ScenarioSpec {
        name: None,
        engine: EngineConfig::bfs(gas),
        contracts: vec![ContractSpec::new("A", "recurring_once_A", Value::Unit, 0)],
        externals: vec![ExternalSpec { addr: Address::new("u"), balance: 0 }],
        transactions: vec![TxSpec::new("A", "call", Value::Unit)],
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Gas is never overspent, and a spin always ends by exhaustion.
    #[test]
    fn gas_bounds_every_run(gas in 1u64..400) {
        let run = spinner(gas).run().unwrap();
        let tx = &run.runs[0];
        prop_assert!(tx.gas_used <= gas);
        prop_assert_eq!(tx.outcome.reason(), Some(&AbortReason::GasExhausted));
        prop_assert!(run.final_state == spinner(gas).initial);
    }
}
