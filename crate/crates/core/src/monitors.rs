//! Operation monitors (`begin`/`end` around each operation) and transaction
//! monitors (`init` before a contract's first operation, `term` after the
//! queue drains).
//!
//! The visited set is the context's first-visit list, so `term` hooks run in
//! first-visit order and stop at the first failure.

use crate::contract::{Call, MonitorHooks, Registry};
use crate::engine::{Engine, EngineConfig, EngineError, MonitorMode, TxRun};
use crate::model::{AbortReason, ChainState, Operation};
use crate::value::{Address, Value};

fn monitor_storage<'a>(state: &'a ChainState, addr: &Address) -> &'a Value {
    static UNIT: Value = Value::Unit;
    state.account(addr).map_or(&UNIT, |a| &a.monitor_storage)
}

fn set_monitor_storage(state: &mut ChainState, addr: &Address, v: Value) {
    state.accounts.entry(addr.clone()).or_default().monitor_storage = v;
}

/// Runs `init` for `addr`, replacing its monitor storage.
pub fn run_init(state: &mut ChainState, addr: &Address, hooks: &dyn MonitorHooks) -> Result<(), AbortReason> {
    let acct = state.accounts.entry(addr.clone()).or_default();
    let ms = hooks
        .init(&acct.storage, acct.balance, &acct.monitor_storage)
        .map_err(|_| AbortReason::MonitorInitFail(addr.clone()))?;
    acct.monitor_storage = ms;
    Ok(())
}

pub fn run_begin(state: &mut ChainState, addr: &Address, hooks: &dyn MonitorHooks, call: &Call) -> Result<(), AbortReason> {
    let ms = hooks
        .begin(call, monitor_storage(state, addr))
        .map_err(|_| AbortReason::MonitorBeginFail(addr.clone()))?;
    set_monitor_storage(state, addr, ms);
    Ok(())
}

pub fn run_end(
    state: &mut ChainState,
    addr: &Address,
    hooks: &dyn MonitorHooks,
    emitted: &[Operation],
    new_storage: &Value,
) -> Result<(), AbortReason> {
    let ms = hooks
        .end(emitted, new_storage, monitor_storage(state, addr))
        .map_err(|_| AbortReason::MonitorEndFail(addr.clone()))?;
    set_monitor_storage(state, addr, ms);
    Ok(())
}

/// Runs `term` for `addr`. Never writes.
pub fn run_term(state: &ChainState, addr: &Address, hooks: &dyn MonitorHooks) -> Result<(), AbortReason> {
    let acct = state.account(addr).cloned().unwrap_or_default();
    hooks
        .term(&acct.storage, acct.balance, &acct.monitor_storage)
        .map_err(|_| AbortReason::MonitorTermFail(addr.clone()))
}

/// Runs one transaction under transaction monitors. Forces the monitor
/// mode of `config` to [`MonitorMode::Transaction`].
pub fn run_monitored_transaction(
    registry: &Registry,
    state: &ChainState,
    config: &EngineConfig,
    external: Operation,
) -> Result<TxRun, EngineError> {
    let config = config.clone().with_monitors(MonitorMode::Transaction);
    Engine::new(registry, config).run_transaction(state, external)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{Contract, StepOk, StepResult};
    use crate::mechanisms::ContextView;
    use crate::model::{Account, Outcome, RecordKind};
    use std::sync::Arc;

    /// Counts invocations in monitor storage; `term` rejects exactly one.
    struct OnlyOnce;
    impl MonitorHooks for OnlyOnce {
        fn init(&self, _: &Value, _: u64, _: &Value) -> Result<Value, String> {
            Ok(Value::Int(0))
        }
        fn begin(&self, _: &Call, m: &Value) -> Result<Value, String> {
            Ok(Value::Int(m.as_int().ok_or("uninitialized")? + 1))
        }
        fn term(&self, _: &Value, _: u64, m: &Value) -> Result<(), String> {
            if m.as_int() == Some(1) {
                Err("called exactly once".into())
            } else {
                Ok(())
            }
        }
    }

    struct Monitored;
    impl Contract for Monitored {
        fn kind(&self) -> &str {
            "monitored"
        }
        fn step(&self, _: &mut ContextView, _: &Call, s: &Value) -> StepResult {
            Ok(StepOk::idle(s))
        }
        fn monitor(&self) -> Option<&dyn MonitorHooks> {
            Some(&OnlyOnce)
        }
    }

    struct Caller;
    impl Contract for Caller {
        fn kind(&self) -> &str {
            "caller"
        }
        fn step(&self, _: &mut ContextView, call: &Call, s: &Value) -> StepResult {
            let n = call.param.as_int().unwrap_or(0);
            Ok(StepOk::new(s.clone(), (0..n).map(|_| Operation::call("A", "call", Value::Unit)).collect()))
        }
    }

    fn setup() -> (Registry, ChainState) {
        let reg = Registry::new()
            .with_external("ext")
            .with_contract("A", Arc::new(Monitored))
            .with_contract("B", Arc::new(Caller));
        let st = ChainState::new().with_account("A", Account::default()).with_account("B", Account::default());
        (reg, st)
    }

    fn calls(n: i64) -> Operation {
        Operation::call("B", "go", Value::Int(n)).from_src("ext")
    }

    #[test]
    fn only_once_verdicts() {
        let (reg, st) = setup();
        let cfg = EngineConfig::dfs(100);
        let one = run_monitored_transaction(&reg, &st, &cfg, calls(1)).unwrap();
        assert_eq!(one.outcome, Outcome::Aborted(AbortReason::MonitorTermFail(Address::new("A"))));
        let two = run_monitored_transaction(&reg, &st, &cfg, calls(2)).unwrap();
        match two.outcome {
            Outcome::Committed(s) => assert_eq!(s.account(&Address::new("A")).unwrap().monitor_storage, Value::Int(2)),
            o => panic!("{o:?}"),
        }
        let kinds: Vec<_> = two.trace.records.iter().map(|r| r.kind).collect();
        use RecordKind::*;
        assert_eq!(kinds, [Op, Init, Begin, Op, End, Begin, Op, End, Term]);
    }

    #[test]
    fn untouched_monitor_has_no_init_or_term() {
        let (reg, st) = setup();
        let run = run_monitored_transaction(&reg, &st, &EngineConfig::dfs(100), calls(0)).unwrap();
        assert!(run.outcome.is_committed());
        assert!(run.trace.records.iter().all(|r| r.kind == RecordKind::Op));
    }

    #[test]
    fn failing_begin_aborts() {
        struct Grumpy;
        impl MonitorHooks for Grumpy {
            fn begin(&self, _: &Call, _: &Value) -> Result<Value, String> {
                Err("no".into())
            }
        }
        struct G;
        impl Contract for G {
            fn kind(&self) -> &str {
                "g"
            }
            fn step(&self, _: &mut ContextView, _: &Call, s: &Value) -> StepResult {
                Ok(StepOk::idle(s))
            }
            fn monitor(&self) -> Option<&dyn MonitorHooks> {
                Some(&Grumpy)
            }
        }
        let (mut reg, st) = setup();
        reg.insert_contract(Address::new("A"), Arc::new(G));
        let cfg = EngineConfig::dfs(100).with_monitors(MonitorMode::Operation);
        let run = Engine::new(&reg, cfg).run_transaction(&st, calls(1)).unwrap();
        assert_eq!(run.outcome, Outcome::Aborted(AbortReason::MonitorBeginFail(Address::new("A"))));
    }
}
