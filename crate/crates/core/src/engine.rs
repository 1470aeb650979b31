//! Operation execution, the DFS/BFS step relations, gas metering and the
//! transaction driver.
//!
//! A transaction starts from one or more external operations and repeatedly
//! pops the head of the pending queue. Under DFS the emitted operations are
//! prepended to the rest of the queue, under BFS they are appended. When the
//! queue drains, the end-of-transaction phases run in a fixed order: bounded
//! hookups, unbounded hookups, the fail-bit check, then monitor `term` hooks.
//! Any failure aborts the whole transaction and the pre-state is kept.
//!
//! Gas: one unit per operation execution (charged before the step runs) and
//! one unit per emitted operation (charged after). Monitor hooks and
//! hookups are free.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{BudgetExceeded, Call, HookupKind, Registry, StepOk};
use crate::mechanisms::{self, ContextView, HookupError, Mechanism, MechanismSet};
use crate::model::{
    AbortReason, ChainState, Context, Observation, Operation, Outcome, RecordKind, StepRecord, Trace,
};
use crate::invariants;
use crate::monitors;
use crate::value::{Address, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Dfs,
    Bfs,
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dfs" => Ok(SchedulerKind::Dfs),
            "bfs" => Ok(SchedulerKind::Bfs),
            _ => Err(format!("unknown scheduler `{s}` (expected dfs or bfs)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MonitorMode {
    #[default]
    None,
    /// `begin`/`end` around every operation.
    Operation,
    /// Operation monitors plus `init`/`term`.
    Transaction,
}

impl std::str::FromStr for MonitorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(MonitorMode::None),
            "operation" | "op" => Ok(MonitorMode::Operation),
            "transaction" | "tx" => Ok(MonitorMode::Transaction),
            _ => Err(format!("unknown monitor mode `{s}` (expected none, operation or transaction)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub scheduler: SchedulerKind,
    pub gas_limit: u64,
    #[serde(default)]
    pub mechanisms: MechanismSet,
    #[serde(default)]
    pub monitor_mode: MonitorMode,
    #[serde(default)]
    pub block_level: u64,
    #[serde(default)]
    pub timestamp: u64,
}

impl EngineConfig {
    pub fn new(scheduler: SchedulerKind, gas_limit: u64) -> Self {
        EngineConfig {
            scheduler,
            gas_limit,
            mechanisms: MechanismSet::new(),
            monitor_mode: MonitorMode::None,
            block_level: 0,
            timestamp: 0,
        }
    }

    pub fn dfs(gas_limit: u64) -> Self {
        Self::new(SchedulerKind::Dfs, gas_limit)
    }

    pub fn bfs(gas_limit: u64) -> Self {
        Self::new(SchedulerKind::Bfs, gas_limit)
    }

    pub fn with_mechanisms(mut self, ms: impl IntoIterator<Item = Mechanism>) -> Self {
        self.mechanisms.extend(ms);
        self
    }

    pub fn with_monitors(mut self, mode: MonitorMode) -> Self {
        self.monitor_mode = mode;
        self
    }

    pub fn enabled(&self, m: Mechanism) -> bool {
        self.mechanisms.contains(&m)
    }
}

/// Errors in the setup of a run, as opposed to transaction aborts.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("gas limit must be at least 1")]
    ZeroGasLimit,
    #[error("transaction has no external operation")]
    NoOperations,
    #[error("external operation source {0} is not an external account")]
    SourceNotExternal(Address),
    #[error("external operation destination {0} is not a registered contract")]
    DestinationNotContract(Address),
    #[error("{0}")]
    HookBudget(String),
    #[error("step called on a drained transaction")]
    EmptyQueue,
}

impl EngineError {
    fn budget(addr: &Address, e: BudgetExceeded) -> Self {
        EngineError::HookBudget(format!("bounded hookup of {addr}: {e}"))
    }
}

/// The configuration triple (state, context, pending queue) of a running
/// transaction, plus the trace so far.
#[derive(Clone, Debug)]
pub struct RunningTx {
    pub state: ChainState,
    pub ctx: Context,
    pub queue: VecDeque<Operation>,
    pub trace: Trace,
}

impl RunningTx {
    fn push(&mut self, kind: RecordKind, subject: Address) -> &mut StepRecord {
        let queue: Vec<Operation> = self.queue.iter().cloned().collect();
        let rec = StepRecord {
            index: self.trace.records.len() as u64,
            kind,
            subject,
            executed: None,
            queue_before: queue.clone(),
            queue_after: queue,
            emitted: Vec::new(),
            gas_before: self.ctx.gas_remaining,
            gas_after: self.ctx.gas_remaining,
            state_digest: self.state.contract_digest(),
            observed: None,
            storage_after: None,
        };
        self.trace.records.push(rec);
        self.trace.records.last_mut().expect("just pushed")
    }
}

/// Result of one operation execution.
#[derive(Clone, Debug)]
pub struct Stepped {
    pub state: ChainState,
    pub ctx: Context,
    pub emitted: Vec<Operation>,
    pub observed: Option<Observation>,
    pub storage_after: Option<Value>,
    pub begin_ran: bool,
    pub end_ran: bool,
    pub gas_before: u64,
}

/// Why an operation stopped the transaction, with what the contract saw
/// if its step function ran.
#[derive(Clone, Debug)]
pub struct Halted {
    pub reason: AbortReason,
    pub observed: Option<Box<Observation>>,
}

impl From<AbortReason> for Halted {
    fn from(reason: AbortReason) -> Self {
        Halted { reason, observed: None }
    }
}

pub enum StepStatus {
    Continue(RunningTx),
    Halt(RunningTx, AbortReason),
}

/// Outcome and trace of one transaction.
#[derive(Clone, Debug)]
pub struct TxRun {
    pub outcome: Outcome,
    pub trace: Trace,
    pub gas_used: u64,
    /// The engine settings the transaction ran under.
    pub config: EngineConfig,
}

/// Deducts `cost` from the remaining gas, or reports exhaustion leaving the
/// context untouched.
pub fn charge_gas(ctx: &mut Context, cost: u64) -> Result<(), AbortReason> {
    match ctx.gas_remaining.checked_sub(cost) {
        Some(rest) => {
            ctx.gas_remaining = rest;
            Ok(())
        }
        None => Err(AbortReason::GasExhausted),
    }
}

fn transfer(state: &mut ChainState, op: &Operation) -> Result<(), AbortReason> {
    if op.money == 0 {
        state.accounts.entry(op.dest.clone()).or_default();
        return Ok(());
    }
    let src = state.accounts.entry(op.src.clone()).or_default();
    src.balance = src
        .balance
        .checked_sub(op.money)
        .ok_or_else(|| AbortReason::InsufficientBalance(op.clone()))?;
    let dest = state.accounts.entry(op.dest.clone()).or_default();
    dest.balance = dest
        .balance
        .checked_add(op.money)
        .ok_or_else(|| AbortReason::ContractFail(op.dest.clone(), "balance overflow".into()))?;
    Ok(())
}

pub struct Engine<'r> {
    registry: &'r Registry,
    config: EngineConfig,
}

impl<'r> Engine<'r> {
    pub fn new(registry: &'r Registry, config: EngineConfig) -> Self {
        Engine { registry, config }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        self.registry
    }

    /// Sets up a transaction whose pending queue starts as `ops`.
    pub fn begin(&self, state: &ChainState, ops: Vec<Operation>, gas_limit: u64) -> Result<RunningTx, EngineError> {
        if gas_limit == 0 {
            return Err(EngineError::ZeroGasLimit);
        }
        if ops.is_empty() {
            return Err(EngineError::NoOperations);
        }
        for op in &ops {
            if !self.registry.is_external(&op.src) {
                return Err(EngineError::SourceNotExternal(op.src.clone()));
            }
            if self.registry.contract(&op.dest).is_none() {
                return Err(EngineError::DestinationNotContract(op.dest.clone()));
            }
        }
        let tx_money = ops.iter().map(|o| o.money).fold(0u64, u64::saturating_add);
        let ctx = Context::fresh(self.config.block_level, self.config.timestamp, gas_limit, tx_money);
        Ok(RunningTx { state: state.clone(), ctx, queue: ops.into(), trace: Trace::default() })
    }

    /// Executes `op` (already removed from the head of the queue) against
    /// the configuration in `tx`, with `pending` the rest of the queue.
    // aborts end the transaction, so the large error is built at most once
    #[allow(clippy::result_large_err)]
    pub fn execute_operation(&self, tx: &RunningTx, op: &Operation, pending: &[Operation]) -> Result<Stepped, Halted> {
        let mut state = tx.state.clone();
        let mut ctx = tx.ctx.clone();
        let gas_before = ctx.gas_remaining;

        let Some(contract) = self.registry.contract(&op.dest) else {
            // Code-less destination: a plain value transfer.
            charge_gas(&mut ctx, 1)?;
            transfer(&mut state, op)?;
            return Ok(Stepped {
                state,
                ctx,
                emitted: Vec::new(),
                observed: None,
                storage_after: None,
                begin_ran: false,
                end_ran: false,
                gas_before,
            });
        };

        ctx.enter(&op.dest);
        let seq_no = ctx.count(&op.dest) - 1;

        let monitor = match self.config.monitor_mode {
            MonitorMode::None => None,
            _ => contract.monitor(),
        };

        let storage = state.storage(&op.dest).cloned().unwrap_or_default();
        let pre_balance = state.balance(&op.dest);
        let call_preview = Call {
            src: op.src.clone(),
            method: op.method.clone(),
            param: op.param.clone(),
            money: op.money,
            balance: pre_balance.saturating_add(op.money),
        };
        if let Some(m) = monitor {
            monitors::run_begin(&mut state, &op.dest, m, &call_preview)?;
        }

        charge_gas(&mut ctx, 1)?;
        transfer(&mut state, op)?;
        let balance = state.balance(&op.dest);
        let call = Call { balance, ..call_preview };

        let txmem = if self.config.enabled(Mechanism::TxMem) {
            match ctx.txmem.get(&op.dest) {
                Some(v) => Some(v.clone()),
                None => contract.txmem_init(&storage),
            }
        } else {
            None
        };
        let mut view = ContextView::for_operation(&op.dest, &ctx, pending, &self.config.mechanisms, txmem);

        #[cfg(debug_assertions)]
        let shadow = {
            let mut v2 = view.clone();
            let r2 = contract.step(&mut v2, &call, &storage);
            (v2, r2)
        };

        let result = contract.step(&mut view, &call, &storage);

        #[cfg(debug_assertions)]
        {
            debug_assert_eq!(result, shadow.1, "step of {} is not deterministic", op.dest);
            debug_assert_eq!(view.fail_effect(), shadow.0.fail_effect());
            debug_assert_eq!(view.txmem_effect(), shadow.0.txmem_effect());
        }

        let observed = Observation {
            seq_no,
            src: op.src.clone(),
            method: op.method.clone(),
            param: op.param.clone(),
            money: op.money,
            storage_before: storage,
            balance_before: balance,
            mechanism_readings: view.readings().clone(),
        };
        let StepOk { storage: new_storage, emitted } = result.map_err(|f| Halted {
            reason: AbortReason::ContractFail(op.dest.clone(), f.0),
            observed: Some(Box::new(observed.clone())),
        })?;

        let mut out = Vec::with_capacity(emitted.len());
        for mut e in emitted {
            e.src = op.dest.clone();
            if e.recurring && (e.dest != op.dest || !contract.is_recurring_method(&e.method) || e.money != 0) {
                return Err(AbortReason::RecurringEscape(e).into());
            }
            // A recurring operation may only re-inject recurring operations
            // into its own contract.
            if op.recurring && !e.recurring {
                return Err(AbortReason::RecurringEscape(e).into());
            }
            if !self.registry.knows(&e.dest) {
                return Err(AbortReason::ContractFail(op.dest.clone(), format!("unknown destination {}", e.dest)).into());
            }
            out.push(e);
        }
        charge_gas(&mut ctx, out.len() as u64)?;

        if let Some(b) = view.fail_effect() {
            mechanisms::mech_set_fail(&mut ctx, &op.dest, &op.dest, b)
                .map_err(|f| AbortReason::ContractFail(op.dest.clone(), f.to_string()))?;
        }
        if let Some(t) = view.txmem_effect() {
            ctx.txmem.insert(op.dest.clone(), t.clone());
        }

        let acct = state.accounts.entry(op.dest.clone()).or_default();
        acct.storage = new_storage.clone();

        if let Some(m) = monitor {
            monitors::run_end(&mut state, &op.dest, m, &out, &new_storage)?;
        }

        Ok(Stepped {
            state,
            ctx,
            emitted: out,
            observed: Some(observed),
            storage_after: Some(new_storage),
            begin_ran: monitor.is_some(),
            end_ran: monitor.is_some(),
            gas_before,
        })
    }

    /// One small step: pops the head operation, runs it (with `init` first
    /// when transaction monitors require it) and reorders the queue.
    pub fn step(&self, mut tx: RunningTx) -> Result<StepStatus, EngineError> {
        let Some(op) = tx.queue.front().cloned() else {
            return Err(EngineError::EmptyQueue);
        };

        if self.config.monitor_mode == MonitorMode::Transaction {
            if let Some(m) = self.registry.contract(&op.dest).and_then(|c| c.monitor()) {
                if !tx.ctx.has_visited(&op.dest) {
                    if let Err(r) = monitors::run_init(&mut tx.state, &op.dest, m) {
                        return Ok(StepStatus::Halt(tx, r));
                    }
                    tx.push(RecordKind::Init, op.dest.clone());
                }
            }
        }

        let queue_before: Vec<Operation> = tx.queue.iter().cloned().collect();
        let rest: Vec<Operation> = queue_before[1..].to_vec();
        let stepped = match self.execute_operation(&tx, &op, &rest) {
            Ok(s) => s,
            Err(h) => {
                if let Some(obs) = h.observed {
                    // the step ran and failed: record what it saw
                    let gas_after = tx.ctx.gas_remaining.saturating_sub(1);
                    let rec = tx.push(RecordKind::Op, op.dest.clone());
                    rec.executed = Some(op.clone());
                    rec.queue_before = queue_before;
                    rec.queue_after = rest;
                    rec.gas_after = gas_after;
                    rec.observed = Some(*obs);
                }
                return Ok(StepStatus::Halt(tx, h.reason));
            }
        };

        if stepped.begin_ran {
            tx.push(RecordKind::Begin, op.dest.clone());
        }

        let queue_after: Vec<Operation> = match self.config.scheduler {
            SchedulerKind::Dfs => stepped.emitted.iter().cloned().chain(rest).collect(),
            SchedulerKind::Bfs => rest.into_iter().chain(stepped.emitted.iter().cloned()).collect(),
        };

        tx.state = stepped.state;
        tx.ctx = stepped.ctx;
        tx.queue = queue_after.iter().cloned().collect();
        let gas_after = tx.ctx.gas_remaining;
        let rec = tx.push(RecordKind::Op, op.dest.clone());
        rec.executed = Some(op.clone());
        rec.queue_before = queue_before;
        rec.queue_after = queue_after;
        rec.emitted = stepped.emitted;
        rec.gas_before = stepped.gas_before;
        rec.gas_after = gas_after;
        rec.observed = stepped.observed;
        rec.storage_after = stepped.storage_after;

        if stepped.end_ran {
            tx.push(RecordKind::End, op.dest.clone());
        }
        Ok(StepStatus::Continue(tx))
    }

    /// Runs the end-of-transaction phases on a drained transaction.
    fn finish(&self, tx: &mut RunningTx) -> Result<Result<(), AbortReason>, EngineError> {
        for (mech, kind) in [(Mechanism::BStore, HookupKind::Bounded), (Mechanism::UStore, HookupKind::Unbounded)] {
            if !self.config.enabled(mech) {
                continue;
            }
            let visited = tx.ctx.visited.clone();
            for addr in &visited {
                match mechanisms::run_hookup(self.registry, &mut tx.state, addr, kind) {
                    Ok(None) => {}
                    Ok(Some(step)) => {
                        tx.push(RecordKind::Hookup, addr.clone()).storage_after = Some(step.storage_after);
                    }
                    Err(HookupError::Failed(a, _)) => return Ok(Err(AbortReason::HookupFail(a))),
                    Err(HookupError::Budget(a, e)) => return Err(EngineError::budget(&a, e)),
                }
            }
        }
        if self.config.enabled(Mechanism::Fail) {
            let subject = tx.ctx.visited.first().cloned().unwrap_or_else(|| Address::new(""));
            tx.push(RecordKind::FailBitCheck, subject);
            if let Err(r) = mechanisms::end_of_tx_fail_check(&tx.ctx) {
                return Ok(Err(r));
            }
        }
        if self.config.monitor_mode == MonitorMode::Transaction {
            let visited = tx.ctx.visited.clone();
            for addr in &visited {
                let Some(m) = self.registry.contract(addr).and_then(|c| c.monitor()) else { continue };
                tx.push(RecordKind::Term, addr.clone());
                if let Err(r) = monitors::run_term(&tx.state, addr, m) {
                    return Ok(Err(r));
                }
            }
        }
        Ok(Ok(()))
    }

    /// Drives a prepared transaction to commit or abort.
    pub fn drive(&self, mut tx: RunningTx) -> Result<TxRun, EngineError> {
        let gas_limit = tx.ctx.gas_remaining;
        loop {
            if tx.queue.is_empty() {
                let verdict = self.finish(&mut tx)?;
                let gas_used = gas_limit - tx.ctx.gas_remaining;
                let outcome = match verdict {
                    Ok(()) => Outcome::Committed(tx.state),
                    Err(r) => Outcome::Aborted(r),
                };
                self.debug_check(&tx.trace, !outcome.is_committed());
                return Ok(TxRun { outcome, trace: tx.trace, gas_used, config: self.config.clone() });
            }
            match self.step(tx)? {
                StepStatus::Continue(next) => tx = next,
                StepStatus::Halt(halted, reason) => {
                    let gas_used = gas_limit - halted.ctx.gas_remaining;
                    self.debug_check(&halted.trace, true);
                    return Ok(TxRun {
                        outcome: Outcome::Aborted(reason),
                        trace: halted.trace,
                        gas_used,
                        config: self.config.clone(),
                    });
                }
            }
        }
    }

    /// Debug builds hold every trace to the laws in [`invariants`].
    fn debug_check(&self, trace: &Trace, aborted: bool) {
        if cfg!(debug_assertions) {
            let monitored = |a: &Address| self.registry.contract(a).is_some_and(|c| c.monitor().is_some());
            let v = invariants::check_trace(trace, invariants::TraceSetting::new(&self.config, aborted), &monitored);
            assert!(v.is_empty(), "trace breaks engine laws: {}", v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "));
        }
    }

    /// Runs one transaction from a single external operation with the
    /// configured gas limit.
    pub fn run_transaction(&self, state: &ChainState, external: Operation) -> Result<TxRun, EngineError> {
        self.run_ops(state, vec![external], self.config.gas_limit)
    }

    /// Runs one transaction whose pending queue starts with `ops`.
    pub fn run_ops(&self, state: &ChainState, ops: Vec<Operation>, gas_limit: u64) -> Result<TxRun, EngineError> {
        let tx = self.begin(state, ops, gas_limit)?;
        self.drive(tx)
    }

    /// Runs transactions back to back, threading committed states.
    pub fn run_sequence(
        &self,
        state: &ChainState,
        txs: impl IntoIterator<Item = (Vec<Operation>, u64)>,
    ) -> Result<(ChainState, Vec<TxRun>), EngineError> {
        let mut cur = state.clone();
        let mut runs = Vec::new();
        for (ops, gas) in txs {
            let run = self.run_ops(&cur, ops, gas)?;
            if let Outcome::Committed(s) = &run.outcome {
                cur = s.clone();
            }
            runs.push(run);
        }
        Ok((cur, runs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{fail, Contract, StepResult};
    use crate::model::Account;
    use std::sync::Arc;

    /// Emits the operations listed in the parameter (a Seq of Addr).
    struct Fanout;
    impl Contract for Fanout {
        fn kind(&self) -> &str {
            "fanout"
        }
        fn step(&self, _v: &mut ContextView, call: &Call, s: &Value) -> StepResult {
            match call.method.as_str() {
                "go" => {
                    let ops = call
                        .param
                        .as_seq()
                        .unwrap_or(&[])
                        .iter()
                        .filter_map(Value::as_addr)
                        .map(|a| Operation::call(a.clone(), "go", Value::Seq(vec![])))
                        .collect();
                    Ok(StepOk::new(s.clone(), ops))
                }
                "receive" => Ok(StepOk::idle(s)),
                m => fail(format!("no method {m}")),
            }
        }
    }

    /// Re-emits itself as a recurring operation forever.
    struct Spinner;
    impl Contract for Spinner {
        fn kind(&self) -> &str {
            "spinner"
        }
        fn is_recurring_method(&self, m: &str) -> bool {
            m == "spin"
        }
        fn step(&self, v: &mut ContextView, _c: &Call, s: &Value) -> StepResult {
            Ok(StepOk::new(s.clone(), vec![Operation::call(v.address().clone(), "spin", Value::Unit).recurring()]))
        }
    }

    fn setup() -> (Registry, ChainState) {
        let reg = Registry::new()
            .with_external("ext")
            .with_contract("A", Arc::new(Fanout))
            .with_contract("B", Arc::new(Fanout))
            .with_contract("R", Arc::new(Spinner));
        let state = ChainState::new()
            .with_account("ext", Account::new(Value::Unit, 1000))
            .with_account("A", Account::new(Value::Unit, 100))
            .with_account("B", Account::new(Value::Unit, 100));
        (reg, state)
    }

    fn ext_call(dest: &str, param: Value) -> Operation {
        Operation::call(dest, "go", param).from_src("ext")
    }

    #[test]
    fn charge_gas_boundaries() {
        let mut ctx = Context::fresh(0, 0, 5, 0);
        charge_gas(&mut ctx, 5).unwrap();
        assert_eq!(ctx.gas_remaining, 0);
        let mut ctx = Context::fresh(0, 0, 4, 0);
        assert_eq!(charge_gas(&mut ctx, 5), Err(AbortReason::GasExhausted));
        assert_eq!(ctx.gas_remaining, 4);
    }

    #[test]
    fn single_step_drain() {
        let (reg, state) = setup();
        let e = Engine::new(&reg, EngineConfig::dfs(10));
        let run = e.run_transaction(&state, ext_call("A", Value::Seq(vec![]))).unwrap();
        assert!(run.outcome.is_committed());
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.gas_used, 1);
    }

    #[test]
    fn insufficient_balance_aborts() {
        let (reg, state) = setup();
        let e = Engine::new(&reg, EngineConfig::dfs(10));
        let op = Operation::transfer("A", 5000).from_src("ext");
        let run = e.run_transaction(&state, op.clone()).unwrap();
        assert_eq!(run.outcome, Outcome::Aborted(AbortReason::InsufficientBalance(op)));
    }

    #[test]
    fn dfs_and_bfs_queue_laws() {
        let (reg, state) = setup();
        let p = Value::Seq(vec![Value::addr("B"), Value::addr("B")]);
        for sched in [SchedulerKind::Dfs, SchedulerKind::Bfs] {
            let e = Engine::new(&reg, EngineConfig::new(sched, 100));
            let run = e.run_ops(&state, vec![ext_call("A", p.clone()), ext_call("B", Value::Seq(vec![]))], 100).unwrap();
            let first = &run.trace.records[0];
            let labels: Vec<_> = first.queue_after.iter().map(|o| o.src.to_string()).collect();
            match sched {
                SchedulerKind::Dfs => assert_eq!(labels, ["A", "A", "ext"]),
                SchedulerKind::Bfs => assert_eq!(labels, ["ext", "A", "A"]),
            }
        }
    }

    #[test]
    fn unknown_method_is_contract_fail() {
        let (reg, state) = setup();
        let e = Engine::new(&reg, EngineConfig::dfs(10));
        let run = e.run_transaction(&state, Operation::call("A", "nope", Value::Unit).from_src("ext")).unwrap();
        assert!(matches!(run.outcome, Outcome::Aborted(AbortReason::ContractFail(_, _))));
    }

    #[test]
    fn setup_errors() {
        let (reg, state) = setup();
        let e = Engine::new(&reg, EngineConfig::dfs(10));
        assert_eq!(
            e.run_transaction(&state, Operation::call("A", "go", Value::Unit).from_src("B")).unwrap_err(),
            EngineError::SourceNotExternal(Address::new("B"))
        );
        assert_eq!(
            e.run_transaction(&state, Operation::call("Z", "go", Value::Unit).from_src("ext")).unwrap_err(),
            EngineError::DestinationNotContract(Address::new("Z"))
        );
        assert_eq!(e.run_ops(&state, vec![], 10).unwrap_err(), EngineError::NoOperations);
        assert_eq!(e.run_ops(&state, vec![ext_call("A", Value::Unit)], 0).unwrap_err(), EngineError::ZeroGasLimit);
    }

    #[test]
    fn recurring_spin_exhausts_gas() {
        let (reg, state) = setup();
        let e = Engine::new(&reg, EngineConfig::bfs(50));
        let run = e.run_transaction(&state, Operation::call("R", "spin", Value::Unit).from_src("ext")).unwrap();
        assert_eq!(run.outcome, Outcome::Aborted(AbortReason::GasExhausted));
        // two units per step: 25 completed steps
        assert_eq!(run.trace.ops().count(), 25);
    }

    #[test]
    fn recurring_escape_detected() {
        struct Escaper;
        impl Contract for Escaper {
            fn kind(&self) -> &str {
                "escaper"
            }
            fn step(&self, _v: &mut ContextView, _c: &Call, s: &Value) -> StepResult {
                Ok(StepOk::new(s.clone(), vec![Operation::call("A", "go", Value::Unit).recurring()]))
            }
        }
        let (mut reg, state) = setup();
        reg.insert_contract(Address::new("E"), Arc::new(Escaper));
        let e = Engine::new(&reg, EngineConfig::dfs(10));
        let run = e.run_transaction(&state, Operation::call("E", "x", Value::Unit).from_src("ext")).unwrap();
        assert!(matches!(run.outcome, Outcome::Aborted(AbortReason::RecurringEscape(_))));
    }
}
