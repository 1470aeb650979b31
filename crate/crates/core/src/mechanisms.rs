//! Execution mechanisms: context queries handed to step functions
//! (`first`, `count`, `queue`, `txmem`, `fail`) and the end-of-transaction
//! phases (storage hookups, fail-bit check).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{BudgetExceeded, HookBudget, HookupKind, Registry};
use crate::model::{AbortReason, ChainState, Context, Operation};
use crate::value::{Address, Amt, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    First,
    Count,
    Fail,
    Queue,
    TxMem,
    BStore,
    UStore,
}

impl Mechanism {
    pub const ALL: [Mechanism; 7] = [
        Mechanism::First,
        Mechanism::Count,
        Mechanism::Fail,
        Mechanism::Queue,
        Mechanism::TxMem,
        Mechanism::BStore,
        Mechanism::UStore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::First => "first",
            Mechanism::Count => "count",
            Mechanism::Fail => "fail",
            Mechanism::Queue => "queue",
            Mechanism::TxMem => "txmem",
            Mechanism::BStore => "bstore",
            Mechanism::UStore => "ustore",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown mechanism `{s}`"))
    }
}

pub type MechanismSet = BTreeSet<Mechanism>;

pub fn mechanism_set(ms: impl IntoIterator<Item = Mechanism>) -> MechanismSet {
    ms.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MechanismFault {
    #[error("mechanism `{0}` is not enabled")]
    Disabled(Mechanism),
    #[error("transaction memory accessed but the contract declares no initializer")]
    NoTxMemInit,
    #[error("cannot assign the fail bit of {0}")]
    ForeignFailBit(Address),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum TxMemSlot {
    Disabled,
    NoInit,
    Live { value: Value, touched: bool },
}

/// The read surface a step function gets, plus the effects it may request
/// (fail-bit assignment, transaction-memory writes). Queries of disabled
/// mechanisms return [`MechanismFault::Disabled`].
#[derive(Clone, Debug)]
pub struct ContextView {
    address: Address,
    block_level: u64,
    timestamp: u64,
    tx_money: Amt,
    first: Option<bool>,
    count: Option<u64>,
    queue: Option<bool>,
    txmem: TxMemSlot,
    fail_enabled: bool,
    fail_set: Option<bool>,
    readings: BTreeMap<String, Value>,
}

impl ContextView {
    /// A view for `address` with every mechanism disabled.
    pub fn new(address: Address) -> Self {
        ContextView {
            address,
            block_level: 0,
            timestamp: 0,
            tx_money: 0,
            first: None,
            count: None,
            queue: None,
            txmem: TxMemSlot::Disabled,
            fail_enabled: false,
            fail_set: None,
            readings: BTreeMap::new(),
        }
    }

    /// The view the engine hands to the operation currently executing on
    /// `address`, given the transaction context and the pending queue (the
    /// executing operation excluded).
    pub fn for_operation(
        address: &Address,
        ctx: &Context,
        pending: &[Operation],
        enabled: &MechanismSet,
        txmem: Option<Value>,
    ) -> Self {
        let mut v = ContextView::new(address.clone());
        v.block_level = ctx.block_level;
        v.timestamp = ctx.timestamp;
        v.tx_money = ctx.tx_money;
        if enabled.contains(&Mechanism::First) {
            v.first = Some(mech_first(ctx, address));
        }
        if enabled.contains(&Mechanism::Count) {
            v.count = Some(mech_count(ctx, address));
        }
        if enabled.contains(&Mechanism::Queue) {
            v.queue = Some(mech_queue(pending));
        }
        if enabled.contains(&Mechanism::TxMem) {
            v.txmem = match txmem {
                Some(value) => TxMemSlot::Live { value, touched: false },
                None => TxMemSlot::NoInit,
            };
        }
        v.fail_enabled = enabled.contains(&Mechanism::Fail);
        v
    }

    pub fn address(&self) -> &Address {
        &self.address
    }

    pub fn block_level(&self) -> u64 {
        self.block_level
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn tx_money(&self) -> Amt {
        self.tx_money
    }

    pub fn first(&mut self) -> Result<bool, MechanismFault> {
        let b = self.first.ok_or(MechanismFault::Disabled(Mechanism::First))?;
        self.readings.insert("first".into(), Value::Bool(b));
        Ok(b)
    }

    pub fn count(&mut self) -> Result<u64, MechanismFault> {
        let c = self.count.ok_or(MechanismFault::Disabled(Mechanism::Count))?;
        self.readings.insert("count".into(), Value::Int(c as i64));
        Ok(c)
    }

    pub fn queue(&mut self) -> Result<bool, MechanismFault> {
        let q = self.queue.ok_or(MechanismFault::Disabled(Mechanism::Queue))?;
        self.readings.insert("queue".into(), Value::Bool(q));
        Ok(q)
    }

    pub fn txmem(&mut self) -> Result<Value, MechanismFault> {
        match &mut self.txmem {
            TxMemSlot::Disabled => Err(MechanismFault::Disabled(Mechanism::TxMem)),
            TxMemSlot::NoInit => Err(MechanismFault::NoTxMemInit),
            TxMemSlot::Live { value, touched } => {
                let v = value.clone();
                if !*touched {
                    self.readings.entry("txmem".into()).or_insert_with(|| v.clone());
                }
                Ok(v)
            }
        }
    }

    pub fn set_txmem(&mut self, new: Value) -> Result<(), MechanismFault> {
        match &mut self.txmem {
            TxMemSlot::Disabled => Err(MechanismFault::Disabled(Mechanism::TxMem)),
            TxMemSlot::NoInit => Err(MechanismFault::NoTxMemInit),
            TxMemSlot::Live { value, touched } => {
                if !*touched {
                    self.readings.entry("txmem".into()).or_insert_with(|| value.clone());
                }
                *value = new;
                *touched = true;
                Ok(())
            }
        }
    }

    /// Assigns the fail bit of `addr`, which must be the executing contract.
    pub fn set_fail(&mut self, addr: &Address, value: bool) -> Result<(), MechanismFault> {
        if !self.fail_enabled {
            return Err(MechanismFault::Disabled(Mechanism::Fail));
        }
        if addr != &self.address {
            return Err(MechanismFault::ForeignFailBit(addr.clone()));
        }
        self.fail_set = Some(value);
        Ok(())
    }

    /// Sets this contract's own fail bit.
    pub fn set_own_fail(&mut self, value: bool) -> Result<(), MechanismFault> {
        let me = self.address.clone();
        self.set_fail(&me, value)
    }

    /// Fail-bit assignment requested during the step, if any.
    pub fn fail_effect(&self) -> Option<bool> {
        self.fail_set
    }

    /// Transaction memory after the step, if it was ever accessed.
    pub fn txmem_effect(&self) -> Option<&Value> {
        match &self.txmem {
            TxMemSlot::Live { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn readings(&self) -> &BTreeMap<String, Value> {
        &self.readings
    }

    pub fn is_enabled(&self, m: Mechanism) -> bool {
        match m {
            Mechanism::First => self.first.is_some(),
            Mechanism::Count => self.count.is_some(),
            Mechanism::Queue => self.queue.is_some(),
            Mechanism::TxMem => self.txmem != TxMemSlot::Disabled,
            Mechanism::Fail => self.fail_enabled,
            Mechanism::BStore | Mechanism::UStore => false,
        }
    }

    // Builders used by transformers to hand a simulated view to a wrapped
    // contract.

    /// Copy of this view with no readings and no effects recorded.
    pub fn child(&self) -> ContextView {
        let mut c = self.clone();
        c.readings.clear();
        c.fail_set = None;
        if let TxMemSlot::Live { touched, .. } = &mut c.txmem {
            *touched = false;
        }
        c
    }

    pub fn with_first(mut self, first: Option<bool>) -> Self {
        self.first = first;
        self
    }

    pub fn with_count(mut self, count: Option<u64>) -> Self {
        self.count = count;
        self
    }

    pub fn with_queue(mut self, queue: Option<bool>) -> Self {
        self.queue = queue;
        self
    }

    /// `Some(v)` installs a live transaction memory holding `v`; `None`
    /// disables the mechanism.
    pub fn with_txmem(mut self, txmem: Option<Value>) -> Self {
        self.txmem = match txmem {
            Some(value) => TxMemSlot::Live { value, touched: false },
            None => TxMemSlot::Disabled,
        };
        self
    }

    pub fn with_fail(mut self, enabled: bool) -> Self {
        self.fail_enabled = enabled;
        self.fail_set = None;
        self
    }

    /// Propagates readings and effects of a child view back into this one,
    /// skipping the mechanisms in `simulated`.
    pub fn absorb(&mut self, child: &ContextView, simulated: &[Mechanism]) {
        for (k, v) in &child.readings {
            let m: Mechanism = match k.parse() {
                Ok(m) => m,
                Err(_) => continue,
            };
            if !simulated.contains(&m) {
                self.readings.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        if !simulated.contains(&Mechanism::Fail) {
            if let Some(b) = child.fail_set {
                self.fail_set = Some(b);
            }
        }
        if !simulated.contains(&Mechanism::TxMem) {
            if let (TxMemSlot::Live { value, touched: true }, TxMemSlot::Live { .. }) =
                (&child.txmem, &self.txmem)
            {
                let v = value.clone();
                if let TxMemSlot::Live { value, touched } = &mut self.txmem {
                    *value = v;
                    *touched = true;
                }
            }
        }
    }

    /// A view that reproduces the readings recorded in an observation; used
    /// to replay a recorded step.
    pub fn replay(address: Address, readings: &BTreeMap<String, Value>, fail_enabled: bool) -> Self {
        let mut v = ContextView::new(address);
        v.first = readings.get("first").and_then(Value::as_bool);
        v.count = readings.get("count").and_then(Value::as_int).map(|c| c as u64);
        v.queue = readings.get("queue").and_then(Value::as_bool);
        if let Some(t) = readings.get("txmem") {
            v.txmem = TxMemSlot::Live { value: t.clone(), touched: false };
        }
        v.fail_enabled = fail_enabled;
        v
    }
}

/// `first`: true iff the executing operation is the contract's first in the
/// transaction. The count already includes the executing operation.
pub fn mech_first(ctx: &Context, addr: &Address) -> bool {
    ctx.count(addr) == 1
}

/// `count`: operations on `addr` started so far, the executing one included.
pub fn mech_count(ctx: &Context, addr: &Address) -> u64 {
    ctx.count(addr)
}

/// `queue`: true iff every pending operation is recurring.
pub fn mech_queue(pending: &[Operation]) -> bool {
    pending.iter().all(|o| o.recurring)
}

/// Applies a fail-bit assignment for the executing contract.
pub fn mech_set_fail(ctx: &mut Context, executing: &Address, addr: &Address, value: bool) -> Result<(), MechanismFault> {
    if executing != addr {
        return Err(MechanismFault::ForeignFailBit(addr.clone()));
    }
    ctx.fail_bits.insert(addr.clone(), value);
    Ok(())
}

/// End-of-transaction fail check: passes iff no fail bit is raised.
pub fn end_of_tx_fail_check(ctx: &Context) -> Result<(), AbortReason> {
    let raised = ctx.raised_fail_bits();
    if raised.is_empty() {
        Ok(())
    } else {
        Err(AbortReason::FailBitSet(raised))
    }
}

/// One hookup execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HookupStep {
    pub addr: Address,
    pub storage_before: Value,
    pub balance: Amt,
    pub storage_after: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HookupError {
    /// An unbounded hookup failed: the transaction aborts.
    #[error("hookup of {0} failed: {1}")]
    Failed(Address, String),
    /// A bounded hookup ran past its budget. This is a scenario-authoring
    /// error, not a transaction outcome.
    #[error("bounded hookup of {0}: {1}")]
    Budget(Address, BudgetExceeded),
}

/// Runs the hookup of `kind` for one contract, updating its storage in
/// place. Contracts without such a hookup are left untouched.
pub fn run_hookup(
    registry: &Registry,
    state: &mut ChainState,
    addr: &Address,
    kind: HookupKind,
) -> Result<Option<HookupStep>, HookupError> {
    let Some(c) = registry.contract(addr) else { return Ok(None) };
    if c.hookup_kind() != Some(kind) {
        return Ok(None);
    }
    let acct = state.accounts.entry(addr.clone()).or_default();
    let before = acct.storage.clone();
    let after = match kind {
        HookupKind::Bounded => {
            let mut budget = HookBudget::default();
            c.bstore(&before, acct.balance, &mut budget)
                .map_err(|e| HookupError::Budget(addr.clone(), e))?
        }
        HookupKind::Unbounded => c
            .ustore(&before, acct.balance)
            .map_err(|why| HookupError::Failed(addr.clone(), why))?,
    };
    acct.storage = after.clone();
    Ok(Some(HookupStep { addr: addr.clone(), storage_before: before, balance: acct.balance, storage_after: after }))
}

/// Runs the storage hookups of `kind` once per visited contract, in
/// first-visit order.
pub fn run_hookups(
    registry: &Registry,
    state: &ChainState,
    ctx: &Context,
    kind: HookupKind,
) -> Result<(ChainState, Vec<HookupStep>), HookupError> {
    let mut state = state.clone();
    let mut steps = Vec::new();
    for addr in &ctx.visited {
        if let Some(step) = run_hookup(registry, &mut state, addr, kind)? {
            steps.push(step);
        }
    }
    Ok((state, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Address {
        Address::new("A")
    }

    #[test]
    fn first_and_count_inclusive() {
        let mut ctx = Context::fresh(0, 0, 10, 0);
        ctx.enter(&a());
        assert!(mech_first(&ctx, &a()));
        assert_eq!(mech_count(&ctx, &a()), 1);
        ctx.enter(&a());
        assert!(!mech_first(&ctx, &a()));
        assert_eq!(mech_count(&ctx, &a()), 2);
    }

    #[test]
    fn queue_info() {
        let c1 = Operation::call("C", "f", Value::Unit);
        let r = Operation::call("A", "check", Value::Unit).recurring();
        assert!(mech_queue(&[]));
        assert!(!mech_queue(std::slice::from_ref(&c1)));
        assert!(mech_queue(&[r.clone(), r.clone()]));
        assert!(!mech_queue(&[r, c1]));
    }

    #[test]
    fn disabled_queries_fault() {
        let mut v = ContextView::new(a());
        assert_eq!(v.first(), Err(MechanismFault::Disabled(Mechanism::First)));
        assert_eq!(v.count(), Err(MechanismFault::Disabled(Mechanism::Count)));
        assert_eq!(v.queue(), Err(MechanismFault::Disabled(Mechanism::Queue)));
        assert_eq!(v.txmem(), Err(MechanismFault::Disabled(Mechanism::TxMem)));
        assert_eq!(v.set_own_fail(true), Err(MechanismFault::Disabled(Mechanism::Fail)));
        assert!(v.readings().is_empty());
    }

    #[test]
    fn foreign_fail_bit_rejected() {
        let mut v = ContextView::new(a()).with_fail(true);
        assert_eq!(
            v.set_fail(&Address::new("B"), true),
            Err(MechanismFault::ForeignFailBit(Address::new("B")))
        );
        v.set_fail(&a(), true).unwrap();
        assert_eq!(v.fail_effect(), Some(true));

        let mut ctx = Context::default();
        assert!(mech_set_fail(&mut ctx, &a(), &Address::new("B"), true).is_err());
        mech_set_fail(&mut ctx, &a(), &a(), true).unwrap();
        assert_eq!(ctx.fail_bits.get(&a()), Some(&true));
    }

    #[test]
    fn fail_check_lists_all_raised() {
        let mut ctx = Context::default();
        assert!(end_of_tx_fail_check(&ctx).is_ok());
        ctx.fail_bits.insert(a(), false);
        assert!(end_of_tx_fail_check(&ctx).is_ok());
        ctx.fail_bits.insert(a(), true);
        ctx.fail_bits.insert(Address::new("B"), true);
        match end_of_tx_fail_check(&ctx) {
            Err(AbortReason::FailBitSet(s)) => assert_eq!(s.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn txmem_reads_and_writes() {
        let mut v = ContextView::new(a()).with_txmem(Some(Value::Bool(true)));
        assert_eq!(v.txmem().unwrap(), Value::Bool(true));
        v.set_txmem(Value::Bool(false)).unwrap();
        assert_eq!(v.txmem().unwrap(), Value::Bool(false));
        assert_eq!(v.txmem_effect(), Some(&Value::Bool(false)));
        // the reading records the value seen on first access
        assert_eq!(v.readings().get("txmem"), Some(&Value::Bool(true)));
    }

    #[test]
    fn absorb_skips_simulated() {
        let outer = ContextView::new(a()).with_fail(true).with_first(Some(true));
        let mut child = outer.child().with_count(Some(3));
        child.count().unwrap();
        child.first().unwrap();
        child.set_own_fail(true).unwrap();
        let mut outer = outer;
        outer.absorb(&child, &[Mechanism::Count]);
        assert!(outer.readings().contains_key("first"));
        assert!(!outer.readings().contains_key("count"));
        assert_eq!(outer.fail_effect(), Some(true));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in Mechanism::ALL {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("views".parse::<Mechanism>().is_err());
    }
}
