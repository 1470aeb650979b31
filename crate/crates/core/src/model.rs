//! Domain types shared by the engine, the monitors and the scenario harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::value::{Address, Amt, Value};

/// One invocation record: the unit the schedulers reorder.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operation {
    pub dest: Address,
    pub src: Address,
    pub method: String,
    #[serde(default)]
    pub param: Value,
    #[serde(default)]
    pub money: Amt,
    #[serde(default)]
    pub recurring: bool,
}

impl Operation {
    /// An operation with no money attached. `src` is filled in by the engine
    /// when a contract emits it.
    pub fn call(dest: impl Into<Address>, method: impl Into<String>, param: Value) -> Self {
        let dest = dest.into();
        Operation {
            src: dest.clone(),
            dest,
            method: method.into(),
            param,
            money: 0,
            recurring: false,
        }
    }

    /// A plain value transfer, delivered to the `receive` method.
    pub fn transfer(dest: impl Into<Address>, money: Amt) -> Self {
        Operation::call(dest, RECEIVE, Value::Unit).with_money(money)
    }

    pub fn with_money(mut self, money: Amt) -> Self {
        self.money = money;
        self
    }

    pub fn from_src(mut self, src: impl Into<Address>) -> Self {
        self.src = src.into();
        self
    }

    pub fn recurring(mut self) -> Self {
        self.recurring = true;
        self
    }

    /// Short `dest.method` label used in reports.
    pub fn label(&self) -> String {
        format!("{}.{}", self.dest, self.method)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}.{}({})", self.src, self.dest, self.method, self.param)?;
        if self.money > 0 {
            write!(f, "+{}", self.money)?;
        }
        if self.recurring {
            f.write_str("*")?;
        }
        Ok(())
    }
}

/// Method name that plain transfers invoke.
pub const RECEIVE: &str = "receive";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Account {
    #[serde(default)]
    pub storage: Value,
    #[serde(default)]
    pub balance: Amt,
    #[serde(default)]
    pub monitor_storage: Value,
}

impl Account {
    pub fn new(storage: Value, balance: Amt) -> Self {
        Account { storage, balance, monitor_storage: Value::Unit }
    }
}

/// Blockchain state: a finite map from addresses to accounts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ChainState {
    pub accounts: BTreeMap<Address, Account>,
}

impl ChainState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_account(mut self, addr: impl Into<Address>, account: Account) -> Self {
        self.accounts.insert(addr.into(), account);
        self
    }

    pub fn account(&self, addr: &Address) -> Option<&Account> {
        self.accounts.get(addr)
    }

    pub fn balance(&self, addr: &Address) -> Amt {
        self.accounts.get(addr).map_or(0, |a| a.balance)
    }

    pub fn storage(&self, addr: &Address) -> Option<&Value> {
        self.accounts.get(addr).map(|a| &a.storage)
    }

    /// Sum of all balances, widened so it cannot overflow.
    pub fn total_supply(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    /// Full digest, monitor storage included.
    pub fn digest(&self) -> String {
        digest_with(self, true)
    }

    /// Digest over storage and balances only; what contracts can see.
    pub fn contract_digest(&self) -> String {
        digest_with(self, false)
    }
}

/// Stable digest of a chain state. Equal states give equal digests; the
/// account map is ordered, so insertion order never matters.
pub fn digest(state: &ChainState) -> String {
    state.digest()
}

fn digest_with(state: &ChainState, monitor: bool) -> String {
    let mut h = Sha256::new();
    h.update(if monitor { b"full:" as &[u8] } else { b"contract:" });
    for (addr, acct) in &state.accounts {
        h.update(addr.as_str().len().to_le_bytes());
        h.update(addr.as_str().as_bytes());
        h.update(acct.balance.to_le_bytes());
        hash_value(&mut h, &acct.storage);
        if monitor {
            hash_value(&mut h, &acct.monitor_storage);
        }
    }
    let out = h.finalize();
    out.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn hash_value(h: &mut Sha256, v: &Value) {
    fn bytes(h: &mut Sha256, b: &[u8]) {
        h.update((b.len() as u64).to_le_bytes());
        h.update(b);
    }
    match v {
        Value::Unit => h.update([0u8]),
        Value::Bool(b) => h.update([1u8, *b as u8]),
        Value::Int(i) => {
            h.update([2u8]);
            h.update(i.to_le_bytes());
        }
        Value::Amt(a) => {
            h.update([3u8]);
            h.update(a.to_le_bytes());
        }
        Value::Addr(a) => {
            h.update([4u8]);
            bytes(h, a.as_str().as_bytes());
        }
        Value::Text(s) => {
            h.update([5u8]);
            bytes(h, s.as_bytes());
        }
        Value::Seq(xs) => {
            h.update([6u8]);
            h.update((xs.len() as u64).to_le_bytes());
            for x in xs {
                hash_value(h, x);
            }
        }
        Value::Rec(m) => {
            h.update([7u8]);
            h.update((m.len() as u64).to_le_bytes());
            for (k, x) in m {
                bytes(h, k.as_bytes());
                hash_value(h, x);
            }
        }
    }
}

/// Blockchain context: block metadata plus transaction-scoped bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Context {
    pub block_level: u64,
    pub timestamp: u64,
    pub gas_remaining: u64,
    /// Contracts that ran at least one operation, in first-visit order.
    pub visited: Vec<Address>,
    pub counts: BTreeMap<Address, u64>,
    pub fail_bits: BTreeMap<Address, bool>,
    pub txmem: BTreeMap<Address, Value>,
    pub tx_money: Amt,
}

impl Context {
    pub fn fresh(block_level: u64, timestamp: u64, gas: u64, tx_money: Amt) -> Self {
        Context { block_level, timestamp, gas_remaining: gas, tx_money, ..Default::default() }
    }

    pub fn count(&self, addr: &Address) -> u64 {
        self.counts.get(addr).copied().unwrap_or(0)
    }

    pub fn has_visited(&self, addr: &Address) -> bool {
        self.count(addr) > 0
    }

    /// Registers the start of an operation on `addr`; returns true on the
    /// first visit in this transaction.
    pub fn enter(&mut self, addr: &Address) -> bool {
        let c = self.counts.entry(addr.clone()).or_insert(0);
        *c += 1;
        if *c == 1 {
            self.visited.push(addr.clone());
            true
        } else {
            false
        }
    }

    /// Contracts whose fail bit is currently set, in address order.
    pub fn raised_fail_bits(&self) -> BTreeSet<Address> {
        self.fail_bits.iter().filter(|(_, b)| **b).map(|(a, _)| a.clone()).collect()
    }
}

/// Why a transaction aborted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail")]
pub enum AbortReason {
    ContractFail(Address, String),
    InsufficientBalance(Operation),
    GasExhausted,
    MonitorInitFail(Address),
    MonitorBeginFail(Address),
    MonitorEndFail(Address),
    MonitorTermFail(Address),
    HookupFail(Address),
    FailBitSet(BTreeSet<Address>),
    RecurringEscape(Operation),
}

impl AbortReason {
    pub fn kind(&self) -> &'static str {
        match self {
            AbortReason::ContractFail(..) => "ContractFail",
            AbortReason::InsufficientBalance(_) => "InsufficientBalance",
            AbortReason::GasExhausted => "GasExhausted",
            AbortReason::MonitorInitFail(_) => "MonitorInitFail",
            AbortReason::MonitorBeginFail(_) => "MonitorBeginFail",
            AbortReason::MonitorEndFail(_) => "MonitorEndFail",
            AbortReason::MonitorTermFail(_) => "MonitorTermFail",
            AbortReason::HookupFail(_) => "HookupFail",
            AbortReason::FailBitSet(_) => "FailBitSet",
            AbortReason::RecurringEscape(_) => "RecurringEscape",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::ContractFail(a, why) => write!(f, "ContractFail({a}: {why})"),
            AbortReason::InsufficientBalance(op) => write!(f, "InsufficientBalance({op})"),
            AbortReason::GasExhausted => f.write_str("GasExhausted"),
            AbortReason::MonitorInitFail(a) => write!(f, "MonitorInitFail({a})"),
            AbortReason::MonitorBeginFail(a) => write!(f, "MonitorBeginFail({a})"),
            AbortReason::MonitorEndFail(a) => write!(f, "MonitorEndFail({a})"),
            AbortReason::MonitorTermFail(a) => write!(f, "MonitorTermFail({a})"),
            AbortReason::HookupFail(a) => write!(f, "HookupFail({a})"),
            AbortReason::FailBitSet(s) => {
                let names: Vec<_> = s.iter().map(Address::as_str).collect();
                write!(f, "FailBitSet({})", names.join(","))
            }
            AbortReason::RecurringEscape(op) => write!(f, "RecurringEscape({op})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Committed(ChainState),
    Aborted(AbortReason),
}

impl Outcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, Outcome::Committed(_))
    }

    pub fn reason(&self) -> Option<&AbortReason> {
        match self {
            Outcome::Aborted(r) => Some(r),
            Outcome::Committed(_) => None,
        }
    }

    pub fn summary(&self) -> OutcomeSummary {
        OutcomeSummary { committed: self.is_committed(), reason: self.reason().cloned() }
    }
}

/// Outcome without the final state, for reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub committed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<AbortReason>,
}

impl fmt::Display for OutcomeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            None => f.write_str("Committed"),
            Some(r) => write!(f, "Aborted({r})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKind {
    Op,
    Init,
    Begin,
    End,
    Term,
    Hookup,
    FailBitCheck,
}

/// Everything a contract's step function could see during one invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub seq_no: u64,
    pub src: Address,
    pub method: String,
    pub param: Value,
    pub money: Amt,
    pub storage_before: Value,
    pub balance_before: Amt,
    /// Mechanism readings actually taken, keyed by mechanism name.
    #[serde(default)]
    pub mechanism_readings: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u64,
    pub kind: RecordKind,
    pub subject: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed: Option<Operation>,
    pub queue_before: Vec<Operation>,
    pub queue_after: Vec<Operation>,
    #[serde(default)]
    pub emitted: Vec<Operation>,
    pub gas_before: u64,
    pub gas_after: u64,
    /// Digest of contract storages and balances (monitor storage excluded).
    pub state_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_after: Option<Value>,
}

/// Ordered step records of one transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Trace {
    pub records: Vec<StepRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ops(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Op)
    }

    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Observations of `subject`'s step function, in invocation order.
    pub fn observations<'a>(
        &'a self,
        subject: &'a Address,
    ) -> impl Iterator<Item = (&'a StepRecord, &'a Observation)> + 'a {
        self.ops()
            .filter(move |r| &r.subject == subject)
            .filter_map(|r| r.observed.as_ref().map(|o| (r, o)))
    }

    /// Serializes one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Trace, serde_json::Error> {
        let records = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trace { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_ab(b: Amt) -> ChainState {
        ChainState::new()
            .with_account("A", Account::new(Value::Int(1), 10))
            .with_account("B", Account::new(Value::Unit, b))
    }

    #[test]
    fn empty_state_digest_is_constant() {
        let d0 = ChainState::new().digest();
        assert_eq!(d0, ChainState::default().digest());
        assert_eq!(d0.len(), 32);
    }

    #[test]
    fn digest_tracks_copies_and_changes() {
        let s = state_ab(5);
        assert_eq!(s.digest(), s.clone().digest());
        let t = state_ab(6);
        assert_ne!(s, t);
        assert_ne!(s.digest(), t.digest());
    }

    #[test]
    fn insertion_order_irrelevant() {
        let a = ChainState::new()
            .with_account("X", Account::new(Value::Unit, 1))
            .with_account("Y", Account::new(Value::Unit, 2));
        let b = ChainState::new()
            .with_account("Y", Account::new(Value::Unit, 2))
            .with_account("X", Account::new(Value::Unit, 1));
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn contract_digest_ignores_monitor_storage() {
        let s = state_ab(5);
        let mut t = s.clone();
        t.accounts.get_mut(&Address::new("A")).unwrap().monitor_storage = Value::Int(9);
        assert_eq!(s.contract_digest(), t.contract_digest());
        assert_ne!(s.digest(), t.digest());
    }

    #[test]
    fn context_enter_tracks_visits() {
        let mut ctx = Context::fresh(0, 0, 10, 0);
        let a = Address::new("A");
        assert!(ctx.enter(&a));
        assert!(!ctx.enter(&a));
        assert_eq!(ctx.count(&a), 2);
        assert_eq!(ctx.visited, vec![a]);
    }
}
