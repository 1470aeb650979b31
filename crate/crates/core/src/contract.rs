//! Contract definitions: the pure step function plus optional hooks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mechanisms::{ContextView, MechanismFault, MechanismSet};
use crate::model::Operation;
use crate::value::{Address, Amt, Value};

/// Arguments of one invocation, as seen by the step function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub src: Address,
    pub method: String,
    pub param: Value,
    pub money: Amt,
    /// Balance of the invoked contract, incoming `money` included.
    pub balance: Amt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOk {
    pub storage: Value,
    pub emitted: Vec<Operation>,
}

impl StepOk {
    pub fn new(storage: Value, emitted: Vec<Operation>) -> Self {
        StepOk { storage, emitted }
    }

    /// Storage unchanged, nothing emitted.
    pub fn idle(storage: &Value) -> Self {
        StepOk { storage: storage.clone(), emitted: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct StepFail(pub String);

impl StepFail {
    pub fn new(why: impl Into<String>) -> Self {
        StepFail(why.into())
    }
}

impl From<MechanismFault> for StepFail {
    fn from(f: MechanismFault) -> Self {
        StepFail(f.to_string())
    }
}

pub type StepResult = Result<StepOk, StepFail>;

/// Shorthand for failing a step with a formatted message.
pub fn fail<T>(why: impl Into<String>) -> Result<T, StepFail> {
    Err(StepFail::new(why))
}

/// Abstract step budget handed to bounded storage hookups.
#[derive(Clone, Debug)]
pub struct HookBudget {
    limit: u64,
    used: u64,
}

pub const BSTORE_STEP_BUDGET: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("bounded hookup exceeded its budget of {limit} steps")]
pub struct BudgetExceeded {
    pub limit: u64,
}

impl HookBudget {
    pub fn new(limit: u64) -> Self {
        HookBudget { limit, used: 0 }
    }

    pub fn tick(&mut self, steps: u64) -> Result<(), BudgetExceeded> {
        self.used = self.used.saturating_add(steps);
        if self.used > self.limit {
            Err(BudgetExceeded { limit: self.limit })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

impl Default for HookBudget {
    fn default() -> Self {
        HookBudget::new(BSTORE_STEP_BUDGET)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HookupKind {
    /// Total and infallible.
    Bounded,
    /// May fail, aborting the transaction.
    Unbounded,
}

/// Transaction-monitor hooks. None of them can emit operations or touch
/// contract storage; they only thread the monitor storage.
pub trait MonitorHooks: Send + Sync {
    fn init(&self, _storage: &Value, _balance: Amt, monitor: &Value) -> Result<Value, String> {
        Ok(monitor.clone())
    }

    fn begin(&self, _call: &Call, monitor: &Value) -> Result<Value, String> {
        Ok(monitor.clone())
    }

    fn end(&self, _emitted: &[Operation], _storage: &Value, monitor: &Value) -> Result<Value, String> {
        Ok(monitor.clone())
    }

    /// Read-only on the monitor storage.
    fn term(&self, _storage: &Value, _balance: Amt, _monitor: &Value) -> Result<(), String> {
        Ok(())
    }
}

/// A smart contract: a deterministic step function and optional hooks.
pub trait Contract: Send + Sync {
    /// Name used in diagnostics.
    fn kind(&self) -> &str;

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult;

    /// Mechanisms the contract may query. Transformers refuse inputs whose
    /// declared set they cannot handle.
    fn mechanisms(&self) -> MechanismSet {
        MechanismSet::new()
    }

    /// Methods that may be emitted as recurring operations (self-only).
    fn is_recurring_method(&self, _method: &str) -> bool {
        false
    }

    fn monitor(&self) -> Option<&dyn MonitorHooks> {
        None
    }

    /// Initial transaction memory, computed from the storage the contract
    /// has when the transaction first reaches it.
    fn txmem_init(&self, _storage: &Value) -> Option<Value> {
        None
    }

    fn hookup_kind(&self) -> Option<HookupKind> {
        None
    }

    fn bstore(&self, storage: &Value, _balance: Amt, _budget: &mut HookBudget) -> Result<Value, BudgetExceeded> {
        Ok(storage.clone())
    }

    fn ustore(&self, storage: &Value, _balance: Amt) -> Result<Value, String> {
        Ok(storage.clone())
    }
}

pub type ContractRef = Arc<dyn Contract>;

/// The fixed address-to-contract map, plus code-less external accounts.
#[derive(Clone, Default)]
pub struct Registry {
    contracts: BTreeMap<Address, ContractRef>,
    externals: BTreeSet<Address>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_contract(mut self, addr: impl Into<Address>, c: ContractRef) -> Self {
        self.insert_contract(addr.into(), c);
        self
    }

    pub fn with_external(mut self, addr: impl Into<Address>) -> Self {
        self.externals.insert(addr.into());
        self
    }

    pub fn insert_contract(&mut self, addr: Address, c: ContractRef) {
        self.externals.remove(&addr);
        self.contracts.insert(addr, c);
    }

    pub fn insert_external(&mut self, addr: Address) {
        self.externals.insert(addr);
    }

    pub fn contract(&self, addr: &Address) -> Option<&ContractRef> {
        self.contracts.get(addr)
    }

    pub fn is_external(&self, addr: &Address) -> bool {
        self.externals.contains(addr)
    }

    pub fn knows(&self, addr: &Address) -> bool {
        self.contracts.contains_key(addr) || self.externals.contains(addr)
    }

    pub fn contracts(&self) -> impl Iterator<Item = (&Address, &ContractRef)> {
        self.contracts.iter()
    }

    pub fn externals(&self) -> impl Iterator<Item = &Address> {
        self.externals.iter()
    }
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("contracts", &self.contracts.iter().map(|(a, c)| (a, c.kind())).collect::<Vec<_>>())
            .field("externals", &self.externals)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_allows_exact_limit() {
        let mut b = HookBudget::new(3);
        assert!(b.tick(3).is_ok());
        assert_eq!(b.tick(1), Err(BudgetExceeded { limit: 3 }));
    }

    #[test]
    fn registry_contract_overrides_external() {
        struct Nop;
        impl Contract for Nop {
            fn kind(&self) -> &str {
                "nop"
            }
            fn step(&self, _: &mut ContextView, _: &Call, s: &Value) -> StepResult {
                Ok(StepOk::idle(s))
            }
        }
        let r = Registry::new().with_external("X").with_contract("X", Arc::new(Nop));
        assert!(!r.is_external(&Address::new("X")));
        assert!(r.knows(&Address::new("X")));
        assert!(!r.knows(&Address::new("Y")));
    }
}
