//! Contract-to-contract compilers: each wraps a contract written against one
//! mechanism (or a transaction monitor) into a contract that only uses
//! another, with the same observable behaviour.
//!
//! Wrapped storage is a record `{inner: <original storage>, ...extras}`.
//! [`TransformedContract::embed`] builds it from an original storage and
//! [`TransformedContract::project`] maps it back for comparisons. Methods
//! added by a wrapper start with `__` and only accept calls from the
//! contract itself.

use std::fmt;
use std::sync::Arc;

use crate::contract::{fail, Call, Contract, ContractRef, HookBudget, HookupKind, StepFail, StepOk, StepResult};
use crate::contract::BudgetExceeded;
use crate::mechanisms::{mechanism_set, ContextView, Mechanism, MechanismSet};
use crate::model::Operation;
use crate::value::{Amt, Value};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("{transformer} refused `{contract}`: {why}")]
    Refused { transformer: &'static str, contract: String, why: String },
}

type StorageMap = Arc<dyn Fn(&Value) -> Value + Send + Sync>;

/// A wrapper contract plus the maps between original and wrapped storage.
#[derive(Clone)]
pub struct TransformedContract {
    pub name: String,
    pub contract: ContractRef,
    pub wrapped: ContractRef,
    /// Added storage fields, as `(field, description)`.
    pub extra_storage_schema: Vec<(String, String)>,
    embed: StorageMap,
    project: StorageMap,
}

impl TransformedContract {
    /// Wrapped storage for a contract whose original storage is `original`.
    pub fn embed(&self, original: &Value) -> Value {
        (self.embed)(original)
    }

    /// Original storage as seen through the wrapper.
    pub fn project(&self, wrapped: &Value) -> Value {
        (self.project)(wrapped)
    }

    /// Applies another transformer on top of this one, composing the
    /// storage maps.
    pub fn then<F>(self, f: F) -> Result<TransformedContract, TransformError>
    where
        F: FnOnce(ContractRef) -> Result<TransformedContract, TransformError>,
    {
        let outer = f(self.contract.clone())?;
        let (e1, p1, e2, p2) = (self.embed, self.project, outer.embed.clone(), outer.project.clone());
        let mut schema = self.extra_storage_schema;
        schema.extend(outer.extra_storage_schema.iter().cloned());
        Ok(TransformedContract {
            name: format!("{} . {}", outer.name, self.name),
            contract: outer.contract,
            wrapped: self.wrapped,
            extra_storage_schema: schema,
            embed: Arc::new(move |v| e2(&e1(v))),
            project: Arc::new(move |v| p1(&p2(v))),
        })
    }
}

impl fmt::Debug for TransformedContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformedContract")
            .field("name", &self.name)
            .field("wrapped", &self.wrapped.kind())
            .field("extra_storage_schema", &self.extra_storage_schema)
            .finish()
    }
}

fn inner_of(v: &Value) -> Value {
    v.get("inner").cloned().unwrap_or_default()
}

fn build(
    name: &'static str,
    wrapped: ContractRef,
    contract: ContractRef,
    extras: &[(&str, &str, Value)],
) -> TransformedContract {
    let defaults: Vec<(String, Value)> = extras.iter().map(|(f, _, v)| (f.to_string(), v.clone())).collect();
    TransformedContract {
        name: name.to_string(),
        contract,
        wrapped,
        extra_storage_schema: extras.iter().map(|(f, d, _)| (f.to_string(), d.to_string())).collect(),
        embed: Arc::new(move |orig| {
            let mut fields = vec![("inner".to_string(), orig.clone())];
            fields.extend(defaults.iter().cloned());
            Value::rec(fields)
        }),
        project: Arc::new(inner_of),
    }
}

fn require_only(name: &'static str, c: &ContractRef, allowed: &[Mechanism]) -> Result<(), TransformError> {
    let extra: Vec<_> = c.mechanisms().into_iter().filter(|m| !allowed.contains(m)).collect();
    if extra.is_empty() {
        Ok(())
    } else {
        let names: Vec<_> = extra.iter().map(|m| m.name()).collect();
        Err(refuse(name, c, format!("uses unsupported mechanisms {}", names.join(", "))))
    }
}

fn refuse(name: &'static str, c: &ContractRef, why: impl Into<String>) -> TransformError {
    TransformError::Refused { transformer: name, contract: c.kind().to_string(), why: why.into() }
}

fn is_wrapper_method(m: &str) -> bool {
    m.starts_with("__")
}

fn reject_wrapper_call(call: &Call) -> Result<(), StepFail> {
    if is_wrapper_method(&call.method) {
        return fail(format!("no method `{}`", call.method));
    }
    Ok(())
}

fn field_bool(v: &Value, f: &str) -> bool {
    v.get(f).and_then(Value::as_bool).unwrap_or(false)
}

fn field_int(v: &Value, f: &str) -> i64 {
    v.get(f).and_then(Value::as_int).unwrap_or(0)
}

/// A view for the wrapped contract: every mechanism the wrapper itself
/// relies on is hidden, simulated ones are installed by the caller.
fn hidden(view: &ContextView) -> ContextView {
    view.child().with_first(None).with_count(None).with_queue(None).with_txmem(None).with_fail(false)
}

// ---------------------------------------------------------------------------
// first simulated by count, txmem and bstore, and the reverse

struct CountViaFirst(ContractRef);

impl Contract for CountViaFirst {
    fn kind(&self) -> &str {
        "count_via_first"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let n = if view.first()? { 1 } else { field_int(storage, "a_count") + 1 };
        let mut child = hidden(view).with_count(Some(n as u64));
        let r = self.0.step(&mut child, call, &inner_of(storage))?;
        view.absorb(&child, &[Mechanism::Count, Mechanism::First]);
        let st = storage.with("inner", r.storage).with("a_count", Value::Int(n));
        Ok(StepOk::new(st, r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }
}

/// Simulates `count` with `first` and a stored counter reset on the first
/// call of each transaction.
pub fn sim_count_via_first(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_count_via_first";
    require_only(NAME, &c, &[Mechanism::Count])?;
    let w: ContractRef = Arc::new(CountViaFirst(c.clone()));
    Ok(build(NAME, c, w, &[("a_count", "calls so far in the current transaction", Value::Int(0))]))
}

struct FirstViaCount(ContractRef);

impl Contract for FirstViaCount {
    fn kind(&self) -> &str {
        "first_via_count"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let first = view.count()? == 1;
        let mut child = hidden(view).with_first(Some(first));
        let r = self.0.step(&mut child, call, &inner_of(storage))?;
        view.absorb(&child, &[Mechanism::Count, Mechanism::First]);
        Ok(StepOk::new(storage.with("inner", r.storage), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::Count])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }
}

/// Simulates `first` as `count == 1`.
pub fn sim_first_via_count(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_first_via_count";
    require_only(NAME, &c, &[Mechanism::First])?;
    let w: ContractRef = Arc::new(FirstViaCount(c.clone()));
    Ok(build(NAME, c, w, &[]))
}

struct FirstViaTxMem(ContractRef);

impl Contract for FirstViaTxMem {
    fn kind(&self) -> &str {
        "first_via_txmem"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let b_init = view.txmem()?.as_bool().unwrap_or(false);
        let mut child = hidden(view).with_first(Some(b_init));
        let r = self.0.step(&mut child, call, &inner_of(storage))?;
        view.absorb(&child, &[Mechanism::First, Mechanism::TxMem]);
        view.set_txmem(Value::Bool(false))?;
        Ok(StepOk::new(storage.with("inner", r.storage), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::TxMem])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }

    fn txmem_init(&self, _storage: &Value) -> Option<Value> {
        Some(Value::Bool(true))
    }
}

/// Simulates `first` with a transaction-memory flag initialized to true and
/// cleared at the end of every method.
pub fn sim_first_via_txmem(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_first_via_txmem";
    require_only(NAME, &c, &[Mechanism::First])?;
    let w: ContractRef = Arc::new(FirstViaTxMem(c.clone()));
    Ok(build(NAME, c, w, &[]))
}

struct TxMemViaFirst(ContractRef);

impl Contract for TxMemViaFirst {
    fn kind(&self) -> &str {
        "txmem_via_first"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let inner = inner_of(storage);
        let tm = if view.first()? { self.0.txmem_init(&inner) } else { storage.get("tm").cloned() };
        let mut child = hidden(view).with_txmem(tm.clone());
        let r = self.0.step(&mut child, call, &inner)?;
        view.absorb(&child, &[Mechanism::First, Mechanism::TxMem]);
        let tm = child.txmem_effect().cloned().or(tm).unwrap_or_default();
        Ok(StepOk::new(storage.with("inner", r.storage).with("tm", tm), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }
}

/// Simulates transaction memory with a storage copy `tm` re-initialized on
/// the first call of each transaction.
pub fn sim_txmem_via_first(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_txmem_via_first";
    require_only(NAME, &c, &[Mechanism::TxMem])?;
    let w: ContractRef = Arc::new(TxMemViaFirst(c.clone()));
    Ok(build(NAME, c, w, &[("tm", "copy of the transaction memory", Value::Unit)]))
}

struct BStoreViaFirst(ContractRef);

impl Contract for BStoreViaFirst {
    fn kind(&self) -> &str {
        "bstore_via_first"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let mut inner = inner_of(storage);
        if view.first()? {
            // flush the hookup result of the previous transaction
            if let Some(s) = storage.get("s_hookup").filter(|s| **s != Value::Unit) {
                inner = s.clone();
            }
        }
        let mut child = hidden(view);
        let r = self.0.step(&mut child, call, &inner)?;
        view.absorb(&child, &[Mechanism::First]);
        let mut budget = HookBudget::default();
        let hooked = self
            .0
            .bstore(&r.storage, call.balance, &mut budget)
            .map_err(|e| StepFail::new(e.to_string()))?;
        Ok(StepOk::new(storage.with("inner", r.storage).with("s_hookup", hooked), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }
}

/// Simulates a bounded storage hookup: every method stores the hookup of
/// its resulting storage in `s_hookup`, which the next transaction's first
/// call copies into the live storage. The projection reads `s_hookup`.
pub fn sim_bstore_via_first(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_bstore_via_first";
    require_only(NAME, &c, &[Mechanism::BStore])?;
    if c.hookup_kind() == Some(HookupKind::Unbounded) {
        return Err(refuse(NAME, &c, "has an unbounded hookup"));
    }
    let w: ContractRef = Arc::new(BStoreViaFirst(c.clone()));
    let mut t = build(NAME, c, w, &[("s_hookup", "hookup applied to the latest storage", Value::Unit)]);
    t.project = Arc::new(|v| match v.get("s_hookup") {
        Some(s) if *s != Value::Unit => s.clone(),
        _ => inner_of(v),
    });
    Ok(t)
}

struct FirstViaBStore(ContractRef);

impl Contract for FirstViaBStore {
    fn kind(&self) -> &str {
        "first_via_bstore"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let mut child = hidden(view).with_first(Some(field_bool(storage, "b_fst")));
        let r = self.0.step(&mut child, call, &inner_of(storage))?;
        view.absorb(&child, &[Mechanism::First]);
        Ok(StepOk::new(storage.with("inner", r.storage).with("b_fst", Value::Bool(false)), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::BStore])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }

    fn hookup_kind(&self) -> Option<HookupKind> {
        Some(HookupKind::Bounded)
    }

    fn bstore(&self, storage: &Value, _balance: Amt, budget: &mut HookBudget) -> Result<Value, BudgetExceeded> {
        budget.tick(1)?;
        Ok(storage.with("b_fst", Value::Bool(true)))
    }
}

/// Simulates `first` with a flag `b_fst` cleared by every method and set
/// back by a bounded hookup.
pub fn sim_first_via_bstore(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_first_via_bstore";
    require_only(NAME, &c, &[Mechanism::First])?;
    let w: ContractRef = Arc::new(FirstViaBStore(c.clone()));
    Ok(build(NAME, c, w, &[("b_fst", "true until the first call of a transaction", Value::Bool(true))]))
}

// ---------------------------------------------------------------------------
// Fail bits and monitors

/// Runs the wrapped step with a simulated fail bit and returns the updated
/// `fl` flag next to the result.
fn step_with_fail_bit(
    inner: &ContractRef,
    view: &mut ContextView,
    call: &Call,
    storage: &Value,
    simulated: &[Mechanism],
) -> Result<(StepOk, bool), StepFail> {
    let mut child = hidden(view).with_fail(true);
    let r = inner.step(&mut child, call, &inner_of(storage))?;
    view.absorb(&child, simulated);
    let fl = child.fail_effect().unwrap_or_else(|| field_bool(storage, "fl"));
    Ok((r, fl))
}

struct FailViaUStore(ContractRef);

impl Contract for FailViaUStore {
    fn kind(&self) -> &str {
        "fail_via_ustore"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let (r, fl) = step_with_fail_bit(&self.0, view, call, storage, &[Mechanism::Fail])?;
        Ok(StepOk::new(storage.with("inner", r.storage).with("fl", Value::Bool(fl)), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::UStore])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }

    fn hookup_kind(&self) -> Option<HookupKind> {
        Some(HookupKind::Unbounded)
    }

    fn ustore(&self, storage: &Value, _balance: Amt) -> Result<Value, String> {
        if field_bool(storage, "fl") {
            Err("fail bit set".into())
        } else {
            Ok(storage.clone())
        }
    }
}

/// Simulates the fail bit with a stored flag `fl` that an unbounded hookup
/// checks at the end of the transaction.
pub fn sim_fail_via_ustore(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_fail_via_ustore";
    require_only(NAME, &c, &[Mechanism::Fail])?;
    let w: ContractRef = Arc::new(FailViaUStore(c.clone()));
    Ok(build(NAME, c, w, &[("fl", "simulated fail bit", Value::Bool(false))]))
}

struct MonitorViaFirstFail(ContractRef);

impl Contract for MonitorViaFirstFail {
    fn kind(&self) -> &str {
        "monitor_via_first_fail"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        reject_wrapper_call(call)?;
        let hooks = self.0.monitor().expect("checked when transforming");
        let inner = inner_of(storage);
        let mut mon = storage.get("mon").cloned().unwrap_or_default();
        let (start, mut net) = if view.first()? {
            let start = call.balance - call.money;
            mon = hooks.init(&inner, start, &mon).map_err(|e| StepFail::new(format!("init: {e}")))?;
            (start, 0i64)
        } else {
            (field_int(storage, "start") as Amt, field_int(storage, "net"))
        };
        mon = hooks.begin(call, &mon).map_err(|e| StepFail::new(format!("begin: {e}")))?;

        let uses_first = self.0.mechanisms().contains(&Mechanism::First);
        let mut child = view.child().with_fail(false);
        if !uses_first {
            child = child.with_first(None);
        }
        let r = self.0.step(&mut child, call, &inner)?;
        view.absorb(&child, if uses_first { &[Mechanism::Fail] } else { &[Mechanism::Fail, Mechanism::First] });

        mon = hooks.end(&r.emitted, &r.storage, &mon).map_err(|e| StepFail::new(format!("end: {e}")))?;
        let outgoing: Amt = r.emitted.iter().map(|o| o.money).sum();
        net += call.money as i64 - outgoing as i64;
        // the balance this contract will hold once its emitted operations ran
        let projected = (start as i64 + net).max(0) as Amt;
        let pass = hooks.term(&r.storage, projected, &mon).is_ok();
        view.set_own_fail(!pass)?;
        let st = storage
            .with("inner", r.storage)
            .with("mon", mon)
            .with("start", Value::Int(start as i64))
            .with("net", Value::Int(net));
        Ok(StepOk::new(st, r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        let mut s = self.0.mechanisms();
        s.extend([Mechanism::First, Mechanism::Fail]);
        s
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        self.0.is_recurring_method(m)
    }

    fn txmem_init(&self, storage: &Value) -> Option<Value> {
        self.0.txmem_init(&inner_of(storage))
    }
}

/// Inlines a transaction monitor: `first` triggers `init`, every method runs
/// `begin`/`end` around the original step, and instead of failing in
/// `term` the wrapper sets its fail bit to the verdict `term` would give on
/// the storage and balance left by the call.
pub fn monitor_via_first_fail(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "monitor_via_first_fail";
    if c.monitor().is_none() {
        return Err(refuse(NAME, &c, "has no monitor hooks"));
    }
    if c.mechanisms().contains(&Mechanism::Fail) {
        return Err(refuse(NAME, &c, "already owns its fail bit"));
    }
    if c.hookup_kind().is_some() || c.mechanisms().contains(&Mechanism::TxMem) {
        return Err(refuse(NAME, &c, "uses hookups or transaction memory"));
    }
    let w: ContractRef = Arc::new(MonitorViaFirstFail(c.clone()));
    Ok(build(
        NAME,
        c,
        w,
        &[
            ("mon", "monitor storage", Value::Unit),
            ("start", "balance before the transaction", Value::Int(0)),
            ("net", "money received minus money sent in this transaction", Value::Int(0)),
        ],
    ))
}

// ---------------------------------------------------------------------------
// BFS constructions with recurring operations

const CHECK_FAIL: &str = "__check_fail";
const HOOKUP: &str = "__hookup";

fn self_op(view: &ContextView, method: &str) -> Operation {
    Operation::call(view.address().clone(), method, Value::Unit).recurring()
}

fn only_self(view: &ContextView, call: &Call) -> Result<(), StepFail> {
    if &call.src != view.address() {
        return fail("invalid caller");
    }
    Ok(())
}

struct FailViaRecurring(ContractRef);

impl Contract for FailViaRecurring {
    fn kind(&self) -> &str {
        "fail_via_recurring"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        if call.method == CHECK_FAIL {
            only_self(view, call)?;
            return if field_bool(storage, "fl") {
                Ok(StepOk::new(storage.clone(), vec![self_op(view, CHECK_FAIL)]))
            } else {
                Ok(StepOk::idle(&storage.with("armed", Value::Bool(false))))
            };
        }
        reject_wrapper_call(call)?;
        let (r, fl) = step_with_fail_bit(&self.0, view, call, storage, &[Mechanism::Fail])?;
        let mut st = storage.with("inner", r.storage).with("fl", Value::Bool(fl));
        let mut emitted = r.emitted;
        if fl && !field_bool(storage, "armed") {
            emitted.push(self_op(view, CHECK_FAIL));
            st = st.with("armed", Value::Bool(true));
        }
        Ok(StepOk::new(st, emitted))
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        m == CHECK_FAIL || self.0.is_recurring_method(m)
    }
}

/// BFS only: simulates the fail bit with a recurring `__check_fail` that
/// re-injects itself while the flag is set, so a flag still set when the
/// queue drains exhausts the gas.
pub fn sim_fail_via_recurring_bfs(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_fail_via_recurring_bfs";
    require_only(NAME, &c, &[Mechanism::Fail])?;
    let w: ContractRef = Arc::new(FailViaRecurring(c.clone()));
    Ok(build(
        NAME,
        c,
        w,
        &[
            ("fl", "simulated fail bit", Value::Bool(false)),
            ("armed", "a check is pending", Value::Bool(false)),
        ],
    ))
}

/// Shared bookkeeping of the recurring hookup wrappers: after an ordinary
/// method, mark the storage dirty and make sure one `__hookup` is queued.
fn after_method(view: &ContextView, storage: Value, mut emitted: Vec<Operation>) -> StepOk {
    let mut st = storage.with("dirty", Value::Bool(true));
    if !field_bool(&st, "pending") {
        emitted.push(self_op(view, HOOKUP));
        st = st.with("pending", Value::Bool(true));
    }
    StepOk::new(st, emitted)
}

struct UStoreViaFirst(ContractRef);

impl Contract for UStoreViaFirst {
    fn kind(&self) -> &str {
        "ustore_via_first"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        if call.method == HOOKUP {
            only_self(view, call)?;
            if field_bool(storage, "dirty") {
                // let the operations emitted since the last check run first
                let st = storage.with("dirty", Value::Bool(false));
                return Ok(StepOk::new(st, vec![self_op(view, HOOKUP)]));
            }
            return match self.0.ustore(&inner_of(storage), call.balance) {
                Ok(s) => Ok(StepOk::idle(&storage.with("shadow", s).with("pending", Value::Bool(false)))),
                Err(_) => Ok(StepOk::new(storage.clone(), vec![self_op(view, HOOKUP)])),
            };
        }
        reject_wrapper_call(call)?;
        let mut st = storage.clone();
        if view.first()? {
            if let Some(s) = storage.get("shadow").filter(|s| **s != Value::Unit) {
                st = st.with("inner", s.clone());
            }
        }
        let mut child = hidden(view);
        let r = self.0.step(&mut child, call, &inner_of(&st))?;
        view.absorb(&child, &[Mechanism::First]);
        Ok(after_method(view, st.with("inner", r.storage), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        m == HOOKUP || self.0.is_recurring_method(m)
    }
}

fn hookup_extras() -> Vec<(&'static str, &'static str, Value)> {
    vec![
        ("pending", "a hookup is queued", Value::Bool(false)),
        ("dirty", "storage changed since the queued hookup was emitted", Value::Bool(false)),
    ]
}

/// BFS only: simulates an unbounded hookup with `first`. A recurring
/// `__hookup` evaluates the hook into the side storage `shadow` once the
/// contract has settled, and re-injects itself while the hook fails. The
/// next transaction's first call copies `shadow` into the live storage.
pub fn sim_ustore_via_first_bfs(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_ustore_via_first_bfs";
    require_only(NAME, &c, &[Mechanism::UStore])?;
    let w: ContractRef = Arc::new(UStoreViaFirst(c.clone()));
    let mut extras = vec![("shadow", "hookup result awaiting the next transaction", Value::Unit)];
    extras.extend(hookup_extras());
    let mut t = build(NAME, c, w, &extras);
    t.project = Arc::new(|v| match v.get("shadow") {
        Some(s) if *s != Value::Unit => s.clone(),
        _ => inner_of(v),
    });
    Ok(t)
}

struct UStoreViaQueue(ContractRef);

impl Contract for UStoreViaQueue {
    fn kind(&self) -> &str {
        "ustore_via_queue"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        if call.method == HOOKUP {
            only_self(view, call)?;
            if !view.queue()? {
                return Ok(StepOk::new(storage.clone(), vec![self_op(view, HOOKUP)]));
            }
            return match self.0.ustore(&inner_of(storage), call.balance) {
                Ok(s) => Ok(StepOk::idle(&storage.with("inner", s).with("pending", Value::Bool(false)))),
                Err(e) => fail(format!("hookup failed: {e}")),
            };
        }
        reject_wrapper_call(call)?;
        let mut child = hidden(view);
        let r = self.0.step(&mut child, call, &inner_of(storage))?;
        view.absorb(&child, &[Mechanism::Queue]);
        Ok(after_method(view, storage.with("inner", r.storage), r.emitted))
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::Queue])
    }

    fn is_recurring_method(&self, m: &str) -> bool {
        m == HOOKUP || self.0.is_recurring_method(m)
    }
}

/// BFS only: simulates an unbounded hookup with queue info. A recurring
/// `__hookup` waits until only recurring operations are pending, then
/// applies the hook in place or fails explicitly.
pub fn sim_ustore_via_queue_bfs(c: ContractRef) -> Result<TransformedContract, TransformError> {
    const NAME: &str = "sim_ustore_via_queue_bfs";
    require_only(NAME, &c, &[Mechanism::UStore])?;
    let w: ContractRef = Arc::new(UStoreViaQueue(c.clone()));
    Ok(build(NAME, c, w, &hookup_extras()))
}

/// Looks a transformer up by name.
pub fn by_name(name: &str) -> Option<fn(ContractRef) -> Result<TransformedContract, TransformError>> {
    Some(match name {
        "sim_count_via_first" => sim_count_via_first,
        "sim_first_via_count" => sim_first_via_count,
        "sim_first_via_txmem" => sim_first_via_txmem,
        "sim_txmem_via_first" => sim_txmem_via_first,
        "sim_bstore_via_first" => sim_bstore_via_first,
        "sim_first_via_bstore" => sim_first_via_bstore,
        "sim_fail_via_ustore" => sim_fail_via_ustore,
        "monitor_via_first_fail" => monitor_via_first_fail,
        "sim_fail_via_recurring_bfs" => sim_fail_via_recurring_bfs,
        "sim_ustore_via_first_bfs" => sim_ustore_via_first_bfs,
        "sim_ustore_via_queue_bfs" => sim_ustore_via_queue_bfs,
        _ => return None,
    })
}

pub const TRANSFORMER_NAMES: &[&str] = &[
    "sim_count_via_first",
    "sim_first_via_count",
    "sim_first_via_txmem",
    "sim_txmem_via_first",
    "sim_bstore_via_first",
    "sim_first_via_bstore",
    "sim_fail_via_ustore",
    "monitor_via_first_fail",
    "sim_fail_via_recurring_bfs",
    "sim_ustore_via_first_bfs",
    "sim_ustore_via_queue_bfs",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtins::{builtin, Probe, ProbeMode};

    fn probe(mode: ProbeMode) -> ContractRef {
        Arc::new(Probe { mode })
    }

    #[test]
    fn refuses_foreign_mechanisms() {
        assert!(sim_count_via_first(probe(ProbeMode::First)).is_err());
        assert!(sim_first_via_count(probe(ProbeMode::Count)).is_err());
        assert!(sim_fail_via_ustore(probe(ProbeMode::First)).is_err());
        assert!(sim_bstore_via_first(probe(ProbeMode::UStore)).is_err());
        let plain = builtin("sink_C", &Value::Unit, 0).unwrap().contract;
        assert!(monitor_via_first_fail(plain).is_err());
        let own_fail = builtin("lender_first_fail", &Value::Unit, 0).unwrap().contract;
        assert!(matches!(monitor_via_first_fail(own_fail), Err(TransformError::Refused { .. })));
    }

    #[test]
    fn embed_then_project_is_identity() {
        let s = Value::rec([("x", Value::Int(4))]);
        for name in TRANSFORMER_NAMES {
            let input = match *name {
                "sim_count_via_first" => probe(ProbeMode::Count),
                "sim_txmem_via_first" => probe(ProbeMode::TxMem),
                "sim_bstore_via_first" => probe(ProbeMode::BStore),
                "sim_fail_via_ustore" | "sim_fail_via_recurring_bfs" => probe(ProbeMode::Fail),
                "sim_ustore_via_first_bfs" | "sim_ustore_via_queue_bfs" => probe(ProbeMode::UStore),
                "monitor_via_first_fail" => builtin("once_monitored_A", &Value::Unit, 0).unwrap().contract,
                _ => probe(ProbeMode::First),
            };
            let t = by_name(name).unwrap()(input).unwrap();
            assert_eq!(t.project(&t.embed(&s)), s, "{name}");
        }
    }

    #[test]
    fn composition_nests_storage() {
        let t = sim_count_via_first(probe(ProbeMode::Count)).unwrap().then(sim_first_via_count).unwrap();
        let s = Value::Int(9);
        let e = t.embed(&s);
        assert_eq!(e.get("inner").and_then(|i| i.get("inner")), Some(&s));
        assert_eq!(t.project(&e), s);
        assert_eq!(t.contract.mechanisms(), mechanism_set([Mechanism::Count]));
        assert_eq!(t.extra_storage_schema.len(), 1);
    }
}
