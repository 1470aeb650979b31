//! Built-in contract library: the flash-loan lenders and clients, the
//! counter-example actors, and the randomized `probe` used by the
//! differential suites.
//!
//! Every builtin is constructed from a name, a parameter record and the
//! initial balance; [`builtin`] also returns the default initial storage.

use std::sync::Arc;

use crate::contract::{fail, Call, Contract, ContractRef, HookBudget, HookupKind, MonitorHooks, StepOk, StepResult};
use crate::contract::BudgetExceeded;
use crate::mechanisms::{mechanism_set, ContextView, Mechanism, MechanismSet};
use crate::model::{Operation, RECEIVE};
use crate::value::{Address, Amt, Value};

pub const BUILTIN_NAMES: &[&str] = &[
    "lender_naive",
    "lender_trmon",
    "lender_ustore",
    "lender_first_fail",
    "lender_bfs_first",
    "lender_bfs_queue",
    "client_two_loans",
    "client_malicious",
    "invest_sink",
    "forwarder_B",
    "sink_C",
    "recursive_f",
    "once_monitored_A",
    "queue_prober_A",
    "candidate_fail_A",
    "flagger",
    "recurring_once_A",
    "probe",
];

/// A constructed builtin and its default initial storage.
pub struct Builtin {
    pub contract: ContractRef,
    pub storage: Value,
}

/// Builds the builtin `name` from its parameter record.
pub fn builtin(name: &str, params: &Value, balance: Amt) -> Result<Builtin, String> {
    let p = Params(params);
    let initial = Value::rec([("initial_balance", Value::Amt(balance))]);
    let (contract, storage): (ContractRef, Value) = match name {
        "lender_naive" => (Arc::new(LenderNaive), Value::Unit),
        "lender_trmon" => (Arc::new(LenderTrMon), Value::Unit),
        "lender_ustore" => (Arc::new(LenderUStore), initial),
        "lender_first_fail" => (Arc::new(LenderFirstFail), initial),
        "lender_bfs_first" => (Arc::new(LenderBfsFirst), initial),
        "lender_bfs_queue" => (Arc::new(LenderBfsQueue), initial),
        "client_two_loans" => {
            let lenders = p.addrs("lenders")?;
            let amounts = p.amts("amounts")?;
            if lenders.len() != amounts.len() {
                return Err("lenders and amounts differ in length".into());
            }
            let repay = match p.0.get("repay") {
                Some(_) => p.amts("repay")?,
                None => amounts.clone(),
            };
            if repay.len() != lenders.len() {
                return Err("repay and lenders differ in length".into());
            }
            let c = ClientLoans { lenders, amounts, repay, sink: p.addr("sink")? };
            (Arc::new(c), client_storage())
        }
        "client_malicious" => {
            let c = ClientMalicious { lender: p.addr("lender")?, amount: p.amt("amount")?, sink: p.addr("sink")? };
            (Arc::new(c), client_storage())
        }
        "invest_sink" => (Arc::new(InvestSink), Value::Unit),
        "forwarder_B" => {
            let plan = p.0.get("plan").cloned().unwrap_or_else(|| Value::rec::<&str>([]));
            if !matches!(plan, Value::Rec(_)) {
                return Err("plan must be a record of method -> call list".into());
            }
            (Arc::new(Forwarder { plan }), Value::Unit)
        }
        "sink_C" => (Arc::new(SinkC), Value::Unit),
        "recursive_f" => {
            let method = p.0.get("target_method").and_then(Value::as_text).unwrap_or("call").to_string();
            (Arc::new(RecursiveF { target: p.addr("target")?, method }), Value::Unit)
        }
        "once_monitored_A" => {
            let probe = probe_list(&p)?;
            (Arc::new(OnceMonitored { probe }), Value::Unit)
        }
        "queue_prober_A" => {
            let probe = p.0.get("probe").and_then(Value::as_bool).unwrap_or(true);
            (Arc::new(QueueProber { probe }), Value::Unit)
        }
        "candidate_fail_A" => {
            let policy = p.0.get("policy").and_then(Value::as_text).unwrap_or("set_true");
            let policy = FailPolicy::parse(policy, &p)?;
            let read_queue = p.0.get("read_queue").and_then(Value::as_bool).unwrap_or(false);
            (Arc::new(CandidateFail { policy, read_queue }), Value::rec([("parity", Value::Bool(false))]))
        }
        "flagger" => (Arc::new(Flagger), Value::rec([("parity", Value::Bool(false))])),
        "recurring_once_A" => (Arc::new(RecurringOnce), Value::rec([("waiting", Value::Bool(false))])),
        "probe" => {
            let mode = p.0.get("mode").and_then(Value::as_text).unwrap_or("none");
            let mode = ProbeMode::parse(mode)?;
            (Arc::new(Probe { mode }), probe_storage())
        }
        other => return Err(format!("unknown builtin `{other}`")),
    };
    Ok(Builtin { contract, storage })
}

struct Params<'a>(&'a Value);

impl Params<'_> {
    fn field(&self, f: &str) -> Result<&Value, String> {
        self.0.get(f).ok_or_else(|| format!("missing parameter `{f}`"))
    }
    fn addr(&self, f: &str) -> Result<Address, String> {
        self.field(f)?.as_addr().cloned().ok_or_else(|| format!("parameter `{f}` must be an address"))
    }
    fn amt(&self, f: &str) -> Result<Amt, String> {
        self.field(f)?.as_amt().ok_or_else(|| format!("parameter `{f}` must be an amount"))
    }
    fn addrs(&self, f: &str) -> Result<Vec<Address>, String> {
        let seq = self.field(f)?.as_seq().ok_or_else(|| format!("parameter `{f}` must be a list"))?;
        seq.iter().map(|v| v.as_addr().cloned().ok_or_else(|| format!("`{f}` entries must be addresses"))).collect()
    }
    fn amts(&self, f: &str) -> Result<Vec<Amt>, String> {
        let seq = self.field(f)?.as_seq().ok_or_else(|| format!("parameter `{f}` must be a list"))?;
        seq.iter().map(|v| v.as_amt().ok_or_else(|| format!("`{f}` entries must be amounts"))).collect()
    }
}

fn amt_field(storage: &Value, f: &str) -> Amt {
    storage.get(f).and_then(Value::as_amt).unwrap_or(0)
}

fn only_self(view: &ContextView, call: &Call) -> Result<(), crate::contract::StepFail> {
    if &call.src != view.address() {
        return fail("invalid caller");
    }
    Ok(())
}

/// `lend` parameter: an amount (lending to the caller) or `{dest, amount}`.
fn loan_request(call: &Call) -> Result<(Address, Amt), crate::contract::StepFail> {
    if let Some(a) = call.param.as_amt() {
        return Ok((call.src.clone(), a));
    }
    let amount = call.param.get("amount").and_then(Value::as_amt);
    let dest = call.param.get("dest").and_then(Value::as_addr).cloned().unwrap_or_else(|| call.src.clone());
    match amount {
        Some(a) => Ok((dest, a)),
        None => fail("lend expects an amount"),
    }
}

fn require_funds(amount: Amt, balance: Amt) -> Result<(), crate::contract::StepFail> {
    if amount > balance {
        return fail(format!("require failed: loan {amount} exceeds balance {balance}"));
    }
    Ok(())
}

fn unknown(method: &str) -> StepResult {
    fail(format!("no method `{method}`"))
}

// ---------------------------------------------------------------------------
// Lenders

/// Call/return lender: checks repayment in an explicit continuation that
/// runs after the transfer's subtree (DFS) or after the current frontier
/// (BFS).
struct LenderNaive;

impl Contract for LenderNaive {
    fn kind(&self) -> &str {
        "lender_naive"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "lend" => {
                let (dest, amount) = loan_request(call)?;
                require_funds(amount, call.balance)?;
                let initial = call.balance;
                let me = view.address().clone();
                Ok(StepOk::new(
                    storage.clone(),
                    vec![
                        Operation::transfer(dest, amount),
                        Operation::call(me, "lend_return", Value::Amt(initial)),
                    ],
                ))
            }
            "lend_return" => {
                only_self(view, call)?;
                let initial = call.param.as_amt().unwrap_or(0);
                if call.balance < initial {
                    return fail(format!("assert failed: balance {} < initial {initial}", call.balance));
                }
                Ok(StepOk::idle(storage))
            }
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }
}

fn plain_lend(call: &Call, storage: &Value) -> StepResult {
    let (dest, amount) = loan_request(call)?;
    require_funds(amount, call.balance)?;
    Ok(StepOk::new(storage.clone(), vec![Operation::transfer(dest, amount)]))
}

/// Lender guarded by a transaction monitor: `init` saves the balance,
/// `term` asserts it did not decrease.
struct LenderTrMon;

struct BalanceMonitor;

impl MonitorHooks for BalanceMonitor {
    fn init(&self, _storage: &Value, balance: Amt, _monitor: &Value) -> Result<Value, String> {
        Ok(Value::Amt(balance))
    }

    fn term(&self, _storage: &Value, balance: Amt, monitor: &Value) -> Result<(), String> {
        let initial = monitor.as_amt().ok_or("monitor storage not initialized")?;
        if balance >= initial {
            Ok(())
        } else {
            Err(format!("balance {balance} below initial {initial}"))
        }
    }
}

impl Contract for LenderTrMon {
    fn kind(&self) -> &str {
        "lender_trmon"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "lend" => plain_lend(call, storage),
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }

    fn monitor(&self) -> Option<&dyn MonitorHooks> {
        Some(&BalanceMonitor)
    }
}

/// Lender with an unbounded storage hookup asserting the balance did not
/// decrease and recording the new one.
struct LenderUStore;

impl Contract for LenderUStore {
    fn kind(&self) -> &str {
        "lender_ustore"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "lend" => plain_lend(call, storage),
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::UStore])
    }

    fn hookup_kind(&self) -> Option<HookupKind> {
        Some(HookupKind::Unbounded)
    }

    fn ustore(&self, storage: &Value, balance: Amt) -> Result<Value, String> {
        let initial = amt_field(storage, "initial_balance");
        if balance < initial {
            return Err(format!("balance {balance} below initial {initial}"));
        }
        Ok(storage.with("initial_balance", Value::Amt(balance)))
    }
}

/// Lender using `first` to snapshot the balance and the fail bit to veto
/// transactions that end below it.
struct LenderFirstFail;

impl Contract for LenderFirstFail {
    fn kind(&self) -> &str {
        "lender_first_fail"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "lend" => {
                let mut st = storage.clone();
                if view.first()? {
                    st = st.with("initial_balance", Value::Amt(call.balance));
                }
                let (dest, amount) = loan_request(call)?;
                require_funds(amount, call.balance)?;
                // check_balance after the transfer leaves
                let after = call.balance - amount;
                view.set_own_fail(after < amt_field(&st, "initial_balance"))?;
                Ok(StepOk::new(st, vec![Operation::transfer(dest, amount)]))
            }
            RECEIVE => {
                view.set_own_fail(call.balance < amt_field(storage, "initial_balance"))?;
                Ok(StepOk::idle(storage))
            }
            m => unknown(m),
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First, Mechanism::Fail])
    }
}

/// BFS lender: a recurring `check_balance` re-injects itself while the
/// balance is below the snapshot, so an unpaid loan exhausts gas.
struct LenderBfsFirst;

impl Contract for LenderBfsFirst {
    fn kind(&self) -> &str {
        "lender_bfs_first"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        let me = view.address().clone();
        let check = || Operation::call(me.clone(), "check_balance", Value::Unit).recurring();
        match call.method.as_str() {
            "lend" => {
                let mut st = storage.clone();
                if view.first()? {
                    st = st.with("initial_balance", Value::Amt(call.balance));
                }
                let (dest, amount) = loan_request(call)?;
                Ok(StepOk::new(st, vec![Operation::transfer(dest, amount), check()]))
            }
            RECEIVE => Ok(StepOk::new(storage.clone(), vec![check()])),
            "check_balance" => {
                only_self(view, call)?;
                if call.balance < amt_field(storage, "initial_balance") {
                    Ok(StepOk::new(storage.clone(), vec![check()]))
                } else {
                    Ok(StepOk::idle(storage))
                }
            }
            m => unknown(m),
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::First])
    }

    fn is_recurring_method(&self, method: &str) -> bool {
        method == "check_balance"
    }
}

/// BFS lender with queue info: `check_balance` waits until only recurring
/// operations remain, then asserts and records the balance.
struct LenderBfsQueue;

impl Contract for LenderBfsQueue {
    fn kind(&self) -> &str {
        "lender_bfs_queue"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        let me = view.address().clone();
        let check = || Operation::call(me.clone(), "check_balance", Value::Unit).recurring();
        match call.method.as_str() {
            "lend" => {
                let (dest, amount) = loan_request(call)?;
                require_funds(amount, call.balance)?;
                Ok(StepOk::new(storage.clone(), vec![Operation::transfer(dest, amount), check()]))
            }
            RECEIVE => Ok(StepOk::new(storage.clone(), vec![check()])),
            "check_balance" => {
                only_self(view, call)?;
                if view.queue()? {
                    let initial = amt_field(storage, "initial_balance");
                    if call.balance < initial {
                        return fail(format!("assert failed: balance {} < initial {initial}", call.balance));
                    }
                    Ok(StepOk::idle(&storage.with("initial_balance", Value::Amt(call.balance))))
                } else {
                    Ok(StepOk::new(storage.clone(), vec![check()]))
                }
            }
            m => unknown(m),
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::Queue])
    }

    fn is_recurring_method(&self, method: &str) -> bool {
        method == "check_balance"
    }
}

// ---------------------------------------------------------------------------
// Clients

fn client_storage() -> Value {
    Value::rec([("phase", Value::text("idle")), ("received", Value::Amt(0))])
}

fn phase(storage: &Value) -> &str {
    storage.get("phase").and_then(Value::as_text).unwrap_or("idle")
}

/// Borrows from every lender, invests the total once all loans arrived,
/// then repays each lender when the investment returns. Event driven, so it
/// works under both schedulers.
struct ClientLoans {
    lenders: Vec<Address>,
    amounts: Vec<Amt>,
    repay: Vec<Amt>,
    sink: Address,
}

impl ClientLoans {
    fn total(&self) -> Amt {
        self.amounts.iter().sum()
    }
}

impl Contract for ClientLoans {
    fn kind(&self) -> &str {
        "client_two_loans"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "borrow_and_invest" => {
                if phase(storage) != "idle" {
                    return fail("already borrowing");
                }
                let ops = self
                    .lenders
                    .iter()
                    .zip(&self.amounts)
                    .map(|(l, a)| Operation::call(l.clone(), "lend", Value::Amt(*a)))
                    .collect();
                let st = storage.with("phase", Value::text("borrowing")).with("received", Value::Amt(0));
                Ok(StepOk::new(st, ops))
            }
            RECEIVE => match phase(storage) {
                "borrowing" if self.lenders.contains(&call.src) => {
                    let received = amt_field(storage, "received")
                        .checked_add(call.money)
                        .ok_or_else(|| crate::contract::StepFail::new("overflow"))?;
                    let st = storage.with("received", Value::Amt(received));
                    if received >= self.total() {
                        let invest = Operation::call(self.sink.clone(), "invest", Value::Unit).with_money(self.total());
                        Ok(StepOk::new(st.with("phase", Value::text("investing")), vec![invest]))
                    } else {
                        Ok(StepOk::idle(&st))
                    }
                }
                "investing" if call.src == self.sink => {
                    let ops = self
                        .lenders
                        .iter()
                        .zip(&self.repay)
                        .map(|(l, r)| Operation::transfer(l.clone(), *r))
                        .collect();
                    Ok(StepOk::new(storage.with("phase", Value::text("idle")), ops))
                }
                _ => Ok(StepOk::idle(storage)),
            },
            m => unknown(m),
        }
    }
}

/// Borrows, invests, and keeps the proceeds.
struct ClientMalicious {
    lender: Address,
    amount: Amt,
    sink: Address,
}

impl Contract for ClientMalicious {
    fn kind(&self) -> &str {
        "client_malicious"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "borrow_and_invest" => Ok(StepOk::new(
                storage.with("phase", Value::text("borrowing")),
                vec![Operation::call(self.lender.clone(), "lend", Value::Amt(self.amount))],
            )),
            RECEIVE => match phase(storage) {
                "borrowing" if call.src == self.lender => Ok(StepOk::new(
                    storage.with("phase", Value::text("investing")),
                    vec![Operation::call(self.sink.clone(), "invest", Value::Unit).with_money(call.money)],
                )),
                "investing" if call.src == self.sink => Ok(StepOk::idle(&storage.with("phase", Value::text("idle")))),
                _ => Ok(StepOk::idle(storage)),
            },
            m => unknown(m),
        }
    }
}

/// Zero-profit investment: returns the principal to the caller.
struct InvestSink;

impl Contract for InvestSink {
    fn kind(&self) -> &str {
        "invest_sink"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "invest" => Ok(StepOk::new(storage.clone(), vec![Operation::transfer(call.src.clone(), call.money)])),
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }
}

// ---------------------------------------------------------------------------
// Counter-example actors

/// Emits a scripted call list per method: `plan = {method: [{dest, method,
/// param?, money?}, ...]}`.
struct Forwarder {
    plan: Value,
}

impl Contract for Forwarder {
    fn kind(&self) -> &str {
        "forwarder_B"
    }

    fn step(&self, _view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        if call.method == RECEIVE {
            return Ok(StepOk::idle(storage));
        }
        let Some(script) = self.plan.get(&call.method).and_then(Value::as_seq) else {
            return unknown(&call.method);
        };
        let mut ops = Vec::with_capacity(script.len());
        for entry in script {
            let dest = entry.get("dest").and_then(Value::as_addr).cloned();
            let method = entry.get("method").and_then(Value::as_text);
            let (Some(dest), Some(method)) = (dest, method) else {
                return fail("malformed plan entry");
            };
            let param = entry.get("param").cloned().unwrap_or_default();
            let money = entry.get("money").and_then(Value::as_amt).unwrap_or(0);
            ops.push(Operation::call(dest, method, param).with_money(money));
        }
        Ok(StepOk::new(storage.clone(), ops))
    }
}

/// Builds a forwarder plan entry.
pub fn plan_call(dest: &str, method: &str) -> Value {
    Value::rec([("dest", Value::addr(dest)), ("method", Value::text(method))])
}

/// Accepts anything, emits nothing.
struct SinkC;

impl Contract for SinkC {
    fn kind(&self) -> &str {
        "sink_C"
    }

    fn step(&self, _view: &mut ContextView, _call: &Call, storage: &Value) -> StepResult {
        Ok(StepOk::idle(storage))
    }
}

/// `f(k)` calls itself `k` times, then calls the target. `start(steps)`
/// emits, per step, `f(k)` for an `Int k` or a direct target call for `Unit`.
struct RecursiveF {
    target: Address,
    method: String,
}

impl Contract for RecursiveF {
    fn kind(&self) -> &str {
        "recursive_f"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        let me = view.address().clone();
        let target = || Operation::call(self.target.clone(), self.method.clone(), Value::Unit);
        match call.method.as_str() {
            "f" => {
                let k = call.param.as_int().unwrap_or(0);
                let op = if k > 0 { Operation::call(me, "f", Value::Int(k - 1)) } else { target() };
                Ok(StepOk::new(storage.clone(), vec![op]))
            }
            "start" => {
                let steps = call.param.as_seq().unwrap_or(&[]);
                let ops = steps
                    .iter()
                    .map(|s| match s {
                        Value::Int(k) => Operation::call(me.clone(), "f", Value::Int(*k)),
                        _ => target(),
                    })
                    .collect();
                Ok(StepOk::new(storage.clone(), ops))
            }
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }
}

/// The "only once" monitor: `init` zeroes a counter, `begin` increments it,
/// `term` rejects a count of exactly one.
pub struct OnlyOnceMonitor;

impl MonitorHooks for OnlyOnceMonitor {
    fn init(&self, _storage: &Value, _balance: Amt, _monitor: &Value) -> Result<Value, String> {
        Ok(Value::Int(0))
    }

    fn begin(&self, _call: &Call, monitor: &Value) -> Result<Value, String> {
        let n = monitor.as_int().ok_or("monitor storage read before init")?;
        Ok(Value::Int(n + 1))
    }

    fn term(&self, _storage: &Value, _balance: Amt, monitor: &Value) -> Result<(), String> {
        match monitor.as_int() {
            Some(1) => Err("called exactly once".into()),
            _ => Ok(()),
        }
    }
}

/// Monitored contract for the only-once property. Optionally reads the
/// listed mechanisms so they appear in its observations.
struct OnceMonitored {
    probe: Vec<Mechanism>,
}

fn probe_list(p: &Params) -> Result<Vec<Mechanism>, String> {
    match p.0.get("probe") {
        None => Ok(Vec::new()),
        Some(Value::Seq(xs)) => xs
            .iter()
            .map(|x| x.as_text().ok_or("probe entries must be text".to_string())?.parse::<Mechanism>())
            .collect(),
        Some(_) => Err("probe must be a list of mechanism names".into()),
    }
}

impl Contract for OnceMonitored {
    fn kind(&self) -> &str {
        "once_monitored_A"
    }

    fn step(&self, view: &mut ContextView, _call: &Call, storage: &Value) -> StepResult {
        for m in &self.probe {
            match m {
                Mechanism::First => {
                    view.first()?;
                }
                Mechanism::Count => {
                    view.count()?;
                }
                Mechanism::Queue => {
                    view.queue()?;
                }
                _ => {}
            }
        }
        Ok(StepOk::idle(storage))
    }

    fn mechanisms(&self) -> MechanismSet {
        self.probe.iter().copied().collect()
    }

    fn monitor(&self) -> Option<&dyn MonitorHooks> {
        Some(&OnlyOnceMonitor)
    }
}

/// Fails iff queue info reports pending interaction. With `probe = false`
/// it never queries and always accepts.
struct QueueProber {
    probe: bool,
}

impl Contract for QueueProber {
    fn kind(&self) -> &str {
        "queue_prober_A"
    }

    fn step(&self, view: &mut ContextView, _call: &Call, storage: &Value) -> StepResult {
        if self.probe && !view.queue()? {
            return fail("pending interaction in queue");
        }
        Ok(StepOk::idle(storage))
    }

    fn mechanisms(&self) -> MechanismSet {
        if self.probe {
            mechanism_set([Mechanism::Queue])
        } else {
            MechanismSet::new()
        }
    }
}

/// Candidate fail-bit strategies for an only-once check without `first`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FailPolicy {
    Idle,
    FailDirect,
    SetTrue,
    /// Flip a stored parity bit and set the fail bit to it.
    Toggle,
    /// Ask a helper contract to toggle its own fail bit.
    Delegate(Address),
}

impl FailPolicy {
    fn parse(s: &str, p: &Params) -> Result<Self, String> {
        Ok(match s {
            "idle" => FailPolicy::Idle,
            "fail" => FailPolicy::FailDirect,
            "set_true" => FailPolicy::SetTrue,
            "toggle" => FailPolicy::Toggle,
            "delegate" => FailPolicy::Delegate(p.addr("flagger")?),
            other => return Err(format!("unknown policy `{other}`")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FailPolicy::Idle => "idle",
            FailPolicy::FailDirect => "fail",
            FailPolicy::SetTrue => "set_true",
            FailPolicy::Toggle => "toggle",
            FailPolicy::Delegate(_) => "delegate",
        }
    }
}

fn toggled(storage: &Value) -> (Value, bool) {
    let parity = !storage.get("parity").and_then(Value::as_bool).unwrap_or(false);
    (storage.with("parity", Value::Bool(parity)), parity)
}

struct CandidateFail {
    policy: FailPolicy,
    read_queue: bool,
}

impl Contract for CandidateFail {
    fn kind(&self) -> &str {
        "candidate_fail_A"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        if call.method == RECEIVE {
            return Ok(StepOk::idle(storage));
        }
        if self.read_queue {
            view.queue()?;
        }
        match &self.policy {
            FailPolicy::Idle => Ok(StepOk::idle(storage)),
            FailPolicy::FailDirect => fail("candidate rejects"),
            FailPolicy::SetTrue => {
                view.set_own_fail(true)?;
                Ok(StepOk::idle(storage))
            }
            FailPolicy::Toggle => {
                let (st, parity) = toggled(storage);
                view.set_own_fail(parity)?;
                Ok(StepOk::idle(&st))
            }
            FailPolicy::Delegate(helper) => {
                Ok(StepOk::new(storage.clone(), vec![Operation::call(helper.clone(), "toggle", Value::Unit)]))
            }
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        let mut s = mechanism_set([Mechanism::Fail]);
        if self.read_queue {
            s.insert(Mechanism::Queue);
        }
        s
    }
}

/// Helper for [`FailPolicy::Delegate`]: flips its parity and sets its own
/// fail bit to it.
struct Flagger;

impl Contract for Flagger {
    fn kind(&self) -> &str {
        "flagger"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "toggle" => {
                let (st, parity) = toggled(storage);
                view.set_own_fail(parity)?;
                Ok(StepOk::idle(&st))
            }
            RECEIVE => Ok(StepOk::idle(storage)),
            m => unknown(m),
        }
    }

    fn mechanisms(&self) -> MechanismSet {
        mechanism_set([Mechanism::Fail])
    }
}

/// BFS only-once strategy: a lone call arms a recurring `check` that polls
/// until another call disarms it; a lone call therefore exhausts gas.
struct RecurringOnce;

impl Contract for RecurringOnce {
    fn kind(&self) -> &str {
        "recurring_once_A"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        let me = view.address().clone();
        let waiting = storage.get("waiting").and_then(Value::as_bool).unwrap_or(false);
        let check = || Operation::call(me.clone(), "check", Value::Unit).recurring();
        match call.method.as_str() {
            "check" => {
                only_self(view, call)?;
                if waiting {
                    Ok(StepOk::new(storage.clone(), vec![check()]))
                } else {
                    Ok(StepOk::idle(storage))
                }
            }
            RECEIVE => Ok(StepOk::idle(storage)),
            _ if waiting => Ok(StepOk::idle(&storage.with("waiting", Value::Bool(false)))),
            _ => Ok(StepOk::new(storage.with("waiting", Value::Bool(true)), vec![check()])),
        }
    }

    fn is_recurring_method(&self, method: &str) -> bool {
        method == "check"
    }
}

// ---------------------------------------------------------------------------
// Randomized probe

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    None,
    First,
    Count,
    TxMem,
    Fail,
    BStore,
    UStore,
}

impl ProbeMode {
    pub fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" => ProbeMode::None,
            "first" => ProbeMode::First,
            "count" => ProbeMode::Count,
            "txmem" => ProbeMode::TxMem,
            "fail" => ProbeMode::Fail,
            "bstore" => ProbeMode::BStore,
            "ustore" => ProbeMode::UStore,
            other => return Err(format!("unknown probe mode `{other}`")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeMode::None => "none",
            ProbeMode::First => "first",
            ProbeMode::Count => "count",
            ProbeMode::TxMem => "txmem",
            ProbeMode::Fail => "fail",
            ProbeMode::BStore => "bstore",
            ProbeMode::UStore => "ustore",
        }
    }
}

pub fn probe_storage() -> Value {
    Value::rec([("log", Value::Seq(vec![])), ("acc", Value::Int(0)), ("hooks", Value::Int(0))])
}

/// Builds a probe script: `delta` is added to the accumulator, `fail`
/// optionally assigns the fail bit, and `calls` lists `(dest, sub-script)`.
pub fn probe_script(delta: i64, fail_bit: Option<bool>, calls: Vec<(Address, Value)>) -> Value {
    let mut fields = vec![
        ("delta", Value::Int(delta)),
        (
            "calls",
            Value::Seq(
                calls
                    .into_iter()
                    .map(|(to, s)| Value::rec([("to", Value::Addr(to)), ("script", s)]))
                    .collect(),
            ),
        ),
    ];
    if let Some(b) = fail_bit {
        fields.push(("fail", Value::Bool(b)));
    }
    Value::rec(fields)
}

/// Differential-test contract. Each `run` logs its mechanism reading into
/// storage, updates an accumulator and emits the scripted calls.
pub struct Probe {
    pub mode: ProbeMode,
}

fn int_field(v: &Value, f: &str) -> i64 {
    v.get(f).and_then(Value::as_int).unwrap_or(0)
}

impl Contract for Probe {
    fn kind(&self) -> &str {
        "probe"
    }

    fn step(&self, view: &mut ContextView, call: &Call, storage: &Value) -> StepResult {
        match call.method.as_str() {
            "run" => {}
            RECEIVE => return Ok(StepOk::idle(storage)),
            m => return unknown(m),
        }
        let script = &call.param;
        let delta = int_field(script, "delta");
        let reading = match self.mode {
            ProbeMode::None => Value::Unit,
            ProbeMode::First => Value::Bool(view.first()?),
            ProbeMode::Count => Value::Int(view.count()? as i64),
            ProbeMode::TxMem => {
                let t = view.txmem()?;
                let n = t.as_int().unwrap_or(0);
                view.set_txmem(Value::Int(n.wrapping_add(delta)))?;
                t
            }
            ProbeMode::Fail => {
                if let Some(b) = script.get("fail").and_then(Value::as_bool) {
                    view.set_own_fail(b)?;
                }
                Value::Int(int_field(storage, "acc"))
            }
            ProbeMode::BStore | ProbeMode::UStore => Value::Int(int_field(storage, "hooks")),
        };
        let mut log = storage.get("log").and_then(Value::as_seq).map(<[Value]>::to_vec).unwrap_or_default();
        log.push(reading);
        let acc = int_field(storage, "acc").checked_add(delta).ok_or_else(|| crate::contract::StepFail::new("overflow"))?;
        let st = storage.with("log", Value::Seq(log)).with("acc", Value::Int(acc));
        let mut ops = Vec::new();
        for c in script.get("calls").and_then(Value::as_seq).unwrap_or(&[]) {
            let (Some(to), Some(sub)) = (c.get("to").and_then(Value::as_addr), c.get("script")) else {
                return fail("malformed probe script");
            };
            ops.push(Operation::call(to.clone(), "run", sub.clone()));
        }
        Ok(StepOk::new(st, ops))
    }

    fn mechanisms(&self) -> MechanismSet {
        match self.mode {
            ProbeMode::None => MechanismSet::new(),
            ProbeMode::First => mechanism_set([Mechanism::First]),
            ProbeMode::Count => mechanism_set([Mechanism::Count]),
            ProbeMode::TxMem => mechanism_set([Mechanism::TxMem]),
            ProbeMode::Fail => mechanism_set([Mechanism::Fail]),
            ProbeMode::BStore => mechanism_set([Mechanism::BStore]),
            ProbeMode::UStore => mechanism_set([Mechanism::UStore]),
        }
    }

    fn txmem_init(&self, storage: &Value) -> Option<Value> {
        (self.mode == ProbeMode::TxMem).then(|| Value::Int(int_field(storage, "acc")))
    }

    fn hookup_kind(&self) -> Option<HookupKind> {
        match self.mode {
            ProbeMode::BStore => Some(HookupKind::Bounded),
            ProbeMode::UStore => Some(HookupKind::Unbounded),
            _ => None,
        }
    }

    fn bstore(&self, storage: &Value, _balance: Amt, budget: &mut HookBudget) -> Result<Value, BudgetExceeded> {
        budget.tick(1)?;
        let hooks = int_field(storage, "hooks") + 1;
        let acc = int_field(storage, "acc").rem_euclid(7);
        Ok(storage.with("hooks", Value::Int(hooks)).with("acc", Value::Int(acc)))
    }

    fn ustore(&self, storage: &Value, _balance: Amt) -> Result<Value, String> {
        let acc = int_field(storage, "acc");
        if acc.rem_euclid(4) == 3 {
            return Err(format!("accumulator {acc} rejected"));
        }
        let hooks = int_field(storage, "hooks") + 1;
        Ok(storage.with("hooks", Value::Int(hooks)).with("acc", Value::Int(acc.rem_euclid(5))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_builtin_constructs_or_names_its_missing_params() {
        for name in BUILTIN_NAMES {
            match builtin(name, &Value::Unit, 0) {
                Ok(b) => assert_eq!(b.contract.kind(), *name),
                Err(e) => assert!(e.contains("missing parameter"), "{name}: {e}"),
            }
        }
        assert!(builtin("nope", &Value::Unit, 0).is_err());
    }

    #[test]
    fn lender_default_storage_records_balance() {
        let b = builtin("lender_ustore", &Value::Unit, 250).unwrap();
        assert_eq!(b.storage.get("initial_balance"), Some(&Value::Amt(250)));
    }

    #[test]
    fn client_param_validation() {
        let bad = Value::rec([
            ("lenders", Value::Seq(vec![Value::addr("L1")])),
            ("amounts", Value::Seq(vec![Value::Amt(1), Value::Amt(2)])),
            ("sink", Value::addr("S")),
        ]);
        assert!(builtin("client_two_loans", &bad, 0).is_err());
    }

    #[test]
    fn bstore_probe_uses_budget() {
        let p = Probe { mode: ProbeMode::BStore };
        let mut b = HookBudget::new(0);
        assert!(p.bstore(&probe_storage(), 0, &mut b).is_err());
    }
}
