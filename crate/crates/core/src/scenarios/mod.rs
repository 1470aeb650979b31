//! Scenario files, the built-in contract library, the counter-example
//! reports and the differential suites.

pub mod builtins;
pub mod equivalence;
pub mod flashloan;
pub mod obs;
pub mod reports;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::contract::Registry;
use crate::engine::{Engine, EngineConfig, EngineError, TxRun};
use crate::model::{Account, ChainState, Operation};
use crate::transformers::{self, TransformError, TransformedContract};
use crate::value::{Address, Amt, Value};

pub use obs::{check_obs_equivalence, ObsCheck};
pub use reports::CounterexampleReport;

fn default_engine() -> EngineConfig {
    EngineConfig::dfs(10_000)
}

/// A complete, self-contained simulation setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_engine")]
    pub engine: EngineConfig,
    pub contracts: Vec<ContractSpec>,
    #[serde(default)]
    pub externals: Vec<ExternalSpec>,
    pub transactions: Vec<TxSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub addr: Address,
    pub builtin: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub balance: Amt,
    /// Overrides the builtin's default storage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<Value>,
    /// Transformers applied in order, innermost first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transform: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub addr: Address,
    #[serde(default)]
    pub balance: Amt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxSpec {
    /// Defaults to the first declared external account.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<Address>,
    pub dest: Address,
    pub method: String,
    #[serde(default)]
    pub param: Value,
    #[serde(default)]
    pub money: Amt,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_limit: Option<u64>,
}

impl TxSpec {
    pub fn new(dest: &str, method: &str, param: Value) -> Self {
        TxSpec { src: None, dest: Address::new(dest), method: method.into(), param, money: 0, gas_limit: None }
    }
}

impl ContractSpec {
    pub fn new(addr: &str, builtin: &str, params: Value, balance: Amt) -> Self {
        ContractSpec {
            addr: Address::new(addr),
            builtin: builtin.into(),
            params,
            balance,
            storage: None,
            transform: Vec::new(),
        }
    }

    pub fn with_storage(mut self, storage: Value) -> Self {
        self.storage = Some(storage);
        self
    }

    pub fn transformed(mut self, names: &[&str]) -> Self {
        self.transform = names.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("contracts[{index}] ({addr}): {msg}")]
    Contract { index: usize, addr: Address, msg: String },
    #[error("address {0} declared twice")]
    Duplicate(Address),
    #[error("transactions[{index}]: {msg}")]
    Transaction { index: usize, msg: String },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| {
            let (line, column) = (e.line(), e.column());
            let full = e.to_string();
            let msg = full.strip_suffix(&format!(" at line {line} column {column}")).unwrap_or(&full).to_string();
            ScenarioError::Parse { line, column, msg }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// A validated scenario: registry, initial state and the external
/// operations to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub registry: Registry,
    pub initial: ChainState,
    pub transforms: BTreeMap<Address, TransformedContract>,
}

/// Results of running every transaction of a scenario in order.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub runs: Vec<TxRun>,
    pub final_state: ChainState,
}

impl ScenarioRun {
    pub fn all_committed(&self) -> bool {
        self.runs.iter().all(|r| r.outcome.is_committed())
    }
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let mut registry = Registry::new();
        let mut state = ChainState::new();
        let mut transforms = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for ext in &spec.externals {
            if !seen.insert(ext.addr.clone()) {
                return Err(ScenarioError::Duplicate(ext.addr.clone()));
            }
            registry.insert_external(ext.addr.clone());
            state.accounts.insert(ext.addr.clone(), Account::new(Value::Unit, ext.balance));
        }
        for (index, c) in spec.contracts.iter().enumerate() {
            if !seen.insert(c.addr.clone()) {
                return Err(ScenarioError::Duplicate(c.addr.clone()));
            }
            let err = |msg: String| ScenarioError::Contract { index, addr: c.addr.clone(), msg };
            let b = builtins::builtin(&c.builtin, &c.params, c.balance).map_err(err)?;
            let mut contract = b.contract;
            let mut storage = c.storage.clone().unwrap_or(b.storage);
            let mut chain: Option<TransformedContract> = None;
            for name in &c.transform {
                let f = transformers::by_name(name).ok_or_else(|| err(format!("unknown transformer `{name}`")))?;
                chain = Some(match chain {
                    None => f(contract.clone())?,
                    Some(t) => t.then(f)?,
                });
            }
            if let Some(t) = chain {
                // `t` embeds from the original storage through every layer
                storage = t.embed(&storage);
                contract = t.contract.clone();
                transforms.insert(c.addr.clone(), t);
            }
            registry.insert_contract(c.addr.clone(), contract);
            state.accounts.insert(c.addr.clone(), Account::new(storage, c.balance));
        }
        for (index, tx) in spec.transactions.iter().enumerate() {
            let err = |msg: String| ScenarioError::Transaction { index, msg };
            if registry.contract(&tx.dest).is_none() {
                return Err(err(format!("destination {} is not a declared contract", tx.dest)));
            }
            match &tx.src {
                Some(s) if !registry.is_external(s) => {
                    return Err(err(format!("source {s} is not a declared external account")))
                }
                None if spec.externals.is_empty() => return Err(err("no source and no external accounts".into())),
                _ => {}
            }
            if tx.gas_limit == Some(0) || (tx.gas_limit.is_none() && spec.engine.gas_limit == 0) {
                return Err(err("gas limit must be at least 1".into()));
            }
        }
        Ok(Scenario { spec, registry, initial: state, transforms })
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Self::from_spec(ScenarioSpec::from_json(text)?)
    }

    /// The external operation of transaction `i`.
    pub fn operation(&self, i: usize) -> Operation {
        let tx = &self.spec.transactions[i];
        let src = tx.src.clone().unwrap_or_else(|| self.spec.externals[0].addr.clone());
        Operation::call(tx.dest.clone(), tx.method.clone(), tx.param.clone()).with_money(tx.money).from_src(src)
    }

    pub fn engine(&self) -> Engine<'_> {
        Engine::new(&self.registry, self.spec.engine.clone())
    }

    pub fn run(&self) -> Result<ScenarioRun, ScenarioError> {
        self.run_with(&self.spec.engine)
    }

    /// Runs every transaction in order under `config`, threading committed
    /// states.
    pub fn run_with(&self, config: &EngineConfig) -> Result<ScenarioRun, ScenarioError> {
        let engine = Engine::new(&self.registry, config.clone());
        let txs = (0..self.spec.transactions.len())
            .map(|i| (vec![self.operation(i)], self.spec.transactions[i].gas_limit.unwrap_or(config.gas_limit)));
        let (final_state, runs) = engine.run_sequence(&self.initial, txs)?;
        Ok(ScenarioRun { runs, final_state })
    }

    /// Storage of `addr` in `state`, seen through its transformer if any.
    pub fn projected_storage(&self, state: &ChainState, addr: &Address) -> Value {
        let s = state.storage(addr).cloned().unwrap_or_default();
        match self.transforms.get(addr) {
            Some(t) => t.project(&s),
            None => s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            name: None,
            engine: EngineConfig::dfs(100),
            contracts: vec![ContractSpec::new("C", "sink_C", Value::Unit, 5)],
            externals: vec![ExternalSpec { addr: Address::new("u"), balance: 10 }],
            transactions: vec![TxSpec { money: 3, ..TxSpec::new("C", "hello", Value::Unit) }],
        }
    }

    #[test]
    fn json_round_trip() {
        let s = spec();
        assert_eq!(ScenarioSpec::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn runs_and_defaults_source() {
        let sc = Scenario::from_spec(spec()).unwrap();
        let run = sc.run().unwrap();
        assert!(run.all_committed());
        assert_eq!(run.final_state.balance(&Address::new("C")), 8);
        assert_eq!(run.final_state.balance(&Address::new("u")), 7);
    }

    #[test]
    fn validation_errors() {
        let mut s = spec();
        s.transactions[0].dest = Address::new("nowhere");
        assert!(matches!(Scenario::from_spec(s), Err(ScenarioError::Transaction { index: 0, .. })));
        let mut s = spec();
        s.contracts.push(ContractSpec::new("C", "sink_C", Value::Unit, 0));
        assert!(matches!(Scenario::from_spec(s), Err(ScenarioError::Duplicate(_))));
        let mut s = spec();
        s.contracts[0].builtin = "mystery".into();
        assert!(matches!(Scenario::from_spec(s), Err(ScenarioError::Contract { .. })));
        let e = ScenarioSpec::from_json("{\n  \"contracts\": 3\n}").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 2, .. }), "{e}");
    }
}
