//! Deterministic simulator of smart-contract transaction execution.
//!
//! The engine runs transactions as a small-step relation over a pending
//! queue of operations, under a DFS or BFS scheduler, with optional
//! transaction monitors and execution mechanisms (`first`, `count`,
//! `fail`, `queue`, `txmem`, `bstore`, `ustore`). The `transformers`
//! module compiles contracts written against one mechanism into contracts
//! that only use another, and `scenarios` holds the built-in contracts,
//! the counter-example reports and the differential suites.

pub mod contract;
pub mod engine;
pub mod invariants;
pub mod mechanisms;
pub mod model;
pub mod monitors;
pub mod scenarios;
pub mod transformers;
pub mod value;

pub use contract::{Call, Contract, ContractRef, MonitorHooks, Registry, StepFail, StepOk, StepResult};
pub use engine::{Engine, EngineConfig, EngineError, MonitorMode, SchedulerKind, TxRun};
pub use mechanisms::{ContextView, Mechanism, MechanismSet};
pub use model::{
    digest, AbortReason, Account, ChainState, Context, Observation, Operation, Outcome, RecordKind, StepRecord, Trace,
};
pub use value::{Address, Amt, Value};
