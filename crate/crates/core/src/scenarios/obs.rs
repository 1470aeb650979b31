//! Observational equivalence: whether a contract can tell two runs apart
//! from what it sees when invoked (caller, method, argument, money, storage,
//! balance, mechanism readings).
//!
//! Invocation counters are bookkeeping the contract cannot see, so they are
//! not compared.

use serde::{Deserialize, Serialize};

use crate::model::{Observation, Trace};
use crate::value::{Address, Value};

/// Where two observation sequences first differ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    /// Position in the compared window.
    pub position: usize,
    /// Trace record indices, `None` when that trace has no such invocation.
    pub record_a: Option<u64>,
    pub record_b: Option<u64>,
    pub field: String,
    pub left: String,
    pub right: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsCheck {
    pub subject: Address,
    pub start_a: usize,
    pub start_b: usize,
    pub len: usize,
    pub equal: bool,
    pub divergence: Option<Divergence>,
}

fn first_difference(a: &Observation, b: &Observation) -> Option<(&'static str, String, String)> {
    let s = |v: &dyn std::fmt::Display| v.to_string();
    if a.src != b.src {
        return Some(("src", s(&a.src), s(&b.src)));
    }
    if a.method != b.method {
        return Some(("method", a.method.clone(), b.method.clone()));
    }
    if a.param != b.param {
        return Some(("param", s(&a.param), s(&b.param)));
    }
    if a.money != b.money {
        return Some(("money", s(&a.money), s(&b.money)));
    }
    if a.storage_before != b.storage_before {
        return Some(("storage", s(&a.storage_before), s(&b.storage_before)));
    }
    if a.balance_before != b.balance_before {
        return Some(("balance", s(&a.balance_before), s(&b.balance_before)));
    }
    if a.mechanism_readings != b.mechanism_readings {
        let show = |o: &Observation| {
            let r: Vec<String> = o.mechanism_readings.iter().map(|(k, v): (&String, &Value)| format!("{k}={v}")).collect();
            format!("{{{}}}", r.join(", "))
        };
        return Some(("readings", show(a), show(b)));
    }
    None
}

/// Compares `len` invocations of `subject`, starting at invocation
/// `start_a` in `a` and `start_b` in `b`.
pub fn check_obs_window(a: &Trace, b: &Trace, subject: &Address, start_a: usize, start_b: usize, len: usize) -> ObsCheck {
    let xs: Vec<_> = a.observations(subject).skip(start_a).take(len).collect();
    let ys: Vec<_> = b.observations(subject).skip(start_b).take(len).collect();
    let mut divergence = None;
    for i in 0..len {
        let d = match (xs.get(i), ys.get(i)) {
            (Some((ra, oa)), Some((rb, ob))) => first_difference(oa, ob).map(|(field, left, right)| Divergence {
                position: i,
                record_a: Some(ra.index),
                record_b: Some(rb.index),
                field: field.into(),
                left,
                right,
            }),
            (x, y) => Some(Divergence {
                position: i,
                record_a: x.map(|(r, _)| r.index),
                record_b: y.map(|(r, _)| r.index),
                field: "presence".into(),
                left: if x.is_some() { "invoked" } else { "absent" }.into(),
                right: if y.is_some() { "invoked" } else { "absent" }.into(),
            }),
        };
        if d.is_some() {
            divergence = d;
            break;
        }
    }
    ObsCheck { subject: subject.clone(), start_a, start_b, len, equal: divergence.is_none(), divergence }
}

/// True iff the observations of `subject` agree on invocations `0..=upto`
/// in both traces.
pub fn check_obs_equivalence(a: &Trace, b: &Trace, subject: &Address, upto: usize) -> ObsCheck {
    check_obs_window(a, b, subject, 0, 0, upto + 1)
}

/// Compares every invocation of `subject` in both traces.
pub fn check_obs_all(a: &Trace, b: &Trace, subject: &Address) -> ObsCheck {
    let n = a.observations(subject).count().max(b.observations(subject).count());
    check_obs_window(a, b, subject, 0, 0, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordKind, StepRecord};
    use std::collections::BTreeMap;

    fn rec(index: u64, subject: &str, storage: i64) -> StepRecord {
        StepRecord {
            index,
            kind: RecordKind::Op,
            subject: Address::new(subject),
            executed: None,
            queue_before: vec![],
            queue_after: vec![],
            emitted: vec![],
            gas_before: 0,
            gas_after: 0,
            state_digest: String::new(),
            observed: Some(Observation {
                seq_no: index,
                src: Address::new("B"),
                method: "call".into(),
                param: Value::Unit,
                money: 0,
                storage_before: Value::Int(storage),
                balance_before: 0,
                mechanism_readings: BTreeMap::new(),
            }),
            storage_after: None,
        }
    }

    fn trace(storages: &[i64]) -> Trace {
        Trace { records: storages.iter().enumerate().map(|(i, s)| rec(i as u64, "A", *s)).collect() }
    }

    #[test]
    fn identical_traces_are_equal_everywhere() {
        let t = trace(&[1, 2, 3]);
        for upto in 0..3 {
            assert!(check_obs_equivalence(&t, &t, &Address::new("A"), upto).equal);
        }
        assert!(check_obs_all(&t, &t, &Address::new("A")).equal);
    }

    #[test]
    fn divergence_is_pinpointed() {
        let (a, b) = (trace(&[1, 2, 3]), trace(&[1, 2, 4]));
        let subject = Address::new("A");
        assert!(check_obs_equivalence(&a, &b, &subject, 1).equal);
        let c = check_obs_equivalence(&a, &b, &subject, 2);
        let d = c.divergence.unwrap();
        assert_eq!((d.position, d.record_a, d.field.as_str()), (2, Some(2), "storage"));
    }

    #[test]
    fn missing_invocation_diverges() {
        let (a, b) = (trace(&[1, 2]), trace(&[1]));
        let c = check_obs_equivalence(&a, &b, &Address::new("A"), 1);
        assert_eq!(c.divergence.unwrap().right, "absent");
    }

    #[test]
    fn window_ignores_invocation_numbers() {
        let (a, b) = (trace(&[7, 5]), trace(&[5]));
        assert!(check_obs_window(&a, &b, &Address::new("A"), 1, 0, 1).equal);
    }
}
