//! Parameter and storage values.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Token amount. Arithmetic on amounts is always checked.
pub type Amt = u64;

/// Account identifier. A plain text token such as `"A"` or `"lender1"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn new(id: impl Into<String>) -> Self {
        Address(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address::new(s)
    }
}

/// Closed universe of parameters and storage states.
///
/// Serialized externally tagged: `"Unit"`, `{"Int": 3}`, `{"Rec": {...}}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Value {
    #[default]
    Unit,
    Bool(bool),
    Int(i64),
    Amt(Amt),
    Addr(Address),
    Text(String),
    Seq(Vec<Value>),
    Rec(BTreeMap<String, Value>),
}

impl Value {
    pub fn rec<K: Into<String>>(fields: impl IntoIterator<Item = (K, Value)>) -> Value {
        Value::Rec(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn addr(a: impl Into<String>) -> Value {
        Value::Addr(Address::new(a))
    }

    /// Field lookup on a record; `None` for missing fields and non-records.
    pub fn get(&self, field: &str) -> Option<&Value> {
        match self {
            Value::Rec(m) => m.get(field),
            _ => None,
        }
    }

    /// Returns a copy of this record with `field` replaced. Non-records are
    /// treated as the empty record.
    pub fn with(&self, field: &str, v: Value) -> Value {
        let mut m = match self {
            Value::Rec(m) => m.clone(),
            _ => BTreeMap::new(),
        };
        m.insert(field.to_string(), v);
        Value::Rec(m)
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Amounts, accepting non-negative `Int`s as well.
    pub fn as_amt(&self) -> Option<Amt> {
        match self {
            Value::Amt(a) => Some(*a),
            Value::Int(i) if *i >= 0 => Some(*i as Amt),
            _ => None,
        }
    }

    pub fn as_addr(&self) -> Option<&Address> {
        match self {
            Value::Addr(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[Value]> {
        match self {
            Value::Seq(v) => Some(v),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Value::Seq(v) => 1 + v.iter().map(Value::depth).max().unwrap_or(0),
            Value::Rec(m) => 1 + m.values().map(Value::depth).max().unwrap_or(0),
            _ => 0,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Amt(a) => write!(f, "{a}t"),
            Value::Addr(a) => write!(f, "@{a}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Seq(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            Value::Rec(m) => {
                f.write_str("{")?;
                for (i, (k, x)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {x}")?;
                }
                f.write_str("}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_helpers() {
        let r = Value::rec([("a", Value::Int(1))]);
        assert_eq!(r.get("a"), Some(&Value::Int(1)));
        assert_eq!(r.get("b"), None);
        let r2 = r.with("b", Value::Bool(true));
        assert_eq!(r2.get("b").and_then(Value::as_bool), Some(true));
        // original untouched
        assert_eq!(r.get("b"), None);
        assert_eq!(Value::Unit.with("x", Value::Unit).get("x"), Some(&Value::Unit));
    }

    #[test]
    fn amt_coercion() {
        assert_eq!(Value::Int(5).as_amt(), Some(5));
        assert_eq!(Value::Int(-1).as_amt(), None);
        assert_eq!(Value::Amt(7).as_amt(), Some(7));
    }

    #[test]
    fn json_shape() {
        let v = Value::rec([("x", Value::Amt(3)), ("who", Value::addr("A"))]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"Rec":{"who":{"Addr":"A"},"x":{"Amt":3}}}"#);
        assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
        assert_eq!(serde_json::to_string(&Value::Unit).unwrap(), r#""Unit""#);
    }

    #[test]
    fn depth_counts_nesting() {
        assert_eq!(Value::Int(1).depth(), 0);
        assert_eq!(Value::Seq(vec![Value::Seq(vec![])]).depth(), 2);
    }
}
