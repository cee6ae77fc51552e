//! Scalar and structured values carried by configurations and results.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

/// A field value. Configuration axes only hold the scalar variants; `Blob`
/// appears in outcomes of blob-kind fields.
#[derive(Debug, Clone)]
pub enum Value {
    Text(String),
    Float(f64),
    Integer(i64),
    Bool(bool),
    Blob(Structured),
}

/// Nested data stored in blob fields. Encoded as CBOR on the way into the
/// database (see [`crate::storage::blob`]).
#[derive(Debug, Clone)]
pub enum Structured {
    Null,
    Bool(bool),
    Integer(i64),
    Float(f64),
    Text(String),
    Bytes(Vec<u8>),
    List(Vec<Structured>),
    Map(BTreeMap<String, Structured>),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Float(_) => "float",
            Value::Integer(_) => "integer",
            Value::Bool(_) => "boolean",
            Value::Blob(_) => "blob",
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, Value::Blob(_))
    }

    /// Numeric view used by aggregation; `None` for text and blobs.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Integer(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
            Value::Blob(_) => 4,
        }
    }

    /// Total order: by kind, then by value (`f64::total_cmp` for floats).
    /// Blobs compare equal to each other.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Blob(_), Value::Blob(_)) => Ordering::Equal,
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

// Floats compare by bit pattern so equality is reflexive and agrees with Hash.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Blob(a), Value::Blob(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Text(s) => s.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Integer(v) => v.hash(state),
            Value::Bool(v) => v.hash(state),
            // Blobs never appear in configurations; hash by kind only.
            Value::Blob(_) => {}
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Float(v) => write!(f, "{v}"),
            Value::Integer(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Blob(_) => f.write_str("<blob>"),
        }
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Integer(v.into())
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<Structured> for Value {
    fn from(v: Structured) -> Self {
        Value::Blob(v)
    }
}

impl PartialEq for Structured {
    fn eq(&self, other: &Self) -> bool {
        use Structured::*;
        match (self, other) {
            (Null, Null) => true,
            (Bool(a), Bool(b)) => a == b,
            (Integer(a), Integer(b)) => a == b,
            (Float(a), Float(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Text(a), Text(b)) => a == b,
            (Bytes(a), Bytes(b)) => a == b,
            (List(a), List(b)) => a == b,
            (Map(a), Map(b)) => a == b,
            _ => false,
        }
    }
}

impl From<Vec<f64>> for Structured {
    fn from(v: Vec<f64>) -> Self {
        Structured::List(v.into_iter().map(Structured::Float).collect())
    }
}

impl From<&str> for Structured {
    fn from(v: &str) -> Self {
        Structured::Text(v.to_owned())
    }
}
