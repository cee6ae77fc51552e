//! Parameter spaces: named axes whose cartesian product is the set of
//! study configurations.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde_json::Value as Json;
use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("parameter space has no axes")]
    NoAxes,
    #[error("invalid axis name {0:?}")]
    InvalidName(String),
    #[error("duplicate axis name {0:?}")]
    DuplicateAxis(String),
    #[error("axis {0:?} has no values")]
    EmptyAxis(String),
    #[error("axis {axis:?} mixes value kinds ({first} and {other})")]
    MixedKinds { axis: String, first: &'static str, other: &'static str },
    #[error("axis {axis:?} holds unsupported value {value}")]
    UnsupportedValue { axis: String, value: String },
    #[error("axis {axis:?} repeats value {value}")]
    DuplicateValue { axis: String, value: String },
    #[error("malformed parameter space document: {0}")]
    Document(String),
}

/// True for `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    name: String,
    values: Vec<Value>,
}

impl Axis {
    pub fn new<V: Into<Value>>(name: impl Into<String>, values: impl IntoIterator<Item = V>) -> Self {
        Self { name: name.into(), values: values.into_iter().map(Into::into).collect() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    /// Kind shared by every value on the axis.
    pub fn kind_name(&self) -> &'static str {
        self.values[0].kind_name()
    }

    fn validate(&self) -> Result<(), SpaceError> {
        if !is_identifier(&self.name) {
            return Err(SpaceError::InvalidName(self.name.clone()));
        }
        let first = self.values.first().ok_or_else(|| SpaceError::EmptyAxis(self.name.clone()))?;
        let mut seen = HashSet::new();
        for v in &self.values {
            let bad = match v {
                Value::Blob(_) => true,
                Value::Float(f) => !f.is_finite(),
                _ => false,
            };
            if bad {
                return Err(SpaceError::UnsupportedValue { axis: self.name.clone(), value: v.to_string() });
            }
            if v.kind_name() != first.kind_name() {
                return Err(SpaceError::MixedKinds {
                    axis: self.name.clone(),
                    first: first.kind_name(),
                    other: v.kind_name(),
                });
            }
            if !seen.insert(v.clone()) {
                return Err(SpaceError::DuplicateValue { axis: self.name.clone(), value: v.to_string() });
            }
        }
        Ok(())
    }
}

/// Ordered axes; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    axes: Vec<Axis>,
}

impl ParamSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self, SpaceError> {
        if axes.is_empty() {
            return Err(SpaceError::NoAxes);
        }
        let mut names = HashSet::new();
        for axis in &axes {
            axis.validate()?;
            if !names.insert(axis.name.as_str()) {
                return Err(SpaceError::DuplicateAxis(axis.name.clone()));
            }
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, name: &str) -> Option<&Axis> {
        self.axes.iter().find(|a| a.name == name)
    }

    /// Number of configurations in the full product.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Parse `{"axes": [{"name": "...", "values": [...]}, ...]}`.
    ///
    /// JSON strings map to text, integers to integer, other numbers to
    /// float, and booleans to boolean.
    pub fn from_json(doc: &str) -> Result<Self, SpaceError> {
        let root: Json = serde_json::from_str(doc).map_err(|e| SpaceError::Document(e.to_string()))?;
        let axes = root
            .get("axes")
            .and_then(Json::as_array)
            .ok_or_else(|| SpaceError::Document("expected an \"axes\" array".into()))?;
        let mut out = Vec::with_capacity(axes.len());
        for axis in axes {
            let name = axis
                .get("name")
                .and_then(Json::as_str)
                .ok_or_else(|| SpaceError::Document("axis without a \"name\" string".into()))?;
            let values = axis
                .get("values")
                .and_then(Json::as_array)
                .ok_or_else(|| SpaceError::Document(format!("axis {name:?} without a \"values\" array")))?;
            let values = values
                .iter()
                .map(|v| match v {
                    Json::String(s) => Ok(Value::Text(s.clone())),
                    Json::Bool(b) => Ok(Value::Bool(*b)),
                    Json::Number(n) => Ok(n.as_i64().map(Value::Integer).unwrap_or_else(|| {
                        Value::Float(n.as_f64().expect("serde_json numbers are finite"))
                    })),
                    other => Err(SpaceError::UnsupportedValue { axis: name.to_owned(), value: other.to_string() }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(Axis { name: name.to_owned(), values });
        }
        Self::new(out)
    }
}

/// One point of a [`ParamSpace`]: a value per axis, in axis order.
#[derive(Debug, Clone)]
pub struct Configuration {
    assignments: Vec<(String, Value)>,
}

impl Configuration {
    pub fn new<V: Into<Value>>(assignments: impl IntoIterator<Item = (impl Into<String>, V)>) -> Self {
        Self { assignments: assignments.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }

    pub fn assignments(&self) -> &[(String, Value)] {
        &self.assignments
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.assignments.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Restriction to `names`, in the order given. `None` if a name is missing.
    pub fn project(&self, names: &[&str]) -> Option<Configuration> {
        names
            .iter()
            .map(|n| self.get(n).map(|v| ((*n).to_owned(), v.clone())))
            .collect::<Option<Vec<_>>>()
            .map(|assignments| Configuration { assignments })
    }

    fn sorted(&self) -> Vec<&(String, Value)> {
        let mut v: Vec<_> = self.assignments.iter().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.assignments.iter().all(|(k, v)| other.get(k) == Some(v))
    }
}

impl Eq for Configuration {}

impl Hash for Configuration {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for (k, v) in self.sorted() {
            k.hash(state);
            v.hash(state);
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Keep-predicate over configurations (`true` keeps).
pub type FilterPredicate = Arc<dyn Fn(&Configuration) -> bool + Send + Sync>;

/// All configurations of `space`, row-major over axis declaration order
/// (the last axis varies fastest).
pub fn cartesian_product(space: &ParamSpace) -> Vec<Configuration> {
    let mut out = Vec::with_capacity(space.size());
    let mut idx = vec![0usize; space.axes.len()];
    loop {
        out.push(Configuration {
            assignments: space
                .axes
                .iter()
                .zip(&idx)
                .map(|(a, &i)| (a.name.clone(), a.values[i].clone()))
                .collect(),
        });
        let mut pos = space.axes.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < space.axes[pos].values.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Configurations for which `keep` holds, order preserved.
pub fn apply_filter(configs: Vec<Configuration>, keep: &dyn Fn(&Configuration) -> bool) -> Vec<Configuration> {
    configs.into_iter().filter(|c| keep(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space_ab() -> ParamSpace {
        ParamSpace::new(vec![Axis::new("a", [1, 2]), Axis::new("b", ["x", "y"])]).unwrap()
    }

    #[test]
    fn two_by_two_row_major() {
        let configs = cartesian_product(&space_ab());
        let expect = [(1, "x"), (1, "y"), (2, "x"), (2, "y")];
        assert_eq!(configs.len(), 4);
        for (c, (a, b)) in configs.iter().zip(expect) {
            assert_eq!(c, &Configuration::new([("a", Value::from(a)), ("b", Value::from(b))]));
        }
    }

    #[test]
    fn singleton_axis() {
        let space = ParamSpace::new(vec![Axis::new("a", [7])]).unwrap();
        let configs = cartesian_product(&space);
        assert_eq!(configs.len(), 1);
        assert_eq!(configs[0].get("a"), Some(&Value::Integer(7)));
    }

    #[test]
    fn listing_space_has_eight_configs() {
        let space = ParamSpace::new(vec![
            Axis::new("data_distribution", ["complete", "sparse"]),
            Axis::new("no_instances", [100, 1000]),
            Axis::new("method", ["ols", "lasso"]),
        ])
        .unwrap();
        let configs = cartesian_product(&space);
        assert_eq!(configs.len(), 8);
        let kept = apply_filter(configs, &|c: &Configuration| {
            !(c.get("method") == Some(&Value::from("lasso")) && c.get("no_instances") == Some(&Value::from(100)))
        });
        assert_eq!(kept.len(), 6);
    }

    #[test]
    fn filter_identity_and_exclusion() {
        let configs = cartesian_product(&space_ab());
        assert_eq!(apply_filter(configs.clone(), &|_| true), configs);
        let kept = apply_filter(configs.clone(), &|c: &Configuration| {
            !(c.get("a") == Some(&Value::from(2)) && c.get("b") == Some(&Value::from("y")))
        });
        assert_eq!(kept, configs[..3].to_vec());
    }

    #[test]
    fn invalid_spaces() {
        assert_eq!(ParamSpace::new(vec![]), Err(SpaceError::NoAxes));
        assert!(matches!(
            ParamSpace::new(vec![Axis::new::<i64>("a", [])]),
            Err(SpaceError::EmptyAxis(_))
        ));
        assert!(matches!(
            ParamSpace::new(vec![Axis::new("a", [1]), Axis::new("a", [2])]),
            Err(SpaceError::DuplicateAxis(_))
        ));
        assert!(matches!(ParamSpace::new(vec![Axis::new("", [1])]), Err(SpaceError::InvalidName(_))));
        assert!(matches!(ParamSpace::new(vec![Axis::new("a b", [1])]), Err(SpaceError::InvalidName(_))));
        assert!(matches!(
            ParamSpace::new(vec![Axis::new("a", [Value::from(1), Value::from("x")])]),
            Err(SpaceError::MixedKinds { .. })
        ));
        assert!(matches!(
            ParamSpace::new(vec![Axis::new("a", [1, 1])]),
            Err(SpaceError::DuplicateValue { .. })
        ));
        assert!(matches!(
            ParamSpace::new(vec![Axis::new("a", [f64::NAN])]),
            Err(SpaceError::UnsupportedValue { .. })
        ));
    }

    #[test]
    fn configuration_equality_ignores_order() {
        let a = Configuration::new([("x", Value::from(1)), ("y", Value::from("z"))]);
        let b = Configuration::new([("y", Value::from("z")), ("x", Value::from(1))]);
        assert_eq!(a, b);
        let mut set = HashSet::new();
        set.insert(a);
        assert!(set.contains(&b));
    }

    #[test]
    fn projection() {
        let c = Configuration::new([("x", Value::from(1)), ("y", Value::from("z"))]);
        assert_eq!(c.project(&["y"]).unwrap(), Configuration::new([("y", "z")]));
        assert!(c.project(&["w"]).is_none());
    }

    #[test]
    fn json_document() {
        let space = ParamSpace::from_json(
            r#"{"axes": [{"name": "method", "values": ["ols", "lasso"]},
                         {"name": "n", "values": [100, 1000]},
                         {"name": "sd", "values": [0.5, 2.0]},
                         {"name": "flag", "values": [true, false]}]}"#,
        )
        .unwrap();
        assert_eq!(space.size(), 16);
        assert_eq!(space.axis("n").unwrap().kind_name(), "integer");
        assert_eq!(space.axis("sd").unwrap().kind_name(), "float");
        assert!(ParamSpace::from_json(r#"{"axes": [{"name": "a", "values": [[1]]}]}"#).is_err());
        assert!(ParamSpace::from_json("[]").is_err());
    }
}
