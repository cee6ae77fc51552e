use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::paramspace::{is_identifier, Configuration, ParamSpace};
use crate::value::Value;

/// Column names the store adds to every results table.
pub const META_COLUMNS: [&str; 5] = ["id", "seed", "worker_id", "elapsed_time", "created_at"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Text,
    Float,
    Integer,
    Blob,
}

impl FieldKind {
    /// Whether `value` may be stored in a field of this kind. Booleans are
    /// stored as integer 0/1.
    pub fn accepts(self, value: &Value) -> bool {
        matches!(
            (self, value),
            (FieldKind::Text, Value::Text(_))
                | (FieldKind::Float, Value::Float(_))
                | (FieldKind::Integer, Value::Integer(_) | Value::Bool(_))
                | (FieldKind::Blob, Value::Blob(_))
        )
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, FieldKind::Float | FieldKind::Integer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldRole {
    Config,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub role: FieldRole,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("invalid identifier {0:?}")]
    InvalidName(String),
    #[error("field name {0:?} is reserved for store metadata")]
    Reserved(String),
    #[error("duplicate field {0:?}")]
    Duplicate(String),
    #[error("schema declares no outcome fields")]
    NoOutcomes,
    #[error("axis {0:?} has no config field in the schema")]
    MissingAxis(String),
    #[error("config field {0:?} is not an axis of the parameter space")]
    ExtraConfigField(String),
    #[error("axis {axis:?} holds {value_kind} values but the field is {field_kind:?}")]
    KindMismatch { axis: String, value_kind: &'static str, field_kind: FieldKind },
    #[error("record does not match schema: {0}")]
    Record(String),
}

/// Declared layout of a results table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultSchema {
    table: String,
    fields: Vec<FieldSpec>,
}

impl ResultSchema {
    pub fn new(table: impl Into<String>, fields: Vec<FieldSpec>) -> Result<Self, SchemaError> {
        let table = table.into();
        if !is_identifier(&table) {
            return Err(SchemaError::InvalidName(table));
        }
        let mut seen = HashSet::new();
        for f in &fields {
            if !is_identifier(&f.name) {
                return Err(SchemaError::InvalidName(f.name.clone()));
            }
            if META_COLUMNS.contains(&f.name.as_str()) {
                return Err(SchemaError::Reserved(f.name.clone()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::Duplicate(f.name.clone()));
            }
        }
        if !fields.iter().any(|f| f.role == FieldRole::Outcome) {
            return Err(SchemaError::NoOutcomes);
        }
        Ok(Self { table, fields })
    }

    /// Start a schema for `table`; finish with [`SchemaBuilder::build`].
    pub fn builder(table: impl Into<String>) -> SchemaBuilder {
        SchemaBuilder { table: table.into(), fields: Vec::new() }
    }

    pub fn table(&self) -> &str {
        &self.table
    }

    pub fn reservations_table(&self) -> String {
        format!("{}_reservations", self.table)
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn config_fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.role == FieldRole::Config)
    }

    pub fn outcome_fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.role == FieldRole::Outcome)
    }

    /// Every axis needs a config field of matching kind and every config
    /// field must be an axis.
    pub fn validate_against(&self, space: &ParamSpace) -> Result<(), SchemaError> {
        for axis in space.axes() {
            let field = self
                .config_fields()
                .find(|f| f.name == axis.name())
                .ok_or_else(|| SchemaError::MissingAxis(axis.name().to_owned()))?;
            if !field.kind.accepts(&axis.values()[0]) {
                return Err(SchemaError::KindMismatch {
                    axis: axis.name().to_owned(),
                    value_kind: axis.kind_name(),
                    field_kind: field.kind,
                });
            }
        }
        if let Some(extra) = self.config_fields().find(|f| space.axis(&f.name).is_none()) {
            return Err(SchemaError::ExtraConfigField(extra.name.clone()));
        }
        Ok(())
    }

    /// Map a configuration onto its stored form: schema field order,
    /// booleans as integers.
    pub fn normalize_config(&self, config: &Configuration) -> Result<Configuration, SchemaError> {
        if config.len() != self.config_fields().count() {
            return Err(SchemaError::Record(format!(
                "configuration {config} has {} assignments, schema has {} config fields",
                config.len(),
                self.config_fields().count()
            )));
        }
        let assignments = self
            .config_fields()
            .map(|f| {
                let v = config
                    .get(&f.name)
                    .ok_or_else(|| SchemaError::Record(format!("configuration {config} lacks {:?}", f.name)))?;
                if !f.kind.accepts(v) {
                    return Err(SchemaError::Record(format!(
                        "config field {:?} is {:?} but got a {} value",
                        f.name,
                        f.kind,
                        v.kind_name()
                    )));
                }
                Ok((f.name.clone(), normalize_value(v)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Configuration::new(assignments))
    }

    /// Check a configuration subset (used as a read filter).
    pub fn normalize_partial(&self, filter: &Configuration) -> Result<Configuration, SchemaError> {
        let assignments = filter
            .assignments()
            .iter()
            .map(|(k, v)| {
                let f = self
                    .config_fields()
                    .find(|f| &f.name == k)
                    .ok_or_else(|| SchemaError::Record(format!("{k:?} is not a config field")))?;
                if !f.kind.accepts(v) {
                    return Err(SchemaError::Record(format!("filter value for {k:?} has kind {}", v.kind_name())));
                }
                Ok((k.clone(), normalize_value(v)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Configuration::new(assignments))
    }

    pub fn validate_outcomes(&self, outcomes: &BTreeMap<String, Value>) -> Result<(), SchemaError> {
        for f in self.outcome_fields() {
            match outcomes.get(&f.name) {
                None => return Err(SchemaError::Record(format!("missing outcome {:?}", f.name))),
                Some(v) if !f.kind.accepts(v) => {
                    return Err(SchemaError::Record(format!(
                        "outcome {:?} is {:?} but got a {} value",
                        f.name,
                        f.kind,
                        v.kind_name()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = outcomes.keys().find(|k| !self.outcome_fields().any(|f| &f.name == *k)) {
            return Err(SchemaError::Record(format!("unexpected outcome {extra:?}")));
        }
        Ok(())
    }
}

fn normalize_value(v: &Value) -> Value {
    match v {
        Value::Bool(b) => Value::Integer(i64::from(*b)),
        other => other.clone(),
    }
}

pub struct SchemaBuilder {
    table: String,
    fields: Vec<FieldSpec>,
}

impl SchemaBuilder {
    pub fn config(mut self, name: impl Into<String>, kind: FieldKind) -> Self {
        self.fields.push(FieldSpec { name: name.into(), kind, role: FieldRole::Config });
        self
    }

    pub fn outcome(mut self, name: impl Into<String>, kind: FieldKind) -> Self {
        self.fields.push(FieldSpec { name: name.into(), kind, role: FieldRole::Outcome });
        self
    }

    pub fn build(self) -> Result<ResultSchema, SchemaError> {
        ResultSchema::new(self.table, self.fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramspace::Axis;

    fn listing_schema() -> ResultSchema {
        ResultSchema::builder("result")
            .config("data_distribution", FieldKind::Text)
            .config("method", FieldKind::Text)
            .config("no_instances", FieldKind::Float)
            .outcome("score", FieldKind::Float)
            .build()
            .unwrap()
    }

    #[test]
    fn rejects_bad_schemas() {
        let b = || ResultSchema::builder("t");
        assert_eq!(b().config("a", FieldKind::Text).build(), Err(SchemaError::NoOutcomes));
        assert!(matches!(b().outcome("seed", FieldKind::Float).build(), Err(SchemaError::Reserved(_))));
        assert!(matches!(
            b().outcome("x", FieldKind::Float).outcome("x", FieldKind::Text).build(),
            Err(SchemaError::Duplicate(_))
        ));
        assert!(matches!(
            ResultSchema::builder("bad table").outcome("x", FieldKind::Float).build(),
            Err(SchemaError::InvalidName(_))
        ));
    }

    #[test]
    fn validates_against_space() {
        let schema = listing_schema();
        let good = ParamSpace::new(vec![
            Axis::new("data_distribution", ["complete"]),
            Axis::new("method", ["ols"]),
            Axis::new("no_instances", [100.0]),
        ])
        .unwrap();
        schema.validate_against(&good).unwrap();

        let wrong_kind = ParamSpace::new(vec![
            Axis::new("data_distribution", ["complete"]),
            Axis::new("method", ["ols"]),
            Axis::new("no_instances", [100]),
        ])
        .unwrap();
        assert!(matches!(schema.validate_against(&wrong_kind), Err(SchemaError::KindMismatch { .. })));

        let missing = ParamSpace::new(vec![Axis::new("method", ["ols"]), Axis::new("other", [1])]).unwrap();
        assert!(matches!(schema.validate_against(&missing), Err(SchemaError::MissingAxis(_))));

        let partial = ParamSpace::new(vec![Axis::new("data_distribution", ["x"]), Axis::new("method", ["ols"])]).unwrap();
        assert!(matches!(schema.validate_against(&partial), Err(SchemaError::ExtraConfigField(_))));
    }

    #[test]
    fn booleans_normalize_to_integers() {
        let schema = ResultSchema::builder("t")
            .config("flag", FieldKind::Integer)
            .outcome("y", FieldKind::Float)
            .build()
            .unwrap();
        let c = schema.normalize_config(&Configuration::new([("flag", true)])).unwrap();
        assert_eq!(c.get("flag"), Some(&Value::Integer(1)));
    }

    #[test]
    fn outcome_validation() {
        let schema = listing_schema();
        let mut o = BTreeMap::new();
        assert!(schema.validate_outcomes(&o).is_err());
        o.insert("score".to_owned(), Value::Float(0.5));
        schema.validate_outcomes(&o).unwrap();
        o.insert("extra".to_owned(), Value::Float(0.5));
        assert!(schema.validate_outcomes(&o).is_err());
        o.remove("extra");
        o.insert("score".to_owned(), Value::from("high"));
        assert!(schema.validate_outcomes(&o).is_err());
    }
}
