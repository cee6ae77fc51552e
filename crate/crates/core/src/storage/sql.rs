//! Minimal SQL surface shared by the two backends.

use chrono::NaiveDateTime;

use super::schema::FieldKind;
use super::StoreError;

/// A bound parameter or fetched cell.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Text(String),
    Real(f64),
    Int(i64),
    Bytes(Vec<u8>),
    Timestamp(NaiveDateTime),
}

/// Expected type of a fetched column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColType {
    Text,
    Real,
    Int,
    Bytes,
    Timestamp,
}

impl From<FieldKind> for ColType {
    fn from(kind: FieldKind) -> Self {
        match kind {
            FieldKind::Text => ColType::Text,
            FieldKind::Float => ColType::Real,
            FieldKind::Integer => ColType::Int,
            FieldKind::Blob => ColType::Bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    Sqlite,
    Postgres,
}

impl Dialect {
    pub fn placeholder(self, index: usize) -> String {
        match self {
            Dialect::Sqlite => format!("?{index}"),
            Dialect::Postgres => format!("${index}"),
        }
    }

    pub fn column_type(self, col: ColType) -> &'static str {
        match (self, col) {
            (_, ColType::Text) => "TEXT",
            (Dialect::Sqlite, ColType::Real) => "REAL",
            (Dialect::Postgres, ColType::Real) => "DOUBLE PRECISION",
            (Dialect::Sqlite, ColType::Int) => "INTEGER",
            (Dialect::Postgres, ColType::Int) => "BIGINT",
            (Dialect::Sqlite, ColType::Bytes) => "BLOB",
            (Dialect::Postgres, ColType::Bytes) => "BYTEA",
            (_, ColType::Timestamp) => "TIMESTAMP",
        }
    }

    /// Type name as reported back by the catalog for a column we created.
    pub fn catalog_type(self, col: ColType) -> &'static str {
        match (self, col) {
            (Dialect::Sqlite, c) => self.column_type(c),
            (Dialect::Postgres, ColType::Text) => "text",
            (Dialect::Postgres, ColType::Real) => "double precision",
            (Dialect::Postgres, ColType::Int) => "bigint",
            (Dialect::Postgres, ColType::Bytes) => "bytea",
            (Dialect::Postgres, ColType::Timestamp) => "timestamp without time zone",
        }
    }

    pub fn id_column(self) -> &'static str {
        match self {
            Dialect::Sqlite => "id INTEGER PRIMARY KEY AUTOINCREMENT",
            Dialect::Postgres => "id BIGSERIAL PRIMARY KEY",
        }
    }

    pub fn id_catalog_type(self) -> &'static str {
        match self {
            Dialect::Sqlite => "INTEGER",
            Dialect::Postgres => "bigint",
        }
    }

    /// Statement(s) opening a write transaction that serializes against
    /// other writers touching `table`.
    pub fn begin_exclusive(self, table: &str) -> String {
        match self {
            Dialect::Sqlite => "BEGIN IMMEDIATE".to_owned(),
            Dialect::Postgres => format!("BEGIN; LOCK TABLE {} IN SHARE ROW EXCLUSIVE MODE", quote(table)),
        }
    }
}

pub fn quote(ident: &str) -> String {
    format!("\"{ident}\"")
}

/// One live database connection. Implementations classify errors so the
/// retry loop can tell transient failures from fatal ones.
pub trait SqlConnection: Send {
    fn dialect(&self) -> Dialect;

    /// Run one statement, returning affected rows.
    fn execute(&mut self, sql: &str, params: &[SqlValue]) -> Result<u64, StoreError>;

    fn query(&mut self, sql: &str, params: &[SqlValue], columns: &[ColType]) -> Result<Vec<Vec<SqlValue>>, StoreError>;

    /// Run one or more parameterless statements.
    fn batch(&mut self, sql: &str) -> Result<(), StoreError>;

    /// Column names and catalog type names of `table`, or `None` if the
    /// table does not exist.
    fn table_columns(&mut self, table: &str) -> Result<Option<Vec<(String, String)>>, StoreError>;
}

/// Run `body` inside a transaction opened with `begin`; roll back on error.
pub fn transaction<T>(
    conn: &mut dyn SqlConnection,
    begin: &str,
    body: impl FnOnce(&mut dyn SqlConnection) -> Result<T, StoreError>,
) -> Result<T, StoreError> {
    conn.batch(begin)?;
    match body(conn) {
        Ok(v) => {
            conn.batch("COMMIT")?;
            Ok(v)
        }
        Err(e) => {
            let _ = conn.batch("ROLLBACK");
            Err(e)
        }
    }
}
