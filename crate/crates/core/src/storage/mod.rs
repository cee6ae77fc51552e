//! Result persistence on SQLite (a single file) or PostgreSQL.
//!
//! Every results table carries the schema's fields plus `id`, `seed`,
//! `worker_id`, `elapsed_time` and `created_at`. `(worker_id, seed)` is
//! unique, which makes inserts idempotent: re-submitting a record after a
//! lost acknowledgement is recognized instead of duplicated.

pub mod blob;
mod postgres;
pub mod schema;
pub mod sql;
mod sqlite;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use log::warn;
use thiserror::Error;

use crate::paramspace::Configuration;
use crate::value::Value;
pub use blob::{deserialize_blob, serialize_blob, BlobError};
pub use schema::{FieldKind, FieldRole, FieldSpec, ResultSchema, SchemaError};
use sql::{quote, transaction, ColType, Dialect, SqlConnection, SqlValue};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid dsn: {0}")]
    InvalidDsn(String),
    #[error("cannot open store: {0}")]
    Open(String),
    /// Transient; the retry loop reconnects and tries again.
    #[error("connection error: {0}")]
    Connection(String),
    #[error("gave up after {waited:?} of retries: {last_error}")]
    RetryExhausted { waited: Duration, last_error: String },
    #[error("existing table {table:?} does not match the schema: {detail}")]
    SchemaMismatch { table: String, detail: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("constraint violation: {0}")]
    Constraint(String),
    #[error("worker {worker_id:?} already stored seed {seed} for a different configuration")]
    DuplicateSeed { worker_id: String, seed: u64 },
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error("database error: {0}")]
    Database(String),
}

impl StoreError {
    pub fn is_transient(&self) -> bool {
        matches!(self, StoreError::Connection(_))
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    pub max_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            max_wait: Duration::from_secs(3600),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): base·2^attempt, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(31));
        self.base_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Sqlite(PathBuf),
    Postgres(String),
}

impl Backend {
    /// `postgres://…`, `postgresql://…` and `key=value` strings select the
    /// server backend; `sqlite:path` or a bare path selects a database file.
    pub fn parse(dsn: &str) -> Result<Self> {
        let dsn = dsn.trim();
        if dsn.is_empty() {
            return Err(StoreError::InvalidDsn("empty dsn".into()));
        }
        if dsn.starts_with("postgres://") || dsn.starts_with("postgresql://") || dsn.contains('=') {
            return Ok(Backend::Postgres(dsn.to_owned()));
        }
        let path = dsn
            .strip_prefix("sqlite://")
            .or_else(|| dsn.strip_prefix("sqlite:"))
            .unwrap_or(dsn);
        if path.is_empty() || path == ":memory:" {
            return Err(StoreError::InvalidDsn(
                "a database file path is required; in-memory databases are not shared between workers".into(),
            ));
        }
        Ok(Backend::Sqlite(PathBuf::from(path)))
    }

    fn connect(&self) -> Result<Box<dyn SqlConnection>> {
        Ok(match self {
            Backend::Sqlite(path) => Box::new(sqlite::SqliteConn::open(path)?),
            Backend::Postgres(dsn) => Box::new(postgres::PostgresConn::open(dsn)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub seed: u64,
    pub elapsed_time: f64,
    pub worker_id: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub config: Configuration,
    pub outcomes: BTreeMap<String, Value>,
    pub meta: RecordMeta,
}

/// Current time at the precision both backends store (microseconds).
pub fn now_micros() -> DateTime<Utc> {
    let now = Utc::now();
    now.duration_trunc(TimeDelta::microseconds(1)).unwrap_or(now)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// The same (worker, seed, configuration) row was already stored,
    /// typically by an earlier attempt whose acknowledgement was lost.
    AlreadyPresent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reservation {
    pub id: i64,
    pub config: Configuration,
    pub holder: String,
    pub lease_expiry: DateTime<Utc>,
}

/// Where an injected fault strikes relative to the database action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Before the action runs: nothing reaches the database.
    Before,
    /// After the action committed: the acknowledgement is lost.
    After,
}

pub type FaultInjector = Box<dyn FnMut(FaultPoint) -> bool + Send>;

/// One connection to a result store. Used by one thread at a time; open one
/// handle per worker.
pub struct StoreHandle {
    backend: Backend,
    retry: RetryPolicy,
    conn: Option<Box<dyn SqlConnection>>,
    faults: Option<FaultInjector>,
}

impl std::fmt::Debug for StoreHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoreHandle")
            .field("backend", &self.backend)
            .field("retry", &self.retry)
            .field("connected", &self.conn.is_some())
            .finish()
    }
}

impl StoreHandle {
    /// Connect once, without retrying: a store that cannot be reached at
    /// startup is a configuration problem.
    pub fn open(dsn: &str, retry: RetryPolicy) -> Result<Self> {
        if retry.base_backoff.is_zero() {
            return Err(StoreError::InvalidDsn("base backoff must be positive".into()));
        }
        let backend = Backend::parse(dsn)?;
        let conn = backend.connect().map_err(|e| match e {
            StoreError::InvalidDsn(m) => StoreError::InvalidDsn(m),
            other => StoreError::Open(other.to_string()),
        })?;
        Ok(Self { backend, retry, conn: Some(conn), faults: None })
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    /// Install a hook consulted around every database action; returning
    /// `true` simulates a dropped connection at that point.
    pub fn set_fault_injector(&mut self, injector: Option<FaultInjector>) {
        self.faults = injector;
    }

    /// Run `action`, reconnecting and retrying with exponential backoff on
    /// transient failures until the policy's `max_wait` is spent. The action
    /// must be idempotent or a single transaction.
    pub fn with_retry<T>(&mut self, mut action: impl FnMut(&mut dyn SqlConnection) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let mut attempt = 0u32;
        loop {
            let err = match self.attempt(&mut action) {
                Err(StoreError::Connection(msg)) => msg,
                other => return other,
            };
            self.conn = None;
            let waited = start.elapsed();
            if waited >= self.retry.max_wait {
                return Err(StoreError::RetryExhausted { waited, last_error: err });
            }
            let delay = self.retry.backoff(attempt).min(self.retry.max_wait - waited);
            warn!("store unavailable ({err}); retrying in {delay:?}");
            std::thread::sleep(delay);
            attempt = attempt.saturating_add(1);
        }
    }

    fn attempt<T>(&mut self, action: &mut impl FnMut(&mut dyn SqlConnection) -> Result<T>) -> Result<T> {
        if let Some(f) = self.faults.as_mut() {
            if f(FaultPoint::Before) {
                return Err(StoreError::Connection("injected fault".into()));
            }
        }
        if self.conn.is_none() {
            self.conn = Some(self.backend.connect()?);
        }
        let conn = self.conn.as_deref_mut().expect("connected above");
        let out = action(conn)?;
        if let Some(f) = self.faults.as_mut() {
            if f(FaultPoint::After) {
                return Err(StoreError::Connection("injected fault after commit".into()));
            }
        }
        Ok(out)
    }

    /// Create the results and reservations tables, or verify that existing
    /// ones match the schema exactly.
    pub fn init_table(&mut self, schema: &ResultSchema) -> Result<()> {
        self.with_retry(|c| {
            let begin = match c.dialect() {
                Dialect::Sqlite => "BEGIN IMMEDIATE",
                // Serializes concurrent CREATE TABLE from several workers.
                Dialect::Postgres => "BEGIN; SELECT pg_advisory_xact_lock(5353545544)",
            };
            transaction(c, begin, |c| {
                ensure_table(c, schema.table(), &results_columns(schema), Some(("worker_id", "seed")))?;
                ensure_table(c, &schema.reservations_table(), &reservation_columns(schema), None)?;
                let cfg: Vec<String> = schema.config_fields().map(|f| quote(&f.name)).collect();
                if !cfg.is_empty() {
                    c.batch(&format!(
                        "CREATE INDEX IF NOT EXISTS {} ON {} ({})",
                        quote(&format!("{}_config_idx", schema.table())),
                        quote(schema.table()),
                        cfg.join(", ")
                    ))?;
                }
                Ok(())
            })
        })
    }

    pub fn table_exists(&mut self, schema: &ResultSchema) -> Result<bool> {
        self.with_retry(|c| Ok(c.table_columns(schema.table())?.is_some()))
    }

    /// Number of stored rows whose config columns equal `config`.
    pub fn count_results(&mut self, schema: &ResultSchema, config: &Configuration) -> Result<u64> {
        let config = schema.normalize_config(config)?;
        self.with_retry(|c| {
            let (clause, params) = where_config(c.dialect(), &config, 1);
            let rows = c.query(
                &format!("SELECT COUNT(*) FROM {} WHERE {clause}", quote(schema.table())),
                &params,
                &[ColType::Int],
            )?;
            Ok(int_cell(&rows[0][0]) as u64)
        })
    }

    /// Stored row counts for every distinct configuration in the table.
    pub fn config_counts(&mut self, schema: &ResultSchema) -> Result<Vec<(Configuration, u64)>> {
        self.with_retry(|c| grouped_counts(c, schema, schema.table(), None))
    }

    /// Unexpired reservation counts per configuration.
    pub fn live_reservations(&mut self, schema: &ResultSchema, now: DateTime<Utc>) -> Result<Vec<(Configuration, u64)>> {
        self.with_retry(|c| grouped_counts(c, schema, &schema.reservations_table(), Some(now)))
    }

    pub fn count_for_worker(&mut self, schema: &ResultSchema, worker_id: &str) -> Result<u64> {
        self.with_retry(|c| {
            let sql = format!(
                "SELECT COUNT(*) FROM {} WHERE worker_id = {}",
                quote(schema.table()),
                c.dialect().placeholder(1)
            );
            let rows = c.query(&sql, &[SqlValue::Text(worker_id.to_owned())], &[ColType::Int])?;
            Ok(int_cell(&rows[0][0]) as u64)
        })
    }

    /// Store one record in a single statement. Safe to call again with the
    /// same record after any failure.
    pub fn insert_result(&mut self, schema: &ResultSchema, record: &ResultRecord) -> Result<InsertOutcome> {
        let row = RowValues::new(schema, record)?;
        self.with_retry(|c| insert_row(c, schema, &row))
    }

    /// All rows (or those matching every assignment in `filter`) in
    /// insertion order, blobs decoded.
    pub fn read_results(&mut self, schema: &ResultSchema, filter: Option<&Configuration>) -> Result<Vec<ResultRecord>> {
        let filter = filter.map(|f| schema.normalize_partial(f)).transpose()?;
        let fields: Vec<&FieldSpec> = schema.fields().iter().collect();
        let mut columns: Vec<ColType> = fields.iter().map(|f| ColType::from(f.kind)).collect();
        columns.extend([ColType::Int, ColType::Text, ColType::Real, ColType::Timestamp]);
        let rows = self.with_retry(|c| {
            let mut sql = format!(
                "SELECT {}, seed, worker_id, elapsed_time, created_at FROM {}",
                fields.iter().map(|f| quote(&f.name)).collect::<Vec<_>>().join(", "),
                quote(schema.table())
            );
            let mut params = Vec::new();
            if let Some(f) = filter.as_ref().filter(|f| !f.is_empty()) {
                let (clause, p) = where_config(c.dialect(), f, 1);
                sql.push_str(" WHERE ");
                sql.push_str(&clause);
                params = p;
            }
            sql.push_str(" ORDER BY id");
            c.query(&sql, &params, &columns)
        })?;
        rows.into_iter()
            .map(|row| {
                let mut config = Vec::new();
                let mut outcomes = BTreeMap::new();
                for (f, cell) in fields.iter().zip(&row) {
                    let v = decode_value(f.kind, cell)?;
                    match f.role {
                        FieldRole::Config => config.push((f.name.clone(), v)),
                        FieldRole::Outcome => {
                            outcomes.insert(f.name.clone(), v);
                        }
                    }
                }
                let n = fields.len();
                let (SqlValue::Text(worker_id), SqlValue::Real(elapsed_time), SqlValue::Timestamp(ts)) =
                    (&row[n + 1], &row[n + 2], &row[n + 3])
                else {
                    unreachable!("typed fetch");
                };
                Ok(ResultRecord {
                    config: Configuration::new(config),
                    outcomes,
                    meta: RecordMeta {
                        seed: int_cell(&row[n]) as u64,
                        elapsed_time: *elapsed_time,
                        worker_id: worker_id.clone(),
                        created_at: ts.and_utc(),
                    },
                })
            })
            .collect()
    }

    /// Claim one replication slot for `config` if completed rows plus live
    /// leases stay below `max_count`. Expired leases are cleared first.
    pub fn try_reserve(
        &mut self,
        schema: &ResultSchema,
        config: &Configuration,
        max_count: u64,
        holder: &str,
        lease: Duration,
        now: DateTime<Utc>,
    ) -> Result<Option<Reservation>> {
        let config = schema.normalize_config(config)?;
        let lease = TimeDelta::from_std(lease).map_err(|e| StoreError::Database(e.to_string()))?;
        let expiry = now + lease;
        let res_table = schema.reservations_table();
        let id = self.with_retry(|c| {
            let d = c.dialect();
            transaction(c, &d.begin_exclusive(&res_table), |c| {
                let (clause, mut params) = where_config(d, &config, 1);
                let done = c.query(
                    &format!("SELECT COUNT(*) FROM {} WHERE {clause}", quote(schema.table())),
                    &params,
                    &[ColType::Int],
                )?;
                let now_param = params.len() + 1;
                params.push(SqlValue::Int(now.timestamp_millis()));
                c.execute(
                    &format!(
                        "DELETE FROM {} WHERE {clause} AND lease_expiry <= {}",
                        quote(&res_table),
                        d.placeholder(now_param)
                    ),
                    &params,
                )?;
                params.pop();
                let live = c.query(
                    &format!("SELECT COUNT(*) FROM {} WHERE {clause}", quote(&res_table)),
                    &params,
                    &[ColType::Int],
                )?;
                if (int_cell(&done[0][0]) + int_cell(&live[0][0])) as u64 >= max_count {
                    return Ok(None);
                }
                let mut names: Vec<String> = config.assignments().iter().map(|(k, _)| quote(k)).collect();
                names.extend(["holder".to_owned(), "lease_expiry".to_owned()]);
                params.push(SqlValue::Text(holder.to_owned()));
                params.push(SqlValue::Int(expiry.timestamp_millis()));
                let placeholders: Vec<String> = (1..=params.len()).map(|i| d.placeholder(i)).collect();
                let rows = c.query(
                    &format!(
                        "INSERT INTO {} ({}) VALUES ({}) RETURNING id",
                        quote(&res_table),
                        names.join(", "),
                        placeholders.join(", ")
                    ),
                    &params,
                    &[ColType::Int],
                )?;
                Ok(Some(int_cell(&rows[0][0])))
            })
        })?;
        Ok(id.map(|id| Reservation {
            id,
            config,
            holder: holder.to_owned(),
            lease_expiry: DateTime::from_timestamp_millis(expiry.timestamp_millis()).unwrap_or(expiry),
        }))
    }

    /// Store the record and drop its reservation in one transaction.
    pub fn complete_reservation(
        &mut self,
        schema: &ResultSchema,
        reservation: &Reservation,
        record: &ResultRecord,
    ) -> Result<InsertOutcome> {
        let row = RowValues::new(schema, record)?;
        let res_table = schema.reservations_table();
        self.with_retry(|c| {
            let d = c.dialect();
            transaction(c, &d.begin_exclusive(&res_table), |c| {
                let outcome = insert_row(c, schema, &row)?;
                delete_reservation(c, &res_table, reservation.id)?;
                Ok(outcome)
            })
        })
    }

    pub fn release(&mut self, schema: &ResultSchema, reservation: &Reservation) -> Result<()> {
        let res_table = schema.reservations_table();
        self.with_retry(|c| delete_reservation(c, &res_table, reservation.id))
    }

    /// Delete every row and reservation. `None` when the table does not exist.
    pub fn purge(&mut self, schema: &ResultSchema) -> Result<Option<u64>> {
        self.with_retry(|c| {
            if c.table_columns(schema.table())?.is_none() {
                return Ok(None);
            }
            let d = c.dialect();
            transaction(c, if d == Dialect::Sqlite { "BEGIN IMMEDIATE" } else { "BEGIN" }, |c| {
                let n = c.execute(&format!("DELETE FROM {}", quote(schema.table())), &[])?;
                if c.table_columns(&schema.reservations_table())?.is_some() {
                    c.execute(&format!("DELETE FROM {}", quote(&schema.reservations_table())), &[])?;
                }
                Ok(Some(n))
            })
        })
    }
}

fn delete_reservation(c: &mut dyn SqlConnection, table: &str, id: i64) -> Result<()> {
    let sql = format!("DELETE FROM {} WHERE id = {}", quote(table), c.dialect().placeholder(1));
    c.execute(&sql, &[SqlValue::Int(id)])?;
    Ok(())
}

struct Column {
    name: String,
    col: ColType,
}

fn results_columns(schema: &ResultSchema) -> Vec<Column> {
    let mut cols: Vec<Column> =
        schema.fields().iter().map(|f| Column { name: f.name.clone(), col: f.kind.into() }).collect();
    for (name, col) in
        [("seed", ColType::Int), ("worker_id", ColType::Text), ("elapsed_time", ColType::Real), ("created_at", ColType::Timestamp)]
    {
        cols.push(Column { name: name.to_owned(), col });
    }
    cols
}

fn reservation_columns(schema: &ResultSchema) -> Vec<Column> {
    let mut cols: Vec<Column> =
        schema.config_fields().map(|f| Column { name: f.name.clone(), col: f.kind.into() }).collect();
    cols.push(Column { name: "holder".into(), col: ColType::Text });
    cols.push(Column { name: "lease_expiry".into(), col: ColType::Int });
    cols
}

fn ensure_table(c: &mut dyn SqlConnection, table: &str, columns: &[Column], unique: Option<(&str, &str)>) -> Result<()> {
    let d = c.dialect();
    match c.table_columns(table)? {
        None => {
            let mut defs = vec![d.id_column().to_owned()];
            defs.extend(columns.iter().map(|col| format!("{} {} NOT NULL", quote(&col.name), d.column_type(col.col))));
            if let Some((a, b)) = unique {
                defs.push(format!("UNIQUE ({a}, {b})"));
            }
            c.batch(&format!("CREATE TABLE {} ({})", quote(table), defs.join(", ")))
        }
        Some(existing) => {
            let mut expected: Vec<(String, String)> = vec![("id".into(), d.id_catalog_type().into())];
            expected.extend(columns.iter().map(|col| (col.name.clone(), d.catalog_type(col.col).to_owned())));
            let mut problems = Vec::new();
            for (name, ty) in &expected {
                match existing.iter().find(|(n, _)| n == name) {
                    None => problems.push(format!("missing column {name:?}")),
                    Some((_, t)) if t != ty => problems.push(format!("column {name:?} has type {t}, expected {ty}")),
                    Some(_) => {}
                }
            }
            for (name, _) in &existing {
                if !expected.iter().any(|(n, _)| n == name) {
                    problems.push(format!("unexpected column {name:?}"));
                }
            }
            if problems.is_empty() {
                Ok(())
            } else {
                Err(StoreError::SchemaMismatch { table: table.to_owned(), detail: problems.join("; ") })
            }
        }
    }
}

fn to_sql(v: &Value) -> Result<SqlValue> {
    Ok(match v {
        Value::Text(s) => SqlValue::Text(s.clone()),
        Value::Float(f) => SqlValue::Real(*f),
        Value::Integer(i) => SqlValue::Int(*i),
        Value::Bool(b) => SqlValue::Int(i64::from(*b)),
        Value::Blob(s) => SqlValue::Bytes(serialize_blob(s)?),
    })
}

fn decode_value(kind: FieldKind, cell: &SqlValue) -> Result<Value> {
    Ok(match (kind, cell) {
        (FieldKind::Text, SqlValue::Text(s)) => Value::Text(s.clone()),
        (FieldKind::Float, SqlValue::Real(f)) => Value::Float(*f),
        (FieldKind::Integer, SqlValue::Int(i)) => Value::Integer(*i),
        (FieldKind::Blob, SqlValue::Bytes(b)) => Value::Blob(deserialize_blob(b)?),
        (k, c) => return Err(StoreError::Database(format!("cannot decode {c:?} as {k:?}"))),
    })
}

fn int_cell(v: &SqlValue) -> i64 {
    match v {
        SqlValue::Int(i) => *i,
        other => unreachable!("typed fetch returned {other:?}"),
    }
}

/// `"a" = ?1 AND "b" = ?2 …` with parameters numbered from `first`.
fn where_config(d: Dialect, config: &Configuration, first: usize) -> (String, Vec<SqlValue>) {
    let mut clause = Vec::new();
    let mut params = Vec::new();
    for (i, (name, v)) in config.assignments().iter().enumerate() {
        clause.push(format!("{} = {}", quote(name), d.placeholder(first + i)));
        params.push(to_sql(v).expect("config values are scalars"));
    }
    if clause.is_empty() {
        clause.push("1 = 1".into());
    }
    (clause.join(" AND "), params)
}

fn grouped_counts(
    c: &mut dyn SqlConnection,
    schema: &ResultSchema,
    table: &str,
    live_at: Option<DateTime<Utc>>,
) -> Result<Vec<(Configuration, u64)>> {
    let fields: Vec<&FieldSpec> = schema.config_fields().collect();
    let names: Vec<String> = fields.iter().map(|f| quote(&f.name)).collect();
    let mut columns: Vec<ColType> = fields.iter().map(|f| ColType::from(f.kind)).collect();
    columns.push(ColType::Int);
    let mut params = Vec::new();
    let mut sql = format!("SELECT {}COUNT(*) FROM {}", names.iter().map(|n| format!("{n}, ")).collect::<String>(), quote(table));
    if let Some(now) = live_at {
        sql.push_str(&format!(" WHERE lease_expiry > {}", c.dialect().placeholder(1)));
        params.push(SqlValue::Int(now.timestamp_millis()));
    }
    if !names.is_empty() {
        sql.push_str(&format!(" GROUP BY {}", names.join(", ")));
    }
    let rows = c.query(&sql, &params, &columns)?;
    rows.into_iter()
        .filter(|row| int_cell(&row[fields.len()]) > 0)
        .map(|row| {
            let config = fields
                .iter()
                .zip(&row)
                .map(|(f, cell)| Ok((f.name.clone(), decode_value(f.kind, cell)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((Configuration::new(config), int_cell(&row[fields.len()]) as u64))
        })
        .collect()
}

/// A validated record flattened into column order.
struct RowValues {
    names: Vec<String>,
    values: Vec<SqlValue>,
    config: Configuration,
    worker_id: String,
    seed: u64,
}

impl RowValues {
    fn new(schema: &ResultSchema, record: &ResultRecord) -> Result<Self> {
        let config = schema.normalize_config(&record.config)?;
        schema.validate_outcomes(&record.outcomes)?;
        if !record.meta.elapsed_time.is_finite() {
            return Err(SchemaError::Record("elapsed_time must be finite".into()).into());
        }
        let mut names = Vec::new();
        let mut values = Vec::new();
        for f in schema.fields() {
            let v = match f.role {
                FieldRole::Config => config.get(&f.name),
                FieldRole::Outcome => record.outcomes.get(&f.name),
            }
            .expect("validated above");
            names.push(quote(&f.name));
            values.push(to_sql(v)?);
        }
        names.extend(["seed", "worker_id", "elapsed_time", "created_at"].map(String::from));
        values.push(SqlValue::Int(record.meta.seed as i64));
        values.push(SqlValue::Text(record.meta.worker_id.clone()));
        values.push(SqlValue::Real(record.meta.elapsed_time));
        values.push(SqlValue::Timestamp(
            record.meta.created_at.duration_trunc(TimeDelta::microseconds(1)).unwrap_or(record.meta.created_at).naive_utc(),
        ));
        Ok(Self { names, values, config, worker_id: record.meta.worker_id.clone(), seed: record.meta.seed })
    }
}

fn insert_row(c: &mut dyn SqlConnection, schema: &ResultSchema, row: &RowValues) -> Result<InsertOutcome> {
    let d = c.dialect();
    let placeholders: Vec<String> = (1..=row.values.len()).map(|i| d.placeholder(i)).collect();
    let sql = format!(
        "INSERT INTO {} ({}) VALUES ({}) ON CONFLICT (worker_id, seed) DO NOTHING",
        quote(schema.table()),
        row.names.join(", "),
        placeholders.join(", ")
    );
    if c.execute(&sql, &row.values)? == 1 {
        return Ok(InsertOutcome::Inserted);
    }
    let fields: Vec<&FieldSpec> = schema.config_fields().collect();
    let cols: Vec<String> = fields.iter().map(|f| quote(&f.name)).collect();
    let sql = format!(
        "SELECT {} FROM {} WHERE worker_id = {} AND seed = {}",
        if cols.is_empty() { "seed".to_owned() } else { cols.join(", ") },
        quote(schema.table()),
        d.placeholder(1),
        d.placeholder(2)
    );
    let types: Vec<ColType> =
        if fields.is_empty() { vec![ColType::Int] } else { fields.iter().map(|f| ColType::from(f.kind)).collect() };
    let existing = c.query(&sql, &[SqlValue::Text(row.worker_id.clone()), SqlValue::Int(row.seed as i64)], &types)?;
    let Some(existing) = existing.first() else {
        return Err(StoreError::Database("insert ignored but no conflicting row found".into()));
    };
    let same = fields.is_empty()
        || fields
            .iter()
            .zip(existing)
            .all(|(f, cell)| decode_value(f.kind, cell).ok().as_ref() == row.config.get(&f.name));
    if same {
        Ok(InsertOutcome::AlreadyPresent)
    } else {
        Err(StoreError::DuplicateSeed { worker_id: row.worker_id.clone(), seed: row.seed })
    }
}
