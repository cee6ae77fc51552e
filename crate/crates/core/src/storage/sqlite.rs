use std::path::Path;
use std::time::Duration;

use chrono::NaiveDateTime;
use rusqlite::types::{Value as Lite, ValueRef};
use rusqlite::{Connection, ErrorCode};

use super::sql::{ColType, Dialect, SqlConnection, SqlValue};
use super::StoreError;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.6f";

pub struct SqliteConn {
    conn: Connection,
}

impl SqliteConn {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path).map_err(classify)?;
        // Writers from other processes wait instead of failing immediately.
        conn.busy_timeout(Duration::from_secs(30)).map_err(classify)?;
        conn.pragma_update(None, "journal_mode", "WAL").map_err(classify)?;
        conn.pragma_update(None, "synchronous", "NORMAL").map_err(classify)?;
        Ok(Self { conn })
    }
}

fn classify(e: rusqlite::Error) -> StoreError {
    match &e {
        rusqlite::Error::SqliteFailure(f, _) => match f.code {
            ErrorCode::DatabaseBusy | ErrorCode::DatabaseLocked | ErrorCode::CannotOpen => {
                StoreError::Connection(e.to_string())
            }
            ErrorCode::ConstraintViolation => StoreError::Constraint(e.to_string()),
            _ => StoreError::Database(e.to_string()),
        },
        _ => StoreError::Database(e.to_string()),
    }
}

fn bind(v: &SqlValue) -> Lite {
    match v {
        SqlValue::Text(s) => Lite::Text(s.clone()),
        SqlValue::Real(f) => Lite::Real(*f),
        SqlValue::Int(i) => Lite::Integer(*i),
        SqlValue::Bytes(b) => Lite::Blob(b.clone()),
        SqlValue::Timestamp(t) => Lite::Text(t.format(TIMESTAMP_FORMAT).to_string()),
    }
}

fn fetch(v: ValueRef<'_>, col: ColType) -> Result<SqlValue, StoreError> {
    let bad = |v: ValueRef<'_>| StoreError::Database(format!("expected {col:?} column, found {:?}", v.data_type()));
    Ok(match (col, v) {
        (ColType::Text, ValueRef::Text(t)) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
        (ColType::Real, ValueRef::Real(f)) => SqlValue::Real(f),
        (ColType::Real, ValueRef::Integer(i)) => SqlValue::Real(i as f64),
        (ColType::Int, ValueRef::Integer(i)) => SqlValue::Int(i),
        (ColType::Bytes, ValueRef::Blob(b)) => SqlValue::Bytes(b.to_vec()),
        (ColType::Timestamp, ValueRef::Text(t)) => {
            let s = String::from_utf8_lossy(t);
            SqlValue::Timestamp(
                NaiveDateTime::parse_from_str(&s, TIMESTAMP_FORMAT)
                    .or_else(|_| NaiveDateTime::parse_from_str(&s, "%Y-%m-%d %H:%M:%S"))
                    .map_err(|e| StoreError::Database(format!("bad timestamp {s:?}: {e}")))?,
            )
        }
        (_, other) => return Err(bad(other)),
    })
}

impl SqlConnection for SqliteConn {
    fn dialect(&self) -> Dialect {
        Dialect::Sqlite
    }

    fn execute(&mut self, sql: &str, params: &[SqlValue]) -> Result<u64, StoreError> {
        let n = self
            .conn
            .execute(sql, rusqlite::params_from_iter(params.iter().map(bind)))
            .map_err(classify)?;
        Ok(n as u64)
    }

    fn query(&mut self, sql: &str, params: &[SqlValue], columns: &[ColType]) -> Result<Vec<Vec<SqlValue>>, StoreError> {
        let mut stmt = self.conn.prepare_cached(sql).map_err(classify)?;
        let mut rows = stmt.query(rusqlite::params_from_iter(params.iter().map(bind))).map_err(classify)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next().map_err(classify)? {
            let cells = columns
                .iter()
                .enumerate()
                .map(|(i, &col)| fetch(row.get_ref(i).map_err(classify)?, col))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(cells);
        }
        Ok(out)
    }

    fn batch(&mut self, sql: &str) -> Result<(), StoreError> {
        self.conn.execute_batch(sql).map_err(classify)
    }

    fn table_columns(&mut self, table: &str) -> Result<Option<Vec<(String, String)>>, StoreError> {
        let rows = self.query(
            "SELECT name, type FROM pragma_table_info(?1) ORDER BY cid",
            &[SqlValue::Text(table.to_owned())],
            &[ColType::Text, ColType::Text],
        )?;
        if rows.is_empty() {
            return Ok(None);
        }
        Ok(Some(
            rows.into_iter()
                .map(|r| match (&r[0], &r[1]) {
                    (SqlValue::Text(n), SqlValue::Text(t)) => (n.clone(), t.to_uppercase()),
                    _ => unreachable!("typed fetch"),
                })
                .collect(),
        ))
    }
}
