use std::time::Duration;

use chrono::NaiveDateTime;
use postgres::types::ToSql;
use postgres::{Client, Config, NoTls, Row};

use super::sql::{ColType, Dialect, SqlConnection, SqlValue};
use super::StoreError;

pub struct PostgresConn {
    client: Client,
}

impl PostgresConn {
    pub fn open(dsn: &str) -> Result<Self, StoreError> {
        let mut config: Config = dsn.parse().map_err(|e: postgres::Error| StoreError::InvalidDsn(e.to_string()))?;
        if config.get_connect_timeout().is_none() {
            config.connect_timeout(Duration::from_secs(10));
        }
        let client = config.connect(NoTls).map_err(classify)?;
        Ok(Self { client })
    }
}

fn classify(e: postgres::Error) -> StoreError {
    if e.is_closed() {
        return StoreError::Connection(e.to_string());
    }
    if let Some(state) = e.code() {
        let code = state.code();
        // 08: connection exception, 57P: operator intervention (shutdown),
        // 40001/40P01: serialization failure and deadlock, 53300: too many
        // connections.
        if code.starts_with("08") || code.starts_with("57P") || matches!(code, "40001" | "40P01" | "53300") {
            return StoreError::Connection(e.to_string());
        }
        if code.starts_with("23") {
            return StoreError::Constraint(e.to_string());
        }
        return StoreError::Database(e.to_string());
    }
    let io = std::error::Error::source(&e).is_some_and(|s| s.downcast_ref::<std::io::Error>().is_some());
    if io || e.to_string().contains("connection") {
        StoreError::Connection(e.to_string())
    } else {
        StoreError::Database(e.to_string())
    }
}

fn bind(v: &SqlValue) -> Box<dyn ToSql + Sync> {
    match v {
        SqlValue::Text(s) => Box::new(s.clone()),
        SqlValue::Real(f) => Box::new(*f),
        SqlValue::Int(i) => Box::new(*i),
        SqlValue::Bytes(b) => Box::new(b.clone()),
        SqlValue::Timestamp(t) => Box::new(*t),
    }
}

fn fetch(row: &Row, i: usize, col: ColType) -> Result<SqlValue, StoreError> {
    let v = match col {
        ColType::Text => row.try_get::<_, String>(i).map(SqlValue::Text),
        ColType::Real => row.try_get::<_, f64>(i).map(SqlValue::Real),
        ColType::Int => row.try_get::<_, i64>(i).map(SqlValue::Int),
        ColType::Bytes => row.try_get::<_, Vec<u8>>(i).map(SqlValue::Bytes),
        ColType::Timestamp => row.try_get::<_, NaiveDateTime>(i).map(SqlValue::Timestamp),
    };
    v.map_err(|e| StoreError::Database(format!("column {i}: {e}")))
}

impl SqlConnection for PostgresConn {
    fn dialect(&self) -> Dialect {
        Dialect::Postgres
    }

    fn execute(&mut self, sql: &str, params: &[SqlValue]) -> Result<u64, StoreError> {
        let boxed: Vec<_> = params.iter().map(bind).collect();
        let refs: Vec<&(dyn ToSql + Sync)> = boxed.iter().map(|b| b.as_ref()).collect();
        self.client.execute(sql, &refs).map_err(classify)
    }

    fn query(&mut self, sql: &str, params: &[SqlValue], columns: &[ColType]) -> Result<Vec<Vec<SqlValue>>, StoreError> {
        let boxed: Vec<_> = params.iter().map(bind).collect();
        let refs: Vec<&(dyn ToSql + Sync)> = boxed.iter().map(|b| b.as_ref()).collect();
        let rows = self.client.query(sql, &refs).map_err(classify)?;
        rows.iter()
            .map(|row| columns.iter().enumerate().map(|(i, &c)| fetch(row, i, c)).collect())
            .collect()
    }

    fn batch(&mut self, sql: &str) -> Result<(), StoreError> {
        self.client.batch_execute(sql).map_err(classify)
    }

    fn table_columns(&mut self, table: &str) -> Result<Option<Vec<(String, String)>>, StoreError> {
        let rows = self.query(
            "SELECT column_name::text, data_type::text FROM information_schema.columns \
             WHERE table_schema = current_schema() AND table_name = $1 ORDER BY ordinal_position",
            &[SqlValue::Text(table.to_owned())],
            &[ColType::Text, ColType::Text],
        )?;
        if rows.is_empty() {
            return Ok(None);
        }
        Ok(Some(
            rows.into_iter()
                .map(|r| match (&r[0], &r[1]) {
                    (SqlValue::Text(n), SqlValue::Text(t)) => (n.clone(), t.clone()),
                    _ => unreachable!("typed fetch"),
                })
                .collect(),
        ))
    }
}
