//! Store behaviour on SQLite, and on PostgreSQL when `SIMSTUDY_TEST_PG`
//! holds a connection string.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeDelta, Utc};
use proptest::prelude::*;
use simstudy::storage::sql::{ColType, SqlValue};
use simstudy::storage::{
    now_micros, FaultPoint, FieldKind, InsertOutcome, RecordMeta, ResultRecord, ResultSchema, RetryPolicy, StoreError,
    StoreHandle,
};
use simstudy::{Configuration, Structured, Value};
use tempfile::TempDir;

static TABLE_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// A fresh store plus a table name nobody else uses.
struct Fixture {
    dsn: String,
    table: String,
    _dir: Option<TempDir>,
}

fn fixtures() -> Vec<Fixture> {
    let n = TABLE_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = TempDir::new().unwrap();
    let mut out = vec![Fixture {
        dsn: format!("sqlite:{}", dir.path().join("store.db").display()),
        table: "result".into(),
        _dir: Some(dir),
    }];
    if let Ok(pg) = std::env::var("SIMSTUDY_TEST_PG") {
        out.push(Fixture { dsn: pg, table: format!("t{}_{}", std::process::id(), n), _dir: None });
    }
    out
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        base_backoff: Duration::from_millis(5),
        max_backoff: Duration::from_millis(40),
        max_wait: Duration::from_secs(2),
    }
}

fn listing_schema(table: &str) -> ResultSchema {
    ResultSchema::builder(table)
        .config("data_distribution", FieldKind::Text)
        .config("method", FieldKind::Text)
        .config("no_instances", FieldKind::Float)
        .outcome("score", FieldKind::Float)
        .build()
        .unwrap()
}

fn blob_schema(table: &str) -> ResultSchema {
    ResultSchema::builder(table)
        .config("method", FieldKind::Text)
        .config("n", FieldKind::Integer)
        .outcome("coefs", FieldKind::Blob)
        .outcome("label", FieldKind::Text)
        .outcome("iterations", FieldKind::Integer)
        .build()
        .unwrap()
}

fn config(dist: &str, method: &str, n: f64) -> Configuration {
    Configuration::new([("data_distribution", Value::from(dist)), ("method", Value::from(method)), ("no_instances", Value::from(n))])
}

fn record(cfg: Configuration, score: f64, seed: u64, worker: &str) -> ResultRecord {
    ResultRecord {
        config: cfg,
        outcomes: BTreeMap::from([("score".to_owned(), Value::Float(score))]),
        meta: RecordMeta { seed, elapsed_time: 0.25, worker_id: worker.into(), created_at: now_micros() },
    }
}

fn open(f: &Fixture) -> StoreHandle {
    StoreHandle::open(&f.dsn, fast_retry()).unwrap()
}

/// Direct SQL count, bypassing the store's own counting code.
fn sql_count(store: &mut StoreHandle, table: &str, method: &str) -> i64 {
    store
        .with_retry(|c| {
            let ph = c.dialect().placeholder(1);
            c.query(
                &format!("SELECT COUNT(*) FROM \"{table}\" WHERE method = {ph}"),
                &[SqlValue::Text(method.into())],
                &[ColType::Int],
            )
        })
        .map(|rows| match rows[0][0] {
            SqlValue::Int(n) => n,
            _ => unreachable!(),
        })
        .unwrap()
}

#[test]
fn init_is_idempotent_and_detects_mismatch() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        assert!(!store.table_exists(&schema).unwrap());
        store.init_table(&schema).unwrap();
        store.init_table(&schema).unwrap();
        assert!(store.table_exists(&schema).unwrap());

        let columns = store
            .with_retry(|c| c.table_columns(&f.table))
            .unwrap()
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect::<Vec<_>>();
        for col in ["data_distribution", "method", "no_instances", "score", "elapsed_time", "seed", "worker_id", "created_at"] {
            assert!(columns.iter().any(|c| c == col), "{col} missing from {columns:?}");
        }

        let narrower = ResultSchema::builder(&*f.table)
            .config("method", FieldKind::Text)
            .outcome("score", FieldKind::Float)
            .build()
            .unwrap();
        assert!(matches!(store.init_table(&narrower), Err(StoreError::SchemaMismatch { .. })));
        let retyped = ResultSchema::builder(&*f.table)
            .config("data_distribution", FieldKind::Text)
            .config("method", FieldKind::Text)
            .config("no_instances", FieldKind::Integer)
            .outcome("score", FieldKind::Float)
            .build()
            .unwrap();
        assert!(matches!(store.init_table(&retyped), Err(StoreError::SchemaMismatch { .. })));
    }
}

#[test]
fn counts_match_direct_sql() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        let c = config("complete", "ols", 100.0);
        let c2 = config("complete", "lasso", 100.0);
        assert_eq!(store.count_results(&schema, &c).unwrap(), 0);
        for seed in 0..3 {
            store.insert_result(&schema, &record(c.clone(), 0.5, seed, "w")).unwrap();
        }
        for seed in 3..5 {
            store.insert_result(&schema, &record(c2.clone(), 0.5, seed, "w")).unwrap();
        }
        assert_eq!(store.count_results(&schema, &c).unwrap(), 3);
        assert_eq!(store.count_results(&schema, &c2).unwrap(), 2);
        assert_eq!(sql_count(&mut store, &f.table, "ols"), 3);
        assert_eq!(sql_count(&mut store, &f.table, "lasso"), 2);
        assert_eq!(store.count_results(&schema, &config("sparse", "ols", 100.0)).unwrap(), 0);

        let mut grouped = store.config_counts(&schema).unwrap();
        grouped.sort_by_key(|(_, n)| *n);
        assert_eq!(grouped, vec![(c2, 2), (c, 3)]);
        assert_eq!(store.count_for_worker(&schema, "w").unwrap(), 5);
        assert_eq!(store.count_for_worker(&schema, "other").unwrap(), 0);
    }
}

#[test]
fn read_back_and_filter() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        assert!(store.read_results(&schema, None).unwrap().is_empty());
        let inserted: Vec<ResultRecord> = (0..5)
            .map(|i| record(config("sparse", if i % 2 == 0 { "ols" } else { "lasso" }, 1000.0), i as f64 / 7.0, i, "w0"))
            .collect();
        for r in &inserted {
            assert_eq!(store.insert_result(&schema, r).unwrap(), InsertOutcome::Inserted);
        }
        let read = store.read_results(&schema, None).unwrap();
        assert_eq!(read, inserted);

        let only_ols = store.read_results(&schema, Some(&Configuration::new([("method", "ols")]))).unwrap();
        let expected: Vec<_> = inserted.iter().filter(|r| r.config.get("method") == Some(&Value::from("ols"))).cloned().collect();
        assert_eq!(only_ols, expected);
        assert_eq!(only_ols.len() as i64, sql_count(&mut store, &f.table, "ols"));
    }
}

#[test]
fn blob_outcomes_round_trip() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = blob_schema(&f.table);
        store.init_table(&schema).unwrap();
        let mut nested = BTreeMap::new();
        nested.insert("params".to_owned(), Structured::from(vec![0.1]));
        nested.insert("name".to_owned(), Structured::from("lasso"));
        let rec = ResultRecord {
            config: Configuration::new([("method", Value::from("lasso")), ("n", Value::from(100))]),
            outcomes: BTreeMap::from([
                ("coefs".to_owned(), Value::Blob(Structured::from(vec![1.0, 2.5, -3.0]))),
                ("label".to_owned(), Value::from("x")),
                ("iterations".to_owned(), Value::from(12)),
            ]),
            meta: RecordMeta { seed: u64::MAX, elapsed_time: 1.5, worker_id: "w".into(), created_at: now_micros() },
        };
        let mut rec2 = rec.clone();
        rec2.meta.seed = 1;
        rec2.outcomes.insert("coefs".into(), Value::Blob(Structured::Map(nested)));
        store.insert_result(&schema, &rec).unwrap();
        store.insert_result(&schema, &rec2).unwrap();
        assert_eq!(store.read_results(&schema, None).unwrap(), vec![rec, rec2]);
    }
}

#[test]
fn invalid_records_are_rejected() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        let mut r = record(config("complete", "ols", 100.0), 0.5, 1, "w");
        r.outcomes.insert("extra".into(), Value::Float(1.0));
        assert!(matches!(store.insert_result(&schema, &r), Err(StoreError::Schema(_))));
        let mut r = record(config("complete", "ols", 100.0), 0.5, 1, "w");
        r.outcomes.insert("score".into(), Value::from("high"));
        assert!(matches!(store.insert_result(&schema, &r), Err(StoreError::Schema(_))));
        let r = record(Configuration::new([("method", "ols")]), 0.5, 1, "w");
        assert!(matches!(store.insert_result(&schema, &r), Err(StoreError::Schema(_))));
        assert!(store.read_results(&schema, None).unwrap().is_empty());
    }
}

#[test]
fn resubmission_is_idempotent() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        let r = record(config("complete", "ols", 100.0), 0.5, 42, "w");
        assert_eq!(store.insert_result(&schema, &r).unwrap(), InsertOutcome::Inserted);
        assert_eq!(store.insert_result(&schema, &r).unwrap(), InsertOutcome::AlreadyPresent);
        let clash = record(config("sparse", "ols", 100.0), 0.5, 42, "w");
        assert!(matches!(store.insert_result(&schema, &clash), Err(StoreError::DuplicateSeed { seed: 42, .. })));
        // Same seed under another worker id is a different row.
        let other = record(config("sparse", "ols", 100.0), 0.5, 42, "w2");
        assert_eq!(store.insert_result(&schema, &other).unwrap(), InsertOutcome::Inserted);
        assert_eq!(store.read_results(&schema, None).unwrap().len(), 2);
    }
}

/// Fails the first `n` attempts at `point`.
fn fail_first(n: usize, point: FaultPoint) -> (Arc<AtomicUsize>, simstudy::storage::FaultInjector) {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = calls.clone();
    let remaining = AtomicUsize::new(n);
    let injector = Box::new(move |p: FaultPoint| {
        if p != point {
            return false;
        }
        seen.fetch_add(1, Ordering::SeqCst);
        remaining.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |r| r.checked_sub(1)).is_ok()
    });
    (calls, injector)
}

#[test]
fn outage_shorter_than_max_wait_is_absorbed() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        let (calls, injector) = fail_first(2, FaultPoint::Before);
        store.set_fault_injector(Some(injector));
        let r = record(config("complete", "ols", 100.0), 0.5, 7, "w");
        assert_eq!(store.insert_result(&schema, &r).unwrap(), InsertOutcome::Inserted);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        store.set_fault_injector(None);
        assert_eq!(store.read_results(&schema, None).unwrap(), vec![r]);
    }
}

#[test]
fn lost_acknowledgement_does_not_duplicate() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        let (_, injector) = fail_first(1, FaultPoint::After);
        store.set_fault_injector(Some(injector));
        let r = record(config("complete", "ols", 100.0), 0.5, 7, "w");
        assert_eq!(store.insert_result(&schema, &r).unwrap(), InsertOutcome::AlreadyPresent);
        store.set_fault_injector(None);
        assert_eq!(store.count_results(&schema, &r.config).unwrap(), 1);
    }
}

#[test]
fn outage_past_max_wait_surfaces_and_resubmits_cleanly() {
    for f in fixtures() {
        let policy = RetryPolicy {
            base_backoff: Duration::from_millis(5),
            max_backoff: Duration::from_millis(20),
            max_wait: Duration::from_millis(100),
        };
        let mut store = StoreHandle::open(&f.dsn, policy).unwrap();
        let schema = listing_schema(&f.table);
        store.init_table(&schema).unwrap();
        store.set_fault_injector(Some(Box::new(|_| true)));
        let r = record(config("complete", "ols", 100.0), 0.5, 9, "w");
        let err = store.insert_result(&schema, &r).unwrap_err();
        let StoreError::RetryExhausted { waited, .. } = err else { panic!("unexpected {err}") };
        assert!(waited >= Duration::from_millis(100));
        store.set_fault_injector(None);
        assert_eq!(store.count_results(&schema, &r.config).unwrap(), 0);
        assert_eq!(store.insert_result(&schema, &r).unwrap(), InsertOutcome::Inserted);
        assert_eq!(store.count_results(&schema, &r.config).unwrap(), 1);
    }
}

#[test]
fn reservations_hide_and_expire() {
    for f in fixtures() {
        let mut a = open(&f);
        let mut b = open(&f);
        let schema = listing_schema(&f.table);
        a.init_table(&schema).unwrap();
        let c = config("complete", "ols", 100.0);
        let now = Utc::now();
        let lease = Duration::from_secs(60);
        let r1 = a.try_reserve(&schema, &c, 2, "a", lease, now).unwrap().expect("slot 1");
        let r2 = b.try_reserve(&schema, &c, 2, "b", lease, now).unwrap().expect("slot 2");
        assert!(a.try_reserve(&schema, &c, 2, "a", lease, now).unwrap().is_none());
        assert!(r1.lease_expiry > now);
        let live = a.live_reservations(&schema, now).unwrap();
        assert_eq!(live, vec![(c.clone(), 2)]);

        // Completing swaps the lease for a stored row: still saturated.
        a.complete_reservation(&schema, &r1, &record(c.clone(), 0.1, 1, "a")).unwrap();
        assert!(b.try_reserve(&schema, &c, 2, "b", lease, now).unwrap().is_none());
        assert_eq!(a.live_reservations(&schema, now).unwrap(), vec![(c.clone(), 1)]);

        // Releasing frees the slot.
        b.release(&schema, &r2).unwrap();
        let r3 = b.try_reserve(&schema, &c, 2, "b", lease, now).unwrap().expect("released slot");

        // Past the lease the abandoned reservation no longer counts.
        let later = now + TimeDelta::seconds(61);
        assert!(a.try_reserve(&schema, &c, 2, "a", lease, now).unwrap().is_none());
        let r4 = a.try_reserve(&schema, &c, 2, "a", lease, later).unwrap().expect("expired lease reclaimed");
        assert_ne!(r3.id, r4.id);
        assert!(a.live_reservations(&schema, later).unwrap().iter().all(|(_, n)| *n == 1));
    }
}

#[test]
fn purge_empties_table() {
    for f in fixtures() {
        let mut store = open(&f);
        let schema = listing_schema(&f.table);
        assert_eq!(store.purge(&schema).unwrap(), None);
        store.init_table(&schema).unwrap();
        for seed in 0..4 {
            store.insert_result(&schema, &record(config("complete", "ols", 100.0), 0.5, seed, "w")).unwrap();
        }
        assert_eq!(store.purge(&schema).unwrap(), Some(4));
        assert!(store.read_results(&schema, None).unwrap().is_empty());
        assert!(store.table_exists(&schema).unwrap());
    }
}

#[test]
fn open_errors() {
    assert!(matches!(StoreHandle::open("", RetryPolicy::default()), Err(StoreError::InvalidDsn(_))));
    assert!(matches!(
        StoreHandle::open("/nonexistent-dir/sub/x.db", RetryPolicy::default()),
        Err(StoreError::Open(_))
    ));
    assert!(matches!(
        StoreHandle::open("host=127.0.0.1 port=1 user=nobody connect_timeout=2", RetryPolicy::default()),
        Err(StoreError::Open(_))
    ));
}

#[test]
fn backends_agree() {
    let Ok(pg) = std::env::var("SIMSTUDY_TEST_PG") else {
        eprintln!("SIMSTUDY_TEST_PG not set; skipping");
        return;
    };
    let dir = TempDir::new().unwrap();
    let lite_dsn = format!("sqlite:{}", dir.path().join("x.db").display());
    let table = format!("eq{}", std::process::id());
    let schema = blob_schema(&table);
    let mut reads = Vec::new();
    for dsn in [lite_dsn.as_str(), pg.as_str()] {
        let mut store = StoreHandle::open(dsn, fast_retry()).unwrap();
        store.init_table(&schema).unwrap();
        for i in 0..20u64 {
            let rec = ResultRecord {
                config: Configuration::new([("method", Value::from(["ols", "lasso"][i as usize % 2])), ("n", Value::from(i as i64 % 3))]),
                outcomes: BTreeMap::from([
                    ("coefs".to_owned(), Value::Blob(Structured::from(vec![i as f64 / 3.0, -0.0, 1e300]))),
                    ("label".to_owned(), Value::from(format!("r{i}"))),
                    ("iterations".to_owned(), Value::from(i as i64 * 1_000_000_007)),
                ]),
                meta: RecordMeta { seed: i.wrapping_mul(0x9e37_79b9_7f4a_7c15), elapsed_time: i as f64 * 0.1, worker_id: "w".into(), created_at: now_micros() },
            };
            store.insert_result(&schema, &rec).unwrap();
        }
        let mut rows = store.read_results(&schema, None).unwrap();
        for r in &mut rows {
            r.meta.created_at = chrono::DateTime::UNIX_EPOCH;
        }
        reads.push(rows);
    }
    assert_eq!(reads[0], reads[1]);
}

fn arb_record() -> impl Strategy<Value = ResultRecord> {
    (
        prop::sample::select(vec!["ols", "lasso"]),
        -5i64..5,
        prop::collection::vec(any::<f64>().prop_filter("finite", |f| f.is_finite()), 0..8),
        ".{0,20}",
        any::<i64>(),
        any::<u64>(),
        0.0f64..100.0,
    )
        .prop_map(|(m, n, coefs, label, it, seed, elapsed)| ResultRecord {
            config: Configuration::new([("method", Value::from(m)), ("n", Value::from(n))]),
            outcomes: BTreeMap::from([
                ("coefs".to_owned(), Value::Blob(Structured::from(coefs))),
                ("label".to_owned(), Value::from(label)),
                ("iterations".to_owned(), Value::from(it)),
            ]),
            meta: RecordMeta { seed, elapsed_time: elapsed, worker_id: "prop".into(), created_at: now_micros() },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_records_round_trip(records in prop::collection::vec(arb_record(), 1..12)) {
        let dir = TempDir::new().unwrap();
        let mut store = StoreHandle::open(&dir.path().join("p.db").display().to_string(), fast_retry()).unwrap();
        let schema = blob_schema("result");
        store.init_table(&schema).unwrap();
        let mut seen = std::collections::HashSet::new();
        let unique: Vec<_> = records.into_iter().filter(|r| seen.insert(r.meta.seed)).collect();
        for r in &unique {
            store.insert_result(&schema, r).unwrap();
        }
        prop_assert_eq!(store.read_results(&schema, None).unwrap(), unique);
    }
}
