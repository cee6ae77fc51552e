use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use simstudy::paramspace::{cartesian_product, Axis, FilterPredicate};
use simstudy::runner::{
    derive_seed, next_config, run_replication, run_study, schedule_rng, ClaimMode, Outcomes, RunError, RunOptions,
    SimulationFn,
};
use simstudy::storage::{FieldKind, InsertOutcome, RetryPolicy, StoreHandle};
use simstudy::{Configuration, ParamSpace, ResultSchema, Value};
use simstudy_stats::SimRng;
use tempfile::TempDir;

static TABLES: AtomicUsize = AtomicUsize::new(0);

fn stores() -> Vec<(String, String, Option<TempDir>)> {
    let dir = TempDir::new().unwrap();
    let mut out = vec![(format!("sqlite:{}", dir.path().join("r.db").display()), "result".to_owned(), Some(dir))];
    if let Ok(pg) = std::env::var("SIMSTUDY_TEST_PG") {
        let n = TABLES.fetch_add(1, Ordering::SeqCst);
        out.push((pg, format!("run{}_{n}", std::process::id()), None));
    }
    out
}

fn space(n_methods: usize, n_sizes: usize) -> ParamSpace {
    let methods: Vec<String> = (0..n_methods).map(|i| format!("m{i}")).collect();
    let sizes: Vec<i64> = (1..=n_sizes as i64).map(|i| i * 100).collect();
    ParamSpace::new(vec![Axis::new("method", methods), Axis::new("n", sizes)]).unwrap()
}

fn schema(table: &str) -> ResultSchema {
    ResultSchema::builder(table)
        .config("method", FieldKind::Text)
        .config("n", FieldKind::Integer)
        .outcome("score", FieldKind::Float)
        .build()
        .unwrap()
}

/// Deterministic in (config, seed); sleeps so concurrent workers overlap.
fn uniform_fn(pause: Duration) -> SimulationFn {
    Arc::new(move |c: &Configuration, seed| {
        std::thread::sleep(pause);
        let n = c.get("n").and_then(Value::as_f64).unwrap();
        let mut rng = SimRng::new(seed);
        Ok(Outcomes::from([("score".into(), Value::Float(rng.uniform() * n))]))
    })
}

fn open(dsn: &str) -> StoreHandle {
    StoreHandle::open(dsn, RetryPolicy::default()).unwrap()
}

fn counts(store: &mut StoreHandle, schema: &ResultSchema) -> Vec<u64> {
    let mut v: Vec<u64> = store.config_counts(schema).unwrap().into_iter().map(|(_, n)| n).collect();
    v.sort();
    v
}

#[test]
fn zero_max_count_runs_nothing() {
    for (dsn, table, _dir) in stores() {
        let mut store = open(&dsn);
        let schema = schema(&table);
        store.init_table(&schema).unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let f: SimulationFn = Arc::new(move |_, _| {
            seen.fetch_add(1, Ordering::SeqCst);
            Ok(Outcomes::from([("score".into(), Value::Float(0.0))]))
        });
        let report = run_study(&space(2, 2), None, &schema, &f, &mut store, &RunOptions::new(0, "w")).unwrap();
        assert_eq!(report.replications_done, 0);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert!(store.read_results(&schema, None).unwrap().is_empty());
    }
}

#[test]
fn single_config_reaches_exact_count() {
    for (dsn, table, _dir) in stores() {
        let mut store = open(&dsn);
        let schema = schema(&table);
        store.init_table(&schema).unwrap();
        let report =
            run_study(&space(1, 1), None, &schema, &uniform_fn(Duration::ZERO), &mut store, &RunOptions::new(3, "w")).unwrap();
        assert_eq!(report.replications_done, 3);
        assert_eq!(report.per_config_counts.len(), 1);
        assert_eq!(report.per_config_counts[0].1, 3);
        let c = &cartesian_product(&space(1, 1))[0];
        assert_eq!(store.count_results(&schema, c).unwrap(), 3);

        // Seeds follow the worker's counter stream.
        let seeds: Vec<u64> = store.read_results(&schema, None).unwrap().iter().map(|r| r.meta.seed).collect();
        assert_eq!(seeds, (0..3).map(|i| derive_seed(0, "w", i)).collect::<Vec<_>>());

        // A second run adds nothing.
        let again =
            run_study(&space(1, 1), None, &schema, &uniform_fn(Duration::ZERO), &mut store, &RunOptions::new(3, "w")).unwrap();
        assert_eq!(again.replications_done, 0);
    }
}

#[test]
fn next_config_finds_the_only_open_slot() {
    let dir = TempDir::new().unwrap();
    let mut store = open(&dir.path().join("n.db").display().to_string());
    let schema = schema("result");
    store.init_table(&schema).unwrap();
    let configs = cartesian_product(&space(4, 2));
    assert_eq!(configs.len(), 8);
    let f = uniform_fn(Duration::ZERO);
    let mut seed = 0;
    for (i, c) in configs.iter().enumerate() {
        let target = if i == 5 { 1 } else { 2 };
        for _ in 0..target {
            let rec = run_replication(&f, c, seed, "setup").unwrap();
            assert_eq!(store.insert_result(&schema, &rec).unwrap(), InsertOutcome::Inserted);
            seed += 1;
        }
    }
    for s in 0..100 {
        let opts = RunOptions { master_seed: s, ..RunOptions::new(2, "w") };
        let mut rng = schedule_rng(&opts);
        let picked = next_config(&mut store, &schema, &configs, &opts, &mut rng).unwrap();
        assert_eq!(picked.as_ref(), Some(&configs[5]), "seed {s}");
    }
    let rec = run_replication(&f, &configs[5], seed, "setup").unwrap();
    store.insert_result(&schema, &rec).unwrap();
    let opts = RunOptions::new(2, "w");
    assert_eq!(next_config(&mut store, &schema, &configs, &opts, &mut schedule_rng(&opts)).unwrap(), None);
}

#[test]
fn replications_are_deterministic() {
    let f = uniform_fn(Duration::ZERO);
    let c = Configuration::new([("method", Value::from("m0")), ("n", Value::from(100))]);
    let a = run_replication(&f, &c, 99, "w").unwrap();
    let b = run_replication(&f, &c, 99, "w").unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert!(a.meta.elapsed_time >= 0.0);
}

#[test]
fn failing_simulation_stores_nothing() {
    let dir = TempDir::new().unwrap();
    let mut store = open(&dir.path().join("f.db").display().to_string());
    let schema = schema("result");
    store.init_table(&schema).unwrap();
    let f: SimulationFn = Arc::new(|c, seed| {
        if c.get("method") == Some(&Value::from("m1")) {
            Err(format!("diverged at seed {seed}").into())
        } else {
            Ok(Outcomes::from([("score".into(), Value::Float(1.0))]))
        }
    });
    let err = run_study(&space(2, 1), None, &schema, &f, &mut store, &RunOptions::new(50, "w")).unwrap_err();
    let RunError::Replication { config, seed, .. } = err else { panic!("{err}") };
    assert_eq!(config.get("method"), Some(&Value::from("m1")));
    let stored = store.read_results(&schema, None).unwrap();
    assert!(stored.iter().all(|r| r.config.get("method") == Some(&Value::from("m0"))));
    assert!(!stored.iter().any(|r| r.meta.seed == seed));
}

#[test]
fn filter_excludes_configs() {
    let dir = TempDir::new().unwrap();
    let mut store = open(&dir.path().join("x.db").display().to_string());
    let schema = schema("result");
    store.init_table(&schema).unwrap();
    let keep: FilterPredicate = Arc::new(|c: &Configuration| c.get("n") != Some(&Value::from(200)));
    let report =
        run_study(&space(2, 2), Some(&keep), &schema, &uniform_fn(Duration::ZERO), &mut store, &RunOptions::new(2, "w"))
            .unwrap();
    assert_eq!(report.per_config_counts.len(), 2);
    assert_eq!(report.replications_done, 4);
    assert!(store.read_results(&schema, None).unwrap().iter().all(|r| r.config.get("n") == Some(&Value::from(100))));
}

#[test]
fn stop_flag_and_max_passes_end_early() {
    let dir = TempDir::new().unwrap();
    let mut store = open(&dir.path().join("s.db").display().to_string());
    let schema = schema("result");
    store.init_table(&schema).unwrap();
    let opts = RunOptions { max_passes: Some(3), ..RunOptions::new(10, "w") };
    let report = run_study(&space(2, 2), None, &schema, &uniform_fn(Duration::ZERO), &mut store, &opts).unwrap();
    assert_eq!(report.replications_done, 3);
    assert!(report.stopped_early);

    let stop = Arc::new(AtomicBool::new(true));
    let opts = RunOptions { stop: Some(stop), ..RunOptions::new(10, "w") };
    let report = run_study(&space(2, 2), None, &schema, &uniform_fn(Duration::ZERO), &mut store, &opts).unwrap();
    assert_eq!(report.replications_done, 0);

    // Resuming continues the seed stream instead of repeating it.
    let report = run_study(&space(2, 2), None, &schema, &uniform_fn(Duration::ZERO), &mut store, &RunOptions::new(2, "w"))
        .unwrap();
    assert_eq!(report.replications_done, 5);
    let seeds: Vec<u64> = store.read_results(&schema, None).unwrap().iter().map(|r| r.meta.seed).collect();
    assert_eq!(seeds, (0..8).map(|i| derive_seed(0, "w", i)).collect::<Vec<_>>());
}

#[test]
fn storage_failure_surfaces_pending_record() {
    let dir = TempDir::new().unwrap();
    let policy = RetryPolicy {
        base_backoff: Duration::from_millis(2),
        max_backoff: Duration::from_millis(10),
        max_wait: Duration::from_millis(50),
    };
    let dsn = dir.path().join("p.db").display().to_string();
    let mut store = StoreHandle::open(&dsn, policy).unwrap();
    let schema = schema("result");
    store.init_table(&schema).unwrap();
    // Let the counting queries through, fail every insert.
    let phase = Arc::new(AtomicBool::new(false));
    let fail_now = phase.clone();
    store.set_fault_injector(Some(Box::new(move |_| fail_now.load(Ordering::SeqCst))));
    let f = uniform_fn(Duration::ZERO);
    let arm = phase.clone();
    let armed: SimulationFn = Arc::new(move |c, s| {
        arm.store(true, Ordering::SeqCst);
        f(c, s)
    });
    let err = run_study(&space(1, 1), None, &schema, &armed, &mut store, &RunOptions::new(1, "w")).unwrap_err();
    let RunError::Storage { pending: Some(record), .. } = err else { panic!("{err}") };
    phase.store(false, Ordering::SeqCst);
    assert!(store.read_results(&schema, None).unwrap().is_empty());
    assert_eq!(store.insert_result(&schema, &record).unwrap(), InsertOutcome::Inserted);
    assert_eq!(store.insert_result(&schema, &record).unwrap(), InsertOutcome::AlreadyPresent);
    assert_eq!(store.read_results(&schema, None).unwrap(), vec![*record]);
}

fn concurrent(dsn: &str, table: &str, mode: ClaimMode, workers: usize, max_count: u64, sp: &ParamSpace) -> Vec<u64> {
    let schema = schema(table);
    open(dsn).init_table(&schema).unwrap();
    let f = uniform_fn(Duration::from_millis(3));
    std::thread::scope(|s| {
        for w in 0..workers {
            let (schema, f) = (&schema, &f);
            s.spawn(move || {
                let mut store = open(dsn);
                let opts = RunOptions { mode, master_seed: 5, ..RunOptions::new(max_count, format!("w{w}")) };
                run_study(sp, None, schema, f, &mut store, &opts).unwrap();
            });
        }
    });
    let mut store = open(dsn);
    let rows = store.read_results(&schema, None).unwrap();
    let mut per_worker = BTreeMap::<String, HashSet<u64>>::new();
    for r in &rows {
        assert!(per_worker.entry(r.meta.worker_id.clone()).or_default().insert(r.meta.seed), "repeated seed");
    }
    counts(&mut store, &schema)
}

#[test]
fn concurrent_check_then_run_stays_within_overshoot_bound() {
    for (dsn, table, _dir) in stores() {
        let counts = concurrent(&dsn, &table, ClaimMode::CheckThenRun, 4, 5, &space(2, 1));
        assert_eq!(counts.len(), 2);
        assert!(counts.iter().all(|&n| (5..=8).contains(&n)), "{counts:?}");
    }
}

#[test]
fn concurrent_reserve_mode_is_exact() {
    for (dsn, table, _dir) in stores() {
        let counts = concurrent(&dsn, &format!("{table}_r"), ClaimMode::Reserve, 4, 5, &space(2, 1));
        assert_eq!(counts, vec![5, 5]);
    }
}

#[test]
fn shared_worker_id_does_not_abort() {
    let dir = TempDir::new().unwrap();
    let dsn = dir.path().join("shared.db").display().to_string();
    let schema = schema("result");
    open(&dsn).init_table(&schema).unwrap();
    let f = uniform_fn(Duration::from_millis(2));
    std::thread::scope(|s| {
        for _ in 0..3 {
            let (dsn, schema, f) = (&dsn, &schema, &f);
            s.spawn(move || {
                let mut store = open(dsn);
                run_study(&space(2, 2), None, schema, f, &mut store, &RunOptions::new(6, "same")).unwrap();
            });
        }
    });
    let mut store = open(&dsn);
    let c = counts(&mut store, &schema);
    assert!(c.iter().all(|&n| (6..=8).contains(&n)), "{c:?}");
}
