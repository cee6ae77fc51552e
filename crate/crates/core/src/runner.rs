//! The worker loop: pick an unsaturated configuration at random, run the
//! simulation with a fresh seed, store the outcome, repeat.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use log::{debug, warn};
use sha2::{Digest, Sha256};
use simstudy_stats::SimRng;
use thiserror::Error;

use crate::paramspace::{apply_filter, cartesian_product, Configuration, FilterPredicate, ParamSpace};
use crate::storage::{now_micros, RecordMeta, ResultRecord, ResultSchema, SchemaError, StoreError, StoreHandle};
use crate::value::Value;

pub type Outcomes = BTreeMap<String, Value>;
pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// User simulation body. Must be deterministic in `(configuration, seed)`.
/// May report its own `elapsed_time` (float seconds) among the outcomes;
/// otherwise the whole call is timed.
pub type SimulationFn = Arc<dyn Fn(&Configuration, u64) -> Result<Outcomes, BoxError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClaimMode {
    /// Count, then run. Concurrent workers may overshoot by up to W−1.
    #[default]
    CheckThenRun,
    /// Take a lease on a slot before running; final counts are exact.
    Reserve,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_count: u64,
    pub mode: ClaimMode,
    pub worker_id: String,
    pub master_seed: u64,
    pub max_passes: Option<u64>,
    /// Reservation lifetime in reserve mode.
    pub lease: Duration,
    /// Checked between replications; set it to stop after the in-flight one.
    pub stop: Option<Arc<AtomicBool>>,
}

impl RunOptions {
    pub fn new(max_count: u64, worker_id: impl Into<String>) -> Self {
        Self {
            max_count,
            mode: ClaimMode::CheckThenRun,
            worker_id: worker_id.into(),
            master_seed: 0,
            max_passes: None,
            lease: Duration::from_secs(3600),
            stop: None,
        }
    }

    fn stopped(&self) -> bool {
        self.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("replication failed for {config} with seed {seed}: {message}")]
    Replication { config: Configuration, seed: u64, message: String },
    /// `pending` holds a computed record that could not be stored; it can be
    /// re-submitted with [`StoreHandle::insert_result`] later.
    #[error("storage failure: {source}")]
    Storage {
        #[source]
        source: StoreError,
        pending: Option<Box<ResultRecord>>,
    },
}

impl From<StoreError> for RunError {
    fn from(source: StoreError) -> Self {
        RunError::Storage { source, pending: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub replications_done: u64,
    /// Stored rows per configuration, in configuration-list order.
    pub per_config_counts: Vec<(Configuration, u64)>,
    pub stopped_early: bool,
}

/// Seed for replication `counter` of `worker_id`: the first eight bytes
/// (little-endian) of SHA-256 over a domain tag, the master seed, the
/// length-prefixed worker id and the counter.
pub fn derive_seed(master_seed: u64, worker_id: &str, counter: u64) -> u64 {
    keyed_u64(b"simstudy/replication", master_seed, worker_id, counter)
}

fn keyed_u64(tag: &[u8], master_seed: u64, worker_id: &str, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(master_seed.to_le_bytes());
    h.update((worker_id.len() as u64).to_le_bytes());
    h.update(worker_id.as_bytes());
    h.update(counter.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Scheduling RNG for one worker, independent of replication seeds.
pub fn schedule_rng(opts: &RunOptions) -> SimRng {
    SimRng::new(keyed_u64(b"simstudy/schedule", opts.master_seed, &opts.worker_id, 0))
}

/// Configurations whose stored count (plus live leases in reserve mode) is
/// still below `max_count`, in list order.
pub fn unsaturated(
    store: &mut StoreHandle,
    schema: &ResultSchema,
    configs: &[Configuration],
    opts: &RunOptions,
) -> Result<Vec<Configuration>, RunError> {
    let mut counts: HashMap<Configuration, u64> = store.config_counts(schema)?.into_iter().collect();
    if opts.mode == ClaimMode::Reserve {
        for (c, n) in store.live_reservations(schema, Utc::now())? {
            *counts.entry(c).or_default() += n;
        }
    }
    let mut out = Vec::new();
    for c in configs {
        let key = schema.normalize_config(c)?;
        if counts.get(&key).copied().unwrap_or(0) < opts.max_count {
            out.push(c.clone());
        }
    }
    Ok(out)
}

/// A uniformly chosen unsaturated configuration, or `None` when all are done.
pub fn next_config(
    store: &mut StoreHandle,
    schema: &ResultSchema,
    configs: &[Configuration],
    opts: &RunOptions,
    rng: &mut SimRng,
) -> Result<Option<Configuration>, RunError> {
    let mut open = unsaturated(store, schema, configs, opts)?;
    if open.is_empty() {
        return Ok(None);
    }
    let i = rng.below(open.len());
    Ok(Some(open.swap_remove(i)))
}

/// Call the simulation once and wrap the outcome as a record. Panics inside
/// the simulation are reported as failures.
pub fn run_replication(
    f: &SimulationFn,
    config: &Configuration,
    seed: u64,
    worker_id: &str,
) -> Result<ResultRecord, RunError> {
    let fail = |message: String| RunError::Replication { config: config.clone(), seed, message };
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| f(config, seed)));
    let whole_call = start.elapsed().as_secs_f64();
    let mut outcomes = match result {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => return Err(fail(e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            return Err(fail(format!("panicked: {msg}")));
        }
    };
    let elapsed_time = match outcomes.remove("elapsed_time") {
        None => whole_call,
        Some(v) => match v.as_f64() {
            Some(t) if t.is_finite() && t >= 0.0 => t,
            _ => return Err(fail(format!("reported elapsed_time {v} is not a non-negative number"))),
        },
    };
    Ok(ResultRecord {
        config: config.clone(),
        outcomes,
        meta: RecordMeta { seed, elapsed_time, worker_id: worker_id.to_owned(), created_at: now_micros() },
    })
}

/// Run replications until every configuration that survives `filter` has
/// `max_count` stored rows, `max_passes` is spent, or the stop flag is set.
/// The table must already exist.
pub fn run_study(
    space: &ParamSpace,
    filter: Option<&FilterPredicate>,
    schema: &ResultSchema,
    f: &SimulationFn,
    store: &mut StoreHandle,
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    schema.validate_against(space)?;
    let configs = match filter {
        Some(keep) => apply_filter(cartesian_product(space), keep.as_ref()),
        None => cartesian_product(space),
    };
    let mut rng = schedule_rng(opts);
    let mut counter = store.count_for_worker(schema, &opts.worker_id)?;
    let mut done = 0u64;
    let mut passes = 0u64;
    let mut stopped_early = false;

    loop {
        if opts.stopped() || opts.max_passes.is_some_and(|m| passes >= m) {
            stopped_early = true;
            break;
        }
        passes += 1;
        let progressed = match opts.mode {
            ClaimMode::CheckThenRun => {
                let Some(config) = next_config(store, schema, &configs, opts, &mut rng)? else { break };
                check_then_run(store, schema, f, opts, &config, &mut counter)?
            }
            ClaimMode::Reserve => {
                let mut open = unsaturated(store, schema, &configs, opts)?;
                if open.is_empty() {
                    break;
                }
                rng.shuffle(&mut open);
                reserve_and_run(store, schema, f, opts, &open, &mut counter)?
            }
        };
        if progressed {
            done += 1;
        }
    }

    let counts: HashMap<Configuration, u64> = store.config_counts(schema)?.into_iter().collect();
    let per_config_counts = configs
        .iter()
        .map(|c| Ok((c.clone(), counts.get(&schema.normalize_config(c)?).copied().unwrap_or(0))))
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(RunReport { replications_done: done, per_config_counts, stopped_early })
}

fn check_then_run(
    store: &mut StoreHandle,
    schema: &ResultSchema,
    f: &SimulationFn,
    opts: &RunOptions,
    config: &Configuration,
    counter: &mut u64,
) -> Result<bool, RunError> {
    loop {
        let seed = derive_seed(opts.master_seed, &opts.worker_id, *counter);
        let record = run_replication(f, config, seed, &opts.worker_id)?;
        match store.insert_result(schema, &record) {
            Ok(_) => {
                *counter += 1;
                debug!("{}: stored {} (seed {seed})", opts.worker_id, config);
                return Ok(true);
            }
            Err(StoreError::DuplicateSeed { .. }) => resync(store, schema, opts, counter)?,
            Err(source) => return Err(RunError::Storage { source, pending: Some(Box::new(record)) }),
        }
    }
}

fn reserve_and_run(
    store: &mut StoreHandle,
    schema: &ResultSchema,
    f: &SimulationFn,
    opts: &RunOptions,
    candidates: &[Configuration],
    counter: &mut u64,
) -> Result<bool, RunError> {
    for config in candidates {
        let Some(reservation) =
            store.try_reserve(schema, config, opts.max_count, &opts.worker_id, opts.lease, Utc::now())?
        else {
            continue;
        };
        loop {
            let seed = derive_seed(opts.master_seed, &opts.worker_id, *counter);
            let record = match run_replication(f, config, seed, &opts.worker_id) {
                Ok(r) => r,
                Err(e) => {
                    if let Err(release_err) = store.release(schema, &reservation) {
                        warn!("could not release reservation {}: {release_err}", reservation.id);
                    }
                    return Err(e);
                }
            };
            match store.complete_reservation(schema, &reservation, &record) {
                Ok(_) => {
                    *counter += 1;
                    return Ok(true);
                }
                Err(StoreError::DuplicateSeed { .. }) => resync(store, schema, opts, counter)?,
                Err(source) => return Err(RunError::Storage { source, pending: Some(Box::new(record)) }),
            }
        }
    }
    // Every candidate was claimed by someone else in the meantime.
    Ok(false)
}

/// Another process is writing under the same worker id; skip past its seeds.
fn resync(store: &mut StoreHandle, schema: &ResultSchema, opts: &RunOptions, counter: &mut u64) -> Result<(), RunError> {
    let stored = store.count_for_worker(schema, &opts.worker_id)?;
    warn!("worker id {:?} is shared with another process; advancing seed counter", opts.worker_id);
    *counter = (*counter + 1).max(stored);
    Ok(())
}
