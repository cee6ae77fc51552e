//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a replication failed, 2 configuration or dsn
//! error, 3 storage failure, 4 destructive operation refused.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    aggregate, ecdf_by_group, ecdf_table, export, rejection_rows_table, rejection_table, summaries_table, ExportFormat,
    Table,
};
use crate::paramspace::{apply_filter, cartesian_product, Configuration, ParamSpace};
use crate::runner::{run_study, ClaimMode, RunError, RunOptions, RunReport};
use crate::storage::{ResultRecord, RetryPolicy, StoreError, StoreHandle};
use crate::studies::{study_by_name, StudyDefinition, STUDY_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REPLICATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STORAGE: i32 = 3;
pub const EXIT_REFUSED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "simstudy", version, about = "Run Monte Carlo simulation studies against a shared SQL store")]
pub struct Cli {
    /// Store: a SQLite file path (optionally `sqlite:` prefixed) or a
    /// PostgreSQL connection string.
    #[arg(long, env = "SSTUDY_DB", global = true, hide_env_values = true)]
    pub db: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the study's tables (no-op if they already exist).
    Init(StudyArgs),
    /// Run replications until every configuration reaches --max-count.
    Run(RunArgs),
    /// Show stored counts per configuration.
    Status(StatusArgs),
    /// Write summary tables.
    Export(ExportArgs),
    /// Delete every stored row of the study.
    Purge(PurgeArgs),
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// regression, hypothesis or density.
    #[arg(long)]
    pub study: String,
    /// Include the 10000-row level of the regression study.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Check,
    Reserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Replications per configuration (default: the study's own).
    #[arg(long)]
    pub max_count: Option<u64>,
    /// Worker threads in this process.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Check)]
    pub mode: ModeArg,
    /// Worker ids are `<prefix><index>`. Give each process sharing a store
    /// its own prefix.
    #[arg(long, default_value = "w")]
    pub worker_prefix: String,
    /// Reservation lease in seconds (reserve mode).
    #[arg(long, default_value_t = 3600)]
    pub lease_secs: u64,
    /// Give up on an unreachable store after this many seconds.
    #[arg(long, default_value_t = 3600)]
    pub max_wait_secs: u64,
    /// Parameter space JSON overriding the study's own.
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    #[arg(long)]
    pub max_count: Option<u64>,
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Output file. Extra tables go next to it with `_type1`, `_power` and
    /// `_ecdf` suffixes. Without it the main table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct PurgeArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Required: confirm deletion.
    #[arg(long)]
    pub yes: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::InvalidDsn(_) | StoreError::Open(_) | StoreError::SchemaMismatch { .. } | StoreError::Schema(_) => {
                EXIT_CONFIG
            }
            _ => EXIT_STORAGE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Schema(s) => Failure::config(s.to_string()),
            RunError::Replication { .. } => Failure { code: EXIT_REPLICATION, message: e.to_string() },
            RunError::Storage { source, pending } => {
                let mut message = format!("storage failure: {source}");
                if let Some(p) = pending {
                    message.push_str(&format!(
                        "\nunstored replication: {} seed {} (worker {}); re-running recomputes it from the same seed",
                        p.config, p.meta.seed, p.meta.worker_id
                    ));
                }
                Failure { code: EXIT_STORAGE, message }
            }
        }
    }
}

impl From<crate::analysis::AnalysisError> for Failure {
    fn from(e: crate::analysis::AnalysisError) -> Self {
        Self { code: EXIT_STORAGE, message: e.to_string() }
    }
}

/// Parse `args`, run the command, and return the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let dsn = cli.db.ok_or_else(|| Failure::config("no store given: pass --db or set SSTUDY_DB"))?;
    match cli.command {
        Command::Init(a) => cmd_init(&dsn, &a, out),
        Command::Run(a) => cmd_run(&dsn, &a, out),
        Command::Status(a) => cmd_status(&dsn, &a, out),
        Command::Export(a) => cmd_export(&dsn, &a, out),
        Command::Purge(a) => cmd_purge(&dsn, &a, out),
    }
}

fn load_study(args: &StudyArgs, space: Option<&Path>) -> Result<StudyDefinition, Failure> {
    let mut study = study_by_name(&args.study, args.full).ok_or_else(|| {
        Failure::config(format!("unknown study {:?}; expected one of {}", args.study, STUDY_NAMES.join(", ")))
    })?;
    if let Some(path) = space {
        let doc = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let space = ParamSpace::from_json(&doc).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        study.schema.validate_against(&space).map_err(|e| Failure::config(e.to_string()))?;
        study.space = space;
    }
    Ok(study)
}

fn open(dsn: &str, policy: RetryPolicy) -> Result<StoreHandle, Failure> {
    Ok(StoreHandle::open(dsn, policy)?)
}

fn write_io(r: io::Result<()>) -> Result<(), Failure> {
    r.map_err(|e| Failure { code: EXIT_STORAGE, message: e.to_string() })
}

fn cmd_init(dsn: &str, args: &StudyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study = load_study(args, None)?;
    let mut store = open(dsn, RetryPolicy::default())?;
    store.init_table(&study.schema)?;
    write_io(writeln!(out, "table {:?} ready", study.schema.table()))
}

fn study_configs(study: &StudyDefinition) -> Vec<Configuration> {
    match &study.filter {
        Some(keep) => apply_filter(cartesian_product(&study.space), keep.as_ref()),
        None => cartesian_product(&study.space),
    }
}

fn cmd_run(dsn: &str, args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study = load_study(&args.study, args.space.as_deref())?;
    let policy = RetryPolicy { max_wait: Duration::from_secs(args.max_wait_secs), ..RetryPolicy::default() };
    let mut store = open(dsn, policy)?;
    store.init_table(&study.schema)?;
    let max_count = args.max_count.unwrap_or(study.default_max_count);

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("stopping after in-flight replications (interrupt again to abort)");
    }) {
        log::debug!("no interrupt handler: {e}");
    }

    let base = RunOptions {
        mode: match args.mode {
            ModeArg::Check => ClaimMode::CheckThenRun,
            ModeArg::Reserve => ClaimMode::Reserve,
        },
        master_seed: args.seed,
        lease: Duration::from_secs(args.lease_secs),
        stop: Some(stop),
        ..RunOptions::new(max_count, "")
    };

    let first = {
        let opts = RunOptions { worker_id: format!("{}0", args.worker_prefix), ..base.clone() };
        if args.workers == 1 {
            Some(run_study(&study.space, study.filter.as_ref(), &study.schema, &study.simulate, &mut store, &opts))
        } else {
            None
        }
    };
    let results: Vec<Result<RunReport, RunError>> = match first {
        Some(r) => vec![r],
        None => {
            drop(store);
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..args.workers)
                    .map(|i| {
                        let opts = RunOptions { worker_id: format!("{}{i}", args.worker_prefix), ..base.clone() };
                        let study = &study;
                        s.spawn(move || -> Result<RunReport, RunError> {
                            let mut store = StoreHandle::open(dsn, policy).map_err(RunError::from)?;
                            run_study(&study.space, study.filter.as_ref(), &study.schema, &study.simulate, &mut store, &opts)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
            })
        }
    };

    let mut total = 0;
    let mut first_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(report) => total += report.replications_done,
            Err(e) => {
                eprintln!("worker {}{i}: {e}", args.worker_prefix);
                first_error.get_or_insert(e);
            }
        }
    }
    write_io(writeln!(out, "{total} replications stored"))?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_status(dsn: &str, args: &StatusArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study = load_study(&args.study, args.space.as_deref())?;
    let max_count = args.max_count.unwrap_or(study.default_max_count);
    let mut store = open(dsn, RetryPolicy::default())?;
    let counts: HashMap<Configuration, u64> =
        if store.table_exists(&study.schema)? { store.config_counts(&study.schema)?.into_iter().collect() } else { HashMap::new() };
    let configs = study_configs(&study);
    let mut known = 0;
    let mut done = 0;
    for c in &configs {
        let key = study.schema.normalize_config(c).map_err(|e| Failure::config(e.to_string()))?;
        let n = counts.get(&key).copied().unwrap_or(0);
        known += n;
        let flag = if n >= max_count {
            done += 1;
            "done"
        } else {
            ""
        };
        write_io(writeln!(out, "{c}\t{n}/{max_count}\t{flag}"))?;
    }
    let foreign: u64 = counts.values().sum::<u64>() - known;
    if foreign > 0 {
        write_io(writeln!(out, "{foreign} stored rows belong to configurations outside this space"))?;
    }
    write_io(writeln!(out, "{done}/{} configurations done", configs.len()))
}

fn ext(format: FormatArg) -> &'static str {
    match format {
        FormatArg::Csv => "csv",
        FormatArg::Json => "json",
    }
}

fn sibling(path: &Path, suffix: &str, format: FormatArg) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("export");
    path.with_file_name(format!("{stem}_{suffix}.{}", ext(format)))
}

fn write_table(table: &Table, format: FormatArg, path: &Path) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure { code: EXIT_STORAGE, message: format!("{}: {e}", path.display()) })?;
    let fmt = match format {
        FormatArg::Csv => ExportFormat::Csv,
        FormatArg::Json => ExportFormat::Json,
    };
    export(table, fmt, BufWriter::new(file))?;
    Ok(())
}

/// Study-specific tables keyed by file suffix.
pub type ExtraTables = Vec<(&'static str, Table)>;

/// The tables `export` produces for `records`: the main summary plus any
/// study-specific extras.
pub fn export_tables(study: &StudyDefinition, records: &[ResultRecord]) -> Result<(Table, ExtraTables), Failure> {
    let summaries = aggregate(records, &study.group_axes)?;
    let main = summaries_table(&summaries, &study.group_axes, &study.report_outcomes, true);
    let mut extra = Vec::new();
    if study.name == "hypothesis" {
        let axes = ["method", "n_instances"];
        for (hypothesis, suffix) in [("null", "type1"), ("alternative", "power")] {
            let subset: Vec<ResultRecord> =
                records.iter().filter(|r| r.config.get("hypothesis").and_then(|v| v.as_str()) == Some(hypothesis)).cloned().collect();
            let rows = rejection_table(&subset, &axes, "p_value")?;
            extra.push((suffix, rejection_rows_table(&rows, &axes)));
        }
        let curves: Vec<_> = ecdf_by_group(records, &["hypothesis", "method", "n_instances"], "p_value")?
            .into_iter()
            .map(|(g, e)| (g, e.on_grid(100)))
            .collect();
        extra.push(("ecdf", ecdf_table(&curves, &["hypothesis", "method", "n_instances"])));
    }
    Ok((main, extra))
}

fn cmd_export(dsn: &str, args: &ExportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study = load_study(&args.study, None)?;
    let mut store = open(dsn, RetryPolicy::default())?;
    let records =
        if store.table_exists(&study.schema)? { store.read_results(&study.schema, None)? } else { Vec::new() };
    let (main, extra) = export_tables(&study, &records)?;
    match &args.out {
        Some(path) => {
            write_table(&main, args.format, path)?;
            for (suffix, table) in &extra {
                write_table(table, args.format, &sibling(path, suffix, args.format))?;
            }
            write_io(writeln!(out, "exported {} rows from {} records", main.rows.len(), records.len()))
        }
        None => {
            let fmt = match args.format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            };
            export(&main, fmt, &mut *out)?;
            if !extra.is_empty() {
                eprintln!("note: pass --out to also write the {} tables", extra.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(", "));
            }
            Ok(())
        }
    }
}

fn cmd_purge(dsn: &str, args: &PurgeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let study = load_study(&args.study, None)?;
    if !args.yes {
        return Err(Failure {
            code: EXIT_REFUSED,
            message: format!("refusing to delete the rows of {:?} without --yes", study.schema.table()),
        });
    }
    let mut store = open(dsn, RetryPolicy::default())?;
    match store.purge(&study.schema)? {
        Some(n) => write_io(writeln!(out, "deleted {n} rows from {:?}", study.schema.table())),
        None => write_io(writeln!(out, "table {:?} does not exist; nothing to do", study.schema.table())),
    }
}
