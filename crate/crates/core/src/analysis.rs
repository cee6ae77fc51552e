//! Summaries of stored results: grouped means with standard errors,
//! rejection rates, p-value ECDFs, and CSV/JSON export.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde_json::{Map, Number, Value as Json};
use simstudy_stats::{mean, sample_sd};
use thiserror::Error;

use crate::paramspace::Configuration;
use crate::storage::ResultRecord;
use crate::value::Value;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no values to summarize")]
    Empty,
    #[error("record has no config field {0:?}")]
    MissingAxis(String),
    #[error("record has no numeric outcome {0:?}")]
    MissingOutcome(String),
    #[error("p-value {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("significance level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeStat {
    pub mean: f64,
    /// Sample standard deviation (n − 1) over √n; zero for one value.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub group: Configuration,
    pub n: usize,
    pub outcomes: BTreeMap<String, OutcomeStat>,
}

/// Mean and standard error of `xs`.
pub fn mean_se(xs: &[f64]) -> Result<OutcomeStat> {
    if xs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let m = mean(xs);
    let constant = xs.iter().all(|&x| x == xs[0]);
    let std_error = if xs.len() < 2 || constant { 0.0 } else { sample_sd(xs) / (xs.len() as f64).sqrt() };
    Ok(OutcomeStat { mean: if constant { xs[0] } else { m }, std_error })
}

fn group_key(record: &ResultRecord, axes: &[&str]) -> Result<Configuration> {
    record.config.project(axes).ok_or_else(|| {
        let missing = axes.iter().find(|a| record.config.get(a).is_none()).copied().unwrap_or_default();
        AnalysisError::MissingAxis(missing.to_owned())
    })
}

fn cmp_configs(a: &Configuration, b: &Configuration) -> Ordering {
    a.assignments()
        .iter()
        .zip(b.assignments())
        .map(|((_, x), (_, y))| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Partition records by their values on `axes`, sorted by group key.
fn partition<'a>(records: &'a [ResultRecord], axes: &[&str]) -> Result<Vec<(Configuration, Vec<&'a ResultRecord>)>> {
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    let mut groups: Vec<(Configuration, Vec<&ResultRecord>)> = Vec::new();
    for r in records {
        let key = group_key(r, axes)?;
        match index.get(&key) {
            Some(&i) => groups[i].1.push(r),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push((key, vec![r]));
            }
        }
    }
    groups.sort_by(|a, b| cmp_configs(&a.0, &b.0));
    Ok(groups)
}

/// One summary per distinct value of `group_axes`, with mean and standard
/// error of every numeric outcome. Text and blob outcomes are skipped.
pub fn aggregate(records: &[ResultRecord], group_axes: &[&str]) -> Result<Vec<AggregateSummary>> {
    partition(records, group_axes)?
        .into_iter()
        .map(|(group, rows)| {
            let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in &rows {
                for (name, v) in &r.outcomes {
                    if let Some(x) = v.as_f64() {
                        values.entry(name.clone()).or_default().push(x);
                    }
                }
            }
            let outcomes = values
                .into_iter()
                .map(|(k, xs)| Ok((k, mean_se(&xs)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(AggregateSummary { group, n: rows.len(), outcomes })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub rate: f64,
    pub std_error: f64,
}

fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    if pvalues.is_empty() {
        return Err(AnalysisError::Empty);
    }
    match pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&p) => Err(AnalysisError::InvalidProbability(p)),
        None => Ok(()),
    }
}

/// Share of p-values at or below `alpha`, with its binomial standard error.
pub fn rejection_rate(pvalues: &[f64], alpha: f64) -> Result<Rate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::InvalidAlpha(alpha));
    }
    check_pvalues(pvalues)?;
    let n = pvalues.len() as f64;
    let rate = pvalues.iter().filter(|&&p| p <= alpha).count() as f64 / n;
    Ok(Rate { rate, std_error: (rate * (1.0 - rate) / n).sqrt() })
}

/// Right-continuous empirical CDF of a set of p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfCurve {
    sorted: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcdfPoint {
    pub x: f64,
    pub f: f64,
    pub band_lower: f64,
    pub band_upper: f64,
}

pub fn ecdf(pvalues: &[f64]) -> Result<EcdfCurve> {
    check_pvalues(pvalues)?;
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EcdfCurve { sorted })
}

impl EcdfCurve {
    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// Proportion of values ≤ x.
    pub fn value_at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.n() as f64
    }

    /// Two standard errors of F̂(x).
    pub fn band_halfwidth(&self, x: f64) -> f64 {
        let f = self.value_at(x);
        2.0 * (f * (1.0 - f) / self.n() as f64).sqrt()
    }

    fn point(&self, x: f64) -> EcdfPoint {
        let f = self.value_at(x);
        let h = self.band_halfwidth(x);
        EcdfPoint { x, f, band_lower: (f - h).max(0.0), band_upper: (f + h).min(1.0) }
    }

    /// One point per distinct value (the jump locations).
    pub fn points(&self) -> Vec<EcdfPoint> {
        let mut xs = self.sorted.clone();
        xs.dedup();
        xs.into_iter().map(|x| self.point(x)).collect()
    }

    /// Points on an evenly spaced grid over [0, 1].
    pub fn on_grid(&self, steps: usize) -> Vec<EcdfPoint> {
        (0..=steps).map(|i| self.point(i as f64 / steps as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRateRow {
    pub group: Configuration,
    pub n: usize,
    pub avg_p: OutcomeStat,
    pub rate_1pct: Rate,
    pub rate_5pct: Rate,
}

fn outcome_values(rows: &[&ResultRecord], outcome: &str) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| r.outcomes.get(outcome).and_then(Value::as_f64).ok_or_else(|| AnalysisError::MissingOutcome(outcome.into())))
        .collect()
}

/// Mean p-value and rejection rates at 1% and 5% per group.
pub fn rejection_table(records: &[ResultRecord], group_axes: &[&str], outcome: &str) -> Result<Vec<RejectionRateRow>> {
    partition(records, group_axes)?
        .into_iter()
        .map(|(group, rows)| {
            let ps = outcome_values(&rows, outcome)?;
            Ok(RejectionRateRow {
                group,
                n: ps.len(),
                avg_p: mean_se(&ps)?,
                rate_1pct: rejection_rate(&ps, 0.01)?,
                rate_5pct: rejection_rate(&ps, 0.05)?,
            })
        })
        .collect()
}

/// ECDF of `outcome` per group.
pub fn ecdf_by_group(records: &[ResultRecord], group_axes: &[&str], outcome: &str) -> Result<Vec<(Configuration, EcdfCurve)>> {
    partition(records, group_axes)?
        .into_iter()
        .map(|(group, rows)| Ok((group, ecdf(&outcome_values(&rows, outcome)?)?)))
        .collect()
}

/// A table cell. Floats are written in their shortest exact decimal form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Float(f64),
    Integer(i64),
}

impl From<&Value> for Cell {
    fn from(v: &Value) -> Self {
        match v {
            Value::Text(s) => Cell::Text(s.clone()),
            Value::Float(f) => Cell::Float(*f),
            Value::Integer(i) => Cell::Integer(*i),
            Value::Bool(b) => Cell::Integer(i64::from(*b)),
            Value::Blob(_) => Cell::Text("<blob>".into()),
        }
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(f) => f.to_string(),
            Cell::Integer(i) => i.to_string(),
        }
    }

    fn to_json(&self) -> Json {
        match self {
            Cell::Text(s) => Json::String(s.clone()),
            Cell::Float(f) => Number::from_f64(*f).map_or(Json::Null, Json::Number),
            Cell::Integer(i) => Json::Number((*i).into()),
        }
    }
}

/// Column-ordered table ready for export.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// `0.803 (0.035)` style cell.
pub fn mean_se_label(stat: &OutcomeStat) -> String {
    format!("{:.3} ({:.3})", stat.mean, stat.std_error)
}

/// Group columns, `n`, then `<outcome>_mean`, `<outcome>_se` and
/// optionally a formatted `<outcome>` column per outcome. Outcome columns
/// are the union over all summaries; missing values are left empty.
pub fn summaries_table(summaries: &[AggregateSummary], group_axes: &[&str], outcomes: &[&str], with_label: bool) -> Table {
    let mut columns: Vec<String> = group_axes.iter().map(|s| s.to_string()).collect();
    columns.push("n".into());
    for o in outcomes {
        columns.push(format!("{o}_mean"));
        columns.push(format!("{o}_se"));
        if with_label {
            columns.push((*o).to_owned());
        }
    }
    let rows = summaries
        .iter()
        .map(|s| {
            let mut row: Vec<Cell> = s.group.assignments().iter().map(|(_, v)| Cell::from(v)).collect();
            row.push(Cell::Integer(s.n as i64));
            for o in outcomes {
                match s.outcomes.get(*o) {
                    Some(stat) => {
                        row.push(Cell::Float(stat.mean));
                        row.push(Cell::Float(stat.std_error));
                        if with_label {
                            row.push(Cell::Text(mean_se_label(stat)));
                        }
                    }
                    None => row.extend(std::iter::repeat_n(Cell::Text(String::new()), if with_label { 3 } else { 2 })),
                }
            }
            row
        })
        .collect();
    Table { columns, rows }
}

/// Columns `method, n_instances, avg_p, se_p, err_1pct, se_1, err_5pct,
/// se_5` (group columns first, named after the group axes).
pub fn rejection_rows_table(rows: &[RejectionRateRow], group_axes: &[&str]) -> Table {
    let mut columns: Vec<String> = group_axes.iter().map(|s| s.to_string()).collect();
    columns.extend(["avg_p", "se_p", "err_1pct", "se_1", "err_5pct", "se_5"].map(String::from));
    let rows = rows
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = r.group.assignments().iter().map(|(_, v)| Cell::from(v)).collect();
            row.extend([
                Cell::Float(r.avg_p.mean),
                Cell::Float(r.avg_p.std_error),
                Cell::Float(r.rate_1pct.rate),
                Cell::Float(r.rate_1pct.std_error),
                Cell::Float(r.rate_5pct.rate),
                Cell::Float(r.rate_5pct.std_error),
            ]);
            row
        })
        .collect();
    Table { columns, rows }
}

/// Long-format curve data: group columns, then `x, ecdf, band_lower,
/// band_upper`.
pub fn ecdf_table(curves: &[(Configuration, Vec<EcdfPoint>)], group_axes: &[&str]) -> Table {
    let mut columns: Vec<String> = group_axes.iter().map(|s| s.to_string()).collect();
    columns.extend(["x", "ecdf", "band_lower", "band_upper"].map(String::from));
    let mut rows = Vec::new();
    for (group, points) in curves {
        for p in points {
            let mut row: Vec<Cell> = group.assignments().iter().map(|(_, v)| Cell::from(v)).collect();
            row.extend([Cell::Float(p.x), Cell::Float(p.f), Cell::Float(p.band_lower), Cell::Float(p.band_upper)]);
            rows.push(row);
        }
    }
    Table { columns, rows }
}

pub fn write_csv(table: &Table, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON array of objects, keys in column order.
pub fn write_json(table: &Table, mut out: impl Write) -> Result<()> {
    let items: Vec<Json> = table
        .rows
        .iter()
        .map(|row| {
            let obj: Map<String, Json> = table.columns.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
            Json::Object(obj)
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &items)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn export(table: &Table, format: ExportFormat, out: impl Write) -> Result<()> {
    match format {
        ExportFormat::Csv => write_csv(table, out),
        ExportFormat::Json => write_json(table, out),
    }
}
