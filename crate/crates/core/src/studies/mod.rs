//! The three example studies: regression (OLS vs lasso), two-sample tests,
//! and kernel density estimation.

mod density;
mod hypothesis;
mod regression;

use std::sync::Arc;

use crate::paramspace::{FilterPredicate, ParamSpace};
use crate::runner::{BoxError, SimulationFn};
use crate::storage::ResultSchema;

pub use density::density_study;
pub use hypothesis::hypothesis_study;
pub use regression::regression_study;

pub const STUDY_NAMES: [&str; 3] = ["regression", "hypothesis", "density"];

/// Everything needed to run and report one study.
#[derive(Clone)]
pub struct StudyDefinition {
    pub name: &'static str,
    pub space: ParamSpace,
    pub schema: ResultSchema,
    pub filter: Option<FilterPredicate>,
    pub simulate: SimulationFn,
    pub default_max_count: u64,
    /// Grouping used in reports, in display order.
    pub group_axes: Vec<&'static str>,
    /// Outcomes summarized in reports.
    pub report_outcomes: Vec<&'static str>,
}

impl std::fmt::Debug for StudyDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyDefinition")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("schema", &self.schema)
            .field("default_max_count", &self.default_max_count)
            .finish_non_exhaustive()
    }
}

/// Look a study up by name. `full` adds the expensive regression level
/// (10000 training rows).
pub fn study_by_name(name: &str, full: bool) -> Option<StudyDefinition> {
    match name {
        "regression" => Some(regression_study(full)),
        "hypothesis" => Some(hypothesis_study()),
        "density" => Some(density_study()),
        _ => None,
    }
}

fn simulation<F>(f: F) -> SimulationFn
where
    F: Fn(&crate::Configuration, u64) -> Result<crate::runner::Outcomes, BoxError> + Send + Sync + 'static,
{
    Arc::new(f)
}

fn text_axis<'a>(c: &'a crate::Configuration, name: &str) -> Result<&'a str, BoxError> {
    c.get(name).and_then(|v| v.as_str()).ok_or_else(|| format!("configuration lacks text axis {name:?}").into())
}

fn count_axis(c: &crate::Configuration, name: &str) -> Result<usize, BoxError> {
    let v = c.get(name).and_then(|v| v.as_f64()).ok_or_else(|| format!("configuration lacks numeric axis {name:?}"))?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(format!("axis {name:?} must be a whole count, got {v}").into());
    }
    Ok(v as usize)
}
