use std::time::Instant;

use simstudy_stats::rng::sample_normal;
use simstudy_stats::{lasso_fit, ols_fit, LinearModel, SimRng};

use super::{count_axis, simulation, text_axis, StudyDefinition};
use crate::paramspace::{Axis, ParamSpace};
use crate::runner::{BoxError, Outcomes};
use crate::storage::{FieldKind, ResultSchema};
use crate::value::Value;
use crate::Configuration;

pub const FEATURES: usize = 10;
pub const SPARSE_FEATURES: usize = 5;
pub const TEST_ROWS: usize = 10_000;
pub const LASSO_ALPHA: f64 = 0.1;

/// OLS vs lasso on a Gaussian linear model. Outcome `score` is R² on a
/// held-out set of 10000 rows.
pub fn regression_study(full: bool) -> StudyDefinition {
    let mut sizes = vec![100.0, 1000.0];
    if full {
        sizes.push(10_000.0);
    }
    let space = ParamSpace::new(vec![
        Axis::new("data_distribution", ["complete", "sparse"]),
        Axis::new("no_instances", sizes),
        Axis::new("method", ["ols", "lasso"]),
    ])
    .expect("valid space");
    let schema = ResultSchema::builder("result")
        .config("data_distribution", FieldKind::Text)
        .config("method", FieldKind::Text)
        .config("no_instances", FieldKind::Float)
        .outcome("score", FieldKind::Float)
        .build()
        .expect("valid schema");
    StudyDefinition {
        name: "regression",
        space,
        schema,
        filter: None,
        simulate: simulation(simulate),
        default_max_count: 200,
        group_axes: vec!["data_distribution", "no_instances", "method"],
        report_outcomes: vec!["score"],
    }
}

fn simulate(config: &Configuration, seed: u64) -> Result<Outcomes, BoxError> {
    let distribution = text_axis(config, "data_distribution")?;
    let n = count_axis(config, "no_instances")?;
    let method = text_axis(config, "method")?;
    let mut rng = SimRng::new(seed);

    let total = n + TEST_ROWS;
    let x = sample_normal(&mut rng, 0.0, 2.0, total, FEATURES)?;
    let beta = sample_normal(&mut rng, 0.0, 2.0, FEATURES, 1)?.as_slice().to_vec();
    let eps = sample_normal(&mut rng, 0.0, 5.0, total, 1)?;
    let active = match distribution {
        "complete" => FEATURES,
        "sparse" => SPARSE_FEATURES,
        other => return Err(format!("unknown data_distribution {other:?}").into()),
    };
    let signal = x.leading_columns(active).mul_vec(&beta[..active])?;
    let y: Vec<f64> = signal.iter().zip(eps.as_slice()).map(|(s, e)| s + e).collect();

    let (x_train, x_test) = (x.slice_rows(0, n), x.slice_rows(n, total));
    let (y_train, y_test) = (&y[..n], &y[n..]);

    let start = Instant::now();
    let model: LinearModel = match method {
        "ols" => ols_fit(&x_train, y_train)?,
        "lasso" => lasso_fit(&x_train, y_train, LASSO_ALPHA)?.model,
        other => return Err(format!("unknown method {other:?}").into()),
    };
    let score = model.score(&x_test, y_test)?;
    let elapsed = start.elapsed().as_secs_f64();

    Ok(Outcomes::from([("score".into(), Value::Float(score)), ("elapsed_time".into(), Value::Float(elapsed))]))
}
