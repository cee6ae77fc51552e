use simstudy_stats::rng::sample_lognormal;
use simstudy_stats::{ks_test, mann_whitney_test, welch_t_test, SimRng};

use super::{count_axis, simulation, text_axis, StudyDefinition};
use crate::paramspace::{Axis, ParamSpace};
use crate::runner::{BoxError, Outcomes};
use crate::storage::{FieldKind, ResultSchema};
use crate::value::Value;
use crate::Configuration;

/// Added to every element of the second sample under the alternative.
pub const SHIFT: f64 = 0.1;

/// Two standard log-normal samples of equal size, compared by Welch's t,
/// Mann–Whitney and Kolmogorov–Smirnov. Outcome `p_value`.
pub fn hypothesis_study() -> StudyDefinition {
    let space = ParamSpace::new(vec![
        Axis::new("method", ["welch", "mwhitney", "ks"]),
        Axis::new("n_instances", [1000, 2000]),
        Axis::new("hypothesis", ["null", "alternative"]),
    ])
    .expect("valid space");
    let schema = ResultSchema::builder("hypothesis_result")
        .config("method", FieldKind::Text)
        .config("n_instances", FieldKind::Integer)
        .config("hypothesis", FieldKind::Text)
        .outcome("p_value", FieldKind::Float)
        .build()
        .expect("valid schema");
    StudyDefinition {
        name: "hypothesis",
        space,
        schema,
        filter: None,
        simulate: simulation(simulate),
        default_max_count: 1000,
        group_axes: vec!["hypothesis", "method", "n_instances"],
        report_outcomes: vec!["p_value"],
    }
}

/// The two samples for one replication.
pub fn samples(rng: &mut SimRng, n: usize, hypothesis: &str) -> Result<(Vec<f64>, Vec<f64>), BoxError> {
    let shift = match hypothesis {
        "null" => 0.0,
        "alternative" => SHIFT,
        other => return Err(format!("unknown hypothesis {other:?}").into()),
    };
    let x = sample_lognormal(rng, n);
    let y = sample_lognormal(rng, n).into_iter().map(|v| v + shift).collect();
    Ok((x, y))
}

fn simulate(config: &Configuration, seed: u64) -> Result<Outcomes, BoxError> {
    let method = text_axis(config, "method")?;
    let n = count_axis(config, "n_instances")?;
    let hypothesis = text_axis(config, "hypothesis")?;
    let mut rng = SimRng::new(seed);
    let (x, y) = samples(&mut rng, n, hypothesis)?;
    let result = match method {
        "welch" => welch_t_test(&x, &y)?,
        "mwhitney" => mann_whitney_test(&x, &y)?,
        "ks" => ks_test(&x, &y)?,
        other => return Err(format!("unknown method {other:?}").into()),
    };
    Ok(Outcomes::from([("p_value".into(), Value::Float(result.p_value))]))
}
