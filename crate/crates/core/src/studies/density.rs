use simstudy_stats::kde::default_bandwidth_grid;
use simstudy_stats::{integrated_squared_loss, select_bandwidth, BetaMixture, SimRng};

use super::{count_axis, simulation, text_axis, StudyDefinition};
use crate::paramspace::{Axis, ParamSpace};
use crate::runner::{BoxError, Outcomes};
use crate::storage::{FieldKind, ResultSchema};
use crate::value::Value;
use crate::Configuration;

pub const LOSS_GRID: usize = 2048;

/// Gaussian KDE on draws from a four-component beta mixture, bandwidth by
/// data splitting. Outcome `loss` is the integrated squared error against
/// the true density.
pub fn density_study() -> StudyDefinition {
    let space = ParamSpace::new(vec![Axis::new("no_instances", [100, 200]), Axis::new("method", ["kde"])])
        .expect("valid space");
    let schema = ResultSchema::builder("density_result")
        .config("no_instances", FieldKind::Integer)
        .config("method", FieldKind::Text)
        .outcome("loss", FieldKind::Float)
        .outcome("bandwidth", FieldKind::Float)
        .build()
        .expect("valid schema");
    StudyDefinition {
        name: "density",
        space,
        schema,
        filter: None,
        simulate: simulation(simulate),
        default_max_count: 300,
        group_axes: vec!["no_instances", "method"],
        report_outcomes: vec!["loss", "bandwidth"],
    }
}

fn simulate(config: &Configuration, seed: u64) -> Result<Outcomes, BoxError> {
    let n = count_axis(config, "no_instances")?;
    let method = text_axis(config, "method")?;
    if method != "kde" {
        return Err(format!("unknown method {method:?}").into());
    }
    let mut rng = SimRng::new(seed);
    let target = BetaMixture::density_study_target();
    let data = target.sample(&mut rng, n)?;
    let selection = select_bandwidth(&data, &mut rng, &default_bandwidth_grid(&data))?;
    let loss = integrated_squared_loss(|x| target.pdf(x), |x| selection.model.pdf(x), LOSS_GRID)?;
    Ok(Outcomes::from([
        ("loss".into(), Value::Float(loss)),
        ("bandwidth".into(), Value::Float(selection.model.bandwidth())),
    ]))
}
