//! End-to-end steps shared by the command line and the demo.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::channel::{simulate_measurement, Measurement};
use crate::dataio::{MeasurementSet, ScenarioConfig, TensorMeta};
use crate::dataset::TensorSet;
use crate::error::{Error, Result};
use crate::estimators::{locate_from_log, Method};
use crate::eval::{residual_histograms, ResidualHistograms, ResidualSpans};
use crate::geometry::Point2D;
use crate::likelihood::{MapBuilder, SampleTensor};
use crate::rng::{Purpose, RngStream};

/// Tag states from the scenario's position source, then one measurement per
/// anchor (ascending id) for each state. State `i` draws from its own
/// stream, so the output does not depend on scheduling.
pub fn simulate(scenario: &ScenarioConfig) -> Result<MeasurementSet> {
    scenario.validate()?;
    let states = scenario.tag_states()?;
    if states.is_empty() {
        return Err(Error::Empty("the position source produced no tag states".into()));
    }
    let anchors = scenario.sorted_anchors();
    let measurements = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = RngStream::new(scenario.seed, Purpose::Measurement, i as u64);
            anchors
                .iter()
                .map(|a| {
                    simulate_measurement(
                        s.position,
                        a,
                        &scenario.conditions_for(a.id),
                        &scenario.error_model,
                        &mut rng,
                    )
                })
                .collect()
        })
        .collect();
    Ok(MeasurementSet {
        scenario: scenario.clone(),
        states,
        measurements,
    })
}

fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn map_builder(set: &MeasurementSet) -> Result<MapBuilder> {
    let sc = &set.scenario;
    MapBuilder::new(sc.grid_spec()?, &set.anchors(), sc.observation)
}

/// Stacked likelihood tensors for every sample, in sample order.
pub fn build_tensors(set: &MeasurementSet) -> Result<(TensorSet, TensorMeta)> {
    let builder = map_builder(set)?;
    let samples: Vec<Result<SampleTensor>> = map_ordered(
        &set.states.iter().zip(&set.measurements).collect::<Vec<_>>(),
        |(s, ms)| builder.stack_sample(ms, s.position),
    );
    let mut data = TensorSet::new(builder.channels(), builder.grid().rows, builder.grid().cols);
    for s in samples {
        data.push(&s?)?;
    }
    let sc = &set.scenario;
    let meta = TensorMeta::new(*builder.grid(), sc.observation, set.anchors(), sc.seed, sc.digest());
    Ok((data, meta))
}

/// Classical estimate per sample; `None` where every measurement failed.
pub fn locate(set: &MeasurementSet, method: Method) -> Result<Vec<Option<Point2D>>> {
    let builder = map_builder(set)?;
    let grid = *builder.grid();
    map_ordered(&set.measurements, |ms: &Vec<Measurement>| {
        match builder.fused_log_field(ms) {
            Ok(field) => locate_from_log(&field, &grid, method).map(Some),
            Err(Error::NoInformation(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect()
}

pub fn residuals(set: &MeasurementSet, bins: usize, spans: &ResidualSpans) -> Result<ResidualHistograms> {
    residual_histograms(&set.measurements, &set.truths(), &set.anchors(), bins, spans)
}
