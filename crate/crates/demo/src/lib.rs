//! WebAssembly bindings for `www/index.html`. Every export returns a JSON
//! string; failures surface as JS exceptions carrying the error message.

use ralm::channel::{simulate_measurement, ConditionModel, Measurement};
use ralm::dataio::{GridDims, MeasurementSet, ScenarioConfig};
use ralm::error::{Error, Result};
use ralm::estimators::{locate_from_log, Method};
use ralm::eval::{ecdf, euclidean_errors, metrics_summary, ResidualSpans};
use ralm::geometry::Point2D;
use ralm::likelihood::Field;
use ralm::pipeline;
use ralm::rng::{Purpose, RngStream};
use ralm::trajectory::TagState;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn scenario(seed: u64, rows: usize, cols: usize, p: [f64; 4]) -> Result<ScenarioConfig> {
    let sc = ScenarioConfig {
        seed,
        samples: 1,
        grid: GridDims { rows, cols },
        conditions: ConditionModel::new(p[0], p[1], p[2], p[3])?,
        ..Default::default()
    };
    sc.validate()?;
    Ok(sc)
}

fn point(p: Point2D) -> Value {
    json!({ "x": p.x, "y": p.y })
}

/// Fused likelihood field for one tag at `(x, y)`, normalized to a peak of
/// 1, with both classical estimates.
pub fn likelihood_map(x: f64, y: f64, rows: usize, cols: usize, seed: u64, p: [f64; 4]) -> Result<Value> {
    let sc = scenario(seed, rows, cols, p)?;
    let tag = Point2D::new(x, y);
    if !sc.cabin.contains(tag) {
        return Err(Error::OutOfDomain { x, y });
    }
    let set = MeasurementSet {
        measurements: vec![measure(&sc, tag)],
        states: vec![TagState {
            tag_id: 0,
            time_step: 0,
            position: tag,
        }],
        scenario: sc.clone(),
    };
    let grid = sc.grid_spec()?;
    let builder = pipeline::map_builder(&set)?;
    let ms = &set.measurements[0];
    let measurements: Vec<Value> = ms
        .iter()
        .map(|m| json!({ "anchor_id": m.anchor_id, "range": m.range, "angle": m.angle, "condition": m.condition }))
        .collect();
    let anchors: Vec<Value> = set
        .anchors()
        .iter()
        .map(|a| json!({ "id": a.id, "x": a.position.x, "y": a.position.y }))
        .collect();
    let base = json!({
        "rows": rows,
        "cols": cols,
        "cabin": sc.cabin,
        "truth": point(tag),
        "anchors": anchors,
        "measurements": measurements,
    });
    let log = match builder.fused_log_field(ms) {
        Ok(l) => l,
        Err(Error::NoInformation(_)) => {
            let mut v = base;
            v["values"] = json!(null);
            return Ok(v);
        }
        Err(e) => return Err(e),
    };
    let field = Field::from_log_normalized(rows, cols, &log)?;
    let argmax = locate_from_log(&log, &grid, Method::Argmax)?;
    let centroid = locate_from_log(&log, &grid, Method::Centroid)?;
    let mut v = base;
    v["values"] = json!(field.values.iter().map(|&f| f as f32).collect::<Vec<f32>>());
    v["argmax"] = json!({ "x": argmax.x, "y": argmax.y, "error_m": argmax.distance(tag) });
    v["centroid"] = json!({ "x": centroid.x, "y": centroid.y, "error_m": centroid.distance(tag) });
    Ok(v)
}

/// Same stream layout as the simulator's first sample.
fn measure(sc: &ScenarioConfig, tag: Point2D) -> Vec<Measurement> {
    let mut rng = RngStream::new(sc.seed, Purpose::Measurement, 0);
    sc.sorted_anchors()
        .iter()
        .map(|a| simulate_measurement(tag, a, &sc.conditions_for(a.id), &sc.error_model, &mut rng))
        .collect()
}

/// Simulates `samples` uniform tags and scores one classical estimator.
pub fn locate_batch(samples: usize, rows: usize, cols: usize, seed: u64, p: [f64; 4], centroid: bool) -> Result<Value> {
    let mut sc = scenario(seed, rows, cols, p)?;
    sc.samples = samples;
    let set = pipeline::simulate(&sc)?;
    let method = if centroid { Method::Centroid } else { Method::Argmax };
    let est = pipeline::locate(&set, method)?;
    let (pred, truth): (Vec<Point2D>, Vec<Point2D>) = est
        .iter()
        .zip(set.truths())
        .filter_map(|(e, t)| e.map(|e| (e, t)))
        .unzip();
    if pred.is_empty() {
        return Ok(json!({ "located": 0, "samples": samples }));
    }
    let errors = euclidean_errors(&pred, &truth)?;
    Ok(json!({
        "samples": samples,
        "located": pred.len(),
        "summary": metrics_summary(&pred, &truth)?,
        "ecdf": ecdf(&errors)?,
        "pairs": truth.iter().zip(&pred).map(|(t, p)| [t.x, t.y, p.x, p.y]).collect::<Vec<_>>(),
    }))
}

/// Range and angle residual histograms of `samples` simulated tags.
pub fn residuals(samples: usize, bins: usize, seed: u64, p: [f64; 4]) -> Result<Value> {
    let mut sc = scenario(seed, 8, 8, p)?;
    sc.samples = samples;
    let set = pipeline::simulate(&sc)?;
    let h = pipeline::residuals(&set, bins, &ResidualSpans::default())?;
    Ok(serde_json::to_value(&h).expect("histograms serialize"))
}

fn export(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = likelihoodMap)]
#[allow(clippy::too_many_arguments)]
pub fn likelihood_map_js(
    x: f64,
    y: f64,
    rows: usize,
    cols: usize,
    seed: u64,
    p_los: f64,
    p_nlos: f64,
    p_outlier: f64,
    p_failure: f64,
) -> std::result::Result<String, JsError> {
    export(likelihood_map(
        x,
        y,
        rows,
        cols,
        seed,
        [p_los, p_nlos, p_outlier, p_failure],
    ))
}

#[wasm_bindgen(js_name = locateBatch)]
#[allow(clippy::too_many_arguments)]
pub fn locate_batch_js(
    samples: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    p_los: f64,
    p_nlos: f64,
    p_outlier: f64,
    p_failure: f64,
    centroid: bool,
) -> std::result::Result<String, JsError> {
    export(locate_batch(
        samples,
        rows,
        cols,
        seed,
        [p_los, p_nlos, p_outlier, p_failure],
        centroid,
    ))
}

#[wasm_bindgen(js_name = residualHistograms)]
pub fn residuals_js(
    samples: usize,
    bins: usize,
    seed: u64,
    p_los: f64,
    p_nlos: f64,
    p_outlier: f64,
    p_failure: f64,
) -> std::result::Result<String, JsError> {
    export(residuals(samples, bins, seed, [p_los, p_nlos, p_outlier, p_failure]))
}
