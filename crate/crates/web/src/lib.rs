//! WebAssembly entry points for the browser demo. Each export returns a
//! JSON string; the plain `*_json` functions hold the logic so they can be
//! tested natively.

use poolbounds::inference::Interval;
use poolbounds::io::{load_csv_from_reader, run_on_data, weight_curves, RunConfig};
use poolbounds::popweights::Order;
use poolbounds::simulate::{population_att, run_replication, CovariateKind, StudySpec, Variant};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Point {
    x: f64,
    weight: f64,
}

#[derive(Serialize)]
struct Curves {
    q: usize,
    sample: Vec<Point>,
    population: Vec<Point>,
}

fn text_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Sample weights `w1^` at each `n1/n` and the population curve `w^(q)`.
pub fn weights_json(p_star: f64, order: &str, n: usize) -> Result<String, String> {
    let order: Order = order.parse().map_err(text_err)?;
    let points = weight_curves(p_star, order, n, 200).map_err(text_err)?;
    let (mut sample, mut population) = (Vec::new(), Vec::new());
    for p in points {
        let target = if p.series == "sample_w1" { &mut sample } else { &mut population };
        target.push(Point { x: p.x, weight: p.weight });
    }
    serde_json::to_string(&Curves { q: order.effective(n), sample, population }).map_err(text_err)
}

#[derive(Serialize)]
struct OrderRow {
    q: String,
    lower: f64,
    upper: f64,
    ci: Interval,
}

#[derive(Serialize)]
struct SimulatedRun {
    truth: f64,
    oracle: f64,
    rps: f64,
    nn: f64,
    orders: Vec<OrderRow>,
}

/// ATT bounds with confidence intervals for one simulated sample.
pub fn simulate_json(
    variant: &str,
    covariate: &str,
    n: usize,
    cluster_size: f64,
    orders: &str,
    seed: u32,
    rep: u32,
) -> Result<String, String> {
    let variant: Variant = variant.parse().map_err(text_err)?;
    let covariate: CovariateKind = covariate.parse().map_err(text_err)?;
    let mut spec = StudySpec::new(variant, covariate);
    spec.n = n;
    spec.cluster_size = cluster_size;
    spec.seed = seed.into();
    spec.orders = orders.split(',').map(|s| s.trim().parse::<Order>()).collect::<Result<_, _>>().map_err(text_err)?;
    let out = run_replication(&spec, rep.into()).map_err(text_err)?;
    let run = SimulatedRun {
        truth: population_att(variant, covariate),
        oracle: out.oracle,
        rps: out.rps,
        nn: out.nn,
        orders: out
            .orders
            .iter()
            .map(|o| OrderRow { q: o.order.to_string(), lower: o.lower, upper: o.upper, ci: o.ci.ci_union })
            .collect(),
    };
    serde_json::to_string(&run).map_err(text_err)
}

/// Full bounds report for CSV text. `config` is a run configuration in
/// JSON; its `input` field may be omitted.
pub fn bounds_json(csv_text: &str, config: &str) -> Result<String, String> {
    let mut value: serde_json::Value = serde_json::from_str(config).map_err(text_err)?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("input").or_insert_with(|| "pasted.csv".into());
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(text_err)?;
    cfg.validate().map_err(text_err)?;
    let data = load_csv_from_reader(&cfg, csv_text.as_bytes()).map_err(text_err)?;
    let (report, _) = run_on_data(&cfg, &data).map_err(text_err)?;
    report.to_json().map_err(text_err)
}

#[wasm_bindgen]
pub fn weights(p_star: f64, order: &str, n: usize) -> Result<String, JsError> {
    weights_json(p_star, order, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    variant: &str,
    covariate: &str,
    n: usize,
    cluster_size: f64,
    orders: &str,
    seed: u32,
    rep: u32,
) -> Result<String, JsError> {
    simulate_json(variant, covariate, n, cluster_size, orders, seed, rep).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bounds(csv_text: &str, config: &str) -> Result<String, JsError> {
    bounds_json(csv_text, config).map_err(|e| JsError::new(&e))
}
