//! Replication loop and summary tables.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{draw_replication, nn_att, oracle_att, population_att, rps_att, CovariateKind, DgpSpec, Variant};
use crate::clustering::{choose_m, complete_linkage_cluster, group_by_value, studentize, CovariateMatrix};
use crate::error::{Error, Result};
use crate::estimator::{components, Dataset, PStar, Target};
use crate::inference::{confidence_report, ConfidenceReport};
use crate::numeric::{mean, median, sample_sd};
use crate::popweights::{Order, RefPropensity};

/// A full Monte Carlo study: one design, many replications, several orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub variant: Variant,
    pub covariate: CovariateKind,
    pub n: usize,
    pub reps: usize,
    pub orders: Vec<Order>,
    /// Target number of observations per cluster.
    pub cluster_size: f64,
    pub seed: u64,
    pub alpha: f64,
    pub p_star: f64,
}

impl StudySpec {
    pub fn new(variant: Variant, covariate: CovariateKind) -> Self {
        Self {
            variant,
            covariate,
            n: 1000,
            reps: 1000,
            orders: (1..=4).map(Order::Finite).collect(),
            cluster_size: 10.0,
            seed: 1,
            alpha: 0.05,
            p_star: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidInput("number of replications must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidInput("sample size must be at least 2".into()));
        }
        if self.orders.is_empty() {
            return Err(Error::InvalidInput("at least one order Q is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        RefPropensity::new(self.p_star)?;
        choose_m(self.n, self.cluster_size)?;
        Ok(())
    }

    fn dgp(&self) -> DgpSpec {
        DgpSpec { variant: self.variant, covariate: self.covariate, n: self.n, seed: self.seed }
    }
}

/// ATT bounds and intervals of one replication at one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderOutcome {
    pub order: Order,
    pub lower: f64,
    pub upper: f64,
    pub ci: ConfidenceReport,
}

/// Everything recorded for one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub oracle: f64,
    pub rps: f64,
    pub nn: f64,
    pub orders: Vec<OrderOutcome>,
}

/// Draw, cluster and estimate replication `rep`. Clustering is done once
/// and shared by all orders.
pub fn run_replication(spec: &StudySpec, rep: u64) -> Result<RepOutcome> {
    let sample = draw_replication(&spec.dgp(), rep)?;
    let x = CovariateMatrix::from_column(&sample.x)?;
    // Never ask for more clusters than distinct covariate values, so tied
    // observations always share a cluster.
    let distinct = group_by_value(&x).m;
    let m = choose_m(spec.n, spec.cluster_size)?.min(distinct);
    let clusters = complete_linkage_cluster(&studentize(&x), m)?;
    let data = Dataset::new(sample.y.clone(), sample.d.clone(), clusters.labels, 0.0, 1.0)?;
    let p_star = PStar::Constant(RefPropensity::new(spec.p_star)?);
    let orders = spec
        .orders
        .iter()
        .map(|&order| {
            let bounds = components(&data, &p_star, order)?.bounds(Target::Att)?;
            let ci = confidence_report(&bounds, spec.alpha)?;
            Ok(OrderOutcome { order, lower: bounds.lower, upper: bounds.upper, ci })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepOutcome { oracle: oracle_att(&sample)?, rps: rps_att(&sample, spec.p_star)?, nn: nn_att(&sample)?, orders })
}

/// Outcomes of all replications, in replication order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub spec: StudySpec,
    pub truth: f64,
    pub reps: Vec<RepOutcome>,
}

/// Run every replication (in parallel when enabled).
pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    spec.validate()?;
    let run = |r: usize| run_replication(spec, r as u64);
    #[cfg(feature = "parallel")]
    let reps = {
        use rayon::prelude::*;
        (0..spec.reps).into_par_iter().map(run).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let reps = (0..spec.reps).map(run).collect::<Result<Vec<_>>>()?;
    Ok(StudyResult { spec: spec.clone(), truth: population_att(spec.variant, spec.covariate), reps })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryRow {
    fn of(name: String, values: &[f64]) -> Self {
        Self {
            name,
            mean: mean(values),
            median: median(values),
            sd: sample_sd(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Distribution summaries of the point estimators and bound estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1 {
    pub rows: Vec<SummaryRow>,
}

/// Coverage, non-emptiness and length of the sample bounds and of the
/// confidence intervals at one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub order: Order,
    pub coverage_sample: f64,
    pub coverage_inference: f64,
    pub nonempty_sample: f64,
    pub nonempty_inference: f64,
    /// Mean length over non-empty intervals; `None` if all were empty.
    pub length_sample: Option<f64>,
    pub length_inference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2 {
    pub truth: f64,
    pub rows: Vec<Table2Row>,
}

impl StudyResult {
    pub fn table1(&self) -> Table1 {
        let col = |f: &dyn Fn(&RepOutcome) -> f64| self.reps.iter().map(f).collect::<Vec<f64>>();
        let mut rows = vec![
            SummaryRow::of("Oracle".into(), &col(&|r| r.oracle)),
            SummaryRow::of("RPS".into(), &col(&|r| r.rps)),
            SummaryRow::of("NN".into(), &col(&|r| r.nn)),
        ];
        for (k, order) in self.spec.orders.iter().enumerate() {
            rows.push(SummaryRow::of(format!("LB{order}"), &col(&|r| r.orders[k].lower)));
            rows.push(SummaryRow::of(format!("UB{order}"), &col(&|r| r.orders[k].upper)));
        }
        Table1 { rows }
    }

    pub fn table2(&self) -> Table2 {
        let reps = self.reps.len() as f64;
        let share = |hits: usize| hits as f64 / reps;
        let avg = |v: Vec<f64>| (!v.is_empty()).then(|| mean(&v));
        let rows = self
            .spec
            .orders
            .iter()
            .enumerate()
            .map(|(k, &order)| {
                let outs: Vec<&OrderOutcome> = self.reps.iter().map(|r| &r.orders[k]).collect();
                // Crossed sample bounds (lower > upper) count as not covering.
                let sample_cover = outs.iter().filter(|o| o.lower <= self.truth && self.truth <= o.upper).count();
                let ci_cover = outs.iter().filter(|o| o.ci.ci_union.contains(self.truth)).count();
                let sample_nonempty: Vec<f64> =
                    outs.iter().filter(|o| o.lower <= o.upper).map(|o| o.upper - o.lower).collect();
                let ci_nonempty: Vec<f64> = outs.iter().filter_map(|o| o.ci.ci_union.length()).collect();
                Table2Row {
                    order,
                    coverage_sample: share(sample_cover),
                    coverage_inference: share(ci_cover),
                    nonempty_sample: share(sample_nonempty.len()),
                    nonempty_inference: share(ci_nonempty.len()),
                    length_sample: avg(sample_nonempty),
                    length_inference: avg(ci_nonempty),
                }
            })
            .collect();
        Table2 { truth: self.truth, rows }
    }
}

impl Table1 {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "mean", "median", "sd", "min", "max"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.mean.to_string(),
                r.median.to_string(),
                r.sd.to_string(),
                r.min.to_string(),
                r.max.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Table1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "Mean", "Median", "St.Dev.", "Min", "Max")?;
        for r in &self.rows {
            writeln!(f, "{:<8} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", r.name, r.mean, r.median, r.sd, r.min, r.max)?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl Table2 {
    pub fn row(&self, order: Order) -> Option<&Table2Row> {
        self.rows.iter().find(|r| r.order == order)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "Q",
            "coverage_sample",
            "coverage_inference",
            "nonempty_sample",
            "nonempty_inference",
            "length_sample",
            "length_inference",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.order.to_string(),
                r.coverage_sample.to_string(),
                r.coverage_inference.to_string(),
                r.nonempty_sample.to_string(),
                r.nonempty_inference.to_string(),
                opt(r.length_sample),
                opt(r.length_inference),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Table2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let len = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        writeln!(f, "true ATT = {:.4}", self.truth)?;
        writeln!(
            f,
            "{:<4} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "Q", "cov.samp", "cov.inf", "ne.samp", "ne.inf", "len.samp", "len.inf"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<4} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9} {:>9}",
                r.order.to_string(),
                r.coverage_sample,
                r.coverage_inference,
                r.nonempty_sample,
                r.nonempty_inference,
                len(r.length_sample),
                len(r.length_inference)
            )?;
        }
        Ok(())
    }
}
