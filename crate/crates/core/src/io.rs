//! Run configuration, CSV input and report output for the bounds pipeline.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{choose_m, complete_linkage_cluster, studentize, CovariateMatrix};
use crate::error::{Error, Result};
use crate::estimator::{components, Components, Dataset, PStar, Target};
use crate::inference::{confidence_report, ConfidenceReport};
use crate::popweights::{weight_w, Order, RefPropensity};
use crate::sampleweights::{weight_hat_w1, ClusterCounts};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the reference propensity comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PStarSpec {
    Constant(f64),
    /// Per-row values in a data column, averaged within each cluster.
    Column(String),
    /// The overall share of treated observations.
    SampleProportion,
}

impl Default for PStarSpec {
    fn default() -> Self {
        PStarSpec::Constant(0.5)
    }
}

impl FromStr for PStarSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "sample-proportion" {
            return Ok(PStarSpec::SampleProportion);
        }
        if let Some(col) = t.strip_prefix("column:") {
            if col.is_empty() {
                return Err(Error::InvalidInput("empty column name in p_star".into()));
            }
            return Ok(PStarSpec::Column(col.to_string()));
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::InvalidInput(format!("p_star must be a number, `column:<name>` or `sample-proportion`, got `{s}`"))
        })?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("p_star {v} outside [0, 1]")));
        }
        Ok(PStarSpec::Constant(v))
    }
}

impl fmt::Display for PStarSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PStarSpec::Constant(v) => write!(f, "{v}"),
            PStarSpec::Column(c) => write!(f, "column:{c}"),
            PStarSpec::SampleProportion => f.write_str("sample-proportion"),
        }
    }
}

impl Serialize for PStarSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PStarSpec::Constant(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for PStarSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => PStarSpec::from_str(&v.to_string()).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_cluster_size() -> f64 {
    10.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_targets() -> Vec<Target> {
    Target::ALL.to_vec()
}

/// Everything needed to run the bounds pipeline on a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub a_min: f64,
    pub a_max: f64,
    #[serde(rename = "Q", default)]
    pub order: Order,
    /// Target cluster size; ignored when `m` is set.
    #[serde(rename = "L", default = "default_cluster_size")]
    pub cluster_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default)]
    pub p_star: PStarSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_targets")]
    pub targets: Vec<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters_output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, outcome: &str, treatment: &str, covariates: &[&str]) -> Self {
        Self {
            input: input.into(),
            outcome: outcome.into(),
            treatment: treatment.into(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            a_min: 0.0,
            a_max: 1.0,
            order: Order::default(),
            cluster_size: default_cluster_size(),
            m: None,
            p_star: PStarSpec::default(),
            alpha: default_alpha(),
            targets: default_targets(),
            seed: None,
            output: None,
            clusters_output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_min < self.a_max) || !self.a_min.is_finite() || !self.a_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need finite a_min < a_max, got [{}, {}]",
                self.a_min, self.a_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.covariates.is_empty() {
            return Err(Error::InvalidInput("at least one covariate column is required".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidInput("at least one target is required".into()));
        }
        if self.order == Order::Finite(0) {
            return Err(Error::InvalidInput("order Q must be at least 1".into()));
        }
        if self.m == Some(0) {
            return Err(Error::InvalidInput("cluster count m must be positive".into()));
        }
        if self.m.is_none() && !(self.cluster_size > 0.0 && self.cluster_size.is_finite()) {
            return Err(Error::InvalidInput(format!("L must be positive, got {}", self.cluster_size)));
        }
        if let PStarSpec::Constant(v) = self.p_star {
            RefPropensity::new(v)?;
        }
        Ok(())
    }

    /// Read a configuration from JSON. A previously written report is also
    /// accepted, in which case its echoed configuration is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let config = match value.get("provenance").and_then(|p| p.get("config")) {
            Some(inner) => inner.clone(),
            None => value,
        };
        Ok(serde_json::from_value(config)?)
    }
}

/// Columns pulled from the input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub y: Vec<f64>,
    pub d: Vec<bool>,
    pub x: CovariateMatrix,
    /// Per-row reference propensities when read from a column.
    pub p_star_rows: Option<Vec<f64>>,
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 =
        raw.trim().parse().map_err(|_| Error::data_at(row, format!("column `{column}`: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::data_at(row, format!("column `{column}`: non-finite value `{raw}`")));
    }
    Ok(v)
}

/// Read and validate the configured columns. Row numbers in errors count
/// data rows from 1 (the header is row 0).
pub fn load_csv(config: &RunConfig) -> Result<LoadedData> {
    let file = std::fs::File::open(&config.input)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", config.input.display())))?;
    load_csv_from_reader(config, file)
}

/// As [`load_csv`], reading CSV text from `source` instead of `config.input`.
pub fn load_csv_from_reader<R: Read>(config: &RunConfig, source: R) -> Result<LoadedData> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let find = |name: &str| index.get(name).copied().ok_or_else(|| Error::data(format!("missing column `{name}`")));
    let y_col = find(&config.outcome)?;
    let d_col = find(&config.treatment)?;
    let x_cols = config.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let p_col = match &config.p_star {
        PStarSpec::Column(c) => Some(find(c)?),
        _ => None,
    };

    let (mut y, mut d, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let mut p_rows = p_col.map(|_| Vec::new());
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let yv = parse_number(get(y_col), row, &config.outcome)?;
        if !(config.a_min..=config.a_max).contains(&yv) {
            return Err(Error::data_at(row, format!("outcome {yv} outside [{}, {}]", config.a_min, config.a_max)));
        }
        let dv = parse_number(get(d_col), row, &config.treatment)?;
        if dv != 0.0 && dv != 1.0 {
            return Err(Error::data_at(row, format!("treatment `{}` is not 0 or 1", get(d_col))));
        }
        for (&c, name) in x_cols.iter().zip(&config.covariates) {
            x.push(parse_number(get(c), row, name)?);
        }
        if let (Some(c), Some(rows)) = (p_col, p_rows.as_mut()) {
            let pv = parse_number(get(c), row, &headers[c])?;
            if !(0.0..=1.0).contains(&pv) {
                return Err(Error::data_at(row, format!("reference propensity {pv} outside [0, 1]")));
            }
            rows.push(pv);
        }
        y.push(yv);
        d.push(dv == 1.0);
    }
    if y.is_empty() {
        return Err(Error::data("input has no data rows"));
    }
    let x = CovariateMatrix::new(y.len(), x_cols.len(), x)?.with_names(config.covariates.clone())?;
    Ok(LoadedData { y, d, x, p_star_rows: p_rows })
}

/// Bounds and intervals for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub lower: f64,
    pub upper: f64,
    pub confidence: ConfidenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub n: usize,
    pub n_treated: usize,
    pub m: usize,
    /// The common reference propensity, when one value is used for all clusters.
    pub p_star_value: Option<f64>,
    pub version: String,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

/// Output of one `bounds` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub results: Vec<TargetReport>,
    pub provenance: Provenance,
}

impl Report {
    pub fn result(&self, target: Target) -> Option<&TargetReport> {
        self.results.iter().find(|r| r.target == target)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-cluster detail of a run, for optional CSV export.
#[derive(Debug, Clone)]
pub struct ClusterTable {
    pub targets: Vec<Target>,
    pub p_star: Vec<f64>,
    pub components: Components,
    /// `(L_x, U_x)` per target, in `targets` order.
    pub terms: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ClusterTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["cluster", "n", "n1", "ybar0", "ybar1", "p_star", "w0", "w1", "v"].iter().map(|s| s.to_string()).collect();
        for t in &self.targets {
            header.push(format!("L_{t}"));
            header.push(format!("U_{t}"));
        }
        w.write_record(&header)?;
        for (x, s) in self.components.stats.iter().enumerate() {
            let wt = self.components.weights[x];
            let mut rec = vec![
                x.to_string(),
                s.counts.n().to_string(),
                s.counts.n1().to_string(),
                s.ybar0.to_string(),
                s.ybar1.to_string(),
                self.p_star[x].to_string(),
                wt.w0.to_string(),
                wt.w1.to_string(),
                wt.v.to_string(),
            ];
            for (l, u) in &self.terms {
                rec.push(l[x].to_string());
                rec.push(u[x].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full pipeline on already loaded data: studentize, cluster, estimate
/// every target and attach confidence intervals.
pub fn run_on_data(config: &RunConfig, data: &LoadedData) -> Result<(Report, ClusterTable)> {
    config.validate()?;
    let n = data.y.len();
    let m = match config.m {
        Some(m) if m > n => {
            return Err(Error::InvalidInput(format!("m = {m} exceeds the number of rows {n}")));
        }
        Some(m) => m,
        None => choose_m(n, config.cluster_size)?,
    };
    let clusters = complete_linkage_cluster(&studentize(&data.x), m)?;
    let dataset = Dataset::new(data.y.clone(), data.d.clone(), clusters.labels.clone(), config.a_min, config.a_max)?;

    let mut warnings = Vec::new();
    let (p_star, p_star_value) = match &config.p_star {
        PStarSpec::Constant(v) => (PStar::Constant(RefPropensity::new(*v)?), Some(*v)),
        PStarSpec::SampleProportion => {
            let share = dataset.n_treated() as f64 / n as f64;
            warnings.push(format!(
                "p_star = {share} was estimated from the sample and is treated as fixed; \
                 the intervals ignore its sampling variability"
            ));
            (PStar::Constant(RefPropensity::new(share)?), Some(share))
        }
        PStarSpec::Column(_) => {
            let rows = data
                .p_star_rows
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("per-row p_star values were not loaded".into()))?;
            let mut sums = vec![0.0; m];
            let mut counts = vec![0usize; m];
            for (&l, &p) in clusters.labels.iter().zip(rows) {
                sums[l] += p;
                counts[l] += 1;
            }
            let per =
                sums.iter().zip(&counts).map(|(s, &c)| RefPropensity::new(s / c as f64)).collect::<Result<Vec<_>>>()?;
            (PStar::PerCluster(per), None)
        }
    };

    let comp = components(&dataset, &p_star, config.order)?;
    if comp.explosive_clusters > 0 {
        warnings.push(format!(
            "{} cluster(s) have sample weights growing exponentially with cluster size; \
             consider a finite Q",
            comp.explosive_clusters
        ));
    }
    let mut results = Vec::new();
    let mut terms = Vec::new();
    for &target in &config.targets {
        let b = comp.bounds(target)?;
        let confidence = confidence_report(&b, config.alpha)?;
        results.push(TargetReport { target, lower: b.lower, upper: b.upper, confidence });
        terms.push((b.per_cluster_lower, b.per_cluster_upper));
    }
    let report = Report {
        schema: SCHEMA_VERSION,
        results,
        provenance: Provenance {
            config: config.clone(),
            n,
            n_treated: dataset.n_treated(),
            m,
            p_star_value,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            warnings,
        },
    };
    let table = ClusterTable {
        targets: config.targets.clone(),
        p_star: (0..m).map(|x| p_star.for_cluster(x).value()).collect(),
        components: comp,
        terms,
    };
    Ok((report, table))
}

/// Load the configured CSV and run the pipeline.
pub fn run_bounds(config: &RunConfig) -> Result<(Report, ClusterTable)> {
    config.validate()?;
    let data = load_csv(config)?;
    run_on_data(config, &data)
}

/// Write the report (and the per-cluster table when configured) to the
/// paths named in the configuration.
pub fn write_outputs(config: &RunConfig, report: &Report, table: &ClusterTable) -> Result<()> {
    if let Some(path) = &config.output {
        std::fs::write(path, report.to_json()? + "\n")?;
    }
    if let Some(path) = &config.clusters_output {
        table.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(())
}

/// One point of a weight curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightPoint {
    pub series: &'static str,
    pub x: f64,
    pub weight: f64,
}

/// Sample weights `w1^` at `n1/n` for `n1 = 0..=n`, plus the population
/// weight `w^(q)` on a grid of `grid + 1` propensities, `q = min(Q, n)`.
pub fn weight_curves(p_star: f64, order: Order, n: usize, grid: usize) -> Result<Vec<WeightPoint>> {
    if n == 0 {
        return Err(Error::InvalidInput("cluster size n must be positive".into()));
    }
    if grid == 0 {
        return Err(Error::InvalidInput("grid needs at least one step".into()));
    }
    let ps = RefPropensity::new(p_star)?;
    let q = order.effective(n) as u32;
    let mut out = Vec::with_capacity(n + grid + 2);
    for n1 in 0..=n {
        let c = ClusterCounts::new(n, n1)?;
        out.push(WeightPoint { series: "sample_w1", x: n1 as f64 / n as f64, weight: weight_hat_w1(c, ps, order) });
    }
    for k in 0..=grid {
        let p = k as f64 / grid as f64;
        out.push(WeightPoint { series: "population_w", x: p, weight: weight_w(q, p, ps) });
    }
    Ok(out)
}

pub fn write_weight_csv<W: Write>(points: &[WeightPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "x", "weight"])?;
    for p in points {
        w.write_record([p.series.to_string(), p.x.to_string(), p.weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience for tests and callers holding a path.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_json(&std::fs::read_to_string(path)?)
}
