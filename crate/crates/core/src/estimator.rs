//! Sample bounds for the treated/control means, ATE and ATT.
//!
//! Each cluster `x` contributes `B_x(d, a) = a + w_d^(x) (Ybar_x(d) - a)` and
//! `C_x(a) = n1/n (Ybar_x(1) - a) - v^(x) (Ybar_x(0) - a)`. Aggregates are
//! size-weighted means over clusters; per-cluster terms are rescaled by
//! `m n(x) / n` so that the aggregates are plain means of those terms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::popweights::{Arm, Order, RefPropensity};
use crate::sampleweights::{exponential_growth, weight_triple, ClusterCounts, WeightTriple};

/// Quantity to bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Y0,
    Y1,
    #[serde(rename = "ATE")]
    Ate,
    #[serde(rename = "ATT")]
    Att,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Y0, Target::Y1, Target::Ate, Target::Att];
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Y0 => "Y0",
            Target::Y1 => "Y1",
            Target::Ate => "ATE",
            Target::Att => "ATT",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Y0" => Ok(Target::Y0),
            "Y1" => Ok(Target::Y1),
            "ATE" => Ok(Target::Ate),
            "ATT" => Ok(Target::Att),
            other => Err(Error::InvalidInput(format!("unknown target `{other}` (expected Y0, Y1, ATE or ATT)"))),
        }
    }
}

/// Outcomes, treatments and cluster labels with the outcome range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<bool>,
    labels: Vec<usize>,
    m: usize,
    a_min: f64,
    a_max: f64,
}

impl Dataset {
    /// Labels must be numbered `0..m` with every cluster non-empty.
    pub fn new(y: Vec<f64>, d: Vec<bool>, labels: Vec<usize>, a_min: f64, a_max: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::data("empty dataset"));
        }
        if y.len() != d.len() || y.len() != labels.len() {
            return Err(Error::InvalidInput("outcomes, treatments and labels differ in length".into()));
        }
        if !(a_min < a_max) || !a_min.is_finite() || !a_max.is_finite() {
            return Err(Error::InvalidInput(format!("need finite a_min < a_max, got [{a_min}, {a_max}]")));
        }
        if let Some(i) = y.iter().position(|v| !(a_min..=a_max).contains(v)) {
            return Err(Error::data_at(i + 1, format!("outcome {} outside [{a_min}, {a_max}]", y[i])));
        }
        let m = labels.iter().max().map_or(0, |&l| l + 1);
        let mut seen = vec![false; m];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.contains(&false) {
            return Err(Error::InvalidInput("cluster labels must cover 0..m without gaps".into()));
        }
        Ok(Self { y, d, labels, m, a_min, a_max })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn treatments(&self) -> &[bool] {
        &self.d
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&d| d).count()
    }
}

/// Counts and arm means of one cluster. A mean is 0 when its arm is empty;
/// it is then always multiplied by a weight that is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub counts: ClusterCounts,
    pub ybar0: f64,
    pub ybar1: f64,
}

/// Per-cluster statistics indexed by label.
pub fn cluster_stats(data: &Dataset) -> Vec<ClusterStats> {
    let m = data.m;
    let mut members: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; m];
    for ((&y, &d), &l) in data.y.iter().zip(&data.d).zip(&data.labels) {
        members[l][d as usize].push(y);
    }
    members
        .into_iter()
        .map(|[ctrl, trt]| {
            let arm_mean = |v: &[f64]| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 };
            ClusterStats {
                counts: ClusterCounts::new(ctrl.len() + trt.len(), trt.len()).expect("non-empty cluster"),
                ybar0: arm_mean(&ctrl),
                ybar1: arm_mean(&trt),
            }
        })
        .collect()
}

/// `B_x(d, a) = a + w_d^ (Ybar_x(d) - a)`.
pub fn cluster_bound_b(stats: &ClusterStats, arm: Arm, a: f64, weights: &WeightTriple) -> f64 {
    let (n_d, w, ybar) = match arm {
        Arm::Treated => (stats.counts.n1(), weights.w1, stats.ybar1),
        Arm::Control => (stats.counts.n0(), weights.w0, stats.ybar0),
    };
    if n_d == 0 {
        assert_eq!(w, 0.0, "empty arm must carry a zero weight");
        return a;
    }
    a + w * (ybar - a)
}

/// `C_x(a) = n1/n (Ybar_x(1) - a) - v^ (Ybar_x(0) - a)`.
pub fn cluster_bound_c(stats: &ClusterStats, a: f64, weights: &WeightTriple) -> f64 {
    let c = stats.counts;
    let treated = if c.n1() == 0 { 0.0 } else { c.n1() as f64 / c.n() as f64 * (stats.ybar1 - a) };
    let control = if c.n0() == 0 {
        assert_eq!(weights.v, 0.0, "empty control arm must carry a zero weight");
        0.0
    } else {
        weights.v * (stats.ybar0 - a)
    };
    treated - control
}

/// Reference propensity: one value for all clusters or one per cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum PStar {
    Constant(RefPropensity),
    PerCluster(Vec<RefPropensity>),
}

impl PStar {
    pub fn for_cluster(&self, label: usize) -> RefPropensity {
        match self {
            PStar::Constant(p) => *p,
            PStar::PerCluster(v) => v[label],
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        match self {
            PStar::PerCluster(v) if v.len() != m => {
                Err(Error::InvalidInput(format!("{} reference propensities supplied for {m} clusters", v.len())))
            }
            _ => Ok(()),
        }
    }
}

/// Weights at which a cluster is flagged as numerically explosive.
pub const GROWTH_THRESHOLD: f64 = 1e6;

/// Everything the bounds of all targets are built from: per-cluster
/// statistics, weights and the four B/C evaluations.
#[derive(Debug, Clone)]
pub struct Components {
    pub n: usize,
    pub n_treated: usize,
    pub stats: Vec<ClusterStats>,
    pub weights: Vec<WeightTriple>,
    /// `B_x(1, a_min), B_x(1, a_max), B_x(0, a_min), B_x(0, a_max)` per cluster.
    pub b: Vec<[f64; 4]>,
    /// `C_x(a_min), C_x(a_max)` per cluster.
    pub c: Vec<[f64; 2]>,
    /// Clusters whose weights exceed [`GROWTH_THRESHOLD`] in magnitude growth.
    pub explosive_clusters: usize,
}

pub fn components(data: &Dataset, p_star: &PStar, order: Order) -> Result<Components> {
    p_star.check(data.m)?;
    let stats = cluster_stats(data);
    let mut weights = Vec::with_capacity(data.m);
    let mut b = Vec::with_capacity(data.m);
    let mut c = Vec::with_capacity(data.m);
    let mut explosive = 0;
    for (x, s) in stats.iter().enumerate() {
        let ps = p_star.for_cluster(x);
        let w = weight_triple(s.counts, ps, order);
        if exponential_growth(s.counts, ps, order, GROWTH_THRESHOLD) {
            explosive += 1;
        }
        b.push([
            cluster_bound_b(s, Arm::Treated, data.a_min, &w),
            cluster_bound_b(s, Arm::Treated, data.a_max, &w),
            cluster_bound_b(s, Arm::Control, data.a_min, &w),
            cluster_bound_b(s, Arm::Control, data.a_max, &w),
        ]);
        c.push([cluster_bound_c(s, data.a_min, &w), cluster_bound_c(s, data.a_max, &w)]);
        weights.push(w);
    }
    Ok(Components { n: data.n(), n_treated: data.n_treated(), stats, weights, b, c, explosive_clusters: explosive })
}

/// Sample averages `Bbar(d, a)`, `Cbar(a)` and `Dbar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub b1_min: f64,
    pub b1_max: f64,
    pub b0_min: f64,
    pub b0_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub d_bar: f64,
}

impl Components {
    fn m(&self) -> usize {
        self.stats.len()
    }

    fn scale(&self, x: usize) -> f64 {
        self.m() as f64 * self.stats[x].counts.n() as f64 / self.n as f64
    }

    fn scaled_mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.m()).map(|x| self.stats[x].counts.n() as f64 * f(x)).collect();
        pairwise_sum(&terms) / self.n as f64
    }

    pub fn moments(&self) -> SampleMoments {
        SampleMoments {
            b1_min: self.scaled_mean(|x| self.b[x][0]),
            b1_max: self.scaled_mean(|x| self.b[x][1]),
            b0_min: self.scaled_mean(|x| self.b[x][2]),
            b0_max: self.scaled_mean(|x| self.b[x][3]),
            c_min: self.scaled_mean(|x| self.c[x][0]),
            c_max: self.scaled_mean(|x| self.c[x][1]),
            d_bar: self.n_treated as f64 / self.n as f64,
        }
    }

    /// Bounds for one target from precomputed components.
    pub fn bounds(&self, target: Target) -> Result<BoundsResult> {
        let m = self.m();
        let (per_lower, per_upper): (Vec<f64>, Vec<f64>) = match target {
            Target::Y0 => (0..m).map(|x| (self.scale(x) * self.b[x][2], self.scale(x) * self.b[x][3])).unzip(),
            Target::Y1 => (0..m).map(|x| (self.scale(x) * self.b[x][0], self.scale(x) * self.b[x][1])).unzip(),
            Target::Ate => (0..m)
                .map(|x| {
                    let s = self.scale(x);
                    (s * (self.b[x][0] - self.b[x][3]), s * (self.b[x][1] - self.b[x][2]))
                })
                .unzip(),
            Target::Att => {
                if self.n_treated == 0 {
                    return Err(Error::AttUndefined);
                }
                let mo = self.moments();
                let lower = att_influence_terms(self, 1, mo.c_max);
                let upper = att_influence_terms(self, 0, mo.c_min);
                return Ok(BoundsResult {
                    target,
                    lower: mo.c_max / mo.d_bar,
                    upper: mo.c_min / mo.d_bar,
                    per_cluster_lower: lower,
                    per_cluster_upper: upper,
                    m,
                });
            }
        };
        Ok(BoundsResult {
            target,
            lower: pairwise_sum(&per_lower) / m as f64,
            upper: pairwise_sum(&per_upper) / m as f64,
            per_cluster_lower: per_lower,
            per_cluster_upper: per_upper,
            m,
        })
    }
}

/// Delta-method terms for the ATT ratio:
/// `m n(x) C_x(a) / sum D - m n n1(x) Cbar(a) / (sum D)^2`.
/// `slot` selects `C_x(a_min)` (0) or `C_x(a_max)` (1).
fn att_influence_terms(comp: &Components, slot: usize, c_bar: f64) -> Vec<f64> {
    let m = comp.m() as f64;
    let sum_d = comp.n_treated as f64;
    let n = comp.n as f64;
    comp.stats
        .iter()
        .zip(&comp.c)
        .map(|(s, c)| {
            m * s.counts.n() as f64 * c[slot] / sum_d - m * n * s.counts.n1() as f64 * c_bar / (sum_d * sum_d)
        })
        .collect()
}

/// Aggregate bounds for one target plus the per-cluster terms that feed
/// variance estimation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsResult {
    pub target: Target,
    pub lower: f64,
    pub upper: f64,
    pub per_cluster_lower: Vec<f64>,
    pub per_cluster_upper: Vec<f64>,
    pub m: usize,
}

/// Sample bounds for `target`.
pub fn estimate_bounds(data: &Dataset, target: Target, p_star: &PStar, order: Order) -> Result<BoundsResult> {
    components(data, p_star, order)?.bounds(target)
}
