//! Monte Carlo designs with a binary outcome and a scalar covariate.
//!
//! `X ~ Unif[-3, 3]` (optionally rounded to one decimal), `D ~ Bernoulli(p0(X))`,
//! latent outcomes `Y*_d = d + 1 - p0(X) + V_d` with independent standard
//! normal `V_d`, and `Y = 1{Y*_D > 0}`. Design A has `p0 = 1/2` everywhere;
//! design B has `p0 = 1` for `x <= -2`, `3/4` for `x >= 2` and `1/2` between.

mod study;

pub use study::{
    run_replication, run_study, OrderOutcome, RepOutcome, StudyResult, StudySpec, SummaryRow, Table1, Table2, Table2Row,
};

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            other => Err(Error::InvalidInput(format!("unknown design `{other}` (expected A or B)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Discrete,
}

impl FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(CovariateKind::Continuous),
            "discrete" => Ok(CovariateKind::Discrete),
            other => {
                Err(Error::InvalidInput(format!("unknown covariate kind `{other}` (expected continuous or discrete)")))
            }
        }
    }
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateKind::Continuous => "continuous",
            CovariateKind::Discrete => "discrete",
        })
    }
}

/// One simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: Variant,
    pub covariate: CovariateKind,
    pub n: usize,
    pub seed: u64,
}

impl Variant {
    /// True propensity score `p0(x)`.
    pub fn propensity(self, x: f64) -> f64 {
        match self {
            Variant::A => 0.5,
            Variant::B => {
                if x >= 2.0 {
                    0.75
                } else if x <= -2.0 {
                    1.0
                } else {
                    0.5
                }
            }
        }
    }
}

/// Treatment effect on the binary outcome at propensity `p0`:
/// `P(Y*_1 > 0) - P(Y*_0 > 0) = Phi(2 - p0) - Phi(1 - p0)`.
fn effect_at(p0: f64) -> f64 {
    normal::cdf(2.0 - p0) - normal::cdf(1.0 - p0)
}

/// Population ATT `E[p0(X) tau(X)] / E[p0(X)]` for a design.
pub fn population_att(variant: Variant, covariate: CovariateKind) -> f64 {
    // Masses of the regions x <= -2, |x| < 2, x >= 2.
    let masses = match covariate {
        CovariateKind::Continuous => [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
        // Support k/10, k = -30..=30; endpoints carry half the mass of interior points.
        CovariateKind::Discrete => [10.5 / 60.0, 39.0 / 60.0, 10.5 / 60.0],
    };
    let p0 = match variant {
        Variant::A => [0.5, 0.5, 0.5],
        Variant::B => [1.0, 0.5, 0.75],
    };
    let num: f64 = (0..3).map(|r| masses[r] * p0[r] * effect_at(p0[r])).sum();
    let den: f64 = (0..3).map(|r| masses[r] * p0[r]).sum();
    num / den
}

/// Generator for replication `rep` of a study seeded with `seed`: each
/// replication reads its own ChaCha stream.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Uniform draw on the open interval (0, 1) with 53 random bits.
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// One simulated sample, including the latent outcome signs.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub x: Vec<f64>,
    pub d: Vec<bool>,
    pub y: Vec<f64>,
    pub y1_positive: Vec<bool>,
    pub y0_positive: Vec<bool>,
}

/// Draw one sample from `spec` using `rng`. Per observation the stream is
/// consumed as: covariate, treatment, `V_0`, `V_1`.
pub fn draw_with(spec: &DgpSpec, rng: &mut impl RngCore) -> Result<Replication> {
    if spec.n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let n = spec.n;
    let mut rep = Replication {
        x: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        y1_positive: Vec::with_capacity(n),
        y0_positive: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let raw = -3.0 + 6.0 * open_uniform(rng);
        let x = match spec.covariate {
            CovariateKind::Continuous => raw,
            CovariateKind::Discrete => (10.0 * raw).round() / 10.0,
        };
        let p0 = spec.variant.propensity(x);
        let d = open_uniform(rng) < p0;
        let v0 = normal::quantile(open_uniform(rng));
        let v1 = normal::quantile(open_uniform(rng));
        let y1 = 2.0 - p0 + v1 > 0.0;
        let y0 = 1.0 - p0 + v0 > 0.0;
        rep.x.push(x);
        rep.d.push(d);
        rep.y.push(if d { y1 as u8 as f64 } else { y0 as u8 as f64 });
        rep.y1_positive.push(y1);
        rep.y0_positive.push(y0);
    }
    Ok(rep)
}

/// Replication `rep` of the study seeded by `spec.seed`.
pub fn draw_replication(spec: &DgpSpec, rep: u64) -> Result<Replication> {
    draw_with(spec, &mut replication_rng(spec.seed, rep))
}

fn treated_count(rep: &Replication) -> Result<f64> {
    let k = rep.d.iter().filter(|&&d| d).count();
    if k == 0 {
        return Err(Error::AttUndefined);
    }
    Ok(k as f64)
}

/// Infeasible estimator using both latent outcome signs of the treated.
pub fn oracle_att(rep: &Replication) -> Result<f64> {
    let k = treated_count(rep)?;
    let s: f64 = rep
        .d
        .iter()
        .zip(rep.y1_positive.iter().zip(&rep.y0_positive))
        .filter(|(&d, _)| d)
        .map(|(_, (&y1, &y0))| y1 as u8 as f64 - y0 as u8 as f64)
        .sum();
    Ok(s / k)
}

/// Weighting estimator with a constant reference propensity `p_star`:
/// `(sum D)^-1 sum {D - p*/(1 - p*) (1 - D)} Y`.
pub fn rps_att(rep: &Replication, p_star: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_star) {
        return Err(Error::Domain(format!("reference propensity {p_star} must lie in [0, 1)")));
    }
    let k = treated_count(rep)?;
    let odds = p_star / (1.0 - p_star);
    let s: f64 = rep.d.iter().zip(&rep.y).map(|(&d, &y)| if d { y } else { -odds * y }).sum();
    Ok(s / k)
}

/// ATT by imputing each treated outcome's counterfactual with the nearest
/// control on `x`, ties going to the lower row index.
pub fn nn_att(rep: &Replication) -> Result<f64> {
    let k = treated_count(rep)?;
    let mut controls: Vec<(f64, usize)> = (0..rep.x.len()).filter(|&i| !rep.d[i]).map(|i| (rep.x[i], i)).collect();
    if controls.is_empty() {
        return Err(Error::data("nearest-neighbour estimator needs at least one control"));
    }
    controls.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut s = 0.0;
    for i in (0..rep.x.len()).filter(|&i| rep.d[i]) {
        let xi = rep.x[i];
        let pos = controls.partition_point(|c| c.0 < xi);
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |cand: (f64, usize)| {
            let dist = (cand.0 - xi).abs();
            best = match best {
                Some((bd, bi)) if bd < dist || (bd == dist && bi < cand.1) => Some((bd, bi)),
                _ => Some((dist, cand.1)),
            };
        };
        if pos < controls.len() {
            consider(controls[pos]);
        }
        if pos > 0 {
            let xl = controls[pos - 1].0;
            // Lowest row index among controls sharing that covariate value.
            consider(controls[controls.partition_point(|c| c.0 < xl)]);
        }
        let (_, j) = best.expect("at least one control");
        s += rep.y[i] - rep.y[j];
    }
    Ok(s / k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variant: Variant, covariate: CovariateKind, n: usize, seed: u64) -> DgpSpec {
        DgpSpec { variant, covariate, n, seed }
    }

    fn rep_from(x: Vec<f64>, d: Vec<bool>, y: Vec<f64>) -> Replication {
        let n = x.len();
        Replication { x, d, y, y1_positive: vec![false; n], y0_positive: vec![false; n] }
    }

    #[test]
    fn population_values() {
        let a = population_att(Variant::A, CovariateKind::Continuous);
        assert!((a - (normal::cdf(1.5) - normal::cdf(0.5))).abs() < 1e-15);
        assert!((a - 0.2417).abs() < 5e-5);
        assert!((a - population_att(Variant::A, CovariateKind::Discrete)).abs() < 1e-15);
        assert!((population_att(Variant::B, CovariateKind::Continuous) - 0.2791).abs() < 5e-5);
        assert!((population_att(Variant::B, CovariateKind::Discrete) - 0.280_556).abs() < 1e-6);
    }

    /// Numerical integration of the continuous design B over x.
    #[test]
    fn population_b_by_quadrature() {
        let steps = 600_000;
        let h = 6.0 / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..steps {
            let x = -3.0 + (k as f64 + 0.5) * h;
            let p0 = Variant::B.propensity(x);
            num += p0 * effect_at(p0) * h;
            den += p0 * h;
        }
        assert!((num / den - population_att(Variant::B, CovariateKind::Continuous)).abs() < 1e-5);
    }

    #[test]
    fn draws_are_deterministic() {
        let s = spec(Variant::B, CovariateKind::Continuous, 200, 42);
        assert_eq!(draw_replication(&s, 3).unwrap(), draw_replication(&s, 3).unwrap());
        assert_ne!(draw_replication(&s, 3).unwrap().x, draw_replication(&s, 4).unwrap().x);
    }

    #[test]
    fn design_properties() {
        let a = draw_replication(&spec(Variant::A, CovariateKind::Continuous, 20_000, 1), 0).unwrap();
        let share = a.d.iter().filter(|&&d| d).count() as f64 / 20_000.0;
        assert!((share - 0.5).abs() < 0.02);
        assert!(a.x.iter().all(|x| (-3.0..=3.0).contains(x)));

        let b = draw_replication(&spec(Variant::B, CovariateKind::Continuous, 1000, 2), 0).unwrap();
        assert!(b.x.iter().zip(&b.d).all(|(&x, &d)| x > -2.0 || d));

        let disc = draw_replication(&spec(Variant::B, CovariateKind::Discrete, 1000, 3), 0).unwrap();
        assert!(disc.x.iter().all(|x| ((x * 10.0).round() / 10.0) == *x));
        for i in 0..1000 {
            let y = if disc.d[i] { disc.y1_positive[i] } else { disc.y0_positive[i] };
            assert_eq!(disc.y[i], y as u8 as f64);
        }
    }

    #[test]
    fn oracle_examples() {
        let mut r = rep_from(vec![0.0; 3], vec![true; 3], vec![1.0; 3]);
        r.y1_positive = vec![true; 3];
        assert_eq!(oracle_att(&r).unwrap(), 1.0);
        let none = rep_from(vec![0.0], vec![false], vec![1.0]);
        assert!(matches!(oracle_att(&none), Err(Error::AttUndefined)));
    }

    #[test]
    fn rps_example() {
        let r = rep_from(vec![0.0; 4], vec![true, true, false, false], vec![1.0, 0.0, 1.0, 1.0]);
        // (1 + 0 - 1 - 1) / 2 with unit odds.
        assert_eq!(rps_att(&r, 0.5).unwrap(), -0.5);
        // Odds 1/3 at p* = 0.25.
        assert!((rps_att(&r, 0.25).unwrap() - (1.0 - 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn nn_examples() {
        let r = rep_from(vec![0.0, 5.0, -1.0], vec![true, false, true], vec![1.0, 0.0, 1.0]);
        assert_eq!(nn_att(&r).unwrap(), 1.0);
        // Equidistant controls on both sides: lower row wins.
        let r = rep_from(vec![1.0, 0.0, 2.0, 0.0], vec![true, false, false, false], vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(nn_att(&r).unwrap(), 1.0);
        let r = rep_from(vec![1.0, 2.0, 0.0], vec![true, false, false], vec![1.0, 1.0, 0.0]);
        assert_eq!(nn_att(&r).unwrap(), 0.0);
        let only_treated = rep_from(vec![1.0], vec![true], vec![1.0]);
        assert!(nn_att(&only_treated).is_err());
    }

    #[test]
    fn nn_matches_brute_force() {
        let rep = draw_replication(&spec(Variant::B, CovariateKind::Discrete, 300, 9), 0).unwrap();
        let mut s = 0.0;
        let mut k = 0.0;
        for i in 0..300 {
            if !rep.d[i] {
                continue;
            }
            let mut best = (f64::INFINITY, 0);
            for j in 0..300 {
                if !rep.d[j] && (rep.x[j] - rep.x[i]).abs() < best.0 {
                    best = ((rep.x[j] - rep.x[i]).abs(), j);
                }
            }
            s += rep.y[i] - rep.y[best.1];
            k += 1.0;
        }
        assert!((nn_att(&rep).unwrap() - s / k).abs() < 1e-12);
    }
}
