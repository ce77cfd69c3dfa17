//! Confidence intervals from the per-cluster bound terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::BoundsResult;
use crate::normal;
use crate::numeric::pairwise_sum;

/// Closed interval `[lower, upper]`; empty when `lower > upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Length, or `None` for an empty interval.
    pub fn length(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.upper - self.lower)
    }

    /// Whether `self` contains all of `other` (vacuous for empty `other`).
    pub fn covers(&self, other: &Interval) -> bool {
        other.is_empty() || (self.lower <= other.lower && other.upper <= self.upper)
    }
}

/// `m^-1 sum M^2 - (m^-1 sum M)^2`, evaluated in the two-pass form
/// `m^-1 sum (M - Mbar)^2`.
pub fn svar(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("variance of an empty list".into()));
    }
    let m = values.len() as f64;
    let mean = pairwise_sum(values) / m;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok(pairwise_sum(&sq) / m)
}

fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(normal::quantile(1.0 - alpha / 2.0))
}

/// `[L - sigma_L z / sqrt(m), U + sigma_U z / sqrt(m)]` with `z = Phi^-1(1 - alpha/2)`.
pub fn ci_basic(lower: f64, upper: f64, sigma_l: f64, sigma_u: f64, m: usize, alpha: f64) -> Result<Interval> {
    let z = critical_value(alpha)?;
    let root_m = (m as f64).sqrt();
    Ok(Interval::new(lower - sigma_l / root_m * z, upper + sigma_u / root_m * z))
}

/// Interval centred at `theta* = (sigma_U L + sigma_L U) / (sigma_L + sigma_U)`
/// with scale `sigma* = 2 sigma_L sigma_U / (sigma_L + sigma_U)`; the
/// midpoint with zero scale when both sigmas vanish.
pub fn ci_star(lower: f64, upper: f64, sigma_l: f64, sigma_u: f64, m: usize, alpha: f64) -> Result<Interval> {
    let z = critical_value(alpha)?;
    let total = sigma_l + sigma_u;
    let (theta, sigma) = if total > 0.0 {
        ((sigma_u * lower + sigma_l * upper) / total, 2.0 * sigma_l * sigma_u / total)
    } else {
        (0.5 * (lower + upper), 0.0)
    };
    let half = sigma / (m as f64).sqrt() * z;
    Ok(Interval::new(theta - half, theta + half))
}

/// Smallest interval containing both; `star` alone when `basic` is empty.
pub fn ci_union(basic: Interval, star: Interval) -> Interval {
    let out =
        if basic.is_empty() { star } else { Interval::new(basic.lower.min(star.lower), basic.upper.max(star.upper)) };
    debug_assert!(!out.is_empty());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub alpha: f64,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub ci_basic: Interval,
    pub ci_star: Interval,
    pub ci_union: Interval,
    pub m: usize,
}

/// Confidence intervals for a bounds estimate.
pub fn confidence_report(bounds: &BoundsResult, alpha: f64) -> Result<ConfidenceReport> {
    let sigma_l = svar(&bounds.per_cluster_lower)?.sqrt();
    let sigma_u = svar(&bounds.per_cluster_upper)?.sqrt();
    let basic = ci_basic(bounds.lower, bounds.upper, sigma_l, sigma_u, bounds.m, alpha)?;
    let star = ci_star(bounds.lower, bounds.upper, sigma_l, sigma_u, bounds.m, alpha)?;
    Ok(ConfidenceReport {
        alpha,
        sigma_lower: sigma_l,
        sigma_upper: sigma_u,
        ci_basic: basic,
        ci_star: star,
        ci_union: ci_union(basic, star),
        m: bounds.m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Z975: f64 = 1.959_963_984_540_054;

    #[test]
    fn svar_examples() {
        assert_eq!(svar(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(svar(&[0.0, 2.0]).unwrap(), 1.0);
        assert!((svar(&[1.0, 2.0, 3.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(svar(&[]).is_err());
    }

    #[test]
    fn basic_examples() {
        assert_eq!(ci_basic(0.1, 0.4, 0.0, 0.0, 9, 0.05).unwrap(), Interval::new(0.1, 0.4));
        let ci = ci_basic(0.0, 0.0, 1.0, 1.0, 100, 0.05).unwrap();
        assert!((ci.lower + Z975 / 10.0).abs() < 1e-14 && (ci.upper - Z975 / 10.0).abs() < 1e-14);
        assert!(ci_basic(0.1, 0.0, 0.0, 0.0, 50, 0.05).unwrap().is_empty());
        assert!(ci_basic(0.0, 1.0, 1.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn star_examples() {
        let ci = ci_star(0.2, 0.6, 0.5, 0.5, 25, 0.05).unwrap();
        assert!((ci.lower - (0.4 - 0.1 * Z975)).abs() < 1e-14);
        assert!((ci.upper - (0.4 + 0.1 * Z975)).abs() < 1e-14);
        let ci = ci_star(0.2, 0.6, 0.0, 0.7, 25, 0.05).unwrap();
        assert!((ci.lower - 0.2).abs() < 1e-15 && ci.lower == ci.upper);
        let ci = ci_star(0.2, 0.1, 1.0, 1.0, 100, 0.05).unwrap();
        assert!((ci.lower - (0.15 - Z975 / 10.0)).abs() < 1e-14);
        assert!((ci.upper - (0.15 + Z975 / 10.0)).abs() < 1e-14);
        assert_eq!(ci_star(0.2, 0.6, 0.0, 0.0, 25, 0.05).unwrap(), Interval::new(0.4, 0.4));
    }

    #[test]
    fn union_examples() {
        let star = Interval::new(-0.2, 0.3);
        assert_eq!(ci_union(Interval::new(1.0, 0.0), star), star);
        assert_eq!(ci_union(Interval::new(-0.1, 0.1), star), star);
        assert_eq!(ci_union(Interval::new(-1.0, 0.0), star), Interval::new(-1.0, 0.3));
    }

    proptest! {
        #[test]
        fn union_never_empty(
            l in -5.0f64..5.0, u in -5.0f64..5.0,
            sl in 0.0f64..3.0, su in 0.0f64..3.0,
            m in 1usize..10_000, alpha in 0.001f64..0.999,
        ) {
            let b = ci_basic(l, u, sl, su, m, alpha).unwrap();
            let s = ci_star(l, u, sl, su, m, alpha).unwrap();
            let un = ci_union(b, s);
            prop_assert!(!un.is_empty());
            prop_assert!(un.covers(&b) && un.covers(&s));
        }

        #[test]
        fn alpha_monotone(
            l in -5.0f64..5.0, u in -5.0f64..5.0,
            sl in 0.0f64..3.0, su in 0.0f64..3.0,
            m in 1usize..1000, a1 in 0.001f64..0.999, a2 in 0.001f64..0.999,
        ) {
            let (small, big) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let wide = ci_basic(l, u, sl, su, m, small).unwrap();
            let narrow = ci_basic(l, u, sl, su, m, big).unwrap();
            prop_assert!(wide.covers(&narrow));
            let wide = ci_star(l, u, sl, su, m, small).unwrap();
            let narrow = ci_star(l, u, sl, su, m, big).unwrap();
            prop_assert!(wide.covers(&narrow));
        }
    }
}
