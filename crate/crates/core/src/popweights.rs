//! Population weight functions and exact expectations over discrete designs.
//!
//! For a reference propensity `p*` and an order `q >= 1`, the population
//! lower/upper bounds on `E[Y(d) | X = x]` are weighted averages of the
//! worst-case constant `a` and the true conditional mean, with weight
//! `w^(q)(p, p*)` for the treated arm and `w^(q)(1 - p, 1 - p*)` for the
//! control arm. ATT bounds mix the first-order contribution with the true
//! contribution through `w~^(q)(p, p*)`. All weights are at most one, which
//! is what makes the bounds valid; they equal one at `p = p*` for `q >= 2`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Lower clamp for reference propensities; the weights divide by `p*` and `1 - p*`.
pub const P_STAR_EPS: f64 = 1e-10;

/// A reference propensity score, kept inside `[eps, 1 - eps]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RefPropensity(f64);

impl RefPropensity {
    /// Builds a reference propensity from a value in `[0, 1]`, clamping it
    /// to `[1e-10, 1 - 1e-10]`.
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("reference propensity must lie in [0, 1], got {value}")));
        }
        Ok(Self(value.clamp(P_STAR_EPS, 1.0 - P_STAR_EPS)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - p*`, used for the control-arm weights.
    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for RefPropensity {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RefPropensity> for f64 {
    fn from(p: RefPropensity) -> f64 {
        p.0
    }
}

/// The pooling bandwidth `Q`: either a finite cap or unbounded, in which
/// case each cluster uses its full size as its order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Finite(u32),
    Infinite,
}

impl Order {
    pub fn finite(q: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("order Q must be at least 1".into()));
        }
        Ok(Order::Finite(q))
    }

    /// The order used in a cluster of `n` observations, `min(Q, n)`.
    pub fn effective(self, n: usize) -> usize {
        match self {
            Order::Finite(q) => (q as usize).min(n),
            Order::Infinite => n,
        }
    }
}

impl Default for Order {
    fn default() -> Self {
        Order::Finite(3)
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(q) => write!(f, "{q}"),
            Order::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(Order::Infinite);
        }
        let q: u32 = t.parse().map_err(|_| Error::InvalidInput(format!("cannot parse order {s:?}")))?;
        Order::finite(q)
    }
}

impl Serialize for Order {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Finite(q) => s.serialize_u32(*q),
            Order::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(q) => Order::finite(q).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

/// Which end of a bound: lower bounds use `a_min` for `E Y(d)` and `a_max` for ATT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

fn is_odd(q: u32) -> bool {
    q % 2 == 1
}

/// `w^(q)(p, p*)`, the weight on the treated-arm conditional mean.
pub fn weight_w(q: u32, p: f64, p_star: RefPropensity) -> f64 {
    assert!(q >= 1, "order must be at least 1");
    let ps = p_star.value();
    let r = (ps - p) / ps;
    if is_odd(q) {
        1.0 - (1.0 - p) * r.powi(q as i32 - 1)
    } else {
        1.0 - r.powi(q as i32)
    }
}

/// `w~^(q)(p, p*)`, the weight on the true ATT contribution.
///
/// For even `q` the weight has a `1/p` factor and is undefined at `p = 0`;
/// use [`weight_pw_tilde`] when the product `p * w~` is what is needed.
pub fn weight_w_tilde(q: u32, p: f64, p_star: RefPropensity) -> Result<f64> {
    assert!(q >= 1, "order must be at least 1");
    let ps = p_star.value();
    let r = (p - ps) / (1.0 - ps);
    if is_odd(q) {
        Ok(1.0 - r.powi(q as i32 - 1))
    } else if p == 0.0 {
        Err(Error::Domain(format!("w~ of even order {q} is undefined at p = 0")))
    } else {
        Ok(1.0 - r.powi(q as i32) / p)
    }
}

/// `p * w~^(q)(p, p*)`, a polynomial in `p` that stays finite at `p = 0`.
pub fn weight_pw_tilde(q: u32, p: f64, p_star: RefPropensity) -> f64 {
    assert!(q >= 1, "order must be at least 1");
    let ps = p_star.value();
    let r = (p - ps) / (1.0 - ps);
    if is_odd(q) {
        p * (1.0 - r.powi(q as i32 - 1))
    } else {
        p - r.powi(q as i32)
    }
}

/// Weight for arm `d`: `w(p, p*)` for treated, `w(1 - p, 1 - p*)` for control.
pub fn arm_weight(q: u32, arm: Arm, p: f64, p_star: RefPropensity) -> f64 {
    match arm {
        Arm::Treated => weight_w(q, p, p_star),
        Arm::Control => weight_w(q, 1.0 - p, p_star.complement()),
    }
}

/// Coefficients `(lambda0, lambda1)` of the binding second-order bound,
/// `lambda0 * p + lambda1 * p^2 <= 1` on `[0, 1]` with equality at `p = p*`.
pub fn second_order_coefficients(p_star: RefPropensity) -> (f64, f64) {
    let ps = p_star.value();
    (2.0 / ps, -1.0 / (ps * ps))
}

/// One support point of a discrete design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPoint {
    pub mass: f64,
    /// Propensity score `p(x)`, anywhere in `[0, 1]`.
    pub p: f64,
    /// `E[Y(0) | x]`.
    pub mu0: f64,
    /// `E[Y(1) | x]`.
    pub mu1: f64,
}

/// A finite-support population, used to evaluate bounds by exact enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDgp {
    points: Vec<SupportPoint>,
    a_min: f64,
    a_max: f64,
}

impl DiscreteDgp {
    pub fn new(points: Vec<SupportPoint>, a_min: f64, a_max: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("design needs at least one support point".into()));
        }
        if !(a_min <= a_max) {
            return Err(Error::InvalidInput("a_min must not exceed a_max".into()));
        }
        let total: f64 = points.iter().map(|s| s.mass).sum();
        if (total - 1.0).abs() > 1e-9 || points.iter().any(|s| s.mass < 0.0) {
            return Err(Error::InvalidInput(format!(
                "support masses must be non-negative and sum to 1 (sum = {total})"
            )));
        }
        for s in &points {
            if !(0.0..=1.0).contains(&s.p) {
                return Err(Error::InvalidInput(format!("propensity {} outside [0, 1]", s.p)));
            }
            for mu in [s.mu0, s.mu1] {
                if mu < a_min || mu > a_max {
                    return Err(Error::InvalidInput(format!("conditional mean {mu} outside [{a_min}, {a_max}]")));
                }
            }
        }
        Ok(Self { points, a_min, a_max })
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    /// `E(D)`.
    pub fn prob_treated(&self) -> f64 {
        self.points.iter().map(|s| s.mass * s.p).sum()
    }

    /// `E Y(d)`.
    pub fn mean_outcome(&self, arm: Arm) -> f64 {
        self.points.iter().map(|s| s.mass * if arm == Arm::Treated { s.mu1 } else { s.mu0 }).sum()
    }

    /// Conditional average treatment effect `tau(x)` at support index `i`.
    pub fn tau(&self, i: usize) -> f64 {
        self.points[i].mu1 - self.points[i].mu0
    }

    /// Contribution `pi(x)` of support index `i` to ATT (not the conditional ATT).
    pub fn pi(&self, i: usize) -> Result<f64> {
        let ed = self.prob_treated();
        if ed <= 0.0 {
            return Err(Error::Domain("E(D) = 0, ATT undefined".into()));
        }
        Ok(self.points[i].p * self.tau(i) / ed)
    }

    pub fn ate(&self) -> f64 {
        self.mean_outcome(Arm::Treated) - self.mean_outcome(Arm::Control)
    }

    pub fn att(&self) -> Result<f64> {
        let ed = self.prob_treated();
        if ed <= 0.0 {
            return Err(Error::Domain("E(D) = 0, ATT undefined".into()));
        }
        Ok(self.points.iter().map(|s| s.mass * s.p * (s.mu1 - s.mu0)).sum::<f64>() / ed)
    }

    fn a_for_y(&self, side: Side) -> f64 {
        match side {
            Side::Lower => self.a_min,
            Side::Upper => self.a_max,
        }
    }

    fn a_for_att(&self, side: Side) -> f64 {
        match side {
            Side::Lower => self.a_max,
            Side::Upper => self.a_min,
        }
    }
}

/// Exact `E[B^(q)(d, a)]` over the design, with `a = a_min` for the lower
/// side and `a_max` for the upper side. `p_star(i)` gives the reference
/// propensity at support index `i`.
pub fn population_bound_y<F>(dgp: &DiscreteDgp, arm: Arm, q: u32, p_star: F, side: Side) -> f64
where
    F: Fn(usize) -> RefPropensity,
{
    let a = dgp.a_for_y(side);
    dgp.points
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mu = if arm == Arm::Treated { s.mu1 } else { s.mu0 };
            s.mass * (a + arm_weight(q, arm, s.p, p_star(i)) * (mu - a))
        })
        .sum()
}

/// Exact `E[C^(q)(a)] / E(D)`, with `a = a_max` for the lower side and
/// `a_min` for the upper side.
pub fn population_bound_att<F>(dgp: &DiscreteDgp, q: u32, p_star: F, side: Side) -> Result<f64>
where
    F: Fn(usize) -> RefPropensity,
{
    let ed = dgp.prob_treated();
    if ed <= 0.0 {
        return Err(Error::Domain("E(D) = 0, ATT undefined".into()));
    }
    let a = dgp.a_for_att(side);
    let num: f64 = dgp
        .points
        .iter()
        .enumerate()
        .map(|(i, s)| s.mass * (s.p * (s.mu1 - a) - weight_pw_tilde(q, s.p, p_star(i)) * (s.mu0 - a)))
        .sum();
    Ok(num / ed)
}

/// Exact ATE bounds `(E[B(1, a_min) - B(0, a_max)], E[B(1, a_max) - B(0, a_min)])`.
pub fn population_bounds_ate<F>(dgp: &DiscreteDgp, q: u32, p_star: F) -> (f64, f64)
where
    F: Fn(usize) -> RefPropensity + Copy,
{
    let lower = population_bound_y(dgp, Arm::Treated, q, p_star, Side::Lower)
        - population_bound_y(dgp, Arm::Control, q, p_star, Side::Upper);
    let upper = population_bound_y(dgp, Arm::Treated, q, p_star, Side::Upper)
        - population_bound_y(dgp, Arm::Control, q, p_star, Side::Lower);
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(v: f64) -> RefPropensity {
        RefPropensity::new(v).unwrap()
    }

    #[test]
    fn w_examples() {
        assert_eq!(weight_w(1, 0.4, ps(0.9)), 0.4);
        assert_eq!(weight_w(2, 0.25, ps(0.25)), 1.0);
        assert_eq!(weight_w(2, 0.5, ps(0.25)), 0.0);
        assert_eq!(weight_w(3, 0.0, ps(0.4)), 0.0);
    }

    #[test]
    fn w_tilde_examples() {
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(weight_w_tilde(1, p, ps(0.7)).unwrap(), 0.0);
        }
        assert_eq!(weight_w_tilde(2, 0.5, ps(0.5)).unwrap(), 1.0);
        assert_eq!(weight_w_tilde(2, 1.0, ps(0.5)).unwrap(), 0.0);
        assert!(matches!(weight_w_tilde(2, 0.0, ps(0.5)), Err(Error::Domain(_))));
        assert_eq!(weight_w_tilde(3, 0.0, ps(0.5)).unwrap(), 0.0);
        assert!((weight_w_tilde(3, 0.0, ps(1.0 / 3.0)).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pw_tilde_matches_product() {
        for q in 1..=6 {
            for i in 1..=10 {
                let p = i as f64 / 10.0;
                let direct = p * weight_w_tilde(q, p, ps(0.35)).unwrap();
                assert!((weight_pw_tilde(q, p, ps(0.35)) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn second_order_coefficient_examples() {
        assert_eq!(second_order_coefficients(ps(1.0)).0, 2.0 / (1.0 - P_STAR_EPS));
        let (l0, l1) = second_order_coefficients(ps(1.0));
        assert!((l0 - 2.0).abs() < 1e-9 && (l1 + 1.0).abs() < 1e-9);
        assert_eq!(second_order_coefficients(ps(0.5)), (4.0, -4.0));
        let (l0, l1) = second_order_coefficients(ps(0.25));
        assert_eq!(l0 * 0.25 + l1 * 0.25 * 0.25, 1.0);
    }

    #[test]
    fn second_order_coefficients_admissible() {
        for k in 1..10 {
            let p_star = ps(k as f64 / 10.0);
            let (l0, l1) = second_order_coefficients(p_star);
            for i in 0..=1000 {
                let p = i as f64 / 1000.0;
                assert!(l0 * p + l1 * p * p <= 1.0 + 1e-12);
            }
            // The second-order weight is exactly this polynomial.
            let p = 0.37;
            assert!((weight_w(2, p, p_star) - (l0 * p + l1 * p * p)).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_never_exceed_one() {
        for q in 1..=8 {
            for k in 1..=9 {
                let p_star = ps(k as f64 / 10.0);
                for i in 0..=1000 {
                    let p = i as f64 / 1000.0;
                    assert!(weight_w(q, p, p_star) <= 1.0);
                    if p > 0.0 {
                        assert!(weight_w_tilde(q, p, p_star).unwrap() <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn weights_bind_at_reference() {
        for q in 2..=9 {
            for k in 1..=9 {
                let p_star = ps(k as f64 / 10.0);
                let p = p_star.value();
                assert!((weight_w(q, p, p_star) - 1.0).abs() < 1e-12);
                assert!((weight_w_tilde(q, p, p_star).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn w_vanishes_at_zero() {
        for q in 1..=9 {
            for k in 1..=9 {
                assert_eq!(weight_w(q, 0.0, ps(k as f64 / 10.0)), 0.0);
            }
        }
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, k: u32, h: f64) -> f64 {
        // sum_j (-1)^j C(k, j) f(x + (k/2 - j) h) / h^k
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * f(x + (k as f64 / 2.0 - j as f64) * h);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        acc / h.powi(k as i32)
    }

    #[test]
    fn even_order_weights_are_flat_at_reference() {
        let h = 1e-3;
        for q in [2u32, 4, 6] {
            for p_star in [0.4, 0.5, 0.6] {
                let r = ps(p_star);
                for k in 1..q.min(4) {
                    let d = central_difference(|p| weight_w(q, p, r), p_star, k, h);
                    assert!(d.abs() < 0.05, "q={q} p*={p_star} k={k} d={d}");
                }
            }
        }
        // Control: odd q = 3 has a non-vanishing second derivative,
        // -2 (1 - p*) / p*^2 = -7.5 at p* = 0.4.
        let d2 = central_difference(|p| weight_w(3, p, ps(0.4)), 0.4, 2, h);
        assert!((d2 + 7.5).abs() < 1e-3);
    }

    fn two_point() -> DiscreteDgp {
        DiscreteDgp::new(
            vec![
                SupportPoint { mass: 0.3, p: 0.2, mu0: 0.1, mu1: 0.9 },
                SupportPoint { mass: 0.7, p: 0.65, mu0: 0.4, mu1: 0.3 },
            ],
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn bounds_bind_when_reference_is_correct() {
        let dgp = two_point();
        let pstar = |i: usize| ps(dgp.points()[i].p);
        for q in 2..=6 {
            for side in [Side::Lower, Side::Upper] {
                for arm in [Arm::Control, Arm::Treated] {
                    let b = population_bound_y(&dgp, arm, q, pstar, side);
                    assert!((b - dgp.mean_outcome(arm)).abs() < 1e-12);
                }
                let att = population_bound_att(&dgp, q, pstar, side).unwrap();
                assert!((att - dgp.att().unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn manski_worst_case_without_treated() {
        let dgp = DiscreteDgp::new(vec![SupportPoint { mass: 1.0, p: 0.0, mu0: 0.5, mu1: 0.8 }], -1.0, 2.0).unwrap();
        let b = population_bound_y(&dgp, Arm::Treated, 1, |_| ps(0.5), Side::Lower);
        assert_eq!(b, -1.0);
    }

    // Independent transcription of the explicit third-order polynomials,
    // enumerating D in {0, 1} with probabilities (1 - p, p).
    fn third_order_oracle(dgp: &DiscreteDgp, p_star: f64) -> [f64; 6] {
        let mut out = [0.0; 6];
        let ed: f64 = dgp.points().iter().map(|s| s.mass * s.p).sum();
        for s in dgp.points() {
            let p = s.p;
            let c0 = 1.0 + p * (1.0 + p - 2.0 * p_star) / (1.0 - p_star).powi(2);
            let c1 = 1.0 + (1.0 - p) * (2.0 * p_star - p) / (p_star * p_star);
            let cc = p * (1.0 + p - 2.0 * p_star) / (1.0 - p_star).powi(2);
            for (d, prob) in [(0.0, 1.0 - p), (1.0, p)] {
                let y = if d == 1.0 { s.mu1 } else { s.mu0 };
                for (slot, a) in [(0usize, dgp.a_min()), (1, dgp.a_max())] {
                    out[slot] += s.mass * prob * (a + c0 * (1.0 - d) * (y - a));
                    out[2 + slot] += s.mass * prob * (a + c1 * d * (y - a));
                }
                for (slot, a) in [(4usize, dgp.a_max()), (5, dgp.a_min())] {
                    out[slot] += s.mass * prob * (d * (y - a) - cc * (1.0 - d) * (y - a)) / ed;
                }
            }
        }
        out
    }

    #[test]
    fn third_order_matches_explicit_polynomials() {
        let dgp = two_point();
        for p_star in [0.3, 0.5, 0.8] {
            let r = ps(p_star);
            let o = third_order_oracle(&dgp, p_star);
            let got = [
                population_bound_y(&dgp, Arm::Control, 3, |_| r, Side::Lower),
                population_bound_y(&dgp, Arm::Control, 3, |_| r, Side::Upper),
                population_bound_y(&dgp, Arm::Treated, 3, |_| r, Side::Lower),
                population_bound_y(&dgp, Arm::Treated, 3, |_| r, Side::Upper),
                population_bound_att(&dgp, 3, |_| r, Side::Lower).unwrap(),
                population_bound_att(&dgp, 3, |_| r, Side::Upper).unwrap(),
            ];
            for (g, e) in got.iter().zip(o) {
                assert!((g - e).abs() < 1e-12, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn first_order_att_is_manski() {
        let dgp = two_point();
        let ed = dgp.prob_treated();
        let manski_lower: f64 = dgp.points().iter().map(|s| s.mass * s.p * (s.mu1 - 1.0)).sum::<f64>() / ed;
        let got = population_bound_att(&dgp, 1, |_| ps(0.5), Side::Lower).unwrap();
        assert!((got - manski_lower).abs() < 1e-14);
    }

    #[test]
    fn att_undefined_without_treated() {
        let dgp = DiscreteDgp::new(vec![SupportPoint { mass: 1.0, p: 0.0, mu0: 0.5, mu1: 0.8 }], 0.0, 1.0).unwrap();
        assert!(population_bound_att(&dgp, 2, |_| ps(0.5), Side::Lower).is_err());
        assert!(dgp.att().is_err());
    }

    #[test]
    fn order_parsing() {
        assert_eq!("inf".parse::<Order>().unwrap(), Order::Infinite);
        assert_eq!("4".parse::<Order>().unwrap(), Order::Finite(4));
        assert!("0".parse::<Order>().is_err());
        assert_eq!(Order::Finite(3).effective(2), 2);
        assert_eq!(Order::Infinite.effective(7), 7);
        let json = serde_json::to_string(&[Order::Finite(2), Order::Infinite]).unwrap();
        assert_eq!(json, r#"[2,"inf"]"#);
        let back: Vec<Order> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Order::Finite(2), Order::Infinite]);
    }

    #[test]
    fn ref_propensity_clamps() {
        assert_eq!(ps(0.0).value(), P_STAR_EPS);
        assert_eq!(ps(1.0).value(), 1.0 - P_STAR_EPS);
        assert!(RefPropensity::new(1.5).is_err());
        assert!(RefPropensity::new(f64::NAN).is_err());
    }
}
