//! Finite-sample weights for one cluster.
//!
//! Inside a cluster of `n` observations of which `n1` are treated, the
//! weights `w1^`, `w0^` and `v^` are unbiased for the population weights
//! `w^(q)(p, p*)`, `w^(q)(1 - p, 1 - p*)` and `p w~^(q)(p, p*)` when the
//! treatment indicators are i.i.d. Bernoulli(`p`), with `q = min(Q, n)`.
//! They are defined by averaging products of `(p* - D_i) / p*` over all
//! `q`-subsets of the cluster; because the average is exchangeable it
//! collapses to a polynomial in `(p* - 1) / p*` whose coefficients are
//! hypergeometric probabilities, see [`omega`].

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::popweights::{Order, RefPropensity};

/// Counts for one cluster: size `n` and number treated `n1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClusterCounts {
    n: usize,
    n1: usize,
}

impl ClusterCounts {
    pub fn new(n: usize, n1: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("cluster must contain at least one observation".into()));
        }
        if n1 > n {
            return Err(Error::InvalidInput(format!("n1 = {n1} exceeds n = {n}")));
        }
        Ok(Self { n, n1 })
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn n1(self) -> usize {
        self.n1
    }

    pub fn n0(self) -> usize {
        self.n - self.n1
    }
}

/// The three sample weights of one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTriple {
    pub w0: f64,
    pub w1: f64,
    pub v: f64,
}

/// `C(a, b)` as a double via the multiplicative formula; zero when `b > a`.
fn binomial(a: usize, b: usize) -> f64 {
    if b > a {
        return 0.0;
    }
    let b = b.min(a - b);
    let mut c = 1.0;
    for i in 1..=b {
        c = c * (a - b + i) as f64 / i as f64;
    }
    c
}

/// Hypergeometric probability of `k` successes in `draws` draws without
/// replacement from `pop` items of which `succ` are successes. Built from
/// ratio factors that are each at most one.
fn hypergeometric(pop: usize, succ: usize, draws: usize, k: usize) -> f64 {
    if k > draws || k > succ || draws - k > pop - succ || draws > pop {
        return 0.0;
    }
    let mut prob = binomial(draws, k);
    for i in 0..k {
        prob *= (succ - i) as f64 / (pop - i) as f64;
    }
    let fail = pop - succ;
    for j in 0..draws - k {
        prob *= (fail - j) as f64 / (pop - k - j) as f64;
    }
    prob
}

/// Combinatorial coefficient `omega_{k, m, n, Q}` with `q = min(Q, n)`:
///
/// * even `q`: `C(n, q)^-1 C(m, k) C(n - m, q - k)`
/// * odd `q`: `(n - m)/n C(n - 1, q - 1)^-1 C(m, k) C(n - 1 - m, q - 1 - k)`
///
/// `m` is `n1` for `w1^` and `n0` for `w0^`/`v^`. Out-of-range binomials are zero.
pub fn omega(k: usize, m: usize, n: usize, order: Order) -> f64 {
    assert!(n >= 1 && m <= n, "need 0 <= m <= n and n >= 1");
    let q = order.effective(n);
    if q % 2 == 0 {
        hypergeometric(n, m, q, k)
    } else {
        let rest = n - m;
        if rest == 0 {
            return 0.0;
        }
        rest as f64 / n as f64 * hypergeometric(n - 1, m, q - 1, k)
    }
}

/// `sum_k omega_{k, m, n, Q} * ratio^k` over `k = 0..=2 floor(q/2)`.
fn omega_series(m: usize, n: usize, order: Order, ratio: f64) -> f64 {
    let q = order.effective(n);
    if order == Order::Infinite {
        // q = n: a single surviving term at k = m.
        let lead = if q % 2 == 0 { 1.0 } else { (n - m) as f64 / n as f64 };
        return if lead == 0.0 { 0.0 } else { lead * ratio.powi(m as i32) };
    }
    let top = 2 * (q / 2);
    let mut acc = 0.0;
    for k in 0..=top.min(m) {
        let w = omega(k, m, n, order);
        if w != 0.0 {
            acc += w * ratio.powi(k as i32);
        }
    }
    acc
}

fn treated_ratio(p_star: RefPropensity) -> f64 {
    let ps = p_star.value();
    (ps - 1.0) / ps
}

fn control_ratio(p_star: RefPropensity) -> f64 {
    let ps = p_star.value();
    ps / (ps - 1.0)
}

/// `w1^ = 1 - sum_k omega_{k, n1, n, Q} ((p* - 1)/p*)^k`.
pub fn weight_hat_w1(c: ClusterCounts, p_star: RefPropensity, order: Order) -> f64 {
    1.0 - omega_series(c.n1, c.n, order, treated_ratio(p_star))
}

/// `w0^ = 1 - sum_k omega_{k, n0, n, Q} (p*/(p* - 1))^k`.
pub fn weight_hat_w0(c: ClusterCounts, p_star: RefPropensity, order: Order) -> f64 {
    1.0 - omega_series(c.n0(), c.n, order, control_ratio(p_star))
}

/// `v^ = n1/n - sum_k omega_{k, n0, n, Q} (p*/(p* - 1))^k`.
pub fn weight_hat_v(c: ClusterCounts, p_star: RefPropensity, order: Order) -> f64 {
    if c.n0() == 0 {
        return 0.0;
    }
    c.n1 as f64 / c.n as f64 - omega_series(c.n0(), c.n, order, control_ratio(p_star))
}

/// All three weights for a cluster.
pub fn weight_triple(c: ClusterCounts, p_star: RefPropensity, order: Order) -> WeightTriple {
    let t = WeightTriple {
        w0: weight_hat_w0(c, p_star, order),
        w1: weight_hat_w1(c, p_star, order),
        v: weight_hat_v(c, p_star, order),
    };
    debug_assert!(c.n1 > 0 || t.w1 == 0.0);
    debug_assert!(c.n0() > 0 || (t.w0 == 0.0 && t.v == 0.0));
    t
}

/// Whether an unbounded order makes a weight grow exponentially in this
/// cluster (`|ratio|^n_d` above `threshold`). Only possible for `Q = inf`
/// with `p* != 1/2`.
pub fn exponential_growth(c: ClusterCounts, p_star: RefPropensity, order: Order, threshold: f64) -> bool {
    if order != Order::Infinite {
        return false;
    }
    let g1 = treated_ratio(p_star).abs().powi(c.n1 as i32);
    let g0 = control_ratio(p_star).abs().powi(c.n0() as i32);
    g1 > threshold || g0 > threshold
}

/// Mean over all `size`-subsets of `factors` of the product of the chosen
/// factors, by literal subset enumeration.
fn subset_product_mean(factors: &[f64], size: usize) -> f64 {
    fn rec(factors: &[f64], start: usize, left: usize, prod: f64, sum: &mut f64, count: &mut f64) {
        if left == 0 {
            *sum += prod;
            *count += 1.0;
            return;
        }
        for i in start..=factors.len() - left {
            rec(factors, i + 1, left - 1, prod * factors[i], sum, count);
        }
    }
    if size > factors.len() {
        return 0.0;
    }
    let (mut sum, mut count) = (0.0, 0.0);
    rec(factors, 0, size, 1.0, &mut sum, &mut count);
    sum / count
}

/// `1 - w` for the arm whose indicator is `hits`, from the subset-averaging
/// definition: even `q` averages products over `q`-subsets; odd `q`
/// averages, over units `i` with `hits[i] = false`, the `(q-1)`-subset
/// average of the remaining units, then divides by `n`.
fn subset_average_complement(hits: &[bool], p_ref: f64, order: Order) -> f64 {
    let n = hits.len();
    let q = order.effective(n);
    let factors: Vec<f64> = hits.iter().map(|&h| (p_ref - if h { 1.0 } else { 0.0 }) / p_ref).collect();
    if q % 2 == 0 {
        subset_product_mean(&factors, q)
    } else {
        let mut acc = 0.0;
        for i in 0..n {
            if hits[i] {
                continue;
            }
            let others: Vec<f64> = factors.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &f)| f).collect();
            acc += subset_product_mean(&others, q - 1);
        }
        acc / n as f64
    }
}

/// The three weights computed directly from a treatment vector by averaging
/// over subsets, without the counting shortcut. Exponential cost; meant for
/// small clusters and cross-checks.
pub fn weights_by_subset_average(treated: &[bool], p_star: RefPropensity, order: Order) -> Result<WeightTriple> {
    let n = treated.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty treatment vector".into()));
    }
    let n1 = treated.iter().filter(|&&d| d).count();
    let controls: Vec<bool> = treated.iter().map(|&d| !d).collect();
    let s1 = subset_average_complement(treated, p_star.value(), order);
    let s0 = subset_average_complement(&controls, 1.0 - p_star.value(), order);
    Ok(WeightTriple { w0: 1.0 - s0, w1: 1.0 - s1, v: n1 as f64 / n as f64 - s0 })
}

/// Largest cluster the enumeration oracle accepts.
pub const ORACLE_MAX_N: usize = 20;

/// Elementary symmetric polynomial `e_size(factors)`, i.e. the sum over all
/// `size`-subsets of the product of their factors.
fn elementary_symmetric(factors: &[f64], size: usize) -> f64 {
    let mut e = vec![0.0; size + 1];
    e[0] = 1.0;
    for &f in factors {
        for j in (1..=size).rev() {
            e[j] += f * e[j - 1];
        }
    }
    e[size]
}

fn subset_sum_complement(hits: &[bool], p_ref: f64, order: Order) -> f64 {
    let n = hits.len();
    let q = order.effective(n);
    let factors: Vec<f64> = hits.iter().map(|&h| (p_ref - if h { 1.0 } else { 0.0 }) / p_ref).collect();
    if q % 2 == 0 {
        elementary_symmetric(&factors, q) / binomial(n, q)
    } else {
        let denom = binomial(n - 1, q - 1);
        let mut acc = 0.0;
        for i in (0..n).filter(|&i| !hits[i]) {
            let mut others = factors.clone();
            others.remove(i);
            acc += elementary_symmetric(&others, q - 1) / denom;
        }
        acc / n as f64
    }
}

/// Exact conditional expectations `(E w0^, E w1^, E v^)` for a cluster of
/// size `n` whose treatment indicators are i.i.d. Bernoulli(`p`),
/// enumerating all `2^n` treatment vectors and evaluating the
/// subset-sum definition on each one.
pub fn oracle_weights_by_enumeration(n: usize, p: f64, p_star: RefPropensity, order: Order) -> Result<(f64, f64, f64)> {
    if n == 0 || n > ORACLE_MAX_N {
        return Err(Error::InvalidInput(format!("enumeration oracle supports 1 <= n <= {ORACLE_MAX_N}, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("propensity {p} outside [0, 1]")));
    }
    let (mut e0, mut e1, mut ev) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    let mut treated = vec![false; n];
    for mask in 0u32..(1u32 << n) {
        let mut n1 = 0;
        for (i, t) in treated.iter_mut().enumerate() {
            *t = mask >> i & 1 == 1;
            n1 += *t as usize;
        }
        let prob = p.powi(n1 as i32) * (1.0 - p).powi((n - n1) as i32);
        if prob == 0.0 {
            continue;
        }
        let controls: Vec<bool> = treated.iter().map(|&d| !d).collect();
        let s1 = subset_sum_complement(&treated, p_star.value(), order);
        let s0 = subset_sum_complement(&controls, 1.0 - p_star.value(), order);
        e1.add(prob * (1.0 - s1));
        e0.add(prob * (1.0 - s0));
        ev.add(prob * (n1 as f64 / n as f64 - s0));
    }
    Ok((e0.value(), e1.value(), ev.value()))
}
