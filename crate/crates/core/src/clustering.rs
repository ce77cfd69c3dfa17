//! Covariate clustering: studentization and complete-linkage agglomeration.
//!
//! Clusters are identified during agglomeration by the smallest row index
//! they contain. Ties between equal linkage distances are resolved by
//! merging the lexicographically smallest `(id, id)` pair, which makes the
//! merge sequence a deterministic function of the input order.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    names: Option<Vec<String>>,
}

impl CovariateMatrix {
    /// Build from row-major values. Every value must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("covariate matrix needs at least one row and one column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data_at(pos / cols + 1, "non-finite covariate value"));
        }
        Ok(Self { rows, cols, data, names: None })
    }

    /// Single-covariate matrix.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::InvalidInput("one name per column required".into()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Center each column and scale it to unit sample standard deviation
/// (divisor `n - 1`). Columns without variation become all zeros.
pub fn studentize(x: &CovariateMatrix) -> CovariateMatrix {
    let mut out = x.clone();
    for j in 0..x.cols {
        let col = x.column(j);
        let mean = crate::numeric::mean(&col);
        let sd = crate::numeric::sample_sd(&col);
        for i in 0..x.rows {
            let v = if sd > 0.0 && sd.is_finite() { (col[i] - mean) / sd } else { 0.0 };
            out.data[i * x.cols + j] = v;
        }
    }
    out
}

/// Number of clusters giving about `l` observations per cluster:
/// `ceil(n / l)` clipped to `[1, n]`.
pub fn choose_m(n: usize, l: f64) -> Result<usize> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidInput(format!("cluster size L must be positive, got {l}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("cannot cluster an empty sample".into()));
    }
    let m = (n as f64 / l).ceil();
    Ok((m as usize).clamp(1, n))
}

/// One agglomeration step: clusters `a < b` (smallest member rows) were
/// joined at linkage distance `distance`, producing a cluster of `size`
/// rows that keeps id `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

/// Merge history of an agglomerative run over `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Labels for the partition into `m` clusters, numbered in order of
    /// their smallest row. Requires the history to reach `m` clusters.
    pub fn cut(&self, m: usize) -> Result<Vec<usize>> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidInput(format!("cannot cut {} rows into {m} clusters", self.n)));
        }
        let steps = self.n - m;
        if steps > self.merges.len() {
            return Err(Error::InvalidInput(format!("merge history stops at {} clusters", self.n - self.merges.len())));
        }
        let mut owner: Vec<usize> = (0..self.n).collect();
        for mg in &self.merges[..steps] {
            owner[mg.b] = mg.a;
        }
        // Ids are smallest rows, so following owners always moves to a
        // smaller index and a forward pass resolves every chain.
        for i in 0..self.n {
            owner[i] = owner[owner[i]];
        }
        Ok(relabel(&owner))
    }
}

/// Map arbitrary group keys to labels `0..m` in order of first appearance.
fn relabel(keys: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    keys.iter()
        .map(|&k| {
            let next = map.len();
            *map.entry(k).or_insert(next)
        })
        .collect()
}

/// Hard partition of the rows with per-cluster covariate means.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub m: usize,
}

impl ClusterAssignment {
    /// Assignment from labels already numbered `0..m`.
    pub fn from_labels(x: &CovariateMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(Error::InvalidInput("one label per row required".into()));
        }
        let m = labels.iter().max().map_or(0, |&l| l + 1);
        let mut sums = vec![vec![0.0; x.ncols()]; m];
        let mut counts = vec![0usize; m];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return Err(Error::InvalidInput("cluster labels must be contiguous from 0".into()));
        }
        let centroids =
            sums.into_iter().zip(&counts).map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect()).collect();
        Ok(Self { labels, centroids, m })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.m];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Group rows with identical covariate vectors, labels in order of first
/// appearance.
pub fn group_by_value(x: &CovariateMatrix) -> ClusterAssignment {
    let mut map: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let keys: Vec<usize> = (0..x.nrows())
        .map(|i| {
            let key: Vec<u64> = x.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
            let next = map.len();
            *map.entry(key).or_insert(next)
        })
        .collect();
    ClusterAssignment::from_labels(x, keys).expect("labels are contiguous by construction")
}

/// Condensed upper-triangular storage of pairwise values.
struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    fn offset(&self, k: usize) -> usize {
        k * self.n - k * (k + 1) / 2
    }

    fn idx(&self, k: usize, l: usize) -> usize {
        debug_assert!(k < l);
        self.offset(k) + (l - k - 1)
    }

    fn get(&self, a: usize, b: usize) -> f64 {
        let (k, l) = if a < b { (a, b) } else { (b, a) };
        self.data[self.idx(k, l)]
    }

    fn set(&mut self, a: usize, b: usize, v: f64) {
        let (k, l) = if a < b { (a, b) } else { (b, a) };
        let i = self.idx(k, l);
        self.data[i] = v;
    }

    fn squared_euclidean(x: &CovariateMatrix) -> Self {
        let n = x.nrows();
        let mut data = vec![0.0; n * n.saturating_sub(1) / 2];
        let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
        let mut rest = data.as_mut_slice();
        for k in 0..n {
            let (head, tail) = rest.split_at_mut(n - k - 1);
            rows.push((k, head));
            rest = tail;
        }
        let fill = |(k, row): (usize, &mut [f64])| {
            let xk = x.row(k);
            for (off, slot) in row.iter_mut().enumerate() {
                let xl = x.row(k + 1 + off);
                *slot = xk.iter().zip(xl).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            rows.into_par_iter().for_each(fill);
        }
        #[cfg(not(feature = "parallel"))]
        rows.into_iter().for_each(fill);
        Self { n, data }
    }
}

/// Complete-linkage agglomeration on Euclidean distance, stopped once
/// `stop_at` clusters remain (use 1 for the full tree).
pub fn complete_linkage(x: &CovariateMatrix, stop_at: usize) -> Result<Dendrogram> {
    let n = x.nrows();
    if stop_at == 0 || stop_at > n {
        return Err(Error::InvalidInput(format!("cluster count {stop_at} outside [1, {n}]")));
    }
    let mut dist = Condensed::squared_euclidean(x);
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    // Cached nearest neighbour of each cluster among active ids above it.
    let mut nn = vec![usize::MAX; n];
    let mut nnd = vec![f64::INFINITY; n];

    let refresh = |k: usize, dist: &Condensed, active: &[bool], nn: &mut [usize], nnd: &mut [f64]| {
        let mut best = (f64::INFINITY, usize::MAX);
        let base = dist.offset(k);
        for l in k + 1..n {
            if active[l] {
                let d = dist.data[base + l - k - 1];
                if d < best.0 {
                    best = (d, l);
                }
            }
        }
        nnd[k] = best.0;
        nn[k] = best.1;
    };

    for k in 0..n {
        refresh(k, &dist, &active, &mut nn, &mut nnd);
    }

    let mut merges = Vec::with_capacity(n - stop_at);
    let mut alive: Vec<usize> = (0..n).collect();
    for _ in 0..n - stop_at {
        let mut i = usize::MAX;
        let mut best = f64::INFINITY;
        for &k in &alive {
            if nn[k] != usize::MAX && nnd[k] < best {
                best = nnd[k];
                i = k;
            }
        }
        let j = nn[i];
        debug_assert!(i < j && active[j]);

        active[j] = false;
        alive.retain(|&k| k != j);
        for &l in &alive {
            if l != i {
                let merged = dist.get(i, l).max(dist.get(j, l));
                dist.set(i, l, merged);
            }
        }
        size[i] += size[j];
        merges.push(Merge { a: i, b: j, distance: best.sqrt(), size: size[i] });

        // Linkage distances only grow, so only caches pointing at the
        // merged pair can go stale.
        for &k in &alive {
            if k < j && (k == i || nn[k] == i || nn[k] == j) {
                refresh(k, &dist, &active, &mut nn, &mut nnd);
            }
        }
    }
    Ok(Dendrogram { n, merges })
}

/// Complete-linkage clustering of the rows of `x` into exactly `m` clusters.
pub fn complete_linkage_cluster(x: &CovariateMatrix, m: usize) -> Result<ClusterAssignment> {
    let tree = complete_linkage(x, m)?;
    ClusterAssignment::from_labels(x, tree.cut(m)?)
}
