//! Centralized sample-quantile mathematics.
//!
//! The sample `p`-quantile of a dataset is the smallest value at which the
//! empirical CDF reaches `p`. It is also the minimizer of the aggregate
//! pinball (check) loss `f(ξ) = Σ ρ_p(z_i − ξ)`, which is what makes it
//! computable by a distributed subgradient method. Both routes live here so
//! that one can verify the other.
//!
//! `p` is only admissible when `n·p` is not an integer: then the minimizer
//! is unique and is an element of the dataset.

use thiserror::Error;

/// Tolerance used to decide whether `n·p` is an integer.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantileError {
    #[error("dataset must contain at least one value")]
    EmptyDataset,
    #[error("dataset value at position {index} (1-based) is not finite")]
    NonFinite { index: usize },
    #[error("quantile parameter p = {0} must lie in the open interval (0, 1)")]
    OutOfUnitInterval(f64),
    #[error("quantile parameter p = {p} is not admissible for n = {n}: n*p = {np} is an integer")]
    NotAdmissible { p: f64, n: usize, np: f64 },
    #[error("k = {k} is out of range for n = {n} (need 1 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
}

/// The agents' private measurements. Position `i` holds agent `i`'s datum.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Result<Self, QuantileError> {
        if values.is_empty() {
            return Err(QuantileError::EmptyDataset);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QuantileError::NonFinite { index: i + 1 });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values in ascending order (order statistics).
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// A quantile parameter validated against an agent count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileParam {
    p: f64,
    n: usize,
}

impl QuantileParam {
    pub fn new(p: f64, n: usize) -> Result<Self, QuantileError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(QuantileError::OutOfUnitInterval(p));
        }
        let np = n as f64 * p;
        if (np - np.round()).abs() <= ADMISSIBILITY_TOL {
            return Err(QuantileError::NotAdmissible { p, n, np });
        }
        Ok(Self { p, n })
    }

    /// Parameter selecting the `k`-th largest value: the midpoint of the
    /// admissible interval for `k`.
    pub fn for_k(n: usize, k: usize) -> Result<Self, QuantileError> {
        let interval = p_interval_for_k(n, k)?;
        Self::new(interval.mid, n)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rank from the top of the order statistic this parameter selects.
    pub fn k(&self) -> usize {
        self.n - (self.n as f64 * self.p).floor() as usize
    }

    /// 1-based rank from the bottom, `⌈n·p⌉`.
    fn rank(&self) -> usize {
        (self.n as f64 * self.p).ceil() as usize
    }
}

/// Open interval of admissible `p` selecting the `k`-th largest element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PInterval {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
}

impl PInterval {
    pub fn contains(&self, p: f64) -> bool {
        p > self.lo && p < self.hi
    }
}

/// Empirical CDF: fraction of values `≤ xi`.
pub fn ecdf(d: &Dataset, xi: f64) -> f64 {
    let count = d.values.iter().filter(|&&z| z <= xi).count();
    count as f64 / d.len() as f64
}

/// Sample quantile by sort-and-scan: the `⌈n·p⌉`-th smallest value.
///
/// Panics if `q` was validated against a different `n` than `d.len()`.
pub fn sample_quantile(d: &Dataset, q: QuantileParam) -> f64 {
    assert_eq!(
        q.n,
        d.len(),
        "quantile parameter validated for a different n"
    );
    let sorted = d.sorted();
    sorted[q.rank() - 1]
}

/// Pinball (check) loss `ρ_p(x)`.
#[inline]
pub fn pinball(p: f64, x: f64) -> f64 {
    if x < 0.0 {
        (p - 1.0) * x
    } else {
        p * x
    }
}

/// Aggregate score `f(ξ) = Σ_i ρ_p(z_i − ξ)`.
pub fn aggregate_score(d: &Dataset, p: f64, xi: f64) -> f64 {
    d.values.iter().map(|&z| pinball(p, z - xi)).sum()
}

/// Subgradient of `ξ ↦ ρ_p(z − ξ)` with the indicator firing at equality.
#[inline]
pub fn local_subgradient(z: f64, p: f64, xi: f64) -> f64 {
    let indicator = if xi >= z { 1.0 } else { 0.0 };
    indicator - p
}

pub fn p_interval_for_k(n: usize, k: usize) -> Result<PInterval, QuantileError> {
    if k == 0 || k > n {
        return Err(QuantileError::KOutOfRange { k, n });
    }
    let nf = n as f64;
    let top = (n - k) as f64;
    Ok(PInterval {
        lo: top / nf,
        hi: (top + 1.0) / nf,
        mid: (top + 0.5) / nf,
    })
}

/// Minimizes the aggregate score by exhaustive evaluation over the data.
///
/// Ties (possible only with duplicated values) resolve to the smallest
/// minimizing value.
pub fn argmin_oracle(d: &Dataset, p: f64) -> f64 {
    let mut best = f64::NAN;
    let mut best_score = f64::INFINITY;
    for candidate in d.sorted() {
        let score = aggregate_score(d, p, candidate);
        if score < best_score {
            best_score = score;
            best = candidate;
        }
    }
    best
}

/// 1-based ids of agents holding a value `≥ theta`, ascending.
///
/// With distinct values and `theta` the `k`-th largest value this is exactly
/// the top-k set.
pub fn agents_at_or_above(d: &Dataset, theta: f64) -> Vec<usize> {
    d.values
        .iter()
        .enumerate()
        .filter(|(_, &z)| z >= theta)
        .map(|(i, _)| i + 1)
        .collect()
}
