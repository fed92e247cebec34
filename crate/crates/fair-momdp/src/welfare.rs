//! Welfare functions and fairness primitives.
//!
//! The central aggregator is the generalized Gini index: a weighted sum of the
//! payoff vector sorted in ascending order, with strictly decreasing weights.
//! Because the weights decrease, the worst-off components count the most, which
//! makes the index symmetric, strictly Schur-concave (it strictly prefers
//! Pigou-Dalton transfers) and strictly monotone with respect to Pareto
//! dominance. Maximin, leximin and the plain utilitarian sum are provided as
//! comparison points.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WelfareError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value vector must be non-empty")]
    Empty,
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid transfer: {0}")]
    InvalidTransfer(String),
}

/// A point in payoff space, one component per user/objective.
///
/// Non-empty with all components finite; enforced at construction and on
/// deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self, WelfareError> {
        if values.is_empty() {
            return Err(WelfareError::Empty);
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(WelfareError::NonFinite(i));
        }
        Ok(ValueVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Components sorted ascending (total order; components are finite).
    pub fn sorted_ascending(&self) -> Vec<f64> {
        let mut s = self.0.clone();
        s.sort_by(f64::total_cmp);
        s
    }
}

impl TryFrom<Vec<f64>> for ValueVector {
    type Error = WelfareError;

    fn try_from(values: Vec<f64>) -> Result<Self, WelfareError> {
        ValueVector::new(values)
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Vec<f64> {
        v.0
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Strictly decreasing weight vector for the generalized Gini index.
///
/// Each weight lies in `[0, 1]`, `w_1 > w_2 > ... > w_n`, and `w_n > 0` so the
/// index stays strictly increasing in every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GiniWeights(Vec<f64>);

impl GiniWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, WelfareError> {
        if weights.is_empty() {
            return Err(WelfareError::InvalidWeights("must be non-empty".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(WelfareError::InvalidWeights(format!(
                    "weight {i} = {w} is outside [0, 1]"
                )));
            }
        }
        for i in 1..weights.len() {
            if weights[i] >= weights[i - 1] {
                return Err(WelfareError::InvalidWeights(format!(
                    "weights must be strictly decreasing, but w[{}] = {} >= w[{}] = {}",
                    i,
                    weights[i],
                    i - 1,
                    weights[i - 1]
                )));
            }
        }
        if *weights.last().unwrap() <= 0.0 {
            return Err(WelfareError::InvalidWeights(
                "last weight must be strictly positive".into(),
            ));
        }
        Ok(GiniWeights(weights))
    }

    /// Default weight family: `w_i = (1/2)^(i-1)`, normalized to sum 1.
    pub fn default_for(n: usize) -> Result<Self, WelfareError> {
        if n == 0 {
            return Err(WelfareError::InvalidWeights("n must be >= 1".into()));
        }
        let raw: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
        let sum: f64 = raw.iter().sum();
        GiniWeights::new(raw.into_iter().map(|w| w / sum).collect())
    }

    /// Near-egalitarian weights `(1, delta, delta^2, ...)`, normalized.
    ///
    /// As `delta -> 0` the resulting index converges to maximin.
    pub fn egalitarian(n: usize, delta: f64) -> Result<Self, WelfareError> {
        if n == 0 {
            return Err(WelfareError::InvalidWeights("n must be >= 1".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(WelfareError::InvalidWeights(format!(
                "delta = {delta} must lie in (0, 1)"
            )));
        }
        let raw: Vec<f64> = (0..n).map(|i| delta.powi(i as i32)).collect();
        let sum: f64 = raw.iter().sum();
        GiniWeights::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for GiniWeights {
    type Error = WelfareError;

    fn try_from(weights: Vec<f64>) -> Result<Self, WelfareError> {
        GiniWeights::new(weights)
    }
}

impl From<GiniWeights> for Vec<f64> {
    fn from(w: GiniWeights) -> Vec<f64> {
        w.0
    }
}

/// The welfare function applied on top of a value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WelfareSpec {
    Ggi { weights: GiniWeights },
    Maximin,
    Utilitarian,
}

impl WelfareSpec {
    pub fn evaluate(&self, v: &ValueVector) -> Result<f64, WelfareError> {
        match self {
            WelfareSpec::Ggi { weights } => ggi(v, weights),
            WelfareSpec::Maximin => Ok(maximin(v)),
            WelfareSpec::Utilitarian => Ok(utilitarian(v)),
        }
    }
}

fn check_dims(n: usize, m: usize) -> Result<(), WelfareError> {
    if n != m {
        Err(WelfareError::DimensionMismatch {
            expected: n,
            got: m,
        })
    } else {
        Ok(())
    }
}

/// Generalized Gini index: dot product of the weights with `v` sorted ascending.
pub fn ggi(v: &ValueVector, w: &GiniWeights) -> Result<f64, WelfareError> {
    check_dims(w.len(), v.len())?;
    let sorted = v.sorted_ascending();
    Ok(sorted
        .iter()
        .zip(w.as_slice())
        .map(|(vi, wi)| wi * vi)
        .sum())
}

/// Subgradient of [`ggi`] at `v`: component `i` receives the weight of its
/// position in the ascending sort, ties broken by ascending index.
///
/// Where all components are distinct this is the exact gradient.
pub fn ggi_subgradient(v: &ValueVector, w: &GiniWeights) -> Result<ValueVector, WelfareError> {
    check_dims(w.len(), v.len())?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    // Stable sort on values keeps tied components in index order.
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut g = vec![0.0; v.len()];
    for (rank, &i) in order.iter().enumerate() {
        g[i] = w.as_slice()[rank];
    }
    ValueVector::new(g)
}

/// Payoff of the worst-off component.
pub fn maximin(v: &ValueVector) -> f64 {
    v.as_slice().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Unweighted sum of components.
pub fn utilitarian(v: &ValueVector) -> f64 {
    v.as_slice().iter().sum()
}

/// Leximin order: compare ascending sorts lexicographically.
pub fn leximin_compare(u: &ValueVector, v: &ValueVector) -> Result<Ordering, WelfareError> {
    check_dims(u.len(), v.len())?;
    let su = u.sorted_ascending();
    let sv = v.sorted_ascending();
    for (a, b) in su.iter().zip(&sv) {
        match a.total_cmp(b) {
            Ordering::Equal => continue,
            ord => return Ok(ord),
        }
    }
    Ok(Ordering::Equal)
}

/// Move `eps` of payoff from the richer component `j` to the poorer `i`.
///
/// Requires `v_i < v_j` and `eps` strictly inside `(0, v_j - v_i)`.
pub fn pigou_dalton_transfer(
    v: &ValueVector,
    i: usize,
    j: usize,
    eps: f64,
) -> Result<ValueVector, WelfareError> {
    let n = v.len();
    if i >= n || j >= n {
        return Err(WelfareError::InvalidTransfer(format!(
            "indices ({i}, {j}) out of bounds for length {n}"
        )));
    }
    if !(v[i] < v[j]) {
        return Err(WelfareError::InvalidTransfer(format!(
            "component {i} = {} is not strictly poorer than component {j} = {}",
            v[i], v[j]
        )));
    }
    if !(eps > 0.0 && eps < v[j] - v[i]) {
        return Err(WelfareError::InvalidTransfer(format!(
            "eps = {eps} must lie strictly inside (0, {})",
            v[j] - v[i]
        )));
    }
    let mut out = v.as_slice().to_vec();
    out[i] += eps;
    out[j] -= eps;
    ValueVector::new(out)
}

/// True iff `u >= v` componentwise with at least one strict component.
pub fn pareto_dominates(u: &ValueVector, v: &ValueVector) -> Result<bool, WelfareError> {
    check_dims(u.len(), v.len())?;
    let mut strict = false;
    for (a, b) in u.as_slice().iter().zip(v.as_slice()) {
        if a < b {
            return Ok(false);
        }
        if a > b {
            strict = true;
        }
    }
    Ok(strict)
}
