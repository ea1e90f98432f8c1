//! Weighted sequence-space geometry.
//!
//! Semi-infinite sequences indexed by the nonpositive times `t ≤ −1` are
//! represented by finite windows of length `T`. Index `k` of a window holds
//! the entry at time `t = −(k+1)`, so index 0 is the most recent entry.
//!
//! State windows are compared with the weighted ℓ¹ distance
//! `Σ_k w_k d_X(a_k, b_k)` for the geometric weighting `w_t = (γ−1)γ^t`,
//! whose growth constant `|w|` equals `γ`. Everything beyond the window is
//! discarded; its total weight is `γ^{−T}`.

use crate::error::{domain, Error, Result};

/// Truncated geometric weighting sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    gamma: f64,
    weights: Vec<f64>,
    tail_mass: f64,
}

impl WeightVector {
    /// `weights[k] = (γ−1)·γ^{−(k+1)}` for `k = 0..horizon`, tail mass `γ^{−horizon}`.
    pub fn new(gamma: f64, horizon: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(domain(format!("weight ratio gamma must exceed 1, got {gamma}")));
        }
        if horizon < 1 {
            return Err(domain("horizon must be at least 1"));
        }
        let weights = (0..horizon)
            .map(|k| (gamma - 1.0) * gamma.powi(-(k as i32 + 1)))
            .collect();
        Ok(Self {
            gamma,
            weights,
            tail_mass: gamma.powi(-(horizon as i32)),
        })
    }

    /// Shortest horizon whose discarded tail mass is below `tail_tol`.
    pub fn with_tail_tolerance(gamma: f64, tail_tol: f64) -> Result<Self> {
        Self::new(gamma, horizon_for_tail(gamma, tail_tol)?)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The growth constant `|w| = sup_n (sup_t w_t / w_{t−n})^{1/n}`, exactly `γ` here.
    pub fn growth(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Weighted sum `Σ_k w_k α_k` of a per-time array.
    pub fn weighted_sum(&self, alpha: &[f64]) -> f64 {
        self.weights.iter().zip(alpha).map(|(w, a)| w * a).sum()
    }
}

/// Convenience wrapper matching the operation name used in configs and docs.
pub fn make_weights(gamma: f64, horizon: usize) -> Result<WeightVector> {
    WeightVector::new(gamma, horizon)
}

/// Smallest `T ≥ 1` with `γ^{−T} < tail_tol`.
pub fn horizon_for_tail(gamma: f64, tail_tol: f64) -> Result<usize> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(domain(format!("weight ratio gamma must exceed 1, got {gamma}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(domain(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    let mut t = ((1.0 / tail_tol).ln() / gamma.ln()).floor().max(1.0) as usize;
    while gamma.powi(-(t as i32)) >= tail_tol {
        t += 1;
    }
    while t > 1 && gamma.powi(-(t as i32 - 1)) < tail_tol {
        t -= 1;
    }
    Ok(t)
}

/// Finite window of a sequence of points in `R^dim`.
///
/// Stored row-major: entry `k`, component `i` lives at `values[k * dim + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWindow {
    dim: usize,
    values: Vec<f64>,
}

impl PathWindow {
    pub fn new(dim: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || horizon == 0 {
            return Err(domain("path windows need positive dimension and horizon"));
        }
        if values.len() != dim * horizon {
            return Err(Error::DimensionMismatch {
                expected: dim * horizon,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: index / dim });
        }
        Ok(Self { dim, values })
    }

    /// Window holding `point` at every time.
    pub fn constant(point: &[f64], horizon: usize) -> Self {
        assert!(!point.is_empty() && horizon > 0);
        let values = point.iter().copied().cycle().take(point.len() * horizon).collect();
        Self {
            dim: point.len(),
            values,
        }
    }

    /// Scalar window from per-time values, most recent first.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        let horizon = values.len();
        Self::new(1, horizon, values)
    }

    /// Window whose every entry is produced by `f(k, i)`; bypasses the finiteness check.
    pub(crate) fn from_fn(dim: usize, horizon: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dim * horizon);
        for k in 0..horizon {
            for i in 0..dim {
                values.push(f(k, i));
            }
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Entry at window index `k` (time `−(k+1)`).
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub(crate) fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Metric on a single time slice `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMetric {
    /// `‖a − b‖₂`
    Euclidean,
    /// `‖D(a − b)‖₂` for the diagonal matrix `D = diag(d)`.
    DiagScaled(Vec<f64>),
    /// `min{1, ‖a − b‖₂}`; bounded, so input-side integrability never binds.
    CappedEuclidean,
}

impl BaseMetric {
    pub fn diag_scaled(d: Vec<f64>) -> Result<Self> {
        if d.iter().any(|x| *x == 0.0 || !x.is_finite()) {
            return Err(domain("diagonal scaling must be finite and nonsingular"));
        }
        Ok(BaseMetric::DiagScaled(d))
    }

    /// Distance between two points of equal dimension.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            BaseMetric::Euclidean => euclid(a, b),
            BaseMetric::CappedEuclidean => euclid(a, b).min(1.0),
            BaseMetric::DiagScaled(d) => {
                debug_assert_eq!(d.len(), a.len());
                a.iter()
                    .zip(b)
                    .zip(d)
                    .map(|((x, y), s)| {
                        let v = s * (x - y);
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            BaseMetric::DiagScaled(d) if d.len() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: d.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_windows(a: &PathWindow, b: &PathWindow, w: &WeightVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    for h in [a.horizon(), b.horizon()] {
        if h != w.horizon() {
            return Err(Error::HorizonMismatch {
                expected: w.horizon(),
                got: h,
            });
        }
    }
    Ok(())
}

/// Truncated weighted ℓ¹ distance `Σ_k w_k d_X(a_k, b_k)`.
pub fn state_seq_dist(a: &PathWindow, b: &PathWindow, w: &WeightVector, base: &BaseMetric) -> Result<f64> {
    check_windows(a, b, w)?;
    base.check_dim(a.dim())?;
    Ok(seq_dist_unchecked(a, b, w, base))
}

pub(crate) fn seq_dist_unchecked(a: &PathWindow, b: &PathWindow, w: &WeightVector, base: &BaseMetric) -> f64 {
    w.weights()
        .iter()
        .enumerate()
        .map(|(k, wk)| wk * base.dist(a.at(k), b.at(k)))
        .sum()
}

/// Element of the product of state and input sequence spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub state: PathWindow,
    pub input: PathWindow,
}

impl PathPair {
    pub fn new(state: PathWindow, input: PathWindow) -> Result<Self> {
        if state.horizon() != input.horizon() {
            return Err(Error::HorizonMismatch {
                expected: state.horizon(),
                got: input.horizon(),
            });
        }
        Ok(Self { state, input })
    }

    pub fn horizon(&self) -> usize {
        self.state.horizon()
    }
}

/// Sum metric on state × input windows: weighted ℓ¹ on both components,
/// with separate base metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMetric {
    pub state: BaseMetric,
    pub input: BaseMetric,
}

impl Default for ProductMetric {
    fn default() -> Self {
        Self {
            state: BaseMetric::Euclidean,
            input: BaseMetric::CappedEuclidean,
        }
    }
}

impl ProductMetric {
    pub fn with_state(state: BaseMetric) -> Self {
        Self {
            state,
            ..Self::default()
        }
    }

    pub(crate) fn dist_unchecked(&self, p1: &PathPair, p2: &PathPair, w: &WeightVector) -> f64 {
        seq_dist_unchecked(&p1.state, &p2.state, w, &self.state)
            + seq_dist_unchecked(&p1.input, &p2.input, w, &self.input)
    }
}

/// `d((x̄, ū), (x̄′, ū′)) = d_X̄(x̄, x̄′) + d_Ū(ū, ū′)`.
pub fn product_dist(p1: &PathPair, p2: &PathPair, w: &WeightVector, metric: &ProductMetric) -> Result<f64> {
    Ok(state_seq_dist(&p1.state, &p2.state, w, &metric.state)?
        + state_seq_dist(&p1.input, &p2.input, w, &metric.input)?)
}
