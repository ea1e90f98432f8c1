//! Empirical Wasserstein-p distances between equal-size ensembles.
//!
//! Between two uniform empirical measures with the same number of atoms the
//! optimal coupling can be taken to be a permutation, so exact transport is a
//! linear assignment problem on the cost matrix `c_ij = d(A_i, B_j)^p`. On
//! the real line the sorted (comonotone) matching is optimal. Entropic
//! Sinkhorn gives an approximation for large ensembles; its bias is reported,
//! not corrected.

mod assignment;
mod sinkhorn;

pub use assignment::solve as solve_assignment;
pub use sinkhorn::SinkhornConfig;

use crate::error::{domain, Error, Result};
use crate::inputs::Ensemble;
use crate::numeric::{map_indexed, pairwise_sum};
use crate::seqspace::{BaseMetric, ProductMetric, WeightVector};

/// Largest ensemble accepted by the exact assignment solver.
pub const ASSIGNMENT_CAP: usize = 4096;
/// Above this size the default method switches from assignment to Sinkhorn.
pub const AUTO_ASSIGNMENT_MAX: usize = 1024;
/// Above this size Sinkhorn evaluates costs on the fly instead of storing them.
const DENSE_SINKHORN_MAX: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OtMethod {
    /// Quantile for scalar horizon-1 data, assignment up to 1024 paths, Sinkhorn above.
    #[default]
    Auto,
    Quantile1d,
    Assignment,
    Sinkhorn,
}

impl OtMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OtMethod::Auto => "auto",
            OtMethod::Quantile1d => "quantile",
            OtMethod::Assignment => "assignment",
            OtMethod::Sinkhorn => "sinkhorn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(OtMethod::Auto),
            "quantile" | "quantile_1d" => Some(OtMethod::Quantile1d),
            "assignment" => Some(OtMethod::Assignment),
            "sinkhorn" => Some(OtMethod::Sinkhorn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtResult {
    /// `plan_cost^{1/p}`
    pub distance: f64,
    pub p: f64,
    pub method: OtMethod,
    /// Expected `d^p` under the transport plan.
    pub plan_cost: f64,
    /// Sinkhorn only.
    pub iterations: Option<usize>,
    /// Sinkhorn only: L¹ violation of the row marginal.
    pub marginal_err: Option<f64>,
    /// Always true for exact methods.
    pub converged: bool,
}

impl OtResult {
    fn exact(plan_cost: f64, p: f64, method: OtMethod) -> Self {
        Self {
            distance: plan_cost.max(0.0).powf(1.0 / p),
            p,
            method,
            plan_cost,
            iterations: None,
            marginal_err: None,
            converged: true,
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(domain(format!("Wasserstein order p must be ≥ 1, got {p}")));
    }
    Ok(())
}

/// Exact `W_p` between two equal-size samples on the real line.
pub fn wp_quantile_1d(a: &[f64], b: &[f64], p: f64) -> Result<OtResult> {
    check_p(p)?;
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(domain("empty samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let terms: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs().powf(p)).collect();
    Ok(OtResult::exact(
        pairwise_sum(&terms) / a.len() as f64,
        p,
        OtMethod::Quantile1d,
    ))
}

fn check_ensembles(a: &Ensemble, b: &Ensemble, metric: &ProductMetric, w: &WeightVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(domain("empty ensembles"));
    }
    for (x, y) in [(a.state_dim(), b.state_dim()), (a.input_dim(), b.input_dim())] {
        if x != y {
            return Err(Error::DimensionMismatch { expected: x, got: y });
        }
    }
    for h in [a.horizon(), b.horizon()] {
        if h != w.horizon() {
            return Err(Error::HorizonMismatch {
                expected: w.horizon(),
                got: h,
            });
        }
    }
    metric.state.check_dim(a.state_dim())?;
    metric.input.check_dim(a.input_dim())?;
    Ok(())
}

/// Row-major `N × N` matrix of `product_dist(A_i, B_j)^p`.
pub fn cost_matrix(a: &Ensemble, b: &Ensemble, metric: &ProductMetric, w: &WeightVector, p: f64) -> Result<Vec<f64>> {
    check_p(p)?;
    check_ensembles(a, b, metric, w)?;
    Ok(dense_costs(a, b, metric, w, p))
}

fn dense_costs(a: &Ensemble, b: &Ensemble, metric: &ProductMetric, w: &WeightVector, p: f64) -> Vec<f64> {
    let n = a.len();
    let rows = map_indexed(n, |i| {
        (0..n)
            .map(|j| powp(metric.dist_unchecked(&a.pairs[i], &b.pairs[j], w), p))
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

fn powp(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else {
        d.powf(p)
    }
}

/// Exact `W_p` from a precomputed cost matrix of `p`-th powers.
pub fn wp_from_costs(cost: &[f64], n: usize, p: f64) -> Result<OtResult> {
    check_p(p)?;
    if cost.len() != n * n || n == 0 {
        return Err(domain("cost matrix must be a nonempty n×n array"));
    }
    if n > ASSIGNMENT_CAP {
        return Err(Error::TooLarge { n, cap: ASSIGNMENT_CAP });
    }
    let (_, total) = solve_assignment(cost, n);
    Ok(OtResult::exact(total / n as f64, p, OtMethod::Assignment))
}

/// Exact `W_p` between ensembles via the assignment problem.
pub fn wp_assignment(a: &Ensemble, b: &Ensemble, metric: &ProductMetric, w: &WeightVector, p: f64) -> Result<OtResult> {
    check_p(p)?;
    check_ensembles(a, b, metric, w)?;
    if a.len() > ASSIGNMENT_CAP {
        return Err(Error::TooLarge {
            n: a.len(),
            cap: ASSIGNMENT_CAP,
        });
    }
    let cost = dense_costs(a, b, metric, w, p);
    wp_from_costs(&cost, a.len(), p)
}

/// Entropic approximation of `W_p` between ensembles.
pub fn wp_sinkhorn(
    a: &Ensemble,
    b: &Ensemble,
    metric: &ProductMetric,
    w: &WeightVector,
    p: f64,
    cfg: &SinkhornConfig,
) -> Result<OtResult> {
    check_p(p)?;
    check_ensembles(a, b, metric, w)?;
    if !(cfg.reg.is_finite() && cfg.reg > 0.0) {
        return Err(domain(format!(
            "Sinkhorn regularization must be positive, got {}",
            cfg.reg
        )));
    }
    let n = a.len();
    let outcome = if n <= DENSE_SINKHORN_MAX {
        let cost = dense_costs(a, b, metric, w, p);
        let max = cost.iter().copied().fold(0.0, f64::max);
        sinkhorn::run(n, |i, j| cost[i * n + j], max, cfg)
    } else {
        let c = |i: usize, j: usize| powp(metric.dist_unchecked(&a.pairs[i], &b.pairs[j], w), p);
        // the row maximum of the first row bounds the cost scale up to a factor 2^p
        let max = (0..n).map(|j| c(0, j)).fold(0.0, f64::max) * 2f64.powf(p);
        sinkhorn::run(n, c, max, cfg)
    };
    Ok(sinkhorn_result(outcome, p))
}

fn sinkhorn_result(o: sinkhorn::SinkhornOutcome, p: f64) -> OtResult {
    OtResult {
        distance: o.plan_cost.max(0.0).powf(1.0 / p),
        p,
        method: OtMethod::Sinkhorn,
        plan_cost: o.plan_cost,
        iterations: Some(o.iterations),
        marginal_err: Some(o.marginal_err),
        converged: o.converged,
    }
}

/// Entropic `W_p` from a precomputed cost matrix of `p`-th powers.
pub fn wp_sinkhorn_from_costs(cost: &[f64], n: usize, p: f64, cfg: &SinkhornConfig) -> Result<OtResult> {
    check_p(p)?;
    if cost.len() != n * n || n == 0 {
        return Err(domain("cost matrix must be a nonempty n×n array"));
    }
    let max = cost.iter().copied().fold(0.0, f64::max);
    Ok(sinkhorn_result(sinkhorn::run(n, |i, j| cost[i * n + j], max, cfg), p))
}

/// Scalar state values (scaled by the first weight) when the transport
/// problem is genuinely one-dimensional: horizon 1, scalar state under a
/// convex base metric, and every input window identical across both
/// ensembles so the input component costs the same under every coupling.
fn scalar_projection(
    a: &Ensemble,
    b: &Ensemble,
    metric: &ProductMetric,
    w: &WeightVector,
) -> Option<(Vec<f64>, Vec<f64>)> {
    if w.horizon() != 1 || a.state_dim() != 1 {
        return None;
    }
    let scale = match &metric.state {
        BaseMetric::Euclidean => 1.0,
        BaseMetric::DiagScaled(d) => d[0].abs(),
        BaseMetric::CappedEuclidean => return None,
    };
    let u0 = &a.pairs[0].input;
    if a.pairs.iter().chain(&b.pairs).any(|p| &p.input != u0) {
        return None;
    }
    let proj = |e: &Ensemble| {
        e.pairs
            .iter()
            .map(|p| w.weights()[0] * scale * p.state.at(0)[0])
            .collect()
    };
    Some((proj(a), proj(b)))
}

/// `W_p` between ensembles with the requested method.
pub fn wasserstein(
    a: &Ensemble,
    b: &Ensemble,
    metric: &ProductMetric,
    w: &WeightVector,
    p: f64,
    method: OtMethod,
    sinkhorn_cfg: &SinkhornConfig,
) -> Result<OtResult> {
    check_p(p)?;
    check_ensembles(a, b, metric, w)?;
    match method {
        OtMethod::Quantile1d => {
            let (x, y) = scalar_projection(a, b, metric, w).ok_or_else(|| {
                Error::Unsupported("quantile transport needs scalar horizon-1 states with identical inputs".into())
            })?;
            wp_quantile_1d(&x, &y, p)
        }
        OtMethod::Assignment => wp_assignment(a, b, metric, w, p),
        OtMethod::Sinkhorn => wp_sinkhorn(a, b, metric, w, p, sinkhorn_cfg),
        OtMethod::Auto => {
            if let Some((x, y)) = scalar_projection(a, b, metric, w) {
                wp_quantile_1d(&x, &y, p)
            } else if a.len() <= AUTO_ASSIGNMENT_MAX {
                wp_assignment(a, b, metric, w, p)
            } else {
                wp_sinkhorn(a, b, metric, w, p, sinkhorn_cfg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::{PathPair, PathWindow};

    fn scalar_ensemble(states: &[f64], inputs: &[f64]) -> Ensemble {
        Ensemble::new(
            states
                .iter()
                .zip(inputs)
                .map(|(x, u)| PathPair::new(PathWindow::constant(&[*x], 1), PathWindow::constant(&[*u], 1)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn point_masses() {
        let r = wp_quantile_1d(&[0.0; 5], &[1.0; 5], 1.0).unwrap();
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.method, OtMethod::Quantile1d);
    }

    #[test]
    fn same_empirical_measure() {
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(wp_quantile_1d(&[0.0, 1.0], &[1.0, 0.0], p).unwrap().distance, 0.0);
        }
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(matches!(
            wp_quantile_1d(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::SizeMismatch(1, 2))
        ));
        assert!(wp_quantile_1d(&[0.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn permuted_ensemble_is_at_distance_zero() {
        let w = WeightVector::new(2.0, 1).unwrap();
        let a = scalar_ensemble(&[0.1, 0.7, -0.3], &[1.0, 2.0, 3.0]);
        let b = scalar_ensemble(&[-0.3, 0.1, 0.7], &[3.0, 1.0, 2.0]);
        let r = wp_assignment(&a, &b, &ProductMetric::default(), &w, 2.0).unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn two_point_brute_force() {
        let w = WeightVector::new(2.0, 1).unwrap();
        let a = scalar_ensemble(&[0.0, 1.0], &[0.0, 0.0]);
        let b = scalar_ensemble(&[0.9, 0.2], &[0.0, 0.0]);
        let m = ProductMetric::default();
        let c = |x: f64, y: f64| 0.5 * (x - y).abs();
        let brute = ((c(0.0, 0.9) + c(1.0, 0.2)).min(c(0.0, 0.2) + c(1.0, 0.9))) / 2.0;
        let r = wp_assignment(&a, &b, &m, &w, 1.0).unwrap();
        assert!((r.distance - brute).abs() < 1e-15);
    }

    #[test]
    fn auto_uses_quantile_only_when_one_dimensional() {
        let w = WeightVector::new(2.0, 1).unwrap();
        let m = ProductMetric::default();
        let cfg = SinkhornConfig::default();
        let a = scalar_ensemble(&[0.0, 1.0], &[0.5, 0.5]);
        let b = scalar_ensemble(&[0.2, 0.4], &[0.5, 0.5]);
        let r = wasserstein(&a, &b, &m, &w, 1.0, OtMethod::Auto, &cfg).unwrap();
        assert_eq!(r.method, OtMethod::Quantile1d);
        let exact = wp_assignment(&a, &b, &m, &w, 1.0).unwrap();
        assert!((r.distance - exact.distance).abs() < 1e-15);

        let c = scalar_ensemble(&[0.2, 0.4], &[0.5, 0.6]);
        let r = wasserstein(&a, &c, &m, &w, 1.0, OtMethod::Auto, &cfg).unwrap();
        assert_eq!(r.method, OtMethod::Assignment);
        assert!(wasserstein(&a, &c, &m, &w, 1.0, OtMethod::Quantile1d, &cfg).is_err());
    }

    #[test]
    fn size_and_cap_errors() {
        let w = WeightVector::new(2.0, 1).unwrap();
        let m = ProductMetric::default();
        let a = scalar_ensemble(&[0.0, 1.0], &[0.0, 0.0]);
        let b = scalar_ensemble(&[0.0], &[0.0]);
        assert!(matches!(
            wp_assignment(&a, &b, &m, &w, 1.0),
            Err(Error::SizeMismatch(2, 1))
        ));
        assert!(matches!(
            wp_from_costs(&vec![0.0; 4097 * 4097], 4097, 1.0),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn sinkhorn_reports_bias_and_marginals() {
        let w = WeightVector::new(2.0, 1).unwrap();
        let m = ProductMetric::default();
        let a = scalar_ensemble(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        let cfg = SinkhornConfig {
            reg: 1e-3,
            max_iter: 20_000,
            tol: 1e-8,
        };
        let r = wp_sinkhorn(&a, &a, &m, &w, 1.0, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.marginal_err.unwrap() < cfg.tol);
        assert!(r.distance < 1e-6);
        let bad = SinkhornConfig { reg: 0.0, ..cfg };
        assert!(wp_sinkhorn(&a, &a, &m, &w, 1.0, &bad).is_err());
    }
}
