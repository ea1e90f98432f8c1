//! Entropic optimal transport between two uniform empirical measures.
//!
//! Log-domain Sinkhorn iterations on dual potentials with a halving schedule
//! for the regularization: start from the largest cost and halve until the
//! target is reached, warm-starting each stage from the previous potentials.

use crate::numeric::{map_indexed, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Target regularization strength, in cost units.
    pub reg: f64,
    /// Total iteration budget across all annealing stages.
    pub max_iter: usize,
    /// L¹ tolerance on the row-marginal violation.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            reg: 1e-2,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

pub(crate) struct SinkhornOutcome {
    pub plan_cost: f64,
    pub iterations: usize,
    pub marginal_err: f64,
    pub converged: bool,
}

/// Runs Sinkhorn on an `n × n` cost given by `cost(i, j)`.
pub(crate) fn run<C>(n: usize, cost: C, max_cost: f64, cfg: &SinkhornConfig) -> SinkhornOutcome
where
    C: Fn(usize, usize) -> f64 + Sync + Send,
{
    let log_mass = -(n as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];

    let mut eps = max_cost.max(cfg.reg);
    let mut iterations = 0usize;
    let mut marginal_err;

    loop {
        let last_stage = eps <= cfg.reg;
        loop {
            // g-update makes column marginals exact; measure the row side.
            f = map_indexed(n, |i| eps * log_mass - eps * lse(n, |j| (g[j] - cost(i, j)) / eps));
            g = map_indexed(n, |j| eps * log_mass - eps * lse(n, |i| (f[i] - cost(i, j)) / eps));
            iterations += 1;
            let rows = map_indexed(n, |i| {
                let mass: f64 = (0..n).map(|j| ((f[i] + g[j] - cost(i, j)) / eps).exp()).sum();
                (mass - 1.0 / n as f64).abs()
            });
            marginal_err = pairwise_sum(&rows);
            let stage_tol = if last_stage { cfg.tol } else { cfg.tol.max(1e-3) };
            if marginal_err < stage_tol || iterations >= cfg.max_iter {
                break;
            }
        }
        if last_stage || iterations >= cfg.max_iter {
            break;
        }
        eps = (eps * 0.5).max(cfg.reg);
    }

    let row_costs = map_indexed(n, |i| {
        (0..n)
            .map(|j| {
                let c = cost(i, j);
                ((f[i] + g[j] - c) / eps).exp() * c
            })
            .sum::<f64>()
    });
    SinkhornOutcome {
        plan_cost: pairwise_sum(&row_costs),
        iterations,
        marginal_err,
        converged: eps <= cfg.reg && marginal_err < cfg.tol,
    }
}

fn lse(n: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for k in 0..n {
        max = max.max(term(k));
    }
    if !max.is_finite() {
        return max;
    }
    let s: f64 = (0..n).map(|k| (term(k) - max).exp()).sum();
    max + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_plan_for_identical_points() {
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let cost = |i: usize, j: usize| (xs[i] - xs[j]).abs();
        let cfg = SinkhornConfig {
            reg: 0.01,
            max_iter: 5000,
            tol: 1e-9,
        };
        let out = run(4, cost, 3.0, &cfg);
        assert!(out.converged);
        assert!(out.plan_cost < 1e-6, "{}", out.plan_cost);
    }

    #[test]
    fn flags_exhausted_budget() {
        let xs = [0.0f64, 0.1, 0.2, 5.0, 5.1];
        let ys = [0.05, 0.15, 4.9, 5.0, 5.2];
        let cost = |i: usize, j: usize| (xs[i] - ys[j]).powi(2);
        let cfg = SinkhornConfig {
            reg: 1e-4,
            max_iter: 2,
            tol: 1e-12,
        };
        let out = run(5, cost, 30.0, &cfg);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
