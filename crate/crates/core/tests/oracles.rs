//! Worked cases checked against values computed independently of the library.

use approx::assert_relative_eq;

use stochesp::certificates::{bounded_input_c, garch_kappa, pointwise_contraction};
use stochesp::dynamics::{converge_fixed_point, deterministic_filter, fit_decay_rate, iterate_fc, stationarity_check};
use stochesp::inputs::generate_inputs;
use stochesp::wasserstein::{wp_sinkhorn, SinkhornConfig};
use stochesp::*;

fn normal_inputs(n: usize, horizon: usize, seed: u64) -> InputEnsemble {
    let s = HiddenSampler::new(HiddenDist::StdNormal, 1, seed).unwrap();
    generate_inputs(&s, &CausalFilter::Identity, n, horizon).unwrap()
}

/// From x = 0, n GARCH steps leave ω Σ_{j<n} Π_{i<j} (α u_i² + β) in the
/// newest entry.
#[test]
fn garch_iterates_are_partial_sums() {
    let (omega, alpha, beta) = (0.05, 0.1, 0.85);
    let model = StateModel::garch(omega, alpha, beta).unwrap();
    let u = [0.3, -1.2, 2.0, 0.7, -0.1, 1.5];
    let pair = PathPair::new(
        PathWindow::scalar(vec![0.0; 6]).unwrap(),
        PathWindow::scalar(u.to_vec()).unwrap(),
    )
    .unwrap();
    let ens = Ensemble::new(vec![pair]).unwrap();
    for n in 1..=6 {
        let out = iterate_fc(&model, &ens, n).unwrap();
        let mut expect = 0.0;
        let mut prod = 1.0;
        for ui in &u[..n] {
            expect += omega * prod;
            prod *= alpha * ui * ui + beta;
        }
        assert_relative_eq!(out.pairs[0].state.at(0)[0], expect, max_relative = 1e-14);
    }
}

/// With anchor 0 the linear map gives d(f(0, u), 0) = |u|, so
/// C = E|u| (1 − γ^{−T}) = √(2/π)(1 − γ^{−T}).
#[test]
fn bounded_c_linear_gaussian() {
    let model = StateModel::linear_test(0.5).unwrap();
    let w = WeightVector::new(1.5, 20).unwrap();
    let c = bounded_input_c(&model, &normal_inputs(20_000, 20, 8), &w, &BaseMetric::Euclidean, 1.0).unwrap();
    let expect = (2.0 / std::f64::consts::PI).sqrt() * (1.0 - 1.5f64.powi(-20));
    let se = c.std_error.unwrap();
    assert!(
        (c.estimate - expect).abs() < 4.0 * se,
        "{} vs {expect} (se {se})",
        c.estimate
    );
}

/// f(0, u) = ω for every input, so C = ω(1 − γ^{−T}) with no sampling error.
#[test]
fn bounded_c_garch_is_exact() {
    let model = StateModel::garch(0.05, 0.1, 0.85).unwrap();
    let w = WeightVector::new(1.25, 30).unwrap();
    let c = bounded_input_c(&model, &normal_inputs(100, 30, 1), &w, &BaseMetric::Euclidean, 1.0).unwrap();
    assert_relative_eq!(c.estimate, 0.05 * (1.0 - 1.25f64.powi(-30)), max_relative = 1e-12);
}

/// The linear deterministic filter is U(u)[k] = Σ_j a^j u[k+j], truncated
/// at the window edge.
#[test]
fn deterministic_filter_linear_closed_form() {
    let a = 0.6;
    let model = StateModel::linear_test(a).unwrap();
    let w = WeightVector::new(1.3, 12).unwrap();
    let u: Vec<f64> = (0..12).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.8).collect();
    let cert = pointwise_contraction(&model, &BaseMetric::Euclidean).unwrap();
    let out = deterministic_filter(
        &model,
        &PathWindow::scalar(u.clone()).unwrap(),
        &w,
        &BaseMetric::Euclidean,
        1e-14,
        &cert,
    )
    .unwrap();
    for k in 0..12 {
        let expect: f64 = (k..12).map(|i| a.powi((i - k) as i32) * u[i]).sum();
        assert_relative_eq!(out.at(k)[0], expect, epsilon = 1e-12);
    }
}

/// An expanding linear map never settles: step distances grow.
#[test]
fn expanding_map_does_not_converge() {
    let model = StateModel::linear_test(1.1).unwrap();
    let mut cfg = ConvergeConfig::new(WeightVector::new(1.5, 35).unwrap(), 1.0);
    cfg.max_steps = 15;
    let fp = converge_fixed_point(&model, &normal_inputs(500, 35, 4), &cfg).unwrap();
    assert!(!fp.trace.converged);
    assert!(!fp.trace.window_exhausted);
    let d = fp.trace.step_distances();
    assert_eq!(d.len(), 15);
    assert!(d.windows(2).all(|p| p[1] >= p[0]), "{d:?}");
}

#[test]
fn decay_fit_recovers_noisy_geometric() {
    // deterministic pseudo-noise of relative size ≤ 5%
    let d: Vec<f64> = (0..40)
        .map(|n| 3.0 * 0.7f64.powi(n) * (1.0 + 0.05 * ((n as f64) * 12.9898).sin()))
        .collect();
    let fit = fit_decay_rate(&d).unwrap();
    assert!((fit.q - 0.7).abs() < 0.01, "q = {}", fit.q);
    assert!((fit.big_q / 3.0 - 1.0).abs() < 0.2, "Q = {}", fit.big_q);
}

#[test]
fn sinkhorn_identical_ensembles_near_zero() {
    let model = StateModel::linear_test(0.5).unwrap();
    let inputs = normal_inputs(64, 4, 2);
    let fp = converge_fixed_point(
        &model,
        &inputs,
        &ConvergeConfig::new(WeightVector::new(1.5, 4).unwrap(), 1.0),
    )
    .unwrap();
    let w = WeightVector::new(1.5, 4).unwrap();
    let cfg = SinkhornConfig {
        reg: 1e-3,
        ..Default::default()
    };
    let r = wp_sinkhorn(&fp.ensemble, &fp.ensemble, &ProductMetric::default(), &w, 1.0, &cfg).unwrap();
    assert!(r.distance < 1e-2, "{}", r.distance);
}

/// Rademacher innovations have η² = 1, so E[(αη² + β)^p] = (α + β)^p exactly.
#[test]
fn garch_kappa_rademacher_exact() {
    let s = HiddenSampler::new(HiddenDist::Rademacher, 1, 3).unwrap();
    let k = garch_kappa(0.1, 0.85, 2.0, &s, 1000).unwrap();
    assert_relative_eq!(k.estimate, 0.95f64.powi(2), max_relative = 1e-12);
    assert!(k.pass);
}

/// Unit-variance uniform innovations have E η⁴ = 9/5.
#[test]
fn garch_kappa_uniform_second_moment() {
    let r = 3f64.sqrt();
    let s = HiddenSampler::new(HiddenDist::Uniform { a: -r, b: r }, 1, 3).unwrap();
    let (alpha, beta) = (0.1, 0.85);
    let k = garch_kappa(alpha, beta, 2.0, &s, 200_000).unwrap();
    let expect = alpha * alpha * 1.8 + 2.0 * alpha * beta + beta * beta;
    assert!((k.estimate - expect).abs() < 4.0 * k.std_error.unwrap());
    let analytic = garch_kappa(alpha, beta, 1.0, &s, 0).unwrap();
    assert_eq!(analytic.estimate, alpha + beta);
}

#[test]
fn garch_kappa_flags_missing_moment() {
    let s = HiddenSampler::new(HiddenDist::StudentT { nu: 3.0 }, 1, 3).unwrap();
    let k = garch_kappa(0.1, 0.85, 2.0, &s, 1000).unwrap();
    assert!(k.estimate.is_infinite() && !k.pass);
}

/// Inputs whose scale grows with age give a fixed point whose marginal
/// variance changes along the window.
#[test]
fn stationarity_rejects_scaled_inputs() {
    let model = StateModel::linear_test(0.5).unwrap();
    let base = normal_inputs(2000, 24, 6);
    let scaled = base
        .inputs
        .iter()
        .map(|u| {
            PathWindow::scalar(
                u.values()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (1.0 + 0.2 * k as f64))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let inputs = InputEnsemble::from_inputs(scaled).unwrap();
    let cfg = ConvergeConfig::new(WeightVector::new(1.5, 24).unwrap(), 1.0);
    let rep = stationarity_check(&converge_fixed_point(&model, &inputs, &cfg).unwrap(), 2).unwrap();
    assert!(!rep.pass && rep.max_z_var > 4.0, "{rep:?}");

    let rep = stationarity_check(&converge_fixed_point(&model, &base, &cfg).unwrap(), 2).unwrap();
    assert!(rep.pass, "{rep:?}");
}
