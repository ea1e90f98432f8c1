use stochesp_web::{counterexample_sums, esn_curve, run_trace};

#[test]
fn linear_trace_decays_at_a() {
    let t = run_trace("linear", 0.5, 1.5, 30, 400, 1).unwrap();
    assert!(t.converged());
    assert!((t.q() - 0.5).abs() < 0.1, "q = {}", t.q());
    assert!(t.steps().windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn garch_trace_mean_near_one() {
    let t = run_trace("garch", 0.1, 1.25, 96, 4000, 2).unwrap();
    assert!(t.converged());
    assert!((t.mean() - 1.0).abs() < 0.1, "mean = {}", t.mean());
}

#[test]
fn unknown_model_is_an_error() {
    assert!(run_trace("lorenz", 0.5, 1.5, 10, 10, 0).is_err());
    assert!(run_trace("garch", 0.99, 1.5, 10, 10, 0).is_err());
}

#[test]
fn esn_curve_stays_above_one_with_minimum_at_c() {
    let c = 0.1;
    let out = esn_curve(c, c / 4.0, 4.0 * c, 201).unwrap();
    let (ds, norms) = out.split_at(201);
    assert!(norms.iter().all(|v| *v > 1.0));
    let i = (0..201).min_by(|a, b| norms[*a].total_cmp(&norms[*b])).unwrap();
    assert!((ds[i] / c - 1.0).abs() < 0.02, "argmin {}", ds[i]);
    assert!(esn_curve(c, 1.0, 0.5, 10).is_err());
}

#[test]
fn counterexample_sums_match_geometric_series() {
    let (alpha, gamma, p) = (0.4f64, 2.6f64, 2.0);
    let s = counterexample_sums(alpha, gamma, p, 10).unwrap();
    let r = 1.0 / (gamma * alpha.powf(p));
    for (t, v) in s.iter().enumerate() {
        let n = t as i32 + 1;
        let expect = (gamma - 1.0) * r * (r.powi(n) - 1.0) / (r - 1.0);
        assert!((v / expect - 1.0).abs() < 1e-12);
    }
}
