//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use stochesp::certificates::{
    appendix_d_counterexample, check_theorem_condition, contractivity_estimate, esn_counterexample_norm,
    esn_scaled_norm, StateBox,
};
use stochesp::dynamics::{consistency_check, converge_fixed_point, fit_decay_rate, uniqueness_probe};
use stochesp::inputs::generate_inputs;
use stochesp::seqspace::{product_dist, state_seq_dist};
use stochesp::wasserstein::{cost_matrix, wp_assignment, wp_quantile_1d, wp_sinkhorn, SinkhornConfig};
use stochesp::*;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "acceptance {id} {name:<34} {} ({:.1}s) {detail}",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

fn normal_inputs(n: usize, horizon: usize, seed: u64) -> InputEnsemble {
    let s = HiddenSampler::new(HiddenDist::StdNormal, 1, seed).unwrap();
    generate_inputs(&s, &CausalFilter::Identity, n, horizon).unwrap()
}

/// Long single-path average of the GARCH variance recursion.
fn garch_ergodic_mean(omega: f64, alpha: f64, beta: f64, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = omega / (1.0 - alpha - beta);
    let mut sum = 0.0;
    for _ in 0..steps {
        let e: f64 = StandardNormal.sample(&mut rng);
        h = omega + (alpha * e * e + beta) * h;
        sum += h;
    }
    sum / steps as f64
}

fn garch_stationary_moment(r: &mut Report) {
    let t0 = Instant::now();
    let model = StateModel::garch(0.05, 0.1, 0.85).unwrap();
    let inputs = normal_inputs(20_000, 128, 1);
    let cfg = ConvergeConfig::new(WeightVector::new(1.25, 128).unwrap(), 1.0);
    let fp = converge_fixed_point(&model, &inputs, &cfg).unwrap();
    let m = fp.state_mean(0, 0);
    let ergodic = garch_ergodic_mean(0.05, 0.1, 0.85, 1_000_000, 99);
    let pass =
        fp.trace.converged && (m - 1.0).abs() < 0.05 && (ergodic - 1.0).abs() < 0.05 && (m - ergodic).abs() < 0.05;
    r.line(
        1,
        "garch stationary mean",
        pass,
        format!("mean={m:.4} ergodic={ergodic:.4} n_final={}", fp.trace.n_final),
        t0,
    );
}

fn geometric_rate(r: &mut Report) {
    let t0 = Instant::now();
    let model = StateModel::linear_test(0.5).unwrap();
    let inputs = normal_inputs(4096, 40, 2);
    let cfg = ConvergeConfig::new(WeightVector::new(1.5, 40).unwrap(), 1.0);
    let fp = converge_fixed_point(&model, &inputs, &cfg).unwrap();
    let d = fp.trace.step_distances();
    let fit = fit_decay_rate(&d).unwrap();
    let tail = d.len() / 2;
    let envelope = (tail..d.len()).all(|n| d[n] <= fit.q.powi(n as i32) * fit.big_q * 1.2);
    let pass = fp.trace.converged && fit.q <= 0.80 && envelope;
    r.line(
        2,
        "geometric convergence rate",
        pass,
        format!("q={:.4} Q={:.4} envelope={envelope}", fit.q, fit.big_q),
        t0,
    );
}

fn deterministic_consistency(r: &mut Report) {
    let t0 = Instant::now();
    let model = StateModel::linear_test(0.5).unwrap();
    let inputs = normal_inputs(4096, 40, 3);
    let cfg = ConvergeConfig::new(WeightVector::new(1.5, 40).unwrap(), 1.0);
    let cert = certificates::pointwise_contraction(&model, &BaseMetric::Euclidean).unwrap();
    let rep = consistency_check(&model, &inputs, &cfg, &cert).unwrap();
    r.line(
        3,
        "deterministic consistency",
        rep.distance < 5e-3,
        format!("W1<={:.3e}", rep.distance),
        t0,
    );
}

fn uniqueness(r: &mut Report) {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for seed in [11, 12, 13] {
        let lin = StateModel::linear_test(0.5).unwrap();
        let cfg = ConvergeConfig::new(WeightVector::new(1.5, 40).unwrap(), 1.0);
        let rep = uniqueness_probe(
            &lin,
            &normal_inputs(1024, 40, seed),
            &cfg,
            &StateBox::default_for(&lin),
            seed,
        )
        .unwrap();
        worst = worst.max(rep.distance);
        all_converged &= rep.converged.0 && rep.converged.1;

        // κ = 0.95 leaves a distance to the limit of about 19× the last step,
        // so the step tolerance is tightened accordingly.
        let garch = StateModel::garch(0.05, 0.1, 0.85).unwrap();
        let cfg = ConvergeConfig::new(WeightVector::new(1.25, 192).unwrap(), 1.0).with_tol(5e-5);
        let rep = uniqueness_probe(
            &garch,
            &normal_inputs(1024, 192, seed),
            &cfg,
            &StateBox::default_for(&garch),
            seed,
        )
        .unwrap();
        worst = worst.max(rep.distance);
        all_converged &= rep.converged.0 && rep.converged.1;
    }
    r.line(
        4,
        "uniqueness probe",
        worst < 3e-3 && all_converged,
        format!("max W1={worst:.3e} converged={all_converged}"),
        t0,
    );
}

fn scalar_ensemble(xs: &[f64]) -> Ensemble {
    Ensemble::new(
        xs.iter()
            .map(|x| PathPair::new(PathWindow::constant(&[*x], 1), PathWindow::constant(&[0.0], 1)).unwrap())
            .collect(),
    )
    .unwrap()
}

fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> Ensemble {
    let u = Uniform::new(-1.0, 1.0).unwrap();
    Ensemble::new(
        (0..n)
            .map(|_| {
                let s = PathWindow::scalar((0..horizon).map(|_| u.sample(rng)).collect()).unwrap();
                let i = PathWindow::scalar((0..horizon).map(|_| u.sample(rng)).collect()).unwrap();
                PathPair::new(s, i).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Minimum over all permutations, summing each candidate in row order.
fn brute_force(cost: &[f64], n: usize) -> f64 {
    fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

fn ot_oracles(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let metric = ProductMetric::default();
    let mut brute_ok = true;
    for case in 0..50 {
        let n = 1 + case % 6;
        let horizon = 1 + case % 3;
        let w = WeightVector::new(1.7, horizon).unwrap();
        let p = [1.0, 2.0, 1.5][case % 3];
        let a = random_ensemble(&mut rng, n, horizon);
        let b = random_ensemble(&mut rng, n, horizon);
        let cost = cost_matrix(&a, &b, &metric, &w, p).unwrap();
        let expect = (brute_force(&cost, n) / n as f64).powf(1.0 / p);
        brute_ok &= wp_assignment(&a, &b, &metric, &w, p).unwrap().distance == expect;
    }

    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let xs: Vec<f64> = (0..256).map(|_| normal(&mut rng)).collect();
    let ys: Vec<f64> = (0..256).map(|_| 0.5 + normal(&mut rng)).collect();
    let w1 = WeightVector::new(2.0, 1).unwrap();
    let exact = wp_assignment(&scalar_ensemble(&xs), &scalar_ensemble(&ys), &metric, &w1, 1.0)
        .unwrap()
        .distance;
    // the state metric at horizon 1 is w_0·|x − y| = |x − y|/2
    let quantile = wp_quantile_1d(&xs, &ys, 1.0).unwrap().distance * 0.5;
    let quantile_ok = (exact - quantile).abs() < 1e-10;

    let a = scalar_ensemble(&xs[..128]);
    let b = scalar_ensemble(&ys[..128]);
    let cost = cost_matrix(&a, &b, &metric, &w1, 1.0).unwrap();
    let mut sorted = cost.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let cfg = SinkhornConfig {
        reg: 0.01 * median,
        max_iter: 20_000,
        tol: 1e-6,
    };
    let sk = wp_sinkhorn(&a, &b, &metric, &w1, 1.0, &cfg).unwrap();
    let asg = wp_assignment(&a, &b, &metric, &w1, 1.0).unwrap();
    let rel = (sk.distance - asg.distance).abs() / asg.distance;
    r.line(
        5,
        "optimal transport oracles",
        brute_ok && quantile_ok && rel < 0.05,
        format!(
            "brute={brute_ok} |quantile-assignment|={:.1e} sinkhorn_rel={rel:.4}",
            (exact - quantile).abs()
        ),
        t0,
    );
}

fn esn_closed_form(r: &mut Report) {
    let t0 = Instant::now();
    let mut max_err: f64 = 0.0;
    for c in [0.01, 0.1, 0.5, 1.0] {
        let ce = esn_counterexample_norm(c).unwrap();
        let numeric = esn_scaled_norm(&ce.a, &[c, 1.0]).unwrap();
        max_err = max_err.max((numeric - ce.inf_norm).abs());
    }
    let c = 0.01;
    let ce = esn_counterexample_norm(c).unwrap();
    let grid: Vec<f64> = (0..=600).map(|i| c / 4.0 * 16f64.powf(i as f64 / 600.0)).collect();
    let norms: Vec<f64> = grid
        .iter()
        .map(|d| esn_scaled_norm(&ce.a, &[*d, 1.0]).unwrap())
        .collect();
    let (arg, _) = norms
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let step = 16f64.powf(1.0 / 600.0);
    let at_c = grid[arg] / c < step && c / grid[arg] < step;
    let pass = max_err < 1e-8 && (ce.inf_norm - 1.0198).abs() < 1e-4 && at_c;
    r.line(
        6,
        "esn counterexample closed form",
        pass,
        format!(
            "max|closed-numeric|={max_err:.1e} norm(0.01)={:.6} argmin_d={:.5}",
            ce.inf_norm, grid[arg]
        ),
        t0,
    );
}

fn esn_gap(r: &mut Report) {
    let t0 = Instant::now();
    let c = 0.01;
    let ce = esn_counterexample_norm(c).unwrap();
    let a: Vec<f64> = ce.a.transpose().iter().copied().collect();
    let model = StateModel::esn(2, 2, a, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
    let metric = BaseMetric::diag_scaled(vec![c, 1.0]).unwrap();
    let scale = CausalFilter::Pointwise(inputs::PointwiseMap::Scale(3.0));
    let mut pass = ce.inf_norm > 1.0;
    let mut detail = String::new();
    for seed in [1, 2, 3] {
        let s = HiddenSampler::new(HiddenDist::StdNormal, 2, seed).unwrap();
        let k = contractivity_estimate(
            &model,
            &s,
            &scale,
            &metric,
            1.0,
            &StateBox::default_for(&model),
            64,
            4000,
        )
        .unwrap();
        let w = WeightVector::new(1.5, 40).unwrap();
        let cond = check_theorem_condition(k.estimate, w.growth(), 1.0);
        let inputs = generate_inputs(&s, &scale, 2000, 40).unwrap();
        let cfg = ConvergeConfig::new(w, 1.0).with_state_metric(metric.clone());
        let fp = converge_fixed_point(&model, &inputs, &cfg).unwrap();
        pass &= k.estimate + 2.0 * k.std_error.unwrap() < 1.0 && cond.pass && fp.trace.converged;
        detail.push_str(&format!(
            "seed{seed}: k={:.3}±{:.3} n={} ",
            k.estimate,
            k.std_error.unwrap(),
            fp.trace.n_final
        ));
    }
    r.line(
        7,
        "stochastic beats deterministic",
        pass,
        format!("inf_norm={:.4} {detail}", ce.inf_norm),
        t0,
    );
}

fn integrability_counterexample(r: &mut Report) {
    let t0 = Instant::now();
    let rep = appendix_d_counterexample(0.4, 2.6, 2.0, 18, 1e6).unwrap();
    let pass = rep.pass
        && rep.zero_residual == 0.0
        && rep.geometric_residual <= 4.0 * f64::EPSILON
        && rep.first_exceeding.is_some_and(|t| t <= 18);
    r.line(
        8,
        "integrability counterexample",
        pass,
        format!(
            "residuals=({:.1e},{:.1e}) S_18={:.3e} first>1e6 at T={:?}",
            rep.zero_residual,
            rep.geometric_residual,
            rep.partial_sums.last().unwrap().1,
            rep.first_exceeding
        ),
        t0,
    );
}

/// Condensed always-on versions of the property suites.
fn properties(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = Uniform::new(-2.0, 2.0).unwrap();
    let mut ok = true;

    // metric axioms
    let metric = ProductMetric::default();
    for _ in 0..100 {
        let w = WeightVector::new(1.3, 6).unwrap();
        let e = random_ensemble(&mut rng, 3, 6);
        let (x, y, z) = (&e.pairs[0], &e.pairs[1], &e.pairs[2]);
        let d = |a, b| product_dist(a, b, &w, &metric).unwrap();
        ok &= d(x, x) == 0.0 && d(x, y) == d(y, x) && d(x, z) <= d(x, y) + d(y, z) + 1e-12;
        let s = |a: &PathPair, b: &PathPair| state_seq_dist(&a.state, &b.state, &w, &BaseMetric::Euclidean).unwrap();
        ok &= s(x, z) <= s(x, y) + s(y, z) + 1e-12;
    }
    for _ in 0..20 {
        let w = WeightVector::new(1.5, 2).unwrap();
        let (a, b, c) = (
            random_ensemble(&mut rng, 5, 2),
            random_ensemble(&mut rng, 5, 2),
            random_ensemble(&mut rng, 5, 2),
        );
        let wp = |x: &Ensemble, y: &Ensemble| wp_assignment(x, y, &metric, &w, 1.0).unwrap().distance;
        ok &=
            wp(&a, &a) == 0.0 && (wp(&a, &b) - wp(&b, &a)).abs() < 1e-9 && wp(&a, &c) <= wp(&a, &b) + wp(&b, &c) + 1e-9;
    }

    // causality: perturbing the most recent hidden entry leaves older outputs alone
    let filters = [
        CausalFilter::Identity,
        CausalFilter::scalar_fir(&[1.0, -0.4, 0.2]).unwrap(),
        CausalFilter::Pointwise(inputs::PointwiseMap::Tanh),
        CausalFilter::Compose(vec![
            CausalFilter::scalar_fir(&[0.5, 0.5]).unwrap(),
            CausalFilter::Pointwise(inputs::PointwiseMap::Square),
        ]),
    ];
    for f in &filters {
        let z = PathWindow::scalar((0..12).map(|_| u.sample(&mut rng)).collect()).unwrap();
        let mut v = z.values().to_vec();
        v[0] += 1.0;
        let z2 = PathWindow::scalar(v).unwrap();
        let (a, b) = (f.apply(&z).unwrap(), f.apply(&z2).unwrap());
        ok &= (1..12).all(|k| a.at(k) == b.at(k));
    }

    // input bit-invariance under Fc
    let garch = StateModel::garch(0.05, 0.1, 0.85).unwrap();
    let pair = PathPair::new(
        PathWindow::scalar((0..8).map(|_| u.sample(&mut rng).abs()).collect()).unwrap(),
        PathWindow::scalar((0..8).map(|_| u.sample(&mut rng)).collect()).unwrap(),
    )
    .unwrap();
    let next = garch.apply_fc(&pair, None).unwrap();
    ok &= next
        .input
        .values()
        .iter()
        .zip(pair.input.values())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    // weight-sum identity
    for gamma in [1.01, 1.5, 2.0, 7.0] {
        for t in [1, 5, 40] {
            let w = WeightVector::new(gamma, t).unwrap();
            ok &= (w.weights().iter().sum::<f64>() + w.tail_mass() - 1.0).abs() < 1e-12;
        }
    }

    // determinism across thread counts
    let model = StateModel::linear_test(0.5).unwrap();
    let run = || {
        let inputs = normal_inputs(300, 20, 4);
        converge_fixed_point(
            &model,
            &inputs,
            &ConvergeConfig::new(WeightVector::new(1.5, 20).unwrap(), 1.0),
        )
        .unwrap()
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    ok &= one == four;

    r.line(9, "property suites (condensed)", ok, String::new(), t0);
}

fn main() {
    let mut r = Report { failures: 0 };
    garch_stationary_moment(&mut r);
    geometric_rate(&mut r);
    deterministic_consistency(&mut r);
    uniqueness(&mut r);
    ot_oracles(&mut r);
    esn_closed_form(&mut r);
    esn_gap(&mut r);
    integrability_counterexample(&mut r);
    properties(&mut r);
    if r.failures > 0 {
        println!("acceptance: {} of 9 criteria failed", r.failures);
        std::process::exit(1);
    }
    println!("acceptance: all 9 criteria passed");
}
