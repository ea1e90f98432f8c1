//! Sufficient conditions for a unique stochastic solution, checked
//! analytically where possible and by Monte Carlo otherwise.
//!
//! * κ-contractive marginals: `E[d(f(x₁,U_t), f(x₂,U_t))^p | past] ≤ κ d(x₁,x₂)^p`.
//! * C-bounded inputs: `Σ_t w_t E[d(f(x_*, U_t), x_*)^p] ≤ C`.
//! * The existence/uniqueness gate `κ < 2^{1−p} / |w|`.
//!
//! Monte Carlo contractivity estimates take a supremum over finitely many
//! sampled state pairs, so they can only ever under-estimate the true κ.
//! Reports say so.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::inputs::{sample_hidden, CausalFilter, HiddenSampler, InputEnsemble};
use crate::models::{StateMap, StateModel, TensorPoly};
use crate::numeric::{map_indexed, mean_and_stderr};
use crate::seqspace::{BaseMetric, PathWindow, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Stochastic κ-contractivity of the marginals.
    Contractivity,
    /// Uniform Lipschitz bound of `f(·, u)` over all inputs.
    PointwiseContraction,
    Boundedness,
    TheoremCondition,
    EsnSpectral,
    Counterexample,
}

impl CertificateKind {
    pub fn name(&self) -> &'static str {
        match self {
            CertificateKind::Contractivity => "contractivity",
            CertificateKind::PointwiseContraction => "pointwise_contraction",
            CertificateKind::Boundedness => "boundedness",
            CertificateKind::TheoremCondition => "theorem_condition",
            CertificateKind::EsnSpectral => "esn_spectral",
            CertificateKind::Counterexample => "counterexample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMethod {
    Analytic,
    MonteCarlo,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// κ̂, Ĉ, a norm or a bound, depending on `kind`.
    pub estimate: f64,
    /// The value `estimate` was compared against, when there is one.
    pub threshold: Option<f64>,
    pub pass: bool,
    pub method: CertificateMethod,
    pub n_samples: usize,
    pub std_error: Option<f64>,
    pub notes: String,
}

impl Certificate {
    fn analytic(
        kind: CertificateKind,
        estimate: f64,
        threshold: Option<f64>,
        pass: bool,
        notes: impl Into<String>,
    ) -> Self {
        Self {
            kind,
            estimate,
            threshold,
            pass,
            method: CertificateMethod::Analytic,
            n_samples: 0,
            std_error: None,
            notes: notes.into(),
        }
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {:>14.6e} {:>12} {:<4} {:<11} n={:<8} se={:<12} {}",
            self.kind.name(),
            self.estimate,
            self.threshold.map_or("-".to_string(), |t| format!("{t:.6e}")),
            if self.pass { "PASS" } else { "FAIL" },
            match self.method {
                CertificateMethod::Analytic => "analytic",
                CertificateMethod::MonteCarlo => "monte_carlo",
            },
            self.n_samples,
            self.std_error.map_or("-".to_string(), |s| format!("{s:.3e}")),
            self.notes
        )
    }
}

/// κ for GARCH: `E[(αη² + β)^p]`, exactly `α + β` when `p = 1` and the
/// innovations are standardized.
pub fn garch_kappa(alpha: f64, beta: f64, p: f64, innovation: &HiddenSampler, n_samples: usize) -> Result<Certificate> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(domain("GARCH alpha and beta must be finite and nonnegative"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(domain(format!("p must be ≥ 1, got {p}")));
    }
    if innovation.dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: innovation.dim,
        });
    }
    if !innovation.dist.has_moment(2.0 * p) {
        return Ok(Certificate {
            kind: CertificateKind::Contractivity,
            estimate: f64::INFINITY,
            threshold: Some(1.0),
            pass: false,
            method: CertificateMethod::Analytic,
            n_samples: 0,
            std_error: None,
            notes: format!(
                "innovation {} lacks a finite {}-th moment",
                innovation.dist.name(),
                2.0 * p
            ),
        });
    }
    if p == 1.0 && innovation.dist.is_standardized() {
        let k = alpha + beta;
        return Ok(Certificate::analytic(
            CertificateKind::Contractivity,
            k,
            Some(1.0),
            k < 1.0,
            "E[alpha*eta^2 + beta] = alpha + beta for unit-variance innovations",
        ));
    }
    if n_samples < 2 {
        return Err(domain("Monte Carlo estimate needs at least two samples"));
    }
    let draws = sample_hidden(innovation, n_samples, 1)?;
    let terms: Vec<f64> = draws
        .iter()
        .map(|w| {
            let e = w.at(0)[0];
            (alpha * e * e + beta).powf(p)
        })
        .collect();
    let (k, se) = mean_and_stderr(&terms);
    Ok(Certificate {
        kind: CertificateKind::Contractivity,
        estimate: k,
        threshold: Some(1.0),
        pass: k + 2.0 * se < 1.0,
        method: CertificateMethod::MonteCarlo,
        n_samples,
        std_error: Some(se),
        notes: "MC estimate of E[(alpha*eta^2 + beta)^p]".into(),
    })
}

/// Axis-aligned region of the state space to draw state pairs from.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(domain("state box needs lo < hi componentwise"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// The natural default box: `[−1, 1]^n` for ESNs, `[0, 2]` for GARCH,
    /// `anchor ± 1` otherwise.
    pub fn default_for(model: &StateModel) -> Self {
        let n = model.state_dim();
        match model.map() {
            StateMap::Esn(_) => Self::cube(n, -1.0, 1.0).expect("valid"),
            StateMap::Garch(_) => Self::cube(1, 0.0, 2.0).expect("valid"),
            _ => Self {
                lo: model.anchor().iter().map(|a| a - 1.0).collect(),
                hi: model.anchor().iter().map(|a| a + 1.0).collect(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Latin-hypercube sample of `n` points in `box_`: each coordinate's range is
/// cut into `n` strata, each stratum used exactly once.
fn latin_hypercube(box_: &StateBox, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = box_.dim();
    let mut pts = vec![vec![0.0; d]; n];
    for c in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        for (i, pt) in pts.iter_mut().enumerate() {
            let frac = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            pt[c] = box_.lo[c] + frac * (box_.hi[c] - box_.lo[c]);
        }
    }
    pts
}

/// Monte Carlo κ̂ for iid observed inputs (memoryless filters only).
///
/// State pairs: a Latin hypercube over `box_ × box_` plus pairs straddling
/// the anchor at several scales. For each pair the ratio
/// `E[d(f(x₁,U), f(x₂,U))^p] / d(x₁,x₂)^p` is estimated with common inputs;
/// κ̂ is the largest ratio, and the check passes when `κ̂ + 2·se < 1`.
#[allow(clippy::too_many_arguments)]
pub fn contractivity_estimate(
    model: &StateModel,
    sampler: &HiddenSampler,
    filter: &CausalFilter,
    metric: &BaseMetric,
    p: f64,
    box_: &StateBox,
    n_state_pairs: usize,
    n_samples: usize,
) -> Result<Certificate> {
    if !filter.is_memoryless() {
        return Err(Error::Unsupported(
            "contractivity for filters with memory needs conditional expectations; only iid inputs are certified"
                .into(),
        ));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(domain(format!("p must be ≥ 1, got {p}")));
    }
    let n = model.state_dim();
    let input_dim = filter.output_dim(sampler.dim)?;
    if input_dim != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: input_dim,
        });
    }
    if box_.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: box_.dim(),
        });
    }
    metric.check_dim(n)?;
    if n_samples < 2 || n_state_pairs == 0 {
        return Err(domain("need at least one state pair and two input samples"));
    }

    let inputs: Vec<PathWindow> = sample_hidden(sampler, n_samples, 1)?
        .iter()
        .map(|z| filter.apply(z))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0x5eed_5eed_5eed_5eed);
    rng.set_stream(u64::MAX);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = {
        let mut doubled_lo = box_.lo.clone();
        doubled_lo.extend_from_slice(&box_.lo);
        let mut doubled_hi = box_.hi.clone();
        doubled_hi.extend_from_slice(&box_.hi);
        let joint = StateBox::new(doubled_lo, doubled_hi)?;
        latin_hypercube(&joint, n_state_pairs, &mut rng)
            .into_iter()
            .map(|mut v| {
                let x2 = v.split_off(n);
                (v, x2)
            })
            .collect()
    };
    let anchor = model.anchor();
    for c in 0..n {
        let width = box_.hi[c] - box_.lo[c];
        for scale in [1e-3, 1e-2, 1e-1] {
            let s = scale * width;
            let mut up = anchor.to_vec();
            up[c] += s;
            let mut down = anchor.to_vec();
            down[c] -= s;
            pairs.push((anchor.to_vec(), up.clone()));
            pairs.push((down, up));
        }
    }
    pairs.retain(|(a, b)| {
        model.step(a, &vec![0.0; model.input_dim()]).is_ok()
            && model.step(b, &vec![0.0; model.input_dim()]).is_ok()
            && metric.dist(a, b) > 0.0
    });

    let ratios = map_indexed(pairs.len(), |i| {
        let (x1, x2) = &pairs[i];
        let denom = metric.dist(x1, x2).powf(p);
        let mut y1 = vec![0.0; n];
        let mut y2 = vec![0.0; n];
        let terms: Vec<f64> = inputs
            .iter()
            .map(|u| {
                model.step_into(x1, u.at(0), &mut y1);
                model.step_into(x2, u.at(0), &mut y2);
                metric.dist(&y1, &y2).powf(p) / denom
            })
            .collect();
        mean_and_stderr(&terms)
    });
    let (kappa, se) = ratios
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, 0.0), |acc, r| if r.0 > acc.0 { r } else { acc });
    Ok(Certificate {
        kind: CertificateKind::Contractivity,
        estimate: kappa,
        threshold: Some(1.0),
        pass: kappa + 2.0 * se < 1.0,
        method: CertificateMethod::MonteCarlo,
        n_samples,
        std_error: Some(se),
        notes: format!(
            "sup over {} sampled state pairs; one-sided: the true supremum may be larger",
            pairs.len()
        ),
    })
}

/// Ĉ: the truncated weighted sum of `E[d(f(x_*, U_t), x_*)^p]`.
pub fn bounded_input_c(
    model: &StateModel,
    inputs: &InputEnsemble,
    w: &WeightVector,
    metric: &BaseMetric,
    p: f64,
) -> Result<Certificate> {
    if inputs.is_empty() {
        return Err(domain("empty input ensemble"));
    }
    if inputs.horizon() != w.horizon() {
        return Err(Error::HorizonMismatch {
            expected: w.horizon(),
            got: inputs.horizon(),
        });
    }
    if inputs.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: inputs.input_dim(),
        });
    }
    metric.check_dim(model.state_dim())?;
    let anchor = model.anchor();
    let per_path = map_indexed(inputs.len(), |i| {
        let u = &inputs.inputs[i];
        let mut y = vec![0.0; anchor.len()];
        w.weights()
            .iter()
            .enumerate()
            .map(|(k, wk)| {
                model.step_into(anchor, u.at(k), &mut y);
                wk * metric.dist(&y, anchor).powf(p)
            })
            .sum::<f64>()
    });
    let (c, se) = mean_and_stderr(&per_path);
    Ok(Certificate {
        kind: CertificateKind::Boundedness,
        estimate: c,
        threshold: None,
        pass: c.is_finite(),
        method: CertificateMethod::MonteCarlo,
        n_samples: inputs.len(),
        std_error: Some(se),
        notes: format!("truncated at T={}; discarded weight {:.3e}", w.horizon(), w.tail_mass()),
    })
}

/// `κ < 2^{1−p} / γ`; also reports the deterministic-style `κγ < 1`.
pub fn check_theorem_condition(kappa: f64, gamma: f64, p: f64) -> Certificate {
    let threshold = 2f64.powf(1.0 - p) / gamma;
    let valid = kappa >= 0.0 && gamma >= 1.0 && p >= 1.0 && kappa.is_finite();
    let pass = valid && kappa < threshold;
    let notes = if valid {
        format!(
            "kappa*gamma = {:.6} ({} 1)",
            kappa * gamma,
            if kappa * gamma < 1.0 { "<" } else { ">=" }
        )
    } else {
        "invalid inputs: need kappa >= 0, gamma >= 1, p >= 1".to_string()
    };
    Certificate::analytic(CertificateKind::TheoremCondition, kappa, Some(threshold), pass, notes)
}

/// Uniform-in-`u` Lipschitz constant of `f(·, u)` in `metric`, where one is
/// available in closed form. Fails the certificate when `f` is not a
/// uniform contraction or no closed form applies.
pub fn pointwise_contraction(model: &StateModel, metric: &BaseMetric) -> Result<Certificate> {
    metric.check_dim(model.state_dim())?;
    let scaling = |n: usize| -> Option<Vec<f64>> {
        match metric {
            BaseMetric::Euclidean => Some(vec![1.0; n]),
            BaseMetric::DiagScaled(d) => Some(d.clone()),
            BaseMetric::CappedEuclidean => None,
        }
    };
    let Some(d) = scaling(model.state_dim()) else {
        return Ok(Certificate::analytic(
            CertificateKind::PointwiseContraction,
            f64::INFINITY,
            Some(1.0),
            false,
            "capped metric is not a norm; no Lipschitz bound",
        ));
    };
    let (c, note): (Option<f64>, &str) = match model.map() {
        StateMap::LinearTest { a } => (Some(a.abs()), "|a|"),
        StateMap::Garch(g) if g.alpha == 0.0 => (Some(g.beta), "beta (alpha = 0)"),
        StateMap::Garch(_) => (None, "alpha*u^2 + beta is unbounded in u"),
        StateMap::Esn(p) => (
            Some(esn_scaled_norm(&p.reservoir(), &d)?),
            "||D A D^-1||_2, tanh is 1-Lipschitz",
        ),
        StateMap::Affine(p) if p.a.degree() == 0 => {
            let n = model.state_dim();
            let a = DMatrix::from_row_slice(n, n, p.a.constant_term());
            (Some(esn_scaled_norm(&a, &d)?), "||D A D^-1||_2 for constant A")
        }
        StateMap::Affine(_) => (None, "input-dependent A(u)"),
        StateMap::EulerSde(p) if p.diffusion.lipschitz() == 0.0 => {
            let drift = p.drift.lipschitz() * p.step;
            match p.form {
                crate::models::EulerForm::Paper => (Some(drift), "h * Lip(alpha)"),
                crate::models::EulerForm::Drifted => (None, "drifted form needs a one-sided drift bound"),
            }
        }
        StateMap::EulerSde(_) => (None, "state-dependent diffusion times unbounded u"),
    };
    Ok(match c {
        Some(c) => Certificate::analytic(CertificateKind::PointwiseContraction, c, Some(1.0), c < 1.0, note),
        None => Certificate::analytic(
            CertificateKind::PointwiseContraction,
            f64::INFINITY,
            Some(1.0),
            false,
            note,
        ),
    })
}

/// `‖D A D⁻¹‖_{2,op}` by power iteration on `MᵀM`, `M = D A D⁻¹`.
pub fn esn_scaled_norm(a: &DMatrix<f64>, d: &[f64]) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(domain("reservoir matrix must be square"));
    }
    if d.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: d.len(),
        });
    }
    if d.iter().any(|x| *x == 0.0 || !x.is_finite()) {
        return Err(domain("diagonal scaling D is singular"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| d[i] * a[(i, j)] / d[j]);
    let s = m.transpose() * &m;
    // fixed, non-symmetric start vector
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.37 * (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..100_000 {
        let sv = &s * &v;
        let norm = sv.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = v.dot(&sv);
        v = sv / norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda.max(0.0).sqrt())
}

/// The 2×2 reservoir `[[0, c^{−1/2}], [−c^{3/2}, c+1]]` without the
/// deterministic echo state property for any `c > 0`.
pub fn esn_counterexample_matrix(c: f64) -> Result<DMatrix<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(domain(format!("counterexample parameter c must be positive, got {c}")));
    }
    Ok(DMatrix::from_row_slice(
        2,
        2,
        &[0.0, c.powf(-0.5), -c.powf(1.5), c + 1.0],
    ))
}

/// Closed-form `λ_max((DAD⁻¹)ᵀDAD⁻¹)` for the counterexample reservoir with
/// `D = diag(d₁, d₂)`, `d = d₁/d₂`.
pub fn esn_counterexample_lambda_max(c: f64, d: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) || d == 0.0 || !d.is_finite() {
        return Err(domain("need c > 0 and d ≠ 0"));
    }
    let tr = c.powi(3) / (d * d) + d * d / c + (c + 1.0).powi(2);
    Ok(tr / 2.0 + (tr * tr - 4.0 * c * c).sqrt() / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnCounterexample {
    pub a: DMatrix<f64>,
    /// `inf_D ‖DAD⁻¹‖₂`
    pub inf_norm: f64,
    /// Minimizing ratio `d₁/d₂`.
    pub d_opt: f64,
}

/// `inf_D ‖DAD⁻¹‖₂` for the counterexample reservoir, attained at `d = c`.
pub fn esn_counterexample_norm(c: f64) -> Result<EsnCounterexample> {
    let a = esn_counterexample_matrix(c)?;
    let tr = 2.0 * c + (c + 1.0).powi(2);
    let lambda = tr / 2.0 + (tr * tr - 4.0 * c * c).sqrt() / 2.0;
    Ok(EsnCounterexample {
        a,
        inf_norm: lambda.sqrt(),
        d_opt: c,
    })
}

/// Lipschitz constant of tanh outside radius `r`: `1 − tanh²(r)`, the
/// derivative at the boundary (tanh′ is even and decreasing in `|x|`).
pub fn tanh_lipschitz_outside(r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("radius must be positive, got {r}")));
    }
    let t = r.tanh();
    Ok(1.0 - t * t)
}

/// `L_r = √((L_r′² + 2) / 3)`.
pub fn esn_l_r(r: f64) -> Result<f64> {
    let l = tanh_lipschitz_outside(r)?;
    Ok(((l * l + 2.0) / 3.0).sqrt())
}

/// Admissible excess `ε = (1 − (1 − L_r^p)δ)^{−1/p} − 1` of `‖DAD⁻¹‖₂` over 1.
pub fn esn_epsilon_bound(l_r: f64, delta: f64, p: f64) -> Result<f64> {
    if !(l_r > 0.0 && l_r < 1.0) {
        return Err(domain(format!("L_r must lie in (0, 1), got {l_r}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(domain(format!("p must be ≥ 1, got {p}")));
    }
    Ok((1.0 - (1.0 - l_r.powf(p)) * delta).powf(-1.0 / p) - 1.0)
}

/// Outcome of the integrability counterexample for `f(x, u) = αx`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    /// `γα`, must exceed 1.
    pub gamma_alpha: f64,
    /// `γα^p`, must stay below `2^{1−p}`.
    pub gamma_alpha_p: f64,
    /// Largest `|F(x̄)_t − x_t|` at interior indices for `x̄ ≡ 0`.
    pub zero_residual: f64,
    /// Largest relative `|F(x̄)_t − x_t| / |x_t|` at interior indices for `x_t = α^t`.
    pub geometric_residual: f64,
    /// `(T, S_T)` with `S_T = (γ−1) Σ_{t=−T}^{−1} (γα^p)^t`.
    pub partial_sums: Vec<(usize, f64)>,
    pub monotone: bool,
    /// First `T` with `S_T` above the threshold.
    pub first_exceeding: Option<usize>,
    pub threshold: f64,
    pub pass: bool,
}

/// Verifies that `x̄ ≡ 0` and `x_t = α^t` are both fixed points of `F` for
/// `f(x, u) = αx`, and that the second one has divergent weighted p-th
/// moment sums, so it lies outside the integrable class.
pub fn appendix_d_counterexample(
    alpha: f64,
    gamma: f64,
    p: f64,
    horizon: usize,
    threshold: f64,
) -> Result<CounterexampleReport> {
    let mut violations = Vec::new();
    if !(p > 1.0 && p.is_finite()) {
        violations.push(format!("p must exceed 1, got {p}"));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        violations.push(format!("alpha must lie in (0, 1/2), got {alpha}"));
    }
    if !(gamma > 1.0 && gamma.is_finite()) {
        violations.push(format!("gamma must exceed 1, got {gamma}"));
    }
    if violations.is_empty() {
        if gamma * alpha <= 1.0 {
            violations.push(format!("need gamma*alpha > 1, got {}", gamma * alpha));
        }
        if gamma * alpha.powf(p) >= 2f64.powf(1.0 - p) {
            violations.push(format!(
                "need gamma*alpha^p < 2^(1-p) = {}, got {}",
                2f64.powf(1.0 - p),
                gamma * alpha.powf(p)
            ));
        }
    }
    if horizon < 2 {
        violations.push("horizon must be at least 2".into());
    }
    if !violations.is_empty() {
        return Err(domain(violations.join("; ")));
    }

    let model = StateModel::affine(
        TensorPoly::constant(1, 1, 1, vec![alpha])?,
        TensorPoly::constant(1, 1, 1, vec![0.0])?,
    )?;
    let u = PathWindow::constant(&[0.0], horizon);
    let zero = PathWindow::constant(&[0.0], horizon);
    let fz = model.extend_f(&zero, &u, None)?;
    let zero_residual = (0..horizon - 1)
        .map(|k| (fz.at(k)[0] - zero.at(k)[0]).abs())
        .fold(0.0, f64::max);

    // x_t = α^t at t = −(k+1)
    let geo = PathWindow::scalar((0..horizon).map(|k| alpha.powi(-(k as i32 + 1))).collect())?;
    let fg = model.extend_f(&geo, &u, None)?;
    let geometric_residual = (0..horizon - 1)
        .map(|k| ((fg.at(k)[0] - geo.at(k)[0]) / geo.at(k)[0]).abs())
        .fold(0.0, f64::max);

    let ratio = gamma * alpha.powf(p);
    let mut partial_sums = Vec::with_capacity(horizon);
    let mut acc = 0.0;
    for t in 1..=horizon {
        acc += (gamma - 1.0) * ratio.powi(-(t as i32));
        partial_sums.push((t, acc));
    }
    let monotone = partial_sums.windows(2).all(|w| w[1].1 > w[0].1);
    let first_exceeding = partial_sums.iter().find(|(_, s)| *s > threshold).map(|(t, _)| *t);
    let pass = monotone && first_exceeding.is_some() && zero_residual == 0.0 && geometric_residual < 1e-12;
    Ok(CounterexampleReport {
        alpha,
        gamma,
        p,
        gamma_alpha: gamma * alpha,
        gamma_alpha_p: ratio,
        zero_residual,
        geometric_residual,
        partial_sums,
        monotone,
        first_exceeding,
        threshold,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::HiddenDist;
    use approx::assert_relative_eq;

    fn normal(seed: u64) -> HiddenSampler {
        HiddenSampler::new(HiddenDist::StdNormal, 1, seed).unwrap()
    }

    #[test]
    fn garch_kappa_analytic() {
        let c = garch_kappa(0.1, 0.8, 1.0, &normal(0), 0).unwrap();
        assert_eq!(c.method, CertificateMethod::Analytic);
        assert!((c.estimate - 0.9).abs() < 1e-15);
        assert!(c.pass);
        let z = garch_kappa(0.0, 0.0, 1.0, &normal(0), 0).unwrap();
        assert_eq!(z.estimate, 0.0);
    }

    #[test]
    fn garch_kappa_second_moment() {
        // E[(0.1η² + 0.8)²] = 0.01·3 + 0.16 + 0.64
        let c = garch_kappa(0.1, 0.8, 2.0, &normal(3), 200_000).unwrap();
        assert_eq!(c.method, CertificateMethod::MonteCarlo);
        let se = c.std_error.unwrap();
        assert!((c.estimate - 0.83).abs() < 4.0 * se, "{} ± {}", c.estimate, se);
    }

    #[test]
    fn garch_kappa_flags_heavy_tails() {
        let t = HiddenSampler::new(HiddenDist::StudentT { nu: 3.0 }, 1, 0).unwrap();
        let c = garch_kappa(0.1, 0.8, 2.0, &t, 1000).unwrap();
        assert!(!c.pass);
        assert!(c.estimate.is_infinite());
    }

    #[test]
    fn linear_contractivity_is_exact() {
        let m = StateModel::linear_test(0.5).unwrap();
        let c = contractivity_estimate(
            &m,
            &normal(1),
            &CausalFilter::Identity,
            &BaseMetric::Euclidean,
            1.0,
            &StateBox::default_for(&m),
            32,
            100,
        )
        .unwrap();
        assert_relative_eq!(c.estimate, 0.5, max_relative = 1e-12);
        assert!(c.std_error.unwrap() < 1e-12);
        assert!(c.pass);
    }

    #[test]
    fn contractivity_rejects_filters() {
        let m = StateModel::linear_test(0.5).unwrap();
        let fir = CausalFilter::scalar_fir(&[1.0, 0.5]).unwrap();
        let r = contractivity_estimate(
            &m,
            &normal(1),
            &fir,
            &BaseMetric::Euclidean,
            1.0,
            &StateBox::default_for(&m),
            4,
            10,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn existence_condition_arithmetic() {
        assert!(check_theorem_condition(0.6, 1.5, 1.0).pass);
        let c = check_theorem_condition(0.42, 1.2, 2.0);
        assert!(!c.pass);
        assert_relative_eq!(c.threshold.unwrap(), 0.5 / 1.2);
        assert!(check_theorem_condition(0.999, 1.0 + 1e-9, 1.0).pass);
    }

    #[test]
    fn scaled_norm_simple_cases() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(
            esn_scaled_norm(&i, &[1.0, 5.0, 0.2]).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7]);
        assert_relative_eq!(esn_scaled_norm(&d, &[1.0, 1.0]).unwrap(), 0.7, max_relative = 1e-12);
        assert!(esn_scaled_norm(&i, &[1.0, 0.0, 1.0]).is_err());
        assert_eq!(esn_scaled_norm(&DMatrix::zeros(2, 2), &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn counterexample_closed_form_values() {
        assert_relative_eq!(
            esn_counterexample_norm(0.01).unwrap().inf_norm,
            1.019_806,
            epsilon = 1e-6
        );
        assert_relative_eq!(esn_counterexample_norm(0.1).unwrap().inf_norm, 1.184_43, epsilon = 1e-5);
        assert!(esn_counterexample_norm(0.0).is_err());
    }

    #[test]
    fn epsilon_bound_values_and_limits() {
        assert_relative_eq!(
            esn_epsilon_bound(0.5, 0.5, 1.0).unwrap(),
            1.0 / 0.75 - 1.0,
            max_relative = 1e-14
        );
        assert!(esn_epsilon_bound(0.5, 1e-12, 1.0).unwrap() < 1e-11);
        assert!(esn_epsilon_bound(1.0 - 1e-12, 0.5, 2.0).unwrap() < 1e-11);
        assert!(esn_epsilon_bound(0.5, 0.6, 1.0).unwrap() > esn_epsilon_bound(0.5, 0.5, 1.0).unwrap());
        assert!(esn_epsilon_bound(0.4, 0.5, 1.0).unwrap() > esn_epsilon_bound(0.5, 0.5, 1.0).unwrap());
        assert!(esn_epsilon_bound(1.0, 0.5, 1.0).is_err());
        assert!(esn_epsilon_bound(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn l_r_from_radius() {
        let l = esn_l_r(1.0).unwrap();
        let lp = 1.0 - 1f64.tanh().powi(2);
        assert_relative_eq!(l, ((lp * lp + 2.0) / 3.0).sqrt());
        assert!(l < 1.0);
    }

    #[test]
    fn counterexample_validation() {
        let r = appendix_d_counterexample(0.4, 2.6, 2.0, 18, 1e6).unwrap();
        assert_relative_eq!(r.gamma_alpha, 1.04, max_relative = 1e-12);
        assert_relative_eq!(r.gamma_alpha_p, 0.416, max_relative = 1e-12);
        assert!(r.pass);
        // γα ≤ 1
        assert!(appendix_d_counterexample(0.4, 2.4, 2.0, 18, 1e6).is_err());
        // p = 1 is excluded
        assert!(appendix_d_counterexample(0.4, 2.6, 1.0, 18, 1e6).is_err());
    }

    #[test]
    fn pointwise_contraction_kinds() {
        let lin = StateModel::linear_test(-0.6).unwrap();
        let c = pointwise_contraction(&lin, &BaseMetric::Euclidean).unwrap();
        assert_eq!(c.estimate, 0.6);
        assert!(c.pass);
        let g = StateModel::garch(0.1, 0.1, 0.8).unwrap();
        assert!(!pointwise_contraction(&g, &BaseMetric::Euclidean).unwrap().pass);
        assert!(!pointwise_contraction(&lin, &BaseMetric::CappedEuclidean).unwrap().pass);
    }
}
