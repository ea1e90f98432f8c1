//! Fixed-point iteration of `Fc` on ensembles of path windows.
//!
//! Each path keeps its input window; only states move. Starting from the
//! constant window at the anchor, after `n` steps entry `k` of a path equals
//! the `n`-fold composition of `f` along that path's inputs, so the ensemble
//! is a Monte Carlo sample of `Fc^n(μ)`.
//!
//! On a window of horizon `T` the iteration becomes exactly stationary after
//! `T` steps: entry `k` stops changing once `n ≥ T − k`. A run that has not met
//! its tolerance by then reports the window as exhausted rather than
//! converged.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificates::{Certificate, CertificateKind, StateBox};
use crate::error::{domain, Error, Result};
use crate::inputs::{fmt17, Ensemble, InputEnsemble};
use crate::models::{GarchParams, StateMap, StateModel};
use crate::numeric::{map_indexed, map_mut, mean, pairwise_sum};
use crate::seqspace::{BaseMetric, PathPair, PathWindow, ProductMetric, WeightVector};
use crate::wasserstein::{wasserstein, OtMethod, OtResult, SinkhornConfig, AUTO_ASSIGNMENT_MAX};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub weights: WeightVector,
    pub p: f64,
    /// Stop once the coupled step distance falls below this.
    pub tol: f64,
    /// Step cap; the window horizon caps it further.
    pub max_steps: usize,
    pub metric: ProductMetric,
    pub ot_method: OtMethod,
    /// Paths used for the optimal-transport step check; 0 disables it.
    pub ot_subsample: usize,
    /// Run the transport check every this many steps.
    pub ot_every: usize,
    pub sinkhorn: SinkhornConfig,
}

impl ConvergeConfig {
    pub fn new(weights: WeightVector, p: f64) -> Self {
        let max_steps = 4 * weights.horizon();
        Self {
            weights,
            p,
            tol: 1e-3,
            max_steps,
            metric: ProductMetric::default(),
            ot_method: OtMethod::Auto,
            ot_subsample: 128,
            ot_every: 1,
            sinkhorn: SinkhornConfig::default(),
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_state_metric(mut self, state: BaseMetric) -> Self {
        self.metric.state = state;
        self
    }

    fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.p >= 1.0 && self.p.is_finite()) {
            bad.push(format!("p must be ≥ 1, got {}", self.p));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            bad.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.ot_every == 0 {
            bad.push("ot_every must be positive".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(domain(bad.join("; ")))
        }
    }
}

/// One iteration's diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Number of `Fc` applications before this step.
    pub n: usize,
    /// Coupled step distance `(mean_i d(x̄ᵢⁿ⁺¹, x̄ᵢⁿ)^p)^{1/p}`, an upper bound on `W_p`.
    pub wp_step: f64,
    /// `W_p` between subsamples of consecutive ensembles, when computed.
    pub wp_step_ot: Option<f64>,
    /// Ensemble mean of state component 0 at `t = −1` after the step.
    pub mean_state: f64,
    pub var_state: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub steps: Vec<StepRecord>,
    pub fitted_q: Option<f64>,
    pub fitted_big_q: Option<f64>,
    pub converged: bool,
    /// The horizon ran out before the tolerance was met.
    pub window_exhausted: bool,
    pub tol: f64,
    /// Total number of `Fc` applications.
    pub n_final: usize,
}

impl ConvergenceTrace {
    pub fn step_distances(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.wp_step).collect()
    }

    /// CSV with header `n,wp_step_coupled,wp_step_ot,mean_state_t-1,var_state_t-1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "wp_step_coupled", "wp_step_ot", "mean_state_t-1", "var_state_t-1"])?;
        for s in &self.steps {
            w.write_record([
                s.n.to_string(),
                fmt17(s.wp_step),
                s.wp_step_ot.map(fmt17).unwrap_or_default(),
                fmt17(s.mean_state),
                fmt17(s.var_state),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointEstimate {
    pub ensemble: Ensemble,
    pub trace: ConvergenceTrace,
}

impl FixedPointEstimate {
    /// Mean of state component `component` at window index `k`.
    pub fn state_mean(&self, k: usize, component: usize) -> f64 {
        mean(&self.ensemble.state_marginal(k, component))
    }
}

fn check_compatible(model: &StateModel, ens: &Ensemble) -> Result<()> {
    if ens.is_empty() {
        return Err(domain("empty ensemble"));
    }
    if ens.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: ens.input_dim(),
        });
    }
    for pair in &ens.pairs {
        model.check_state_window(&pair.state)?;
    }
    Ok(())
}

/// Applies `Fc` to every path `n_steps` times, padding with the anchor.
pub fn iterate_fc(model: &StateModel, ens: &Ensemble, n_steps: usize) -> Result<Ensemble> {
    check_compatible(model, ens)?;
    let mut out = ens.clone();
    let pad = model.anchor();
    for pair in &mut out.pairs {
        for _ in 0..n_steps {
            model.advance_in_place(&mut pair.state, &pair.input, pad, None);
        }
    }
    Ok(out)
}

/// Iterates `Fc` from the constant anchor window until the step distance
/// drops below `cfg.tol`.
pub fn converge_fixed_point(
    model: &StateModel,
    inputs: &InputEnsemble,
    cfg: &ConvergeConfig,
) -> Result<FixedPointEstimate> {
    converge_from(model, Ensemble::from_inputs(inputs, model.anchor()), cfg)
}

/// As [`converge_fixed_point`], from an arbitrary initial ensemble.
pub fn converge_from(model: &StateModel, initial: Ensemble, cfg: &ConvergeConfig) -> Result<FixedPointEstimate> {
    cfg.validate()?;
    check_compatible(model, &initial)?;
    let horizon = initial.horizon();
    if horizon != cfg.weights.horizon() {
        return Err(Error::HorizonMismatch {
            expected: cfg.weights.horizon(),
            got: horizon,
        });
    }
    cfg.metric.state.check_dim(model.state_dim())?;

    let mut ens = initial;
    let n_paths = ens.len();
    let pad = model.anchor().to_vec();
    let state_metric = &cfg.metric.state;
    let w = &cfg.weights;
    let sub = cfg.ot_subsample.min(n_paths);
    let step_cap = cfg.max_steps.min(horizon);

    let mut steps = Vec::new();
    let mut converged = false;
    for n in 0..step_cap {
        let before = if sub > 0 && n % cfg.ot_every == 0 {
            Some(ens.pairs[..sub].to_vec())
        } else {
            None
        };
        let dists = advance_all(model, &mut ens.pairs, &pad, w, state_metric);
        let powered: Vec<f64> = dists.iter().map(|d| d.powf(cfg.p)).collect();
        let wp_step = (pairwise_sum(&powered) / n_paths as f64).powf(1.0 / cfg.p);

        let wp_step_ot = match before {
            Some(old) => {
                let a = Ensemble::new(old)?;
                let b = Ensemble::new(ens.pairs[..sub].to_vec())?;
                Some(wasserstein(&a, &b, &cfg.metric, w, cfg.p, cfg.ot_method, &cfg.sinkhorn)?.distance)
            }
            None => None,
        };
        let last = ens.state_marginal(0, 0);
        let m = mean(&last);
        let centred: Vec<f64> = last.iter().map(|x| (x - m) * (x - m)).collect();
        steps.push(StepRecord {
            n,
            wp_step,
            wp_step_ot,
            mean_state: m,
            var_state: if n_paths > 1 {
                pairwise_sum(&centred) / (n_paths - 1) as f64
            } else {
                0.0
            },
        });
        if !wp_step.is_finite() {
            return Err(Error::NonFinite { index: n });
        }
        if wp_step < cfg.tol {
            converged = true;
            break;
        }
    }
    let n_final = steps.len();
    let fit = fit_decay_rate(&steps.iter().map(|s| s.wp_step).collect::<Vec<_>>()).ok();
    let trace = ConvergenceTrace {
        fitted_q: fit.map(|f| f.q),
        fitted_big_q: fit.map(|f| f.big_q),
        converged,
        window_exhausted: !converged && n_final == horizon,
        tol: cfg.tol,
        n_final,
        steps,
    };
    Ok(FixedPointEstimate { ensemble: ens, trace })
}

fn advance_all(
    model: &StateModel,
    pairs: &mut [PathPair],
    pad: &[f64],
    w: &WeightVector,
    metric: &BaseMetric,
) -> Vec<f64> {
    map_mut(pairs, |p| {
        model.advance_in_place(&mut p.state, &p.input, pad, Some((w, metric)))
    })
}

/// Least-squares fit of `d_n ≈ Q qⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub q: f64,
    pub big_q: f64,
    pub n_points: usize,
}

/// Fits `log d_n = log Q + n log q` on the tail half of the positive step
/// distances (at least five points). An all-zero sequence fits `q = Q = 0`.
pub fn fit_decay_rate(steps: &[f64]) -> Result<DecayFit> {
    const MIN_POINTS: usize = 5;
    if steps.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(domain("step distances must be finite and nonnegative"));
    }
    if !steps.is_empty() && steps.iter().all(|d| *d == 0.0) {
        return Ok(DecayFit {
            q: 0.0,
            big_q: 0.0,
            n_points: steps.len(),
        });
    }
    let positive: Vec<(f64, f64)> = steps
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(n, d)| (n as f64, d.ln()))
        .collect();
    if positive.len() < MIN_POINTS {
        return Err(domain(format!(
            "need at least {MIN_POINTS} positive step distances, got {}",
            positive.len()
        )));
    }
    let half = steps.len() / 2;
    let tail: Vec<(f64, f64)> = positive.iter().copied().filter(|(n, _)| *n >= half as f64).collect();
    let pts = if tail.len() >= MIN_POINTS {
        tail
    } else {
        positive[positive.len() - MIN_POINTS..].to_vec()
    };
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        q: slope.exp(),
        big_q: (my - slope * mx).exp(),
        n_points: pts.len(),
    })
}

/// `U_f(ū)` for a pointwise contraction: iterates `x̄ ↦ F(x̄, ū)` from the
/// anchor until successive windows are within `tol`.
///
/// Needs a passing pointwise-contraction certificate `c` with `c·|w| < 1`.
pub fn deterministic_filter(
    model: &StateModel,
    u: &PathWindow,
    w: &WeightVector,
    metric: &BaseMetric,
    tol: f64,
    cert: &Certificate,
) -> Result<PathWindow> {
    if cert.kind != CertificateKind::PointwiseContraction || !cert.pass {
        return Err(Error::NotCertified(
            "need a passing pointwise-contraction certificate".into(),
        ));
    }
    if !(cert.estimate * w.growth() < 1.0) {
        return Err(Error::NotCertified(format!(
            "c·|w| = {} is not below 1",
            cert.estimate * w.growth()
        )));
    }
    if !(tol > 0.0) {
        return Err(domain("tol must be positive"));
    }
    if u.horizon() != w.horizon() {
        return Err(Error::HorizonMismatch {
            expected: w.horizon(),
            got: u.horizon(),
        });
    }
    let mut x = PathWindow::constant(model.anchor(), u.horizon());
    model.check_state_window(&x)?;
    if u.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: u.dim(),
        });
    }
    for _ in 0..u.horizon() {
        if model.advance_in_place(&mut x, u, model.anchor(), Some((w, metric))) < tol {
            break;
        }
    }
    Ok(x)
}

/// The GARCH causal solution on a window:
/// `h_k = ω + ω Σ_{j≥1} Π_{i<j} (α u²_{k+i} + β)`, truncated at the window edge.
pub fn garch_series_filter(params: &GarchParams, u: &PathWindow) -> Result<PathWindow> {
    if u.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: u.dim(),
        });
    }
    let horizon = u.horizon();
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut sum = params.omega;
        let mut prod = 1.0;
        for i in k..horizon - 1 {
            prod *= params.alpha * u.at(i)[0] * u.at(i)[0] + params.beta;
            sum += params.omega * prod;
        }
        out.push(sum);
    }
    PathWindow::scalar(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Coupled distance between the iterated and filtered ensembles, pairing
    /// paths by shared inputs. Always an upper bound on `W_p`.
    pub coupled_upper: f64,
    /// Exact `W_p` over the full ensembles when small enough to solve.
    pub ot: Option<OtResult>,
    /// `ot` if available, else `coupled_upper`.
    pub distance: f64,
    pub trace: ConvergenceTrace,
}

/// Compares the iterated fixed point with `(U_f(ū), ū)_# ν_U`.
///
/// GARCH uses the series filter and needs a passing contractivity
/// certificate; other models go through [`deterministic_filter`].
pub fn consistency_check(
    model: &StateModel,
    inputs: &InputEnsemble,
    cfg: &ConvergeConfig,
    cert: &Certificate,
) -> Result<ConsistencyReport> {
    let fp = converge_fixed_point(model, inputs, cfg)?;
    let filtered: Vec<PathWindow> = match model.map() {
        StateMap::Garch(g) => {
            if cert.kind != CertificateKind::Contractivity || !cert.pass {
                return Err(Error::NotCertified(
                    "GARCH needs a passing contractivity certificate".into(),
                ));
            }
            inputs
                .inputs
                .iter()
                .map(|u| garch_series_filter(g, u))
                .collect::<Result<_>>()?
        }
        _ => map_indexed(inputs.len(), |i| {
            deterministic_filter(
                model,
                &inputs.inputs[i],
                &cfg.weights,
                &cfg.metric.state,
                cfg.tol * 1e-3,
                cert,
            )
        })
        .into_iter()
        .collect::<Result<_>>()?,
    };
    let det = Ensemble::new(
        filtered
            .into_iter()
            .zip(&inputs.inputs)
            .map(|(s, u)| PathPair {
                state: s,
                input: u.clone(),
            })
            .collect(),
    )?;
    let (coupled_upper, ot) = compare_ensembles(&fp.ensemble, &det, cfg)?;
    Ok(ConsistencyReport {
        distance: ot.as_ref().map_or(coupled_upper, |o| o.distance),
        coupled_upper,
        ot,
        trace: fp.trace,
    })
}

fn compare_ensembles(a: &Ensemble, b: &Ensemble, cfg: &ConvergeConfig) -> Result<(f64, Option<OtResult>)> {
    let w = &cfg.weights;
    let costs = map_indexed(a.len(), |i| {
        cfg.metric.dist_unchecked(&a.pairs[i], &b.pairs[i], w).powf(cfg.p)
    });
    let coupled = (pairwise_sum(&costs) / a.len() as f64).powf(1.0 / cfg.p);
    let ot = if a.len() <= AUTO_ASSIGNMENT_MAX {
        Some(wasserstein(a, b, &cfg.metric, w, cfg.p, cfg.ot_method, &cfg.sinkhorn)?)
    } else {
        None
    };
    Ok((coupled, ot))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub coupled_upper: f64,
    pub ot: Option<OtResult>,
    pub distance: f64,
    pub converged: (bool, bool),
}

/// Random initial windows, uniform in `box_` at every window index.
pub fn random_initial(inputs: &InputEnsemble, box_: &StateBox, seed: u64) -> Result<Ensemble> {
    let horizon = inputs.horizon();
    let dim = box_.dim();
    let pairs = map_indexed(inputs.len(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let values = (0..horizon * dim)
            .map(|j| {
                let c = j % dim;
                box_.lo[c] + rng.random::<f64>() * (box_.hi[c] - box_.lo[c])
            })
            .collect();
        PathPair {
            state: PathWindow::new(dim, horizon, values).expect("finite box"),
            input: inputs.inputs[i].clone(),
        }
    });
    Ensemble::new(pairs)
}

/// Runs the iteration from the anchor and from a random window with the same
/// inputs and measures how far apart the two limits are.
pub fn uniqueness_probe(
    model: &StateModel,
    inputs: &InputEnsemble,
    cfg: &ConvergeConfig,
    box_: &StateBox,
    seed: u64,
) -> Result<UniquenessReport> {
    let a = converge_fixed_point(model, inputs, cfg)?;
    let b = converge_from(model, random_initial(inputs, box_, seed)?, cfg)?;
    let (coupled_upper, ot) = compare_ensembles(&a.ensemble, &b.ensemble, cfg)?;
    Ok(UniquenessReport {
        distance: ot.as_ref().map_or(coupled_upper, |o| o.distance),
        coupled_upper,
        ot,
        converged: (a.trace.converged, b.trace.converged),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub max_z_mean: f64,
    pub max_z_var: f64,
    pub max_z_autocov: f64,
    /// Largest absolute deviation of any statistic from its time average.
    pub max_discrepancy: f64,
    /// Window indices compared, `k < T/2`.
    pub n_times: usize,
    pub pass: bool,
}

/// Shift invariance of the fixed point: per state component, the mean,
/// variance and autocovariances up to `max_lag` at each window index
/// `k < T/2` against their average over those indices. Passes when every
/// deviation is under 4 standard errors.
pub fn stationarity_check(fp: &FixedPointEstimate, max_lag: usize) -> Result<StationarityReport> {
    let ens = &fp.ensemble;
    let horizon = ens.horizon();
    let n_times = horizon / 2;
    if n_times == 0 || n_times + max_lag > horizon {
        return Err(domain(format!("horizon {horizon} too short for lag {max_lag}")));
    }
    let n = ens.len();
    if n < 2 {
        return Err(domain("need at least two paths"));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut z = [0.0f64; 3];
    let mut max_discrepancy = 0.0f64;

    for c in 0..ens.state_dim() {
        let cols: Vec<Vec<f64>> = (0..n_times + max_lag).map(|k| ens.state_marginal(k, c)).collect();
        let means: Vec<f64> = cols.iter().map(|v| mean(v)).collect();
        let centred: Vec<Vec<f64>> = cols
            .iter()
            .zip(&means)
            .map(|(v, m)| v.iter().map(|x| x - m).collect())
            .collect();

        // (statistic slot, per-path terms at each k)
        let mut families: Vec<(usize, Vec<Vec<f64>>)> = vec![
            (0, cols[..n_times].to_vec()),
            (
                1,
                centred[..n_times]
                    .iter()
                    .map(|v| v.iter().map(|x| x * x).collect())
                    .collect(),
            ),
        ];
        for lag in 1..=max_lag {
            families.push((
                2,
                (0..n_times)
                    .map(|k| centred[k].iter().zip(&centred[k + lag]).map(|(a, b)| a * b).collect())
                    .collect(),
            ));
        }
        for (slot, terms) in families {
            let stats: Vec<(f64, f64)> = terms
                .iter()
                .map(|t| {
                    let m = mean(t);
                    let var = t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (m, var.sqrt() / sqrt_n)
                })
                .collect();
            let avg = stats.iter().map(|s| s.0).sum::<f64>() / n_times as f64;
            for (m, se) in stats {
                let dev = (m - avg).abs();
                max_discrepancy = max_discrepancy.max(dev);
                let scale = avg.abs().max(m.abs()).max(1.0);
                let zi = if dev <= 1e-12 * scale {
                    0.0
                } else if se > 0.0 {
                    dev / se
                } else {
                    f64::INFINITY
                };
                z[slot] = z[slot].max(zi);
            }
        }
    }
    Ok(StationarityReport {
        max_z_mean: z[0],
        max_z_var: z[1],
        max_z_autocov: z[2],
        max_discrepancy,
        n_times,
        pass: z.iter().all(|v| *v < 4.0),
    })
}
