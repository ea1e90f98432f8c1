//! Experiment configuration files.
//!
//! A config is sectioned `key = value` text: top-level keys, then `[model]`,
//! `[inputs]`, `[weights]`, `[run]` and, per experiment, `[counterexample]`
//! or `[esn]`. Values are numbers, quoted strings, booleans or bracketed
//! arrays. Lines starting with `#` are comments. Unknown keys are errors.
//!
//! ```toml
//! experiment = "converge"
//! seed = 7
//!
//! [model]
//! kind = "garch"
//! omega = 0.05
//! alpha = 0.1
//! beta = 0.85
//!
//! [inputs]
//! dist = "std_normal"
//!
//! [weights]
//! gamma = 1.25
//! horizon = 128
//!
//! [run]
//! p = 1.0
//! n_paths = 20000
//! ```

use serde::Deserialize;

use crate::error::{domain, Error, Result};
use crate::inputs::{CausalFilter, HiddenDist, HiddenSampler, PointwiseMap};
use crate::models::{EulerForm, EulerSdeParams, PiecewiseLinear, StateModel, TensorPoly};
use crate::seqspace::{BaseMetric, WeightVector};
use crate::wasserstein::OtMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Converge,
    Certify,
    Consistency,
    CounterexampleD,
    EsnGap,
    Stationarity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Converge,
        ExperimentKind::Certify,
        ExperimentKind::Consistency,
        ExperimentKind::CounterexampleD,
        ExperimentKind::EsnGap,
        ExperimentKind::Stationarity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Converge => "converge",
            ExperimentKind::Certify => "certify",
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::CounterexampleD => "counterexample_d",
            ExperimentKind::EsnGap => "esn_gap",
            ExperimentKind::Stationarity => "stationarity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Extra seeds for experiments that repeat over seeds.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub out: Option<String>,
    pub model: Option<ModelSpec>,
    pub inputs: Option<InputSpec>,
    pub weights: Option<WeightSpec>,
    #[serde(default)]
    pub run: RunSpec,
    pub counterexample: Option<CounterexampleSpec>,
    pub esn: Option<EsnGapSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `garch`, `linear`, `affine`, `esn` or `euler_sde`.
    pub kind: String,
    pub omega: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Linear test coefficient.
    pub a: Option<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    /// Row-major matrices for `esn` and `affine`.
    pub reservoir: Option<Vec<f64>>,
    pub input_weights: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub drift_knots: Option<Vec<f64>>,
    pub drift_values: Option<Vec<f64>>,
    pub diffusion_knots: Option<Vec<f64>>,
    pub diffusion_values: Option<Vec<f64>>,
    pub step: Option<f64>,
    /// `drifted` (default) or `paper`.
    pub form: Option<String>,
    pub anchor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// `std_normal`, `uniform`, `rademacher` or `student_t`.
    pub dist: String,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub nu: Option<f64>,
    /// Hidden dimension; defaults to the model's input dimension.
    pub dim: Option<usize>,
    /// Scalar FIR coefficients `h_0, h_1, ...`; identity when absent.
    pub fir: Option<Vec<f64>>,
    /// Multiplies every observed input.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub gamma: f64,
    pub horizon: Option<usize>,
    /// Chooses the horizon so that the discarded weight is below this.
    /// With neither key set, the tolerance is `1e-6`.
    pub tail_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub p: f64,
    pub n_paths: usize,
    pub tol: f64,
    pub max_steps: Option<usize>,
    /// `auto`, `quantile`, `assignment` or `sinkhorn`.
    pub ot: String,
    pub ot_subsample: usize,
    pub ot_every: usize,
    pub sinkhorn_reg: f64,
    /// Scalar state metric scaling (`DiagScaled`); Euclidean when absent.
    pub state_scaling: Option<Vec<f64>>,
    pub n_state_pairs: usize,
    pub n_mc_samples: usize,
    pub max_lag: usize,
    /// Pass threshold for consistency distances; `5·tol` when absent.
    pub threshold: Option<f64>,
    /// Paths written to `fixedpoint.csv`.
    pub dump_paths: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            p: 1.0,
            n_paths: 1000,
            tol: 1e-3,
            max_steps: None,
            ot: "auto".into(),
            ot_subsample: 128,
            ot_every: 1,
            sinkhorn_reg: 1e-2,
            state_scaling: None,
            n_state_pairs: 64,
            n_mc_samples: 4000,
            max_lag: 3,
            threshold: None,
            dump_paths: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    #[serde(default = "default_ce_horizon")]
    pub horizon: usize,
    #[serde(default = "default_ce_threshold")]
    pub threshold: f64,
}

fn default_ce_horizon() -> usize {
    18
}

fn default_ce_threshold() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsnGapSpec {
    pub c: f64,
    #[serde(default = "default_input_std")]
    pub input_std: f64,
}

fn default_input_std() -> f64 {
    3.0
}

/// Parses config text. Syntax errors and unknown keys carry line numbers.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(describe_toml_error(text, &e)))?;
    cfg.validate()?;
    Ok(cfg)
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg,
    }
}

fn need<T: Copy>(v: Option<T>, name: &str, errs: &mut Vec<String>) -> Option<T> {
    if v.is_none() {
        errs.push(format!("missing key {name}"));
    }
    v
}

impl ExperimentConfig {
    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let needs_model = !matches!(
            self.experiment,
            ExperimentKind::CounterexampleD | ExperimentKind::EsnGap
        );
        if needs_model {
            match &self.model {
                None => errs.push("missing section [model]".into()),
                Some(_) => {
                    if let Err(e) = self.build_model() {
                        errs.push(format!("[model] {e}"));
                    }
                }
            }
        }
        let needs_inputs = self.experiment != ExperimentKind::CounterexampleD;
        if needs_inputs {
            match &self.inputs {
                None => errs.push("missing section [inputs]".into()),
                Some(spec) => {
                    if let Err(e) = spec.hidden_dist() {
                        errs.push(format!("[inputs] {e}"));
                    }
                    if let Some(s) = spec.scale {
                        if !(s.is_finite() && s != 0.0) {
                            errs.push(format!("[inputs] scale must be finite and nonzero, got {s}"));
                        }
                    }
                }
            }
            match &self.weights {
                None => errs.push("missing section [weights]".into()),
                Some(w) => {
                    if let Err(e) = w.build() {
                        errs.push(format!("[weights] {e}"));
                    }
                }
            }
        }
        let r = &self.run;
        if !(r.p >= 1.0 && r.p.is_finite()) {
            errs.push(format!("[run] p must be ≥ 1, got {}", r.p));
        }
        if r.n_paths == 0 {
            errs.push("[run] n_paths must be positive".into());
        }
        if !(r.tol > 0.0 && r.tol.is_finite()) {
            errs.push(format!("[run] tol must be positive, got {}", r.tol));
        }
        if OtMethod::parse(&r.ot).is_none() {
            errs.push(format!("[run] unknown ot method {:?}", r.ot));
        }
        if r.ot_every == 0 {
            errs.push("[run] ot_every must be positive".into());
        }
        if !(r.sinkhorn_reg > 0.0) {
            errs.push("[run] sinkhorn_reg must be positive".into());
        }
        if let Some(d) = &r.state_scaling {
            if let Err(e) = BaseMetric::diag_scaled(d.clone()) {
                errs.push(format!("[run] state_scaling: {e}"));
            }
        }
        if r.n_mc_samples < 2 {
            errs.push("[run] n_mc_samples must be at least 2".into());
        }
        match self.experiment {
            ExperimentKind::CounterexampleD if self.counterexample.is_none() => {
                errs.push("missing section [counterexample]".into())
            }
            ExperimentKind::EsnGap => match &self.esn {
                None => errs.push("missing section [esn]".into()),
                Some(e) => {
                    if !(e.c > 0.0 && e.c.is_finite()) {
                        errs.push(format!("[esn] c must be positive, got {}", e.c));
                    }
                    if !(e.input_std > 0.0 && e.input_std.is_finite()) {
                        errs.push(format!("[esn] input_std must be positive, got {}", e.input_std));
                    }
                }
            },
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(domain(format!("invalid config:\n  {}", errs.join("\n  "))))
        }
    }

    /// Seeds to run: `seeds` when given, else the single `seed`.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn build_model(&self) -> Result<StateModel> {
        let spec = self.model.as_ref().ok_or_else(|| domain("missing section [model]"))?;
        spec.build()
    }

    pub fn ot_method(&self) -> OtMethod {
        OtMethod::parse(&self.run.ot).unwrap_or(OtMethod::Auto)
    }

    pub fn state_metric(&self) -> Result<BaseMetric> {
        match &self.run.state_scaling {
            Some(d) => BaseMetric::diag_scaled(d.clone()),
            None => Ok(BaseMetric::Euclidean),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<StateModel> {
        let mut errs = Vec::new();
        let model = match self.kind.as_str() {
            "garch" => {
                let o = need(self.omega, "omega", &mut errs);
                let a = need(self.alpha, "alpha", &mut errs);
                let b = need(self.beta, "beta", &mut errs);
                match (o, a, b) {
                    (Some(o), Some(a), Some(b)) => Some(StateModel::garch(o, a, b)),
                    _ => None,
                }
            }
            "linear" => need(self.a, "a", &mut errs).map(StateModel::linear_test),
            "esn" => {
                let n = need(self.n, "n", &mut errs);
                let m = need(self.m, "m", &mut errs);
                let a = self.reservoir.clone();
                let c = self.input_weights.clone();
                if a.is_none() {
                    errs.push("missing key reservoir".into());
                }
                if c.is_none() {
                    errs.push("missing key input_weights".into());
                }
                match (n, m, a, c) {
                    (Some(n), Some(m), Some(a), Some(c)) => {
                        let b = self.bias.clone().unwrap_or_else(|| vec![0.0; n]);
                        Some(StateModel::esn(n, m, a, c, b))
                    }
                    _ => None,
                }
            }
            "affine" => {
                let n = need(self.n, "n", &mut errs);
                let m = need(self.m, "m", &mut errs);
                if self.reservoir.is_none() {
                    errs.push("missing key reservoir".into());
                }
                match (n, m, &self.reservoir) {
                    (Some(n), Some(m), Some(a)) => {
                        let b = self.bias.clone().unwrap_or_else(|| vec![0.0; n]);
                        Some(
                            TensorPoly::constant(n, n, m, a.clone())
                                .and_then(|a| StateModel::affine(a, TensorPoly::constant(n, 1, m, b)?)),
                        )
                    }
                    _ => None,
                }
            }
            "euler_sde" => {
                let pl = |k: &Option<Vec<f64>>, v: &Option<Vec<f64>>, name: &str, errs: &mut Vec<String>| match (k, v) {
                    (Some(k), Some(v)) => match PiecewiseLinear::new(k.clone(), v.clone()) {
                        Ok(p) => Some(p),
                        Err(e) => {
                            errs.push(format!("{name}: {e}"));
                            None
                        }
                    },
                    _ => {
                        errs.push(format!("missing keys {name}_knots / {name}_values"));
                        None
                    }
                };
                let drift = pl(&self.drift_knots, &self.drift_values, "drift", &mut errs);
                let diffusion = pl(&self.diffusion_knots, &self.diffusion_values, "diffusion", &mut errs);
                let step = need(self.step, "step", &mut errs);
                let form = match self.form.as_deref() {
                    None | Some("drifted") => Some(EulerForm::Drifted),
                    Some("paper") => Some(EulerForm::Paper),
                    Some(other) => {
                        errs.push(format!("unknown form {other:?}"));
                        None
                    }
                };
                match (drift, diffusion, step, form) {
                    (Some(drift), Some(diffusion), Some(step), Some(form)) => {
                        Some(StateModel::euler_sde(EulerSdeParams {
                            drift,
                            diffusion,
                            step,
                            form,
                        }))
                    }
                    _ => None,
                }
            }
            other => {
                errs.push(format!("unknown model kind {other:?}"));
                None
            }
        };
        if !errs.is_empty() {
            return Err(domain(errs.join("; ")));
        }
        let model = model.expect("checked")?;
        match &self.anchor {
            Some(a) => model.with_anchor(a.clone()),
            None => Ok(model),
        }
    }
}

impl InputSpec {
    pub fn hidden_dist(&self) -> Result<HiddenDist> {
        let d = match self.dist.as_str() {
            "std_normal" => HiddenDist::StdNormal,
            "rademacher" => HiddenDist::Rademacher,
            "uniform" => HiddenDist::Uniform {
                a: self.low.unwrap_or(-(3f64.sqrt())),
                b: self.high.unwrap_or(3f64.sqrt()),
            },
            "student_t" => HiddenDist::StudentT {
                nu: self.nu.ok_or_else(|| domain("student_t needs nu"))?,
            },
            other => return Err(domain(format!("unknown dist {other:?}"))),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn sampler(&self, input_dim: usize, seed: u64) -> Result<HiddenSampler> {
        HiddenSampler::new(self.hidden_dist()?, self.dim.unwrap_or(input_dim), seed)
    }

    pub fn filter(&self) -> Result<CausalFilter> {
        let base = match &self.fir {
            Some(h) => CausalFilter::scalar_fir(h)?,
            None => CausalFilter::Identity,
        };
        Ok(match self.scale {
            Some(s) if s != 1.0 => CausalFilter::Compose(vec![base, CausalFilter::Pointwise(PointwiseMap::Scale(s))]),
            _ => base,
        })
    }
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightVector> {
        match (self.horizon, self.tail_tol) {
            (Some(t), None) => WeightVector::new(self.gamma, t),
            (None, Some(tol)) => WeightVector::with_tail_tolerance(self.gamma, tol),
            (None, None) => WeightVector::with_tail_tolerance(self.gamma, 1e-6),
            (Some(_), Some(_)) => Err(domain("give at most one of horizon or tail_tol")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GARCH: &str = r#"
experiment = "converge"
seed = 7

[model]
kind = "garch"
omega = 0.05
alpha = 0.1
beta = 0.85

[inputs]
dist = "std_normal"

[weights]
gamma = 1.25
horizon = 64
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_config(GARCH).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Converge);
        assert_eq!(cfg.run.p, 1.0);
        assert_eq!(cfg.build_model().unwrap().kind_name(), "garch");
    }

    #[test]
    fn unknown_key_reports_line() {
        let bad = GARCH.replace("beta = 0.85", "beta = 0.85\nbetta = 0.1");
        let err = parse_config(&bad).unwrap_err().to_string();
        assert!(err.contains("line 10"), "{err}");
    }

    #[test]
    fn lists_every_violation() {
        let bad = GARCH
            .replace("omega = 0.05", "omega = -1.0")
            .replace("horizon = 64", "horizon = 64\ntail_tol = 1e-3");
        let err = parse_config(&bad).unwrap_err().to_string();
        assert!(err.contains("[model]") && err.contains("[weights]"), "{err}");
    }
}
