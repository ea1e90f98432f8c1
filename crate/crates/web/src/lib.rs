//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the
//! logic can be tested natively.

use wasm_bindgen::prelude::*;

use stochesp::certificates::{appendix_d_counterexample, esn_counterexample_norm, esn_scaled_norm};
use stochesp::dynamics::{converge_fixed_point, fit_decay_rate};
use stochesp::inputs::generate_inputs;
use stochesp::{CausalFilter, ConvergeConfig, HiddenDist, HiddenSampler, StateModel, WeightVector};

/// Result of a fixed-point run, flattened for JavaScript.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct TraceView {
    steps: Vec<f64>,
    q: f64,
    converged: bool,
    mean: f64,
}

#[wasm_bindgen]
impl TraceView {
    /// Coupled step distances, one per iteration.
    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> Vec<f64> {
        self.steps.clone()
    }

    /// Fitted decay rate; NaN when too few steps were taken.
    #[wasm_bindgen(getter)]
    pub fn q(&self) -> f64 {
        self.q
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Mean of the newest state entry over paths.
    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.mean
    }
}

pub fn run_trace(
    model: &str,
    param: f64,
    gamma: f64,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<TraceView, String> {
    let model = match model {
        "linear" => StateModel::linear_test(param),
        // param is alpha; beta keeps alpha + beta at 0.95
        "garch" => StateModel::garch(0.05, param, 0.95 - param),
        other => return Err(format!("unknown model {other}")),
    }
    .map_err(|e| e.to_string())?;
    let sampler = HiddenSampler::new(HiddenDist::StdNormal, 1, seed).map_err(|e| e.to_string())?;
    let inputs = generate_inputs(&sampler, &CausalFilter::Identity, n_paths, horizon).map_err(|e| e.to_string())?;
    let w = WeightVector::new(gamma, horizon).map_err(|e| e.to_string())?;
    let mut cfg = ConvergeConfig::new(w, 1.0);
    cfg.ot_subsample = 0;
    let fp = converge_fixed_point(&model, &inputs, &cfg).map_err(|e| e.to_string())?;
    let steps = fp.trace.step_distances();
    Ok(TraceView {
        q: fit_decay_rate(&steps).map(|f| f.q).unwrap_or(f64::NAN),
        converged: fp.trace.converged,
        mean: fp.state_mean(0, 0),
        steps,
    })
}

/// `‖D A D⁻¹‖₂` for the two-dimensional counterexample reservoir with
/// `D = diag(d, 1)`, on `n` log-spaced values of `d` in `[d_min, d_max]`.
/// Returns `d` values followed by norms.
pub fn esn_curve(c: f64, d_min: f64, d_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if !(d_min > 0.0 && d_max > d_min) || n < 2 {
        return Err("need 0 < d_min < d_max and n ≥ 2".into());
    }
    let ce = esn_counterexample_norm(c).map_err(|e| e.to_string())?;
    let ratio = (d_max / d_min).ln();
    let ds: Vec<f64> = (0..n)
        .map(|i| d_min * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    let mut out = ds.clone();
    for d in &ds {
        out.push(esn_scaled_norm(&ce.a, &[*d, 1.0]).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// Partial sums of the non-integrable series up to `horizon`.
pub fn counterexample_sums(alpha: f64, gamma: f64, p: f64, horizon: usize) -> Result<Vec<f64>, String> {
    let rep = appendix_d_counterexample(alpha, gamma, p, horizon, f64::INFINITY).map_err(|e| e.to_string())?;
    Ok(rep.partial_sums.iter().map(|(_, s)| *s).collect())
}

#[wasm_bindgen(js_name = convergenceTrace)]
pub fn convergence_trace(
    model: &str,
    param: f64,
    gamma: f64,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<TraceView, JsError> {
    run_trace(model, param, gamma, horizon, n_paths, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = esnNormCurve)]
pub fn esn_norm_curve(c: f64, d_min: f64, d_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    esn_curve(c, d_min, d_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = esnClosedForm)]
pub fn esn_closed_form(c: f64) -> Result<f64, JsError> {
    esn_counterexample_norm(c)
        .map(|ce| ce.inf_norm)
        .map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = counterexamplePartialSums)]
pub fn counterexample_partial_sums(alpha: f64, gamma: f64, p: f64, horizon: usize) -> Result<Vec<f64>, JsError> {
    counterexample_sums(alpha, gamma, p, horizon).map_err(|e| JsError::new(&e))
}
