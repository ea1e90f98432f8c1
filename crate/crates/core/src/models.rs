//! State maps `f: X × U → X` and their extensions to path windows.
//!
//! `F(x̄, ū)_t = f(x_{t−1}, u_t)` shifts the state sequence one step forward,
//! and `Fc(x̄, ū) = (F(x̄, ū), ū)` leaves the input component untouched. On a
//! window of length `T` the state just before the window (time `−T−1`) is
//! supplied as a left pad, by default the model anchor `x_*`.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::seqspace::{BaseMetric, PathPair, PathWindow, WeightVector};

/// GARCH(1,1) variance recursion `f(x, u) = ω + (αu² + β)x` on `X = [0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    /// Stationary mean `ω / (1 − α − β)` of the variance process under
    /// unit-variance innovations, when `α + β < 1`.
    pub fn stationary_mean(&self) -> Option<f64> {
        let k = self.alpha + self.beta;
        (k < 1.0).then(|| self.omega / (1.0 - k))
    }
}

/// Matrix-valued polynomial of degree ≤ 2 in the input `u ∈ R^m`:
/// `P(u) = P₀ + Σ_i u_i P₁[i] + Σ_{i,j} u_i u_j P₂[i][j]`.
///
/// Coefficients are row-major `rows × cols` blocks laid out consecutively;
/// empty `linear` / `quadratic` arrays mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPoly {
    rows: usize,
    cols: usize,
    input_dim: usize,
    constant: Vec<f64>,
    linear: Vec<f64>,
    quadratic: Vec<f64>,
}

impl TensorPoly {
    pub fn new(
        rows: usize,
        cols: usize,
        input_dim: usize,
        constant: Vec<f64>,
        linear: Vec<f64>,
        quadratic: Vec<f64>,
    ) -> Result<Self> {
        let block = rows * cols;
        if block == 0 || input_dim == 0 {
            return Err(domain("tensor polynomial needs positive dimensions"));
        }
        let check = |len: usize, want: usize, what: &str| {
            if len != want && len != 0 {
                Err(domain(format!(
                    "{what} coefficients: expected {want} entries, got {len}"
                )))
            } else {
                Ok(())
            }
        };
        if constant.len() != block {
            return Err(domain(format!(
                "constant coefficient: expected {block} entries, got {}",
                constant.len()
            )));
        }
        check(linear.len(), input_dim * block, "linear")?;
        check(quadratic.len(), input_dim * input_dim * block, "quadratic")?;
        if constant.iter().chain(&linear).chain(&quadratic).any(|v| !v.is_finite()) {
            return Err(domain("tensor polynomial coefficients must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            input_dim,
            constant,
            linear,
            quadratic,
        })
    }

    /// Input-independent polynomial.
    pub fn constant(rows: usize, cols: usize, input_dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, input_dim, values, Vec::new(), Vec::new())
    }

    pub fn degree(&self) -> usize {
        if !self.quadratic.is_empty() {
            2
        } else if !self.linear.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn constant_term(&self) -> &[f64] {
        &self.constant
    }

    /// Writes `P(u)` (row-major) into `out`.
    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let block = self.rows * self.cols;
        out.copy_from_slice(&self.constant);
        if !self.linear.is_empty() {
            for (i, ui) in u.iter().enumerate() {
                let c = &self.linear[i * block..(i + 1) * block];
                out.iter_mut().zip(c).for_each(|(o, c)| *o += ui * c);
            }
        }
        if !self.quadratic.is_empty() {
            for (i, ui) in u.iter().enumerate() {
                for (j, uj) in u.iter().enumerate() {
                    let off = (i * self.input_dim + j) * block;
                    let c = &self.quadratic[off..off + block];
                    let s = ui * uj;
                    out.iter_mut().zip(c).for_each(|(o, c)| *o += s * c);
                }
            }
        }
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        self.eval_into(u, &mut out);
        out
    }
}

/// State-affine system `f(x, u) = A(u)x + b(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub a: TensorPoly,
    pub b: TensorPoly,
}

/// Echo state network `f(x, u) = tanh(Ax + Cu + b)`, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnParams {
    n: usize,
    m: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
}

impl EsnParams {
    pub fn reservoir(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }

    pub fn input_weights(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.m, &self.c)
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }
}

/// Scalar function given by linear interpolation between knots, extended
/// linearly beyond the first and last segments (so it stays Lipschitz).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(domain(
                "piecewise-linear table needs at least two knots and matching values",
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("piecewise-linear knots must be strictly increasing"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(domain("piecewise-linear table must be finite"));
        }
        Ok(Self { knots, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let seg = match self.knots.partition_point(|k| *k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let (x0, x1) = (self.knots[seg], self.knots[seg + 1]);
        let (y0, y1) = (self.values[seg], self.values[seg + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Largest absolute slope, the Lipschitz constant of the table.
    pub fn lipschitz(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Which form of the Euler-discretized difference equation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EulerForm {
    /// `f(x, u) = 1 + α(x)h + β(x)u`, the displayed state map.
    Paper,
    /// `f(x, u) = x + α(x)h + β(x)u`, the map implied by `Y_s − Y_{s−h} = αh + βΔW`.
    #[default]
    Drifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerSdeParams {
    pub drift: PiecewiseLinear,
    pub diffusion: PiecewiseLinear,
    pub step: f64,
    pub form: EulerForm,
}

/// The closed family of supported state maps.
#[derive(Debug, Clone, PartialEq)]
pub enum StateMap {
    Garch(GarchParams),
    Affine(AffineParams),
    Esn(EsnParams),
    EulerSde(EulerSdeParams),
    /// `f(x, u) = a·x + u` on the real line.
    LinearTest {
        a: f64,
    },
}

impl StateMap {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StateMap::Garch(_) => "garch",
            StateMap::Affine(_) => "affine",
            StateMap::Esn(_) => "esn",
            StateMap::EulerSde(_) => "euler_sde",
            StateMap::LinearTest { .. } => "linear_test",
        }
    }
}

/// A state map together with its dimensions and anchor point `x_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    map: StateMap,
    state_dim: usize,
    input_dim: usize,
    anchor: Vec<f64>,
}

impl StateModel {
    pub fn garch(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        if [omega, alpha, beta].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain(
                "GARCH parameters omega, alpha, beta must be finite and nonnegative",
            ));
        }
        Ok(Self {
            map: StateMap::Garch(GarchParams { omega, alpha, beta }),
            state_dim: 1,
            input_dim: 1,
            anchor: vec![0.0],
        })
    }

    pub fn linear_test(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(domain("linear test coefficient must be finite"));
        }
        Ok(Self {
            map: StateMap::LinearTest { a },
            state_dim: 1,
            input_dim: 1,
            anchor: vec![0.0],
        })
    }

    pub fn affine(a: TensorPoly, b: TensorPoly) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || b.rows() != n || b.cols() != 1 || a.input_dim != b.input_dim {
            return Err(domain(
                "affine model needs A(u) of shape n×n and b(u) of shape n×1 over the same input",
            ));
        }
        let input_dim = a.input_dim;
        Ok(Self {
            map: StateMap::Affine(AffineParams { a, b }),
            state_dim: n,
            input_dim,
            anchor: vec![0.0; n],
        })
    }

    /// Echo state network from row-major `A (n×n)`, `C (n×m)` and `b (n)`.
    /// `C` must have full column rank.
    pub fn esn(n: usize, m: usize, a: Vec<f64>, c: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(domain("ESN dimensions must be positive"));
        }
        if a.len() != n * n || c.len() != n * m || b.len() != n {
            return Err(domain("ESN matrix shapes do not match n and m"));
        }
        if a.iter().chain(&c).chain(&b).any(|v| !v.is_finite()) {
            return Err(domain("ESN parameters must be finite"));
        }
        let cm = DMatrix::from_row_slice(n, m, &c);
        let svd = cm.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > smax * 1e-12 * (n.max(m) as f64))
            .count();
        if m > n || rank < m {
            return Err(domain(format!(
                "ESN input matrix C must have full column rank {m}, got rank {rank}"
            )));
        }
        Ok(Self {
            map: StateMap::Esn(EsnParams { n, m, a, c, b }),
            state_dim: n,
            input_dim: m,
            anchor: vec![0.0; n],
        })
    }

    pub fn euler_sde(params: EulerSdeParams) -> Result<Self> {
        if !(params.step.is_finite() && params.step > 0.0) {
            return Err(domain("Euler step h must be positive"));
        }
        Ok(Self {
            map: StateMap::EulerSde(params),
            state_dim: 1,
            input_dim: 1,
            anchor: vec![0.0],
        })
    }

    /// Replaces the anchor point `x_*`.
    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Result<Self> {
        if anchor.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: anchor.len(),
            });
        }
        if let StateMap::Garch(_) = self.map {
            if anchor[0] < 0.0 {
                return Err(Error::NegativeState(anchor[0]));
            }
        }
        self.anchor = anchor;
        Ok(self)
    }

    pub fn map(&self) -> &StateMap {
        &self.map
    }

    pub fn kind_name(&self) -> &'static str {
        self.map.kind_name()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// Evaluates `f(x, u)` with dimension and domain checks.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, u)?;
        let mut out = vec![0.0; self.state_dim];
        self.step_into(x, u, &mut out);
        Ok(out)
    }

    fn check_point(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: u.len(),
            });
        }
        if let StateMap::Garch(_) = self.map {
            if x[0] < 0.0 {
                return Err(Error::NegativeState(x[0]));
            }
        }
        Ok(())
    }

    /// Checks that a state window is a valid element of the state space.
    pub fn check_state_window(&self, x: &PathWindow) -> Result<()> {
        if x.dim() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.dim(),
            });
        }
        if let StateMap::Garch(_) = self.map {
            if let Some(v) = x.values().iter().find(|v| **v < 0.0) {
                return Err(Error::NegativeState(*v));
            }
        }
        Ok(())
    }

    /// Unchecked evaluation of `f(x, u)` into `out`.
    pub(crate) fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match &self.map {
            StateMap::Garch(g) => out[0] = g.omega + (g.alpha * u[0] * u[0] + g.beta) * x[0],
            StateMap::LinearTest { a } => out[0] = a * x[0] + u[0],
            StateMap::Affine(p) => {
                let n = self.state_dim;
                let mut amat = vec![0.0; n * n];
                p.a.eval_into(u, &mut amat);
                p.b.eval_into(u, out);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += amat[i * n..(i + 1) * n].iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            StateMap::Esn(p) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let ax: f64 = p.a[i * p.n..(i + 1) * p.n].iter().zip(x).map(|(a, x)| a * x).sum();
                    let cu: f64 = p.c[i * p.m..(i + 1) * p.m].iter().zip(u).map(|(c, u)| c * u).sum();
                    *o = (ax + cu + p.b[i]).tanh();
                }
            }
            StateMap::EulerSde(p) => {
                let base = match p.form {
                    EulerForm::Paper => 1.0,
                    EulerForm::Drifted => x[0],
                };
                out[0] = base + p.drift.eval(x[0]) * p.step + p.diffusion.eval(x[0]) * u[0];
            }
        }
    }

    fn check_windows(&self, x: &PathWindow, u: &PathWindow, pad: &[f64]) -> Result<()> {
        self.check_state_window(x)?;
        if u.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: u.dim(),
            });
        }
        if u.horizon() != x.horizon() {
            return Err(Error::HorizonMismatch {
                expected: x.horizon(),
                got: u.horizon(),
            });
        }
        if pad.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: pad.len(),
            });
        }
        Ok(())
    }

    /// `F(x̄, ū)` on a window: `out[k] = f(x[k+1], u[k])`, `out[T−1] = f(pad, u[T−1])`.
    pub fn extend_f(&self, x: &PathWindow, u: &PathWindow, left_pad: Option<&[f64]>) -> Result<PathWindow> {
        let pad = left_pad.unwrap_or(&self.anchor);
        self.check_windows(x, u, pad)?;
        let mut out = x.clone();
        self.advance_in_place(&mut out, u, pad, None);
        Ok(out)
    }

    /// `Fc(x̄, ū) = (F(x̄, ū), ū)`; the input window is returned unchanged.
    pub fn apply_fc(&self, pair: &PathPair, left_pad: Option<&[f64]>) -> Result<PathPair> {
        Ok(PathPair {
            state: self.extend_f(&pair.state, &pair.input, left_pad)?,
            input: pair.input.clone(),
        })
    }

    /// Replaces `x` by `F(x, u)` in place. Entries are rewritten from the most
    /// recent toward older ones, so `x[k+1]` is still the old value when read
    /// for `out[k]`. When a metric is given,
    /// returns the weighted distance between the old and new windows.
    pub(crate) fn advance_in_place(
        &self,
        x: &mut PathWindow,
        u: &PathWindow,
        pad: &[f64],
        metric: Option<(&WeightVector, &BaseMetric)>,
    ) -> f64 {
        let horizon = x.horizon();
        let n = self.state_dim;
        let mut buf = vec![0.0; n];
        let mut dist = 0.0;
        for k in 0..horizon {
            if k + 1 < horizon {
                self.step_into(x.at(k + 1), u.at(k), &mut buf);
            } else {
                self.step_into(pad, u.at(k), &mut buf);
            }
            if let Some((w, base)) = metric {
                dist += w.weights()[k] * base.dist(&buf, x.at(k));
            }
            x.at_mut(k).copy_from_slice(&buf);
        }
        dist
    }
}
