//! Hidden-input sampling and causal input-generating filters.
//!
//! Observed inputs are `Ū = V(Z̄)` where the hidden inputs `Z̄` have
//! independent marginals and `V` is causal: its output at time `t` only sees
//! hidden entries at times `≤ t`.
//!
//! Random draws come from ChaCha8 with one stream per path: the stream for
//! path `i` is keyed by `(seed, i)` and consumed from the most recent time
//! backwards, so the draw at `(seed, path, t)` does not depend on the horizon
//! or on how paths are scheduled across threads.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{domain, Error, Result};
use crate::numeric::map_indexed;
use crate::seqspace::{PathPair, PathWindow};

/// Marginal law of each hidden-input component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HiddenDist {
    StdNormal,
    Uniform { a: f64, b: f64 },
    Rademacher,
    StudentT { nu: f64 },
}

impl HiddenDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HiddenDist::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                Err(domain(format!("uniform bounds must satisfy a < b, got ({a}, {b})")))
            }
            HiddenDist::StudentT { nu } if !(nu.is_finite() && nu > 0.0) => Err(domain(format!(
                "student-t degrees of freedom must be positive, got {nu}"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether `E|Z|^order` is finite.
    pub fn has_moment(&self, order: f64) -> bool {
        match *self {
            HiddenDist::StudentT { nu } => nu > order,
            _ => true,
        }
    }

    /// Whether the law has mean 0 and variance 1.
    pub fn is_standardized(&self) -> bool {
        match *self {
            HiddenDist::StdNormal | HiddenDist::Rademacher => true,
            HiddenDist::Uniform { a, b } => (a + b).abs() < 1e-15 && ((b - a).powi(2) / 12.0 - 1.0).abs() < 1e-12,
            HiddenDist::StudentT { .. } => false,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            HiddenDist::StdNormal => "std_normal".into(),
            HiddenDist::Uniform { a, b } => format!("uniform({a},{b})"),
            HiddenDist::Rademacher => "rademacher".into(),
            HiddenDist::StudentT { nu } => format!("student_t({nu})"),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            HiddenDist::StdNormal => StandardNormal.sample(rng),
            HiddenDist::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            HiddenDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            // validated on construction
            HiddenDist::StudentT { nu } => StudentT::new(nu).expect("validated").sample(rng),
        }
    }
}

/// Source of iid hidden inputs in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSampler {
    pub dist: HiddenDist,
    pub dim: usize,
    pub seed: u64,
}

impl HiddenSampler {
    pub fn new(dist: HiddenDist, dim: usize, seed: u64) -> Result<Self> {
        dist.validate()?;
        if dim == 0 {
            return Err(domain("hidden input dimension must be positive"));
        }
        Ok(Self { dist, dim, seed })
    }

    /// The generator for one path.
    pub fn path_rng(&self, path_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index as u64);
        rng
    }

    /// One window of iid draws for `path_index`.
    pub fn sample_path(&self, path_index: usize, horizon: usize) -> PathWindow {
        let mut rng = self.path_rng(path_index);
        PathWindow::from_fn(self.dim, horizon, |_, _| self.dist.draw(&mut rng))
    }
}

/// `N` windows of iid hidden draws.
pub fn sample_hidden(s: &HiddenSampler, n_paths: usize, horizon: usize) -> Result<Vec<PathWindow>> {
    s.dist.validate()?;
    if n_paths == 0 || horizon == 0 || s.dim == 0 {
        return Err(domain("need at least one path, one time step and one dimension"));
    }
    Ok(map_indexed(n_paths, |i| s.sample_path(i, horizon)))
}

/// Named scalar maps for pointwise filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointwiseMap {
    Tanh,
    Abs,
    Square,
    Scale(f64),
}

impl PointwiseMap {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            PointwiseMap::Tanh => x.tanh(),
            PointwiseMap::Abs => x.abs(),
            PointwiseMap::Square => x * x,
            PointwiseMap::Scale(c) => c * x,
        }
    }
}

/// Causal input-generating filter `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum CausalFilter {
    Identity,
    /// `out_t = Σ_{j<K} kernel[j] · z_{t−j}`, each lag a row-major
    /// `output_dim × input_dim` matrix. Lags beyond the window are zero.
    Fir {
        input_dim: usize,
        output_dim: usize,
        kernel: Vec<Vec<f64>>,
    },
    Pointwise(PointwiseMap),
    /// Applied left to right.
    Compose(Vec<CausalFilter>),
}

impl CausalFilter {
    pub fn fir(input_dim: usize, output_dim: usize, kernel: Vec<Vec<f64>>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || kernel.is_empty() {
            return Err(domain("FIR filter needs positive dimensions and at least one lag"));
        }
        if let Some(bad) = kernel.iter().find(|k| k.len() != input_dim * output_dim) {
            return Err(Error::DimensionMismatch {
                expected: input_dim * output_dim,
                got: bad.len(),
            });
        }
        Ok(CausalFilter::Fir {
            input_dim,
            output_dim,
            kernel,
        })
    }

    /// Scalar FIR filter from per-lag coefficients.
    pub fn scalar_fir(coefficients: &[f64]) -> Result<Self> {
        Self::fir(1, 1, coefficients.iter().map(|c| vec![*c]).collect())
    }

    /// Output dimension for a given input dimension.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match self {
            CausalFilter::Identity | CausalFilter::Pointwise(_) => Ok(input_dim),
            CausalFilter::Fir {
                input_dim: d,
                output_dim,
                ..
            } => {
                if *d != input_dim {
                    Err(Error::DimensionMismatch {
                        expected: *d,
                        got: input_dim,
                    })
                } else {
                    Ok(*output_dim)
                }
            }
            CausalFilter::Compose(stages) => stages.iter().try_fold(input_dim, |d, s| s.output_dim(d)),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            CausalFilter::Identity => true,
            CausalFilter::Compose(stages) => stages.iter().all(CausalFilter::is_identity),
            _ => false,
        }
    }

    /// Output at `t` depends on the hidden input at `t` alone, so iid hidden
    /// inputs stay iid.
    pub fn is_memoryless(&self) -> bool {
        match self {
            CausalFilter::Identity | CausalFilter::Pointwise(_) => true,
            CausalFilter::Fir { kernel, .. } => kernel.len() == 1,
            CausalFilter::Compose(stages) => stages.iter().all(CausalFilter::is_memoryless),
        }
    }

    pub fn name(&self) -> String {
        match self {
            CausalFilter::Identity => "identity".into(),
            CausalFilter::Fir { kernel, .. } => format!("fir(K={})", kernel.len()),
            CausalFilter::Pointwise(m) => format!("pointwise({m:?})"),
            CausalFilter::Compose(stages) => {
                let inner: Vec<String> = stages.iter().map(CausalFilter::name).collect();
                format!("compose[{}]", inner.join(","))
            }
        }
    }

    /// Applies the filter to one hidden window.
    pub fn apply(&self, z: &PathWindow) -> Result<PathWindow> {
        match self {
            CausalFilter::Identity => Ok(z.clone()),
            CausalFilter::Pointwise(m) => {
                let mut out = z.clone();
                out.values_mut().iter_mut().for_each(|v| *v = m.apply(*v));
                if !out.is_finite() {
                    return Err(domain("pointwise filter produced a non-finite value"));
                }
                Ok(out)
            }
            CausalFilter::Fir {
                input_dim,
                output_dim,
                kernel,
            } => {
                if z.dim() != *input_dim {
                    return Err(Error::DimensionMismatch {
                        expected: *input_dim,
                        got: z.dim(),
                    });
                }
                let horizon = z.horizon();
                let (m, n) = (*input_dim, *output_dim);
                Ok(PathWindow::from_fn(n, horizon, |k, i| {
                    kernel
                        .iter()
                        .enumerate()
                        .take_while(|(j, _)| k + j < horizon)
                        .map(|(j, mat)| {
                            let zk = z.at(k + j);
                            mat[i * m..(i + 1) * m].iter().zip(zk).map(|(a, b)| a * b).sum::<f64>()
                        })
                        .sum()
                }))
            }
            CausalFilter::Compose(stages) => {
                let mut cur = z.clone();
                for s in stages {
                    cur = s.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }
}

/// Free-function form of [`CausalFilter::apply`].
pub fn apply_filter(v: &CausalFilter, z: &PathWindow) -> Result<PathWindow> {
    v.apply(z)
}

/// Provenance carried alongside sampled ensembles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleMeta {
    pub seed: u64,
    pub sampler: String,
    pub filter: String,
}

/// Sampled input paths, keeping the hidden windows they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEnsemble {
    pub hidden: Vec<PathWindow>,
    pub inputs: Vec<PathWindow>,
    pub meta: EnsembleMeta,
}

impl InputEnsemble {
    /// Wraps observed input windows with no separate hidden record.
    pub fn from_inputs(inputs: Vec<PathWindow>) -> Result<Self> {
        check_uniform(&inputs)?;
        Ok(Self {
            hidden: inputs.clone(),
            inputs,
            meta: EnsembleMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.inputs.first().map_or(0, PathWindow::horizon)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, PathWindow::dim)
    }
}

fn check_uniform(windows: &[PathWindow]) -> Result<()> {
    let Some(first) = windows.first() else {
        return Err(domain("ensemble must contain at least one path"));
    };
    for w in windows {
        if w.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: w.dim(),
            });
        }
        if w.horizon() != first.horizon() {
            return Err(Error::HorizonMismatch {
                expected: first.horizon(),
                got: w.horizon(),
            });
        }
    }
    Ok(())
}

/// Samples hidden inputs and pushes them through the filter.
pub fn generate_inputs(s: &HiddenSampler, v: &CausalFilter, n_paths: usize, horizon: usize) -> Result<InputEnsemble> {
    v.output_dim(s.dim)?;
    let hidden = sample_hidden(s, n_paths, horizon)?;
    let inputs = map_indexed(hidden.len(), |i| v.apply(&hidden[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(InputEnsemble {
        hidden,
        inputs,
        meta: EnsembleMeta {
            seed: s.seed,
            sampler: s.dist.name(),
            filter: v.name(),
        },
    })
}

/// `N` equally weighted state/input path pairs: an empirical measure on
/// the product of state and input sequence spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub pairs: Vec<PathPair>,
    pub meta: EnsembleMeta,
}

impl Ensemble {
    pub fn new(pairs: Vec<PathPair>) -> Result<Self> {
        let states: Vec<PathWindow> = pairs.iter().map(|p| p.state.clone()).collect();
        let inputs: Vec<PathWindow> = pairs.iter().map(|p| p.input.clone()).collect();
        check_uniform(&states)?;
        check_uniform(&inputs)?;
        if states[0].horizon() != inputs[0].horizon() {
            return Err(Error::HorizonMismatch {
                expected: states[0].horizon(),
                got: inputs[0].horizon(),
            });
        }
        Ok(Self {
            pairs,
            meta: EnsembleMeta::default(),
        })
    }

    /// Attaches the constant state window `x̄⁰ ≡ anchor` to every input path.
    pub fn from_inputs(inputs: &InputEnsemble, anchor: &[f64]) -> Self {
        let horizon = inputs.horizon();
        let state = PathWindow::constant(anchor, horizon);
        Self {
            pairs: inputs
                .inputs
                .iter()
                .map(|u| PathPair {
                    state: state.clone(),
                    input: u.clone(),
                })
                .collect(),
            meta: inputs.meta.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.pairs.first().map_or(0, PathPair::horizon)
    }

    pub fn state_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.state.dim())
    }

    pub fn input_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.input.dim())
    }

    /// Values of state component `component` at window index `k`, one per path.
    pub fn state_marginal(&self, k: usize, component: usize) -> Vec<f64> {
        self.pairs.iter().map(|p| p.state.at(k)[component]).collect()
    }

    /// Writes the ensemble in the `path,t,component,value` schema. State
    /// components come first; input component `j` is written as
    /// `state_dim + j`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.state_dim();
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["path", "t", "component", "value"])?;
        for (i, p) in self.pairs.iter().enumerate() {
            write_window(&mut wtr, i, &p.state, 0)?;
            write_window(&mut wtr, i, &p.input, n)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads an ensemble written by [`Ensemble::write_csv`].
    pub fn read_csv<R: Read>(input: R, state_dim: usize) -> Result<Self> {
        let windows = read_windows(input)?;
        let pairs = windows
            .into_iter()
            .map(|w| {
                let total = w.dim();
                if total <= state_dim {
                    return Err(domain("ensemble CSV has no input components"));
                }
                let m = total - state_dim;
                let h = w.horizon();
                let state = PathWindow::from_fn(state_dim, h, |k, c| w.at(k)[c]);
                let input = PathWindow::from_fn(m, h, |k, c| w.at(k)[state_dim + c]);
                Ok(PathPair { state, input })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

fn write_window<W: Write>(wtr: &mut csv::Writer<W>, path: usize, w: &PathWindow, offset: usize) -> Result<()> {
    for k in 0..w.horizon() {
        let t = -(k as i64 + 1);
        for (c, v) in w.at(k).iter().enumerate() {
            wtr.write_record(&[path.to_string(), t.to_string(), (c + offset).to_string(), fmt17(*v)])?;
        }
    }
    Ok(())
}

/// Decimal text with 17 significant digits; round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes windows (e.g. observed inputs) in the `path,t,component,value` schema.
pub fn write_windows_csv<W: Write>(out: W, windows: &[PathWindow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["path", "t", "component", "value"])?;
    for (i, w) in windows.iter().enumerate() {
        write_window(&mut wtr, i, w, 0)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads windows from the `path,t,component,value` schema. Every
/// `(path, t, component)` cell in the implied rectangle must be present.
pub fn read_windows_csv<R: Read>(input: R) -> Result<Vec<PathWindow>> {
    read_windows(input)
}

fn read_windows<R: Read>(input: R) -> Result<Vec<PathWindow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "t", "component", "value"] {
        return Err(Error::Parse(format!("unexpected CSV header {headers:?}")));
    }
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", line + 2));
        let path: usize = rec[0].parse().map_err(|_| bad("path"))?;
        let t: i64 = rec[1].parse().map_err(|_| bad("t"))?;
        if t >= 0 {
            return Err(bad("t (must be negative)"));
        }
        let comp: usize = rec[2].parse().map_err(|_| bad("component"))?;
        let v: f64 = rec[3].parse().map_err(|_| bad("value"))?;
        cells.push((path, (-t - 1) as usize, comp, v));
    }
    if cells.is_empty() {
        return Err(domain("CSV contains no rows"));
    }
    let n_paths = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let horizon = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let dim = cells.iter().map(|c| c.2).max().unwrap_or(0) + 1;
    let mut values = vec![vec![f64::NAN; horizon * dim]; n_paths];
    for (p, k, c, v) in cells {
        values[p][k * dim + c] = v;
    }
    values
        .into_iter()
        .map(|v| {
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Parse(
                    "CSV does not cover every (path, t, component) cell".into(),
                ));
            }
            PathWindow::new(dim, horizon, v)
        })
        .collect()
}
