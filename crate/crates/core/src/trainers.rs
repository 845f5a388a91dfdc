//! Built-in black-box trainers: Fourier ridge (exact ERM), a ReLU MLP and
//! CART regression trees / forests.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Fitted, Predictor, RegressionDataset, Trainer};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainerError {
    #[error("linear system is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("optimizer diverged at iteration {iteration} (non-finite loss)")]
    Diverged { iteration: usize },
    #[error("{features} features exceed the cap of {cap}")]
    FeatureCap { features: usize, cap: usize },
    #[error("invalid trainer spec: {0}")]
    BadSpec(String),
    #[error("unknown trainer {0:?}")]
    Unknown(String),
}

// ---------------------------------------------------------------------------
// Fourier ridge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierRidgeSpec {
    /// Maximum frequency per coordinate.
    #[serde(alias = "N")]
    pub max_frequency: usize,
    pub lambda: f64,
    /// Upper limit on `(2N+1)^d`.
    pub feature_cap: usize,
}

impl Default for FourierRidgeSpec {
    fn default() -> Self {
        Self {
            max_frequency: 8,
            lambda: 1e-6,
            feature_cap: 4096,
        }
    }
}

/// Least squares over real trigonometric polynomials, with optional ridge
/// penalty on all coefficients.
#[derive(Debug, Clone)]
pub struct FourierRidge {
    spec: FourierRidgeSpec,
}

/// Frequencies of the half-lattice `{k ∈ [-N,N]^d : first nonzero k_j > 0}`.
fn half_lattice(n_max: usize, d: usize) -> Vec<Vec<i64>> {
    let side = 2 * n_max + 1;
    let total = side.pow(d as u32);
    let mut out = Vec::with_capacity(total / 2);
    for code in 0..total {
        let mut c = code;
        let mut k = vec![0i64; d];
        for kj in k.iter_mut().rev() {
            *kj = (c % side) as i64 - n_max as i64;
            c /= side;
        }
        if k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
            out.push(k);
        }
    }
    out
}

fn feature_count(n_max: usize, d: usize) -> Option<usize> {
    (2 * n_max + 1).checked_pow(d as u32)
}

fn phase(k: &[i64], x: &[f64]) -> f64 {
    2.0 * PI * k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * xj).sum::<f64>()
}

impl FourierRidge {
    pub fn new(spec: FourierRidgeSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &FourierRidgeSpec {
        &self.spec
    }

    /// Fits and returns the concrete model.
    pub fn fit_model(&self, data: &RegressionDataset) -> Result<FourierRidgeModel, TrainerError> {
        let spec = &self.spec;
        if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
            return Err(TrainerError::BadSpec(format!("lambda = {}", spec.lambda)));
        }
        let d = data.d();
        let p = feature_count(spec.max_frequency, d).unwrap_or(usize::MAX);
        if p > spec.feature_cap {
            return Err(TrainerError::FeatureCap {
                features: p,
                cap: spec.feature_cap,
            });
        }
        let freqs = half_lattice(spec.max_frequency, d);
        let n = data.n();
        let mut phi = DMatrix::<f64>::zeros(n, p);
        for (i, x) in data.rows().enumerate() {
            phi[(i, 0)] = 1.0;
            for (j, k) in freqs.iter().enumerate() {
                let (s, c) = phase(k, x).sin_cos();
                phi[(i, 1 + 2 * j)] = c;
                phi[(i, 2 + 2 * j)] = s;
            }
        }
        let y = DVector::from_column_slice(data.ys());
        let coef = if spec.lambda == 0.0 {
            min_norm_least_squares(phi, &y)?
        } else {
            let nf = n as f64;
            let mut gram = phi.tr_mul(&phi) / nf;
            for j in 0..p {
                gram[(j, j)] += spec.lambda;
            }
            let rhs = phi.tr_mul(&y) / nf;
            let chol = gram
                .cholesky()
                .ok_or_else(|| TrainerError::IllConditioned("ridge Gram matrix not positive definite".into()))?;
            chol.solve(&rhs)
        };
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(TrainerError::IllConditioned("non-finite coefficients".into()));
        }
        let tolerance = if spec.lambda == 0.0 {
            0.0
        } else {
            spec.lambda * coef.norm_squared()
        };
        Ok(FourierRidgeModel {
            d,
            intercept: coef[0],
            cos_coef: (0..freqs.len()).map(|j| coef[1 + 2 * j]).collect(),
            sin_coef: (0..freqs.len()).map(|j| coef[2 + 2 * j]).collect(),
            frequencies: freqs,
            tolerance,
        })
    }
}

/// Minimum-norm solution through the SVD pseudo-inverse.
fn min_norm_least_squares(phi: DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, TrainerError> {
    let (n, p) = phi.shape();
    let svd = phi.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0 && smax.is_finite()) {
        return Err(TrainerError::IllConditioned(format!("largest singular value {smax}")));
    }
    let eps = smax * n.max(p) as f64 * f64::EPSILON;
    svd.solve(y, eps)
        .map_err(|e| TrainerError::IllConditioned(e.to_string()))
}

impl Trainer for FourierRidge {
    fn name(&self) -> &str {
        "fourier_ridge"
    }

    fn fit(&self, data: &RegressionDataset, _seed: u64) -> Result<Fitted, TrainerError> {
        let model = self.fit_model(data)?;
        let tolerance = model.tolerance;
        Ok(Fitted {
            predictor: Arc::new(model),
            tolerance,
        })
    }
}

/// `c0 + Σ_k a_k cos(2π k·x) + b_k sin(2π k·x)` over the half-lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierRidgeModel {
    d: usize,
    frequencies: Vec<Vec<i64>>,
    intercept: f64,
    cos_coef: Vec<f64>,
    sin_coef: Vec<f64>,
    tolerance: f64,
}

impl FourierRidgeModel {
    pub fn frequencies(&self) -> &[Vec<i64>] {
        &self.frequencies
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos_coef
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin_coef
    }

    /// Coefficients in feature order `[c0, a_1, b_1, a_2, b_2, ...]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 2 * self.cos_coef.len());
        out.push(self.intercept);
        for (a, b) in self.cos_coef.iter().zip(&self.sin_coef) {
            out.push(*a);
            out.push(*b);
        }
        out
    }

    /// The complex Fourier coefficient at frequency `k` implied by the real
    /// coefficients: `(a - ib)/2` at `k`, its conjugate at `-k`.
    pub fn fourier_coefficient(&self, k: &[i64]) -> Complex64 {
        if k.iter().all(|&v| v == 0) {
            return Complex64::new(self.intercept, 0.0);
        }
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        for (j, f) in self.frequencies.iter().enumerate() {
            let (a, b) = (self.cos_coef[j], self.sin_coef[j]);
            if f.as_slice() == k {
                return Complex64::new(a / 2.0, -b / 2.0);
            }
            if *f == neg {
                return Complex64::new(a / 2.0, b / 2.0);
            }
        }
        Complex64::new(0.0, 0.0)
    }
}

impl Predictor for FourierRidgeModel {
    fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let mut out = self.intercept;
        for (j, k) in self.frequencies.iter().enumerate() {
            let (s, c) = phase(k, x).sin_cos();
            out += self.cos_coef[j] * c + self.sin_coef[j] * s;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Limited-memory BFGS with Armijo backtracking.
    Lbfgs { memory: usize },
    /// Fixed-step full-batch gradient descent.
    GradientDescent { learning_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    /// Hidden layer widths; input width comes from the data, output is 1.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub max_iter: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Relu,
            optimizer: Optimizer::Lbfgs { memory: 10 },
            max_iter: 200,
        }
    }
}

/// Multilayer perceptron fit by full-batch minimization of mean squared
/// error from a He-normal initialization drawn from the seed.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
}

/// One affine layer, `out × inp` weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inp: usize,
    pub out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.out, self.inp, &self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    final_grad_norm: f64,
    final_loss: f64,
    iterations: usize,
}

impl MlpModel {
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.final_grad_norm
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

impl Predictor for MlpModel {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inp..(o + 1) * layer.inp];
                *zo += row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
            }
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        h[0]
    }
}

/// Layer shapes and offsets into the flat parameter vector.
struct Layout {
    dims: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(widths: &[usize]) -> Self {
        let mut dims = Vec::new();
        let mut offsets = Vec::new();
        let mut total = 0;
        for w in widths.windows(2) {
            dims.push((w[0], w[1]));
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        Self { dims, offsets, total }
    }
}

/// Mean squared error and its gradient with respect to the flat parameters.
fn loss_and_grad(layout: &Layout, params: &[f64], data: &RegressionDataset) -> (f64, Vec<f64>) {
    let nl = layout.dims.len();
    let mut grad = vec![0.0; layout.total];
    let mut acts: Vec<Vec<f64>> = layout.dims.iter().map(|&(_, out)| vec![0.0; out]).collect();
    let mut deltas = acts.clone();
    let mut loss = 0.0;
    for (x, &y) in data.rows().zip(data.ys()) {
        for l in 0..nl {
            let (inp, out) = layout.dims[l];
            let off = layout.offsets[l];
            let (w, b) = params[off..off + inp * out + out].split_at(inp * out);
            let (prev, rest) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            for o in 0..out {
                let z = b[o]
                    + w[o * inp..(o + 1) * inp]
                        .iter()
                        .zip(input)
                        .map(|(a, c)| a * c)
                        .sum::<f64>();
                rest[0][o] = if l + 1 < nl { z.max(0.0) } else { z };
            }
        }
        let err = acts[nl - 1][0] - y;
        loss += err * err;
        deltas[nl - 1][0] = 2.0 * err;
        for l in (0..nl).rev() {
            let (inp, out) = layout.dims[l];
            let off = layout.offsets[l];
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            for o in 0..out {
                let dz = deltas[l][o];
                if dz == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * inp..off + (o + 1) * inp];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += dz * a);
                grad[off + inp * out + o] += dz;
            }
            if l > 0 {
                let w = &params[off..off + inp * out];
                let (lower, upper) = deltas.split_at_mut(l);
                let below = &mut lower[l - 1];
                for (i, bi) in below.iter_mut().enumerate() {
                    let active = acts[l - 1][i] > 0.0;
                    *bi = if active {
                        (0..out).map(|o| w[o * inp + i] * upper[0][o]).sum()
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    let nf = data.n() as f64;
    grad.iter_mut().for_each(|g| *g /= nf);
    (loss / nf, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct OptResult {
    params: Vec<f64>,
    loss: f64,
    grad_norm: f64,
    iterations: usize,
}

fn run_lbfgs(
    layout: &Layout,
    mut x: Vec<f64>,
    data: &RegressionDataset,
    memory: usize,
    max_iter: usize,
) -> Result<OptResult, TrainerError> {
    const C1: f64 = 1e-4;
    let (mut f, mut g) = loss_and_grad(layout, &x, data);
    if !f.is_finite() {
        return Err(TrainerError::Diverged { iteration: 0 });
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut iterations = 0;
    for it in 0..max_iter {
        let gnorm = norm(&g);
        if gnorm <= 1e-12 {
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = loss_and_grad(layout, &trial, data);
            if ft.is_finite() && ft <= f + C1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if hist.len() == memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fnew;
        g = gn;
        iterations = it + 1;
    }
    Ok(OptResult {
        grad_norm: norm(&g),
        params: x,
        loss: f,
        iterations,
    })
}

fn run_gd(
    layout: &Layout,
    mut x: Vec<f64>,
    data: &RegressionDataset,
    lr: f64,
    max_iter: usize,
) -> Result<OptResult, TrainerError> {
    let (mut f, mut g) = loss_and_grad(layout, &x, data);
    for it in 0..max_iter {
        if !f.is_finite() {
            return Err(TrainerError::Diverged { iteration: it });
        }
        x.iter_mut().zip(&g).for_each(|(p, gi)| *p -= lr * gi);
        (f, g) = loss_and_grad(layout, &x, data);
    }
    if !f.is_finite() {
        return Err(TrainerError::Diverged { iteration: max_iter });
    }
    Ok(OptResult {
        grad_norm: norm(&g),
        params: x,
        loss: f,
        iterations: max_iter,
    })
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn fit_model(&self, data: &RegressionDataset, seed: u64) -> Result<MlpModel, TrainerError> {
        let spec = &self.spec;
        if spec.hidden.contains(&0) {
            return Err(TrainerError::BadSpec("layer widths must be at least 1".into()));
        }
        if spec.max_iter == 0 {
            return Err(TrainerError::BadSpec("max_iter must be at least 1".into()));
        }
        let mut widths = vec![data.d()];
        widths.extend_from_slice(&spec.hidden);
        widths.push(1);
        let layout = Layout::new(&widths);

        let mut rng = rng::stream(seed, "mlp-init", 0);
        let mut params = vec![0.0; layout.total];
        for (&(inp, out), &off) in layout.dims.iter().zip(&layout.offsets) {
            let scale = (2.0 / inp as f64).sqrt();
            for w in &mut params[off..off + inp * out] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = scale * z;
            }
        }
        // First-layer kinks pass through random points of the unit cube, so
        // the initial network is not linear on the covariate domain.
        let (inp, out) = layout.dims[0];
        let off = layout.offsets[0];
        for j in 0..out {
            let row = &params[off + j * inp..off + (j + 1) * inp];
            let bias: f64 = -row.iter().map(|w| w * rng.random::<f64>()).sum::<f64>();
            params[off + inp * out + j] = bias;
        }

        let res = match spec.optimizer {
            Optimizer::Lbfgs { memory } => {
                if memory == 0 {
                    return Err(TrainerError::BadSpec("L-BFGS memory must be at least 1".into()));
                }
                run_lbfgs(&layout, params, data, memory, spec.max_iter)?
            }
            Optimizer::GradientDescent { learning_rate } => {
                if !(learning_rate > 0.0 && learning_rate.is_finite()) {
                    return Err(TrainerError::BadSpec(format!("learning rate {learning_rate}")));
                }
                run_gd(&layout, params, data, learning_rate, spec.max_iter)?
            }
        };

        let layers = layout
            .dims
            .iter()
            .zip(&layout.offsets)
            .map(|(&(inp, out), &off)| DenseLayer {
                inp,
                out,
                weights: res.params[off..off + inp * out].to_vec(),
                bias: res.params[off + inp * out..off + inp * out + out].to_vec(),
            })
            .collect();
        Ok(MlpModel {
            layers,
            final_grad_norm: res.grad_norm,
            final_loss: res.loss,
            iterations: res.iterations,
        })
    }
}

impl Trainer for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }

    /// The declared tolerance is the final gradient norm: a stationarity
    /// measure, since nothing certifies global optimality here.
    fn fit(&self, data: &RegressionDataset, seed: u64) -> Result<Fitted, TrainerError> {
        let model = self.fit_model(data, seed)?;
        let tolerance = model.final_grad_norm;
        Ok(Fitted {
            predictor: Arc::new(model),
            tolerance,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSpec {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// 1 grows a single tree.
    pub n_trees: usize,
    /// Fraction of coordinates considered at each split.
    pub feature_fraction: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            max_depth: 4,
            min_samples_leaf: 5,
            n_trees: 1,
            feature_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tree {
    spec: TreeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

impl Predictor for RegressionTree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Average of trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}

impl Predictor for Forest {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Grower<'a> {
    data: &'a RegressionDataset,
    spec: &'a TreeSpec,
    n_features: usize,
    rng: rng::StreamRng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.data.ys()[i]).sum::<f64>() / idx.len() as f64
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = self.mean(idx);
        self.nodes.push(Node::Leaf(mean));
        let sse: f64 = idx.iter().map(|&i| (self.data.ys()[i] - mean).powi(2)).sum();
        let leaf = self.spec.min_samples_leaf;
        if depth >= self.spec.max_depth || idx.len() < 2 * leaf || sse <= 1e-24 * idx.len() as f64 {
            return id;
        }
        let d = self.data.d();
        let features: Vec<usize> = if self.n_features >= d {
            (0..d).collect()
        } else {
            let mut f = index::sample(&mut self.rng, d, self.n_features).into_vec();
            f.sort_unstable();
            f
        };

        let total: f64 = idx.iter().map(|&i| self.data.ys()[i]).sum();
        let nf = idx.len() as f64;
        let base = total * total / nf;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in &features {
            let xf = |i: usize| self.data.x(i)[f];
            order.sort_by(|&a, &b| xf(a).total_cmp(&xf(b)).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for pos in 0..order.len() - 1 {
                left_sum += self.data.ys()[order[pos]];
                let nl = pos + 1;
                let nr = order.len() - nl;
                if nl < leaf || nr < leaf {
                    continue;
                }
                let (a, b) = (xf(order[pos]), xf(order[pos + 1]));
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        if gain <= 1e-12 * sse {
            return id;
        }
        let mut cut = 0;
        for k in 0..idx.len() {
            if self.data.x(idx[k])[feature] <= threshold {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl Tree {
    pub fn new(spec: TreeSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &TreeSpec {
        &self.spec
    }

    fn check(&self) -> Result<(), TrainerError> {
        let s = &self.spec;
        if s.max_depth == 0 || s.n_trees == 0 || s.min_samples_leaf == 0 {
            return Err(TrainerError::BadSpec(
                "max_depth, n_trees and min_samples_leaf must be at least 1".into(),
            ));
        }
        if !(s.feature_fraction > 0.0 && s.feature_fraction <= 1.0) {
            return Err(TrainerError::BadSpec(format!(
                "feature_fraction must lie in (0,1], got {}",
                s.feature_fraction
            )));
        }
        Ok(())
    }

    pub fn fit_model(&self, data: &RegressionDataset, seed: u64) -> Result<Forest, TrainerError> {
        self.check()?;
        let n_features = ((self.spec.feature_fraction * data.d() as f64).ceil() as usize).clamp(1, data.d());
        let trees = (0..self.spec.n_trees)
            .map(|t| {
                let mut g = Grower {
                    data,
                    spec: &self.spec,
                    n_features,
                    rng: rng::stream(seed, "tree-features", t as u64),
                    nodes: Vec::new(),
                };
                let mut idx: Vec<usize> = (0..data.n()).collect();
                g.grow(&mut idx, 0);
                RegressionTree { nodes: g.nodes }
            })
            .collect();
        Ok(Forest { trees })
    }
}

impl Trainer for Tree {
    fn name(&self) -> &str {
        "tree"
    }

    /// Greedy splits carry no optimality certificate; the declared
    /// tolerance is 0.
    fn fit(&self, data: &RegressionDataset, seed: u64) -> Result<Fitted, TrainerError> {
        Ok(Fitted {
            predictor: Arc::new(self.fit_model(data, seed)?),
            tolerance: 0.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Lookup by name
// ---------------------------------------------------------------------------

/// A trainer addressed by name, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TrainerSpec {
    FourierRidge(FourierRidgeSpec),
    Mlp(MlpSpec),
    Tree(TreeSpec),
}

impl TrainerSpec {
    /// Default spec for a trainer name.
    pub fn by_name(name: &str) -> Result<Self, TrainerError> {
        match name {
            "fourier_ridge" => Ok(Self::FourierRidge(FourierRidgeSpec::default())),
            "mlp" => Ok(Self::Mlp(MlpSpec::default())),
            "tree" => Ok(Self::Tree(TreeSpec::default())),
            other => Err(TrainerError::Unknown(other.to_string())),
        }
    }

    pub fn build(&self) -> Arc<dyn Trainer> {
        match self {
            Self::FourierRidge(s) => Arc::new(FourierRidge::new(s.clone())),
            Self::Mlp(s) => Arc::new(Mlp::new(s.clone())),
            Self::Tree(s) => Arc::new(Tree::new(s.clone())),
        }
    }
}
