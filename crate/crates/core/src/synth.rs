//! Synthetic experiments with known regression functions, and excess-risk
//! oracles.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Predictor, PredictorHandle, RegressionDataset};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("unknown experiment {0:?}; expected exp1, exp2, exp3 or exp4")]
    UnknownExperiment(String),
    #[error("need at least {min} Monte-Carlo draws, got {got}")]
    TooFewDraws { min: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [
        ExperimentId::Exp1,
        ExperimentId::Exp2,
        ExperimentId::Exp3,
        ExperimentId::Exp4,
    ];

    pub fn dim(self) -> usize {
        match self {
            ExperimentId::Exp1 | ExperimentId::Exp2 => 1,
            ExperimentId::Exp3 | ExperimentId::Exp4 => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
        }
    }

    /// The experiment's own noise law.
    pub fn default_noise(self) -> NoiseModel {
        match self {
            ExperimentId::Exp1 | ExperimentId::Exp3 => NoiseModel::Gaussian { sigma: 0.2 },
            ExperimentId::Exp2 => NoiseModel::Gaussian { sigma: 0.15 },
            ExperimentId::Exp4 => NoiseModel::StudentT { scale: 0.2, dof: 3 },
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| SynthError::UnknownExperiment(s.to_string()))
    }
}

/// Additive noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Gaussian {
        sigma: f64,
    },
    /// `scale · Z / sqrt(χ²_dof / dof)`.
    StudentT {
        scale: f64,
        dof: u32,
    },
}

impl NoiseModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::StudentT { scale, dof } => {
                let z: f64 = rng.sample(StandardNormal);
                let chi2: f64 = (0..dof).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                scale * z / (chi2 / f64::from(dof)).sqrt()
            }
        }
    }
}

/// Replacement noise law for an experiment.
pub type NoiseOverride = NoiseModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseOverride>,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId, n: usize, seed: u64) -> Self {
        Self {
            id,
            n,
            seed,
            noise: None,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = Some(NoiseModel::None);
        self
    }
}

/// Coordinatewise affine map of `Π [lo_j, hi_j]` onto `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AffineMap {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| (x - l) / (h - l))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (l, h))| l + u * (h - l))
            .collect()
    }
}

fn exp1(x: &[f64]) -> f64 {
    (2.0 * PI * x[0]).sin()
}

fn exp2(x: &[f64]) -> f64 {
    match x[0] {
        v if v < 0.33 => 0.0,
        v if v < 0.66 => 1.0,
        _ => 2.0,
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn exp3(x: &[f64]) -> f64 {
    (2.0 * PI * x[0] * x[1]).sin()
        + (PI * x[2].powi(3)).cos()
        + (-1.5 * x[3].abs()).exp() * sign(x[4])
        + 0.5 * x[0] * x[2] * x[4]
}

fn exp4(x: &[f64]) -> f64 {
    (PI * x[0] * x[1]).sin() + (PI * x[2]).cos() + x[3] * x[3] - x[4].abs()
}

/// `f*` composed with the inverse coordinate map.
struct MappedTruth {
    map: AffineMap,
    f: fn(&[f64]) -> f64,
}

impl Predictor for MappedTruth {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(&self.map.from_unit(x))
    }
}

/// The experiment's regression function and samplers.
#[derive(Clone)]
pub struct GroundTruth {
    pub id: ExperimentId,
    /// `f*` on the pipeline's `[0,1]^d` coordinates.
    pub fstar: PredictorHandle,
    /// Original covariate box to `[0,1]^d`.
    pub map: AffineMap,
    pub noise: NoiseModel,
    f: fn(&[f64]) -> f64,
}

impl fmt::Debug for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroundTruth")
            .field("id", &self.id)
            .field("map", &self.map)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

impl GroundTruth {
    pub fn new(id: ExperimentId, noise: NoiseModel) -> Self {
        let (map, f): (AffineMap, fn(&[f64]) -> f64) = match id {
            ExperimentId::Exp1 => (AffineMap::cube(1, 0.0, 1.0), exp1),
            ExperimentId::Exp2 => (AffineMap::cube(1, 0.0, 1.0), exp2),
            ExperimentId::Exp3 => (AffineMap::cube(5, -1.0, 1.0), exp3),
            ExperimentId::Exp4 => (AffineMap::cube(5, -1.0, 1.0), exp4),
        };
        let fstar: PredictorHandle = Arc::new(MappedTruth { map: map.clone(), f });
        Self {
            id,
            fstar,
            map,
            noise,
            f,
        }
    }

    pub fn dim(&self) -> usize {
        self.map.lo.len()
    }

    /// `f*` in the experiment's original coordinates.
    pub fn fstar_original(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// `count` covariates in original coordinates, row-major.
    pub fn sample_original<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = (&self.map.lo, &self.map.hi);
        (0..count * self.dim())
            .map(|i| {
                let j = i % self.dim();
                lo[j] + (hi[j] - lo[j]) * rng.random::<f64>()
            })
            .collect()
    }

    /// `count` covariates mapped into `[0,1]^d`, row-major.
    pub fn sample_covariates<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        self.sample_original(count, rng)
            .chunks_exact(d)
            .flat_map(|x| self.map.to_unit(x).into_iter().map(|u| u.clamp(0.0, 1.0)))
            .collect()
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.noise.sample(rng)).collect()
    }
}

/// Draws the training data for `spec`. Covariates come from the
/// `(seed, "covariates")` stream and noise from `(seed, "noise")`.
pub fn generate(spec: &ExperimentSpec) -> (RegressionDataset, GroundTruth) {
    assert!(spec.n >= 1, "experiment size must be at least 1");
    let truth = GroundTruth::new(spec.id, spec.noise.unwrap_or(spec.id.default_noise()));
    let xs = truth.sample_covariates(spec.n, &mut rng::stream(spec.seed, "covariates", 0));
    let noise = truth.sample_noise(spec.n, &mut rng::stream(spec.seed, "noise", 0));
    let d = truth.dim();
    let ys = xs
        .chunks_exact(d)
        .zip(noise)
        .map(|(x, w)| truth.fstar.predict(x) + w)
        .collect();
    let data = RegressionDataset::from_flat(d, xs, ys).expect("generated covariates lie in the unit cube");
    (data, truth)
}

/// `(1/n) Σ (f̆(x_i) − f*(x_i))²` over the dataset's covariates.
pub fn empirical_excess_risk(breve: &dyn Predictor, truth: &GroundTruth, data: &RegressionDataset) -> f64 {
    let total: f64 = data
        .rows()
        .map(|x| (breve.predict(x) - truth.fstar.predict(x)).powi(2))
        .sum();
    total / data.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte-Carlo mean of `(f̆(X) − f*(X))²` over `n_mc` fresh covariates from
/// the `(seed, "holdout")` stream, with the standard error of the mean.
pub fn population_excess_risk(
    breve: &dyn Predictor,
    truth: &GroundTruth,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate, SynthError> {
    if n_mc < 2 {
        return Err(SynthError::TooFewDraws { min: 2, got: n_mc });
    }
    let xs = truth.sample_covariates(n_mc, &mut rng::stream(seed, "holdout", 0));
    let sq: Vec<f64> = xs
        .chunks_exact(truth.dim())
        .map(|x| (breve.predict(x) - truth.fstar.predict(x)).powi(2))
        .collect();
    let nf = n_mc as f64;
    let mean = sq.iter().sum::<f64>() / nf;
    let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predictor_fn;
    use crate::trainers::{FourierRidge, FourierRidgeSpec};
    use proptest::prelude::*;

    fn offset(truth: &GroundTruth, c: f64) -> PredictorHandle {
        let f = truth.fstar.clone();
        predictor_fn(move |x| f.predict(x) + c)
    }

    #[test]
    fn exp2_noiseless_labels() {
        let (data, _) = generate(&ExperimentSpec::new(ExperimentId::Exp2, 2000, 1).noiseless());
        for (x, y) in data.rows().zip(data.ys()) {
            let expect = if x[0] < 0.33 {
                0.0
            } else if x[0] < 0.66 {
                1.0
            } else {
                2.0
            };
            assert_eq!(*y, expect);
        }
        assert_eq!(exp2(&[0.33]), 1.0);
        assert_eq!(exp2(&[0.66]), 2.0);
    }

    #[test]
    fn exp1_response_mean() {
        let (data, _) = generate(&ExperimentSpec::new(ExperimentId::Exp1, 100_000, 2));
        let mean = data.ys().iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn exp4_noise_is_heavy_tailed() {
        let truth = GroundTruth::new(ExperimentId::Exp4, ExperimentId::Exp4.default_noise());
        let w = truth.sample_noise(100_000, &mut rng::stream(4, "noise", 0));
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let m2 = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m4 = w.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let excess = m4 / (m2 * m2) - 3.0;
        assert!(excess > 3.0, "{excess}");
    }

    #[test]
    fn generation_is_reproducible() {
        for id in ExperimentId::ALL {
            let a = generate(&ExperimentSpec::new(id, 50, 9)).0;
            let b = generate(&ExperimentSpec::new(id, 50, 9)).0;
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            assert_eq!(a.d(), id.dim());
        }
    }

    #[test]
    fn map_round_trip() {
        let truth = GroundTruth::new(ExperimentId::Exp3, NoiseModel::None);
        let orig = truth.sample_original(1000, &mut rng::stream(1, "orig", 0));
        for x in orig.chunks_exact(5) {
            let back = truth.map.from_unit(&truth.map.to_unit(x));
            for (a, b) in x.iter().zip(back) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((truth.fstar.predict(&truth.map.to_unit(x)) - truth.fstar_original(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_independent_of_covariates() {
        for id in [ExperimentId::Exp1, ExperimentId::Exp3] {
            let (data, truth) = generate(&ExperimentSpec::new(id, 100_000, 3));
            let w: Vec<f64> = data
                .rows()
                .zip(data.ys())
                .map(|(x, y)| y - truth.fstar.predict(x))
                .collect();
            for j in 0..data.d() {
                let xj: Vec<f64> = data.rows().map(|x| x[j]).collect();
                let corr = correlation(&xj, &w);
                assert!(corr.abs() < 0.02, "{id} coord {j}: {corr}");
            }
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn excess_risk_examples() {
        let (data, truth) = generate(&ExperimentSpec::new(ExperimentId::Exp3, 500, 1));
        assert_eq!(empirical_excess_risk(truth.fstar.as_ref(), &truth, &data), 0.0);
        let shifted = offset(&truth, 0.5);
        assert!((empirical_excess_risk(shifted.as_ref(), &truth, &data) - 0.25).abs() < 1e-12);
        let pop = population_excess_risk(truth.fstar.as_ref(), &truth, 1000, 2).unwrap();
        assert_eq!(
            pop,
            McEstimate {
                estimate: 0.0,
                stderr: 0.0
            }
        );
        let pop = population_excess_risk(shifted.as_ref(), &truth, 1000, 2).unwrap();
        assert!((pop.estimate - 0.25).abs() < 1e-12 && pop.stderr < 1e-12);
        assert!(population_excess_risk(shifted.as_ref(), &truth, 1, 2).is_err());
    }

    #[test]
    fn ridge_excess_risk_on_exp1() {
        let trainer = FourierRidge::new(FourierRidgeSpec::default());
        for seed in 0..10 {
            let (data, truth) = generate(&ExperimentSpec::new(ExperimentId::Exp1, 1000, seed));
            let model = trainer.fit_model(&data).unwrap();
            let e = empirical_excess_risk(&model, &truth, &data);
            assert!(e > 0.0 && e < 0.04, "seed {seed}: {e}");
        }
    }

    #[test]
    fn population_estimate_is_self_consistent() {
        let trainer = FourierRidge::new(FourierRidgeSpec::default());
        let (data, truth) = generate(&ExperimentSpec::new(ExperimentId::Exp1, 1000, 4));
        let model = trainer.fit_model(&data).unwrap();
        let a = population_excess_risk(&model, &truth, 10_000, 1).unwrap();
        let b = population_excess_risk(&model, &truth, 100_000, 2).unwrap();
        let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.estimate - b.estimate).abs() <= 3.0 * combined);
    }

    #[test]
    fn experiment_names_parse() {
        for id in ExperimentId::ALL {
            assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("exp9".parse::<ExperimentId>().is_err());
    }

    proptest! {
        #[test]
        fn unit_map_inverts(lo in -5.0f64..0.0, width in 0.1f64..10.0, u in proptest::collection::vec(0.0f64..1.0, 1..6)) {
            let map = AffineMap::cube(u.len(), lo, lo + width);
            let back = map.to_unit(&map.from_unit(&u));
            for (a, b) in u.iter().zip(back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
