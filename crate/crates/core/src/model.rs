//! Domain types, the black-box trainer interface and the warm-up phase.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::sampling::Strategy;
use crate::trainers::TrainerError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("covariate dimension must be at least 1")]
    ZeroDimension,
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("covariate at row {row}, coordinate {coord} is {value}, outside [0, 1]")]
    OutsideUnitCube { row: usize, coord: usize, value: f64 },
}

/// Covariates in `[0,1]^d` (row-major) and real responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    d: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl RegressionDataset {
    /// Builds a dataset from a row-major `n × d` covariate buffer.
    pub fn from_flat(d: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, DatasetError> {
        if d == 0 {
            return Err(DatasetError::ZeroDimension);
        }
        if ys.is_empty() {
            return Err(DatasetError::Empty);
        }
        if xs.len() != ys.len() * d {
            return Err(DatasetError::Shape {
                expected: ys.len() * d,
                found: xs.len(),
            });
        }
        for (row, x) in xs.chunks_exact(d).enumerate() {
            if !ys[row].is_finite() {
                return Err(DatasetError::NonFinite { row });
            }
            for (coord, &value) in x.iter().enumerate() {
                if !value.is_finite() {
                    return Err(DatasetError::NonFinite { row });
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(DatasetError::OutsideUnitCube { row, coord, value });
                }
            }
        }
        Ok(Self { d, xs, ys })
    }

    pub fn from_rows(rows: &[Vec<f64>], ys: Vec<f64>) -> Result<Self, DatasetError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != ys.len() {
            return Err(DatasetError::Shape {
                expected: ys.len(),
                found: rows.len(),
            });
        }
        let mut xs = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(DatasetError::Shape {
                    expected: d,
                    found: row.len(),
                });
            }
            xs.extend_from_slice(row);
        }
        Self::from_flat(d, xs, ys)
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn xs_flat(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.xs.chunks_exact(self.d)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut xs = Vec::with_capacity(indices.len() * self.d);
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.x(i));
            ys.push(self.ys[i]);
        }
        Self { d: self.d, xs, ys }
    }

    /// Same covariates, new responses.
    pub fn with_responses(&self, ys: Vec<f64>) -> Result<Self, DatasetError> {
        if ys.len() != self.n() {
            return Err(DatasetError::Shape {
                expected: self.n(),
                found: ys.len(),
            });
        }
        if let Some(row) = ys.iter().position(|y| !y.is_finite()) {
            return Err(DatasetError::NonFinite { row });
        }
        Ok(Self {
            d: self.d,
            xs: self.xs.clone(),
            ys,
        })
    }
}

/// A deterministic map from a point of `[0,1]^d` to a real prediction.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_dataset(&self, data: &RegressionDataset) -> Vec<f64> {
        data.rows().map(|x| self.predict(x)).collect()
    }
}

pub type PredictorHandle = Arc<dyn Predictor>;

struct FnPredictor<F>(F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Wraps a closure as a predictor.
pub fn predictor_fn<F>(f: F) -> PredictorHandle
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(FnPredictor(f))
}

/// Whether a trainer may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concurrency {
    Concurrent,
    Serial,
}

/// A fitted predictor plus the trainer's declared optimization tolerance: an
/// upper bound on how far the fit's mean squared training loss may sit above
/// the exact minimizer over the trainer's class.
#[derive(Clone)]
pub struct Fitted {
    pub predictor: PredictorHandle,
    pub tolerance: f64,
}

impl fmt::Debug for Fitted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fitted")
            .field("tolerance", &self.tolerance)
            .finish_non_exhaustive()
    }
}

/// The black-box training procedure.
pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    /// Fits to `data`. Identical `(data, seed)` must give identical predictions.
    fn fit(&self, data: &RegressionDataset, seed: u64) -> Result<Fitted, TrainerError>;

    fn is_deterministic(&self) -> bool {
        true
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("trainer failed ({context}): {source}")]
    TrainerFailed {
        context: String,
        #[source]
        source: TrainerError,
    },
    #[error("non-finite value in {0}")]
    NonFiniteData(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Bound(#[from] crate::refit::BoundError),
    #[error("round {round}: {source}")]
    Tune {
        round: usize,
        #[source]
        source: crate::refit::TuneError,
    },
}

/// Outputs of the warm-up phase: the trained predictor, the pilot, the
/// recentering residuals and the Rademacher signs.
#[derive(Clone)]
pub struct RefitState {
    pub breve: PredictorHandle,
    pub pilot: PredictorHandle,
    pub pilot_is_breve: bool,
    pub breve_vals: Vec<f64>,
    pub residuals: Vec<f64>,
    pub signs: Vec<f64>,
    pub breve_tolerance: f64,
    pub seed: u64,
}

impl fmt::Debug for RefitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RefitState")
            .field("n", &self.residuals.len())
            .field("pilot_is_breve", &self.pilot_is_breve)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// Draws `n` i.i.d. uniform signs from the `(seed, "signs")` stream.
pub fn rademacher_signs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, "signs", 0);
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Fits the full-data predictor, computes residuals against the pilot and
/// samples the sign vector once.
pub fn warm_up(
    dataset: &RegressionDataset,
    trainer: &dyn Trainer,
    pilot: Option<PredictorHandle>,
    seed: u64,
) -> Result<RefitState, EvaluationError> {
    let fitted = trainer
        .fit(dataset, seed)
        .map_err(|source| EvaluationError::TrainerFailed {
            context: "full-data fit".to_string(),
            source,
        })?;
    let breve = fitted.predictor;
    let breve_vals = breve.predict_dataset(dataset);
    if breve_vals.iter().any(|v| !v.is_finite()) {
        return Err(EvaluationError::NonFiniteData("trained predictions"));
    }
    let (pilot, pilot_is_breve, pilot_vals) = match pilot {
        Some(p) => {
            let vals = p.predict_dataset(dataset);
            (p, false, vals)
        }
        None => (breve.clone(), true, breve_vals.clone()),
    };
    let residuals: Vec<f64> = dataset.ys().iter().zip(&pilot_vals).map(|(y, p)| y - p).collect();
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(EvaluationError::NonFiniteData("residuals"));
    }
    Ok(RefitState {
        breve,
        pilot,
        pilot_is_breve,
        breve_vals,
        signs: rademacher_signs(dataset.n(), seed),
        residuals,
        breve_tolerance: fitted.tolerance,
        seed,
    })
}

/// `max |v_i|`, the plug-in noise bound.
pub fn estimate_tau(residuals: &[f64]) -> Result<f64, EvaluationError> {
    if residuals.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(EvaluationError::NonFiniteData("residuals"));
    }
    Ok(residuals.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKeyword {
    Estimate,
}

/// Noise bound: a fixed value or the literal `"estimate"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Value(f64),
    Keyword(TauKeyword),
}

impl TauSetting {
    pub fn resolve(&self, residuals: &[f64]) -> Result<f64, EvaluationError> {
        match *self {
            TauSetting::Value(v) => Ok(v),
            TauSetting::Keyword(TauKeyword::Estimate) => estimate_tau(residuals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RhoMode {
    /// Every round at each grid value, with `rho1 = rho2`.
    FixedGrid { grid: Vec<f64> },
    /// Radius estimation over the first `radius_rounds`, then per-round tuning.
    Tuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Total resampling rounds.
    #[serde(alias = "K")]
    pub rounds: usize,
    /// Rounds reserved for radius estimation.
    #[serde(alias = "K1")]
    pub radius_rounds: usize,
    /// Subsample size is `round(n^beta)`.
    pub beta: f64,
    pub rho: RhoMode,
    pub delta: f64,
    pub tau: TauSetting,
    /// Concentration parameter; defaults to `max(3, 4 tau) + 0.1`.
    pub t: Option<f64>,
    pub w_bar: f64,
    pub w_under: f64,
    /// Fourier decay exponent.
    pub v: Option<f64>,
    /// Fourier decay constant.
    pub m_v: Option<f64>,
    pub tol_rho: f64,
    pub max_tune_iter: usize,
    /// Starting noise scale for radius rounds and for tuning.
    pub rho_init: f64,
    /// A known radius `r >= ||f_breve - f*||_D`; estimated when absent.
    pub radius: Option<f64>,
    /// The unnamed constant in the radius inequality.
    pub radius_constant: f64,
    /// Constant of the random-design logarithmic term.
    pub log_term_constant: f64,
    pub strategy: Strategy,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            radius_rounds: 5,
            beta: 0.6,
            rho: RhoMode::FixedGrid {
                grid: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            },
            delta: 0.05,
            tau: TauSetting::Keyword(TauKeyword::Estimate),
            t: None,
            w_bar: 1.0,
            w_under: 1.0,
            v: None,
            m_v: None,
            tol_rho: 0.02,
            max_tune_iter: 60,
            rho_init: 1.0,
            radius: None,
            radius_constant: 1.0,
            log_term_constant: 1.0,
            strategy: Strategy::Permutation,
            parallel: true,
            seed: 0,
        }
    }
}

impl EvaluationConfig {
    /// `round(n^beta)` clamped to `[1, n]`.
    pub fn subsample_size(&self, n: usize) -> usize {
        let m = (n as f64).powf(self.beta).round() as usize;
        m.clamp(1, n.max(1))
    }

    pub fn validate(&self, n: usize) -> Result<(), EvaluationError> {
        let bad = |msg: String| Err(EvaluationError::InvalidConfig(msg));
        if self.rounds == 0 {
            return bad("rounds must be positive".into());
        }
        if self.radius_rounds >= self.rounds {
            return bad(format!(
                "radius_rounds ({}) must be smaller than rounds ({})",
                self.radius_rounds, self.rounds
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0,1), got {}", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if let TauSetting::Value(tau) = self.tau {
            if !(tau.is_finite() && tau >= 0.0) {
                return bad(format!("tau must be a nonnegative number, got {tau}"));
            }
        }
        if !(self.w_under > 0.0 && self.w_under <= self.w_bar && self.w_bar.is_finite()) {
            return bad("density bounds need 0 < w_under <= w_bar".into());
        }
        if !(self.tol_rho > 0.0 && self.tol_rho < 1.0) {
            return bad("tol_rho must lie in (0,1)".into());
        }
        if !(self.rho_init > 0.0 && self.rho_init.is_finite()) {
            return bad("rho_init must be positive".into());
        }
        if let Some(r) = self.radius {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("radius must be nonnegative".into());
            }
        }
        match &self.rho {
            RhoMode::FixedGrid { grid } => {
                if grid.is_empty() {
                    return bad("rho grid is empty".into());
                }
                if grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return bad("rho grid values must be positive".into());
                }
            }
            RhoMode::Tuned => {
                if self.radius_rounds == 0 && self.radius.is_none() {
                    return bad("tuned mode needs radius_rounds >= 1 or a fixed radius".into());
                }
            }
        }
        if n == 0 {
            return Err(EvaluationError::EmptyInput);
        }
        let m = self.subsample_size(n);
        if m == 0 || m > n {
            return bad(format!("subsample size {m} outside [1, {n}]"));
        }
        Ok(())
    }
}
