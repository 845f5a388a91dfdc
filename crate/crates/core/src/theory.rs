//! Numerical checks of the Fourier-decay assumption and of the subsample
//! norm-equivalence inequality in one dimension.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::model::Predictor;
use crate::sampling::Subsample;
use crate::trainers::MlpModel;

/// Floor applied to the full-data squared norm when forming the ratio.
pub const EPS_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("grid of {grid_size} points aliases frequencies up to {max_frequency}; need at least {required}")]
    Aliasing {
        grid_size: usize,
        max_frequency: usize,
        required: usize,
    },
    #[error("truncation precondition fails: 2N log(2N/delta)/n^beta = {value} > 1")]
    LemmaPrecondition { value: f64 },
    #[error("bound denominator {denominator} is not positive; n is too small")]
    RegimeViolation { denominator: f64 },
    #[error("bad parameter: {0}")]
    BadParam(String),
}

/// Fourier coefficients of a function on `[0, 1)` for `k ∈ [−N, N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierProfile {
    pub max_frequency: usize,
    /// Index `k + N`.
    pub coefficients: Vec<Complex64>,
    /// Least-squares slope of `−ln|f̂(k)|` on `ln|k|` over coefficients above
    /// the noise floor; absent with fewer than two such frequencies.
    pub decay_v: Option<f64>,
    /// `max_{k≠0} |k|^v |f̂(k)|` at `decay_v`.
    pub m_v_hat: Option<f64>,
    /// Mean square of the sampled function on the quadrature grid.
    pub grid_mean_square: f64,
}

impl FourierProfile {
    pub fn coefficient(&self, k: i64) -> Option<Complex64> {
        let idx = k + self.max_frequency as i64;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.coefficients.get(i).copied())
    }

    /// `Σ_k |f̂(k)|²`.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(Complex64::norm_sqr).sum()
    }

    /// Largest `|f̂(−k) − conj(f̂(k))|`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.max_frequency as i64;
        (1..=n)
            .map(|k| {
                let (a, b) = (self.coefficient(k).unwrap(), self.coefficient(-k).unwrap());
                (b - a.conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Relative magnitude below which a coefficient counts as zero in the fit.
const DECAY_FIT_FLOOR: f64 = 1e-10;

/// DFT quadrature `f̂(k) = (1/G) Σ_g f(g/G) e^{−2πikg/G}` for `|k| ≤ N`.
/// Exact for trigonometric polynomials of degree at most `N` once `G > 2N`;
/// `G ≥ 4N + 4` is required for margin.
pub fn fourier_coefficients(
    f: &dyn Predictor,
    max_frequency: usize,
    grid_size: usize,
) -> Result<FourierProfile, TheoryError> {
    let required = 4 * max_frequency + 4;
    if grid_size < required {
        return Err(TheoryError::Aliasing {
            grid_size,
            max_frequency,
            required,
        });
    }
    let g = grid_size as f64;
    let samples: Vec<f64> = (0..grid_size).map(|i| f.predict(&[i as f64 / g])).collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(TheoryError::BadParam("function is not finite on the grid".into()));
    }
    let n = max_frequency as i64;
    let coefficients: Vec<Complex64> = (-n..=n)
        .map(|k| {
            let sum: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    // Reduce k·i mod G before scaling so phases stay accurate.
                    let phase = (k * i as i64).rem_euclid(grid_size as i64) as f64 / g;
                    s * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase)
                })
                .sum();
            sum / g
        })
        .collect();
    let grid_mean_square = samples.iter().map(|s| s * s).sum::<f64>() / g;
    let mut profile = FourierProfile {
        max_frequency,
        coefficients,
        decay_v: None,
        m_v_hat: None,
        grid_mean_square,
    };
    profile.decay_v = fit_decay_exponent(&profile);
    profile.m_v_hat = profile.decay_v.map(|v| max_weighted(&profile, v));
    Ok(profile)
}

fn fit_decay_exponent(profile: &FourierProfile) -> Option<f64> {
    let peak = profile.coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return None;
    }
    let points: Vec<(f64, f64)> = (1..=profile.max_frequency as i64)
        .filter_map(|k| {
            let mag = profile.coefficient(k).unwrap().norm();
            (mag > DECAY_FIT_FLOOR * peak).then(|| ((k as f64).ln(), mag.ln()))
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let len = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
    let my = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

fn max_weighted(profile: &FourierProfile, v: f64) -> f64 {
    let n = profile.max_frequency as i64;
    (-n..=n)
        .filter(|&k| k != 0)
        .map(|k| (k.unsigned_abs() as f64).powf(v) * profile.coefficient(k).unwrap().norm())
        .fold(0.0, f64::max)
}

/// `M̂_v = max_{k≠0} |k|^v |f̂(k)|`; 0 for an all-zero profile.
pub fn decay_constant(profile: &FourierProfile, v: f64) -> Result<f64, TheoryError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(TheoryError::BadParam(format!("v must be positive, got {v}")));
    }
    Ok(max_weighted(profile, v))
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let cols = a.ncols();
    if cols == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    // Deterministic start with distinct entries so it is unlikely to be
    // orthogonal to the top singular vector.
    let mut x = DVector::from_fn(cols, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let y = &ata * &x;
        let next = y.norm();
        if next == 0.0 {
            return 0.0;
        }
        x = y / next;
        if (next - lambda).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// `Π_j ‖W^{(j)}‖_op` over the layers of a trained network.
pub fn spectral_norm_product(model: &MlpModel) -> f64 {
    model.layers().iter().map(|l| spectral_norm(&l.matrix())).product()
}

/// Inputs of the subsample norm-equivalence inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivParams {
    /// Truncation frequency `N`.
    #[serde(alias = "N")]
    pub truncation: usize,
    pub delta: f64,
    pub beta: f64,
    pub w_bar: f64,
    pub w_under: f64,
    pub v: f64,
    pub m_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    /// `‖h‖²_S / max(‖h‖²_D, EPS_FLOOR)`.
    pub ratio: f64,
    /// Right side divided by `max(‖h‖²_D, EPS_FLOOR)`.
    pub bound: f64,
    /// `‖h‖²_S` at most the un-normalized right side.
    pub holds: bool,
    pub sub_norm_sq: f64,
    pub full_norm_sq: f64,
    pub rhs: f64,
}

/// `2N ln(2N/δ)`.
fn truncation_load(truncation: usize, delta: f64) -> f64 {
    let two_n = 2.0 * truncation as f64;
    two_n * (two_n / delta).ln()
}

/// Largest `N ≥ 1` with `2N ln(2N/δ)/n^β ≤ 1`, if any.
pub fn admissible_truncation(n: usize, beta: f64, delta: f64) -> Option<usize> {
    let scale = (n as f64).powf(beta);
    let mut best = None;
    let mut big_n = 1;
    while truncation_load(big_n, delta) <= scale {
        best = Some(big_n);
        big_n += 1;
    }
    best
}

/// Evaluates
/// `‖h‖²_S ≤ 4q‖h‖²_D + (2q + 1)·8M_v²/((2v−1)N^{2v−1})` with
/// `q = (w̄ + 3w̄√(2N ln(2N/δ)/n^β)) / (w̲ − 3w̄√(2N ln(2N/δ)/n))`.
pub fn norm_equivalence_check(
    h_vals_full: &[f64],
    sub: &Subsample,
    params: &NormEquivParams,
) -> Result<NormEquivalence, TheoryError> {
    let n = h_vals_full.len();
    if n == 0 || sub.n() != n {
        return Err(TheoryError::BadParam(format!(
            "subsample parent size {} vs {n} values",
            sub.n()
        )));
    }
    let NormEquivParams {
        truncation,
        delta,
        beta,
        w_bar,
        w_under,
        v,
        m_v,
    } = *params;
    if truncation == 0 || !(delta > 0.0 && delta < 1.0) || !(beta > 0.0 && beta <= 1.0) {
        return Err(TheoryError::BadParam(
            "need N >= 1, delta in (0,1), beta in (0,1]".into(),
        ));
    }
    if !(v > 0.5) || m_v < 0.0 || !(w_bar > 0.0 && w_under > 0.0) {
        return Err(TheoryError::BadParam(
            "need v > 1/2, M_v >= 0 and positive density bounds".into(),
        ));
    }
    let nf = n as f64;
    let load = truncation_load(truncation, delta);
    let precondition = load / nf.powf(beta);
    if precondition > 1.0 {
        return Err(TheoryError::LemmaPrecondition { value: precondition });
    }
    let denominator = w_under - 3.0 * w_bar * (load / nf).sqrt();
    if denominator <= 0.0 {
        return Err(TheoryError::RegimeViolation { denominator });
    }
    let q = (w_bar + 3.0 * w_bar * precondition.sqrt()) / denominator;
    let sub_norm_sq = metrics::empirical_norm(&sub.gather(h_vals_full))
        .map_err(|e| TheoryError::BadParam(e.to_string()))?
        .powi(2);
    let full_norm_sq = metrics::empirical_norm(h_vals_full)
        .map_err(|e| TheoryError::BadParam(e.to_string()))?
        .powi(2);
    let tail = (2.0 * q + 1.0) * 8.0 * m_v * m_v / (2.0 * v - 1.0) / (truncation as f64).powf(2.0 * v - 1.0);
    let rhs = 4.0 * q * full_norm_sq + tail;
    let floor = full_norm_sq.max(EPS_FLOOR);
    Ok(NormEquivalence {
        ratio: sub_norm_sq / floor,
        bound: rhs / floor,
        holds: sub_norm_sq <= rhs,
        sub_norm_sq,
        full_norm_sq,
        rhs,
    })
}

/// A real trigonometric polynomial `c_0 + Σ_k a_k cos(2πkx) + b_k sin(2πkx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    /// Random coefficients with `|ĥ(k)| ≤ M_v/|k|^v` for every `k ≠ 0` and
    /// `|ĥ(0)| ≤ M_v`: uniform magnitude fraction and uniform phase.
    pub fn random_decaying<R: Rng + ?Sized>(degree: usize, v: f64, m_v: f64, rng: &mut R) -> Self {
        let constant = m_v * rng.random_range(-1.0..=1.0);
        let (mut cos, mut sin) = (Vec::with_capacity(degree), Vec::with_capacity(degree));
        for k in 1..=degree {
            // ĥ(k) = (a − ib)/2, so |ĥ(k)| = r/2 with r the (a, b) radius.
            let radius = 2.0 * m_v / (k as f64).powf(v) * rng.random::<f64>();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            cos.push(radius * phase.cos());
            sin.push(radius * phase.sin());
        }
        Self { constant, cos, sin }
    }
}

impl Predictor for TrigPolynomial {
    fn predict(&self, x: &[f64]) -> f64 {
        let t = std::f64::consts::TAU * x[0];
        self.constant
            + self
                .cos
                .iter()
                .zip(&self.sin)
                .enumerate()
                .map(|(i, (a, b))| {
                    let kt = (i + 1) as f64 * t;
                    a * kt.cos() + b * kt.sin()
                })
                .sum::<f64>()
    }
}

/// Settings for [`norm_equivalence_coverage`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSettings {
    pub trials: usize,
    pub n: usize,
    pub beta: f64,
    pub delta: f64,
    pub v: f64,
    pub m_v: f64,
    /// Degree of the random trigonometric polynomials.
    pub degree: usize,
    pub seed: u64,
}

impl Default for CoverageSettings {
    fn default() -> Self {
        Self {
            trials: 500,
            n: 10_000,
            beta: 0.6,
            delta: 0.05,
            v: 1.0,
            m_v: 1.0,
            degree: 64,
            seed: 0,
        }
    }
}

/// Fraction of trials in which the norm-equivalence inequality holds. Each
/// trial draws a decay-respecting polynomial, uniform covariates and a
/// subsample of size `round(n^β)`, all from the `(seed, "norm-equiv", trial)`
/// stream, with `N` the largest admissible truncation.
pub fn norm_equivalence_coverage(settings: &CoverageSettings) -> Result<f64, TheoryError> {
    use crate::sampling::{srswor_with_rng, Strategy};
    let CoverageSettings {
        trials,
        n,
        beta,
        delta,
        v,
        m_v,
        degree,
        seed,
    } = *settings;
    if trials == 0 {
        return Err(TheoryError::BadParam("need at least one trial".into()));
    }
    let truncation = admissible_truncation(n, beta, delta).ok_or(TheoryError::LemmaPrecondition {
        value: truncation_load(1, delta) / (n as f64).powf(beta),
    })?;
    let params = NormEquivParams {
        truncation,
        delta,
        beta,
        w_bar: 1.0,
        w_under: 1.0,
        v,
        m_v,
    };
    let m = ((n as f64).powf(beta).round() as usize).clamp(1, n);
    let mut holds = 0;
    for trial in 0..trials {
        let mut r = crate::rng::stream(seed, "norm-equiv", trial as u64);
        let h = TrigPolynomial::random_decaying(degree, v, m_v, &mut r);
        let vals: Vec<f64> = (0..n).map(|_| h.predict(&[r.random::<f64>()])).collect();
        let sub =
            srswor_with_rng(n, m, Strategy::Permutation, &mut r).map_err(|e| TheoryError::BadParam(e.to_string()))?;
        if norm_equivalence_check(&vals, &sub, &params)?.holds {
            holds += 1;
        }
    }
    Ok(holds as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{predictor_fn, RegressionDataset};
    use crate::rng;
    use crate::sampling::{self, Strategy};
    use crate::synth::{generate, ExperimentId, ExperimentSpec};
    use crate::trainers::{FourierRidge, FourierRidgeSpec, Mlp, MlpSpec};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    #[test]
    fn sine_coefficients() {
        let f = predictor_fn(|x| (2.0 * PI * x[0]).sin());
        let p = fourier_coefficients(f.as_ref(), 6, 64).unwrap();
        for k in -6..=6 {
            let c = p.coefficient(k).unwrap();
            let expect = match k {
                1 => Complex64::new(0.0, -0.5),
                -1 => Complex64::new(0.0, 0.5),
                _ => Complex64::new(0.0, 0.0),
            };
            assert!((c - expect).norm() < 1e-12, "k={k}: {c}");
        }
        assert!((decay_constant(&p, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_and_zero() {
        let f = predictor_fn(|_| 2.5);
        let p = fourier_coefficients(f.as_ref(), 3, 16).unwrap();
        assert!((p.coefficient(0).unwrap() - Complex64::new(2.5, 0.0)).norm() < 1e-13);
        assert!(decay_constant(&p, 1.0).unwrap() < 1e-13);
        let z = predictor_fn(|_| 0.0);
        let p = fourier_coefficients(z.as_ref(), 3, 16).unwrap();
        assert_eq!(decay_constant(&p, 2.0).unwrap(), 0.0);
        assert_eq!(p.decay_v, None);
        assert!(decay_constant(&p, 0.0).is_err());
    }

    #[test]
    fn aliasing_guard() {
        let f = predictor_fn(|_| 1.0);
        assert_eq!(
            fourier_coefficients(f.as_ref(), 4, 19),
            Err(TheoryError::Aliasing {
                grid_size: 19,
                max_frequency: 4,
                required: 20
            })
        );
        assert!(fourier_coefficients(f.as_ref(), 4, 20).is_ok());
    }

    #[test]
    fn ridge_round_trip() {
        let (data, _) = generate(&ExperimentSpec::new(ExperimentId::Exp1, 300, 5));
        let model = FourierRidge::new(FourierRidgeSpec {
            max_frequency: 6,
            lambda: 1e-4,
            ..FourierRidgeSpec::default()
        })
        .fit_model(&data)
        .unwrap();
        let p = fourier_coefficients(&model, 6, 128).unwrap();
        for k in -6i64..=6 {
            let stored = model.fourier_coefficient(&[k]);
            assert!((p.coefficient(k).unwrap() - stored).norm() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn parseval_for_band_limited() {
        let mut r = rng::stream(1, "parseval", 0);
        for _ in 0..20 {
            let h = TrigPolynomial::random_decaying(10, 1.0, 1.0, &mut r);
            let p = fourier_coefficients(&h, 10, 64).unwrap();
            assert!((p.energy() - p.grid_mean_square).abs() <= 0.01 * p.grid_mean_square);
        }
    }

    #[test]
    fn decay_fit_recovers_exponent() {
        // f̂(k) = 1/k² for |k| ≤ 12, a real cosine series.
        let h = TrigPolynomial {
            constant: 0.0,
            cos: (1..=12).map(|k| 2.0 / (k as f64).powi(2)).collect(),
            sin: vec![0.0; 12],
        };
        let p = fourier_coefficients(&h, 12, 64).unwrap();
        assert!((p.decay_v.unwrap() - 2.0).abs() < 1e-9);
        assert!((p.m_v_hat.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut r = rng::stream(2, "spec", 0);
        for (rows, cols) in [(3, 3), (5, 2), (1, 7), (32, 32)] {
            let a = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0));
            let svd = a.clone().svd(false, false);
            let top = svd.singular_values.max();
            assert!((spectral_norm(&a) - top).abs() <= 1e-8 * top);
        }
        assert_eq!(spectral_norm(&DMatrix::zeros(2, 3)), 0.0);
    }

    #[test]
    fn relu_network_decay_bound() {
        let (data, _) = generate(&ExperimentSpec::new(ExperimentId::Exp1, 200, 3));
        let mlp = Mlp::new(MlpSpec::default());
        let model = mlp.fit_model(&data, 3).unwrap();
        let profile = fourier_coefficients(&model, 16, 1024).unwrap();
        let m2 = decay_constant(&profile, 2.0).unwrap();
        let product = spectral_norm_product(&model);
        assert!(m2 <= 2.0 * product, "{m2} vs {product}");
    }

    #[test]
    fn zero_h_and_full_subsample() {
        let params = NormEquivParams {
            truncation: 18,
            delta: 0.05,
            beta: 0.6,
            w_bar: 1.0,
            w_under: 1.0,
            v: 1.0,
            m_v: 1.0,
        };
        let n = 10_000;
        let sub = sampling::srswor(n, 251, Strategy::Permutation, 0).unwrap();
        let zero = norm_equivalence_check(&vec![0.0; n], &sub, &params).unwrap();
        assert_eq!(zero.ratio, 0.0);
        assert!(zero.holds);
        let h: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let full = norm_equivalence_check(&h, &Subsample::full(n).unwrap(), &params).unwrap();
        assert!((full.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        let base = NormEquivParams {
            truncation: 19,
            delta: 0.05,
            beta: 0.6,
            w_bar: 1.0,
            w_under: 1.0,
            v: 1.0,
            m_v: 1.0,
        };
        let sub = Subsample::full(10_000).unwrap();
        let h = vec![1.0; 10_000];
        assert!(matches!(
            norm_equivalence_check(&h, &sub, &base),
            Err(TheoryError::LemmaPrecondition { .. })
        ));
        assert_eq!(admissible_truncation(10_000, 0.6, 0.05), Some(18));
        // Dense subsample but tiny n: the denominator goes negative.
        let sub = Subsample::full(50).unwrap();
        let p = NormEquivParams {
            truncation: 1,
            beta: 1.0,
            ..base
        };
        assert!(matches!(
            norm_equivalence_check(&[1.0; 50], &sub, &p),
            Err(TheoryError::RegimeViolation { .. })
        ));
    }

    #[test]
    fn cosine_coverage() {
        // √2 cos(2πx), uniform covariates, 500 draws of (sample, subsample).
        let (n, m) = (10_000, 251);
        let params = NormEquivParams {
            truncation: admissible_truncation(n, 0.6, 0.05).unwrap(),
            delta: 0.05,
            beta: 0.6,
            w_bar: 1.0,
            w_under: 1.0,
            v: 1.0,
            m_v: 2f64.sqrt() / 2.0,
        };
        let holds = (0..500u64)
            .filter(|&s| {
                let mut r = rng::stream(s, "coverage", 0);
                let h: Vec<f64> = (0..n)
                    .map(|_| 2f64.sqrt() * (2.0 * PI * r.random::<f64>()).cos())
                    .collect();
                let sub = sampling::srswor_with_rng(n, m, Strategy::Hashset, &mut r).unwrap();
                norm_equivalence_check(&h, &sub, &params).unwrap().holds
            })
            .count();
        assert!(holds as f64 >= 0.98 * 500.0, "{holds}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn real_functions_are_conjugate_symmetric(seed: u64, degree in 0usize..8) {
            let mut r = rng::stream(seed, "conj", 0);
            let h = TrigPolynomial::random_decaying(degree, 1.5, 1.0, &mut r);
            let p = fourier_coefficients(&h, 8, 40).unwrap();
            prop_assert!(p.conjugate_asymmetry() < 1e-12);
        }

        #[test]
        fn ridge_predictions_match_their_profile(xs in proptest::collection::vec(0.0f64..1.0, 30..60), seed: u64) {
            let mut r = rng::stream(seed, "ridge-prof", 0);
            let ys: Vec<f64> = xs.iter().map(|_| r.random_range(-1.0..1.0)).collect();
            let data = RegressionDataset::from_flat(1, xs, ys).unwrap();
            let model = FourierRidge::new(FourierRidgeSpec { max_frequency: 3, lambda: 1e-2, ..FourierRidgeSpec::default() }).fit_model(&data).unwrap();
            let p = fourier_coefficients(&model, 3, 32).unwrap();
            let x = 0.3;
            let recon: f64 = (-3i64..=3).map(|k| (p.coefficient(k).unwrap() * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x)).re).sum();
            prop_assert!((recon - model.predict(&[x])).abs() < 1e-10);
        }
    }
}
