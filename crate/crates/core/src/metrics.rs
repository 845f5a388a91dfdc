//! Empirical norms, wild responses, wild optimism and Horvitz–Thompson
//! averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::Subsample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("noise scale must be positive and finite, got {0}")]
    BadScale(f64),
}

/// Sign of the perturbation in a wild response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Plus,
    Minus,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimismPair {
    pub opt_tilde: f64,
    pub opt_check: f64,
}

fn same_len(expected: usize, others: &[usize]) -> Result<(), MetricsError> {
    match others.iter().find(|&&l| l != expected) {
        Some(&found) => Err(MetricsError::ShapeMismatch { expected, found }),
        None => Ok(()),
    }
}

/// `sqrt(mean(values²))`.
pub fn empirical_norm(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let ss: f64 = values.iter().map(|v| v * v).sum();
    Ok((ss / values.len() as f64).sqrt())
}

/// Empirical norm of `a - b`.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    same_len(a.len(), &[b.len()])?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    empirical_norm(&diff)
}

/// `breve_i ± rho · eps_i · v_i`.
pub fn wild_responses(
    breve_vals: &[f64],
    signs: &[f64],
    residuals: &[f64],
    rho: f64,
    direction: Direction,
) -> Result<Vec<f64>, MetricsError> {
    same_len(breve_vals.len(), &[signs.len(), residuals.len()])?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(MetricsError::BadScale(rho));
    }
    let s = direction.sign() * rho;
    Ok(breve_vals
        .iter()
        .zip(signs)
        .zip(residuals)
        .map(|((b, e), v)| b + s * e * v)
        .collect())
}

/// `(1/m) Σ eps_i v_i (wild_i - breve_i)`.
///
/// For a minus-direction refit pass the arguments with `wild` and `breve`
/// swapped, so the difference carries the sign that makes the quantity
/// nonnegative for an exact minimizer.
pub fn wild_optimism(
    signs: &[f64],
    residuals: &[f64],
    wild_vals: &[f64],
    breve_vals: &[f64],
) -> Result<f64, MetricsError> {
    let m = signs.len();
    if m == 0 {
        return Err(MetricsError::EmptyInput);
    }
    same_len(m, &[residuals.len(), wild_vals.len(), breve_vals.len()])?;
    let total: f64 = (0..m)
        .map(|i| signs[i] * residuals[i] * (wild_vals[i] - breve_vals[i]))
        .sum();
    Ok(total / m as f64)
}

/// `(1/n) Σ eps_i v_i diff_i` over the full data.
pub fn full_average(signs: &[f64], residuals: &[f64], diff_vals: &[f64]) -> Result<f64, MetricsError> {
    let n = signs.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    same_len(n, &[residuals.len(), diff_vals.len()])?;
    let total: f64 = (0..n).map(|i| signs[i] * residuals[i] * diff_vals[i]).sum();
    Ok(total / n as f64)
}

/// Horvitz–Thompson average over the subsample:
/// `(1/n) Σ_i (δ_i / π_i) eps_i v_i diff_i = (1/m) Σ_{i∈S} eps_i v_i diff_i`.
///
/// With `diff = f - f_breve` this is `B_S(f)`; with `diff = f_breve - f` it
/// is `D_S(f)`.
pub fn ht_average(
    full_signs: &[f64],
    full_residuals: &[f64],
    full_diff_vals: &[f64],
    sub: &Subsample,
) -> Result<f64, MetricsError> {
    let n = sub.n();
    same_len(n, &[full_signs.len(), full_residuals.len(), full_diff_vals.len()])?;
    let total: f64 = sub
        .indices()
        .iter()
        .map(|&i| full_signs[i] * full_residuals[i] * full_diff_vals[i])
        .sum();
    Ok(total / sub.m() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All size-`m` subsets of `[0, n)`, lexicographic.
    fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(m);
        fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == m {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, m, cur, out);
                cur.pop();
            }
        }
        rec(0, n, m, &mut cur, &mut out);
        out
    }

    #[test]
    fn norm_examples() {
        assert!((empirical_norm(&[3.0, 4.0]).unwrap() - 12.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(empirical_norm(&[0.0; 4]).unwrap(), 0.0);
        assert!((empirical_norm(&[-2.5; 7]).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(empirical_norm(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn wild_response_examples() {
        let plus = wild_responses(&[0.0], &[1.0], &[2.0], 1.0, Direction::Plus).unwrap();
        let minus = wild_responses(&[0.0], &[1.0], &[2.0], 1.0, Direction::Minus).unwrap();
        assert_eq!(plus, vec![2.0]);
        assert_eq!(minus, vec![-2.0]);
        assert_eq!(
            wild_responses(&[0.0], &[1.0], &[2.0], 0.0, Direction::Plus),
            Err(MetricsError::BadScale(0.0))
        );
        assert!(matches!(
            wild_responses(&[0.0, 1.0], &[1.0], &[2.0], 1.0, Direction::Plus),
            Err(MetricsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn optimism_examples() {
        let v = wild_optimism(&[1.0, -1.0], &[1.0, 1.0], &[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);
        let b = [0.3, -0.2, 1.0];
        assert_eq!(wild_optimism(&[1.0, 1.0, -1.0], &[1.0, 2.0, 3.0], &b, &b).unwrap(), 0.0);
    }

    #[test]
    fn ht_on_full_set_is_full_average() {
        let e = [1.0, -1.0, 1.0, 1.0];
        let v = [0.2, 0.5, -0.1, 0.7];
        let d = [1.0, 2.0, 3.0, -4.0];
        let full = Subsample::full(4).unwrap();
        let a = full_average(&e, &v, &d).unwrap();
        assert!((ht_average(&e, &v, &d, &full).unwrap() - a).abs() < 1e-15);
        assert_eq!(ht_average(&e, &v, &[0.0; 4], &full).unwrap(), 0.0);
    }

    #[test]
    fn ht_exhaustive_mean_n4_m2() {
        let e = [1.0, -1.0, -1.0, 1.0];
        let v = [0.3, -1.2, 0.8, 2.0];
        let d = [0.5, 0.25, -3.0, 1.5];
        let a = full_average(&e, &v, &d).unwrap();
        let subsets = combinations(4, 2);
        assert_eq!(subsets.len(), 6);
        let mean: f64 = subsets
            .into_iter()
            .map(|s| ht_average(&e, &v, &d, &Subsample::new(s, 4).unwrap()).unwrap())
            .sum::<f64>()
            / 6.0;
        assert!((mean - a).abs() < 1e-12);
    }

    fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn ht_unbiased_exhaustively(
            (n, m, e, v, d) in (1usize..=8).prop_flat_map(|n| (
                Just(n),
                1..=n,
                proptest::collection::vec(prop_oneof![Just(1.0), Just(-1.0)], n),
                vec_of(n),
                vec_of(n),
            ))
        ) {
            let a = full_average(&e, &v, &d).unwrap();
            let subsets = combinations(n, m);
            let count = subsets.len() as f64;
            let mean = subsets
                .into_iter()
                .map(|s| ht_average(&e, &v, &d, &Subsample::new(s, n).unwrap()).unwrap())
                .sum::<f64>() / count;
            prop_assert!((mean - a).abs() < 1e-12);
        }

        #[test]
        fn optimism_is_antisymmetric_in_signs(
            (e, v, w, b) in (1usize..40).prop_flat_map(|m| (
                proptest::collection::vec(prop_oneof![Just(1.0), Just(-1.0)], m),
                vec_of(m), vec_of(m), vec_of(m),
            ))
        ) {
            let flipped: Vec<f64> = e.iter().map(|s| -s).collect();
            let a = wild_optimism(&e, &v, &w, &b).unwrap();
            let c = wild_optimism(&flipped, &v, &w, &b).unwrap();
            prop_assert_eq!(a, -c);
        }

        #[test]
        fn norm_is_homogeneous(values in proptest::collection::vec(-1e3f64..1e3, 1..50), c in -1e3f64..1e3) {
            let scaled: Vec<f64> = values.iter().map(|x| c * x).collect();
            let lhs = empirical_norm(&scaled).unwrap();
            let rhs = c.abs() * empirical_norm(&values).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) + 1e-300);
        }
    }
}
