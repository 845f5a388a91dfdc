//! Simple random sampling without replacement.
//!
//! Three exact samplers: a partial Fisher–Yates shuffle, Floyd's hash-set
//! construction, and reservoir sampling over a single pass of the index
//! stream. Each returns every size-`m` subset of `[0, n)` with probability
//! `1 / C(n, m)`.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("cannot draw {m} of {n} items without replacement")]
    BadSize { n: usize, m: usize },
    #[error("index {index} out of range for parent size {n}")]
    IndexOutOfRange { index: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Permutation,
    Hashset,
    Reservoir,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Permutation, Strategy::Hashset, Strategy::Reservoir];
}

/// A subset of `[0, n)`, stored as strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subsample {
    indices: Vec<usize>,
    n: usize,
}

impl Subsample {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self, SamplingError> {
        indices.sort_unstable();
        let m = indices.len();
        if m == 0 || m > n {
            return Err(SamplingError::BadSize { n, m });
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= n) {
            return Err(SamplingError::IndexOutOfRange { index, n });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(SamplingError::BadSize { n, m });
        }
        Ok(Self { indices, n })
    }

    /// The whole index set `[0, n)`.
    pub fn full(n: usize) -> Result<Self, SamplingError> {
        Self::new((0..n).collect(), n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// `m / n`, the common inclusion probability.
    pub fn inclusion_probability(&self) -> f64 {
        self.m() as f64 / self.n as f64
    }

    /// Gathers `values[i]` for every member `i`.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| values[i]).collect()
    }
}

/// `I(i ∈ S)`.
pub fn membership_indicator(sub: &Subsample, i: usize) -> Result<u8, SamplingError> {
    if i >= sub.n {
        return Err(SamplingError::IndexOutOfRange { index: i, n: sub.n });
    }
    Ok(u8::from(sub.indices.binary_search(&i).is_ok()))
}

/// Draws a subsample from the `(seed, "srswor")` stream.
pub fn srswor(n: usize, m: usize, strategy: Strategy, seed: u64) -> Result<Subsample, SamplingError> {
    let mut rng = rng::stream(seed, "srswor", 0);
    srswor_with_rng(n, m, strategy, &mut rng)
}

pub fn srswor_with_rng<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    strategy: Strategy,
    rng: &mut R,
) -> Result<Subsample, SamplingError> {
    if m == 0 || m > n {
        return Err(SamplingError::BadSize { n, m });
    }
    let mut indices = match strategy {
        Strategy::Permutation => partial_shuffle(n, m, rng),
        Strategy::Hashset => floyd(n, m, rng),
        Strategy::Reservoir => reservoir_sample(0..n, m, rng),
    };
    indices.sort_unstable();
    Ok(Subsample { indices, n })
}

/// Fisher–Yates restricted to the first `m` slots.
fn partial_shuffle<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

/// Floyd's algorithm: one draw per selected element, duplicates resolved
/// through the hash set.
fn floyd<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for j in (n - m)..n {
        let t = rng.random_range(0..=j);
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        out.push(pick);
    }
    out
}

/// Algorithm R over an arbitrary stream. Reads each item once and holds at
/// most `m` of them. Returns fewer than `m` items only if the stream is
/// shorter than `m`.
pub fn reservoir_sample<T, I, R>(items: I, m: usize, rng: &mut R) -> Vec<T>
where
    I: IntoIterator<Item = T>,
    R: Rng + ?Sized,
{
    let mut reservoir = Vec::with_capacity(m);
    for (seen, item) in items.into_iter().enumerate() {
        if reservoir.len() < m {
            reservoir.push(item);
        } else {
            let j = rng.random_range(0..=seen);
            if j < m {
                reservoir[j] = item;
            }
        }
    }
    reservoir
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;
    use std::cell::Cell;
    use std::collections::HashMap;

    #[test]
    fn full_draw_is_forced() {
        for s in Strategy::ALL {
            assert_eq!(srswor(5, 5, s, 11).unwrap().indices(), &[0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        for s in Strategy::ALL {
            assert_eq!(srswor(4, 0, s, 1), Err(SamplingError::BadSize { n: 4, m: 0 }));
            assert_eq!(srswor(4, 5, s, 1), Err(SamplingError::BadSize { n: 4, m: 5 }));
        }
    }

    #[test]
    fn draws_are_distinct_and_in_range() {
        for s in Strategy::ALL {
            let sub = srswor(10, 3, s, 1).unwrap();
            assert_eq!(sub.m(), 3);
            assert!(sub.indices().windows(2).all(|w| w[0] < w[1]));
            assert!(sub.indices().iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn same_seed_same_draw() {
        for s in Strategy::ALL {
            assert_eq!(srswor(100, 17, s, 5).unwrap(), srswor(100, 17, s, 5).unwrap());
        }
    }

    #[test]
    fn indicator() {
        let sub = Subsample::new(vec![3, 1], 5).unwrap();
        assert_eq!(membership_indicator(&sub, 3), Ok(1));
        assert_eq!(membership_indicator(&sub, 0), Ok(0));
        assert_eq!(
            membership_indicator(&sub, 5),
            Err(SamplingError::IndexOutOfRange { index: 5, n: 5 })
        );
    }

    #[test]
    fn inclusion_frequency_matches_m_over_n() {
        let draws = 100_000;
        for s in Strategy::ALL {
            let mut rng = rng::stream(99, "inclusion", s as u64);
            let hits = (0..draws)
                .filter(|_| {
                    let sub = srswor_with_rng(10, 3, s, &mut rng).unwrap();
                    membership_indicator(&sub, 0).unwrap() == 1
                })
                .count();
            let freq = hits as f64 / draws as f64;
            assert!((freq - 0.3).abs() < 0.01, "{s:?}: {freq}");
        }
    }

    #[test]
    fn reservoir_reads_stream_once_with_bounded_memory() {
        struct Counting<'a> {
            next: usize,
            end: usize,
            reads: &'a Cell<usize>,
        }
        impl Iterator for Counting<'_> {
            type Item = usize;
            fn next(&mut self) -> Option<usize> {
                if self.next == self.end {
                    return None;
                }
                self.reads.set(self.reads.get() + 1);
                self.next += 1;
                Some(self.next - 1)
            }
        }
        let reads = Cell::new(0);
        let mut rng = rng::stream(0, "count", 0);
        let stream = Counting {
            next: 0,
            end: 1000,
            reads: &reads,
        };
        let out = reservoir_sample(stream, 7, &mut rng);
        assert_eq!(reads.get(), 1000);
        assert_eq!(out.len(), 7);
        assert!(out.capacity() <= 7);
    }

    #[test]
    fn small_exhaustive_uniformity() {
        // n = 4, m = 2: 6 subsets, 60k draws each strategy, 4 sigma band.
        let draws = 60_000_u64;
        for s in Strategy::ALL {
            let mut rng = rng::stream(3, "exhaustive", s as u64);
            let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
            for _ in 0..draws {
                let sub = srswor_with_rng(4, 2, s, &mut rng).unwrap();
                *counts.entry(sub.indices().to_vec()).or_default() += 1;
            }
            assert_eq!(counts.len(), 6);
            let p = 1.0 / 6.0;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            for c in counts.values() {
                assert!((*c as f64 - draws as f64 * p).abs() < 4.0 * sd);
            }
        }
    }

    proptest! {
        #[test]
        fn indicator_sums_to_m(n in 1usize..60, frac in 0.0f64..1.0, seed: u64, which in 0usize..3) {
            let m = 1 + ((n - 1) as f64 * frac) as usize;
            let sub = srswor(n, m, Strategy::ALL[which], seed).unwrap();
            let total: usize = (0..n).map(|i| membership_indicator(&sub, i).unwrap() as usize).sum();
            prop_assert_eq!(total, m);
            prop_assert!(sub.indices().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
