use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream};

const UNIT_TOL: f64 = 1e-9;

/// How the columns of a synthetic dictionary are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    /// i.i.d. Gaussian entries, columns normalized.
    GaussianNormalized,
    /// The first `m` standard basis vectors (`m <= n`).
    OrthonormalSubset,
    /// `e1..e4` followed by random unit columns orthogonal to them.
    HadamardPairBase,
}

/// An `n x m` dictionary with unit-norm columns and its cached Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    columns: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps a column matrix, checking that every column has unit norm.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::invalid("dictionary must be non-empty"));
        }
        for (i, c) in columns.column_iter().enumerate() {
            let nrm = c.norm();
            if (nrm - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("column {i} has norm {nrm}")));
            }
        }
        let gram = columns.tr_mul(&columns);
        Ok(Self { columns, gram })
    }

    /// Normalizes every column, then wraps. Zero columns are rejected.
    pub fn from_unnormalized(mut columns: DMatrix<f64>) -> Result<Self> {
        for (i, mut c) in columns.column_iter_mut().enumerate() {
            let nrm = c.norm();
            if nrm == 0.0 {
                return Err(Error::invalid(format!("column {i} is zero")));
            }
            c /= nrm;
        }
        Self::new(columns)
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn m(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.columns.as_slice()[i * n..(i + 1) * n]
    }

    /// `A x` for a sparse code.
    pub fn apply(&self, support: &[usize], values: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (&i, &v) in support.iter().zip(values) {
            for (yy, a) in y.iter_mut().zip(self.column(i)) {
                *yy += v * a;
            }
        }
        y
    }

    /// Largest singular value of the column matrix.
    pub fn spectral_norm(&self) -> f64 {
        // the smaller of A A^T and A^T A carries the same top eigenvalue
        let small = if self.n() <= self.m() {
            &self.columns * self.columns.transpose()
        } else {
            self.gram.clone()
        };
        small
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(0.0)
            .sqrt()
    }

    /// Largest off-diagonal `|<A_i, A_j>|`; zero for a single column.
    pub fn coherence(&self) -> f64 {
        let m = self.m();
        let mut c = 0.0f64;
        for j in 0..m {
            for i in 0..j {
                c = c.max(self.gram[(i, j)].abs());
            }
        }
        c
    }
}

/// Generates a synthetic dictionary.
pub fn gen_dictionary(n: usize, m: usize, kind: DictionaryKind, seed: u64) -> Result<Dictionary> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("n and m must be positive"));
    }
    let mut rng = stream(seed, domain::DICTIONARY, 0);
    match kind {
        DictionaryKind::GaussianNormalized => {
            if n > m {
                return Err(Error::invalid(format!(
                    "gaussian-normalized needs n <= m, got n={n}, m={m}"
                )));
            }
            let cols = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            Dictionary::from_unnormalized(cols)
        }
        DictionaryKind::OrthonormalSubset => {
            if m > n {
                return Err(Error::invalid(format!(
                    "orthonormal-subset needs m <= n, got n={n}, m={m}"
                )));
            }
            Dictionary::new(DMatrix::from_fn(n, m, |r, c| if r == c { 1.0 } else { 0.0 }))
        }
        DictionaryKind::HadamardPairBase => {
            if n < 4 || m < 4 {
                return Err(Error::invalid("hadamard-pair-base needs n >= 4 and m >= 4"));
            }
            let mut cols = DMatrix::zeros(n, m);
            for i in 0..4 {
                cols[(i, i)] = 1.0;
            }
            // padding columns live in span(e5..en) when n > 4, otherwise anywhere
            let first_free = if n > 4 { 4 } else { 0 };
            for j in 4..m {
                if n >= m {
                    cols[(j, j)] = 1.0;
                } else {
                    for r in first_free..n {
                        cols[(r, j)] = rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            Dictionary::from_unnormalized(cols)
        }
    }
}

/// Coherence, spectral norm and a sampled restricted-isometry constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryQuality {
    pub coherence: f64,
    /// `coherence * sqrt(n)`
    pub mu: f64,
    pub spectral_norm: f64,
    pub rip_delta_estimate: f64,
    pub rip_k: usize,
    /// Whether every `k`-subset was examined rather than a random sample.
    pub rip_exact: bool,
    /// Analytic fallback `2 mu k / sqrt(n)` from incoherence.
    pub rip_delta_incoherence_bound: f64,
}

/// Upper limit on `C(m, k)` for exhaustive RIP enumeration.
pub const RIP_EXACT_LIMIT: u128 = 100_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

/// Restricted-isometry deviation `max(|s_max - 1|, |1 - s_min|)` of the
/// submatrix on `subset`.
pub fn subset_isometry_delta(a: &Dictionary, subset: &[usize]) -> f64 {
    let n = a.n();
    let sub = DMatrix::from_fn(n, subset.len(), |r, c| a.columns[(r, subset[c])]);
    let sv = sub.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = if subset.len() > n {
        0.0
    } else {
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    (smax - 1.0).abs().max((1.0 - smin).abs())
}

pub fn dictionary_quality(
    a: &Dictionary,
    k: usize,
    subset_trials: usize,
    seed: u64,
) -> Result<DictionaryQuality> {
    let m = a.m();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("rip k must be in 1..={m}, got {k}")));
    }
    let coherence = a.coherence();
    let mu = coherence * (a.n() as f64).sqrt();
    let exact = binomial(m, k) <= RIP_EXACT_LIMIT;
    let mut delta = 0.0f64;
    if exact {
        let mut subset: Vec<usize> = (0..k).collect();
        loop {
            delta = delta.max(subset_isometry_delta(a, &subset));
            if !next_combination(&mut subset, m) {
                break;
            }
        }
    } else {
        for t in 0..subset_trials {
            let mut rng = stream(seed, domain::RIP_SUBSETS, t as u64);
            let mut subset = sample_indices(&mut rng, m, k).into_vec();
            subset.sort_unstable();
            delta = delta.max(subset_isometry_delta(a, &subset));
        }
    }
    Ok(DictionaryQuality {
        coherence,
        mu,
        spectral_norm: a.spectral_norm(),
        rip_delta_estimate: delta,
        rip_k: k,
        rip_exact: exact,
        rip_delta_incoherence_bound: 2.0 * mu * k as f64 / (a.n() as f64).sqrt(),
    })
}

/// Advances a sorted combination of `0..m` in lexicographic order.
pub(crate) fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orthonormal_subset_is_identity() {
        let a = gen_dictionary(2, 2, DictionaryKind::OrthonormalSubset, 0).unwrap();
        assert_eq!(a.columns(), &DMatrix::identity(2, 2));
        assert_eq!(a.coherence(), 0.0);
    }

    #[test]
    fn hadamard_base_small_is_identity() {
        let a = gen_dictionary(4, 4, DictionaryKind::HadamardPairBase, 3).unwrap();
        assert_eq!(a.columns(), &DMatrix::identity(4, 4));
        assert_eq!(a.coherence(), 0.0);
    }

    #[test]
    fn hadamard_base_padding_is_orthogonal_to_block() {
        let a = gen_dictionary(16, 24, DictionaryKind::HadamardPairBase, 3).unwrap();
        for i in 0..4 {
            for j in 4..24 {
                assert_eq!(a.gram()[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn dimension_checks() {
        assert!(gen_dictionary(8, 4, DictionaryKind::GaussianNormalized, 0).is_err());
        assert!(gen_dictionary(4, 8, DictionaryKind::OrthonormalSubset, 0).is_err());
        assert!(gen_dictionary(3, 8, DictionaryKind::HadamardPairBase, 0).is_err());
    }

    #[test]
    fn gaussian_coherence_below_six_over_sqrt_n() {
        // max pairwise inner product computed directly from the columns
        for seed in 0..20 {
            let a = gen_dictionary(64, 128, DictionaryKind::GaussianNormalized, seed).unwrap();
            let mut direct = 0.0f64;
            for i in 0..128 {
                for j in 0..i {
                    let ip: f64 = a.column(i).iter().zip(a.column(j)).map(|(x, y)| x * y).sum();
                    direct = direct.max(ip.abs());
                }
            }
            assert_abs_diff_eq!(direct, a.coherence(), epsilon = 1e-12);
            assert!(direct <= 0.75, "seed {seed}: coherence {direct}");
        }
    }

    #[test]
    fn quality_identity() {
        let a = gen_dictionary(4, 4, DictionaryKind::OrthonormalSubset, 0).unwrap();
        let q = dictionary_quality(&a, 2, 10, 0).unwrap();
        assert_eq!(q.coherence, 0.0);
        assert_abs_diff_eq!(q.spectral_norm, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.rip_delta_estimate, 0.0, epsilon = 1e-12);
        assert!(q.rip_exact);
    }

    #[test]
    fn quality_two_columns() {
        let s = 0.5f64.sqrt();
        let a = Dictionary::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, s, s])).unwrap();
        let q = dictionary_quality(&a, 1, 1, 0).unwrap();
        assert_abs_diff_eq!(q.coherence, s, epsilon = 1e-12);
        assert_abs_diff_eq!(q.mu, s * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gaussian_rip_regression_baseline() {
        let good = (0..20)
            .filter(|&seed| {
                let a = gen_dictionary(64, 128, DictionaryKind::GaussianNormalized, seed).unwrap();
                dictionary_quality(&a, 5, 200, seed).unwrap().rip_delta_estimate < 0.5
            })
            .count();
        assert!(good >= 18, "only {good}/20 seeds below 0.5");
    }

    #[test]
    fn spectral_norm_lower_bound() {
        for (n, m) in [(8, 8), (16, 40), (64, 128)] {
            let a = gen_dictionary(n, m, DictionaryKind::GaussianNormalized, 5).unwrap();
            assert!(a.spectral_norm() >= (m as f64 / n as f64).sqrt() - 1e-6);
        }
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(binomial(128, 5), 264_566_400);
    }

    #[test]
    fn gram_matches_inner_products() {
        let a = gen_dictionary(10, 20, DictionaryKind::GaussianNormalized, 9).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let ip: f64 = a.column(i).iter().zip(a.column(j)).map(|(x, y)| x * y).sum();
                assert_abs_diff_eq!(a.gram()[(i, j)], ip, epsilon = 1e-9);
            }
        }
    }
}
