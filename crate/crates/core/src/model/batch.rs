use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dictionary, SupportModel, ValueModel};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, stream};

/// A sparse latent vector: sorted support with aligned nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCode {
    pub fn new(support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::invalid("support and values differ in length"));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("support indices must be strictly increasing"));
        }
        Ok(Self { support, values })
    }

    pub fn contains(&self, i: usize) -> bool {
        self.support.binary_search(&i).is_ok()
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.support.binary_search(&i).ok().map(|p| self.values[p])
    }

    /// Checks `|support| <= k` and every magnitude in `[1, c]`.
    pub fn check(&self, k: usize, c: f64) -> bool {
        self.support.len() <= k
            && self.values.iter().all(|v| v.abs() >= 1.0 - 1e-12 && v.abs() <= c + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Random,
    Adversarial,
}

/// Observed samples `y = A x`, one per column of `samples`, with optional
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    samples: DMatrix<f64>,
    pub codes: Option<Vec<SparseCode>>,
    pub provenance: Option<Vec<Provenance>>,
}

impl SampleBatch {
    pub fn new(
        samples: DMatrix<f64>,
        codes: Option<Vec<SparseCode>>,
        provenance: Option<Vec<Provenance>>,
    ) -> Result<Self> {
        let len = samples.ncols();
        if codes.as_ref().is_some_and(|c| c.len() != len)
            || provenance.as_ref().is_some_and(|p| p.len() != len)
        {
            return Err(Error::invalid("codes/provenance not aligned with samples"));
        }
        Ok(Self {
            samples,
            codes,
            provenance,
        })
    }

    pub fn from_vectors(dim: usize, ys: &[Vec<f64>]) -> Result<Self> {
        if ys.iter().any(|y| y.len() != dim) {
            return Err(Error::invalid("sample dimension mismatch"));
        }
        let flat: Vec<f64> = ys.iter().flatten().cloned().collect();
        Self::new(DMatrix::from_vec(dim, ys.len(), flat), None, None)
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.samples
    }

    #[inline]
    pub fn sample(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.samples.as_slice()[j * n..(j + 1) * n]
    }

    pub fn codes(&self) -> Result<&[SparseCode]> {
        self.codes.as_deref().ok_or(Error::MissingGroundTruth)
    }

    /// The samples at `indices`, in that order, with aligned metadata.
    pub fn select(&self, indices: &[usize]) -> SampleBatch {
        let n = self.dim();
        let mut data = Vec::with_capacity(n * indices.len());
        for &j in indices {
            data.extend_from_slice(self.sample(j));
        }
        SampleBatch {
            samples: DMatrix::from_vec(n, indices.len(), data),
            codes: self.codes.as_ref().map(|c| indices.iter().map(|&j| c[j].clone()).collect()),
            provenance: self.provenance.as_ref().map(|p| indices.iter().map(|&j| p[j]).collect()),
        }
    }

    pub fn split_at(&self, mid: usize) -> (SampleBatch, SampleBatch) {
        let left: Vec<usize> = (0..mid).collect();
        let right: Vec<usize> = (mid..self.len()).collect();
        (self.select(&left), self.select(&right))
    }

    /// Appends `other`; metadata survives only when both sides carry it.
    pub fn concat(&self, other: &SampleBatch) -> Result<SampleBatch> {
        if self.dim() != other.dim() {
            return Err(Error::invalid("cannot concatenate batches of different dimension"));
        }
        let mut data = self.samples.as_slice().to_vec();
        data.extend_from_slice(other.samples.as_slice());
        Ok(SampleBatch {
            samples: DMatrix::from_vec(self.dim(), self.len() + other.len(), data),
            codes: join(&self.codes, &other.codes),
            provenance: join(&self.provenance, &other.provenance),
        })
    }

    pub fn supports(&self) -> Result<Vec<Vec<usize>>> {
        Ok(self.codes()?.iter().map(|c| c.support.clone()).collect())
    }
}

/// Parameters of a semirandom sample stream.
fn join<T: Clone>(a: &Option<Vec<T>>, b: &Option<Vec<T>>) -> Option<Vec<T>> {
    match (a, b) {
        (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemirandomSpec {
    pub support_random: SupportModel,
    pub support_adversarial: SupportModel,
    /// Fraction of samples with random supports, in `(0, 1]`.
    pub beta: f64,
    pub value: ValueModel,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub seed: u64,
    /// Std of optional i.i.d. Gaussian noise added to each coordinate.
    #[serde(default)]
    pub noise_std: f64,
}

impl SemirandomSpec {
    /// `round(beta * N)`
    pub fn random_count(&self) -> usize {
        (self.beta * self.n_samples as f64).round() as usize
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!("beta must be in (0, 1], got {}", self.beta)));
        }
        if self.support_random.m != m || self.support_adversarial.m != m {
            return Err(Error::invalid("support models must match dictionary width"));
        }
        if self.noise_std < 0.0 {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        self.support_random.validate()?;
        if self.random_count() < self.n_samples {
            self.support_adversarial.validate()?;
        }
        self.value.validate()
    }

    pub fn with_samples(&self, n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            ..self.clone()
        }
    }
}

/// Draws a semirandom batch. The random-portion supports are drawn first; the
/// adversary sees them, then the concatenation is shuffled uniformly and
/// values are drawn per output position.
pub fn sample_batch(a: &Dictionary, spec: &SemirandomSpec) -> Result<SampleBatch> {
    spec.validate(a.m())?;
    let total = spec.n_samples;
    let n_random = spec.random_count();
    let random = spec.support_random.resolve(&[])?;
    let mut supports: Vec<Vec<usize>> = (0..n_random)
        .into_par_iter()
        .map(|r| random.draw(&mut stream(spec.seed, domain::RANDOM_SUPPORT, r as u64)))
        .collect();
    let mut provenance = vec![Provenance::Random; n_random];
    if n_random < total {
        let adversary = spec.support_adversarial.resolve(&supports)?;
        let adv: Vec<Vec<usize>> = (0..total - n_random)
            .into_par_iter()
            .map(|r| adversary.draw(&mut stream(spec.seed, domain::ADVERSARIAL_SUPPORT, r as u64)))
            .collect();
        supports.extend(adv);
        provenance.resize(total, Provenance::Adversarial);
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut stream(spec.seed, domain::PERMUTATION, 0));

    let n = a.n();
    let rows: Vec<(SparseCode, Vec<f64>)> = order
        .par_iter()
        .enumerate()
        .map(|(j, &src)| {
            let support = supports[src].clone();
            let mut rng = stream(spec.seed, domain::VALUES, j as u64);
            let values: Vec<f64> = support.iter().map(|_| spec.value.sample(&mut rng)).collect();
            let mut y = a.apply(&support, &values);
            if spec.noise_std > 0.0 {
                let mut noise = stream(spec.seed, domain::NOISE, j as u64);
                for v in y.iter_mut() {
                    *v += spec.noise_std * noise.sample::<f64, _>(StandardNormal);
                }
            }
            (SparseCode { support, values }, y)
        })
        .collect();
    let mut data = Vec::with_capacity(n * total);
    let mut codes = Vec::with_capacity(total);
    for (code, y) in rows {
        data.extend_from_slice(&y);
        codes.push(code);
    }
    let provenance = order.iter().map(|&src| provenance[src]).collect();
    SampleBatch::new(DMatrix::from_vec(n, total, data), Some(codes), Some(provenance))
}

/// Supplies fresh batches from a fixed generative model.
pub trait ModelSource {
    fn dim(&self) -> usize;
    fn beta(&self) -> f64;
    fn value_model(&self) -> &ValueModel;
    /// Draws a fresh batch of `size` samples; successive calls are independent.
    fn draw(&mut self, size: usize) -> Result<SampleBatch>;
}

/// A [`ModelSource`] drawing from a dictionary and a semirandom spec; each
/// call uses a seed derived from the spec seed and a call counter.
#[derive(Debug, Clone)]
pub struct SemirandomSource {
    pub dictionary: Dictionary,
    pub spec: SemirandomSpec,
    draws: u64,
}

impl SemirandomSource {
    pub fn new(dictionary: Dictionary, spec: SemirandomSpec) -> Result<Self> {
        spec.validate(dictionary.m())?;
        Ok(Self {
            dictionary,
            spec,
            draws: 0,
        })
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl ModelSource for SemirandomSource {
    fn dim(&self) -> usize {
        self.dictionary.n()
    }

    fn beta(&self) -> f64 {
        self.spec.beta
    }

    fn value_model(&self) -> &ValueModel {
        &self.spec.value
    }

    fn draw(&mut self, size: usize) -> Result<SampleBatch> {
        let seed = derive_seed(self.spec.seed, self.draws);
        self.draws += 1;
        sample_batch(&self.dictionary, &self.spec.with_samples(size, seed))
    }
}

/// A [`ModelSource`] serving a stored batch in order, without replacement.
#[derive(Debug, Clone)]
pub struct BatchSource {
    batch: SampleBatch,
    beta: f64,
    value: ValueModel,
    pos: usize,
}

impl BatchSource {
    pub fn new(batch: SampleBatch, beta: f64, value: ValueModel) -> Self {
        Self {
            batch,
            beta,
            value,
            pos: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.batch.len() - self.pos
    }
}

impl ModelSource for BatchSource {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn value_model(&self) -> &ValueModel {
        &self.value
    }

    fn draw(&mut self, size: usize) -> Result<SampleBatch> {
        if size > self.remaining() {
            return Err(Error::invalid(format!(
                "stored batch exhausted: asked for {size}, {} left",
                self.remaining()
            )));
        }
        let idx: Vec<usize> = (self.pos..self.pos + size).collect();
        self.pos += size;
        Ok(self.batch.select(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_dictionary, DictionaryKind, SupportKind};
    use crate::linalg::norm;

    fn spec(m: usize, k: usize, beta: f64, n: usize, adv: SupportKind) -> SemirandomSpec {
        SemirandomSpec {
            support_random: SupportModel::uniform(m, k),
            support_adversarial: SupportModel { kind: adv, m, k, tau: 1.0 },
            beta,
            value: ValueModel::Rademacher,
            n_samples: n,
            seed: 42,
            noise_std: 0.0,
        }
    }

    #[test]
    fn identity_single_support_gives_signed_basis_vector() {
        let a = gen_dictionary(2, 2, DictionaryKind::OrthonormalSubset, 0).unwrap();
        let mut s = spec(2, 1, 1.0, 200, SupportKind::UniformKSparse);
        s.support_random.kind = SupportKind::FixedBlocks { blocks: vec![vec![0]] };
        let b = sample_batch(&a, &s).unwrap();
        for j in 0..b.len() {
            let y = b.sample(j);
            assert!(y == [1.0, 0.0] || y == [-1.0, 0.0], "{y:?}");
        }
    }

    #[test]
    fn reconstruction_and_provenance_counts() {
        let a = gen_dictionary(16, 32, DictionaryKind::GaussianNormalized, 1).unwrap();
        let s = spec(32, 3, 0.3, 1001, SupportKind::FixedBlocks { blocks: vec![vec![0, 1, 2, 3]] });
        let b = sample_batch(&a, &s).unwrap();
        assert_eq!(b.len(), 1001);
        let prov = b.provenance.as_ref().unwrap();
        assert_eq!(prov.iter().filter(|p| **p == Provenance::Random).count(), 300);
        for (j, code) in b.codes().unwrap().iter().enumerate() {
            assert!(code.check(3, 1.0));
            let y = a.apply(&code.support, &code.values);
            let diff: Vec<f64> = y.iter().zip(b.sample(j)).map(|(p, q)| p - q).collect();
            assert!(norm(&diff) <= 1e-9);
        }
        // adversarial rows come out interleaved, not as a suffix
        assert!(prov[..300].contains(&Provenance::Adversarial));
    }

    #[test]
    fn fixed_block_flood_raises_block_marginals() {
        let (m, k) = (100, 5);
        let a = gen_dictionary(50, m, DictionaryKind::GaussianNormalized, 2).unwrap();
        let s = spec(m, k, 0.1, 20_000, SupportKind::FixedBlocks { blocks: vec![(0..10).collect()] });
        let b = sample_batch(&a, &s).unwrap();
        let mut counts = vec![0usize; m];
        b.codes().unwrap().iter().flat_map(|c| &c.support).for_each(|&i| counts[i] += 1);
        let base = k as f64 / m as f64;
        for &c in &counts[..10] {
            assert!(c as f64 / b.len() as f64 >= 5.0 * base);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_dictionary(8, 12, DictionaryKind::GaussianNormalized, 3).unwrap();
        let s = spec(12, 2, 0.5, 500, SupportKind::PlantedCooccurrence { pairs: vec![] });
        let b1 = sample_batch(&a, &s).unwrap();
        let b2 = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| sample_batch(&a, &s).unwrap());
        assert_eq!(b1, b2);
    }

    #[test]
    fn batch_source_serves_in_order_then_fails() {
        let a = gen_dictionary(4, 6, DictionaryKind::GaussianNormalized, 4).unwrap();
        let b = sample_batch(&a, &spec(6, 2, 1.0, 10, SupportKind::UniformKSparse)).unwrap();
        let mut src = BatchSource::new(b.clone(), 1.0, ValueModel::Rademacher);
        assert_eq!(src.draw(4).unwrap(), b.select(&[0, 1, 2, 3]));
        assert_eq!(src.draw(6).unwrap().sample(0), b.sample(4));
        assert!(src.draw(1).is_err());
    }

    #[test]
    fn select_and_concat_keep_alignment() {
        let a = gen_dictionary(4, 6, DictionaryKind::GaussianNormalized, 4).unwrap();
        let b = sample_batch(&a, &spec(6, 2, 1.0, 10, SupportKind::UniformKSparse)).unwrap();
        let (l, r) = b.split_at(4);
        assert_eq!(l.concat(&r).unwrap(), b);
        let sel = b.select(&[7, 2]);
        assert_eq!(sel.sample(0), b.sample(7));
        assert_eq!(sel.codes().unwrap()[1], b.codes().unwrap()[2]);
    }

    #[test]
    fn source_draws_are_fresh() {
        let a = gen_dictionary(4, 6, DictionaryKind::GaussianNormalized, 4).unwrap();
        let mut src = SemirandomSource::new(a, spec(6, 2, 1.0, 10, SupportKind::UniformKSparse)).unwrap();
        let x = src.draw(20).unwrap();
        let y = src.draw(20).unwrap();
        assert_ne!(x, y);
        assert_eq!(src.draws(), 2);
    }
}
