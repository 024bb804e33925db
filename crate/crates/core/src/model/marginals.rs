use std::collections::HashMap;

use super::SampleBatch;
use crate::error::{Error, Result};

/// Empirical co-occurrence frequencies of index tuples up to order 3.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub samples: usize,
    pub m: usize,
    pub max_order: usize,
    singles: Vec<u64>,
    pairs: HashMap<(usize, usize), u64>,
    triples: HashMap<(usize, usize, usize), u64>,
}

impl Marginals {
    /// Fraction of samples whose support contains every index in `tuple`.
    /// Repeated indices collapse, so the table is symmetric by construction.
    pub fn q(&self, tuple: &[usize]) -> f64 {
        let mut t = tuple.to_vec();
        t.sort_unstable();
        t.dedup();
        assert!(t.len() <= self.max_order, "order {} not tabulated", t.len());
        let count = match t.as_slice() {
            [] => self.samples as u64,
            [i] => self.singles[*i],
            [i, j] => *self.pairs.get(&(*i, *j)).unwrap_or(&0),
            [i, j, l] => *self.triples.get(&(*i, *j, *l)).unwrap_or(&0),
            _ => unreachable!(),
        };
        if self.samples == 0 {
            0.0
        } else {
            count as f64 / self.samples as f64
        }
    }

    pub fn singles(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.q(&[i])).collect()
    }

    /// `sum_j q(i, j) / q(i)`, the expected support size given `i` is in it.
    /// Lies in `[1, k]` whenever `q(i) > 0`.
    pub fn conditional_size(&self, i: usize) -> Option<f64> {
        let qi = self.q(&[i]);
        (qi > 0.0).then(|| (0..self.m).map(|j| self.q(&[i, j])).sum::<f64>() / qi)
    }
}

pub fn marginal_estimates(batch: &SampleBatch, m: usize, max_order: usize) -> Result<Marginals> {
    if max_order > 3 {
        return Err(Error::invalid("marginals are tabulated up to order 3"));
    }
    let codes = batch.codes()?;
    let mut singles = vec![0u64; m];
    let mut pairs = HashMap::new();
    let mut triples = HashMap::new();
    for code in codes {
        let s = &code.support;
        if s.iter().any(|&i| i >= m) {
            return Err(Error::invalid("support index exceeds m"));
        }
        if max_order >= 1 {
            s.iter().for_each(|&i| singles[i] += 1);
        }
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                if max_order >= 2 {
                    *pairs.entry((s[a], s[b])).or_insert(0) += 1;
                }
                if max_order >= 3 {
                    for c in b + 1..s.len() {
                        *triples.entry((s[a], s[b], s[c])).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    Ok(Marginals {
        samples: codes.len(),
        m,
        max_order,
        singles,
        pairs,
        triples,
    })
}
