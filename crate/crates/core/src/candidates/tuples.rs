use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SampleBatch;
use crate::rng::{domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TupleKind {
    /// Every ordered tuple with repetition; toy sizes only.
    Exhaustive,
    /// Anchors sharing a hidden coordinate with equal sign (needs codes).
    OraclePlanted,
    /// One tuple per anchor seed, grown greedily by absolute correlation.
    CorrelationGreedy,
    /// Uniform tuples of distinct anchors.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleStrategy {
    pub kind: TupleKind,
    /// Maximum number of tuples evaluated.
    pub budget: usize,
    /// Moment order; tuples hold `2L - 1` anchors.
    #[serde(rename = "L")]
    pub l: usize,
    /// Size of the anchor pool `T0`.
    pub anchor_pool_size: usize,
    /// Correlation-greedy keeps a tuple only if every pair has
    /// `|<u, u'>| >= min_pairwise`.
    #[serde(default = "default_min_pairwise")]
    pub min_pairwise: f64,
}

fn default_min_pairwise() -> f64 {
    0.8
}

/// Pool cap for correlation-greedy, which keeps the pool Gram matrix in memory.
pub const GREEDY_POOL_LIMIT: usize = 30_000;

impl TupleStrategy {
    pub fn tuple_len(&self) -> usize {
        2 * self.l - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("tuple budget must be >= 1"));
        }
        if self.l == 0 {
            return Err(Error::invalid("L must be >= 1"));
        }
        if self.anchor_pool_size < self.tuple_len() {
            return Err(Error::invalid(format!(
                "anchor pool of {} cannot fill tuples of length {}",
                self.anchor_pool_size,
                self.tuple_len()
            )));
        }
        if self.kind == TupleKind::Exhaustive {
            let count = (self.anchor_pool_size as u128)
                .checked_pow(self.tuple_len() as u32)
                .unwrap_or(u128::MAX);
            if count > self.budget as u128 {
                return Err(Error::TooLarge {
                    patterns: count,
                    limit: self.budget as u128,
                });
            }
        }
        if self.kind == TupleKind::CorrelationGreedy && self.anchor_pool_size > GREEDY_POOL_LIMIT {
            return Err(Error::TooLarge {
                patterns: self.anchor_pool_size as u128,
                limit: GREEDY_POOL_LIMIT as u128,
            });
        }
        Ok(())
    }
}

/// Tuples of indices into `t0`, truncated to the budget.
pub fn propose_tuples(t0: &SampleBatch, strategy: &TupleStrategy, seed: u64) -> Result<Vec<Vec<usize>>> {
    let checked = TupleStrategy {
        anchor_pool_size: t0.len(),
        ..strategy.clone()
    };
    checked.validate()?;
    let len = strategy.tuple_len();
    match strategy.kind {
        TupleKind::Exhaustive => exhaustive(t0.len(), len, strategy.budget),
        TupleKind::OraclePlanted => oracle_planted(t0, len, strategy.budget, seed),
        TupleKind::CorrelationGreedy => Ok(correlation_greedy(t0, len, strategy.budget, strategy.min_pairwise)),
        TupleKind::Random => {
            let mut rng = stream(seed, domain::TUPLES, 0);
            Ok((0..strategy.budget)
                .map(|_| index::sample(&mut rng, t0.len(), len).into_vec())
                .collect())
        }
    }
}

fn exhaustive(pool: usize, len: usize, budget: usize) -> Result<Vec<Vec<usize>>> {
    let count = (pool as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if count > budget as u128 {
        return Err(Error::TooLarge {
            patterns: count,
            limit: budget as u128,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut t = vec![0usize; len];
    for _ in 0..count {
        out.push(t.clone());
        for d in t.iter_mut().rev() {
            *d += 1;
            if *d < pool {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// Groups anchors by (coordinate, sign) and cuts each group, shuffled, into
/// disjoint tuples; groups are visited round-robin in coordinate order.
fn oracle_planted(t0: &SampleBatch, len: usize, budget: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let codes = t0.codes()?;
    let m = codes
        .iter()
        .flat_map(|c| c.support.iter().copied())
        .max()
        .map_or(0, |i| i + 1);
    let mut groups = vec![Vec::new(); 2 * m];
    for (j, c) in codes.iter().enumerate() {
        for (&i, &x) in c.support.iter().zip(&c.values) {
            groups[2 * i + usize::from(x < 0.0)].push(j);
        }
    }
    let mut rng = stream(seed, domain::TUPLES, 1);
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let rounds = groups.iter().map(|g| g.len() / len).max().unwrap_or(0);
    let mut out = Vec::new();
    for r in 0..rounds {
        for g in &groups {
            if out.len() == budget {
                return Ok(out);
            }
            if let Some(chunk) = g.get(r * len..(r + 1) * len) {
                out.push(chunk.to_vec());
            }
        }
    }
    Ok(out)
}

/// Pool Gram matrix, single precision to bound memory.
fn pool_gram(t0: &SampleBatch) -> Vec<f32> {
    let g = t0.matrix().tr_mul(t0.matrix());
    g.iter().map(|&v| v as f32).collect()
}

fn correlation_greedy(t0: &SampleBatch, len: usize, budget: usize, min_pairwise: f64) -> Vec<Vec<usize>> {
    let p = t0.len();
    let gram = pool_gram(t0);
    let row = |i: usize| &gram[i * p..(i + 1) * p];
    let thr = min_pairwise as f32;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut minabs = vec![0f32; p];
    for seed in 0..p {
        if out.len() == budget {
            break;
        }
        let mut chosen = vec![seed];
        minabs.iter_mut().zip(row(seed)).for_each(|(m, g)| *m = g.abs());
        minabs[seed] = f32::NEG_INFINITY;
        let mut ok = true;
        while chosen.len() < len {
            let (best, val) = minabs
                .iter()
                .enumerate()
                .fold((usize::MAX, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            if best == usize::MAX || val < thr {
                ok = false;
                break;
            }
            chosen.push(best);
            minabs[best] = f32::NEG_INFINITY;
            minabs.iter_mut().zip(row(best)).for_each(|(m, g)| *m = m.min(g.abs()));
        }
        if !ok {
            continue;
        }
        // confirm in double precision
        let exact_ok = chosen.iter().enumerate().all(|(a, &i)| {
            chosen[a + 1..]
                .iter()
                .all(|&j| crate::linalg::dot(t0.sample(i), t0.sample(j)).abs() >= min_pairwise)
        });
        if !exact_ok {
            continue;
        }
        let mut key = chosen.clone();
        key.sort_unstable();
        if seen.insert(key) {
            out.push(chosen);
        }
    }
    out
}
