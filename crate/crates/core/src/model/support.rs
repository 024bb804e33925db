use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of support laws. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupportKind {
    /// A uniformly random `k`-subset of `0..m`.
    UniformKSparse,
    /// Each index independently with probability `k/m`; draws with more than
    /// `k` indices are thinned to a uniform `k`-subset.
    IidBernoulli,
    /// Each sample takes one block (chosen uniformly): the whole block when it
    /// has at most `k` indices, otherwise a uniform `k`-subset of it. An empty
    /// block list floods the `k` most frequent indices of the random portion.
    FixedBlocks {
        #[serde(default)]
        blocks: Vec<Vec<usize>>,
    },
    /// Each sample takes one planted pair plus `k - 2` indices outside every
    /// planted pair, so no three planted indices ever co-occur. An empty list
    /// plants the most frequent co-occurring pairs of the random portion.
    PlantedCooccurrence {
        #[serde(default)]
        pairs: Vec<(usize, usize)>,
    },
    /// Exactly two of `block` (uniform over the 6 pairs) plus `k - 2` indices
    /// outside the block; with probability `triple_rate` three of the block
    /// instead.
    HadamardPairs {
        block: [usize; 4],
        #[serde(default)]
        triple_rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportModel {
    #[serde(flatten)]
    pub kind: SupportKind,
    pub m: usize,
    pub k: usize,
    /// Target correlation slack; informational, see [`max_conditional_inclusion`].
    #[serde(default = "one")]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

/// Number of planted pairs picked when the adversary derives them itself.
const DERIVED_PAIRS: usize = 8;

/// A support law after any dependence on the realized random supports has
/// been resolved.
#[derive(Debug, Clone)]
pub struct ResolvedSupport<'a> {
    model: &'a SupportModel,
    blocks: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    outside: Vec<usize>,
}

impl SupportModel {
    pub fn uniform(m: usize, k: usize) -> Self {
        Self {
            kind: SupportKind::UniformKSparse,
            m,
            k,
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.m, self.k);
        if m == 0 || k == 0 || k > m {
            return Err(Error::invalid(format!("support needs 1 <= k <= m, got k={k}, m={m}")));
        }
        let in_range = |i: usize| -> Result<()> {
            if i < m {
                Ok(())
            } else {
                Err(Error::invalid(format!("support index {i} out of range 0..{m}")))
            }
        };
        match &self.kind {
            SupportKind::UniformKSparse | SupportKind::IidBernoulli => {}
            SupportKind::FixedBlocks { blocks } => {
                for b in blocks {
                    if b.is_empty() {
                        return Err(Error::invalid("empty block"));
                    }
                    b.iter().try_for_each(|&i| in_range(i))?;
                }
            }
            SupportKind::PlantedCooccurrence { pairs } => {
                if k < 2 {
                    return Err(Error::invalid("planted-cooccurrence needs k >= 2"));
                }
                for &(a, b) in pairs {
                    in_range(a)?;
                    in_range(b)?;
                    if a == b {
                        return Err(Error::invalid("planted pair repeats an index"));
                    }
                }
            }
            SupportKind::HadamardPairs { block, triple_rate } => {
                if k < 2 || m < 4 || m - 4 < k.saturating_sub(2) {
                    return Err(Error::invalid("hadamard-pairs needs k >= 2 and m - 4 >= k - 2"));
                }
                block.iter().try_for_each(|&i| in_range(i))?;
                let mut b = block.to_vec();
                b.sort_unstable();
                b.dedup();
                if b.len() != 4 {
                    return Err(Error::invalid("hadamard block needs 4 distinct indices"));
                }
                if !(0.0..=1.0).contains(triple_rate) || (*triple_rate > 0.0 && k < 3) {
                    return Err(Error::invalid("triple_rate must be in [0,1] and needs k >= 3"));
                }
            }
        }
        Ok(())
    }

    /// Resolves the law against the realized random-portion supports.
    pub fn resolve<'a>(&'a self, random_supports: &[Vec<usize>]) -> Result<ResolvedSupport<'a>> {
        self.validate()?;
        let mut blocks = Vec::new();
        let mut pairs = Vec::new();
        let mut planted: Vec<usize> = Vec::new();
        match &self.kind {
            SupportKind::FixedBlocks { blocks: given } => {
                blocks = if given.is_empty() {
                    vec![most_frequent_indices(random_supports, self.m, self.k)]
                } else {
                    given.clone()
                };
            }
            SupportKind::PlantedCooccurrence { pairs: given } => {
                pairs = if given.is_empty() {
                    most_frequent_pairs(random_supports, DERIVED_PAIRS)
                } else {
                    given.clone()
                };
                if pairs.is_empty() {
                    pairs.push((0, 1));
                }
                planted = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            }
            SupportKind::HadamardPairs { block, .. } => planted = block.to_vec(),
            _ => {}
        }
        planted.sort_unstable();
        planted.dedup();
        let outside: Vec<usize> = (0..self.m).filter(|i| planted.binary_search(i).is_err()).collect();
        if matches!(self.kind, SupportKind::PlantedCooccurrence { .. }) && outside.len() < self.k - 2 {
            return Err(Error::invalid("too few indices outside the planted pairs"));
        }
        Ok(ResolvedSupport {
            model: self,
            blocks,
            pairs,
            outside,
        })
    }

    /// Draws one support from a law that does not depend on random supports.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        Ok(self.resolve(&[])?.draw(rng))
    }
}

impl ResolvedSupport<'_> {
    /// A sorted support with at most `k` indices.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let SupportModel { m, k, .. } = *self.model;
        let mut s = match &self.model.kind {
            SupportKind::UniformKSparse => sample_indices(rng, m, k).into_vec(),
            SupportKind::IidBernoulli => {
                let p = k as f64 / m as f64;
                let mut s: Vec<usize> = (0..m).filter(|_| rng.gen::<f64>() < p).collect();
                if s.len() > k {
                    s = sample_indices(rng, s.len(), k).into_iter().map(|j| s[j]).collect();
                }
                s
            }
            SupportKind::FixedBlocks { .. } => {
                let b = &self.blocks[rng.gen_range(0..self.blocks.len())];
                let mut b = b.clone();
                b.sort_unstable();
                b.dedup();
                if b.len() <= k {
                    b
                } else {
                    sample_indices(rng, b.len(), k).into_iter().map(|j| b[j]).collect()
                }
            }
            SupportKind::PlantedCooccurrence { .. } => {
                let (a, b) = self.pairs[rng.gen_range(0..self.pairs.len())];
                let mut s = vec![a, b];
                s.extend(pick(rng, &self.outside, k - 2));
                s
            }
            SupportKind::HadamardPairs { block, triple_rate } => {
                let take = if *triple_rate > 0.0 && rng.gen::<f64>() < *triple_rate { 3 } else { 2 };
                let mut s: Vec<usize> = sample_indices(rng, 4, take).into_iter().map(|j| block[j]).collect();
                s.extend(pick(rng, &self.outside, k - take));
                s
            }
        };
        s.sort_unstable();
        s
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, pool: &[usize], count: usize) -> Vec<usize> {
    sample_indices(rng, pool.len(), count.min(pool.len()))
        .into_iter()
        .map(|j| pool[j])
        .collect()
}

fn most_frequent_indices(supports: &[Vec<usize>], m: usize, k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; m];
    supports.iter().flatten().for_each(|&i| counts[i] += 1);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

fn most_frequent_pairs(supports: &[Vec<usize>], count: usize) -> Vec<(usize, usize)> {
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for s in supports {
        for (x, &a) in s.iter().enumerate() {
            for &b in &s[x + 1..] {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    let mut pairs: Vec<_> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs.into_iter().take(count).map(|(p, _)| p).collect()
}

/// Largest empirical `Pr[i in S | T subset of S] / (k/m)` over indices `i`
/// and the conditioning sets `conditions` having at least `min_count` hits.
/// This is the measured correlation slack.
pub fn max_conditional_inclusion(
    supports: &[Vec<usize>],
    m: usize,
    k: usize,
    conditions: &[Vec<usize>],
    min_count: usize,
) -> f64 {
    let base = k as f64 / m as f64;
    let mut worst = 0.0f64;
    for cond in conditions {
        let mut hits = 0usize;
        let mut counts = vec![0usize; m];
        for s in supports {
            if cond.iter().all(|c| s.binary_search(c).is_ok()) {
                hits += 1;
                for &i in s {
                    if !cond.contains(&i) {
                        counts[i] += 1;
                    }
                }
            }
        }
        if hits >= min_count {
            let top = counts.iter().cloned().max().unwrap_or(0);
            worst = worst.max(top as f64 / hits as f64 / base);
        }
    }
    worst
}
