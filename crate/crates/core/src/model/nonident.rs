//! Two far-apart dictionaries that produce identical sample laws.
//!
//! `A` starts with four orthonormal columns; `B` replaces them with their
//! normalized Hadamard combinations. Under a support law using exactly two of
//! the four block indices, every signed pair in one basis is a signed pair in
//! the other.

use nalgebra::DMatrix;

use super::{gen_dictionary, Dictionary, DictionaryKind, SampleBatch, SparseCode, SupportKind, SupportModel};
use crate::error::{Error, Result};

/// Rows are the coefficients of `B_1..B_4` on `A_1..A_4`, up to the factor 1/2.
pub const HADAMARD: [[f64; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0],
];

#[derive(Debug, Clone)]
pub struct NonIdentifiablePair {
    pub a: Dictionary,
    pub b: Dictionary,
    pub support_a: SupportModel,
    pub support_b: SupportModel,
}

pub fn gen_nonidentifiable_pair(n: usize, m: usize, k: usize, seed: u64) -> Result<NonIdentifiablePair> {
    if k < 2 {
        return Err(Error::invalid("non-identifiable construction needs k >= 2"));
    }
    let a = gen_dictionary(n, m, DictionaryKind::HadamardPairBase, seed)?;
    let mut cols: DMatrix<f64> = a.columns().clone();
    for (j, row) in HADAMARD.iter().enumerate() {
        let mut col = vec![0.0; n];
        for (i, &h) in row.iter().enumerate() {
            for (c, x) in col.iter_mut().zip(a.column(i)) {
                *c += 0.5 * h * x;
            }
        }
        cols.column_mut(j).copy_from_slice(&col);
    }
    let b = Dictionary::new(cols)?;
    let support = SupportModel {
        kind: SupportKind::HadamardPairs {
            block: [0, 1, 2, 3],
            triple_rate: 0.0,
        },
        m,
        k,
        tau: 1.0,
    };
    support.validate()?;
    Ok(NonIdentifiablePair {
        a,
        b,
        support_a: support.clone(),
        support_b: support,
    })
}

impl NonIdentifiablePair {
    /// The bijection taking a code under `A` to the code under `B` with the
    /// same observation. Only the block coordinates change.
    pub fn map_code(&self, code: &SparseCode) -> Result<SparseCode> {
        // B = A H/2 with H/2 symmetric orthogonal, so block coefficients map by H/2
        let mut block = [0.0f64; 4];
        for (i, slot) in block.iter_mut().enumerate() {
            *slot = code.value(i).unwrap_or(0.0);
        }
        let touched = block.iter().filter(|v| **v != 0.0).count();
        if touched != 2 {
            return Err(Error::invalid(format!(
                "code uses {touched} block columns; the bijection needs exactly 2"
            )));
        }
        let mut mapped: Vec<(usize, f64)> = (0..4)
            .map(|j| (j, 0.5 * (0..4).map(|i| HADAMARD[j][i] * block[i]).sum::<f64>()))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        mapped.extend(code.support.iter().zip(&code.values).filter(|(i, _)| **i >= 4).map(|(&i, &v)| (i, v)));
        mapped.sort_by_key(|(i, _)| *i);
        SparseCode::new(mapped.iter().map(|p| p.0).collect(), mapped.iter().map(|p| p.1).collect())
    }

    /// Re-expresses an `A`-batch as a `B`-batch: identical observations,
    /// codes mapped through [`Self::map_code`].
    pub fn transport_batch(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        let codes = batch
            .codes()?
            .iter()
            .map(|c| self.map_code(c))
            .collect::<Result<Vec<_>>>()?;
        SampleBatch::new(batch.matrix().clone(), Some(codes), batch.provenance.clone())
    }

    /// `min` over signed permutations of `sum_i |A_i - b_i B_pi(i)|^2` on the
    /// 4-column block, by enumerating all 4! * 2^4 choices.
    pub fn block_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        permutations(&mut perm, 0, &mut |p| {
            for signs in 0..16u32 {
                let mut total = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    let s = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
                    total += self
                        .a
                        .column(i)
                        .iter()
                        .zip(self.b.column(pi))
                        .map(|(x, y)| (x - s * y).powi(2))
                        .sum::<f64>();
                }
                best = best.min(total);
            }
        });
        best
    }
}

fn permutations(p: &mut [usize; 4], at: usize, f: &mut impl FnMut(&[usize; 4])) {
    if at == p.len() {
        f(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permutations(p, at + 1, f);
        p.swap(at, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use std::collections::HashSet;

    #[test]
    fn hadamard_block_is_orthonormal() {
        let pair = gen_nonidentifiable_pair(4, 4, 2, 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let ip = dot(pair.b.column(i), pair.b.column(j));
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn block_far_apart() {
        let pair = gen_nonidentifiable_pair(4, 4, 2, 0).unwrap();
        assert!(pair.block_distance() >= 1.0);
    }

    #[test]
    fn a1_plus_a2_maps_to_b1_plus_b2() {
        let pair = gen_nonidentifiable_pair(6, 6, 2, 0).unwrap();
        let code = SparseCode::new(vec![0, 1], vec![1.0, 1.0]).unwrap();
        let mapped = pair.map_code(&code).unwrap();
        assert_eq!(mapped.support, vec![0, 1]);
        assert_eq!(mapped.values, vec![1.0, 1.0]);
    }

    #[test]
    fn bijection_on_signed_pairs() {
        let pair = gen_nonidentifiable_pair(8, 8, 2, 1).unwrap();
        let mut images = HashSet::new();
        for i in 0..4 {
            for j in i + 1..4 {
                for s in 0..4 {
                    let vals = vec![if s & 1 == 0 { 1.0 } else { -1.0 }, if s & 2 == 0 { 1.0 } else { -1.0 }];
                    let code = SparseCode::new(vec![i, j], vals).unwrap();
                    let mapped = pair.map_code(&code).unwrap();
                    assert_eq!(mapped.support.len(), 2);
                    let ya = pair.a.apply(&code.support, &code.values);
                    let yb = pair.b.apply(&mapped.support, &mapped.values);
                    assert!(ya.iter().zip(&yb).all(|(p, q)| (p - q).abs() < 1e-15));
                    images.insert(format!("{:?}{:?}", mapped.support, mapped.values));
                }
            }
        }
        assert_eq!(images.len(), 24);
    }
}
