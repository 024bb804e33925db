use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense tensors are capped at this many entries.
pub const DENSE_LIMIT: usize = 10_000_000;

/// A sparse vector as `(index, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

/// Order-`d` coefficient tensor over `[m]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum CoeffTensor {
    /// Row-major entries; the last mode varies fastest.
    Dense { d: usize, m: usize, entries: Vec<f64> },
    /// `sum_i w_i M_i^{(x) d}` with `M_i` the columns of an `m x r` matrix.
    RankStructured { d: usize, weights: Vec<f64>, factors: DMatrix<f64> },
}

fn dense_len(d: usize, m: usize) -> Result<usize> {
    (m as u128)
        .checked_pow(d as u32)
        .filter(|&n| n <= DENSE_LIMIT as u128)
        .map(|n| n as usize)
        .ok_or_else(|| Error::TooLarge {
            patterns: (m as u128).saturating_pow(d as u32),
            limit: DENSE_LIMIT as u128,
        })
}

impl CoeffTensor {
    pub fn dense(d: usize, m: usize, entries: Vec<f64>) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("tensor order and dimension must be positive"));
        }
        if entries.len() != dense_len(d, m)? {
            return Err(Error::invalid("entry count must be m^d"));
        }
        Ok(CoeffTensor::Dense { d, m, entries })
    }

    pub fn rank_structured(d: usize, weights: Vec<f64>, factors: DMatrix<f64>) -> Result<Self> {
        if d == 0 || factors.nrows() == 0 {
            return Err(Error::invalid("tensor order and dimension must be positive"));
        }
        if weights.len() != factors.ncols() {
            return Err(Error::invalid("one weight per factor column required"));
        }
        Ok(CoeffTensor::RankStructured { d, weights, factors })
    }

    pub fn all_ones(d: usize, m: usize) -> Result<Self> {
        Self::dense(d, m, vec![1.0; dense_len(d, m)?])
    }

    /// Ones on the diagonal `j_1 = ... = j_d`.
    pub fn identity_slice(d: usize, m: usize) -> Result<Self> {
        let len = dense_len(d, m)?;
        let mut e = vec![0.0; len];
        let step: usize = (0..d).map(|l| m.pow(l as u32)).sum();
        for j in 0..m {
            e[j * step] = 1.0;
        }
        Self::dense(d, m, e)
    }

    pub fn order(&self) -> usize {
        match self {
            CoeffTensor::Dense { d, .. } | CoeffTensor::RankStructured { d, .. } => *d,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CoeffTensor::Dense { m, .. } => *m,
            CoeffTensor::RankStructured { factors, .. } => factors.nrows(),
        }
    }

    /// Entry at a multi-index.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        match self {
            CoeffTensor::Dense { m, entries, .. } => entries[idx.iter().fold(0, |acc, &j| acc * m + j)],
            CoeffTensor::RankStructured { weights, factors, .. } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * idx.iter().map(|&j| factors[(j, i)]).product::<f64>())
                .sum(),
        }
    }

    pub fn to_dense(&self) -> Result<CoeffTensor> {
        match self {
            CoeffTensor::Dense { .. } => Ok(self.clone()),
            CoeffTensor::RankStructured { d, weights, factors } => {
                let m = factors.nrows();
                let len = dense_len(*d, m)?;
                let mut entries = vec![0.0; len];
                for (i, &w) in weights.iter().enumerate() {
                    // outer power built mode by mode
                    let mut cur = vec![w];
                    for _ in 0..*d {
                        let mut next = Vec::with_capacity(cur.len() * m);
                        for &c in &cur {
                            next.extend((0..m).map(|j| c * factors[(j, i)]));
                        }
                        cur = next;
                    }
                    entries.iter_mut().zip(&cur).for_each(|(e, c)| *e += c);
                }
                CoeffTensor::dense(*d, m, entries)
            }
        }
    }

    fn dense_parts(&self) -> Result<(usize, usize, std::borrow::Cow<'_, [f64]>)> {
        match self {
            CoeffTensor::Dense { d, m, entries } => Ok((*d, *m, std::borrow::Cow::Borrowed(entries))),
            _ => match self.to_dense()? {
                CoeffTensor::Dense { d, m, entries } => Ok((d, m, std::borrow::Cow::Owned(entries))),
                _ => unreachable!(),
            },
        }
    }

    pub fn frobenius(&self) -> Result<f64> {
        flattened_norm(self, &[])
    }
}

/// `||T||_{Gamma, inf}`: the largest l2 norm of a row of the flattening whose
/// rows are indexed by the modes in `gamma` (zero-based) and columns by the
/// rest. Empty `gamma` gives the Frobenius norm, all modes the max entry.
pub fn flattened_norm(t: &CoeffTensor, gamma: &[usize]) -> Result<f64> {
    let (d, m, entries) = t.dense_parts()?;
    let mut in_gamma = vec![false; d];
    for &g in gamma {
        if g >= d {
            return Err(Error::invalid(format!("mode {g} outside a tensor of order {d}")));
        }
        in_gamma[g] = true;
    }
    let rows = m.pow(in_gamma.iter().filter(|&&b| b).count() as u32);
    let mut sq = vec![0.0; rows];
    let mut digits = vec![0usize; d];
    for &e in entries.iter() {
        let key = digits
            .iter()
            .zip(&in_gamma)
            .filter(|(_, &g)| g)
            .fold(0, |acc, (&j, _)| acc * m + j);
        sq[key] += e * e;
        for j in digits.iter_mut().rev() {
            *j += 1;
            if *j < m {
                break;
            }
            *j = 0;
        }
    }
    Ok(sq.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt())
}

/// Mode subsets of `[d]` as zero-based index lists, by bitmask order.
pub fn mode_subsets(d: usize) -> Vec<Vec<usize>> {
    (0..1usize << d)
        .map(|mask| (0..d).filter(|l| mask >> l & 1 == 1).collect())
        .collect()
}

/// `rho = sum_Gamma ||T||_{Gamma,inf}^2 / B^2 (tau p)^{-|Gamma|}` with
/// `B = ||T||_F`.
pub fn imbalance_rho(t: &CoeffTensor, p: f64, tau: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) || tau < 1.0 {
        return Err(Error::invalid("need 0 < p <= 1 and tau >= 1"));
    }
    let b = t.frobenius()?;
    if b == 0.0 {
        return Err(Error::invalid("zero tensor has no imbalance factor"));
    }
    let d = t.order();
    let dense = t.to_dense()?;
    mode_subsets(d).iter().try_fold(0.0, |acc, g| {
        let f = flattened_norm(&dense, g)?;
        Ok(acc + (f / b).powi(2) * (tau * p).powi(-(g.len() as i32)))
    })
}

/// `f(z_1, ..., z_d) = sum T_{j_1..j_d} prod z_l[j_l]`, visiting only
/// combinations of nonzero coordinates.
pub fn eval_multilinear(t: &CoeffTensor, zetas: &[SparseVec]) -> Result<f64> {
    let d = t.order();
    let m = t.dim();
    if zetas.len() != d {
        return Err(Error::invalid(format!("expected {d} vectors, got {}", zetas.len())));
    }
    if zetas.iter().flatten().any(|&(j, _)| j >= m) {
        return Err(Error::invalid("sparse index outside the tensor dimension"));
    }
    if zetas.iter().any(|z| z.is_empty()) {
        return Ok(0.0);
    }
    match t {
        CoeffTensor::RankStructured { weights, factors, .. } => Ok(weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                w * zetas
                    .iter()
                    .map(|z| z.iter().map(|&(j, v)| factors[(j, i)] * v).sum::<f64>())
                    .product::<f64>()
            })
            .sum()),
        CoeffTensor::Dense { entries, .. } => {
            let mut pos = vec![0usize; d];
            let mut total = 0.0;
            loop {
                let mut idx = 0;
                let mut prod = 1.0;
                for (z, &p) in zetas.iter().zip(&pos) {
                    idx = idx * m + z[p].0;
                    prod *= z[p].1;
                }
                total += entries[idx] * prod;
                let mut l = d;
                loop {
                    if l == 0 {
                        return Ok(total);
                    }
                    l -= 1;
                    pos[l] += 1;
                    if pos[l] < zetas[l].len() {
                        break;
                    }
                    pos[l] = 0;
                }
            }
        }
    }
}

/// `||T'||_F^2` for the restriction of `T` to `S_1 x ... x S_d`.
pub fn restricted_frobenius_sq(t: &CoeffTensor, supports: &[Vec<usize>]) -> Result<f64> {
    let d = t.order();
    if supports.len() != d {
        return Err(Error::invalid(format!("expected {d} supports")));
    }
    if supports.iter().any(|s| s.is_empty()) {
        return Ok(0.0);
    }
    let mut pos = vec![0usize; d];
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        for l in 0..d {
            idx[l] = supports[l][pos[l]];
        }
        total += t.entry(&idx).powi(2);
        let mut l = d;
        loop {
            if l == 0 {
                return Ok(total);
            }
            l -= 1;
            pos[l] += 1;
            if pos[l] < supports[l].len() {
                break;
            }
            pos[l] = 0;
        }
    }
}
