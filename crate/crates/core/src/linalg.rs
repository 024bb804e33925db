//! Small dense-vector helpers and deterministic reductions.

use rayon::prelude::*;

/// Samples per work chunk for parallel sweeps over a batch.
pub const CHUNK: usize = 4096;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators let the compiler vectorize without -ffast-math
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `a` to unit length, returning the original norm.
pub fn normalize(a: &mut [f64]) -> f64 {
    let nrm = norm(a);
    if nrm > 0.0 {
        a.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `min(|a - b|, |a + b|)`: distance up to a global sign.
pub fn signed_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.min(plus).sqrt()
}

/// Running Neumaier-compensated sum of weighted vectors.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
    pub count: usize,
}

impl CompensatedVec {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
            count: 0,
        }
    }

    #[inline]
    pub fn add_scaled(&mut self, w: f64, y: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(y) {
            neumaier(s, c, w * v);
        }
        self.count += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for i in 0..self.sum.len() {
            neumaier(&mut self.sum[i], &mut self.comp[i], other.sum[i]);
            neumaier(&mut self.sum[i], &mut self.comp[i], other.comp[i]);
        }
        self.count += other.count;
        self
    }

    pub fn total(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Maps fixed-size chunks of `0..len` in parallel and folds the results with
/// a pairwise tree of fixed arity 2. The result is independent of thread
/// count and scheduling.
pub fn chunked_reduce<T, M, R>(len: usize, chunk: usize, map: M, reduce: R) -> Option<T>
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync,
    R: Fn(T, T) -> T,
{
    let chunk = chunk.max(1);
    let parts: Vec<T> = (0..len.div_ceil(chunk))
        .into_par_iter()
        .map(|c| map(c * chunk..((c + 1) * chunk).min(len)))
        .collect();
    tree_reduce(parts, reduce)
}

pub fn tree_reduce<T, R: Fn(T, T) -> T>(mut parts: Vec<T>, reduce: R) -> Option<T> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(reduce(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedVec::zeros(1);
        acc.add_scaled(1.0, &[1e16]);
        for _ in 0..1000 {
            acc.add_scaled(1.0, &[1.0]);
        }
        acc.add_scaled(-1.0, &[1e16]);
        assert_eq!(acc.total()[0], 1000.0);
    }

    #[test]
    fn chunked_reduce_matches_sequential() {
        let xs: Vec<u64> = (0..10_001).collect();
        let total = chunked_reduce(xs.len(), 97, |r| xs[r].iter().sum::<u64>(), |a, b| a + b);
        assert_eq!(total, Some(xs.iter().sum()));
        assert_eq!(chunked_reduce(0, 8, |_| 1u32, |a, b| a + b), None);
    }

    #[test]
    fn signed_distance_ignores_sign() {
        let a = [0.6, 0.8];
        let b = [-0.6, -0.8];
        assert_eq!(signed_distance(&a, &b), 0.0);
        assert!((signed_distance(&a, &[1.0, 0.0]) - (0.16f64 + 0.64).sqrt()).abs() < 1e-12);
    }
}
