use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{chunked_reduce, dot, CompensatedVec, CHUNK};
use crate::model::SampleBatch;

/// `(1/|T1|) sum_y prod_l <u_l, y> y` for a single tuple, one compensated
/// accumulation per sample.
pub fn tuple_statistic(anchors: &[&[f64]], t1: &SampleBatch) -> Result<Vec<f64>> {
    if t1.is_empty() {
        return Err(Error::invalid("empty statistic batch"));
    }
    if anchors.iter().any(|u| u.len() != t1.dim()) {
        return Err(Error::invalid("anchor dimension differs from sample dimension"));
    }
    let acc = chunked_reduce(
        t1.len(),
        CHUNK,
        |range| {
            let mut acc = CompensatedVec::zeros(t1.dim());
            for j in range {
                let y = t1.sample(j);
                let w: f64 = anchors.iter().map(|u| dot(u, y)).product();
                acc.add_scaled(w, y);
            }
            acc
        },
        CompensatedVec::merge,
    )
    .expect("nonempty batch");
    let mut v = acc.total();
    let inv = 1.0 / t1.len() as f64;
    v.iter_mut().for_each(|x| *x *= inv);
    Ok(v)
}

const SUB_CHUNK: usize = 512;
const TUPLE_GROUP: usize = 2048;

/// Neumaier accumulation of whole matrices.
struct CompensatedMat {
    sum: DMatrix<f64>,
    comp: DMatrix<f64>,
}

impl CompensatedMat {
    fn zeros(r: usize, c: usize) -> Self {
        Self {
            sum: DMatrix::zeros(r, c),
            comp: DMatrix::zeros(r, c),
        }
    }

    fn add(&mut self, x: &DMatrix<f64>) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(x.iter()) {
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.add(&other.sum);
        self.add(&other.comp);
        self
    }

    fn total(self) -> DMatrix<f64> {
        self.sum + self.comp
    }
}

/// The statistic for many tuples over the same `T1`, one column per tuple.
/// Inner products and weighted sums go through matrix products on blocks of
/// 512 samples; block results are combined with compensated summation.
pub fn tuple_statistics(t0: &SampleBatch, tuples: &[Vec<usize>], t1: &SampleBatch) -> Result<DMatrix<f64>> {
    if t1.is_empty() {
        return Err(Error::invalid("empty statistic batch"));
    }
    if t0.dim() != t1.dim() {
        return Err(Error::invalid("anchor dimension differs from sample dimension"));
    }
    if tuples.iter().flatten().any(|&j| j >= t0.len()) {
        return Err(Error::invalid("tuple index outside the anchor pool"));
    }
    let n = t1.dim();
    let mut out = DMatrix::zeros(n, tuples.len());
    for (g, group) in tuples.chunks(TUPLE_GROUP).enumerate() {
        let mut used: Vec<usize> = group.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        let pos = |j: usize| used.binary_search(&j).expect("anchor listed");
        let local: Vec<Vec<usize>> = group.iter().map(|t| t.iter().map(|&j| pos(j)).collect()).collect();
        let u = t0.select(&used);
        let u = u.matrix();
        let y = t1.matrix();
        let acc = chunked_reduce(
            t1.len(),
            CHUNK,
            |range| {
                let mut acc = CompensatedMat::zeros(n, group.len());
                let mut start = range.start;
                while start < range.end {
                    let len = SUB_CHUNK.min(range.end - start);
                    let yc = y.columns(start, len);
                    let ip = yc.tr_mul(u);
                    let mut p = DMatrix::from_element(len, group.len(), 1.0);
                    for (t, tup) in local.iter().enumerate() {
                        let mut col = p.column_mut(t);
                        for &a in tup {
                            col.component_mul_assign(&ip.column(a));
                        }
                    }
                    acc.add(&(yc * p));
                    start += len;
                }
                acc
            },
            CompensatedMat::merge,
        )
        .expect("nonempty batch");
        let mut block = acc.total();
        block /= t1.len() as f64;
        out.columns_mut(g * TUPLE_GROUP, group.len()).copy_from(&block);
    }
    Ok(out)
}
