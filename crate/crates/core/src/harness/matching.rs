use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::model::Dictionary;

/// Largest `m` solved by exact assignment; greedy above.
pub const EXACT_MATCH_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMatch {
    pub column: usize,
    pub recovered: Option<usize>,
    /// `b` in `||z - b A_i||`
    pub sign: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedVector {
    pub index: usize,
    pub nearest_column: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub per_column: Vec<ColumnMatch>,
    pub unmatched: Vec<UnmatchedVector>,
    /// Largest error over matched pairs; `None` when nothing matched.
    pub max_error: Option<f64>,
    /// Fraction of columns matched within `tolerance`.
    pub coverage: f64,
    pub tolerance: f64,
    pub exact_assignment: bool,
}

impl MatchReport {
    pub fn passes(&self) -> bool {
        self.coverage == 1.0 && self.max_error.is_some_and(|e| e <= self.tolerance)
    }
}

/// `(min(||z - a||, ||z + a||), sign)`.
pub fn sign_error(z: &[f64], a: &[f64]) -> (f64, f64) {
    let plus = norm(&sub(z, a));
    let minus = z.iter().zip(a).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
    if plus <= minus {
        (plus, 1.0)
    } else {
        (minus, -1.0)
    }
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`),
/// shortest augmenting paths with potentials. Returns the column of each row.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    let inf = f64::INFINITY;
    // 1-based arrays, p[j] = row matched to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Injective matching of recovered vectors to columns minimizing total
/// sign-corrected error (exact for `m <= 64`, greedy by ascending error
/// above). Unmatched vectors are listed with their nearest column.
pub fn match_columns(a: &Dictionary, w: &[Vec<f64>], tolerance: f64) -> Result<MatchReport> {
    let m = a.m();
    for (idx, z) in w.iter().enumerate() {
        if z.len() != a.n() {
            return Err(Error::invalid(format!("recovered vector {idx} has the wrong dimension")));
        }
        if (norm(z) - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("recovered vector {idx} is not unit norm")));
        }
    }
    let err: Vec<Vec<(f64, f64)>> = w.iter().map(|z| (0..m).map(|i| sign_error(z, a.column(i))).collect()).collect();
    let mut col_of: Vec<Option<usize>> = vec![None; w.len()];
    let exact = m <= EXACT_MATCH_LIMIT;
    if exact {
        if w.len() <= m {
            let cost: Vec<Vec<f64>> = err.iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
            for (r, c) in assignment(&cost).into_iter().enumerate() {
                col_of[r] = Some(c);
            }
        } else {
            let cost: Vec<Vec<f64>> = (0..m).map(|i| err.iter().map(|r| r[i].0).collect()).collect();
            for (i, r) in assignment(&cost).into_iter().enumerate() {
                col_of[r] = Some(i);
            }
        }
    } else {
        let mut pairs: Vec<(f64, usize, usize)> = err
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(i, e)| (e.0, r, i)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut col_used = vec![false; m];
        for (_, r, i) in pairs {
            if col_of[r].is_none() && !col_used[i] {
                col_of[r] = Some(i);
                col_used[i] = true;
            }
        }
    }
    let mut per_column: Vec<ColumnMatch> = (0..m)
        .map(|i| ColumnMatch {
            column: i,
            recovered: None,
            sign: 1.0,
            error: f64::INFINITY,
        })
        .collect();
    let mut unmatched = Vec::new();
    for (r, c) in col_of.iter().enumerate() {
        match c {
            Some(i) => {
                let (e, s) = err[r][*i];
                per_column[*i] = ColumnMatch {
                    column: *i,
                    recovered: Some(r),
                    sign: s,
                    error: e,
                };
            }
            None => {
                let (i, e) = err[r]
                    .iter()
                    .enumerate()
                    .min_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
                    .map(|(i, e)| (i, e.0))
                    .unwrap_or((0, f64::INFINITY));
                unmatched.push(UnmatchedVector {
                    index: r,
                    nearest_column: i,
                    distance: e,
                });
            }
        }
    }
    let matched: Vec<f64> = per_column.iter().filter(|c| c.recovered.is_some()).map(|c| c.error).collect();
    let max_error = matched.iter().copied().reduce(f64::max);
    let covered = per_column.iter().filter(|c| c.error <= tolerance).count();
    Ok(MatchReport {
        per_column,
        unmatched,
        max_error,
        coverage: if m == 0 { 0.0 } else { covered as f64 / m as f64 },
        tolerance,
        exact_assignment: exact,
    })
}

/// Recomputes `||z - b A_i||` for a reported match.
pub fn recompute_error(a: &Dictionary, z: &[f64], column: usize, sign: f64) -> f64 {
    let col = a.column(column);
    z.iter().zip(col).map(|(x, y)| (x - sign * y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_dictionary, DictionaryKind};

    #[test]
    fn permuted_signed_columns_match_exactly() {
        let a = gen_dictionary(8, 12, DictionaryKind::GaussianNormalized, 2).unwrap();
        let perm = [3, 0, 11, 5, 7, 1, 2, 9, 4, 10, 6, 8];
        let w: Vec<Vec<f64>> = perm
            .iter()
            .enumerate()
            .map(|(t, &i)| a.column(i).iter().map(|v| if t % 2 == 0 { -v } else { *v }).collect())
            .collect();
        let r = match_columns(&a, &w, 0.05).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.max_error, Some(0.0));
        for (t, &i) in perm.iter().enumerate() {
            assert_eq!(r.per_column[i].recovered, Some(t));
            assert_eq!(r.per_column[i].sign, if t % 2 == 0 { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn empty_set_has_zero_coverage() {
        let a = gen_dictionary(4, 4, DictionaryKind::OrthonormalSubset, 0).unwrap();
        let r = match_columns(&a, &[], 0.05).unwrap();
        assert_eq!(r.coverage, 0.0);
        assert_eq!(r.max_error, None);
    }

    #[test]
    fn extra_vector_reported_unmatched() {
        let a = gen_dictionary(6, 4, DictionaryKind::OrthonormalSubset, 0).unwrap();
        let mut w: Vec<Vec<f64>> = (0..4).map(|i| a.column(i).to_vec()).collect();
        let mut extra = vec![0.1, 0.2, -0.3, 0.4, 0.5, 0.6];
        crate::linalg::normalize(&mut extra);
        w.insert(2, extra.clone());
        let r = match_columns(&a, &w, 0.05).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.unmatched.len(), 1);
        assert_eq!(r.unmatched[0].index, 2);
        let best = (0..4).map(|i| sign_error(&extra, a.column(i)).0).fold(f64::INFINITY, f64::min);
        assert!((r.unmatched[0].distance - best).abs() < 1e-12);
    }

    #[test]
    fn assignment_beats_greedy_trap() {
        // greedy takes (0,0)=1 then (1,1)=10; optimum is 2 + 2
        let cost = vec![vec![1.0, 2.0], vec![2.0, 10.0]];
        assert_eq!(assignment(&cost), vec![1, 0]);
    }

    #[test]
    fn assignment_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (n, m) = (rng.gen_range(1..5), 5);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen::<f64>()).collect()).collect();
            let got = assignment(&cost);
            let got_cost: f64 = got.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
            let mut best = f64::INFINITY;
            let mut cols: Vec<usize> = (0..m).collect();
            permute(&mut cols, 0, &mut |p| {
                let c: f64 = (0..n).map(|r| cost[r][p[r]]).sum();
                best = best.min(c);
            });
            assert!((got_cost - best).abs() < 1e-12);
        }
    }

    fn permute(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
        if i == v.len() {
            f(v);
            return;
        }
        for j in i..v.len() {
            v.swap(i, j);
            permute(v, i + 1, f);
            v.swap(i, j);
        }
    }
}
