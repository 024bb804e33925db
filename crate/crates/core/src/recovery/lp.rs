//! The reweighting LP.
//!
//! Maximize `sum_j w_j` over `w in [0,1]^N` subject to `sum_j w_j >= beta N`
//! and, for each recovered column `i`,
//! `sum_{j in V(i)} w_j <= c sum_j w_j` with `c = k (1 + lambda) / m`.
//!
//! Samples with the same membership set are interchangeable, so the solver
//! works on group masses `W_g in [0, |g|]` with rows
//! `sum_g (1[i in g] - c) W_g <= 0`. The origin is feasible, and the mass
//! constraint holds iff the maximum reaches `beta N`. Weights are spread
//! evenly inside each group.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Feasible,
    Infeasible,
    /// LP step turned off.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub weights: Vec<f64>,
    pub total_mass: f64,
    pub required_mass: f64,
    pub cap_fraction: f64,
    pub groups: usize,
    pub pivots: usize,
}

/// Membership patterns with their sample lists, in first-seen order of the
/// sorted pattern.
pub(crate) fn group_patterns(membership: &[Vec<usize>]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut map: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (j, s) in membership.iter().enumerate() {
        let mut key = s.clone();
        key.sort_unstable();
        key.dedup();
        map.entry(key).or_default().push(j);
    }
    map.into_iter().collect()
}

pub fn cap_fraction(k: usize, m: usize, lambda: f64) -> f64 {
    k as f64 * (1.0 + lambda) / m as f64
}

/// Bounded-variable revised simplex for
/// `max sum x  s.t.  sum_g a_ig x_g + s_i = 0,  0 <= x_g <= u_g,  s >= 0`
/// where column `g` has `a_ig = 1[i in pattern_g] - c`.
struct Simplex<'a> {
    rows: usize,
    patterns: &'a [Vec<usize>],
    upper: Vec<f64>,
    c: f64,
    /// basis[r] = variable index; structurals 0..G, slacks G..G+rows
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    at_upper: Vec<bool>,
    xb: Vec<f64>,
    pivots: usize,
}

impl<'a> Simplex<'a> {
    fn new(rows: usize, patterns: &'a [Vec<usize>], upper: Vec<f64>, c: f64) -> Self {
        let g = patterns.len();
        Simplex {
            rows,
            patterns,
            upper,
            c,
            basis: (g..g + rows).collect(),
            binv: DMatrix::identity(rows, rows),
            at_upper: vec![false; g + rows],
            xb: vec![0.0; rows],
            pivots: 0,
        }
    }

    fn groups(&self) -> usize {
        self.patterns.len()
    }

    fn column(&self, var: usize) -> Vec<f64> {
        let g = self.groups();
        let mut col = vec![0.0; self.rows];
        if var < g {
            col.iter_mut().for_each(|v| *v = -self.c);
            for &i in &self.patterns[var] {
                col[i] += 1.0;
            }
        } else {
            col[var - g] = 1.0;
        }
        col
    }

    fn objective(&self, var: usize) -> f64 {
        if var < self.groups() {
            1.0
        } else {
            0.0
        }
    }

    fn upper(&self, var: usize) -> f64 {
        if var < self.groups() {
            self.upper[var]
        } else {
            f64::INFINITY
        }
    }

    /// Basic values from scratch: `x_B = -B^-1 sum_{j at upper} a_j u_j`.
    fn recompute(&mut self) -> Result<()> {
        let mut b = DMatrix::zeros(self.rows, self.rows);
        for (r, &var) in self.basis.iter().enumerate() {
            b.set_column(r, &nalgebra::DVector::from_vec(self.column(var)));
        }
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::invalid("reweighting LP basis became singular"))?;
        let mut rhs = vec![0.0; self.rows];
        for var in 0..self.groups() {
            if self.at_upper[var] {
                let col = self.column(var);
                rhs.iter_mut().zip(&col).for_each(|(r, a)| *r -= a * self.upper[var]);
            }
        }
        let rhs = nalgebra::DVector::from_vec(rhs);
        self.xb = (&self.binv * rhs).iter().copied().collect();
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        // pi = c_B^T B^-1
        let mut pi = vec![0.0; self.rows];
        for (r, &var) in self.basis.iter().enumerate() {
            let cb = self.objective(var);
            if cb != 0.0 {
                for (p, b) in pi.iter_mut().zip(self.binv.row(r).iter()) {
                    *p += cb * b;
                }
            }
        }
        pi
    }

    fn solve(&mut self) -> Result<()> {
        let g = self.groups();
        let mut is_basic = vec![false; g + self.rows];
        for &v in &self.basis {
            is_basic[v] = true;
        }
        loop {
            let pi = self.duals();
            let pi_sum: f64 = pi.iter().sum();
            // Bland: smallest improving index
            let mut entering = None;
            for var in 0..g + self.rows {
                if is_basic[var] {
                    continue;
                }
                let d = if var < g {
                    1.0 - (self.patterns[var].iter().map(|&i| pi[i]).sum::<f64>() - self.c * pi_sum)
                } else {
                    -pi[var - g]
                };
                if (!self.at_upper[var] && d > PRICE_TOL) || (self.at_upper[var] && d < -PRICE_TOL) {
                    entering = Some((var, if self.at_upper[var] { -1.0 } else { 1.0 }));
                    break;
                }
            }
            let Some((q, dir)) = entering else { return Ok(()) };
            let col = nalgebra::DVector::from_vec(self.column(q));
            let alpha: Vec<f64> = (&self.binv * col).iter().copied().collect();

            // step t >= 0 moves x_q by dir * t and x_B by -dir * t * alpha
            let mut best_t = self.upper(q);
            let mut leave: Option<(usize, bool)> = None;
            for (r, &a) in alpha.iter().enumerate() {
                let delta = -dir * a;
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let var = self.basis[r];
                let (t, to_upper) = if delta < 0.0 {
                    (self.xb[r].max(0.0) / -delta, false)
                } else {
                    let u = self.upper(var);
                    if u.is_infinite() {
                        continue;
                    }
                    ((u - self.xb[r]).max(0.0) / delta, true)
                };
                let better = match leave {
                    _ if t < best_t - 1e-12 => true,
                    Some((lr, _)) if t <= best_t + 1e-12 => var < self.basis[lr],
                    None if t <= best_t + 1e-12 && best_t.is_finite() => true,
                    _ => false,
                };
                if better {
                    best_t = t.min(best_t);
                    leave = Some((r, to_upper));
                }
            }
            if best_t.is_infinite() {
                return Err(Error::invalid("reweighting LP unbounded; structural bounds missing"));
            }
            for (x, a) in self.xb.iter_mut().zip(&alpha) {
                *x -= dir * best_t * a;
            }
            match leave {
                None => {
                    // bound flip of the entering variable
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    let entering_value = if self.at_upper[q] { self.upper(q) - best_t } else { best_t };
                    self.at_upper[out] = to_upper;
                    self.at_upper[q] = false;
                    is_basic[out] = false;
                    is_basic[q] = true;
                    self.basis[r] = q;
                    self.xb[r] = entering_value;
                    let piv = alpha[r];
                    let prow: Vec<f64> = self.binv.row(r).iter().map(|v| v / piv).collect();
                    for i in 0..self.rows {
                        if i == r {
                            continue;
                        }
                        let f = alpha[i];
                        if f != 0.0 {
                            for (j, p) in prow.iter().enumerate() {
                                self.binv[(i, j)] -= f * p;
                            }
                        }
                    }
                    for (j, p) in prow.iter().enumerate() {
                        self.binv[(r, j)] = *p;
                    }
                    self.pivots += 1;
                    if self.pivots.is_multiple_of(REFACTOR_EVERY) {
                        self.recompute()?;
                    }
                }
            }
        }
    }

    fn group_masses(&self) -> Vec<f64> {
        let g = self.groups();
        let mut x: Vec<f64> = (0..g).map(|v| if self.at_upper[v] { self.upper[v] } else { 0.0 }).collect();
        for (r, &var) in self.basis.iter().enumerate() {
            if var < g {
                x[var] = self.xb[r];
            }
        }
        x.iter_mut().zip(&self.upper).for_each(|(v, &u)| *v = v.clamp(0.0, u));
        x
    }
}

/// Solves the reweighting LP on per-sample membership sets, where set
/// entries index the recovered columns `0..recovered`. Returns
/// [`Error::Infeasible`] when the best achievable mass is below `beta N`.
pub fn solve_reweight_lp(
    membership: &[Vec<usize>],
    recovered: usize,
    beta: f64,
    k: usize,
    m: usize,
    lambda: f64,
) -> Result<LpSolution> {
    let n = membership.len();
    let required = beta * n as f64;
    if !(required >= 1.0) {
        return Err(Error::invalid(format!("beta |T| = {required} must be at least 1")));
    }
    if m == 0 || k == 0 || lambda < 0.0 {
        return Err(Error::invalid("LP needs k, m >= 1 and lambda >= 0"));
    }
    if membership.iter().flatten().any(|&i| i >= recovered) {
        return Err(Error::invalid("membership index outside the recovered set"));
    }
    let c = cap_fraction(k, m, lambda);
    let groups = group_patterns(membership);
    let patterns: Vec<Vec<usize>> = groups.iter().map(|(p, _)| p.clone()).collect();
    let upper: Vec<f64> = groups.iter().map(|(_, s)| s.len() as f64).collect();
    let (masses, pivots) = if recovered == 0 {
        (upper.clone(), 0)
    } else {
        let mut sx = Simplex::new(recovered, &patterns, upper, c);
        sx.solve()?;
        (sx.group_masses(), sx.pivots)
    };
    let mut weights = vec![0.0; n];
    for ((_, samples), &mass) in groups.iter().zip(&masses) {
        let w = (mass / samples.len() as f64).clamp(0.0, 1.0);
        for &j in samples {
            weights[j] = w;
        }
    }
    let total: f64 = weights.iter().sum();
    if total < required * (1.0 - 1e-12) {
        return Err(Error::Infeasible {
            best_mass: total,
            required,
        });
    }
    Ok(LpSolution {
        weights,
        total_mass: total,
        required_mass: required,
        cap_fraction: c,
        groups: groups.len(),
        pivots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpCheck {
    pub ok: bool,
    pub total_mass: f64,
    pub mass_ok: bool,
    pub bounds_ok: bool,
    /// Per recovered column: weighted fraction `sum_{V(i)} w / sum w`.
    pub weighted_marginals: Vec<f64>,
    /// Largest relative cap violation, `(sum_{V(i)} w - c sum w) / max(1, c sum w)`.
    pub worst_cap_violation: f64,
}

/// Checks weights against every LP constraint, independently of the solver,
/// at relative tolerance `tol`.
#[allow(clippy::too_many_arguments)]
pub fn verify_weights(
    membership: &[Vec<usize>],
    recovered: usize,
    weights: &[f64],
    beta: f64,
    k: usize,
    m: usize,
    lambda: f64,
    tol: f64,
) -> Result<LpCheck> {
    if weights.len() != membership.len() {
        return Err(Error::invalid("one weight per sample required"));
    }
    let c = cap_fraction(k, m, lambda);
    let mut capped = vec![0.0; recovered];
    let mut total = 0.0;
    for (s, &w) in membership.iter().zip(weights) {
        total += w;
        for &i in s {
            if i >= recovered {
                return Err(Error::invalid("membership index outside the recovered set"));
            }
            capped[i] += w;
        }
    }
    let bounds_ok = weights.iter().all(|&w| (0.0..=1.0).contains(&w));
    let required = beta * membership.len() as f64;
    let mass_ok = total >= required - tol * required.max(1.0);
    let scale = (c * total).max(1.0);
    let worst = capped
        .iter()
        .map(|&v| (v - c * total) / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = if recovered == 0 { 0.0 } else { worst };
    Ok(LpCheck {
        ok: bounds_ok && mass_ok && worst <= tol,
        total_mass: total,
        mass_ok,
        bounds_ok,
        weighted_marginals: capped.iter().map(|&v| if total > 0.0 { v / total } else { 0.0 }).collect(),
        worst_cap_violation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_recovered_keeps_everything() {
        let mem = vec![vec![]; 10];
        let s = solve_reweight_lp(&mem, 0, 0.5, 2, 8, 1.0 / 64.0).unwrap();
        assert_eq!(s.weights, vec![1.0; 10]);
        assert_eq!(s.total_mass, 10.0);
    }

    #[test]
    fn everything_capped_is_infeasible() {
        let mem = vec![vec![0]; 10];
        let r = solve_reweight_lp(&mem, 1, 0.5, 2, 8, 1.0 / 64.0);
        assert!(matches!(r, Err(Error::Infeasible { .. })));
    }

    #[test]
    fn single_cap_closed_form() {
        // a samples in V(0), b outside: optimum keeps all b and c b / (1 - c) of a
        let (a, b) = (30usize, 70usize);
        let mut mem = vec![vec![0]; a];
        mem.extend(vec![vec![]; b]);
        let (k, m, lambda) = (1, 4, 0.0);
        let s = solve_reweight_lp(&mem, 1, 0.1, k, m, lambda).unwrap();
        let c = 0.25;
        let expect_a = (c * b as f64 / (1.0 - c)).min(a as f64);
        assert!((s.total_mass - (b as f64 + expect_a)).abs() < 1e-9);
        let chk = verify_weights(&mem, 1, &s.weights, 0.1, k, m, lambda, 1e-7).unwrap();
        assert!(chk.ok, "{chk:?}");
        assert!((chk.weighted_marginals[0] - c).abs() < 1e-9);
    }

    #[test]
    fn verify_flags_violations() {
        let mem = vec![vec![0], vec![], vec![]];
        let bad = verify_weights(&mem, 1, &[1.0, 1.0, 1.0], 0.5, 1, 4, 0.0, 1e-7).unwrap();
        assert!(!bad.ok);
        assert!(bad.worst_cap_violation > 0.0);
        let out_of_box = verify_weights(&mem, 1, &[0.0, 1.5, 1.0], 0.5, 1, 4, 0.0, 1e-7).unwrap();
        assert!(!out_of_box.bounds_ok);
    }
}
