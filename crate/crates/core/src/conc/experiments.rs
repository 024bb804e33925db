use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{eval_multilinear, imbalance_rho, restricted_frobenius_sq, CoeffTensor, SparseVec};
use crate::error::{Error, Result};
use crate::model::{SupportModel, ValueModel};
use crate::rng::{domain, stream};

/// Monte-Carlo slack applied to every target probability.
pub const MC_SLACK: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub params: String,
    /// Empirical exceed rate.
    pub empirical: f64,
    /// Allowed rate before slack.
    pub target: f64,
    /// Threshold the statistic is compared with.
    pub threshold: f64,
    pub pass: bool,
    pub trials: usize,
    /// Mean and standard error of the raw statistic.
    pub mean: f64,
    pub std_err: f64,
    /// Target of at least 1: the check cannot fail.
    pub vacuous: bool,
}

impl ExperimentReport {
    fn new(experiment: &str, params: String, values: &[f64], threshold: f64, target: f64) -> Self {
        let n = values.len() as f64;
        let exceed = values.iter().filter(|v| v.abs() > threshold).count() as f64 / n;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        ExperimentReport {
            experiment: experiment.to_string(),
            params,
            empirical: exceed,
            target,
            threshold,
            pass: exceed <= MC_SLACK * target,
            trials: values.len(),
            mean,
            std_err: (var / n).sqrt(),
            vacuous: target >= 1.0,
        }
    }
}

fn check_support(support: &SupportModel, m: usize) -> Result<()> {
    support.validate()?;
    if support.m != m {
        return Err(Error::invalid(format!("support law over {} indices, tensor over {m}", support.m)));
    }
    Ok(())
}

/// One sparse random vector: support from `support`, values from `value`.
fn draw_zeta<R: rand::Rng>(support: &crate::model::ResolvedSupport<'_>, value: &ValueModel, rng: &mut R) -> SparseVec {
    support.draw(rng).into_iter().map(|j| (j, value.sample(rng))).collect()
}

fn per_trial<T: Send>(trials: usize, seed: u64, f: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..trials)
        .into_par_iter()
        .map(|t| f(&mut stream(seed, domain::EXPERIMENT, t as u64)))
        .collect()
}

/// Parameters of the rare-variable tail bound for a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcBoundParams {
    pub p: f64,
    pub tau: f64,
    pub eta: f64,
    pub rho: f64,
    pub frob: f64,
    pub bound_value: f64,
}

/// Threshold `(C^2 log(2/eta))^{d/2} min(sqrt(rho) log(2/eta)^{d/2}, 1/sqrt(eta)) (tau p)^{d/2} ||T||_F`.
pub fn tail_bound(t: &CoeffTensor, p: f64, tau: f64, c: f64, eta: f64) -> Result<ConcBoundParams> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta must be in (0,1)"));
    }
    let d = t.order() as f64;
    let rho = imbalance_rho(t, p, tau)?;
    let frob = t.frobenius()?;
    let l = (2.0 / eta).ln();
    let bound_value = (c * c * l).powf(d / 2.0)
        * (rho.sqrt() * l.powf(d / 2.0)).min(1.0 / eta.sqrt())
        * (tau * p).powf(d / 2.0)
        * frob;
    Ok(ConcBoundParams {
        p,
        tau,
        eta,
        rho,
        frob,
        bound_value,
    })
}

fn nonzero_rate(support: &SupportModel) -> f64 {
    support.k as f64 / support.m as f64
}

/// Exceed rate of `|f(zeta_1..zeta_d)|` over the tail threshold, with
/// independent `zeta_l`; passes iff the rate is at most `3 eta`.
pub fn tail_experiment(
    t: &CoeffTensor,
    support: &SupportModel,
    value: &ValueModel,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<(ExperimentReport, ConcBoundParams)> {
    check_support(support, t.dim())?;
    value.validate()?;
    if (trials as f64) < 10.0 / eta {
        return Err(Error::invalid(format!("need at least 10/eta = {} trials", (10.0 / eta).ceil())));
    }
    let bound = tail_bound(t, nonzero_rate(support), support.tau, value.c(), eta)?;
    let resolved = support.resolve(&[])?;
    let d = t.order();
    let vals = per_trial(trials, seed, |rng| {
        let z: Vec<SparseVec> = (0..d).map(|_| draw_zeta(&resolved, value, rng)).collect();
        eval_multilinear(t, &z)
    })?;
    let params = format!("d={d};m={};k={};eta={eta};rho={:.6}", t.dim(), support.k, bound.rho);
    Ok((ExperimentReport::new("tail", params, &vals, bound.bound_value, eta), bound))
}

/// Exceed rate of `||T'||_F^2` (restriction to the random supports) over
/// `min(rho log(1/eta)^d, 1/eta) (tau p)^d ||T||_F^2`.
pub fn subtensor_frobenius_experiment(
    t: &CoeffTensor,
    support: &SupportModel,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_support(support, t.dim())?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta must be in (0,1)"));
    }
    let d = t.order();
    let p = nonzero_rate(support);
    let tau = support.tau;
    let rho = imbalance_rho(t, p, tau)?;
    let b2 = t.frobenius()?.powi(2);
    let threshold = (rho * (1.0 / eta).ln().powi(d as i32)).min(1.0 / eta) * (tau * p).powi(d as i32) * b2;
    let dense = t.to_dense()?;
    let resolved = support.resolve(&[])?;
    let vals = per_trial(trials, seed, |rng| {
        let s: Vec<Vec<usize>> = (0..d).map(|_| resolved.draw(rng)).collect();
        restricted_frobenius_sq(&dense, &s)
    })?;
    let params = format!("d={d};m={};k={};eta={eta};rho={rho:.6}", t.dim(), support.k);
    Ok(ExperimentReport::new("subtensor", params, &vals, threshold, eta))
}

/// `Pr[sum a_i^2 zeta_i^2 > C^2 tau / log^c m]` against
/// `||a||_1 p log^c m + 1/m^2`.
pub fn zconc_experiment(
    a: &[f64],
    support: &SupportModel,
    value: &ValueModel,
    c: u32,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_support(support, a.len())?;
    value.validate()?;
    let m = a.len() as f64;
    let p = nonzero_rate(support);
    let cc = value.c();
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    if l1 * p * cc * cc > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("need ||a||_1 p C^2 <= 1, got {}", l1 * p * cc * cc)));
    }
    let logc = m.ln().powi(c as i32);
    let threshold = cc * cc * support.tau / logc;
    let target = l1 * p * logc + 1.0 / (m * m);
    let resolved = support.resolve(&[])?;
    let vals = per_trial(trials, seed, |rng| {
        Ok(draw_zeta(&resolved, value, rng).iter().map(|&(j, z)| a[j] * a[j] * z * z).sum::<f64>())
    })?;
    let params = format!("m={};k={};c={c};l1={l1:.6}", a.len(), support.k);
    Ok(ExperimentReport::new("zconc", params, &vals, threshold, target))
}

/// `Pr[|sum alpha_j zeta_j| >= c log(1/eta) C sqrt(tau) max(||alpha||_2 sqrt(p), ||alpha||_inf)] <= eta`.
pub fn bernstein_experiment(
    alpha: &[f64],
    support: &SupportModel,
    value: &ValueModel,
    eta: f64,
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_support(support, alpha.len())?;
    value.validate()?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta must be in (0,1)"));
    }
    let p = nonzero_rate(support);
    let l2 = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
    let linf = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = c * (1.0 / eta).ln() * value.c() * support.tau.sqrt() * (l2 * p.sqrt()).max(linf);
    let resolved = support.resolve(&[])?;
    let vals = per_trial(trials, seed, |rng| {
        Ok(draw_zeta(&resolved, value, rng).iter().map(|&(j, z)| alpha[j] * z).sum::<f64>())
    })?;
    let params = format!("m={};k={};eta={eta};c={c}", alpha.len(), support.k);
    Ok(ExperimentReport::new("bernstein", params, &vals, threshold, eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_all_ones_passes() {
        let t = CoeffTensor::all_ones(1, 100).unwrap();
        let s = SupportModel::uniform(100, 10);
        let (r, b) = tail_experiment(&t, &s, &ValueModel::Rademacher, 0.01, 10_000, 1).unwrap();
        // f = sum of 10 signs: sd sqrt(10), threshold far beyond 3 sd
        assert!(b.bound_value > 3.0 * 10f64.sqrt());
        assert!(r.pass);
        assert!(r.mean.abs() < 4.0 * r.std_err);
    }

    #[test]
    fn single_entry_subtensor_rate_is_p_to_the_d() {
        let mut e = vec![0.0; 100];
        e[0] = 1.0;
        let t = CoeffTensor::dense(2, 10, e).unwrap();
        let s = SupportModel::uniform(10, 2);
        let r = subtensor_frobenius_experiment(&t, &s, 0.01, 40_000, 2).unwrap();
        // T' is nonzero iff both supports hold index 0
        let vals_nonzero = r.mean;
        assert!((vals_nonzero - 0.04).abs() < 4.0 * r.std_err + 1e-12);
    }

    #[test]
    fn zconc_zero_weights_never_exceed() {
        let s = SupportModel::uniform(50, 5);
        let r = zconc_experiment(&[0.0; 50], &s, &ValueModel::Rademacher, 4, 1000, 0).unwrap();
        assert_eq!(r.empirical, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn zconc_precondition() {
        let s = SupportModel::uniform(10, 5);
        assert!(zconc_experiment(&[1.0; 10], &s, &ValueModel::Rademacher, 4, 10, 0).is_err());
    }

    #[test]
    fn bernstein_holds_at_default_constant() {
        let alpha: Vec<f64> = (0..128).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let s = SupportModel::uniform(128, 5);
        let r = bernstein_experiment(&alpha, &s, &ValueModel::Rademacher, 0.01, 4.0, 20_000, 3).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn deterministic_under_seed() {
        let t = CoeffTensor::identity_slice(2, 30).unwrap();
        let s = SupportModel::uniform(30, 4);
        let a = tail_experiment(&t, &s, &ValueModel::Rademacher, 0.05, 1000, 9).unwrap();
        let b = tail_experiment(&t, &s, &ValueModel::Rademacher, 0.05, 1000, 9).unwrap();
        assert_eq!(a, b);
    }
}
