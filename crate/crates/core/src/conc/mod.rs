//! Flattened tensor norms and Monte-Carlo checks of tail bounds for
//! multilinear polynomials in sparse random vectors.

mod experiments;
mod facts;
mod tensor;

pub use experiments::{
    bernstein_experiment, subtensor_frobenius_experiment, tail_bound, tail_experiment, zconc_experiment,
    ConcBoundParams, ExperimentReport, MC_SLACK,
};
pub use facts::{khatri_rao, khatri_rao_norm_check, operator_norm, psd_tensor_sum_check, NormFactReport};
pub use tensor::{
    eval_multilinear, flattened_norm, imbalance_rho, mode_subsets, restricted_frobenius_sq, CoeffTensor, SparseVec,
    DENSE_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Dictionary;

/// `sum_i w_i M_i^{(x) d}` with `M = A^T A`, columns of the Gram matrix.
pub fn gram_tensor(a: &Dictionary, d: usize, weights: Option<Vec<f64>>) -> Result<CoeffTensor> {
    let m = a.m();
    let w = weights.unwrap_or_else(|| vec![1.0; m]);
    CoeffTensor::rank_structured(d, w, a.gram().clone())
}

/// The polylogarithmic factor `nu(eta, d)` in its three labeled forms.
/// Reporting only; the forms are never compared with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuForm {
    /// `c log(1/eta) (C (sigma^2 + mu sqrt(m/n)) log(n/eta))^d`
    OnePartition,
    /// `log(1/eta) (C (sigma^2 + mu sqrt(m/n)) log(n/eta))^d`
    SpecialBlock,
    /// `(2C)^d (C^2 log(2/eta))^{d/2} sigma^{2d}`
    Statistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuInputs {
    pub eta: f64,
    pub d: usize,
    pub c_value: f64,
    pub sigma: f64,
    pub mu: f64,
    pub n: usize,
    pub m: usize,
    /// Leading constant for the one-partition form.
    pub leading: f64,
}

pub fn nu(form: NuForm, x: &NuInputs) -> f64 {
    let d = x.d as i32;
    let spread = x.c_value * (x.sigma * x.sigma + x.mu * (x.m as f64 / x.n as f64).sqrt()) * (x.n as f64 / x.eta).ln();
    match form {
        NuForm::OnePartition => x.leading * (1.0 / x.eta).ln() * spread.powi(d),
        NuForm::SpecialBlock => (1.0 / x.eta).ln() * spread.powi(d),
        NuForm::Statistic => {
            (2.0 * x.c_value).powi(d)
                * (x.c_value * x.c_value * (2.0 / x.eta).ln()).powf(x.d as f64 / 2.0)
                * x.sigma.powi(2 * d)
        }
    }
}
