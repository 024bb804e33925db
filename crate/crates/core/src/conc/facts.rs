use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL: f64 = 1e-8;

pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Column-wise Kronecker product: column `i` is `A_i (x) B_i`.
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid("Khatri-Rao product needs equal column counts"));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    Ok(DMatrix::from_fn(na * nb, a.ncols(), |r, c| a[(r / nb, c)] * b[(r % nb, c)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormFactReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `||A (.) B||_op <= ||A||_op ||B||_op` within `1e-8`.
pub fn khatri_rao_norm_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<NormFactReport> {
    let lhs = operator_norm(&khatri_rao(a, b)?);
    let rhs = operator_norm(a) * operator_norm(b);
    Ok(NormFactReport {
        lhs,
        rhs,
        holds: lhs <= rhs + TOL * rhs.max(1.0),
    })
}

/// For PSD `A_i`: `||sum A_i (x) B_i||_F <= ||sum ||B_i||_F A_i||_F` within `1e-8`.
pub fn psd_tensor_sum_check(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Result<NormFactReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("need equally many A and B matrices"));
    }
    let shape_a = a[0].shape();
    let shape_b = b[0].shape();
    if a.iter().any(|x| x.shape() != shape_a || !x.is_square()) || b.iter().any(|x| x.shape() != shape_b) {
        return Err(Error::invalid("A matrices must share a square shape and B matrices a shape"));
    }
    let mut kron = DMatrix::zeros(shape_a.0 * shape_b.0, shape_a.1 * shape_b.1);
    let mut weighted = DMatrix::zeros(shape_a.0, shape_a.1);
    for (x, y) in a.iter().zip(b) {
        kron += x.kronecker(y);
        weighted += x * y.norm();
    }
    let lhs = kron.norm();
    let rhs = weighted.norm();
    Ok(NormFactReport {
        lhs,
        rhs,
        holds: lhs <= rhs + TOL * rhs.max(1.0),
    })
}
