//! Histogram tests deciding whether a unit vector is close to a column.
//!
//! For a column `A_i`, `|<A_i, y>|` is near `|x_i|` on every sample, so the
//! inner products pile up near zero (column absent) or in `[1, C]` (column
//! present). A vector far from every column leaves noticeable mass strictly
//! between the two bands.

mod anticonc;

pub use anticonc::{
    anticoncentration_c0, anticoncentration_c1, weak_anticoncentration_check, AnticoncMode, AnticoncReport,
    EXACT_PATTERN_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chunked_reduce, dot, normalize, CompensatedVec, CHUNK};
use crate::model::SampleBatch;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    /// Band half-width `eta` in `(0, 1)`.
    pub eta: f64,
    /// Middle-mass fraction must stay strictly below this.
    pub kappa0: f64,
    /// Spike-mass fraction must reach at least this.
    pub kappa1: f64,
    /// Magnitude bound `C` of the value law.
    pub c: f64,
    #[serde(default = "default_rad_norm_cap")]
    pub rad_norm_cap: f64,
    #[serde(default = "default_refine_threshold")]
    pub refine_threshold: f64,
}

fn default_rad_norm_cap() -> f64 {
    1.1
}

fn default_refine_threshold() -> f64 {
    0.5
}

impl TestParams {
    /// Desk-scale defaults: `eta = 0.1`, `kappa0 = 0.01`,
    /// `kappa1 = 0.25 * beta * k / m`.
    pub fn desk_default(beta: f64, k: usize, m: usize, c: f64) -> Self {
        Self {
            eta: 0.1,
            kappa0: 0.01,
            kappa1: 0.25 * beta * k as f64 / m as f64,
            c,
            rad_norm_cap: default_rad_norm_cap(),
            refine_threshold: default_refine_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid(format!("eta must be in (0,1), got {}", self.eta)));
        }
        // No ordering between the two: the desk defaults put kappa0 above
        // kappa1 whenever beta * k / m < 0.04.
        if !(self.kappa0 > 0.0 && self.kappa0 <= 1.0 && self.kappa1 > 0.0 && self.kappa1 <= 1.0) {
            return Err(Error::invalid(format!(
                "need kappa0, kappa1 in (0, 1], got {} and {}",
                self.kappa0, self.kappa1
            )));
        }
        if self.c < 1.0 {
            return Err(Error::invalid("value bound C must be >= 1"));
        }
        if self.rad_norm_cap <= 1.0 {
            return Err(Error::invalid("rad_norm_cap must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    MiddleMass,
    LowSpikeMass,
    RadNorm,
    DegenerateRefinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub accepted: bool,
    /// Fraction outside both the spike band and the zero band.
    pub kappa0_hat: f64,
    /// Fraction inside the spike band.
    pub kappa1_hat: f64,
    /// Fraction inside the zero band only.
    pub zero_fraction: f64,
    pub spike_count: usize,
    pub middle_count: usize,
    pub zero_count: usize,
    /// Samples examined; below the batch size after an early stop.
    pub evaluated: usize,
    pub refined: Option<Vec<f64>>,
    /// Norm of the step-3 conditional mean (Rademacher variant only).
    pub rad_norm: Option<f64>,
    pub reject_reason: Option<RejectReason>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestVariant {
    /// General magnitudes in `[1, C]`.
    General,
    /// Rademacher values, with the extra conditional-mean norm check.
    Rademacher,
}

impl TestVariant {
    pub fn for_values(value: &crate::model::ValueModel) -> Self {
        if value.is_rademacher() {
            TestVariant::Rademacher
        } else {
            TestVariant::General
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bands {
    lo: f64,
    hi: f64,
    zero_edge: f64,
    refine_threshold: f64,
    /// open window for the Rademacher conditional mean
    window: Option<(f64, f64)>,
}

impl Bands {
    fn new(params: &TestParams, variant: TestVariant) -> Self {
        let eta = params.eta;
        match variant {
            TestVariant::General => Bands {
                lo: 1.0 - eta,
                hi: params.c * (1.0 + eta),
                zero_edge: params.c * eta,
                refine_threshold: params.refine_threshold,
                window: None,
            },
            TestVariant::Rademacher => Bands {
                lo: 1.0 - eta,
                hi: 1.0 + eta,
                zero_edge: eta / 32.0,
                refine_threshold: params.refine_threshold,
                window: Some((1.0 - 10.0 * eta, 1.0 + 10.0 * eta)),
            },
        }
    }
}

/// Running counts and conditional sums over one or more batches.
#[derive(Debug, Clone)]
struct Tally {
    spike: usize,
    zero: usize,
    middle: usize,
    refine: CompensatedVec,
    window: Option<CompensatedVec>,
}

impl Tally {
    fn new(dim: usize, bands: &Bands) -> Self {
        Tally {
            spike: 0,
            zero: 0,
            middle: 0,
            refine: CompensatedVec::zeros(dim),
            window: bands.window.map(|_| CompensatedVec::zeros(dim)),
        }
    }

    fn total(&self) -> usize {
        self.spike + self.zero + self.middle
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.spike += other.spike;
        self.zero += other.zero;
        self.middle += other.middle;
        self.refine = self.refine.merge(other.refine);
        self.window = match (self.window, other.window) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            _ => None,
        };
        self
    }
}

/// Closed edges; the spike band wins where it overlaps the zero band.
fn tally(z: &[f64], batch: &SampleBatch, bands: &Bands) -> Tally {
    chunked_reduce(
        batch.len(),
        CHUNK,
        |range| {
            let mut t = Tally::new(batch.dim(), bands);
            for j in range {
                let y = batch.sample(j);
                let ip = dot(z, y);
                let a = ip.abs();
                if a >= bands.lo && a <= bands.hi {
                    t.spike += 1;
                } else if a <= bands.zero_edge {
                    t.zero += 1;
                } else {
                    t.middle += 1;
                }
                if ip >= bands.refine_threshold {
                    t.refine.add_scaled(1.0, y);
                }
                if let (Some((wl, wh)), Some(acc)) = (bands.window, t.window.as_mut()) {
                    if ip > wl && ip < wh {
                        acc.add_scaled(1.0, y);
                    }
                }
            }
            t
        },
        Tally::merge,
    )
    .unwrap_or_else(|| Tally::new(batch.dim(), bands))
}

fn mean_of(acc: &CompensatedVec) -> Option<Vec<f64>> {
    if acc.count == 0 {
        return None;
    }
    let mut m = acc.total();
    m.iter_mut().for_each(|v| *v /= acc.count as f64);
    Some(m)
}

/// Compensated mean of the samples whose signed inner product with `z`
/// satisfies `keep`, with the number selected.
pub fn conditional_mean(z: &[f64], batch: &SampleBatch, keep: impl Fn(f64) -> bool + Sync) -> (Vec<f64>, usize) {
    let acc = chunked_reduce(
        batch.len(),
        CHUNK,
        |range| {
            let mut acc = CompensatedVec::zeros(batch.dim());
            for j in range {
                let y = batch.sample(j);
                if keep(dot(z, y)) {
                    acc.add_scaled(1.0, y);
                }
            }
            acc
        },
        CompensatedVec::merge,
    )
    .unwrap_or_else(|| CompensatedVec::zeros(batch.dim()));
    let count = acc.count;
    (mean_of(&acc).unwrap_or_else(|| vec![0.0; batch.dim()]), count)
}

/// Normalized mean of `{y : <y, z> >= threshold}`.
pub fn refine_column(z: &[f64], batch: &SampleBatch, threshold: f64) -> Result<Vec<f64>> {
    check_dims(z, batch.dim())?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let (mut mean, count) = conditional_mean(z, batch, |ip| ip >= threshold);
    if count == 0 || normalize(&mut mean) == 0.0 {
        return Err(Error::DegenerateRefinement { threshold });
    }
    Ok(mean)
}

fn check_dims(z: &[f64], dim: usize) -> Result<()> {
    if z.len() != dim {
        return Err(Error::invalid(format!("vector has dimension {}, samples have {dim}", z.len())));
    }
    let nrm = crate::linalg::norm(z);
    if (nrm - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("test vector must be unit norm, got {nrm}")));
    }
    Ok(())
}

fn decide(t: &Tally, params: &TestParams) -> TestOutcome {
    let n = t.total() as f64;
    let mut out = TestOutcome {
        accepted: false,
        kappa0_hat: t.middle as f64 / n,
        kappa1_hat: t.spike as f64 / n,
        zero_fraction: t.zero as f64 / n,
        spike_count: t.spike,
        middle_count: t.middle,
        zero_count: t.zero,
        evaluated: t.total(),
        refined: None,
        // reported even when the histogram already rejects
        rad_norm: t.window.as_ref().and_then(mean_of).map(|m| crate::linalg::norm(&m)),
        reject_reason: None,
    };
    out.reject_reason = if out.kappa0_hat >= params.kappa0 {
        Some(RejectReason::MiddleMass)
    } else if out.kappa1_hat < params.kappa1 {
        Some(RejectReason::LowSpikeMass)
    } else if t.window.is_some() && out.rad_norm.is_none() {
        Some(RejectReason::DegenerateRefinement)
    } else if out.rad_norm.is_some_and(|r| r > params.rad_norm_cap) {
        Some(RejectReason::RadNorm)
    } else {
        match mean_of(&t.refine) {
            Some(mut r) => {
                if normalize(&mut r) > 0.0 {
                    out.refined = Some(r);
                    None
                } else {
                    Some(RejectReason::DegenerateRefinement)
                }
            }
            None => Some(RejectReason::DegenerateRefinement),
        }
    };
    out.accepted = out.reject_reason.is_none();
    out
}

/// Runs the chosen variant over a whole batch.
pub fn run_test(z: &[f64], batch: &SampleBatch, params: &TestParams, variant: TestVariant) -> Result<TestOutcome> {
    params.validate()?;
    check_dims(z, batch.dim())?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let bands = Bands::new(params, variant);
    Ok(decide(&tally(z, batch, &bands), params))
}

/// Spike band `[1 - eta, C(1 + eta)]`, zero band `[0, C eta]`; accept iff
/// the middle fraction is below `kappa0` and the spike fraction reaches
/// `kappa1`, then refine.
pub fn test_column(z: &[f64], batch: &SampleBatch, params: &TestParams) -> Result<TestOutcome> {
    run_test(z, batch, params, TestVariant::General)
}

/// Rademacher variant: spike band `[1 - eta, 1 + eta]`, zero band
/// `[0, eta / 32]`, plus a check that the mean of
/// `{y : <y, z> in (1 - 10 eta, 1 + 10 eta)}` has norm at most
/// `rad_norm_cap`. That check rejects vectors sitting halfway between two
/// columns, whose conditional mean approaches `A_i + A_j`.
pub fn test_column_rad(z: &[f64], batch: &SampleBatch, params: &TestParams) -> Result<TestOutcome> {
    run_test(z, batch, params, TestVariant::Rademacher)
}

/// Runs the test on a batch of `total` samples requested from `draw` in
/// blocks, the first of size `first_block` and later ones doubling. Stops
/// as soon as the verdict is settled: middle mass already reaching
/// `kappa0 * total`, or spike mass unable to reach `kappa1 * total`. The
/// verdict equals the one on the full concatenated batch; on early stop the
/// reported fractions cover only the `evaluated` samples.
pub fn test_column_sequential(
    z: &[f64],
    params: &TestParams,
    variant: TestVariant,
    total: usize,
    first_block: usize,
    mut draw: impl FnMut(usize) -> Result<SampleBatch>,
) -> Result<TestOutcome> {
    params.validate()?;
    if total == 0 {
        return Err(Error::invalid("empty test batch"));
    }
    let bands = Bands::new(params, variant);
    let mut acc: Option<Tally> = None;
    let mut block = first_block.max(1);
    let mut seen = 0usize;
    while seen < total {
        let size = block.min(total - seen);
        let b = draw(size)?;
        if b.len() != size {
            return Err(Error::invalid("source returned a batch of the wrong size"));
        }
        check_dims(z, b.dim())?;
        let t = tally(z, &b, &bands);
        acc = Some(match acc {
            Some(a) => a.merge(t),
            None => t,
        });
        seen += size;
        block = block.saturating_mul(2);
        let a = acc.as_ref().unwrap();
        let middle_settled = a.middle as f64 >= params.kappa0 * total as f64;
        let spike_settled = ((a.spike + total - seen) as f64) < params.kappa1 * total as f64;
        if seen < total && (middle_settled || spike_settled) {
            let mut out = decide(a, params);
            out.reject_reason = Some(if middle_settled {
                RejectReason::MiddleMass
            } else {
                RejectReason::LowSpikeMass
            });
            out.accepted = false;
            out.refined = None;
            return Ok(out);
        }
    }
    Ok(decide(&acc.expect("total > 0"), params))
}
