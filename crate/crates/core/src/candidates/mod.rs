//! Candidate columns from anchor tuples.
//!
//! Each tuple of `2L - 1` anchor samples yields the weighted mean
//! `(1/|T1|) sum_y prod_l <u_l, y> y`. When the anchors share a column the
//! product concentrates on that column's samples, so the normalized vector
//! points close to it. Every candidate is screened by the column test and
//! refined; duplicates are dropped.

mod statistic;
mod tuples;

pub use statistic::{tuple_statistic, tuple_statistics};
pub use tuples::{propose_tuples, TupleKind, TupleStrategy, GREEDY_POOL_LIMIT};

use serde::{Deserialize, Serialize};

use crate::column_test::{run_test, test_column_sequential, RejectReason, TestOutcome, TestParams, TestVariant};
use crate::error::{Error, Result};
use crate::linalg::{norm, signed_distance};
use crate::model::{ModelSource, SampleBatch};
use crate::rng::derive_seed;

const ZERO_STATISTIC: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub strategy: TupleStrategy,
    pub test: TestParams,
    /// Candidates closer than this (up to sign) to an earlier one are dropped.
    #[serde(default = "default_dedup_angle")]
    pub dedup_angle: f64,
    /// Size of each test batch `T_v`.
    pub test_batch_size: usize,
    /// First block drawn for a test batch; later blocks double until the
    /// verdict is settled or the batch is complete.
    #[serde(default = "default_first_block")]
    pub test_first_block: usize,
    /// Reuse one test batch for every candidate instead of a fresh one each.
    /// Breaks the independence between candidate and test batch.
    #[serde(default)]
    pub reuse_test_batch: bool,
    pub seed: u64,
}

fn default_dedup_angle() -> f64 {
    0.1
}

fn default_first_block() -> usize {
    1024
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.test.validate()?;
        if !(self.dedup_angle > 0.0) {
            return Err(Error::invalid("dedup_angle must be positive"));
        }
        if self.test_batch_size == 0 {
            return Err(Error::invalid("test batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    pub tuples_proposed: usize,
    pub zero_statistic: usize,
    pub tests_run: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected_middle_mass: usize,
    pub rejected_low_spike: usize,
    pub rejected_rad_norm: usize,
    pub rejected_degenerate: usize,
    pub test_samples_drawn: usize,
}

impl CandidateDiagnostics {
    fn record(&mut self, out: &TestOutcome) {
        self.tests_run += 1;
        self.test_samples_drawn += out.evaluated;
        match out.reject_reason {
            None => self.accepted += 1,
            Some(RejectReason::MiddleMass) => self.rejected_middle_mass += 1,
            Some(RejectReason::LowSpikeMass) => self.rejected_low_spike += 1,
            Some(RejectReason::RadNorm) => self.rejected_rad_norm += 1,
            Some(RejectReason::DegenerateRefinement) => self.rejected_degenerate += 1,
        }
    }

    pub fn merge(&mut self, o: &CandidateDiagnostics) {
        self.tuples_proposed += o.tuples_proposed;
        self.zero_statistic += o.zero_statistic;
        self.tests_run += o.tests_run;
        self.accepted += o.accepted;
        self.duplicates += o.duplicates;
        self.rejected_middle_mass += o.rejected_middle_mass;
        self.rejected_low_spike += o.rejected_low_spike;
        self.rejected_rad_norm += o.rejected_rad_norm;
        self.rejected_degenerate += o.rejected_degenerate;
        self.test_samples_drawn += o.test_samples_drawn;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Refined unit vectors, pairwise at least the dedup angle apart.
    pub vectors: Vec<Vec<f64>>,
    /// Index of the tuple that produced each vector.
    pub sources: Vec<usize>,
    pub tuples: Vec<Vec<usize>>,
    pub accepted: Vec<TestOutcome>,
    pub diagnostics: CandidateDiagnostics,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// True when `z` lies within `angle` of some vector in `kept`, up to sign.
pub fn is_duplicate(z: &[f64], kept: &[Vec<f64>], angle: f64) -> bool {
    kept.iter().any(|w| signed_distance(z, w) < angle)
}

/// Proposes tuples from `t0` (drawn from `source` when absent), evaluates
/// the statistic on `t1`, tests each normalized candidate on a test batch
/// from `source`, and keeps refined, deduplicated survivors in tuple order.
pub fn recover_columns(
    source: &mut dyn ModelSource,
    t0: Option<&SampleBatch>,
    t1: &SampleBatch,
    config: &CandidateConfig,
) -> Result<CandidateSet> {
    config.validate()?;
    if t1.dim() != source.dim() {
        return Err(Error::invalid("statistic batch dimension differs from the model"));
    }
    let drawn;
    let t0 = match t0 {
        Some(t) => t,
        None => {
            drawn = source.draw(config.strategy.anchor_pool_size)?;
            &drawn
        }
    };
    let tuples = propose_tuples(t0, &config.strategy, derive_seed(config.seed, 0))?;
    let stats = tuple_statistics(t0, &tuples, t1)?;
    let variant = TestVariant::for_values(source.value_model());
    let shared = if config.reuse_test_batch {
        Some(source.draw(config.test_batch_size)?)
    } else {
        None
    };

    let mut set = CandidateSet {
        diagnostics: CandidateDiagnostics {
            tuples_proposed: tuples.len(),
            ..Default::default()
        },
        ..Default::default()
    };
    for (t, col) in stats.column_iter().enumerate() {
        let mut v: Vec<f64> = col.iter().copied().collect();
        let nv = norm(&v);
        if !(nv >= ZERO_STATISTIC) {
            set.diagnostics.zero_statistic += 1;
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let out = match &shared {
            Some(b) => run_test(&v, b, &config.test, variant)?,
            None => test_column_sequential(
                &v,
                &config.test,
                variant,
                config.test_batch_size,
                config.test_first_block,
                |size| source.draw(size),
            )?,
        };
        set.diagnostics.record(&out);
        let Some(z) = out.refined.clone() else { continue };
        if is_duplicate(&z, &set.vectors, config.dedup_angle) {
            set.diagnostics.duplicates += 1;
            continue;
        }
        set.vectors.push(z);
        set.sources.push(t);
        set.accepted.push(out);
    }
    set.tuples = tuples;
    Ok(set)
}
