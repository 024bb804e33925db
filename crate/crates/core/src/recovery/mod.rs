//! The outer recovery loop: detect which recovered columns each sample
//! uses, reweight by LP so that no recovered column is over-represented,
//! subsample, and search the reweighted data for new columns.

mod lp;

pub use lp::{cap_fraction, solve_reweight_lp, verify_weights, LpCheck, LpSolution, LpStatus};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{is_duplicate, recover_columns, CandidateConfig, CandidateDiagnostics};
use crate::error::{Error, Result};
use crate::harness::{match_columns, MatchReport};
use crate::linalg::{dot, CHUNK};
use crate::model::{Dictionary, ModelSource, Provenance, SampleBatch};
use crate::rng::{derive_seed, domain, stream};

/// `{i : |<y, A_i>| >= threshold}` in increasing order.
pub fn detect_support_membership(y: &[f64], recovered: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    recovered
        .iter()
        .enumerate()
        .filter(|(_, a)| dot(y, a).abs() >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Membership sets for every sample of a batch.
pub fn membership_sets(batch: &SampleBatch, recovered: &[Vec<f64>], threshold: f64) -> Result<Vec<Vec<usize>>> {
    if recovered.iter().any(|a| a.len() != batch.dim()) {
        return Err(Error::invalid("recovered vector dimension differs from the samples"));
    }
    if recovered.is_empty() {
        return Ok(vec![Vec::new(); batch.len()]);
    }
    let w = DMatrix::from_fn(batch.dim(), recovered.len(), |r, c| recovered[c][r]);
    let chunks: Vec<Vec<Vec<usize>>> = (0..batch.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let len = CHUNK.min(batch.len() - start);
            let ip = batch.matrix().columns(start, len).tr_mul(&w);
            (0..len)
                .map(|j| (0..recovered.len()).filter(|&i| ip[(j, i)].abs() >= threshold).collect())
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Draws `size` distinct samples, each step picking a remaining sample with
/// probability proportional to its weight.
pub fn weighted_subsample(batch: &SampleBatch, weights: &[f64], size: usize, seed: u64) -> Result<SampleBatch> {
    if weights.len() != batch.len() {
        return Err(Error::invalid("one weight per sample required"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if size > positive {
        return Err(Error::invalid(format!(
            "subsample of {size} exceeds the {positive} samples with positive weight"
        )));
    }
    let mut rng = stream(seed, domain::SUBSAMPLE, 0);
    let idx = rand::seq::index::sample_weighted(&mut rng, batch.len(), |j| weights[j], size)
        .map_err(|e| Error::invalid(format!("weighted subsample: {e}")))?;
    Ok(batch.select(&idx.into_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverConfig {
    pub candidates: CandidateConfig,
    /// Samples drawn per iteration, `|T|`.
    pub sample_size: usize,
    /// Statistic batch size, `|T1|`.
    pub statistic_size: usize,
    pub beta: f64,
    pub k: usize,
    pub m: usize,
    /// Cap slack; `1/m^2` by default.
    pub lambda: f64,
    /// Target column accuracy, used as the matching tolerance.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop after this many consecutive iterations without a new column.
    pub stale_limit: usize,
    pub use_lp: bool,
    pub membership_threshold: f64,
    pub lp_tolerance: f64,
}

impl RecoverConfig {
    pub fn default_lambda(m: usize) -> f64 {
        1.0 / (m as f64 * m as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.candidates.validate()?;
        if self.sample_size == 0 || self.statistic_size == 0 {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid("beta must be in (0,1]"));
        }
        if self.k == 0 || self.m == 0 || self.k > self.m {
            return Err(Error::invalid("need 1 <= k <= m"));
        }
        if self.max_iterations == 0 || self.stale_limit == 0 {
            return Err(Error::invalid("iteration limits must be positive"));
        }
        if self.lambda < 0.0 || self.epsilon <= 0.0 {
            return Err(Error::invalid("lambda must be >= 0 and epsilon > 0"));
        }
        Ok(())
    }
}

/// Whether the indicator of random-provenance samples satisfies the LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessCheck {
    pub random_count: usize,
    pub feasible: bool,
    pub check: LpCheck,
    /// Recovered columns whose cap the indicator violates.
    pub violating_columns: Vec<usize>,
}

pub fn random_indicator_witness(
    provenance: &[Provenance],
    membership: &[Vec<usize>],
    recovered: usize,
    config: &RecoverConfig,
) -> Result<WitnessCheck> {
    let w: Vec<f64> = provenance
        .iter()
        .map(|p| if *p == Provenance::Random { 1.0 } else { 0.0 })
        .collect();
    let check = verify_weights(
        membership,
        recovered,
        &w,
        config.beta,
        config.k,
        config.m,
        config.lambda,
        config.lp_tolerance,
    )?;
    let c = cap_fraction(config.k, config.m, config.lambda);
    let violating_columns = check
        .weighted_marginals
        .iter()
        .enumerate()
        .filter(|(_, &f)| (f - c) > config.lp_tolerance * c.max(1.0 / check.total_mass.max(1.0)))
        .map(|(i, _)| i)
        .collect();
    Ok(WitnessCheck {
        random_count: w.iter().filter(|&&v| v > 0.0).count(),
        feasible: check.ok,
        check,
        violating_columns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lp_status: LpStatus,
    pub lp_mass: Option<f64>,
    pub lp_required: f64,
    pub lp_pivots: usize,
    pub lp_check: Option<LpCheck>,
    pub witness: Option<WitnessCheck>,
    pub anchors: usize,
    pub statistic_samples: usize,
    pub new_columns: usize,
    pub total_columns: usize,
    pub max_error: Option<f64>,
    pub coverage: Option<f64>,
    pub diagnostics: CandidateDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    AllColumns,
    IterationCap,
    Stale,
    LpInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub recovered: Vec<Vec<f64>>,
    pub matching: Option<MatchReport>,
    pub iterations: usize,
    pub lp_statuses: Vec<LpStatus>,
    pub records: Vec<IterationRecord>,
    pub diagnostics: CandidateDiagnostics,
    pub stop: StopReason,
}

/// Runs the loop until `m` columns are found, the iteration cap is hit,
/// `stale_limit` iterations pass without progress, or the LP is
/// infeasible. With `truth`, every iteration records matching quality.
pub fn recover_dict(source: &mut dyn ModelSource, config: &RecoverConfig, truth: Option<&Dictionary>) -> Result<RecoveryResult> {
    config.validate()?;
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut records = Vec::new();
    let mut totals = CandidateDiagnostics::default();
    let mut stale = 0usize;
    let mut stop = StopReason::IterationCap;

    for it in 0..config.max_iterations {
        let t = source.draw(config.sample_size).map_err(|e| e.in_stage("draw"))?;
        let membership =
            membership_sets(&t, &found, config.membership_threshold).map_err(|e| e.in_stage("membership"))?;
        let witness = match (&t.provenance, config.use_lp) {
            (Some(p), true) => Some(random_indicator_witness(p, &membership, found.len(), config)?),
            _ => None,
        };
        let required = config.beta * t.len() as f64;
        let mut record = IterationRecord {
            iteration: it,
            lp_status: LpStatus::Skipped,
            lp_mass: None,
            lp_required: required,
            lp_pivots: 0,
            lp_check: None,
            witness,
            anchors: 0,
            statistic_samples: 0,
            new_columns: 0,
            total_columns: found.len(),
            max_error: None,
            coverage: None,
            diagnostics: CandidateDiagnostics::default(),
        };
        let weights = if config.use_lp {
            match solve_reweight_lp(&membership, found.len(), config.beta, config.k, config.m, config.lambda) {
                Ok(sol) => {
                    record.lp_status = LpStatus::Feasible;
                    record.lp_mass = Some(sol.total_mass);
                    record.lp_pivots = sol.pivots;
                    record.lp_check = Some(verify_weights(
                        &membership,
                        found.len(),
                        &sol.weights,
                        config.beta,
                        config.k,
                        config.m,
                        config.lambda,
                        config.lp_tolerance,
                    )?);
                    sol.weights
                }
                Err(Error::Infeasible { best_mass, .. }) => {
                    record.lp_status = LpStatus::Infeasible;
                    record.lp_mass = Some(best_mass);
                    records.push(record);
                    stop = StopReason::LpInfeasible;
                    break;
                }
                Err(e) => return Err(e.in_stage("lp")),
            }
        } else {
            vec![1.0; t.len()]
        };

        let positive = weights.iter().filter(|&&w| w > 0.0).count();
        let mass = weights.iter().sum::<f64>().floor() as usize;
        let cap = positive.min(mass).max(1);
        let t0_size = config.candidates.strategy.anchor_pool_size.min(cap);
        let t1_size = config.statistic_size.min(cap);
        let base = derive_seed(config.candidates.seed, 0x5eed_0000 + it as u64);
        let t0 = weighted_subsample(&t, &weights, t0_size, derive_seed(base, 0)).map_err(|e| e.in_stage("subsample"))?;
        let t1 = weighted_subsample(&t, &weights, t1_size, derive_seed(base, 1)).map_err(|e| e.in_stage("subsample"))?;
        record.anchors = t0.len();
        record.statistic_samples = t1.len();

        let mut cc = config.candidates.clone();
        cc.seed = derive_seed(base, 2);
        let set = recover_columns(source, Some(&t0), &t1, &cc).map_err(|e| e.in_stage("candidates"))?;
        for z in &set.vectors {
            if !is_duplicate(z, &found, cc.dedup_angle) {
                found.push(z.clone());
                record.new_columns += 1;
            }
        }
        record.total_columns = found.len();
        record.diagnostics = set.diagnostics.clone();
        totals.merge(&set.diagnostics);
        if let Some(a) = truth {
            let rep = match_columns(a, &found, config.epsilon)?;
            record.max_error = rep.max_error;
            record.coverage = Some(rep.coverage);
        }
        stale = if record.new_columns == 0 { stale + 1 } else { 0 };
        records.push(record);
        if found.len() >= config.m {
            stop = StopReason::AllColumns;
            break;
        }
        if stale >= config.stale_limit {
            stop = StopReason::Stale;
            break;
        }
    }
    let matching = truth.map(|a| match_columns(a, &found, config.epsilon)).transpose()?;
    Ok(RecoveryResult {
        recovered: found,
        matching,
        iterations: records.len(),
        lp_statuses: records.iter().map(|r| r.lp_status).collect(),
        records,
        diagnostics: totals,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{TupleKind, TupleStrategy};
    use crate::column_test::TestParams;
    use crate::model::{gen_dictionary, DictionaryKind, SemirandomSource, SemirandomSpec, SupportModel, ValueModel};

    #[test]
    fn membership_on_orthonormal() {
        let a: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        assert_eq!(detect_support_membership(&[1.0, 0.0, -1.0, 0.0], &a, 0.5), vec![0, 2]);
        assert!(detect_support_membership(&[0.0; 4], &a, 0.5).is_empty());
        let b = SampleBatch::from_vectors(4, &[vec![1.0, 0.0, -1.0, 0.0], vec![0.0; 4], vec![0.2, 0.7, 0.0, 0.5]]).unwrap();
        let sets = membership_sets(&b, &a, 0.5).unwrap();
        assert_eq!(sets, vec![vec![0, 2], vec![], vec![1, 3]]);
    }

    #[test]
    fn zero_weights_never_drawn() {
        let ys: Vec<Vec<f64>> = (0..20).map(|j| vec![j as f64]).collect();
        let b = SampleBatch::from_vectors(1, &ys).unwrap();
        let w: Vec<f64> = (0..20).map(|j| if j % 2 == 0 { 1.0 } else { 0.0 }).collect();
        for seed in 0..20 {
            let s = weighted_subsample(&b, &w, 10, seed).unwrap();
            let mut got: Vec<f64> = (0..10).map(|j| s.sample(j)[0]).collect();
            got.sort_by(f64::total_cmp);
            assert_eq!(got, (0..10).map(|j| 2.0 * j as f64).collect::<Vec<_>>());
        }
        assert!(weighted_subsample(&b, &w, 11, 0).is_err());
    }

    #[test]
    fn single_draw_follows_weights() {
        let b = SampleBatch::from_vectors(1, &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let reps = 20_000;
        let mut counts = [0usize; 3];
        for seed in 0..reps {
            let s = weighted_subsample(&b, &[1.0, 1.0, 2.0], 1, seed as u64).unwrap();
            counts[s.sample(0)[0] as usize] += 1;
        }
        for (c, p) in counts.iter().zip([0.25, 0.25, 0.5]) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((*c as f64 / reps as f64 - p).abs() < 4.0 * se, "{counts:?}");
        }
    }

    fn config(m: usize, k: usize) -> RecoverConfig {
        RecoverConfig {
            candidates: CandidateConfig {
                strategy: TupleStrategy {
                    kind: TupleKind::CorrelationGreedy,
                    budget: 200,
                    l: 2,
                    anchor_pool_size: 800,
                    min_pairwise: 0.8,
                },
                test: TestParams {
                    eta: 0.05,
                    kappa0: 0.01,
                    kappa1: 0.02,
                    c: 1.5,
                    rad_norm_cap: 1.1,
                    refine_threshold: 0.5,
                },
                dedup_angle: 0.1,
                test_batch_size: 30_000,
                test_first_block: 1024,
                reuse_test_batch: false,
                seed: 11,
            },
            sample_size: 20_000,
            statistic_size: 10_000,
            beta: 1.0,
            k,
            m,
            lambda: RecoverConfig::default_lambda(m),
            epsilon: 0.05,
            max_iterations: m,
            stale_limit: 3,
            use_lp: true,
            membership_threshold: 0.5,
            lp_tolerance: 1e-7,
        }
    }

    fn source(n: usize, m: usize, k: usize) -> SemirandomSource {
        let a = gen_dictionary(n, m, DictionaryKind::OrthonormalSubset, 0).unwrap();
        let spec = SemirandomSpec {
            support_random: SupportModel::uniform(m, k),
            support_adversarial: SupportModel::uniform(m, k),
            beta: 1.0,
            value: ValueModel::UniformSpikeSlab { c: 1.5 },
            n_samples: 0,
            seed: 5,
            noise_std: 0.0,
        };
        SemirandomSource::new(a, spec).unwrap()
    }

    #[test]
    fn single_column_dictionary() {
        let mut src = source(3, 1, 1);
        let mut cfg = config(1, 1);
        cfg.candidates.test.kappa1 = 0.5;
        let truth = src.dictionary.clone();
        let r = recover_dict(&mut src, &cfg, Some(&truth)).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.stop, StopReason::AllColumns);
        let rep = r.matching.unwrap();
        assert_eq!(rep.coverage, 1.0);
        assert!(rep.max_error.unwrap() < 0.05);
    }

    #[test]
    fn orthonormal_full_recovery_with_lp() {
        let mut src = source(24, 24, 2);
        let truth = src.dictionary.clone();
        // beta = 1 would force w = 1, which the cap rejects as soon as one
        // empirical frequency exceeds k(1 + lambda)/m; 0.9 still lower-bounds
        // the random fraction
        let mut cfg = config(24, 2);
        cfg.beta = 0.9;
        let r = recover_dict(&mut src, &cfg, Some(&truth)).unwrap();
        let rep = r.matching.as_ref().unwrap();
        assert_eq!(rep.coverage, 1.0, "{:?}", r.records.iter().map(|x| x.total_columns).collect::<Vec<_>>());
        for rec in &r.records {
            if let Some(chk) = &rec.lp_check {
                assert!(chk.ok, "{chk:?}");
            }
        }
        // |W*| never shrinks
        assert!(r.records.windows(2).all(|w| w[0].total_columns <= w[1].total_columns));
    }
}
