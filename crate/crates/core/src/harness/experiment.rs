use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::matching::{match_columns, MatchReport};
use crate::error::{Error, Result};
use crate::io::{vectors_to_matrix, write_dlm1, write_iteration_csv, write_json};
use crate::candidates::{CandidateConfig, TupleKind, TupleStrategy};
use crate::column_test::TestParams;
use crate::model::{gen_dictionary, DictionaryKind, SemirandomSource, SemirandomSpec, SupportKind, SupportModel, ValueModel};
use crate::recovery::{recover_dict, RecoverConfig, RecoveryResult};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryParams {
    pub n: usize,
    pub m: usize,
    pub kind: DictionaryKind,
    /// Fixed dictionary seed; `None` derives one from each trial seed.
    pub seed: Option<u64>,
}

/// Everything a run needs. Nothing is defaulted at run time: every
/// constant is a field, so the snapshot written next to the artifacts
/// reproduces the run on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Sample law; `N` and `seed` here are ignored in favour of the
    /// per-iteration `sample_size` and the trial seed.
    pub model: SemirandomSpec,
    pub dictionary: DictionaryParams,
    pub algorithm: RecoverConfig,
    pub trials: Vec<u64>,
    pub outputs: PathBuf,
}

impl ExperimentConfig {
    /// The desk instance: n = 64, m = 128, k = 5, Gaussian columns,
    /// Rademacher values, |T| = 2e5, |T1| = 1e5, |T_v| = 5e4, L = 8,
    /// 2e4 correlation-greedy tuples.
    pub fn desk(name: &str, beta: f64, adversary: SupportKind, trials: Vec<u64>, outputs: PathBuf) -> Self {
        let (n, m, k) = (64, 128, 5);
        let model = SemirandomSpec {
            support_random: SupportModel::uniform(m, k),
            support_adversarial: SupportModel { kind: adversary, m, k, tau: 1.0 },
            beta,
            value: ValueModel::Rademacher,
            n_samples: 200_000,
            seed: 0,
            noise_std: 0.0,
        };
        let candidates = CandidateConfig {
            strategy: TupleStrategy {
                kind: TupleKind::CorrelationGreedy,
                budget: 20_000,
                l: 8,
                anchor_pool_size: 20_000,
                min_pairwise: 0.8,
            },
            test: TestParams::desk_default(beta, k, m, 1.0),
            dedup_angle: 0.1,
            test_batch_size: 50_000,
            test_first_block: 1024,
            reuse_test_batch: false,
            seed: 0,
        };
        let algorithm = RecoverConfig {
            candidates,
            sample_size: 200_000,
            statistic_size: 100_000,
            beta,
            k,
            m,
            lambda: RecoverConfig::default_lambda(m),
            epsilon: 0.05,
            max_iterations: 20,
            stale_limit: 3,
            use_lp: true,
            membership_threshold: 0.5,
            lp_tolerance: 1e-7,
        };
        Self {
            name: name.to_string(),
            model,
            dictionary: DictionaryParams {
                n,
                m,
                kind: DictionaryKind::GaussianNormalized,
                seed: None,
            },
            algorithm,
            trials,
            outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dictionary;
        if d.n == 0 || d.m == 0 {
            return Err(Error::invalid("dictionary dimensions must be positive"));
        }
        self.model.validate(d.m)?;
        self.algorithm.validate()?;
        if self.algorithm.m != d.m || self.algorithm.k != self.model.support_random.k {
            return Err(Error::invalid("algorithm k/m disagree with the model"));
        }
        if self.trials.is_empty() {
            return Err(Error::invalid("at least one trial seed is required"));
        }
        Ok(())
    }

    pub fn dictionary_seed(&self, trial: u64) -> u64 {
        self.dictionary.seed.unwrap_or_else(|| derive_seed(trial, 0xd1c7))
    }

    pub fn trial_dir(&self, trial: u64) -> PathBuf {
        self.outputs.join(format!("seed-{trial}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub coverage: f64,
    pub max_error: Option<f64>,
    pub pass: bool,
    pub iterations: usize,
    pub recovered: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub tolerance: f64,
    pub trials: Vec<TrialSummary>,
    pub passed: usize,
    pub mean_coverage: f64,
}

impl ExperimentSummary {
    pub fn all_pass(&self) -> bool {
        self.passed == self.trials.len()
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub seed: u64,
    pub report: MatchReport,
    pub result: RecoveryResult,
}

pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs one trial and writes its artifacts under `trial_dir(seed)`.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialOutcome> {
    let dir = config.trial_dir(seed);
    fs::create_dir_all(&dir).map_err(|e| Error::from(e).in_stage("write"))?;
    let d = &config.dictionary;
    let a = gen_dictionary(d.n, d.m, d.kind, config.dictionary_seed(seed)).map_err(|e| e.in_stage("dictionary"))?;
    let spec = config.model.with_samples(config.algorithm.sample_size, seed);
    let mut source = SemirandomSource::new(a.clone(), spec).map_err(|e| e.in_stage("model"))?;
    let mut alg = config.algorithm.clone();
    alg.candidates.seed = derive_seed(seed, 0xa15);
    let result = recover_dict(&mut source, &alg, Some(&a)).map_err(|e| e.in_stage("recover"))?;
    let report = match_columns(&a, &result.recovered, alg.epsilon).map_err(|e| e.in_stage("match"))?;
    write_trial(&dir, &a, &result, &report).map_err(|e| e.in_stage("write"))?;
    Ok(TrialOutcome { seed, report, result })
}

fn write_trial(dir: &Path, a: &crate::model::Dictionary, result: &RecoveryResult, report: &MatchReport) -> Result<()> {
    write_dlm1(&dir.join("dictionary.dlm"), a.columns())?;
    write_dlm1(&dir.join("recovered.dlm"), &vectors_to_matrix(a.n(), &result.recovered)?)?;
    write_iteration_csv(&dir.join("iterations.csv"), &result.records)?;
    write_json(&dir.join("result.json"), result)?;
    write_json(&dir.join("match_report.json"), report)
}

/// Runs every trial seed in order, writing the config snapshot, per-trial
/// artifacts and a summary. Trials are sequential; each is parallel inside.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(ExperimentSummary, Vec<TrialOutcome>)> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(&config.outputs).map_err(|e| Error::from(e).in_stage("write"))?;
    write_json(&config.outputs.join(CONFIG_SNAPSHOT), config).map_err(|e| e.in_stage("write"))?;
    let mut outcomes = Vec::with_capacity(config.trials.len());
    let mut trials = Vec::with_capacity(config.trials.len());
    for &seed in &config.trials {
        let start = Instant::now();
        let out = run_trial(config, seed)?;
        trials.push(TrialSummary {
            seed,
            coverage: out.report.coverage,
            max_error: out.report.max_error,
            pass: out.report.passes(),
            iterations: out.result.iterations,
            recovered: out.result.recovered.len(),
            seconds: start.elapsed().as_secs_f64(),
        });
        outcomes.push(out);
    }
    let passed = trials.iter().filter(|t| t.pass).count();
    let mean_coverage = trials.iter().map(|t| t.coverage).sum::<f64>() / trials.len() as f64;
    let summary = ExperimentSummary {
        name: config.name.clone(),
        tolerance: config.algorithm.epsilon,
        trials,
        passed,
        mean_coverage,
    };
    write_json(&config.outputs.join(SUMMARY_FILE), &summary).map_err(|e| e.in_stage("write"))?;
    Ok((summary, outcomes))
}
