//! Concentration benches and the non-identifiability demo, shared by the
//! command line and the acceptance suite.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::column_test::{
    test_column_rad, weak_anticoncentration_check, AnticoncMode, TestOutcome, TestParams,
};
use crate::conc::{
    gram_tensor, khatri_rao_norm_check, psd_tensor_sum_check, subtensor_frobenius_experiment, tail_experiment,
    zconc_experiment, CoeffTensor,
};
use crate::error::{Error, Result};
use crate::io::ConcRow;
use crate::model::{
    gen_dictionary, gen_nonidentifiable_pair, marginal_estimates, sample_batch, DictionaryKind, SemirandomSpec,
    SupportKind, SupportModel, ValueModel,
};
use crate::rng::{derive_seed, domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchExperiment {
    Tail,
    Subtensor,
    Zconc,
    Anticonc,
    KhatriRao,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorFamily {
    AllOnes,
    IdentitySlice,
    /// Columns of the Gram matrix of a Gaussian `gram_n x m` dictionary.
    Gram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnticoncBench {
    /// Unnormalized weights; scaled to unit l2 norm before the check.
    pub weights: Vec<f64>,
    pub t: f64,
    pub eta_p: f64,
    pub beta: f64,
    pub exact: bool,
    pub trials: usize,
}

impl Default for AnticoncBench {
    fn default() -> Self {
        Self {
            weights: vec![1.0; 16],
            t: 1.0,
            eta_p: 0.05,
            beta: 0.25,
            exact: true,
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KhatriRaoBench {
    pub rows_a: usize,
    pub rows_b: usize,
    pub cols: usize,
    pub instances: usize,
}

impl Default for KhatriRaoBench {
    fn default() -> Self {
        Self {
            rows_a: 8,
            rows_b: 6,
            cols: 12,
            instances: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcBenchConfig {
    pub m: usize,
    pub k: usize,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub orders: Vec<usize>,
    pub tensors: Vec<TensorFamily>,
    pub gram_n: usize,
    pub value: ValueModel,
    /// Exponent of the log factor in the z-concentration check.
    pub zconc_c: u32,
    pub anticonc: AnticoncBench,
    pub khatri_rao: KhatriRaoBench,
}

impl Default for ConcBenchConfig {
    fn default() -> Self {
        Self {
            m: 100,
            k: 10,
            eta: 0.01,
            trials: 10_000,
            seed: 1,
            orders: vec![1, 2, 3],
            tensors: vec![TensorFamily::AllOnes, TensorFamily::IdentitySlice, TensorFamily::Gram],
            gram_n: 64,
            value: ValueModel::Rademacher,
            zconc_c: 1,
            anticonc: AnticoncBench::default(),
            khatri_rao: KhatriRaoBench::default(),
        }
    }
}

pub fn bench_tensor(family: TensorFamily, d: usize, cfg: &ConcBenchConfig) -> Result<CoeffTensor> {
    match family {
        TensorFamily::AllOnes => CoeffTensor::all_ones(d, cfg.m),
        TensorFamily::IdentitySlice => CoeffTensor::identity_slice(d, cfg.m),
        TensorFamily::Gram => {
            let a = gen_dictionary(cfg.gram_n, cfg.m, DictionaryKind::GaussianNormalized, cfg.seed)?;
            gram_tensor(&a, d, None)
        }
    }
}

/// Mode-1 row norms of `t`, scaled so that `||a||_1 p C^2 = 1`.
pub fn zconc_weights(t: &CoeffTensor, p: f64, c: f64) -> Result<Vec<f64>> {
    let (d, m) = (t.order(), t.dim());
    let entries = match t.to_dense()? {
        CoeffTensor::Dense { entries, .. } => entries,
        CoeffTensor::RankStructured { .. } => unreachable!(),
    };
    let row = m.pow(d as u32 - 1);
    let norms: Vec<f64> = entries
        .chunks(row)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let l1: f64 = norms.iter().sum();
    if l1 == 0.0 {
        return Err(Error::invalid("tensor is zero"));
    }
    let scale = 1.0 / (l1 * p * c * c);
    Ok(norms.into_iter().map(|v| v * scale).collect())
}

fn label(family: TensorFamily, rest: &str) -> String {
    let f = serde_json::to_value(family).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    format!("tensor={f};{rest}")
}

/// Runs one experiment family over the configured grid.
pub fn conc_bench(experiment: BenchExperiment, cfg: &ConcBenchConfig) -> Result<Vec<ConcRow>> {
    let support = SupportModel::uniform(cfg.m, cfg.k);
    let p = cfg.k as f64 / cfg.m as f64;
    let mut rows = Vec::new();
    match experiment {
        BenchExperiment::Tail | BenchExperiment::Subtensor | BenchExperiment::Zconc => {
            for &family in &cfg.tensors {
                for &d in &cfg.orders {
                    let t = bench_tensor(family, d, cfg)?;
                    let seed = derive_seed(cfg.seed, d as u64);
                    let r = match experiment {
                        BenchExperiment::Tail => tail_experiment(&t, &support, &cfg.value, cfg.eta, cfg.trials, seed)?.0,
                        BenchExperiment::Subtensor => subtensor_frobenius_experiment(&t, &support, cfg.eta, cfg.trials, seed)?,
                        _ => {
                            let a = zconc_weights(&t, p, cfg.value.c())?;
                            let mut r = zconc_experiment(&a, &support, &cfg.value, cfg.zconc_c, cfg.trials, seed)?;
                            r.params = format!("d={d};{}", r.params);
                            r
                        }
                    };
                    rows.push(ConcRow {
                        experiment: r.experiment.clone(),
                        params: label(family, &format!("{};vacuous={}", r.params, r.vacuous)),
                        empirical: r.empirical,
                        bound: r.target * crate::conc::MC_SLACK,
                        pass: r.pass,
                    });
                }
            }
        }
        BenchExperiment::Anticonc => {
            let ac = &cfg.anticonc;
            let l2 = ac.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            let a: Vec<f64> = ac.weights.iter().map(|w| w / l2).collect();
            let mode = if ac.exact {
                AnticoncMode::Exact
            } else {
                AnticoncMode::MonteCarlo { trials: ac.trials, seed: cfg.seed }
            };
            let r = weak_anticoncentration_check(&a, ac.t, ac.eta_p, ac.beta, &cfg.value, mode, None)?;
            rows.push(ConcRow {
                experiment: "anticonc".into(),
                params: format!(
                    "l={};t={};eta_p={};beta={};p_outer={};c0={:e};preconditions={}",
                    a.len(),
                    ac.t,
                    ac.eta_p,
                    ac.beta,
                    r.p_outer,
                    r.c0,
                    r.preconditions_hold()
                ),
                empirical: r.p_inner,
                bound: (r.p_outer / 2.0).min(r.c0),
                pass: r.lemma_satisfied,
            });
        }
        BenchExperiment::KhatriRao => {
            let kr = &cfg.khatri_rao;
            let gauss = |rows: usize, cols: usize, idx: u64| {
                let mut rng = stream(cfg.seed, domain::EXPERIMENT, idx);
                DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
            };
            for i in 0..kr.instances as u64 {
                let a = gauss(kr.rows_a, kr.cols, 3 * i);
                let b = gauss(kr.rows_b, kr.cols, 3 * i + 1);
                let r = khatri_rao_norm_check(&a, &b)?;
                rows.push(ConcRow {
                    experiment: "khatri-rao".into(),
                    params: format!("instance={i};a={}x{};b={}x{}", kr.rows_a, kr.cols, kr.rows_b, kr.cols),
                    empirical: r.lhs,
                    bound: r.rhs,
                    pass: r.holds,
                });
                let psd: Vec<DMatrix<f64>> = (0..3)
                    .map(|j| {
                        let g = gauss(kr.rows_a, kr.rows_a, 1000 + 3 * i + j);
                        &g * g.transpose()
                    })
                    .collect();
                let bs: Vec<DMatrix<f64>> = (0..3).map(|j| gauss(kr.rows_b, kr.rows_b, 2000 + 3 * i + j)).collect();
                let r = psd_tensor_sum_check(&psd, &bs)?;
                rows.push(ConcRow {
                    experiment: "psd-tensor-sum".into(),
                    params: format!("instance={i};terms=3"),
                    empirical: r.lhs,
                    bound: r.rhs,
                    pass: r.holds,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonidentConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub samples: usize,
    pub triple_rate: f64,
    pub test: TestParams,
    pub seeds: Vec<u64>,
}

impl Default for NonidentConfig {
    fn default() -> Self {
        let (n, m, k) = (16, 16, 3);
        let mut test = TestParams::desk_default(1.0, k, m, 1.0);
        test.eta = 0.05;
        Self {
            n,
            m,
            k,
            samples: 20_000,
            triple_rate: 0.02,
            test,
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonidentTrial {
    pub seed: u64,
    /// Sum of squared distances between the two blocks, best signed matching.
    pub block_distance: f64,
    /// Largest `|y - B x'|` after mapping every code through the bijection.
    pub transport_error: f64,
    pub transported_codes_valid: bool,
    /// Largest empirical triple marginal inside the block.
    pub max_block_triple: f64,
    pub pair_only: TestOutcome,
    pub with_triples: TestOutcome,
    pub pass: bool,
}

/// Draws pair-only data from `A`, maps it to `B`, and runs the Rademacher
/// test on `B_1` with and without injected block triples.
pub fn nonident_demo(cfg: &NonidentConfig) -> Result<Vec<NonidentTrial>> {
    cfg.test.validate()?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let pair = gen_nonidentifiable_pair(cfg.n, cfg.m, cfg.k, seed)?;
            let spec = |support: SupportModel, s: u64| SemirandomSpec {
                support_adversarial: support.clone(),
                support_random: support,
                beta: 1.0,
                value: ValueModel::Rademacher,
                n_samples: cfg.samples,
                seed: s,
                noise_std: 0.0,
            };
            let data_seed = derive_seed(seed, 1);
            let batch = sample_batch(&pair.a, &spec(pair.support_a.clone(), data_seed))?;
            let moved = pair.transport_batch(&batch)?;
            let mut transport_error = 0.0f64;
            let mut valid = true;
            for (j, code) in moved.codes()?.iter().enumerate() {
                valid &= code.check(cfg.k, 1.0);
                let y = pair.b.apply(&code.support, &code.values);
                let err = y.iter().zip(batch.sample(j)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                transport_error = transport_error.max(err);
            }
            let marg = marginal_estimates(&batch, cfg.m, 3)?;
            let max_block_triple = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
                .iter()
                .map(|t| marg.q(t))
                .fold(0.0f64, f64::max);
            let b1 = pair.b.column(0).to_vec();
            let pair_only = test_column_rad(&b1, &batch, &cfg.test)?;
            let mut tripled = pair.support_a.clone();
            tripled.kind = SupportKind::HadamardPairs {
                block: [0, 1, 2, 3],
                triple_rate: cfg.triple_rate,
            };
            let triple_batch = sample_batch(&pair.a, &spec(tripled, derive_seed(seed, 2)))?;
            let with_triples = test_column_rad(&b1, &triple_batch, &cfg.test)?;
            let pass = transport_error <= 1e-9
                && valid
                && max_block_triple == 0.0
                && pair_only.accepted
                && !with_triples.accepted;
            Ok(NonidentTrial {
                seed,
                block_distance: pair.block_distance(),
                transport_error,
                transported_codes_valid: valid,
                max_block_triple,
                pair_only,
                with_triples,
                pass,
            })
        })
        .collect()
}
