use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use semirandom_dl::candidates::{recover_columns, CandidateConfig, TupleKind, TupleStrategy, GREEDY_POOL_LIMIT};
use semirandom_dl::column_test::{test_column, test_column_rad, TestParams};
use semirandom_dl::harness::{
    conc_bench, match_columns, nonident_demo, run_experiment, BenchExperiment, ConcBenchConfig, DictionaryParams,
    ExperimentConfig, NonidentConfig,
};
use semirandom_dl::io::{
    matrix_to_vectors, read_batch_dir, read_dlm1, read_json, vectors_to_matrix, write_batch_dir, write_conc_csv,
    write_dlm1, write_json, BatchDir, BatchManifest,
};
use semirandom_dl::linalg::normalize;
use semirandom_dl::model::{
    gen_dictionary, sample_batch, BatchSource, Dictionary, DictionaryKind, SemirandomSpec, SupportKind, SupportModel,
    ValueModel,
};

/// Dictionary learning under semirandom sparse-coding models.
///
/// Exit status is 0 when every threshold of the command is met, 2 when the
/// run completed but some threshold was missed, 1 on errors.
#[derive(Parser)]
#[command(name = "sdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dictionary and a semirandom batch directory.
    Gen(GenArgs),
    /// Run the column test on one candidate vector.
    Test(TestArgs),
    /// Propose tuples, build statistics and keep the vectors that pass the test.
    Candidates(CandidateArgs),
    /// Run full recovery trials from an experiment config.
    Recover(RecoverArgs),
    /// Print a ready-made experiment config.
    PrintConfig(PrintConfigArgs),
    /// Monte-Carlo and exact checks of the concentration facts.
    ConcBench(ConcArgs),
    /// Two dictionaries with the same sample law, and what the test sees.
    NonidentDemo(NonidentArgs),
    /// Match recovered vectors to dictionary columns.
    Match(MatchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AdvKind {
    Uniform,
    IidBernoulli,
    FixedBlocks,
    PlantedCooccurrence,
    HadamardPairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictKind {
    GaussianNormalized,
    OrthonormalSubset,
    HadamardPairBase,
}

impl From<DictKind> for DictionaryKind {
    fn from(k: DictKind) -> Self {
        match k {
            DictKind::GaussianNormalized => DictionaryKind::GaussianNormalized,
            DictKind::OrthonormalSubset => DictionaryKind::OrthonormalSubset,
            DictKind::HadamardPairBase => DictionaryKind::HadamardPairBase,
        }
    }
}

/// Generation parameters as stored in a `--config` file.
#[derive(Serialize, Deserialize)]
struct GenConfig {
    dictionary: DictionaryParams,
    model: SemirandomSpec,
}

#[derive(clap::Args)]
struct GenArgs {
    /// JSON with `dictionary` and `model`; replaces the model flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long = "N", default_value_t = 200_000)]
    samples: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    support_adv: AdvKind,
    /// Block size flooded by fixed-blocks (indices 0..flood); 0 lets the
    /// adversary pick the most frequent indices.
    #[arg(long, default_value_t = 10)]
    flood: usize,
    /// Triple rate for hadamard-pairs.
    #[arg(long, default_value_t = 0.0)]
    triple_rate: f64,
    /// `rademacher` or `uniform:<C>`.
    #[arg(long, default_value = "rademacher")]
    values: String,
    #[arg(long, value_enum, default_value = "gaussian-normalized")]
    dict_kind: DictKind,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_values(s: &str) -> Result<ValueModel> {
    if s == "rademacher" {
        return Ok(ValueModel::Rademacher);
    }
    if let Some(c) = s.strip_prefix("uniform:") {
        return Ok(ValueModel::UniformSpikeSlab { c: c.parse().context("bad C in --values")? });
    }
    bail!("unknown value law {s:?}; use rademacher or uniform:<C>")
}

fn adversary(args: &GenArgs) -> SupportKind {
    match args.support_adv {
        AdvKind::Uniform => SupportKind::UniformKSparse,
        AdvKind::IidBernoulli => SupportKind::IidBernoulli,
        AdvKind::FixedBlocks => SupportKind::FixedBlocks {
            blocks: if args.flood == 0 { vec![] } else { vec![(0..args.flood).collect()] },
        },
        AdvKind::PlantedCooccurrence => SupportKind::PlantedCooccurrence { pairs: vec![] },
        AdvKind::HadamardPairs => SupportKind::HadamardPairs {
            block: [0, 1, 2, 3],
            triple_rate: args.triple_rate,
        },
    }
}

fn gen(args: GenArgs) -> Result<bool> {
    let cfg = match &args.config {
        Some(p) => read_json::<GenConfig>(p).with_context(|| format!("reading {}", p.display()))?,
        None => GenConfig {
            dictionary: DictionaryParams {
                n: args.n,
                m: args.m,
                kind: args.dict_kind.into(),
                seed: Some(args.seed),
            },
            model: SemirandomSpec {
                support_random: SupportModel::uniform(args.m, args.k),
                support_adversarial: SupportModel {
                    kind: adversary(&args),
                    m: args.m,
                    k: args.k,
                    tau: 1.0,
                },
                beta: args.beta,
                value: parse_values(&args.values)?,
                n_samples: args.samples,
                seed: args.seed,
                noise_std: args.noise,
            },
        },
    };
    let d = &cfg.dictionary;
    let a = gen_dictionary(d.n, d.m, d.kind, d.seed.unwrap_or(cfg.model.seed))?;
    let batch = sample_batch(&a, &cfg.model)?;
    write_batch_dir(&args.out, &BatchManifest::from_spec(d.n, &cfg.model), Some(&a), &batch)?;
    eprintln!("wrote {} samples of dimension {} to {}", batch.len(), batch.dim(), args.out.display());
    Ok(true)
}

fn load_batch(dir: &Path, dict: Option<&Path>) -> Result<(BatchDir, Option<Dictionary>)> {
    let bd = read_batch_dir(dir).with_context(|| format!("reading batch {}", dir.display()))?;
    let a = match dict {
        Some(p) => Some(Dictionary::new(read_dlm1(p)?).context("dictionary columns must be unit norm")?),
        None => bd.dictionary.clone(),
    };
    Ok((bd, a))
}

/// Test thresholds: desk defaults for the batch, overridden by any flag.
#[derive(clap::Args)]
struct ThresholdArgs {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    kappa0: Option<f64>,
    #[arg(long)]
    kappa1: Option<f64>,
}

impl ThresholdArgs {
    fn params(&self, m: &BatchManifest) -> TestParams {
        let mut p = TestParams::desk_default(m.beta, m.k, m.m, m.value_model.c());
        if let Some(v) = self.eta {
            p.eta = v;
        }
        if let Some(v) = self.kappa0 {
            p.kappa0 = v;
        }
        if let Some(v) = self.kappa1 {
            p.kappa1 = v;
        }
        p
    }
}

#[derive(clap::Args)]
struct TestArgs {
    /// DLM1 dictionary; defaults to the one stored with the batch.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    batch: PathBuf,
    /// A DLM1 vector file, or a zero-based column index of the dictionary.
    #[arg(long)]
    z: String,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Use the Rademacher variant.
    #[arg(long)]
    rad: bool,
}

fn test(args: TestArgs) -> Result<bool> {
    let (bd, a) = load_batch(&args.batch, args.dict.as_deref())?;
    let z = match args.z.parse::<usize>() {
        Ok(i) => {
            let a = a.context("a column index needs a dictionary")?;
            if i >= a.m() {
                bail!("column {i} out of range for {} columns", a.m());
            }
            a.column(i).to_vec()
        }
        Err(_) => {
            let mut v = read_dlm1(Path::new(&args.z))?.as_slice().to_vec();
            if normalize(&mut v) == 0.0 {
                bail!("candidate vector is zero");
            }
            v
        }
    };
    let params = args.thresholds.params(&bd.manifest);
    let out = if args.rad {
        test_column_rad(&z, &bd.batch, &params)?
    } else {
        test_column(&z, &bd.batch, &params)?
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(out.accepted)
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Exhaustive,
    Oracle,
    Greedy,
    Random,
}

#[derive(clap::Args)]
struct CandidateArgs {
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    batch: PathBuf,
    #[arg(long = "L", default_value_t = 8)]
    l: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    strategy: Strategy,
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    /// Anchor pool size; default min(20000, N/4).
    #[arg(long)]
    pool: Option<usize>,
    /// Statistic batch size; default min(100000, N/2).
    #[arg(long)]
    t1: Option<usize>,
    /// Test batch size; default min(50000, what is left).
    #[arg(long)]
    test_size: Option<usize>,
    /// Draw a fresh test block per candidate instead of sharing one.
    #[arg(long)]
    fresh_tests: bool,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn candidates(args: CandidateArgs) -> Result<bool> {
    let (bd, a) = load_batch(&args.batch, args.dict.as_deref())?;
    let total = bd.batch.len();
    let pool = args.pool.unwrap_or((total / 4).min(20_000));
    let t1 = args.t1.unwrap_or((total / 2).min(100_000));
    if pool + t1 >= total {
        bail!("pool ({pool}) + statistic batch ({t1}) leave no samples for testing out of {total}");
    }
    let test_size = args.test_size.unwrap_or((total - pool - t1).min(50_000));
    let kind = match args.strategy {
        Strategy::Exhaustive => TupleKind::Exhaustive,
        Strategy::Oracle => TupleKind::OraclePlanted,
        Strategy::Greedy => TupleKind::CorrelationGreedy,
        Strategy::Random => TupleKind::Random,
    };
    if kind == TupleKind::CorrelationGreedy && pool > GREEDY_POOL_LIMIT {
        bail!("greedy strategy keeps the pool Gram in memory; pool must be <= {GREEDY_POOL_LIMIT}");
    }
    let config = CandidateConfig {
        strategy: TupleStrategy {
            kind,
            budget: args.budget,
            l: args.l,
            anchor_pool_size: pool,
            min_pairwise: 0.8,
        },
        test: args.thresholds.params(&bd.manifest),
        dedup_angle: 0.1,
        test_batch_size: test_size,
        test_first_block: 1024.min(test_size),
        reuse_test_batch: !args.fresh_tests,
        seed: args.seed,
    };
    let anchors = bd.batch.select(&(0..pool).collect::<Vec<_>>());
    let stat = bd.batch.select(&(pool..pool + t1).collect::<Vec<_>>());
    let rest = bd.batch.select(&(pool + t1..total).collect::<Vec<_>>());
    let mut source = BatchSource::new(rest, bd.manifest.beta, bd.manifest.value_model.clone());
    let set = recover_columns(&mut source, Some(&anchors), &stat, &config)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("candidates.json"), &set)?;
    write_json(&args.out.join("candidate_config.json"), &config)?;
    write_dlm1(&args.out.join("accepted.dlm"), &vectors_to_matrix(bd.manifest.n, &set.vectors)?)?;
    if let Some(a) = &a {
        let report = match_columns(a, &set.vectors, args.tolerance)?;
        write_json(&args.out.join("match_report.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&set.diagnostics)?);
    Ok(!set.vectors.is_empty())
}

#[derive(clap::Args)]
struct RecoverArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation: skip the reweighting LP and use uniform weights.
    #[arg(long)]
    no_lp: bool,
}

fn recover(args: RecoverArgs) -> Result<bool> {
    let mut cfg: ExperimentConfig = read_json(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(out) = args.out {
        cfg.outputs = out;
    }
    if args.no_lp {
        cfg.algorithm.use_lp = false;
    }
    let (summary, outcomes) = run_experiment(&cfg)?;
    // the recovery result and matrix sit at the top of the output directory too
    if let Some(first) = outcomes.first() {
        write_json(&cfg.outputs.join("recovery_result.json"), &first.result)?;
        write_dlm1(
            &cfg.outputs.join("recovered.dlm"),
            &vectors_to_matrix(cfg.dictionary.n, &first.result.recovered)?,
        )?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.all_pass())
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Random supports only.
    Random,
    /// beta = 0.1, the rest flooding columns 0..10.
    Flood,
}

#[derive(clap::Args)]
struct PrintConfigArgs {
    #[arg(long, value_enum, default_value = "random")]
    preset: Preset,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, default_value = "runs/desk")]
    outputs: PathBuf,
}

fn print_config(args: PrintConfigArgs) -> Result<bool> {
    let trials = (0..args.trials).collect();
    let cfg = match args.preset {
        Preset::Random => ExperimentConfig::desk("desk-random", 1.0, SupportKind::UniformKSparse, trials, args.outputs),
        Preset::Flood => ExperimentConfig::desk(
            "desk-flood",
            0.1,
            SupportKind::FixedBlocks { blocks: vec![(0..10).collect()] },
            trials,
            args.outputs,
        ),
    };
    println!("{}", serde_json::to_string_pretty(&cfg)?);
    Ok(true)
}

#[derive(Clone, Copy, ValueEnum)]
enum ConcExperiment {
    Tail,
    Subtensor,
    Zconc,
    Anticonc,
    KhatriRao,
}

#[derive(clap::Args)]
struct ConcArgs {
    #[arg(long, value_enum)]
    experiment: ConcExperiment,
    /// JSON bench config; missing fields take the standard grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn conc(args: ConcArgs) -> Result<bool> {
    let cfg: ConcBenchConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ConcBenchConfig::default(),
    };
    let exp = match args.experiment {
        ConcExperiment::Tail => BenchExperiment::Tail,
        ConcExperiment::Subtensor => BenchExperiment::Subtensor,
        ConcExperiment::Zconc => BenchExperiment::Zconc,
        ConcExperiment::Anticonc => BenchExperiment::Anticonc,
        ConcExperiment::KhatriRao => BenchExperiment::KhatriRao,
    };
    let rows = conc_bench(exp, &cfg)?;
    match &args.out {
        Some(p) => write_conc_csv(fs::File::create(p)?, &rows)?,
        None => write_conc_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(rows.iter().all(|r| r.pass))
}

#[derive(clap::Args)]
struct NonidentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the per-seed JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds that must pass.
    #[arg(long, default_value_t = 9)]
    min_pass: usize,
}

fn nonident(args: NonidentArgs) -> Result<bool> {
    let cfg: NonidentConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => NonidentConfig::default(),
    };
    let trials = nonident_demo(&cfg)?;
    match &args.out {
        Some(p) => write_json(p, &trials)?,
        None => println!("{}", serde_json::to_string_pretty(&trials)?),
    }
    let passed = trials.iter().filter(|t| t.pass).count();
    eprintln!("{passed}/{} seeds behave as described", trials.len());
    Ok(passed >= args.min_pass)
}

#[derive(clap::Args)]
struct MatchArgs {
    #[arg(long)]
    dict: PathBuf,
    /// DLM1 matrix whose columns are the recovered vectors.
    #[arg(long)]
    recovered: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn matching(args: MatchArgs) -> Result<bool> {
    let a = Dictionary::new(read_dlm1(&args.dict)?)?;
    let w = matrix_to_vectors(&read_dlm1(&args.recovered)?);
    let report = match_columns(&a, &w, args.tolerance)?;
    match &args.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report.passes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Test(a) => test(a),
        Command::Candidates(a) => candidates(a),
        Command::Recover(a) => recover(a),
        Command::PrintConfig(a) => print_config(a),
        Command::ConcBench(a) => conc(a),
        Command::NonidentDemo(a) => nonident(a),
        Command::Match(a) => matching(a),
    };
    let _ = std::io::stdout().flush();
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
