//! Experiment configs, column matching and on-disk artifacts.

mod bench;
mod experiment;
mod matching;

pub use bench::{
    bench_tensor, conc_bench, nonident_demo, zconc_weights, AnticoncBench, BenchExperiment, ConcBenchConfig,
    KhatriRaoBench, NonidentConfig, NonidentTrial, TensorFamily,
};
pub use experiment::{
    run_experiment, run_trial, DictionaryParams, ExperimentConfig, ExperimentSummary, TrialOutcome, TrialSummary,
    CONFIG_SNAPSHOT, SUMMARY_FILE,
};
pub use matching::{
    assignment, match_columns, recompute_error, sign_error, ColumnMatch, MatchReport, UnmatchedVector,
    EXACT_MATCH_LIMIT,
};
