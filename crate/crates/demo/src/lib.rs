//! Browser demo: three small experiments callable from JavaScript. Each
//! returns a JSON string; errors become JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use semirandom_dl::column_test::{run_test, weak_anticoncentration_check, AnticoncMode, AnticoncReport, TestOutcome, TestParams, TestVariant};
use semirandom_dl::harness::{bench_tensor, ConcBenchConfig, TensorFamily};
use semirandom_dl::conc::{tail_experiment, ConcBoundParams, ExperimentReport};
use semirandom_dl::model::{gen_dictionary, sample_batch, DictionaryKind, SemirandomSpec, SupportModel, ValueModel};
use semirandom_dl::{Error, Result};

const BINS: usize = 64;
const HIST_MAX: f64 = 1.6;

#[derive(Serialize)]
pub struct ColumnTestView {
    pub outcome: TestOutcome,
    /// Upper edges of the `|<z, y>|` histogram bins.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub spike_band: (f64, f64),
    pub zero_band: (f64, f64),
    /// `|<z, A_1>|` and `|<z, A_2>|`.
    pub overlaps: (f64, f64),
}

/// Orthonormal `m`-column dictionary, `k`-sparse Rademacher codes, and
/// `z = cos(theta) A_1 + sin(theta) A_2` with `theta = mix * pi / 4`.
#[allow(clippy::too_many_arguments)]
pub fn column_test_view(
    m: usize,
    k: usize,
    samples: usize,
    seed: u64,
    mix: f64,
    eta: f64,
    kappa0: f64,
    kappa1: f64,
    rademacher: bool,
) -> Result<ColumnTestView> {
    if m < 2 {
        return Err(Error::InvalidArgument("need at least two columns".into()));
    }
    let a = gen_dictionary(m, m, DictionaryKind::OrthonormalSubset, seed)?;
    let spec = SemirandomSpec {
        support_random: SupportModel::uniform(m, k),
        support_adversarial: SupportModel::uniform(m, k),
        beta: 1.0,
        value: ValueModel::Rademacher,
        n_samples: samples,
        seed,
        noise_std: 0.0,
    };
    let batch = sample_batch(&a, &spec)?;
    let theta = mix.clamp(0.0, 1.0) * std::f64::consts::FRAC_PI_4;
    let z: Vec<f64> = a
        .column(0)
        .iter()
        .zip(a.column(1))
        .map(|(p, q)| theta.cos() * p + theta.sin() * q)
        .collect();
    let params = TestParams {
        eta,
        kappa0,
        kappa1,
        ..TestParams::desk_default(1.0, k, m, 1.0)
    };
    let variant = if rademacher { TestVariant::Rademacher } else { TestVariant::General };
    let outcome = run_test(&z, &batch, &params, variant)?;

    let mut counts = vec![0usize; BINS];
    for j in 0..batch.len() {
        let ip: f64 = z.iter().zip(batch.sample(j)).map(|(p, q)| p * q).sum::<f64>().abs();
        let bin = ((ip / HIST_MAX) * BINS as f64) as usize;
        counts[bin.min(BINS - 1)] += 1;
    }
    let edges = (1..=BINS).map(|b| HIST_MAX * b as f64 / BINS as f64).collect();
    let zero_hi = if rademacher { eta / 32.0 } else { eta };
    let spike_hi = 1.0 + eta;
    Ok(ColumnTestView {
        outcome,
        edges,
        counts,
        spike_band: (1.0 - eta, spike_hi),
        zero_band: (0.0, zero_hi),
        overlaps: (theta.cos(), theta.sin()),
    })
}

/// Exact enumeration over Rademacher signs with `l` equal weights.
pub fn anticoncentration_view(l: usize, t: f64, eta_p: f64, beta: f64) -> Result<AnticoncReport> {
    if l == 0 || l > 20 {
        return Err(Error::InvalidArgument("l must be in 1..=20".into()));
    }
    let a = vec![1.0 / (l as f64).sqrt(); l];
    weak_anticoncentration_check(&a, t, eta_p, beta, &ValueModel::Rademacher, AnticoncMode::Exact, None)
}

#[derive(Serialize)]
pub struct TailView {
    pub report: ExperimentReport,
    pub bound: ConcBoundParams,
}

pub fn tail_view(family: &str, d: usize, m: usize, k: usize, eta: f64, trials: usize, seed: u64) -> Result<TailView> {
    let family = match family {
        "all-ones" => TensorFamily::AllOnes,
        "identity-slice" => TensorFamily::IdentitySlice,
        "gram" => TensorFamily::Gram,
        other => return Err(Error::InvalidArgument(format!("unknown tensor family {other:?}"))),
    };
    if d == 0 || d > 3 {
        return Err(Error::InvalidArgument("order must be 1, 2 or 3".into()));
    }
    let cfg = ConcBenchConfig {
        m,
        k,
        seed,
        gram_n: m.min(32),
        ..Default::default()
    };
    let t = bench_tensor(family, d, &cfg)?;
    let (report, bound) = tail_experiment(&t, &SupportModel::uniform(m, k), &ValueModel::Rademacher, eta, trials, seed)?;
    Ok(TailView { report, bound })
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = columnTest)]
#[allow(clippy::too_many_arguments)]
pub fn column_test_js(
    m: usize,
    k: usize,
    samples: usize,
    seed: u32,
    mix: f64,
    eta: f64,
    kappa0: f64,
    kappa1: f64,
    rademacher: bool,
) -> Result<String, JsError> {
    to_js(column_test_view(m, k, samples, seed as u64, mix, eta, kappa0, kappa1, rademacher))
}

#[wasm_bindgen(js_name = antiConcentration)]
pub fn anticoncentration_js(l: usize, t: f64, eta_p: f64, beta: f64) -> Result<String, JsError> {
    to_js(anticoncentration_view(l, t, eta_p, beta))
}

#[wasm_bindgen(js_name = tailExperiment)]
pub fn tail_js(family: &str, d: usize, m: usize, k: usize, eta: f64, trials: usize, seed: u32) -> Result<String, JsError> {
    to_js(tail_view(family, d, m, k, eta, trials, seed as u64))
}
