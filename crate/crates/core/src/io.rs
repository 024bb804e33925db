//! On-disk formats: DLM1 matrices, batch directories, CSV reports.
//!
//! A DLM1 file is the 8-byte magic `DLMATRX1`, then rows and cols as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dictionary, Provenance, SampleBatch, SemirandomSpec, SparseCode, SupportModel, ValueModel};
use crate::recovery::IterationRecord;

pub const DLM1_MAGIC: &[u8; 8] = b"DLMATRX1";

pub fn write_dlm1(path: &Path, mat: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DLM1_MAGIC)?;
    w.write_all(&(mat.nrows() as u64).to_le_bytes())?;
    w.write_all(&(mat.ncols() as u64).to_le_bytes())?;
    for r in 0..mat.nrows() {
        for c in 0..mat.ncols() {
            w.write_all(&mat[(r, c)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dlm1(path: &Path) -> Result<DMatrix<f64>> {
    let bad = |msg: String| Error::Format {
        what: "DLM1",
        path: path.to_path_buf(),
        msg,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(|_| bad("truncated header".into()))?;
    if &head[..8] != DLM1_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad(format!("size {rows}x{cols} overflows")))?;
    let expected = fs::metadata(path)?.len().saturating_sub(24);
    if expected != count {
        return Err(bad(format!("{rows}x{cols} needs {count} payload bytes, found {expected}")));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut bytes = Vec::with_capacity(count as usize);
    r.read_to_end(&mut bytes)?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Vectors as the columns of an `n x len` matrix.
pub fn vectors_to_matrix(dim: usize, vectors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("vector length does not match dimension"));
    }
    let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
    Ok(DMatrix::from_vec(dim, vectors.len(), flat))
}

pub fn matrix_to_vectors(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat.column_iter().map(|c| c.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportModels {
    pub random: SupportModel,
    pub adversarial: SupportModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFiles {
    pub dictionary: Option<String>,
    /// `n x N`, one sample per column.
    pub samples: String,
    pub supports: Option<String>,
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub seed: u64,
    pub value_model: ValueModel,
    pub support_models: SupportModels,
    pub files: BatchFiles,
    #[serde(default)]
    pub noise_std: f64,
}

impl BatchManifest {
    pub fn from_spec(n: usize, spec: &SemirandomSpec) -> Self {
        Self {
            n,
            m: spec.support_random.m,
            k: spec.support_random.k,
            beta: spec.beta,
            n_samples: spec.n_samples,
            seed: spec.seed,
            value_model: spec.value.clone(),
            support_models: SupportModels {
                random: spec.support_random.clone(),
                adversarial: spec.support_adversarial.clone(),
            },
            files: BatchFiles {
                dictionary: Some("dictionary.dlm".into()),
                samples: "samples.dlm".into(),
                supports: Some("supports.csv".into()),
                provenance: Some("provenance.csv".into()),
            },
            noise_std: spec.noise_std,
        }
    }

    pub fn spec(&self) -> SemirandomSpec {
        SemirandomSpec {
            support_random: self.support_models.random.clone(),
            support_adversarial: self.support_models.adversarial.clone(),
            beta: self.beta,
            value: self.value_model.clone(),
            n_samples: self.n_samples,
            seed: self.seed,
            noise_std: self.noise_std,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct SupportRow {
    sample_id: usize,
    index: usize,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceRow {
    sample_id: usize,
    provenance: Provenance,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes a batch directory; codes and provenance are written when present.
pub fn write_batch_dir(dir: &Path, manifest: &BatchManifest, dictionary: Option<&Dictionary>, batch: &SampleBatch) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = manifest.clone();
    manifest.n_samples = batch.len();
    if batch.codes.is_none() {
        manifest.files.supports = None;
    }
    if batch.provenance.is_none() {
        manifest.files.provenance = None;
    }
    match (dictionary, &manifest.files.dictionary) {
        (Some(a), Some(name)) => write_dlm1(&dir.join(name), a.columns())?,
        _ => manifest.files.dictionary = None,
    }
    write_dlm1(&dir.join(&manifest.files.samples), batch.matrix())?;
    if let (Some(codes), Some(name)) = (&batch.codes, &manifest.files.supports) {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        for (sample_id, code) in codes.iter().enumerate() {
            for (&index, &value) in code.support.iter().zip(&code.values) {
                w.serialize(SupportRow { sample_id, index, value })?;
            }
        }
        w.flush()?;
    }
    if let (Some(prov), Some(name)) = (&batch.provenance, &manifest.files.provenance) {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        for (sample_id, &provenance) in prov.iter().enumerate() {
            w.serialize(ProvenanceRow { sample_id, provenance })?;
        }
        w.flush()?;
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

#[derive(Debug, Clone)]
pub struct BatchDir {
    pub manifest: BatchManifest,
    pub dictionary: Option<Dictionary>,
    pub batch: SampleBatch,
}

pub fn read_batch_dir(dir: &Path) -> Result<BatchDir> {
    let manifest: BatchManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let format = |what, path: PathBuf, msg: String| Error::Format { what, path, msg };
    let samples_path = dir.join(&manifest.files.samples);
    let samples = read_dlm1(&samples_path)?;
    if samples.nrows() != manifest.n || samples.ncols() != manifest.n_samples {
        return Err(format(
            "samples",
            samples_path,
            format!("shape {}x{} disagrees with manifest {}x{}", samples.nrows(), samples.ncols(), manifest.n, manifest.n_samples),
        ));
    }
    let dictionary = match &manifest.files.dictionary {
        Some(name) => Some(Dictionary::new(read_dlm1(&dir.join(name))?)?),
        None => None,
    };
    let codes = match &manifest.files.supports {
        Some(name) => {
            let path = dir.join(name);
            let mut raw: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); manifest.n_samples];
            for row in csv::Reader::from_path(&path)?.deserialize() {
                let row: SupportRow = row?;
                let slot = raw
                    .get_mut(row.sample_id)
                    .ok_or_else(|| format("supports", path.clone(), format!("sample_id {} out of range", row.sample_id)))?;
                slot.0.push(row.index);
                slot.1.push(row.value);
            }
            let codes = raw
                .into_iter()
                .map(|(s, v)| SparseCode::new(s, v))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| format("supports", path.clone(), e.to_string()))?;
            Some(codes)
        }
        None => None,
    };
    let provenance = match &manifest.files.provenance {
        Some(name) => {
            let path = dir.join(name);
            let mut prov = vec![None; manifest.n_samples];
            for row in csv::Reader::from_path(&path)?.deserialize() {
                let row: ProvenanceRow = row?;
                *prov
                    .get_mut(row.sample_id)
                    .ok_or_else(|| format("provenance", path.clone(), format!("sample_id {} out of range", row.sample_id)))? =
                    Some(row.provenance);
            }
            let prov: Option<Vec<Provenance>> = prov.into_iter().collect();
            Some(prov.ok_or_else(|| format("provenance", path, "missing rows".into()))?)
        }
        None => None,
    };
    let batch = SampleBatch::new(samples, codes, provenance)?;
    Ok(BatchDir { manifest, dictionary, batch })
}

#[derive(Debug, Serialize)]
struct IterationRow {
    iteration: usize,
    lp_status: String,
    new_columns: usize,
    max_error: Option<f64>,
}

pub fn write_iteration_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        let lp_status = serde_json::to_value(r.lp_status)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        w.serialize(IterationRow {
            iteration: r.iteration,
            lp_status,
            new_columns: r.new_columns,
            max_error: r.max_error,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a concentration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcRow {
    pub experiment: String,
    pub params: String,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn write_conc_csv<W: Write>(out: W, rows: &[ConcRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_dictionary, sample_batch, DictionaryKind, SupportKind};

    #[test]
    fn dlm1_layout_is_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dlm");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        write_dlm1(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"DLMATRX1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 2.0);
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(read_dlm1(&p).unwrap(), m);
    }

    #[test]
    fn dlm1_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.dlm");
        fs::write(&p, b"DLMATRX2aaaaaaaabbbbbbbb").unwrap();
        assert!(matches!(read_dlm1(&p), Err(Error::Format { .. })));
        let mut ok = Vec::from(*DLM1_MAGIC);
        ok.extend(2u64.to_le_bytes());
        ok.extend(2u64.to_le_bytes());
        ok.extend(1.0f64.to_le_bytes());
        fs::write(&p, ok).unwrap();
        assert!(matches!(read_dlm1(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn batch_dir_round_trip() {
        let a = gen_dictionary(6, 10, DictionaryKind::GaussianNormalized, 5).unwrap();
        let spec = SemirandomSpec {
            support_random: SupportModel::uniform(10, 3),
            support_adversarial: SupportModel {
                kind: SupportKind::FixedBlocks { blocks: vec![vec![0, 1, 2, 3]] },
                m: 10,
                k: 3,
                tau: 1.0,
            },
            beta: 0.5,
            value: ValueModel::Rademacher,
            n_samples: 57,
            seed: 9,
            noise_std: 0.0,
        };
        let batch = sample_batch(&a, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = BatchManifest::from_spec(6, &spec);
        write_batch_dir(dir.path(), &manifest, Some(&a), &batch).unwrap();
        let back = read_batch_dir(dir.path()).unwrap();
        assert_eq!(back.batch, batch);
        assert_eq!(back.dictionary.unwrap().columns(), a.columns());
        assert_eq!(back.manifest.spec(), spec);
    }
}
