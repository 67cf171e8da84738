//! Model checkpoints: a JSON document with the structure and scalars, and a
//! little-endian `f64` blob holding `W⁽¹⁾ … W⁽ⱽ⁾`, `F` and `τ` column-major.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::state::ModelState;
use crate::causal::CausalContext;
use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::params::HyperParams;

pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const CHECKPOINT_BIN: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset in `f64` elements.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Document {
    meta: serde_json::Value,
    params: HyperParams,
    matrices: Vec<MatrixEntry>,
    prototypes: Vec<Vec<usize>>,
    contexts: Vec<Vec<CausalContext>>,
    iteration: usize,
    objective_trace: Vec<f64>,
    converged: bool,
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    state: &ModelState,
    params: &HyperParams,
    meta: serde_json::Value,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob: Vec<u8> = Vec::new();
    let mut matrices = Vec::new();
    let mut offset = 0;
    let tau = Mat::from_column_slice(state.tau.len(), 1, &state.tau);
    let named = state
        .w
        .iter()
        .enumerate()
        .map(|(v, w)| (format!("W{v}"), w))
        .chain([("F".to_string(), &state.f), ("tau".to_string(), &tau)]);
    for (name, m) in named {
        for x in m.iter() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
        matrices.push(MatrixEntry {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
            offset,
        });
        offset += m.len();
    }
    let doc = Document {
        meta,
        params: params.clone(),
        matrices,
        prototypes: state.prototypes.clone(),
        contexts: state.contexts.clone(),
        iteration: state.iteration,
        objective_trace: state.objective_trace.clone(),
        converged: state.converged,
    };
    write_atomic(&dir.join(CHECKPOINT_BIN), &blob)?;
    let json = dir.join(CHECKPOINT_JSON);
    let mut text = serde_json::to_vec_pretty(&doc)?;
    text.push(b'\n');
    write_atomic(&json, &text)?;
    Ok(json)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelState, HyperParams)> {
    let dir = dir.as_ref();
    let json = dir.join(CHECKPOINT_JSON);
    let bin = dir.join(CHECKPOINT_BIN);
    if !json.exists() || !bin.exists() {
        return Err(Error::MissingCheckpoint(dir.to_path_buf()));
    }
    let doc: Document = serde_json::from_slice(&std::fs::read(&json).map_err(|e| Error::io(&json, e))?)?;
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{} has a truncated value", bin.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let take = |name: &str| -> Result<Mat> {
        let entry = doc
            .matrices
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("matrix {name} missing")))?;
        let end = entry.offset + entry.rows * entry.cols;
        if end > values.len() {
            return Err(Error::Checkpoint(format!("matrix {name} extends past the data file")));
        }
        Ok(Mat::from_column_slice(entry.rows, entry.cols, &values[entry.offset..end]))
    };
    let n_views = doc.matrices.iter().filter(|m| m.name.starts_with('W')).count();
    let w = (0..n_views).map(|v| take(&format!("W{v}"))).collect::<Result<Vec<_>>>()?;
    let f = take("F")?;
    let tau = take("tau")?.as_slice().to_vec();
    let state = ModelState {
        w,
        f,
        tau,
        prototypes: doc.prototypes,
        contexts: doc.contexts,
        iteration: doc.iteration,
        objective_trace: doc.objective_trace,
        converged: doc.converged,
    };
    Ok((state, doc.params))
}
