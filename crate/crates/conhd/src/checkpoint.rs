//! Model checkpoints.
//!
//! Single self-describing binary file: an 8-byte magic, a little-endian u64
//! header length, a JSON header (model config, feature/output widths, and
//! the parameter manifest with shapes), then all parameter values as
//! row-major little-endian f64 in manifest order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{ConhdModel, ModelConfig, ModelError};

const MAGIC: &[u8; 8] = b"CONHDCK1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("header error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    feature_width: usize,
    output_width: usize,
    params: Vec<ParamEntry>,
}

pub fn save_checkpoint(model: &ConhdModel, path: &Path) -> Result<(), CheckpointError> {
    let params: Vec<ParamEntry> = model
        .params
        .names()
        .map(|name| {
            let value = model.params.value(name).expect("listed name");
            ParamEntry { name: name.to_string(), rows: value.nrows(), cols: value.ncols() }
        })
        .collect();
    let header = Header {
        model_config: model.config.clone(),
        feature_width: model.feature_width,
        output_width: model.output_width,
        params,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for entry in &header.params {
        let value = model.params.value(&entry.name).expect("listed name");
        for v in value.iter() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ConhdModel, CheckpointError> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    let mut model = ConhdModel::new(
        header.model_config,
        header.feature_width,
        header.output_width,
        0,
    )?;
    let expected: Vec<String> = model.params.names().map(str::to_string).collect();
    let listed: Vec<String> = header.params.iter().map(|p| p.name.clone()).collect();
    {
        let mut sorted = listed.clone();
        sorted.sort();
        if sorted != expected {
            return Err(CheckpointError::Corrupt(
                "parameter manifest does not match the model configuration".into(),
            ));
        }
    }
    for entry in &header.params {
        let count = entry.rows * entry.cols;
        let mut bytes = vec![0u8; count * 8];
        file.read_exact(&mut bytes).map_err(|_| {
            CheckpointError::Corrupt(format!("truncated data for parameter {:?}", entry.name))
        })?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let array = Array2::from_shape_vec((entry.rows, entry.cols), values)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        model.params.set(&entry.name, array)?;
    }
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{MethodForm, ModelConfig, OperatorKind};
    use tempfile::tempdir;

    fn sample_model() -> ConhdModel {
        let cfg = ModelConfig {
            operator: OperatorKind::Isab,
            d: 8,
            layers: 2,
            heads: 2,
            inducing_points: 3,
            method: MethodForm::Admm,
            share_weights: false,
            ..ModelConfig::default()
        };
        ConhdModel::new(cfg, 5, 3, 42).unwrap()
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly() {
        let model = sample_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config, model.config);
        assert_eq!(back.feature_width, 5);
        assert_eq!(back.output_width, 3);
        for name in model.params.names() {
            assert_eq!(back.params.value(name).unwrap(), model.params.value(name).unwrap());
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let model = sample_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Corrupt(_))));
    }
}
