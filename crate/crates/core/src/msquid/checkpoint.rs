//! Checkpoint format: one JSON header line, then raw little-endian `f64`
//! blocks in [`MsquidModel::flatten`] order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{MsquidLayer, MsquidModel};
use super::sq::SqConfig;
use crate::error::{Error, Result};
use crate::spectral::OutOfBandSet;

const FORMAT: &str = "msquid-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    n: usize,
    m: usize,
    rho: f64,
    band_indices: Vec<usize>,
    layers: usize,
    lambda: f64,
    levels: usize,
    ell: usize,
    shift_offset: f64,
    sq_enabled: Vec<bool>,
}

pub fn save_model(model: &MsquidModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        n: model.n(),
        m: model.m(),
        rho: model.band.rho(),
        band_indices: model.band.indices().to_vec(),
        layers: model.layers.len(),
        lambda: model.sq.lambda,
        levels: model.sq.levels(),
        ell: model.sq.ell,
        shift_offset: model.sq.shift_offset,
        sq_enabled: model.layers.iter().map(|l| l.sq_enabled).collect(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    bytes.push(b'\n');
    for v in model.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MsquidModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..split]).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(corrupt(format!(
            "unsupported format {:?} version {}",
            header.format, header.version
        )));
    }
    if header.levels != 2 * header.ell + 1 || header.sq_enabled.len() != header.layers || header.layers == 0 {
        return Err(corrupt("inconsistent header fields".into()));
    }
    let band = OutOfBandSet::from_parts(header.n, header.rho, header.band_indices)
        .map_err(|e| corrupt(e.to_string()))?;
    if band.m() != header.m {
        return Err(corrupt(format!("header M = {} but band has {} bins", header.m, band.m())));
    }
    let (n, m) = (header.n, header.m);
    let per_layer = n * n + 2 * n * m + 2;
    let payload = &bytes[split + 1..];
    let expected = per_layer * header.layers * 8;
    if payload.len() != expected {
        return Err(corrupt(format!("expected {expected} parameter bytes, found {}", payload.len())));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let sq = SqConfig::new(header.lambda, header.ell)
        .map_err(|e| corrupt(e.to_string()))?
        .with_offset(header.shift_offset);
    let layers = header
        .sq_enabled
        .iter()
        .map(|&sq_enabled| MsquidLayer {
            w1: Array2::zeros((n, n)),
            w2_re: Array2::zeros((n, m)),
            w2_im: Array2::zeros((n, m)),
            gamma: 0.0,
            beta: 1.0,
            sq_enabled,
        })
        .collect();
    let mut model = MsquidModel { layers, sq, band };
    model.assign_flat(&values)?;
    if model.layers.iter().any(|l| !(l.gamma >= 0.0 && l.beta > 0.0)) {
        return Err(corrupt("threshold or steepness out of range".into()));
    }
    Ok(model)
}

/// Loads a checkpoint and checks it was trained for `band`.
pub fn load_model_for(path: impl AsRef<Path>, band: &OutOfBandSet) -> Result<MsquidModel> {
    let model = load_model(path)?;
    if &model.band != band {
        return Err(Error::Shape(format!(
            "checkpoint trained for N = {}, M = {} but the grid has N = {}, M = {}",
            model.n(),
            model.m(),
            band.n(),
            band.m()
        )));
    }
    Ok(model)
}
