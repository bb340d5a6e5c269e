//! Seeded dataset synthesis and its on-disk layout.
//!
//! A dataset directory holds a JSON `manifest` plus raw little-endian `f64`
//! arrays, each a row-major `[count × N]` block: `clean.f64`, `folded.f64`,
//! `corrupted.f64`, and depending on the corruption `snr_db.f64` (`[count]`)
//! or `strong.f64` / `weak.f64`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::signals::{
    add_awgn, fold, generate_bandlimited_with, generate_two_band_with, jittered_snr_within, quantize_uniform,
    Corruption, FoldedObservation, FoldingConfig, SamplingGrid, SignalShape, TwoBandConfig,
};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DatasetKind {
    /// Single-band signals; AWGN at a per-signal SNR drawn from
    /// `nominal ± jitter` dB is added after folding.
    Awgn { nominal_snr_db: f64, jitter_db: f64 },
    /// Weak–strong composites quantized with `bits` over `[−λ, λ]` after folding.
    TwoBand { config: TwoBandConfig, bits: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub grid: SamplingGrid,
    pub lambda: f64,
    pub kind: DatasetKind,
    pub shape: SignalShape,
    pub count: usize,
    pub root_seed: u64,
    /// Separates train / validation / test draws from the same root seed.
    pub split: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub clean: Array2<f64>,
    pub folded: Array2<f64>,
    pub corrupted: Array2<f64>,
    /// Realized SNR per row (AWGN datasets).
    pub snr_db: Option<Array1<f64>>,
    /// Scaled components (two-band datasets).
    pub strong: Option<Array2<f64>>,
    pub weak: Option<Array2<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn folding(&self) -> FoldingConfig {
        FoldingConfig { lambda: self.spec.lambda }
    }

    /// Corruption descriptor of row `i`.
    pub fn corruption(&self, i: usize) -> Corruption {
        match self.spec.kind {
            DatasetKind::Awgn { .. } => Corruption::Awgn {
                snr_db: self.snr_db.as_ref().map_or(f64::INFINITY, |s| s[i]),
            },
            DatasetKind::TwoBand { bits, .. } => Corruption::Quantized {
                bits,
                range_half_width: self.spec.lambda,
            },
        }
    }

    pub fn observation(&self, i: usize) -> FoldedObservation {
        FoldedObservation {
            samples: self.corrupted.row(i).to_vec(),
            folding: self.folding(),
            corruption: self.corruption(i),
            grid: self.spec.grid,
        }
    }

    pub fn clean_row(&self, i: usize) -> Vec<f64> {
        self.clean.row(i).to_vec()
    }
}

/// Seed of row `i`'s draw from `tag`.
pub fn row_seed(spec: &DatasetSpec, tag: u64, i: usize) -> u64 {
    seed::derive(spec.root_seed, &[spec.split, tag, i as u64])
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    let folding = FoldingConfig::new(spec.lambda)?;
    let n = spec.grid.n_samples;
    let mut clean = Array2::zeros((spec.count, n));
    let mut folded = Array2::zeros((spec.count, n));
    let mut corrupted = Array2::zeros((spec.count, n));
    let mut snr = Vec::new();
    let mut strong = Array2::zeros((0, n));
    let mut weak = Array2::zeros((0, n));
    if let DatasetKind::TwoBand { .. } = spec.kind {
        strong = Array2::zeros((spec.count, n));
        weak = Array2::zeros((spec.count, n));
    }
    for i in 0..spec.count {
        let signal_seed = row_seed(spec, stream::SIGNAL, i);
        let (x, f, y) = match spec.kind {
            DatasetKind::Awgn {
                nominal_snr_db,
                jitter_db,
            } => {
                let x = generate_bandlimited_with(&spec.grid, &spec.shape, signal_seed)?.samples;
                let f = fold(&x, &folding)?;
                let s = jittered_snr_within(nominal_snr_db, jitter_db, row_seed(spec, stream::SNR_JITTER, i));
                snr.push(s);
                let y = add_awgn(&f, s, row_seed(spec, stream::NOISE, i))?;
                (x, f, y)
            }
            DatasetKind::TwoBand { config, bits } => {
                let (c, hi, lo) = generate_two_band_with(&spec.grid, &config, &spec.shape, signal_seed)?;
                strong.row_mut(i).assign(&Array1::from(hi.samples));
                weak.row_mut(i).assign(&Array1::from(lo.samples));
                let f = fold(&c.samples, &folding)?;
                let y = quantize_uniform(&f, bits, spec.lambda)?;
                (c.samples, f, y)
            }
        };
        clean.row_mut(i).assign(&Array1::from(x));
        folded.row_mut(i).assign(&Array1::from(f));
        corrupted.row_mut(i).assign(&Array1::from(y));
    }
    let two_band = matches!(spec.kind, DatasetKind::TwoBand { .. });
    Ok(Dataset {
        spec: *spec,
        clean,
        folded,
        corrupted,
        snr_db: (!two_band).then(|| Array1::from(snr)),
        strong: two_band.then_some(strong),
        weak: two_band.then_some(weak),
    })
}

fn file_list(ds: &Dataset) -> Vec<(&'static str, Vec<f64>)> {
    let flat = |a: &Array2<f64>| a.iter().copied().collect::<Vec<_>>();
    let mut files = vec![
        ("clean.f64", flat(&ds.clean)),
        ("folded.f64", flat(&ds.folded)),
        ("corrupted.f64", flat(&ds.corrupted)),
    ];
    if let Some(s) = &ds.snr_db {
        files.push(("snr_db.f64", s.to_vec()));
    }
    if let Some(s) = &ds.strong {
        files.push(("strong.f64", flat(s)));
    }
    if let Some(w) = &ds.weak {
        files.push(("weak.f64", flat(w)));
    }
    files
}

pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = file_list(ds);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: ds.spec,
        files: files.iter().map(|(name, _)| name.to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    let path = dir.join("manifest");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    for (name, values) in files {
        let path = dir.join(name);
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join("manifest");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::CorruptDataset {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::CorruptDataset {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

fn read_block(path: PathBuf, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::CorruptDataset {
            reason: format!("expected {} bytes, found {}", rows * cols * 8, bytes.len()),
            path,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let spec = manifest.spec;
    let (rows, n) = (spec.count, spec.grid.n_samples);
    let matrix = |name: &str| -> Result<Array2<f64>> {
        let data = read_block(dir.join(name), rows, n)?;
        Array2::from_shape_vec((rows, n), data).map_err(|e| Error::Shape(e.to_string()))
    };
    let has = |name: &str| manifest.files.iter().any(|f| f == name);
    Ok(Dataset {
        spec,
        clean: matrix("clean.f64")?,
        folded: matrix("folded.f64")?,
        corrupted: matrix("corrupted.f64")?,
        snr_db: if has("snr_db.f64") {
            Some(Array1::from(read_block(dir.join("snr_db.f64"), rows, 1)?))
        } else {
            None
        },
        strong: if has("strong.f64") { Some(matrix("strong.f64")?) } else { None },
        weak: if has("weak.f64") { Some(matrix("weak.f64")?) } else { None },
    })
}
