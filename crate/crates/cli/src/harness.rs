//! Experiment cells, dataset caching, training and the comparison runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use msquid_core::dataset::{generate_dataset, read_dataset, read_manifest, row_seed, write_dataset, Dataset, DatasetKind, DatasetSpec};
use msquid_core::msquid::{load_model_for, train_with, TrainingSet};
use msquid_core::recovery::{b2r2_with_operator, lasso_with_operator, operator_for};
use msquid_core::seed::{self, stream};
use msquid_core::{
    add_awgn, band_extract, first_diff, hod_order, hod_recover, init_model, msquid_recover, nmse, partial_spectrum,
    quantize_uniform, save_model, unfold, B2r2Config, Corruption, Error as CoreError, FoldedObservation, FoldingConfig,
    HodConfig, InitConfig, IstaConfig, MsquidModel, OutOfBandSet, PartialDftOperator, ResidualEstimate, SamplingGrid,
    SqConfig, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, Mode};
use crate::error::{HarnessError, Result};
use crate::metrics::{compare, median_runtime, Band, MetricsRecord};

/// Noise level of a cell: an SNR (AWGN mode) or a quantizer resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Snr(f64),
    Bits(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub of: f64,
    pub lambda: f64,
    pub level: Level,
}

impl Cell {
    pub fn awgn(of: f64, lambda: f64, snr_db: f64) -> Self {
        Self {
            of,
            lambda,
            level: Level::Snr(snr_db),
        }
    }

    pub fn two_band(of: f64, lambda: f64, bits: u32) -> Self {
        Self {
            of,
            lambda,
            level: Level::Bits(bits),
        }
    }

    /// File-system friendly identifier, e.g. `of2_lam0.25_snr25`.
    pub fn key(&self) -> String {
        let level = match self.level {
            Level::Snr(s) if s.is_infinite() => "snrinf".to_string(),
            Level::Snr(s) => format!("snr{s}"),
            Level::Bits(b) => format!("bits{b}"),
        };
        format!("of{}_lam{}_{level}", self.of, self.lambda)
    }

    fn root_seed(&self, base: u64) -> u64 {
        let level = match self.level {
            Level::Snr(s) => [0, s.to_bits()],
            Level::Bits(b) => [1, b as u64],
        };
        seed::derive(base, &[self.of.to_bits(), self.lambda.to_bits(), level[0], level[1]])
    }

    fn snr_db(&self) -> Option<f64> {
        match self.level {
            Level::Snr(s) => Some(s),
            Level::Bits(_) => None,
        }
    }

    fn bits(&self) -> Option<u32> {
        match self.level {
            Level::Bits(b) => Some(b),
            Level::Snr(_) => None,
        }
    }
}

/// All cells of a configuration: oversampling outermost, then λ, then level.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &of in &cfg.oversampling {
        for &lambda in &cfg.lambda {
            match cfg.mode {
                Mode::Awgn => out.extend(cfg.snr_db.iter().map(|&s| Cell::awgn(of, lambda, s))),
                Mode::TwoBand => out.push(Cell::two_band(of, lambda, cfg.bits)),
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => stream::SPLIT_TRAIN,
            Split::Val => stream::SPLIT_VAL,
            Split::Test => stream::SPLIT_TEST,
        }
    }

    fn count(self, cfg: &ExperimentConfig) -> usize {
        match self {
            Split::Train => cfg.train_size,
            Split::Val => cfg.val_size,
            Split::Test => cfg.test_size,
        }
    }
}

pub fn grid_for(cfg: &ExperimentConfig, of: f64) -> Result<SamplingGrid> {
    Ok(SamplingGrid::new(cfg.n_samples, of, cfg.max_freq_hz)?)
}

pub fn dataset_spec(cfg: &ExperimentConfig, cell: &Cell, split: Split) -> Result<DatasetSpec> {
    let kind = match cell.level {
        Level::Snr(s) => DatasetKind::Awgn {
            nominal_snr_db: s,
            jitter_db: cfg.snr_jitter_db,
        },
        Level::Bits(bits) => DatasetKind::TwoBand {
            config: cfg.two_band,
            bits,
        },
    };
    Ok(DatasetSpec {
        grid: grid_for(cfg, cell.of)?,
        lambda: cell.lambda,
        kind,
        shape: cfg.signal,
        count: split.count(cfg),
        root_seed: cell.root_seed(cfg.seed),
        split: split.tag(),
    })
}

pub fn dataset_dir(cfg: &ExperimentConfig, cell: &Cell, split: Split) -> PathBuf {
    cfg.out_dir.join("data").join(cell.key()).join(split.name())
}

pub fn model_path(cfg: &ExperimentConfig, cell: &Cell) -> PathBuf {
    cfg.out_dir.join("models").join(format!("{}.ckpt", cell.key()))
}

/// Reads the cached dataset when its manifest matches the configuration,
/// otherwise generates and caches it.
pub fn load_dataset(cfg: &ExperimentConfig, cell: &Cell, split: Split) -> Result<Dataset> {
    let spec = dataset_spec(cfg, cell, split)?;
    let dir = dataset_dir(cfg, cell, split);
    if dir.join("manifest").is_file() {
        if let Ok(manifest) = read_manifest(&dir) {
            if manifest.spec == spec {
                return Ok(read_dataset(&dir)?);
            }
        }
    }
    let ds = generate_dataset(&spec)?;
    write_dataset(&dir, &ds)?;
    Ok(ds)
}

/// Generates (or refreshes) every dataset of the configuration.
pub fn make_datasets(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for cell in cells(cfg) {
        for split in Split::ALL {
            load_dataset(cfg, &cell, split)?;
            dirs.push(dataset_dir(cfg, &cell, split));
        }
    }
    Ok(dirs)
}

/// What a conventional ADC would have produced for the same signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// AWGN at the given SNR directly on the unfolded signal.
    Awgn { snr_db: f64 },
    /// A `bits` quantizer spanning the unit peak `[−1, 1]`.
    Quantized { bits: u32 },
}

pub fn classical_baseline(clean: &[f64], baseline: Baseline, seed: u64) -> Result<Vec<f64>> {
    Ok(match baseline {
        Baseline::Awgn { snr_db } => add_awgn(clean, snr_db, seed)?,
        Baseline::Quantized { bits } => quantize_uniform(clean, bits, 1.0)?,
    })
}

/// Baseline of dataset row `i`, matching its realized SNR or bit depth.
pub fn row_baseline(ds: &Dataset, i: usize) -> Result<Vec<f64>> {
    let baseline = match ds.corruption(i) {
        Corruption::Awgn { snr_db } => Baseline::Awgn { snr_db },
        Corruption::Quantized { bits, .. } => Baseline::Quantized { bits },
        Corruption::None => Baseline::Awgn { snr_db: f64::INFINITY },
    };
    classical_baseline(&ds.clean_row(i), baseline, row_seed(&ds.spec, stream::BASELINE_NOISE, i))
}

/// A recovery method with everything that can be precomputed for one grid.
#[derive(Debug, Clone)]
pub enum Recoverer {
    Hod(HodConfig),
    B2r2(B2r2Config, PartialDftOperator),
    Lasso(IstaConfig, PartialDftOperator),
    Msquid(Box<MsquidModel>),
}

impl Recoverer {
    pub fn method(&self) -> Method {
        match self {
            Recoverer::Hod(_) => Method::Hod,
            Recoverer::B2r2(..) => Method::B2r2,
            Recoverer::Lasso(..) => Method::Lasso,
            Recoverer::Msquid(_) => Method::Msquid,
        }
    }

    pub fn recover(&self, obs: &FoldedObservation) -> Result<ResidualEstimate> {
        Ok(match self {
            Recoverer::Hod(c) => hod_recover(obs, c)?,
            Recoverer::B2r2(c, op) => b2r2_with_operator(obs, c, op)?,
            Recoverer::Lasso(c, op) => lasso_with_operator(obs, c, op)?,
            Recoverer::Msquid(m) => msquid_recover(obs, m)?,
        })
    }

    /// Recovered samples `f* − z`.
    pub fn reconstruct(&self, obs: &FoldedObservation) -> Result<Vec<f64>> {
        let est = self.recover(obs)?;
        Ok(unfold(obs, &est)?)
    }
}

/// HOD settings for a grid; when `T_s ω_m e ≥ 1` no order is guaranteed to
/// work and first differences are used.
pub fn hod_config(grid: &SamplingGrid, lambda: f64, cap: usize) -> Result<HodConfig> {
    let mut cfg = HodConfig::for_unit_peak(lambda);
    cfg.order_cap = cap;
    match hod_order(lambda, cfg.beta_f, grid.ts_wm()) {
        Ok(_) => {}
        Err(CoreError::RateTooLow(_)) => cfg.order = Some(1),
        Err(e) => return Err(e.into()),
    }
    Ok(cfg)
}

pub fn prepare(cfg: &ExperimentConfig, cell: &Cell, method: Method) -> Result<Recoverer> {
    let grid = grid_for(cfg, cell.of)?;
    let probe = FoldedObservation {
        samples: vec![0.0; grid.n_samples],
        folding: FoldingConfig::new(cell.lambda)?,
        corruption: Corruption::None,
        grid,
    };
    Ok(match method {
        Method::Hod => Recoverer::Hod(hod_config(&grid, cell.lambda, cfg.hod_order_cap)?),
        Method::B2r2 => Recoverer::B2r2(cfg.b2r2, operator_for(&probe)?),
        Method::Lasso => Recoverer::Lasso(cfg.ista, operator_for(&probe)?),
        Method::Msquid => {
            let path = model_path(cfg, cell);
            if !path.is_file() {
                return Err(HarnessError::MissingModel { cell: cell.key(), path });
            }
            let band = OutOfBandSet::from_grid(&grid)?;
            Recoverer::Msquid(Box::new(load_model_for(&path, &band)?))
        }
    })
}

/// Per-signal result of one method on one test row.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    nmse: [f64; 3],
    baseline: [f64; 3],
    runtime_s: f64,
}

fn band_nmse(truth: &[f64], est: &[f64], band: (f64, f64), grid: &SamplingGrid) -> Result<f64> {
    let t = band_extract(truth, band, grid)?;
    let e = band_extract(est, band, grid)?;
    Ok(nmse(&t, &e)?)
}

fn evaluate(ds: &Dataset, rec: &Recoverer, bands: Option<((f64, f64), (f64, f64))>) -> Result<Vec<Outcome>> {
    let grid = ds.spec.grid;
    (0..ds.len())
        .map(|i| {
            let obs = ds.observation(i);
            let clean = ds.clean_row(i);
            let start = Instant::now();
            let est = rec.recover(&obs)?;
            let runtime_s = start.elapsed().as_secs_f64();
            let x = unfold(&obs, &est)?;
            let base = row_baseline(ds, i)?;
            let mut out = Outcome {
                nmse: [nmse(&clean, &x)?, f64::NAN, f64::NAN],
                baseline: [nmse(&clean, &base)?, f64::NAN, f64::NAN],
                runtime_s,
            };
            if let Some((low, high)) = bands {
                out.nmse[1] = band_nmse(&clean, &x, low, &grid)?;
                out.nmse[2] = band_nmse(&clean, &x, high, &grid)?;
                out.baseline[1] = band_nmse(&clean, &base, low, &grid)?;
                out.baseline[2] = band_nmse(&clean, &base, high, &grid)?;
            }
            Ok(out)
        })
        .collect()
}

fn record(cell: &Cell, method: Method, band: Band, slot: usize, outcomes: &[Outcome], warmup: usize) -> MetricsRecord {
    let pairs: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.nmse[slot], o.baseline[slot])).collect();
    let (pct, gain) = compare(&pairs);
    let times: Vec<f64> = outcomes.iter().map(|o| o.runtime_s).collect();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
    MetricsRecord {
        method,
        of: cell.of,
        lambda: cell.lambda,
        snr_db: cell.snr_db(),
        bits: cell.bits(),
        band,
        outperformance_pct: pct,
        nmse_improvement_db: gain,
        // a method that never wins has no meaningful runtime entry
        runtime_s: if pct > 0.0 { median_runtime(&times, warmup) } else { None },
        count: outcomes.len(),
        mean_nmse: mean(pairs.iter().map(|p| p.0).collect()),
        mean_baseline_nmse: mean(pairs.iter().map(|p| p.1).collect()),
    }
}

/// Evaluates one method on one cell's test split.
pub fn bench_cell(cfg: &ExperimentConfig, cell: &Cell, method: Method) -> Result<MetricsRecord> {
    let test = load_dataset(cfg, cell, Split::Test)?;
    let rec = prepare(cfg, cell, method)?;
    let outcomes = evaluate(&test, &rec, None)?;
    Ok(record(cell, method, Band::All, 0, &outcomes, cfg.warmup))
}

/// Every configured method on every cell.
pub fn run_recovery_bench(cfg: &ExperimentConfig, mut progress: impl FnMut(&MetricsRecord)) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for cell in cells(cfg) {
        for &method in &cfg.methods {
            let r = bench_cell(cfg, &cell, method)?;
            progress(&r);
            out.push(r);
        }
    }
    Ok(out)
}

/// Two-band study: whole-signal, low-band and high-band NMSE rows per cell and method.
pub fn run_case_study(cfg: &ExperimentConfig, mut progress: impl FnMut(&MetricsRecord)) -> Result<Vec<MetricsRecord>> {
    if cfg.mode != Mode::TwoBand {
        return Err(HarnessError::Config("the case study needs mode = \"two_band\"".into()));
    }
    let bands = Some((cfg.two_band.low_band_hz, cfg.two_band.high_band_hz));
    let mut out = Vec::new();
    for cell in cells(cfg) {
        let test = load_dataset(cfg, &cell, Split::Test)?;
        for &method in &cfg.methods {
            let rec = prepare(cfg, &cell, method)?;
            let outcomes = evaluate(&test, &rec, bands)?;
            for (slot, band) in [Band::All, Band::Low, Band::High].into_iter().enumerate() {
                let r = record(&cell, method, band, slot, &outcomes, cfg.warmup);
                progress(&r);
                out.push(r);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub layers: usize,
    pub sq_enabled: bool,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    /// `None` when training diverged.
    pub val_outperformance_pct: Option<f64>,
    pub val_nmse: Option<f64>,
    pub initial_val_nmse: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub cell: String,
    pub gamma0: f64,
    pub chosen: GridPoint,
    pub val_outperformance_pct: f64,
    pub val_nmse: f64,
    pub checkpoint: PathBuf,
    pub tried: Vec<GridResult>,
}

/// Initial threshold: `scale · τ · median ‖Re(VᴴF̂)‖∞` over the observations.
pub fn initial_gamma(op: &PartialDftOperator, ds: &Dataset, scale: f64) -> Result<f64> {
    let mut peaks = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let spec = partial_spectrum(&first_diff(&ds.corrupted.row(i).to_vec()), op.band())?;
        let back = op.adjoint(&spec)?;
        peaks.push(back.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    peaks.sort_by(f64::total_cmp);
    let median = peaks[peaks.len() / 2];
    Ok(scale * median / op.norm_sq())
}

fn training_set(ds: &Dataset, band: &OutOfBandSet) -> Result<TrainingSet> {
    let obs: Vec<FoldedObservation> = (0..ds.len()).map(|i| ds.observation(i)).collect();
    let clean: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.clean_row(i)).collect();
    Ok(TrainingSet::from_observations(&obs, &clean, band)?)
}

/// Share of rows where the model beats the classical ADC.
pub fn outperformance(ds: &Dataset, rec: &Recoverer) -> Result<f64> {
    let outcomes = evaluate(ds, rec, None)?;
    let pairs: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.nmse[0], o.baseline[0])).collect();
    Ok(compare(&pairs).0)
}

/// Grid search for one cell; the configuration with the best validation
/// outperformance (ties: lower validation NMSE) is checkpointed.
pub fn train_cell(cfg: &ExperimentConfig, cell: &Cell, mut log: impl FnMut(&str)) -> Result<TrainReport> {
    let grid = grid_for(cfg, cell.of)?;
    let band = OutOfBandSet::from_grid(&grid)?;
    if band.is_empty() {
        return Err(CoreError::RateTooLow(format!("no out-of-band bins at oversampling {}", cell.of)).into());
    }
    let op = PartialDftOperator::new(band.clone())?;
    let train_ds = load_dataset(cfg, cell, Split::Train)?;
    let val_ds = load_dataset(cfg, cell, Split::Val)?;
    let train_set = training_set(&train_ds, &band)?;
    let val_set = training_set(&val_ds, &band)?;
    let t = &cfg.training;
    let gamma0 = initial_gamma(&op, &train_ds, t.gamma_scale)?;
    let mut sq = SqConfig::for_unit_peak(cell.lambda)?;
    if t.centered_sq {
        sq = sq.with_offset(cell.lambda);
    }

    let mut tried = Vec::new();
    let mut best: Option<(MsquidModel, GridPoint, f64, f64)> = None;
    'search: for &layers in &t.layers {
        for &sq_enabled in &t.sq {
            for &lr in &t.lr {
                let point = GridPoint { layers, sq_enabled, lr };
                let init = InitConfig {
                    layers,
                    gamma0,
                    beta0: None,
                    sq,
                    sq_enabled,
                    faithful: t.faithful_init,
                };
                let model = init_model(&band, &init)?;
                let tc = TrainConfig {
                    epochs: t.epochs,
                    lr,
                    batch_size: t.batch_size,
                    seed: seed::derive(cell.root_seed(cfg.seed), &[layers as u64, sq_enabled as u64, lr.to_bits()]),
                };
                log(&format!("{}: L={layers} sq={sq_enabled} lr={lr}", cell.key()));
                let trained = train_with(&model, &train_set, &val_set, &tc, |r| {
                    log(&format!("  epoch {:>3}  train {:.4e}  val {:.4e}", r.epoch, r.train_nmse, r.val_nmse));
                });
                let (trained, history) = match trained {
                    Ok(v) => v,
                    Err(e @ CoreError::Diverged { .. }) => {
                        log(&format!("  diverged: {e}"));
                        tried.push(GridResult {
                            point,
                            val_outperformance_pct: None,
                            val_nmse: None,
                            initial_val_nmse: None,
                            best_epoch: None,
                            error: Some(e.to_string()),
                        });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let rec = Recoverer::Msquid(Box::new(trained));
                let pct = outperformance(&val_ds, &rec)?;
                let val = history.best_val_nmse();
                log(&format!("  validation outperformance {pct:.1}%  nmse {val:.4e}"));
                tried.push(GridResult {
                    point,
                    val_outperformance_pct: Some(pct),
                    val_nmse: Some(val),
                    initial_val_nmse: Some(history.initial_val_nmse),
                    best_epoch: history.best_epoch,
                    error: None,
                });
                let Recoverer::Msquid(trained) = rec else { unreachable!() };
                let better = best.as_ref().is_none_or(|b| pct > b.2 || (pct == b.2 && val < b.3));
                if better {
                    best = Some((*trained, point, pct, val));
                }
                if t.stop_at_outperf_pct.is_some_and(|stop| pct >= stop) {
                    break 'search;
                }
            }
        }
    }
    let (model, chosen, pct, val) =
        best.ok_or_else(|| HarnessError::Config(format!("{}: every training configuration diverged", cell.key())))?;
    let checkpoint = model_path(cfg, cell);
    if let Some(dir) = checkpoint.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    save_model(&model, &checkpoint)?;
    let report = TrainReport {
        cell: cell.key(),
        gamma0,
        chosen,
        val_outperformance_pct: pct,
        val_nmse: val,
        checkpoint: checkpoint.clone(),
        tried,
    };
    let summary = checkpoint.with_extension("json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(&summary, text + "\n").map_err(|e| HarnessError::io(&summary, e))?;
    Ok(report)
}

pub fn train_all(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<Vec<TrainReport>> {
    cells(cfg).iter().map(|c| train_cell(cfg, c, &mut log)).collect()
}

// ---------------------------------------------------------------- single file

/// Parses whitespace- or comma-separated samples.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| HarnessError::Input(format!("not a number: {t:?}"))))
        .collect()
}

/// Recovers one folded record with `method`.
pub fn recover_samples(
    cfg: &ExperimentConfig,
    samples: Vec<f64>,
    of: f64,
    lambda: f64,
    method: Method,
    model: Option<&Path>,
) -> Result<Vec<f64>> {
    let grid = SamplingGrid::new(samples.len(), of, cfg.max_freq_hz)?;
    let obs = FoldedObservation {
        samples,
        folding: FoldingConfig::new(lambda)?,
        corruption: Corruption::None,
        grid,
    };
    let rec = match method {
        Method::Hod => Recoverer::Hod(hod_config(&grid, lambda, cfg.hod_order_cap)?),
        Method::B2r2 => Recoverer::B2r2(cfg.b2r2, operator_for(&obs)?),
        Method::Lasso => Recoverer::Lasso(cfg.ista, operator_for(&obs)?),
        Method::Msquid => {
            let path = model.ok_or_else(|| HarnessError::Input("msquid needs --model <checkpoint>".into()))?;
            let band = OutOfBandSet::from_grid(&grid)?;
            Recoverer::Msquid(Box::new(load_model_for(path, &band)?))
        }
    };
    rec.reconstruct(&obs)
}
