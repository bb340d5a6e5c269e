use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use msquid_core::{B2r2Config, IstaConfig, SignalShape, TwoBandConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Awgn,
    TwoBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hod,
    B2r2,
    Lasso,
    Msquid,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hod, Method::B2r2, Method::Lasso, Method::Msquid];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hod => "hod",
            Method::B2r2 => "b2r2",
            Method::Lasso => "lasso",
            Method::Msquid => "msquid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyper-parameter grid searched when training a network for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingGrid {
    pub layers: Vec<usize>,
    pub sq: Vec<bool>,
    pub lr: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Start from `W₁ = I − τ Re(VᴴV)` rather than the diagonal form.
    pub faithful_init: bool,
    /// Center the soft-quantizer plateaus on the grid levels (offset λ).
    pub centered_sq: bool,
    /// `γ⁽ⁱ⁾` starts at `gamma_scale · τ · median ‖Re(VᴴF̂)‖∞` over the training set.
    pub gamma_scale: f64,
    /// Stop the search once a configuration reaches this validation
    /// outperformance (percent); `None` always searches the whole grid.
    pub stop_at_outperf_pct: Option<f64>,
}

impl Default for TrainingGrid {
    fn default() -> Self {
        Self {
            layers: vec![6, 4, 8],
            sq: vec![true, false],
            lr: vec![1e-4, 1e-3, 1e-2],
            epochs: 40,
            batch_size: 32,
            faithful_init: true,
            centered_sq: true,
            gamma_scale: 0.1,
            stop_at_outperf_pct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n_samples: usize,
    pub oversampling: Vec<f64>,
    /// Highest signal frequency; only the two-band mode cares about Hz.
    pub max_freq_hz: f64,
    pub lambda: Vec<f64>,
    /// Nominal SNRs (AWGN mode); `inf` gives noiseless cells.
    pub snr_db: Vec<f64>,
    pub snr_jitter_db: f64,
    /// Quantizer resolution (two-band mode).
    pub bits: u32,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub signal: SignalShape,
    pub two_band: TwoBandConfig,
    pub training: TrainingGrid,
    pub b2r2: B2r2Config,
    pub ista: IstaConfig,
    pub hod_order_cap: usize,
    /// Runtime samples discarded before taking the median.
    pub warmup: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Awgn,
            n_samples: 256,
            oversampling: vec![1.5, 2.0, 2.5, 3.0],
            max_freq_hz: 90.0,
            lambda: vec![0.25],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            snr_jitter_db: 5.0,
            bits: 4,
            train_size: 500,
            val_size: 100,
            test_size: 200,
            methods: Method::ALL.to_vec(),
            seed: 1,
            out_dir: PathBuf::from("runs"),
            signal: SignalShape::default(),
            two_band: TwoBandConfig::default(),
            training: TrainingGrid::default(),
            b2r2: B2r2Config::default(),
            ista: IstaConfig::default(),
            hod_order_cap: 32,
            warmup: 3,
        }
    }
}

impl ExperimentConfig {
    /// The weak–strong case study defaults.
    pub fn two_band() -> Self {
        Self {
            mode: Mode::TwoBand,
            oversampling: vec![1.5, 2.0, 2.5, 3.0],
            lambda: vec![0.2, 0.25],
            snr_db: Vec::new(),
            test_size: 100,
            ..Self::default()
        }
    }

    /// Desk-scale presets scaled up to N = 1024 with 5000/1000 train/test signals.
    pub fn full_scale(mut self) -> Self {
        self.n_samples = 1024;
        self.train_size = 5000;
        self.test_size = 1000;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.methods.is_empty() {
            return fail("methods must not be empty");
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return fail("dataset sizes must be at least 1");
        }
        if self.oversampling.is_empty() || self.lambda.is_empty() {
            return fail("oversampling and lambda lists must not be empty");
        }
        if self.mode == Mode::Awgn && self.snr_db.is_empty() {
            return fail("awgn mode needs at least one snr_db value");
        }
        if self.training.layers.is_empty() || self.training.sq.is_empty() || self.training.lr.is_empty() {
            return fail("training grid lists must not be empty");
        }
        if self.n_samples < 2 {
            return fail("n_samples must be at least 2");
        }
        Ok(())
    }
}
