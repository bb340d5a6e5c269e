//! Test-signal synthesis, the folding nonlinearity and ADC corruptions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectral::{fft_real, ifft_real, in_band_bins, physical_band_mask};

/// Sampling geometry shared by every signal in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub n_samples: usize,
    pub oversampling: f64,
    pub max_freq_hz: f64,
}

impl SamplingGrid {
    pub fn new(n_samples: usize, oversampling: f64, max_freq_hz: f64) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {n_samples}")));
        }
        if !oversampling.is_finite() || oversampling < 1.0 {
            return Err(Error::InvalidGrid(format!(
                "oversampling factor must be >= 1 (band fraction <= 1), got {oversampling}"
            )));
        }
        if !(max_freq_hz.is_finite() && max_freq_hz > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "max frequency must be positive, got {max_freq_hz}"
            )));
        }
        Ok(Self {
            n_samples,
            oversampling,
            max_freq_hz,
        })
    }

    /// `ρ = 1/OF`, the occupied fraction of the normalized band.
    pub fn band_fraction(&self) -> f64 {
        1.0 / self.oversampling
    }

    /// `ω_s / 2π = 2 · OF · ω_m / 2π`.
    pub fn sample_rate_hz(&self) -> f64 {
        2.0 * self.max_freq_hz * self.oversampling
    }

    pub fn sample_interval_s(&self) -> f64 {
        1.0 / self.sample_rate_hz()
    }

    /// `T_s · ω_m`, which reduces to `π / OF`.
    pub fn ts_wm(&self) -> f64 {
        self.sample_interval_s() * 2.0 * PI * self.max_freq_hz
    }

    pub fn in_band_bins(&self) -> Vec<usize> {
        in_band_bins(self.n_samples, self.band_fraction())
    }
}

/// A real, band-limited sample vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub grid: SamplingGrid,
    pub band_bins: Vec<usize>,
}

impl Signal {
    /// Fraction of DFT energy outside `band_bins`.
    pub fn out_of_band_energy(&self) -> f64 {
        let spec = fft_real(&self.samples);
        let mut allowed = vec![false; spec.len()];
        for &k in &self.band_bins {
            allowed[k] = true;
        }
        let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let leak: f64 = spec
            .iter()
            .zip(&allowed)
            .filter(|(_, a)| !**a)
            .map(|(c, _)| c.norm_sqr())
            .sum();
        leak / total
    }

    pub fn peak(&self) -> f64 {
        inf_norm(&self.samples)
    }
}

/// Shape of the random signal family.
///
/// With both fields `None` the in-band coefficients are i.i.d. and the
/// signal is stationary over the window. `envelope_width` multiplies the
/// waveform by a Gaussian window of that standard deviation (as a fraction
/// of N, centered in the window) before re-projecting onto the band, so the
/// signal decays toward both ends. `spectral_taper` weights the coefficients
/// by `exp(−½ (k / (taper · k_max))²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalShape {
    pub envelope_width: Option<f64>,
    pub spectral_taper: Option<f64>,
}

impl Default for SignalShape {
    fn default() -> Self {
        Self {
            envelope_width: Some(0.1),
            spectral_taper: Some(0.15),
        }
    }
}

impl SignalShape {
    pub const STATIONARY: Self = Self {
        envelope_width: None,
        spectral_taper: None,
    };

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("envelope_width", self.envelope_width),
            ("spectral_taper", self.spectral_taper),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldingConfig {
    pub lambda: f64,
}

impl FoldingConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidFolding(lambda));
        }
        Ok(Self { lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corruption {
    None,
    Awgn { snr_db: f64 },
    Quantized { bits: u32, range_half_width: f64 },
}

/// Folded (and possibly corrupted) samples `f*_λ(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedObservation {
    pub samples: Vec<f64>,
    pub folding: FoldingConfig,
    pub corruption: Corruption,
    pub grid: SamplingGrid,
}

impl FoldedObservation {
    pub fn lambda(&self) -> f64 {
        self.folding.lambda
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

/// Weak–strong composite: a strong high band and a weak low band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoBandConfig {
    pub low_band_hz: (f64, f64),
    pub high_band_hz: (f64, f64),
    pub alpha_strong: f64,
    pub alpha_weak: f64,
}

impl Default for TwoBandConfig {
    fn default() -> Self {
        Self {
            low_band_hz: (-20.0, 20.0),
            high_band_hz: (50.0, 90.0),
            alpha_strong: 1.0,
            alpha_weak: 0.25,
        }
    }
}

impl TwoBandConfig {
    /// Carrier that moves a baseband `[−w, w]` component onto the high band.
    pub fn carrier_hz(&self) -> f64 {
        0.5 * (self.high_band_hz.0 + self.high_band_hz.1)
    }

    fn validate(&self, grid: &SamplingGrid) -> Result<()> {
        let (llo, lhi) = self.low_band_hz;
        let (hlo, hhi) = self.high_band_hz;
        let err = |m: String| Err(Error::InvalidTwoBand(m));
        if !(llo < lhi && hlo < hhi) {
            return err("bands must be non-empty intervals".into());
        }
        if !(hlo >= 0.0) {
            return err(format!("high band must be positive, got [{hlo}, {hhi}]"));
        }
        // the low band is symmetric about DC, so it occupies [0, max(|llo|, |lhi|)]
        let low_edge = llo.abs().max(lhi.abs());
        if low_edge >= hlo {
            return err(format!("bands overlap: low edge {low_edge} Hz >= high start {hlo} Hz"));
        }
        if hhi > grid.max_freq_hz {
            return err(format!(
                "high band edge {hhi} Hz exceeds the grid's max frequency {} Hz",
                grid.max_freq_hz
            ));
        }
        if !(self.alpha_strong > self.alpha_weak && self.alpha_weak > 0.0) {
            return err(format!(
                "need alpha_strong > alpha_weak > 0, got {} and {}",
                self.alpha_strong, self.alpha_weak
            ));
        }
        Ok(())
    }
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Random band-limited signal of the default [`SignalShape`], unit peak.
pub fn generate_bandlimited(grid: &SamplingGrid, seed: u64) -> Result<Signal> {
    generate_bandlimited_with(grid, &SignalShape::default(), seed)
}

pub fn generate_bandlimited_with(grid: &SamplingGrid, shape: &SignalShape, seed: u64) -> Result<Signal> {
    let rho = grid.band_fraction();
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidGrid(format!("band fraction {rho} outside (0, 1]")));
    }
    let n = grid.n_samples;
    let band_bins = grid.in_band_bins();
    let mut mask = vec![false; n];
    for &k in &band_bins {
        mask[k] = true;
    }
    let samples = synthesize(&mask, shape, seed)?;
    Ok(Signal {
        samples,
        grid: *grid,
        band_bins,
    })
}

/// Returns `(composite, strong, weak)`; `composite = strong + weak` and the
/// composite has unit peak.
pub fn generate_two_band(grid: &SamplingGrid, cfg: &TwoBandConfig, seed: u64) -> Result<(Signal, Signal, Signal)> {
    generate_two_band_with(grid, cfg, &SignalShape::default(), seed)
}

pub fn generate_two_band_with(
    grid: &SamplingGrid,
    cfg: &TwoBandConfig,
    shape: &SignalShape,
    seed: u64,
) -> Result<(Signal, Signal, Signal)> {
    cfg.validate(grid)?;
    let n = grid.n_samples;
    let low_mask = physical_band_mask(grid, cfg.low_band_hz)?;
    let high_mask = physical_band_mask(grid, cfg.high_band_hz)?;
    let half_width = 0.5 * (cfg.high_band_hz.1 - cfg.high_band_hz.0);
    let base_mask = physical_band_mask(grid, (-half_width, half_width))?;
    for (name, mask, band) in [
        ("low", &low_mask, cfg.low_band_hz),
        ("high", &high_mask, cfg.high_band_hz),
        ("baseband", &base_mask, (-half_width, half_width)),
    ] {
        if !mask.iter().any(|&m| m) {
            return Err(Error::DegenerateBand(format!(
                "{name} band [{}, {}] Hz covers no DFT bin at resolution {} Hz",
                band.0,
                band.1,
                grid.sample_rate_hz() / n as f64
            )));
        }
    }

    let weak = synthesize(&low_mask, shape, seed::derive(seed, &[2]))?;
    let base = synthesize(&base_mask, shape, seed::derive(seed, &[1]))?;
    let w0 = 2.0 * PI * cfg.carrier_hz() * grid.sample_interval_s();
    let modulated: Vec<f64> = base.iter().enumerate().map(|(t, v)| v * (w0 * t as f64).cos()).collect();
    let mut strong = project(&modulated, &high_mask);
    normalize_peak(&mut strong)?;

    let raw: Vec<f64> = strong
        .iter()
        .zip(&weak)
        .map(|(s, w)| cfg.alpha_strong * s + cfg.alpha_weak * w)
        .collect();
    let peak = inf_norm(&raw);
    if peak == 0.0 {
        return Err(Error::DegenerateBand("two-band composite vanished".into()));
    }
    let scale = 1.0 / peak;
    let strong: Vec<f64> = strong.iter().map(|v| cfg.alpha_strong * scale * v).collect();
    let weak: Vec<f64> = weak.iter().map(|v| cfg.alpha_weak * scale * v).collect();
    // sum the scaled parts so the composite is exactly their sum
    let composite: Vec<f64> = strong.iter().zip(&weak).map(|(a, b)| a + b).collect();

    let bins = |m: &[bool]| -> Vec<usize> { (0..n).filter(|&k| m[k]).collect() };
    let union: Vec<bool> = low_mask.iter().zip(&high_mask).map(|(a, b)| *a || *b).collect();
    Ok((
        Signal {
            samples: composite,
            grid: *grid,
            band_bins: bins(&union),
        },
        Signal {
            samples: strong,
            grid: *grid,
            band_bins: bins(&high_mask),
        },
        Signal {
            samples: weak,
            grid: *grid,
            band_bins: bins(&low_mask),
        },
    ))
}

/// Random real signal whose spectrum lives on `mask` (conjugate-symmetric).
fn synthesize(mask: &[bool], shape: &SignalShape, seed: u64) -> Result<Vec<f64>> {
    shape.validate()?;
    let n = mask.len();
    let mut rng = seed::rng(seed);
    let k_max = (0..=n / 2).filter(|&k| mask[k]).max().unwrap_or(0);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        if !mask[k] {
            continue;
        }
        let weight = match shape.spectral_taper {
            Some(b) if k_max > 0 => {
                let r = k as f64 / (b * k_max as f64);
                (-0.5 * r * r).exp()
            }
            _ => 1.0,
        };
        let self_conjugate = k == 0 || 2 * k == n;
        spec[k] = if self_conjugate {
            Complex64::new(re * weight, 0.0)
        } else {
            Complex64::new(re, im) * weight
        };
        if !self_conjugate {
            spec[n - k] = spec[k].conj();
        }
    }
    let mut x = ifft_real(&spec);
    if let Some(width) = shape.envelope_width {
        let sigma = width * n as f64;
        let center = 0.5 * n as f64;
        for (t, v) in x.iter_mut().enumerate() {
            let r = (t as f64 - center) / sigma;
            *v *= (-0.5 * r * r).exp();
        }
        x = project(&x, mask);
    }
    normalize_peak(&mut x)?;
    Ok(x)
}

fn project(x: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut spec = fft_real(x);
    for (c, &keep) in spec.iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    ifft_real(&spec)
}

fn normalize_peak(x: &mut [f64]) -> Result<()> {
    let peak = inf_norm(x);
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::DegenerateBand("synthesized signal has no energy".into()));
    }
    x.iter_mut().for_each(|v| *v /= peak);
    Ok(())
}

/// Centered modulo: `((x + λ) mod 2λ) − λ`, values in `[−λ, λ)`.
pub fn fold(x: &[f64], folding: &FoldingConfig) -> Result<Vec<f64>> {
    let lambda = FoldingConfig::new(folding.lambda)?.lambda;
    Ok(x.iter().map(|&v| fold_scalar(v, lambda)).collect())
}

pub(crate) fn fold_scalar(x: f64, lambda: f64) -> f64 {
    if (-lambda..lambda).contains(&x) {
        return x;
    }
    let period = 2.0 * lambda;
    let mut r = (x + lambda).rem_euclid(period);
    // rem_euclid may round up to the period itself
    if r >= period {
        r = 0.0;
    }
    let y = r - lambda;
    if y >= lambda {
        -lambda
    } else {
        y
    }
}

/// Adds white Gaussian noise at `snr_db` relative to the mean power of `x`.
/// An infinite SNR returns `x` unchanged.
pub fn add_awgn(x: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db.is_nan() {
        return Err(Error::Invalid("SNR is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(x.to_vec());
    }
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = seed::rng(seed);
    Ok(x.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Uniform draw in `[nominal − 5, nominal + 5]` dB.
pub fn jittered_snr(nominal_db: f64, seed: u64) -> f64 {
    jittered_snr_within(nominal_db, 5.0, seed)
}

pub fn jittered_snr_within(nominal_db: f64, half_width_db: f64, seed: u64) -> f64 {
    if half_width_db == 0.0 {
        return nominal_db;
    }
    let u: f64 = seed::rng(seed).random();
    nominal_db + half_width_db * (2.0 * u - 1.0)
}

/// Mid-rise uniform quantizer over `[−h, h]` with `2^bits` levels; clamps.
pub fn quantize_uniform(x: &[f64], bits: u32, range_half_width: f64) -> Result<Vec<f64>> {
    if !(1..=32).contains(&bits) {
        return Err(Error::Invalid(format!("bits must lie in 1..=32, got {bits}")));
    }
    if !(range_half_width.is_finite() && range_half_width > 0.0) {
        return Err(Error::Invalid(format!(
            "quantizer half range must be positive, got {range_half_width}"
        )));
    }
    let levels = 1u64 << bits;
    let step = 2.0 * range_half_width / levels as f64;
    let top = (levels - 1) as f64;
    Ok(x.iter()
        .map(|&v| {
            let idx = ((v + range_half_width) / step).floor().clamp(0.0, top);
            -range_half_width + 0.5 * step + idx * step
        })
        .collect())
}

/// `‖truth − estimate‖² / ‖truth‖²`.
pub fn nmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    let energy: f64 = truth.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedNmse);
    }
    let err: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

/// Folds a clean signal and applies the requested corruption.
///
/// AWGN is added after folding, relative to the folded signal's power; the
/// quantizer acts on the folded samples.
pub fn observe(clean: &Signal, folding: FoldingConfig, corruption: Corruption, seed: u64) -> Result<FoldedObservation> {
    let folded = fold(&clean.samples, &folding)?;
    let samples = match corruption {
        Corruption::None => folded,
        Corruption::Awgn { snr_db } => add_awgn(&folded, snr_db, seed)?,
        Corruption::Quantized {
            bits,
            range_half_width,
        } => quantize_uniform(&folded, bits, range_half_width)?,
    };
    Ok(FoldedObservation {
        samples,
        folding,
        corruption,
        grid: clean.grid,
    })
}
