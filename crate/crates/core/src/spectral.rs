//! Difference operators, the out-of-band partial DFT and ideal band masks.
//!
//! The partial operator `V` keeps the DFT rows whose normalized frequency
//! `2πk/N` lies strictly inside the gap `(ρπ, 2π − ρπ)` left by a signal
//! occupying `[−ρπ, ρπ]`. It is applied through a full FFT followed by a row
//! gather, and its adjoint through a scatter followed by an inverse FFT.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::SamplingGrid;

/// Relative slack used when a bin sits exactly on a band edge.
const EDGE_EPS: f64 = 1e-9;

/// `y[0] = x[0]`, `y[n] = x[n] − x[n−1]` (the sample before the window is 0).
pub fn first_diff(x: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

/// Running sum; the exact inverse of [`first_diff`].
pub fn cumsum(x: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    x.iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

/// `order`-fold application of [`first_diff`].
pub fn diff_n(x: &[f64], order: usize) -> Vec<f64> {
    (0..order).fold(x.to_vec(), |acc, _| first_diff(&acc))
}

/// Forward DFT of a real vector, unnormalized.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse DFT (with the `1/N` factor), keeping the real part.
pub fn ifft_real(spectrum: &[Complex64]) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    if n > 0 {
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    }
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Bins `k` whose normalized frequency lies in `[−ρπ, ρπ]`.
pub fn in_band_bins(n: usize, rho: f64) -> Vec<usize> {
    (0..n).filter(|&k| is_in_band(k, n, rho)).collect()
}

fn is_in_band(k: usize, n: usize, rho: f64) -> bool {
    let folded = k.min(n - k) as f64;
    2.0 * folded <= rho * n as f64 + EDGE_EPS * n as f64
}

/// Signed physical frequency of DFT bin `k` on `grid`.
pub fn bin_frequency_hz(k: usize, grid: &SamplingGrid) -> f64 {
    let n = grid.n_samples;
    let fs = grid.sample_rate_hz();
    if 2 * k <= n {
        k as f64 * fs / n as f64
    } else {
        (k as f64 - n as f64) * fs / n as f64
    }
}

/// Conjugate-symmetric mask of the bins whose frequency lies in `±[lo, hi]` Hz.
pub fn physical_band_mask(grid: &SamplingGrid, band_hz: (f64, f64)) -> Result<Vec<bool>> {
    let (lo, hi) = band_hz;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidBand(format!("[{lo}, {hi}] Hz is not an interval")));
    }
    let nyquist = grid.sample_rate_hz() / 2.0;
    if lo.abs().max(hi.abs()) > nyquist * (1.0 + EDGE_EPS) {
        return Err(Error::InvalidBand(format!(
            "[{lo}, {hi}] Hz exceeds the Nyquist frequency {nyquist} Hz"
        )));
    }
    let tol = EDGE_EPS * nyquist;
    let inside = |f: f64| f >= lo - tol && f <= hi + tol;
    let n = grid.n_samples;
    Ok((0..n)
        .map(|k| {
            let f = bin_frequency_hz(k, grid);
            // the Nyquist bin stands for both +fs/2 and -fs/2
            let nyq_bin = 2 * k == n;
            inside(f) || inside(-f) || (nyq_bin && (inside(nyquist) || inside(-nyquist)))
        })
        .collect())
}

/// Ideal DFT-domain band-pass: keeps the bins in `±band_hz`, zeroes the rest.
pub fn band_extract(x: &[f64], band_hz: (f64, f64), grid: &SamplingGrid) -> Result<Vec<f64>> {
    if x.len() != grid.n_samples {
        return Err(Error::Dimension {
            expected: grid.n_samples,
            actual: x.len(),
        });
    }
    let mask = physical_band_mask(grid, band_hz)?;
    let mut spec = fft_real(x);
    for (c, keep) in spec.iter_mut().zip(&mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    Ok(ifft_real(&spec))
}

/// DFT bins strictly inside the gap `(ρπ, 2π − ρπ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfBandSet {
    n: usize,
    rho: f64,
    indices: Vec<usize>,
}

impl OutOfBandSet {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("out-of-band set needs N >= 2, got {n}")));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Invalid(format!("band fraction must lie in (0, 1], got {rho}")));
        }
        let nf = n as f64;
        let lo = rho * nf;
        let hi = (2.0 - rho) * nf;
        let tol = EDGE_EPS * nf;
        let indices = (0..n)
            .filter(|&k| {
                let two_k = 2.0 * k as f64;
                two_k > lo + tol && two_k < hi - tol
            })
            .collect();
        Ok(Self { n, rho, indices })
    }

    pub fn from_grid(grid: &SamplingGrid) -> Result<Self> {
        Self::new(grid.n_samples, grid.band_fraction())
    }

    /// Rebuilds a set from stored indices, checking them against `(n, rho)`.
    pub fn from_parts(n: usize, rho: f64, indices: Vec<usize>) -> Result<Self> {
        let set = Self::new(n, rho)?;
        if set.indices != indices {
            return Err(Error::Shape(format!(
                "stored band indices do not match N = {n}, rho = {rho}"
            )));
        }
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Complex values of `V x` over an [`OutOfBandSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSpectrum {
    pub values: Vec<Complex64>,
    pub band: OutOfBandSet,
}

impl PartialSpectrum {
    pub fn new(values: Vec<Complex64>, band: OutOfBandSet) -> Result<Self> {
        if values.len() != band.m() {
            return Err(Error::Dimension {
                expected: band.m(),
                actual: values.len(),
            });
        }
        Ok(Self { values, band })
    }

    pub fn zeros(band: OutOfBandSet) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); band.m()],
            band,
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.im).collect()
    }
}

/// The `M × N` matrix `V[r, n] = exp(−j 2π k_r n / N)`, applied via FFT.
#[derive(Clone)]
pub struct PartialDftOperator {
    band: OutOfBandSet,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    norm_sq: f64,
}

impl fmt::Debug for PartialDftOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialDftOperator")
            .field("band", &self.band)
            .field("norm_sq", &self.norm_sq)
            .finish()
    }
}

impl PartialDftOperator {
    /// Plans the transforms and computes `‖V‖₂²` eagerly.
    pub fn new(band: OutOfBandSet) -> Result<Self> {
        if band.is_empty() {
            return Err(Error::EmptyOperator);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(band.n());
        let inverse = planner.plan_fft_inverse(band.n());
        let mut op = Self {
            band,
            forward,
            inverse,
            norm_sq: 0.0,
        };
        op.norm_sq = op.power_iteration(1e-10, 1000);
        Ok(op)
    }

    pub fn band(&self) -> &OutOfBandSet {
        &self.band
    }

    /// Largest eigenvalue of `VᴴV`, cached at construction.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn apply(&self, x: &[f64]) -> Result<PartialSpectrum> {
        self.check_len(x.len())?;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let values = self.band.indices.iter().map(|&k| buf[k]).collect();
        Ok(PartialSpectrum {
            values,
            band: self.band.clone(),
        })
    }

    /// `Re(Vᴴ s)`.
    pub fn adjoint(&self, s: &PartialSpectrum) -> Result<Vec<f64>> {
        if s.band != self.band {
            return Err(Error::Shape("spectrum band does not match operator band".into()));
        }
        Ok(self.adjoint_complex(&s.values).into_iter().map(|c| c.re).collect())
    }

    /// `Re(VᴴV x)` for real `x`, i.e. `N` times the out-of-band projection.
    pub fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.apply(x)?;
        self.adjoint(&s)
    }

    fn adjoint_complex(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.band.n()];
        for (&k, &v) in self.band.indices.iter().zip(values) {
            buf[k] = v;
        }
        // rustfft's inverse is unnormalized: sum_k s_k exp(+j 2π k n / N)
        self.inverse.process(&mut buf);
        buf
    }

    fn power_iteration(&self, rel_tol: f64, max_iters: usize) -> f64 {
        let n = self.band.n();
        // deterministic start vector with energy on every bin
        let mut x: Vec<Complex64> = (0..n)
            .map(|i| {
                let h = crate::seed::derive(0x5eed, &[i as u64]);
                Complex64::new((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5, 0.25)
            })
            .collect();
        normalize(&mut x);
        let mut estimate = 0.0;
        for _ in 0..max_iters {
            let mut buf = x.clone();
            self.forward.process(&mut buf);
            let gathered: Vec<Complex64> = self.band.indices.iter().map(|&k| buf[k]).collect();
            let y = self.adjoint_complex(&gathered);
            let next: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
            x = y;
            normalize(&mut x);
            let done = (next - estimate).abs() <= rel_tol * next.abs();
            estimate = next;
            if done {
                break;
            }
        }
        estimate
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.band.n() {
            return Err(Error::Dimension {
                expected: self.band.n(),
                actual: len,
            });
        }
        Ok(())
    }
}

fn normalize(x: &mut [Complex64]) {
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|c| *c /= norm);
    }
}

/// `values[r] = Σ_n xhat[n] exp(−j 2π k_r n / N)`.
pub fn partial_spectrum(xhat: &[f64], band: &OutOfBandSet) -> Result<PartialSpectrum> {
    if xhat.len() != band.n() {
        return Err(Error::Dimension {
            expected: band.n(),
            actual: xhat.len(),
        });
    }
    let spec = fft_real(xhat);
    Ok(PartialSpectrum {
        values: band.indices.iter().map(|&k| spec[k]).collect(),
        band: band.clone(),
    })
}

/// Real part of `Vᴴ s`.
pub fn apply_adjoint(op: &PartialDftOperator, s: &PartialSpectrum) -> Result<Vec<f64>> {
    op.adjoint(s)
}

pub fn operator_norm_sq(op: &PartialDftOperator) -> f64 {
    op.norm_sq()
}

/// Dense `V` (rows `k_r`, columns `n`), for initialization and tests.
pub fn dense_partial_dft(band: &OutOfBandSet) -> Vec<Vec<Complex64>> {
    let n = band.n() as f64;
    band.indices
        .iter()
        .map(|&k| {
            (0..band.n())
                .map(|t| Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n))
                .collect()
        })
        .collect()
}
