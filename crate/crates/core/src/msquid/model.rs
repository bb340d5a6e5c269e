//! Network parameters, initialization and the forward pass.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::sq::{self, SqConfig};
use crate::error::{Error, Result};
use crate::recovery::shrink;
use crate::spectral::{OutOfBandSet, PartialSpectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct MsquidLayer {
    /// `N × N`.
    pub w1: Array2<f64>,
    /// `N × M`, real part of `W₂`.
    pub w2_re: Array2<f64>,
    /// `N × M`, imaginary part of `W₂`.
    pub w2_im: Array2<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub sq_enabled: bool,
}

impl MsquidLayer {
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.w2_re.len() + self.w2_im.len() + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsquidModel {
    pub layers: Vec<MsquidLayer>,
    pub sq: SqConfig,
    pub band: OutOfBandSet,
}

/// How [`init_model`] builds each layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub layers: usize,
    /// Initial threshold γ⁽ⁱ⁾ (an ISTA threshold `γ` corresponds to `γτ`).
    pub gamma0: f64,
    /// Initial SQ steepness; `None` uses [`SqConfig::default_beta`].
    pub beta0: Option<f64>,
    pub sq: SqConfig,
    pub sq_enabled: bool,
    /// `W₁ = I − τ Re(VᴴV)` when set, otherwise the diagonal `(1 − τN)·I`.
    pub faithful: bool,
}

/// Dense `Re(V)` and `Im(V)` (`M × N`) for a band.
pub(crate) fn dense_parts(band: &OutOfBandSet) -> (Array2<f64>, Array2<f64>) {
    let n = band.n();
    let idx = band.indices();
    let phase = |r: usize, t: usize| -2.0 * std::f64::consts::PI * ((idx[r] * t) % n) as f64 / n as f64;
    let re = Array2::from_shape_fn((idx.len(), n), |(r, t)| phase(r, t).cos());
    let im = Array2::from_shape_fn((idx.len(), n), |(r, t)| phase(r, t).sin());
    (re, im)
}

pub fn init_model(band: &OutOfBandSet, cfg: &InitConfig) -> Result<MsquidModel> {
    if cfg.layers < 1 {
        return Err(Error::Invalid("an unfolded network needs at least one layer".into()));
    }
    if !(cfg.gamma0 >= 0.0) {
        return Err(Error::Invalid(format!("initial threshold must be nonnegative, got {}", cfg.gamma0)));
    }
    let beta0 = cfg.beta0.unwrap_or_else(|| cfg.sq.default_beta());
    if !(beta0 > 0.0) {
        return Err(Error::Invalid(format!("initial steepness must be positive, got {beta0}")));
    }
    let op = crate::spectral::PartialDftOperator::new(band.clone())?;
    let tau = 1.0 / op.norm_sq();
    let n = band.n();
    let (v_re, v_im) = dense_parts(band);
    let w1 = if cfg.faithful {
        // Re(VᴴV) = Re(V)ᵀRe(V) + Im(V)ᵀIm(V)
        let gram = v_re.t().dot(&v_re) + v_im.t().dot(&v_im);
        Array2::eye(n) - gram * tau
    } else {
        Array2::eye(n) * (1.0 - tau * n as f64)
    };
    // W₂ = τVᴴ: conjugate transpose flips the sign of the imaginary part
    let w2_re = v_re.t().to_owned() * tau;
    let w2_im = v_im.t().to_owned() * -tau;
    let layer = MsquidLayer {
        w1,
        w2_re,
        w2_im,
        gamma: cfg.gamma0,
        beta: beta0,
        sq_enabled: cfg.sq_enabled,
    };
    Ok(MsquidModel {
        layers: vec![layer; cfg.layers],
        sq: cfg.sq,
        band: band.clone(),
    })
}

/// Per-layer activations kept for the backward pass.
pub(crate) struct Trace {
    /// Input to each layer, `B × N` (the first is zero).
    pub inputs: Vec<Array2<f64>>,
    /// Pre-threshold activations `u`.
    pub pre: Vec<Array2<f64>>,
    /// Post-threshold activations `v`.
    pub shrunk: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl MsquidModel {
    pub fn n(&self) -> usize {
        self.band.n()
    }

    pub fn m(&self) -> usize {
        self.band.m()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(MsquidLayer::param_count).sum()
    }

    /// Parameters in checkpoint order: per layer `W₁, W₂re, W₂im, γ, β`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w1.iter());
            out.extend(l.w2_re.iter());
            out.extend(l.w2_im.iter());
            out.push(l.gamma);
            out.push(l.beta);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut rest = flat;
        for l in &mut self.layers {
            for dst in [&mut l.w1, &mut l.w2_re, &mut l.w2_im] {
                let (head, tail) = rest.split_at(dst.len());
                dst.iter_mut().zip(head).for_each(|(d, s)| *d = *s);
                rest = tail;
            }
            l.gamma = rest[0];
            l.beta = rest[1];
            rest = &rest[2..];
        }
        Ok(())
    }

    fn check_spectrum(&self, s: &PartialSpectrum) -> Result<()> {
        if s.band != self.band {
            return Err(Error::Dimension {
                expected: self.m(),
                actual: s.values.len(),
            });
        }
        Ok(())
    }

    /// Runs the network on one spectrum, starting from `ẑ⁰ = 0`.
    pub fn forward(&self, spectrum: &PartialSpectrum) -> Result<Vec<f64>> {
        self.check_spectrum(spectrum)?;
        let fr = Array2::from_shape_vec((1, self.m()), spectrum.re()).map_err(shape_err)?;
        let fi = Array2::from_shape_vec((1, self.m()), spectrum.im()).map_err(shape_err)?;
        Ok(self.forward_batch(fr.view(), fi.view())?.row(0).to_vec())
    }

    /// Batched forward pass over rows of `fr`, `fi` (`B × M`).
    pub fn forward_batch(&self, fr: ArrayView2<f64>, fi: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.run(fr, fi, false)?.output)
    }

    pub(crate) fn run(&self, fr: ArrayView2<f64>, fi: ArrayView2<f64>, keep: bool) -> Result<Trace> {
        if fr.ncols() != self.m() || fi.ncols() != self.m() || fr.nrows() != fi.nrows() {
            return Err(Error::Dimension {
                expected: self.m(),
                actual: fr.ncols(),
            });
        }
        let b = fr.nrows();
        let shifts = self.sq.shifts();
        let mut z = Array2::<f64>::zeros((b, self.n()));
        let mut trace = Trace {
            inputs: Vec::new(),
            pre: Vec::new(),
            shrunk: Vec::new(),
            output: Array2::zeros((0, 0)),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let mut u = fr.dot(&layer.w2_re.t()) - fi.dot(&layer.w2_im.t());
            // the first layer's input is identically zero
            if i > 0 {
                u += &z.dot(&layer.w1.t());
            }
            let v = u.mapv(|x| shrink(x, layer.gamma));
            let next = if layer.sq_enabled {
                v.mapv(|x| sq::eval(x, &shifts, self.sq.lambda, layer.beta).0)
            } else {
                v.clone()
            };
            if keep {
                trace.inputs.push(std::mem::replace(&mut z, next));
                trace.pre.push(u);
                trace.shrunk.push(v);
            } else {
                z = next;
            }
        }
        trace.output = z;
        Ok(trace)
    }
}

pub(crate) fn shape_err(e: ndarray::ShapeError) -> Error {
    Error::Shape(e.to_string())
}

/// Stacks spectra into `(Re, Im)` matrices of shape `B × M`.
pub fn stack_spectra(spectra: &[&PartialSpectrum], m: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut fr = Array2::zeros((spectra.len(), m));
    let mut fi = Array2::zeros((spectra.len(), m));
    for (row, s) in spectra.iter().enumerate() {
        if s.values.len() != m {
            return Err(Error::Dimension {
                expected: m,
                actual: s.values.len(),
            });
        }
        fr.row_mut(row).assign(&Array1::from(s.re()));
        fi.row_mut(row).assign(&Array1::from(s.im()));
    }
    Ok((fr, fi))
}

/// Mean NMSE of rows of `estimate` against `target`; zero-energy targets
/// contribute their plain squared error instead.
pub fn batch_nmse(target: ArrayView2<f64>, estimate: ArrayView2<f64>) -> f64 {
    let b = target.nrows();
    if b == 0 {
        return 0.0;
    }
    let total: f64 = target
        .axis_iter(Axis(0))
        .zip(estimate.axis_iter(Axis(0)))
        .map(|(t, e)| {
            let energy = t.dot(&t);
            let err: f64 = t.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if energy > 0.0 {
                err / energy
            } else {
                err
            }
        })
        .sum();
    total / b as f64
}
