//! Reverse-mode gradients of the NMSE loss through the unfolded network.

use ndarray::{Array2, ArrayView2, Zip};

use super::model::{stack_spectra, MsquidModel};
use super::sq;
use crate::error::{Error, Result};
use crate::spectral::PartialSpectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub w1: Array2<f64>,
    pub w2_re: Array2<f64>,
    pub w2_im: Array2<f64>,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    /// Same ordering as [`MsquidModel::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w1.iter());
            out.extend(l.w2_re.iter());
            out.extend(l.w2_im.iter());
            out.push(l.gamma);
            out.push(l.beta);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Mean per-example NMSE and its gradient with respect to every parameter.
///
/// Examples whose target is identically zero use the plain squared error.
pub fn loss_and_gradients(model: &MsquidModel, batch: &[(PartialSpectrum, Vec<f64>)]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let spectra: Vec<&PartialSpectrum> = batch.iter().map(|(s, _)| s).collect();
    for s in &spectra {
        if s.band != model.band {
            return Err(Error::Dimension {
                expected: model.m(),
                actual: s.values.len(),
            });
        }
    }
    let (fr, fi) = stack_spectra(&spectra, model.m())?;
    let mut targets = Array2::zeros((batch.len(), model.n()));
    for (row, (_, t)) in batch.iter().enumerate() {
        if t.len() != model.n() {
            return Err(Error::Dimension {
                expected: model.n(),
                actual: t.len(),
            });
        }
        targets.row_mut(row).iter_mut().zip(t).for_each(|(d, s)| *d = *s);
    }
    batch_loss_and_gradients(model, fr.view(), fi.view(), targets.view())
}

pub(crate) fn batch_loss_and_gradients(
    model: &MsquidModel,
    fr: ArrayView2<f64>,
    fi: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Gradients)> {
    let b = fr.nrows();
    if b == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let trace = model.run(fr, fi, true)?;
    let out = &trace.output;

    let mut loss = 0.0;
    let mut dz = Array2::<f64>::zeros(out.raw_dim());
    for row in 0..b {
        let t = targets.row(row);
        let e = out.row(row);
        let energy = t.dot(&t);
        let denom = if energy > 0.0 { energy } else { 1.0 };
        let mut err = 0.0;
        for ((d, &tv), &ev) in dz.row_mut(row).iter_mut().zip(t.iter()).zip(e.iter()) {
            let r = tv - ev;
            err += r * r;
            *d = -2.0 * r / (denom * b as f64);
        }
        loss += err / denom;
    }
    loss /= b as f64;

    let shifts = model.sq.shifts();
    let lambda = model.sq.lambda;
    let mut grads = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate().rev() {
        let u = &trace.pre[i];
        let v = &trace.shrunk[i];

        let mut dbeta = 0.0;
        let dv = if layer.sq_enabled {
            let mut dv = Array2::<f64>::zeros(v.raw_dim());
            Zip::from(&mut dv).and(&dz).and(v).for_each(|d, &g, &x| {
                let (_, dqdx, dqdb) = sq::eval(x, &shifts, lambda, layer.beta);
                *d = g * dqdx;
                dbeta += g * dqdb;
            });
            dv
        } else {
            dz
        };

        // subgradient 0 at the kink |u| = γ
        let mut dgamma = 0.0;
        let mut du = Array2::<f64>::zeros(u.raw_dim());
        Zip::from(&mut du).and(&dv).and(u).for_each(|d, &g, &x| {
            if x > layer.gamma {
                *d = g;
                dgamma -= g;
            } else if x < -layer.gamma {
                *d = g;
                dgamma += g;
            }
        });

        let du_t = du.t();
        let w1 = if i > 0 {
            du_t.dot(&trace.inputs[i])
        } else {
            Array2::zeros(layer.w1.raw_dim())
        };
        let w2_re = du_t.dot(&fr);
        let w2_im = -du_t.dot(&fi);
        dz = if i > 0 { du.dot(&layer.w1) } else { du };
        grads.push(LayerGradient {
            w1,
            w2_re,
            w2_im,
            gamma: dgamma,
            beta: dbeta,
        });
    }
    grads.reverse();
    Ok((loss, Gradients { layers: grads }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msquid::model::{init_model, InitConfig};
    use crate::msquid::sq::SqConfig;
    use crate::spectral::{partial_spectrum, OutOfBandSet};

    #[test]
    fn target_equal_to_output_gives_zero_loss_and_gradients() {
        let band = OutOfBandSet::new(16, 0.5).unwrap();
        let model = init_model(
            &band,
            &InitConfig {
                layers: 2,
                gamma0: 0.001,
                beta0: None,
                sq: SqConfig::new(0.25, 3).unwrap(),
                sq_enabled: true,
                faithful: true,
            },
        )
        .unwrap();
        let mut x = vec![0.0; 16];
        x[4] = 0.5;
        let s = partial_spectrum(&x, &band).unwrap();
        let out = model.forward(&s).unwrap();
        let (loss, g) = loss_and_gradients(&model, &[(s, out)]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn empty_batch_is_invalid() {
        let band = OutOfBandSet::new(16, 0.5).unwrap();
        let model = init_model(
            &band,
            &InitConfig {
                layers: 1,
                gamma0: 0.0,
                beta0: None,
                sq: SqConfig::new(0.25, 3).unwrap(),
                sq_enabled: false,
                faithful: false,
            },
        )
        .unwrap();
        assert!(matches!(loss_and_gradients(&model, &[]), Err(Error::Invalid(_))));
    }
}
