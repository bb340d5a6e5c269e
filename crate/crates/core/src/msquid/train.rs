//! Mini-batch ADAM training with per-epoch validation.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::grad::batch_loss_and_gradients;
use super::model::{batch_nmse, MsquidModel};
use crate::error::{Error, Result};
use crate::seed;
use crate::signals::{fold, FoldedObservation};
use crate::spectral::{first_diff, partial_spectrum, OutOfBandSet, PartialSpectrum};

/// Inputs `(Re F̂, Im F̂)` and targets `ẑ`, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub fr: Array2<f64>,
    pub fi: Array2<f64>,
    pub targets: Array2<f64>,
}

impl TrainingSet {
    pub fn new(fr: Array2<f64>, fi: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if fr.dim() != fi.dim() || fr.nrows() != targets.nrows() {
            return Err(Error::Shape(format!(
                "inputs {:?}/{:?} and targets {:?} disagree",
                fr.dim(),
                fi.dim(),
                targets.dim()
            )));
        }
        Ok(Self { fr, fi, targets })
    }

    pub fn from_pairs(pairs: &[(PartialSpectrum, Vec<f64>)], band: &OutOfBandSet) -> Result<Self> {
        let (n, m) = (band.n(), band.m());
        let mut fr = Array2::zeros((pairs.len(), m));
        let mut fi = Array2::zeros((pairs.len(), m));
        let mut targets = Array2::zeros((pairs.len(), n));
        for (row, (s, t)) in pairs.iter().enumerate() {
            if &s.band != band || t.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: t.len(),
                });
            }
            for (c, v) in s.values.iter().enumerate() {
                fr[[row, c]] = v.re;
                fi[[row, c]] = v.im;
            }
            targets.row_mut(row).iter_mut().zip(t).for_each(|(d, s)| *d = *s);
        }
        Self::new(fr, fi, targets)
    }

    /// Pairs each observation's spectrum with the first difference of its
    /// true residual `fold(f) − f`.
    pub fn from_observations(observations: &[FoldedObservation], clean: &[Vec<f64>], band: &OutOfBandSet) -> Result<Self> {
        if observations.len() != clean.len() {
            return Err(Error::Dimension {
                expected: observations.len(),
                actual: clean.len(),
            });
        }
        let pairs = observations
            .iter()
            .zip(clean)
            .map(|(obs, f)| {
                let spectrum = partial_spectrum(&first_diff(&obs.samples), band)?;
                Ok((spectrum, residual_diff(f, obs.folding.lambda)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(&pairs, band)
    }

    pub fn len(&self) -> usize {
        self.fr.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self, idx: &[usize]) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        (
            self.fr.select(Axis(0), idx),
            self.fi.select(Axis(0), idx),
            self.targets.select(Axis(0), idx),
        )
    }
}

/// `Δ(fold(f) − f)`, the sparse training target.
pub fn residual_diff(clean: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let folded = fold(clean, &crate::signals::FoldingConfig::new(lambda)?)?;
    let z: Vec<f64> = folded.iter().zip(clean).map(|(a, b)| a - b).collect();
    Ok(first_diff(&crate::recovery::round_to_grid(&z, lambda)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_nmse: f64,
    pub val_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_val_nmse: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` keeps the initial model.
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn best_val_nmse(&self) -> f64 {
        match self.best_epoch {
            Some(e) => self.epochs[e].val_nmse,
            None => self.initial_val_nmse,
        }
    }
}

/// Mean NMSE of the model over a set, evaluated in chunks.
pub fn evaluate(model: &MsquidModel, set: &TrainingSet) -> Result<f64> {
    const CHUNK: usize = 256;
    let mut total = 0.0;
    let mut start = 0;
    while start < set.len() {
        let end = (start + CHUNK).min(set.len());
        let rows = start..end;
        let fr = set.fr.slice(ndarray::s![rows.clone(), ..]);
        let fi = set.fi.slice(ndarray::s![rows.clone(), ..]);
        let t = set.targets.slice(ndarray::s![rows, ..]);
        let out = model.forward_batch(fr, fi)?;
        total += batch_nmse(t, out.view()) * (end - start) as f64;
        start = end;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Trains a copy of `model`, returning the parameters with the lowest
/// validation NMSE (the initial model included) and the per-epoch history.
pub fn train(model: &MsquidModel, train_set: &TrainingSet, val_set: &TrainingSet, cfg: &TrainConfig) -> Result<(MsquidModel, History)> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    model: &MsquidModel,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MsquidModel, History)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Invalid("training and validation sets must be nonempty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config(format!(
            "need batch_size >= 1 and lr > 0, got {} and {}",
            cfg.batch_size, cfg.lr
        )));
    }
    check_set(model, train_set)?;
    check_set(model, val_set)?;

    let initial_val_nmse = evaluate(model, val_set)?;
    let mut history = History {
        initial_val_nmse,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: None,
    };
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_val = initial_val_nmse;
    let mut params = current.flatten();
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::stream::SHUFFLE, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (fr, fi, t) = train_set.rows(idx);
            let (loss, grads) = batch_loss_and_gradients(&current, fr.view(), fi.view(), t.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            adam_step(&mut params, &grads.flatten(), &mut adam)?;
            current.assign_flat(&params)?;
            clamp_scalars(&mut current);
            params = current.flatten();
            loss_sum += loss;
            batches += 1;
        }
        let val_nmse = evaluate(&current, val_set)?;
        if !val_nmse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: batches,
                loss: val_nmse,
            });
        }
        let record = EpochRecord {
            epoch,
            train_nmse: loss_sum / batches as f64,
            val_nmse,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if val_nmse < best_val {
            best_val = val_nmse;
            best = current.clone();
            history.best_epoch = Some(epoch);
        }
    }
    Ok((best, history))
}

/// Keeps `γ ≥ 0` and `β > 0` after an optimizer step.
fn clamp_scalars(model: &mut MsquidModel) {
    for l in &mut model.layers {
        l.gamma = l.gamma.max(0.0);
        l.beta = l.beta.max(1e-6);
    }
}

fn check_set(model: &MsquidModel, set: &TrainingSet) -> Result<()> {
    let ok = |v: ArrayView2<f64>, cols: usize| v.ncols() == cols;
    if !ok(set.fr.view(), model.m()) || !ok(set.targets.view(), model.n()) {
        return Err(Error::Dimension {
            expected: model.m(),
            actual: set.fr.ncols(),
        });
    }
    Ok(())
}
