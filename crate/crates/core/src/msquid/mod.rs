//! The unfolded ISTA network with soft quantization.
//!
//! Each layer computes `u = W₁ẑ + Re(W₂)Re(F̂) − Im(W₂)Im(F̂)`, shrinks it with
//! a learned threshold and optionally pulls the result toward `2λℤ` with a
//! soft staircase. Gradients are derived by hand and checked against finite
//! differences in the test suite.

mod adam;
mod checkpoint;
mod grad;
mod model;
mod sq;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_model, load_model_for, save_model};
pub use grad::{loss_and_gradients, Gradients, LayerGradient};
pub use model::{batch_nmse, init_model, stack_spectra, InitConfig, MsquidLayer, MsquidModel};
pub use sq::{soft_quantize, SqConfig};
pub use train::{evaluate, residual_diff, train, train_with, EpochRecord, History, TrainConfig, TrainingSet};

use crate::error::{Error, Result};
use crate::recovery::ResidualEstimate;
use crate::signals::FoldedObservation;
use crate::spectral::{first_diff, partial_spectrum, OutOfBandSet};

/// Spectrum of the differenced samples, forward pass, rounding and integration.
pub fn msquid_recover(folded: &FoldedObservation, model: &MsquidModel) -> Result<ResidualEstimate> {
    let band = OutOfBandSet::from_grid(&folded.grid)?;
    if band != model.band || folded.n() != model.n() {
        return Err(Error::Shape(format!(
            "model expects N = {}, M = {}; observation has N = {}, M = {}",
            model.n(),
            model.m(),
            folded.n(),
            band.m()
        )));
    }
    if folded.lambda() != model.sq.lambda {
        return Err(Error::Config(format!(
            "model trained for lambda = {}, observation has lambda = {}",
            model.sq.lambda,
            folded.lambda()
        )));
    }
    let spectrum = partial_spectrum(&first_diff(&folded.samples), &model.band)?;
    let zhat = model.forward(&spectrum)?;
    Ok(ResidualEstimate::from_zhat(zhat, folded.lambda()))
}
