//! Simulation of modulo (self-reset) sampling and recovery of the unfolded
//! signal.
//!
//! A band-limited signal `f` is observed through the centered modulo
//! `f_λ = ((f + λ) mod 2λ) − λ`, optionally followed by AWGN or a uniform
//! quantizer. Recovery estimates the residual `z = f_λ − f ∈ 2λℤ`:
//!
//! * [`hod_recover`] — higher-order differences, for heavily oversampled data;
//! * [`b2r2_recover`] — least-squares fit of `z` to the out-of-band spectrum;
//! * [`lasso_b2r2_recover`] — ℓ₁-regularized fit of `Δz` by ISTA;
//! * [`msquid_recover`] — an unfolded, trained version of that ISTA with a
//!   soft quantizer in every layer.

pub mod dataset;
pub mod error;
pub mod msquid;
pub mod recovery;
pub mod seed;
pub mod signals;
pub mod spectral;

pub use error::{Error, Result};
pub use msquid::{
    init_model, load_model, loss_and_gradients, msquid_recover, save_model, soft_quantize, train, AdamState,
    History, InitConfig, MsquidLayer, MsquidModel, SqConfig, TrainConfig, TrainingSet,
};
pub use recovery::{
    b2r2_recover, hod_order, hod_recover, lasso_b2r2_recover, round_to_grid, soft_threshold, unfold, B2r2Config,
    HodConfig, IstaConfig, LsSolver, ResidualEstimate,
};
pub use signals::{
    add_awgn, fold, generate_bandlimited, generate_two_band, jittered_snr, nmse, quantize_uniform, Corruption,
    FoldedObservation, FoldingConfig, SamplingGrid, Signal, SignalShape, TwoBandConfig,
};
pub use spectral::{
    apply_adjoint, band_extract, cumsum, first_diff, operator_norm_sq, partial_spectrum, OutOfBandSet,
    PartialDftOperator, PartialSpectrum,
};
