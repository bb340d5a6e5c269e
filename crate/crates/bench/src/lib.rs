//! Fixtures shared by the recovery benchmarks.

use msquid_core::{
    fold, generate_bandlimited, init_model, Corruption, FoldedObservation, FoldingConfig, InitConfig, MsquidModel,
    OutOfBandSet, Result, SamplingGrid, SqConfig,
};

/// A noiseless folded observation of a unit-peak signal.
pub fn observation(n: usize, of: f64, lambda: f64, seed: u64) -> Result<FoldedObservation> {
    let grid = SamplingGrid::new(n, of, 90.0)?;
    let folding = FoldingConfig::new(lambda)?;
    let clean = generate_bandlimited(&grid, seed)?;
    Ok(FoldedObservation {
        samples: fold(&clean.samples, &folding)?,
        folding,
        corruption: Corruption::None,
        grid,
    })
}

/// An untrained network; inference cost does not depend on the weights.
pub fn network(grid: &SamplingGrid, lambda: f64, layers: usize) -> Result<MsquidModel> {
    let band = OutOfBandSet::from_grid(grid)?;
    let sq = SqConfig::for_unit_peak(lambda)?.with_offset(lambda);
    init_model(
        &band,
        &InitConfig {
            layers,
            gamma0: 1e-3,
            beta0: None,
            sq,
            sq_enabled: true,
            faithful: true,
        },
    )
}
