//! Soft quantizer: a smooth staircase of `tanh` steps toward `2λℤ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqConfig {
    pub lambda: f64,
    /// `D = 2ℓ + 1` steps.
    pub ell: usize,
    /// Subtracted from every shift; `λ` centers each plateau on a grid level.
    pub shift_offset: f64,
}

impl SqConfig {
    pub fn new(lambda: f64, ell: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidFolding(lambda));
        }
        Ok(Self {
            lambda,
            ell,
            shift_offset: 0.0,
        })
    }

    /// `ℓ = ceil(1 / 2λ) + 1`: every jump a unit-peak signal can make, plus a guard level.
    pub fn for_unit_peak(lambda: f64) -> Result<Self> {
        let ell = (1.0 / (2.0 * lambda)).ceil() as usize + 1;
        Self::new(lambda, ell)
    }

    pub fn with_offset(mut self, shift_offset: f64) -> Self {
        self.shift_offset = shift_offset;
        self
    }

    pub fn levels(&self) -> usize {
        2 * self.ell + 1
    }

    /// `s_i = (i − (ℓ+1))·2λ − offset` for `i = 1..=D`.
    pub fn shifts(&self) -> Vec<f64> {
        (1..=self.levels())
            .map(|i| (i as f64 - (self.ell as f64 + 1.0)) * 2.0 * self.lambda - self.shift_offset)
            .collect()
    }

    /// `1/(λD)`: unit slope of the small-β linearization.
    pub fn default_beta(&self) -> f64 {
        1.0 / (self.lambda * self.levels() as f64)
    }
}

/// `Q(x) = −λ + Σᵢ λ tanh(β (x − sᵢ))`.
pub fn soft_quantize(x: &[f64], sq: &SqConfig, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("soft-quantizer steepness must be positive, got {beta}")));
    }
    let shifts = sq.shifts();
    Ok(x.iter().map(|&v| eval(v, &shifts, sq.lambda, beta).0).collect())
}

/// Returns `(Q(x), ∂Q/∂x, ∂Q/∂β)`.
#[inline]
pub(crate) fn eval(x: f64, shifts: &[f64], lambda: f64, beta: f64) -> (f64, f64, f64) {
    let mut q = -lambda;
    let mut dx = 0.0;
    let mut db = 0.0;
    for &s in shifts {
        let d = x - s;
        let t = (beta * d).tanh();
        let sech2 = 1.0 - t * t;
        q += lambda * t;
        dx += lambda * beta * sech2;
        db += lambda * d * sech2;
    }
    (q, dx, db)
}
