//! Classical residual recovery: higher-order differences (HOD), the
//! band-limited residual fit (B²R²) and its sparse ℓ₁ variant solved by ISTA.
//!
//! Every method estimates the residual `z = f*_λ − f`, which takes values in
//! `2λℤ`; [`unfold`] subtracts it from the observation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{fold_scalar, FoldedObservation};
use crate::spectral::{cumsum, diff_n, first_diff, partial_spectrum, OutOfBandSet, PartialDftOperator, PartialSpectrum};

/// `2λ · ceil(floor(v/λ) / 2)`; odd multiples of `λ` round up.
pub fn round_to_grid(v: &[f64], lambda: f64) -> Vec<f64> {
    v.iter().map(|&x| round_scalar(x, lambda)).collect()
}

fn round_scalar(x: f64, lambda: f64) -> f64 {
    2.0 * lambda * ((x / lambda).floor() / 2.0).ceil()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEstimate {
    /// Estimate of the residual's first difference, before rounding.
    pub zhat: Vec<f64>,
    /// Integrated residual, every entry in `2λℤ`.
    pub z: Vec<f64>,
    pub lambda: f64,
}

impl ResidualEstimate {
    /// Rounds `zhat` onto the grid and integrates it.
    pub fn from_zhat(zhat: Vec<f64>, lambda: f64) -> Self {
        let z = cumsum(&round_to_grid(&zhat, lambda));
        Self { zhat, z, lambda }
    }

    /// Wraps an already-integrated residual.
    pub fn from_z(z: Vec<f64>, lambda: f64) -> Self {
        let z = round_to_grid(&z, lambda);
        let zhat = first_diff(&z);
        Self { zhat, z, lambda }
    }

    pub fn zero(n: usize, lambda: f64) -> Self {
        Self {
            zhat: vec![0.0; n],
            z: vec![0.0; n],
            lambda,
        }
    }
}

/// `f̃ = f*_λ − z`.
pub fn unfold(folded: &FoldedObservation, est: &ResidualEstimate) -> Result<Vec<f64>> {
    if folded.lambda() != est.lambda {
        return Err(Error::Config(format!(
            "observation lambda {} differs from estimate lambda {}",
            folded.lambda(),
            est.lambda
        )));
    }
    if folded.n() != est.z.len() {
        return Err(Error::Dimension {
            expected: folded.n(),
            actual: est.z.len(),
        });
    }
    Ok(folded.samples.iter().zip(&est.z).map(|(f, z)| f - z).collect())
}

/// `S_θ(x) = sign(x) · max(|x| − θ, 0)`.
pub fn soft_threshold(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidThreshold(theta));
    }
    Ok(x.iter().map(|&v| shrink(v, theta)).collect())
}

#[inline]
pub(crate) fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Partial DFT operator matching an observation's grid.
pub fn operator_for(folded: &FoldedObservation) -> Result<PartialDftOperator> {
    let band = OutOfBandSet::from_grid(&folded.grid)?;
    if band.n() != folded.n() {
        return Err(Error::Dimension {
            expected: band.n(),
            actual: folded.n(),
        });
    }
    if band.is_empty() {
        return Err(Error::RateTooLow(format!(
            "no out-of-band bins at oversampling {}",
            folded.grid.oversampling
        )));
    }
    PartialDftOperator::new(band)
}

// ---------------------------------------------------------------- HOD

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HodConfig {
    /// Upper bound on `‖f‖∞`, a multiple of `2λ`.
    pub beta_f: f64,
    pub order_cap: usize,
    /// Forces a difference order instead of deriving it from the rate.
    pub order: Option<usize>,
}

impl HodConfig {
    /// Smallest admissible bound for unit-peak signals.
    pub fn for_unit_peak(lambda: f64) -> Self {
        Self {
            beta_f: 2.0 * lambda * (1.0 / (2.0 * lambda)).ceil(),
            order_cap: 32,
            order: None,
        }
    }
}

/// `N = ceil((ln λ − ln β_f) / ln(T_s ω_m e))`, at least 1.
pub fn hod_order(lambda: f64, beta_f: f64, ts_wm: f64) -> Result<usize> {
    let rate = ts_wm * std::f64::consts::E;
    if !(rate < 1.0) {
        return Err(Error::RateTooLow(format!(
            "T_s·ω_m·e = {rate:.4} >= 1; the difference order is unbounded"
        )));
    }
    if !(lambda > 0.0 && beta_f >= lambda) {
        return Err(Error::Config(format!("need beta_f >= lambda > 0, got beta_f = {beta_f}, lambda = {lambda}")));
    }
    let raw = (lambda.ln() - beta_f.ln()) / rate.ln();
    // absorb round-off so exact integers are not pushed up by one
    Ok(((raw - 1e-9).ceil() as usize).max(1))
}

pub fn hod_recover(folded: &FoldedObservation, cfg: &HodConfig) -> Result<ResidualEstimate> {
    let lambda = folded.lambda();
    let two_lambda = 2.0 * lambda;
    let ratio = cfg.beta_f / two_lambda;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("beta_f = {} is not a multiple of 2λ = {two_lambda}", cfg.beta_f)));
    }
    if cfg.order_cap == 0 {
        return Err(Error::Config("order_cap must be at least 1".into()));
    }
    let order = match cfg.order {
        Some(o) => o.max(1),
        None => hod_order(lambda, cfg.beta_f, folded.grid.ts_wm())?,
    };
    if order > cfg.order_cap {
        return Err(Error::OrderOverflow {
            order,
            cap: cfg.order_cap,
        });
    }
    // Δᴺf* = Δᴺf + Δᴺz and fold(Δᴺf*) = Δᴺf once |Δᴺf| < λ
    let d = diff_n(&folded.samples, order);
    let dz: Vec<f64> = d.iter().map(|&v| v - fold_scalar(v, lambda)).collect();
    let mut stage = round_to_grid(&dz, lambda);
    for _ in 0..order {
        stage = cumsum(&stage);
        // integration constant: the residual starts at zero
        let offset = two_lambda * (stage[0] / two_lambda).round();
        stage.iter_mut().for_each(|v| *v -= offset);
        stage = round_to_grid(&stage, lambda);
    }
    Ok(ResidualEstimate::from_z(stage, lambda))
}

// ---------------------------------------------------------------- B²R²

/// How the least-squares fit is solved and rounded onto `2λℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsSolver {
    /// Ridge-regularized fit rounded one sample at a time: the sample with
    /// the smallest conditional variance is rounded first and the fit of the
    /// remaining samples is updated given that value.
    OrderedRounding,
    /// Conjugate gradients on the windowed normal equations, rounded by peeling.
    ConjugateGradient,
    /// Projected gradient descent with step `step_size`, rounded by peeling.
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct B2r2Config {
    /// Half-width of the support window around the center; `None` = full window.
    pub support_half_width: Option<usize>,
    /// Gradient step; defaults to `1/‖V‖²`.
    pub step_size: Option<f64>,
    /// Iteration budget per least-squares solve.
    pub max_iters: usize,
    pub tol: f64,
    /// Samples fixed at each window edge per pass; 0 solves once and rounds everything.
    pub peel_width: usize,
    pub solver: LsSolver,
    /// Ridge weight `ε` of [`LsSolver::OrderedRounding`], which minimizes
    /// `‖V(f*_λ − z)‖²/N + ε‖z‖²`.
    pub ridge: f64,
}

impl Default for B2r2Config {
    fn default() -> Self {
        Self {
            support_half_width: None,
            step_size: None,
            max_iters: 20_000,
            tol: 1e-12,
            peel_width: 4,
            solver: LsSolver::OrderedRounding,
            ridge: 5e-4,
        }
    }
}

impl B2r2Config {
    /// One projected-gradient solve followed by a single rounding pass.
    pub fn single_pass_pgd() -> Self {
        Self {
            peel_width: 0,
            solver: LsSolver::ProjectedGradient,
            ..Self::default()
        }
    }

    /// Conjugate gradients with edge peeling.
    pub fn cg_peel() -> Self {
        Self {
            solver: LsSolver::ConjugateGradient,
            ..Self::default()
        }
    }
}

/// Fits `z` supported on a window so that `f*_λ − z` has no out-of-band
/// energy: `min_z ‖V(f*_λ − z)‖²`.
///
/// The problem is ill-conditioned in directions that are nearly band-limited
/// and concentrated on the window, so rounding the least-squares solution in
/// one go fails. The default solver rounds one sample at a time, always the
/// best-determined one, and refits the rest given it; the iterative solvers
/// instead repeat the solve on a shrinking window, rounding and freezing
/// `peel_width` samples at both window edges per pass.
pub fn b2r2_recover(folded: &FoldedObservation, cfg: &B2r2Config) -> Result<ResidualEstimate> {
    let op = operator_for(folded)?;
    b2r2_with_operator(folded, cfg, &op)
}

pub fn b2r2_with_operator(folded: &FoldedObservation, cfg: &B2r2Config, op: &PartialDftOperator) -> Result<ResidualEstimate> {
    let n = folded.n();
    if op.band().n() != n {
        return Err(Error::Dimension {
            expected: op.band().n(),
            actual: n,
        });
    }
    let lambda = folded.lambda();
    let mu = cfg.step_size.unwrap_or(1.0 / op.norm_sq());
    if !(mu > 0.0 && mu <= 1.0 / op.norm_sq() * (1.0 + 1e-9)) {
        return Err(Error::Config(format!("step size {mu} outside (0, 1/‖V‖²]")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    let (mut lo, mut hi) = match cfg.support_half_width {
        None => (0, n - 1),
        Some(h) => (n / 2 - h.min(n / 2), (n / 2 + h).min(n - 1)),
    };
    let y = &folded.samples;
    if cfg.solver == LsSolver::OrderedRounding {
        if !(cfg.ridge > 0.0 && cfg.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be positive, got {}", cfg.ridge)));
        }
        let z = ordered_rounding(op, y, lo, hi, cfg.ridge, lambda)?;
        return Ok(ResidualEstimate::from_z(z, lambda));
    }
    let mut z = vec![0.0; n];
    let solve = |z: &mut Vec<f64>, lo: usize, hi: usize| -> Result<()> {
        let fixed: Vec<f64> = (0..n).map(|i| if i < lo || i > hi { z[i] } else { 0.0 }).collect();
        let free = match cfg.solver {
            LsSolver::ConjugateGradient => window_cg(op, y, &fixed, lo, hi, mu, cfg)?,
            LsSolver::ProjectedGradient => window_pgd(op, y, &fixed, lo, hi, mu, cfg)?,
            LsSolver::OrderedRounding => unreachable!("handled above"),
        };
        for i in lo..=hi {
            z[i] = free[i];
        }
        Ok(())
    };

    if cfg.peel_width == 0 {
        solve(&mut z, lo, hi)?;
        z = round_to_grid(&z, lambda);
    } else {
        loop {
            solve(&mut z, lo, hi)?;
            let len = hi - lo + 1;
            let k = cfg.peel_width.min(len.div_ceil(2));
            for j in 0..k {
                z[lo + j] = round_scalar(z[lo + j], lambda);
                z[hi - j] = round_scalar(z[hi - j], lambda);
            }
            if 2 * k >= len {
                break;
            }
            lo += k;
            hi -= k;
        }
    }
    Ok(ResidualEstimate::from_z(z, lambda))
}

/// Successive rounding of the ridge fit `x = (P + εI)⁻¹ P f*_λ`, where `P` is
/// the out-of-band projection.
///
/// Keeps the inverse `H` of the free block and, after rounding sample `j`,
/// conditions the rest on it: `x ← x + H[:, j] (z_j − x_j) / H_jj` and
/// `H ← H − H[:, j] H[j, :] / H_jj`. Samples outside `[lo, hi]` are pinned
/// to zero before any rounding.
fn ordered_rounding(op: &PartialDftOperator, y: &[f64], lo: usize, hi: usize, ridge: f64, lambda: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let scale = 1.0 / n as f64;
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    // P is circulant; its first column is the kernel
    let p: Vec<f64> = op.normal(&e0)?.iter().map(|v| v * scale).collect();
    // (P + εI)⁻¹ = P/(1 + ε) + (I − P)/ε for a projection
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let pij = p[(i + n - j) % n];
            let eye = if i == j { 1.0 } else { 0.0 };
            h[i * n + j] = pij / (1.0 + ridge) + (eye - pij) / ridge;
        }
    }
    let mut x: Vec<f64> = op.normal(y)?.iter().map(|v| v * scale / (1.0 + ridge)).collect();
    let mut z = vec![0.0; n];
    let mut alive: Vec<usize> = (0..n).collect();
    let mut col = Vec::with_capacity(n);

    let mut fix = |j: usize, value: f64, alive: &mut Vec<usize>, x: &mut Vec<f64>, h: &mut Vec<f64>| {
        alive.retain(|&i| i != j);
        let hjj = h[j * n + j];
        let step = (value - x[j]) / hjj;
        col.clear();
        col.extend(alive.iter().map(|&i| h[i * n + j]));
        for (&i, &c) in alive.iter().zip(col.iter()) {
            x[i] += c * step;
        }
        for (&i, &ci) in alive.iter().zip(col.iter()) {
            let row = &mut h[i * n..(i + 1) * n];
            let f = ci / hjj;
            for (&k, &ck) in alive.iter().zip(col.iter()) {
                row[k] -= f * ck;
            }
        }
    };

    for j in (0..lo).chain(hi + 1..n) {
        fix(j, 0.0, &mut alive, &mut x, &mut h);
    }
    while !alive.is_empty() {
        let j = alive
            .iter()
            .copied()
            .min_by(|&a, &b| h[a * n + a].total_cmp(&h[b * n + b]))
            .expect("nonempty");
        let v = round_scalar(x[j], lambda);
        z[j] = v;
        fix(j, v, &mut alive, &mut x, &mut h);
    }
    Ok(z)
}

/// `μ · Re(VᴴV x)` restricted to the window.
fn windowed_normal(op: &PartialDftOperator, x: &[f64], lo: usize, hi: usize, mu: f64) -> Result<Vec<f64>> {
    let mut out = op.normal(x)?;
    for (i, v) in out.iter_mut().enumerate() {
        *v = if i < lo || i > hi { 0.0 } else { mu * *v };
    }
    Ok(out)
}

fn window_rhs(op: &PartialDftOperator, y: &[f64], fixed: &[f64], lo: usize, hi: usize, mu: f64) -> Result<Vec<f64>> {
    let r: Vec<f64> = y.iter().zip(fixed).map(|(a, b)| a - b).collect();
    windowed_normal(op, &r, lo, hi, mu)
}

fn window_cg(
    op: &PartialDftOperator,
    y: &[f64],
    fixed: &[f64],
    lo: usize,
    hi: usize,
    mu: f64,
    cfg: &B2r2Config,
) -> Result<Vec<f64>> {
    let b = window_rhs(op, y, fixed, lo, hi, mu)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b;
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let stop = cfg.tol * rs.sqrt();
    for _ in 0..cfg.max_iters {
        if rs.sqrt() <= stop || rs == 0.0 {
            break;
        }
        let ap = windowed_normal(op, &p, lo, hi, mu)?;
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            break;
        }
        let alpha = rs / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_next = dot(&r, &r);
        let beta = rs_next / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_next;
    }
    Ok(x)
}

fn window_pgd(
    op: &PartialDftOperator,
    y: &[f64],
    fixed: &[f64],
    lo: usize,
    hi: usize,
    mu: f64,
    cfg: &B2r2Config,
) -> Result<Vec<f64>> {
    let n = y.len();
    let mut x = vec![0.0; n];
    for _ in 0..cfg.max_iters {
        let r: Vec<f64> = (0..n).map(|i| y[i] - fixed[i] - x[i]).collect();
        let g = windowed_normal(op, &r, lo, hi, mu)?;
        let step = dot(&g, &g).sqrt();
        for i in lo..=hi {
            x[i] += g[i];
        }
        if step < cfg.tol {
            break;
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- LASSO-B²R²

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IstaConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub gamma_scale: f64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-9,
            gamma_scale: 0.1,
        }
    }
}

/// `γ = scale · ‖Re(Vᴴ F̂)‖∞`.
pub fn ista_gamma(op: &PartialDftOperator, spectrum: &PartialSpectrum, gamma_scale: f64) -> Result<f64> {
    let back = op.adjoint(spectrum)?;
    Ok(gamma_scale * back.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// One iteration `S_{γτ}(ẑ − τ Re(Vᴴ(Vẑ − F̂)))`.
pub fn ista_step(op: &PartialDftOperator, spectrum: &PartialSpectrum, zhat: &[f64], tau: f64, gamma: f64) -> Result<Vec<f64>> {
    let vz = op.apply(zhat)?;
    let resid: Vec<_> = vz.values.iter().zip(&spectrum.values).map(|(a, b)| a - b).collect();
    let grad = op.adjoint(&PartialSpectrum::new(resid, spectrum.band.clone())?)?;
    Ok(zhat
        .iter()
        .zip(&grad)
        .map(|(z, g)| shrink(z - tau * g, gamma * tau))
        .collect())
}

/// `½‖Vẑ − F̂‖² + γ‖ẑ‖₁`.
pub fn lasso_objective(op: &PartialDftOperator, spectrum: &PartialSpectrum, zhat: &[f64], gamma: f64) -> Result<f64> {
    let vz = op.apply(zhat)?;
    let fit: f64 = vz.values.iter().zip(&spectrum.values).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(0.5 * fit + gamma * zhat.iter().map(|v| v.abs()).sum::<f64>())
}

/// Runs ISTA from zero; returns the final iterate and the iteration count.
pub fn ista_solve(op: &PartialDftOperator, spectrum: &PartialSpectrum, gamma: f64, cfg: &IstaConfig) -> Result<(Vec<f64>, usize)> {
    if !(cfg.gamma_scale > 0.0) {
        return Err(Error::Config(format!("gamma_scale must be positive, got {}", cfg.gamma_scale)));
    }
    let tau = 1.0 / op.norm_sq();
    let mut z = vec![0.0; op.band().n()];
    for it in 0..cfg.max_iters {
        let next = ista_step(op, spectrum, &z, tau, gamma)?;
        let change = next.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        z = next;
        if change < cfg.tol {
            return Ok((z, it + 1));
        }
    }
    Ok((z, cfg.max_iters))
}

pub fn lasso_b2r2_recover(folded: &FoldedObservation, cfg: &IstaConfig) -> Result<ResidualEstimate> {
    let op = operator_for(folded)?;
    lasso_with_operator(folded, cfg, &op)
}

pub fn lasso_with_operator(folded: &FoldedObservation, cfg: &IstaConfig, op: &PartialDftOperator) -> Result<ResidualEstimate> {
    let spectrum = partial_spectrum(&first_diff(&folded.samples), op.band())?;
    let gamma = ista_gamma(op, &spectrum, cfg.gamma_scale)?;
    let (zhat, _) = ista_solve(op, &spectrum, gamma, cfg)?;
    Ok(ResidualEstimate::from_zhat(zhat, folded.lambda()))
}
