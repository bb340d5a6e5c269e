use msquid_core::recovery::{ista_solve, lasso_objective};
use msquid_core::{
    b2r2_recover, fold, generate_bandlimited, hod_recover, lasso_b2r2_recover, nmse, partial_spectrum, unfold,
    B2r2Config, Corruption, FoldedObservation, FoldingConfig, HodConfig, IstaConfig, OutOfBandSet,
    PartialDftOperator, PartialSpectrum, SamplingGrid,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn observe(grid: SamplingGrid, lambda: f64, seed: u64) -> (Vec<f64>, FoldedObservation) {
    let folding = FoldingConfig::new(lambda).unwrap();
    let clean = generate_bandlimited(&grid, seed).unwrap().samples;
    let obs = FoldedObservation {
        samples: fold(&clean, &folding).unwrap(),
        folding,
        corruption: Corruption::None,
        grid,
    };
    (clean, obs)
}

#[test]
fn hod_is_exact_above_the_rate_bound() {
    let grid = SamplingGrid::new(1024, 18.0, 90.0).unwrap();
    for seed in 0..10 {
        let (clean, obs) = observe(grid, 0.25, seed);
        let est = hod_recover(&obs, &HodConfig::for_unit_peak(0.25)).unwrap();
        let x = unfold(&obs, &est).unwrap();
        let err = clean.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "seed {seed}: max error {err}");
    }
}

#[test]
fn methods_leave_unfolded_signals_alone() {
    let grid = SamplingGrid::new(128, 2.0, 90.0).unwrap();
    let folding = FoldingConfig::new(0.25).unwrap();
    let clean: Vec<f64> = generate_bandlimited(&grid, 3).unwrap().samples.iter().map(|v| 0.2 * v).collect();
    let obs = FoldedObservation {
        samples: fold(&clean, &folding).unwrap(),
        folding,
        corruption: Corruption::None,
        grid,
    };
    let hod = HodConfig {
        order: Some(1),
        ..HodConfig::for_unit_peak(0.25)
    };
    for est in [
        hod_recover(&obs, &hod).unwrap(),
        b2r2_recover(&obs, &B2r2Config::default()).unwrap(),
        b2r2_recover(&obs, &B2r2Config::cg_peel()).unwrap(),
        lasso_b2r2_recover(&obs, &IstaConfig::default()).unwrap(),
    ] {
        assert!(est.z.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn b2r2_noiseless_recovery() {
    let grid = SamplingGrid::new(256, 2.0, 90.0).unwrap();
    for cfg in [B2r2Config::default(), B2r2Config::cg_peel()] {
        for seed in 0..8 {
            let (clean, obs) = observe(grid, 0.25, seed);
            let x = unfold(&obs, &b2r2_recover(&obs, &cfg).unwrap()).unwrap();
            let e = nmse(&clean, &x).unwrap();
            assert!(e < 1e-10, "{:?} seed {seed}: nmse {e}", cfg.solver);
        }
    }
}

/// Real form `[Re V; Im V]` of the partial DFT.
fn real_operator(band: &OutOfBandSet) -> DMatrix<f64> {
    let n = band.n();
    let m = band.m();
    DMatrix::from_fn(2 * m, n, |r, t| {
        let k = band.indices()[r % m];
        let phase = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
        if r < m {
            phase.cos()
        } else {
            phase.sin()
        }
    })
}

/// Exhaustive minimum of `½‖Ax − b‖² + γ‖x‖₁` over supports of size ≤ 2.
fn lasso_oracle(a: &DMatrix<f64>, b: &DVector<f64>, gamma: f64) -> f64 {
    let n = a.ncols();
    let objective = |x: &DVector<f64>| 0.5 * (a * x - b).norm_squared() + gamma * x.iter().map(|v| v.abs()).sum::<f64>();
    let mut best = objective(&DVector::zeros(n));
    let mut supports: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for j in i + 1..n {
            supports.push(vec![i, j]);
        }
    }
    for s in supports {
        let cols = a.select_columns(&s);
        let gram = cols.transpose() * &cols;
        let Some(inv) = gram.clone().try_inverse() else { continue };
        if gram.determinant().abs() < 1e-9 {
            continue;
        }
        for signs in 0..(1 << s.len()) {
            let sign = DVector::from_fn(s.len(), |i, _| if signs >> i & 1 == 1 { -1.0 } else { 1.0 });
            let xs = &inv * (cols.transpose() * b - gamma * &sign);
            if xs.iter().zip(sign.iter()).any(|(v, sg)| v * sg <= 0.0) {
                continue;
            }
            let mut x = DVector::zeros(n);
            for (k, &idx) in s.iter().enumerate() {
                x[idx] = xs[k];
            }
            best = best.min(objective(&x));
        }
    }
    best
}

#[test]
fn ista_matches_exhaustive_lasso() {
    let band = OutOfBandSet::new(8, 0.5).unwrap();
    let op = PartialDftOperator::new(band.clone()).unwrap();
    let a = real_operator(&band);
    let cfg = IstaConfig {
        max_iters: 200_000,
        tol: 1e-14,
        gamma_scale: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut zhat = vec![0.0; 8];
        zhat[rng.random_range(0..8)] = if rng.random::<bool>() { 0.5 } else { -0.5 };
        let spec = partial_spectrum(&zhat, &band).unwrap();
        let b = DVector::from_iterator(2 * band.m(), spec.re().into_iter().chain(spec.im()));
        let gamma = 0.1 * (a.transpose() * &b).amax();
        let (x, _) = ista_solve(&op, &spec, gamma, &cfg).unwrap();
        let gap = lasso_objective(&op, &spec, &x, gamma).unwrap() - lasso_oracle(&a, &b, gamma);
        assert!(gap.abs() < 1e-8, "objective gap {gap}");
    }
}

#[test]
fn lasso_objective_matches_real_form() {
    let band = OutOfBandSet::new(16, 0.5).unwrap();
    let op = PartialDftOperator::new(band.clone()).unwrap();
    let a = real_operator(&band);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec: PartialSpectrum = partial_spectrum(&target, &band).unwrap();
    let b = DVector::from_iterator(2 * band.m(), spec.re().into_iter().chain(spec.im()));
    let xv = DVector::from_vec(x.clone());
    let expect = 0.5 * (&a * &xv - &b).norm_squared() + 0.3 * xv.iter().map(|v| v.abs()).sum::<f64>();
    let got = lasso_objective(&op, &spec, &x, 0.3).unwrap();
    assert!((got - expect).abs() < 1e-10 * expect.max(1.0));
}
