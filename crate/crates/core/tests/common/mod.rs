#![allow(dead_code)]

use nalgebra::DMatrix;
use permsafe::gcmr::{GcmrSampler, RegressionKind};
use permsafe::gknock::{fit_knockoff_model, sample_knockoffs, KnockoffConfig};
use permsafe::linalg::{covariance, frobenius_distance};
use permsafe::normal;
use permsafe::stats::ks_two_sample_passes;
use permsafe::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_permsafe")
}

/// Correlated standard normal columns, `cols[k][n]`.
pub fn gaussian_columns(n: usize, corr: &DMatrix<f64>, seed: u64) -> Vec<Vec<f64>> {
    let d = corr.nrows();
    let l = corr.clone().cholesky().expect("positive definite").l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut e = vec![0.0; d];
    for _ in 0..n {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for a in 0..d {
            cols[a].push((0..=a).map(|k| l[(a, k)] * e[k]).sum());
        }
    }
    cols
}

pub fn ar1(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |a, b| rho.powi((a as i32 - b as i32).abs()))
}

/// Uniform-marginal Gaussian-copula data with an independent target.
pub fn copula_dataset(n: usize, corr: &DMatrix<f64>, seed: u64) -> Dataset {
    let cols: Vec<Vec<f64>> = gaussian_columns(n, corr, seed)
        .into_iter()
        .map(|c| c.into_iter().map(normal::cdf).collect())
        .collect();
    let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
    Dataset::new(cols, names, vec![0.0; n], "y").unwrap()
}

pub fn pair_corr(rho: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
}

fn correlation_matrix(cols: &[&[f64]]) -> DMatrix<f64> {
    let c = covariance(cols);
    DMatrix::from_fn(c.nrows(), c.ncols(), |a, b| {
        c[(a, b)] / (c[(a, a)] * c[(b, b)]).sqrt()
    })
}

/// One GCMR trial on bivariate copula data: whether every marginal passes
/// the two-sample KS test and the worst correlation-matrix distance.
pub fn gcmr_trial(rho: f64, n: usize, seed: u64) -> (bool, f64) {
    let ds = copula_dataset(n, &pair_corr(rho), seed);
    let sampler = GcmrSampler::fit(&ds, RegressionKind::Linear).unwrap();
    let original = correlation_matrix(&[ds.column(0), ds.column(1)]);
    let mut ks_ok = true;
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let new = sampler
            .permute(j, seed.wrapping_mul(31).wrapping_add(j as u64))
            .unwrap();
        ks_ok &= ks_two_sample_passes(&new, ds.column(j), 0.01);
        let mut cols: Vec<&[f64]> = vec![ds.column(0), ds.column(1)];
        cols[j] = &new;
        worst = worst.max(frobenius_distance(&correlation_matrix(&cols), &original));
    }
    (ks_ok, worst)
}

/// Frobenius errors of the knockoff moment conditions for one draw.
pub fn knockoff_trial(d: usize, rho: f64, n: usize, seed: u64) -> (f64, f64) {
    let z = gaussian_columns(n, &ar1(d, rho), seed);
    let model = fit_knockoff_model(&z, &KnockoffConfig::default()).unwrap();
    let zk = sample_knockoffs(&model, &z, seed ^ 0x5eed);
    let mut all: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    all.extend(zk.iter().map(Vec::as_slice));
    let joint = covariance(&all);
    let cov_k = joint.view((d, d), (d, d)).into_owned();
    let cross = joint.view((0, d), (d, d)).into_owned();
    let target_cross = &model.sigma - DMatrix::from_diagonal(&model.s);
    (
        frobenius_distance(&cov_k, &model.sigma),
        frobenius_distance(&cross, &target_cross),
    )
}
