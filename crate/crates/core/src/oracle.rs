//! Independent reference computations for tests.
//!
//! Everything here uses dense textbook formulas (explicit inverses,
//! determinants, exhaustive grids) and shares no code path with the
//! factorized implementations it checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::geometry::{unit_grid, NormalizedPoint};
use crate::surrogate::{GpPosterior, HyperGrid, KernelParams, Observation};

fn se(a: &NormalizedPoint, b: &NormalizedPoint, p: &KernelParams) -> f64 {
    let dh = a.nu_h - b.nu_h;
    let dv = a.nu_v - b.nu_v;
    p.signal_variance
        * (-(dh * dh) / (2.0 * p.lengthscale_h * p.lengthscale_h)
            - (dv * dv) / (2.0 * p.lengthscale_v * p.lengthscale_v))
            .exp()
}

fn dense_kernel(a: &[NormalizedPoint], b: &[NormalizedPoint], p: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| se(&a[i], &b[j], p))
}

fn noisy_gram_inverse(obs: &[Observation], p: &KernelParams) -> DMatrix<f64> {
    let x: Vec<_> = obs.iter().map(|o| o.point).collect();
    let k = dense_kernel(&x, &x, p) + DMatrix::identity(x.len(), x.len()) * p.noise_variance;
    k.try_inverse().expect("oracle expects an invertible Gram matrix")
}

/// Posterior mean and covariance via `K⁻¹` computed by LU inversion.
pub fn dense_posterior(obs: &[Observation], p: &KernelParams, batch: &[NormalizedPoint]) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<_> = obs.iter().map(|o| o.point).collect();
    let m = obs.iter().map(|o| o.value).sum::<f64>() / obs.len() as f64;
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.value - m));
    let inv = noisy_gram_inverse(obs, p);
    let ks = dense_kernel(&x, batch, p);
    let kss = dense_kernel(batch, batch, p);
    let mean = ks.transpose() * &inv * y;
    let cov = kss - ks.transpose() * &inv * &ks;
    (mean.iter().map(|v| v + m).collect(), cov)
}

pub fn dense_log_marginal_likelihood(obs: &[Observation], p: &KernelParams) -> f64 {
    let x: Vec<_> = obs.iter().map(|o| o.point).collect();
    let n = x.len();
    let m = obs.iter().map(|o| o.value).sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.value - m));
    let k = dense_kernel(&x, &x, p) + DMatrix::identity(n, n) * p.noise_variance;
    let det = k.clone().lu().determinant();
    let inv = k.try_inverse().expect("invertible");
    -0.5 * (y.transpose() * inv * &y)[(0, 0)] - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * PI).ln()
}

/// Brute-force maximizer of the dense log marginal likelihood.
pub fn best_candidate_by_dense_lml(obs: &[Observation], grid: &HyperGrid) -> KernelParams {
    let mut best = (f64::NEG_INFINITY, grid.candidates()[0]);
    for c in grid.candidates() {
        let v = dense_log_marginal_likelihood(obs, &c);
        if v > best.0 {
            best = (v, c);
        }
    }
    best.1
}

/// `½ ln det(I + K / noise)` by LU determinant.
pub fn dense_information_gain(p: &KernelParams, points: &[NormalizedPoint]) -> f64 {
    let n = points.len();
    let m = DMatrix::identity(n, n) + dense_kernel(points, points, p) / p.noise_variance;
    0.5 * m.lu().determinant().ln()
}

/// Noisy draws of a GP sample path at `n` uniform points, clamped to
/// `[0, 1]`.
pub fn sample_gp(p: &KernelParams, prior_mean: f64, n: usize, seed: u64) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<_> = (0..n)
        .map(|_| NormalizedPoint::clamped(rng.random(), rng.random()))
        .collect();
    let k = dense_kernel(&x, &x, p) + DMatrix::identity(n, n) * (p.noise_variance + 1e-10);
    let l = k.cholesky().expect("prior covariance is PD").unpack();
    let normal = rand_distr_standard(&mut rng, n);
    let f = l * normal;
    x.into_iter()
        .zip(f.iter())
        .map(|(pt, v)| Observation::new(pt, (prior_mean + v).clamp(0.0, 1.0)).unwrap())
        .collect()
}

fn rand_distr_standard(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    // Box-Muller.
    DVector::from_fn(n, |_, _| {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    })
}

/// Maximum of `μ + √β σ` over a `res × res` lattice.
pub fn grid_max_ucb(gp: &GpPosterior, beta: f64, res: usize) -> f64 {
    unit_grid(res, res)
        .iter()
        .map(|p| gp.mean(p) + beta.sqrt() * gp.variance(p).sqrt())
        .fold(f64::NEG_INFINITY, f64::max)
}
