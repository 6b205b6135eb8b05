//! Exact Gaussian-process regression over the unit square with a
//! squared-exponential kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::NormalizedPoint;

/// Prior mean used when there is nothing to average.
pub const EMPTY_PRIOR_MEAN: f64 = 0.5;

/// Jitter ladder tried after an unjittered factorization fails.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscale_h: f64,
    pub lengthscale_v: f64,
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal_variance: 0.04,
            lengthscale_h: 0.2,
            lengthscale_v: 0.2,
            noise_variance: 1e-4,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.signal_variance) {
            return Err(Error::InvalidArgument(format!(
                "signal_variance must be > 0, got {}",
                self.signal_variance
            )));
        }
        if !ok(self.lengthscale_h) || !ok(self.lengthscale_v) {
            return Err(Error::InvalidArgument(format!(
                "lengthscales must be > 0, got ({}, {})",
                self.lengthscale_h, self.lengthscale_v
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// A measured success rate at a training viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: NormalizedPoint,
    pub value: f64,
}

impl Observation {
    pub fn new(point: NormalizedPoint, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "observed success rate {value} outside [0, 1]"
            )));
        }
        Ok(Self { point, value })
    }
}

/// `σ² exp(-½ Σ ((a - b) / ℓ)²)`.
pub fn kernel(a: &NormalizedPoint, b: &NormalizedPoint, params: &KernelParams) -> f64 {
    let dh = (a.nu_h - b.nu_h) / params.lengthscale_h;
    let dv = (a.nu_v - b.nu_v) / params.lengthscale_v;
    params.signal_variance * (-0.5 * (dh * dh + dv * dv)).exp()
}

pub fn gram_matrix(points: &[NormalizedPoint], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = kernel(&points[i], &points[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factorization with the jitter ladder. Returns the lower factor
/// and the jitter that was added to the diagonal.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c.unpack(), 0.0));
    }
    let mut jitter = JITTER_START;
    loop {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = jittered.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter = (jitter * 10.0).min(JITTER_MAX);
    }
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub(crate) fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `Lᵀ x = b` in place.
fn backward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[(j, i)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// A fitted GP: training data plus the factorization of `K + noise·I`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    params: KernelParams,
    observations: Vec<Observation>,
    prior_mean: f64,
    factor: DMatrix<f64>,
    weights: Vec<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// The GP prior with no data.
    pub fn prior(params: KernelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            observations: Vec::new(),
            prior_mean: EMPTY_PRIOR_MEAN,
            factor: DMatrix::zeros(0, 0),
            weights: Vec::new(),
            jitter: 0.0,
        })
    }

    /// Conditions the GP on `observations`. The prior mean is the constant
    /// mean of the observed values.
    pub fn fit(observations: &[Observation], params: KernelParams) -> Result<Self> {
        params.validate()?;
        if observations.is_empty() {
            return Err(Error::InvalidArgument(
                "fit needs at least one observation".into(),
            ));
        }
        if params.noise_variance == 0.0 {
            for (i, a) in observations.iter().enumerate() {
                for (j, b) in observations.iter().enumerate().take(i) {
                    if a.point == b.point {
                        return Err(Error::DuplicateInputs { first: j, second: i });
                    }
                }
            }
        }
        let points: Vec<NormalizedPoint> = observations.iter().map(|o| o.point).collect();
        let mut k = gram_matrix(&points, &params);
        for i in 0..points.len() {
            k[(i, i)] += params.noise_variance;
        }
        let (factor, jitter) = cholesky_with_jitter(&k)?;

        let prior_mean =
            observations.iter().map(|o| o.value).sum::<f64>() / observations.len() as f64;
        let mut weights: Vec<f64> = observations.iter().map(|o| o.value - prior_mean).collect();
        forward_substitute(&factor, &mut weights);
        backward_substitute(&factor, &mut weights);

        Ok(Self {
            params,
            observations: observations.to_vec(),
            prior_mean,
            factor,
            weights,
            jitter,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Jitter added during factorization (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solution `w` of `(K + noise·I) w = y - m`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Lower-triangular factor of `K + noise·I` (plus jitter).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub(crate) fn cross_kernel(&self, q: &NormalizedPoint) -> Vec<f64> {
        self.observations
            .iter()
            .map(|o| kernel(&o.point, q, &self.params))
            .collect()
    }

    /// Posterior mean together with `L⁻¹ k(X, q)`, which posterior
    /// covariances are built from.
    pub(crate) fn mean_and_whitened(&self, q: &NormalizedPoint) -> (f64, Vec<f64>) {
        let mut v = self.cross_kernel(q);
        let mean = self.prior_mean + v.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        forward_substitute(&self.factor, &mut v);
        (mean, v)
    }

    pub fn mean(&self, q: &NormalizedPoint) -> f64 {
        self.prior_mean
            + self
                .cross_kernel(q)
                .iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn variance(&self, q: &NormalizedPoint) -> f64 {
        let (_, v) = self.mean_and_whitened(q);
        (self.params.signal_variance - dot(&v, &v)).max(0.0)
    }

    /// Posterior mean vector and covariance matrix on a batch.
    pub fn posterior_mean_cov(&self, batch: &[NormalizedPoint]) -> (DVector<f64>, DMatrix<f64>) {
        let q = batch.len();
        let (means, whitened): (Vec<f64>, Vec<Vec<f64>>) =
            batch.iter().map(|p| self.mean_and_whitened(p)).unzip();
        let mut cov = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..=i {
                let c = kernel(&batch[i], &batch[j], &self.params) - dot(&whitened[i], &whitened[j]);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        (DVector::from_vec(means), cov)
    }

    /// Exact log marginal likelihood of the training values under the
    /// fitted hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.observations.len();
        if n == 0 {
            return 0.0;
        }
        let data_fit: f64 = self
            .observations
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| (o.value - self.prior_mean) * w)
            .sum();
        let log_det: f64 = (0..n).map(|i| self.factor[(i, i)].ln()).sum();
        -0.5 * data_fit - log_det - 0.5 * n as f64 * (2.0 * PI).ln()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `count` log-spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogRange {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max >= min && count >= 1) {
            return Err(Error::InvalidArgument(format!(
                "log range needs 0 < min <= max and count >= 1, got [{min}, {max}] x {count}"
            )));
        }
        Ok(Self { min, max, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        let step = (hi - lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == 0 {
                    self.min
                } else if i + 1 == self.count {
                    self.max
                } else {
                    (lo + step * i as f64).exp()
                }
            })
            .collect()
    }
}

/// Search ranges for hyperparameter selection. Both lengthscales are
/// searched independently over the same range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub signal_variance: LogRange,
    pub lengthscale: LogRange,
    pub noise_variance: LogRange,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            signal_variance: LogRange { min: 0.005, max: 0.2, count: 6 },
            lengthscale: LogRange { min: 0.05, max: 0.8, count: 7 },
            noise_variance: LogRange { min: 1e-5, max: 1e-2, count: 4 },
        }
    }
}

impl HyperGrid {
    /// Every candidate in a fixed nested order (signal, ℓ_h, ℓ_v, noise).
    pub fn candidates(&self) -> Vec<KernelParams> {
        let ls = self.lengthscale.values();
        let noise = self.noise_variance.values();
        let mut out = Vec::new();
        for s in self.signal_variance.values() {
            for &lh in &ls {
                for &lv in &ls {
                    for &nv in &noise {
                        out.push(KernelParams {
                            signal_variance: s,
                            lengthscale_h: lh,
                            lengthscale_v: lv,
                            noise_variance: nv,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Grid search for the hyperparameters with the largest exact log marginal
/// likelihood. Ties keep the earliest candidate.
pub fn fit_hyperparameters(observations: &[Observation], grid: &HyperGrid) -> Result<KernelParams> {
    if observations.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "hyperparameter fitting needs at least 3 observations, got {}",
            observations.len()
        )));
    }
    let mut best: Option<(f64, KernelParams)> = None;
    for params in grid.candidates() {
        let Ok(gp) = GpPosterior::fit(observations, params) else {
            continue;
        };
        let lml = gp.log_marginal_likelihood();
        if !lml.is_finite() {
            continue;
        }
        if best.map_or(true, |(b, _)| lml > b) {
            best = Some((lml, params));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::NoViableHyperparameters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(h: f64, v: f64) -> NormalizedPoint {
        NormalizedPoint::new(h, v).unwrap()
    }

    fn obs(h: f64, v: f64, y: f64) -> Observation {
        Observation::new(pt(h, v), y).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> Vec<Observation> {
        (0..n)
            .map(|_| obs(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn kernel_examples() {
        let unit = KernelParams {
            signal_variance: 1.0,
            lengthscale_h: 1.0,
            lengthscale_v: 1.0,
            noise_variance: 0.0,
        };
        assert_eq!(kernel(&pt(0.3, 0.7), &pt(0.3, 0.7), &unit), 1.0);
        assert_abs_diff_eq!(kernel(&pt(0.0, 0.0), &pt(1.0, 1.0), &unit), 0.367879, epsilon = 1e-6);
        let p = KernelParams {
            signal_variance: 2.0,
            lengthscale_h: 0.5,
            ..unit
        };
        assert_abs_diff_eq!(kernel(&pt(0.0, 0.0), &pt(0.5, 0.0), &p), 1.213061, epsilon = 1e-6);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = KernelParams::default();
        p.lengthscale_v = 0.0;
        assert!(GpPosterior::prior(p).is_err());
        p = KernelParams::default();
        p.noise_variance = -1.0;
        assert!(GpPosterior::fit(&[obs(0.5, 0.5, 0.5)], p).is_err());
        assert!(Observation::new(pt(0.1, 0.1), 1.2).is_err());
        assert!(GpPosterior::fit(&[], KernelParams::default()).is_err());
    }

    #[test]
    fn single_observation_interpolates() {
        let params = KernelParams {
            noise_variance: 0.0,
            ..KernelParams::default()
        };
        let gp = GpPosterior::fit(&[obs(0.3, 0.6, 0.8)], params).unwrap();
        assert_abs_diff_eq!(gp.mean(&pt(0.3, 0.6)), 0.8, epsilon = 1e-12);
        assert!(gp.variance(&pt(0.3, 0.6)) < 1e-12);
    }

    #[test]
    fn coincident_noise_free_observations_fail() {
        let params = KernelParams {
            noise_variance: 0.0,
            ..KernelParams::default()
        };
        let err = GpPosterior::fit(&[obs(0.2, 0.2, 0.1), obs(0.2, 0.2, 0.9)], params).unwrap_err();
        assert_eq!(err, Error::DuplicateInputs { first: 0, second: 1 });
        // With noise the same data is fine.
        assert!(GpPosterior::fit(&[obs(0.2, 0.2, 0.1), obs(0.2, 0.2, 0.9)], KernelParams::default()).is_ok());
    }

    #[test]
    fn single_point_closed_form_update() {
        // The prior mean is the data mean, so a far-away counterweight at 0.2
        // pins it to 0.5. With ℓ = 0.05 the two points do not interact.
        let params = KernelParams {
            signal_variance: 1.0,
            lengthscale_h: 0.05,
            lengthscale_v: 0.05,
            noise_variance: 0.0,
        };
        let p0 = pt(0.2, 0.2);
        let data = [Observation::new(p0, 0.8).unwrap(), obs(0.95, 0.95, 0.2)];
        let gp = GpPosterior::fit(&data, params).unwrap();
        assert_abs_diff_eq!(gp.prior_mean(), 0.5, epsilon = 1e-15);
        for q in [pt(0.2, 0.2), pt(0.25, 0.2), pt(0.22, 0.27), pt(0.5, 0.5)] {
            let expected = 0.5 + kernel(&q, &p0, &params) * (0.8 - 0.5);
            assert_abs_diff_eq!(gp.mean(&q), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn prior_posterior_is_prior() {
        let params = KernelParams::default();
        let gp = GpPosterior::prior(params).unwrap();
        let batch = [pt(0.1, 0.2), pt(0.4, 0.9), pt(0.8, 0.3)];
        let (m, c) = gp.posterior_mean_cov(&batch);
        assert!(m.iter().all(|&x| x == EMPTY_PRIOR_MEAN));
        assert_eq!(c, gram_matrix(&batch, &params));
    }

    #[test]
    fn batch_at_training_point_is_certain() {
        let params = KernelParams {
            noise_variance: 0.0,
            ..KernelParams::default()
        };
        let data = [obs(0.1, 0.1, 0.3), obs(0.6, 0.4, 0.7), obs(0.9, 0.9, 0.5)];
        let gp = GpPosterior::fit(&data, params).unwrap();
        let (m, c) = gp.posterior_mean_cov(&[pt(0.6, 0.4)]);
        assert_abs_diff_eq!(m[0], 0.7, epsilon = 1e-9);
        assert!(c[(0, 0)].abs() < 1e-9);
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_problem(&mut rng, 3);
        let batch = [pt(0.33, 0.4), pt(0.9, 0.05)];
        let params = KernelParams::default();
        let gp = GpPosterior::fit(&data, params).unwrap();
        let (m, c) = gp.posterior_mean_cov(&batch);
        let (om, oc) = oracle::dense_posterior(&data, &params, &batch);
        for i in 0..2 {
            assert_abs_diff_eq!(m[i], om[i], epsilon = 1e-8);
            for j in 0..2 {
                assert_abs_diff_eq!(c[(i, j)], oc[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn weights_solve_the_linear_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_problem(&mut rng, 9);
        let params = KernelParams::default();
        let gp = GpPosterior::fit(&data, params).unwrap();
        let points: Vec<_> = data.iter().map(|o| o.point).collect();
        let mut k = gram_matrix(&points, &params);
        for i in 0..k.nrows() {
            k[(i, i)] += params.noise_variance + gp.jitter();
        }
        let w = DVector::from_column_slice(gp.weights());
        let lhs = k * w;
        for (i, o) in data.iter().enumerate() {
            assert_abs_diff_eq!(lhs[i], o.value - gp.prior_mean(), epsilon = 1e-10);
        }
        assert!((0..gp.factor().nrows()).all(|i| gp.factor()[(i, i)] > 0.0));
    }

    #[test]
    fn lml_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_problem(&mut rng, 12);
        for params in HyperGrid::default().candidates().into_iter().step_by(97) {
            let gp = GpPosterior::fit(&data, params).unwrap();
            if gp.jitter() == 0.0 {
                assert_abs_diff_eq!(
                    gp.log_marginal_likelihood(),
                    oracle::dense_log_marginal_likelihood(&data, &params),
                    epsilon = 1e-6
                );
            }
        }
    }

    #[test]
    fn hyperparameters_need_three_points() {
        let data = [obs(0.1, 0.1, 0.2), obs(0.7, 0.3, 0.4)];
        assert!(fit_hyperparameters(&data, &HyperGrid::default()).is_err());
    }

    #[test]
    fn hyperparameters_recover_lengthscale() {
        let truth = KernelParams {
            signal_variance: 0.04,
            lengthscale_h: 0.2,
            lengthscale_v: 0.2,
            noise_variance: 1e-4,
        };
        let grid = HyperGrid::default();
        let ls = grid.lengthscale.values();
        let idx = ls.iter().position(|&l| (l - 0.2).abs() < 1e-12).unwrap();
        let allowed = &ls[idx - 1..=idx + 1];
        let mut hits = 0;
        for seed in 0..5 {
            let data = oracle::sample_gp(&truth, 0.5, 80, seed);
            let fitted = fit_hyperparameters(&data, &grid).unwrap();
            let near = |l: f64| allowed.iter().any(|&a| (a - l).abs() < 1e-12);
            if near(fitted.lengthscale_h) && near(fitted.lengthscale_v) {
                hits += 1;
            }
        }
        assert!(hits >= 4, "lengthscale recovered on only {hits}/5 draws");
    }

    #[test]
    fn constant_observations_choose_the_flattest_explanation() {
        let data: Vec<_> = [(0.1, 0.2), (0.5, 0.5), (0.8, 0.3), (0.3, 0.9), (0.7, 0.8)]
            .iter()
            .map(|&(h, v)| obs(h, v, 0.4))
            .collect();
        let grid = HyperGrid::default();
        let fitted = fit_hyperparameters(&data, &grid).unwrap();
        let best = oracle::best_candidate_by_dense_lml(&data, &grid);
        assert_eq!(fitted, best);
        assert_eq!(fitted.lengthscale_h, grid.lengthscale.max);
        assert_eq!(fitted.lengthscale_v, grid.lengthscale.max);
    }

    #[test]
    fn log_range_endpoints() {
        let r = LogRange::new(0.01, 1.0, 3).unwrap();
        let v = r.values();
        assert_eq!(v[0], 0.01);
        assert_abs_diff_eq!(v[1], 0.1, epsilon = 1e-15);
        assert_eq!(v[2], 1.0);
        assert!(LogRange::new(0.0, 1.0, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn variance_bounded_and_monotone(seed in 0u64..10_000, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_problem(&mut rng, n + 1);
            let params = KernelParams::default();
            let smaller = GpPosterior::fit(&data[..n], params).unwrap();
            let larger = GpPosterior::fit(&data, params).unwrap();
            for _ in 0..8 {
                let q = pt(rng.random(), rng.random());
                let before = smaller.variance(&q);
                let after = larger.variance(&q);
                prop_assert!(before >= 0.0 && before <= params.signal_variance + 1e-9);
                prop_assert!(after <= before + 1e-9);
            }
        }

        #[test]
        fn noise_free_interpolation(seed in 0u64..10_000, n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_problem(&mut rng, n);
            let params = KernelParams { noise_variance: 0.0, lengthscale_h: 0.1, lengthscale_v: 0.1, ..KernelParams::default() };
            let gp = GpPosterior::fit(&data, params).unwrap();
            if gp.jitter() == 0.0 {
                for o in &data {
                    prop_assert!((gp.mean(&o.point) - o.value).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn gram_matrices_are_psd(seed in 0u64..10_000, n in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<_> = (0..n).map(|_| pt(rng.random(), rng.random())).collect();
            let k = gram_matrix(&points, &KernelParams::default());
            prop_assert_eq!(&k, &k.transpose());
            let eig = k.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e >= -1e-8));
        }
    }
}
