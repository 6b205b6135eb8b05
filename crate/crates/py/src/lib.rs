//! Python bindings for the vantage toolkit.
//!
//! Points cross the boundary as `(nu_h, nu_v)` tuples in the unit square and
//! viewpoints as `(theta_h, theta_v)` tuples in radians.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use vantage::campaign::{run, CampaignConfig, CampaignRecord, Strategy};
use vantage::geometry::{self, AngleBounds, NormalizedPoint, SphereConfig, Viewpoint};
use vantage::simulator::{self, exhaustive_optimum, Landscape, Preset, ORACLE_RESOLUTION};
use vantage::surrogate::{GpPosterior, KernelParams, Observation};
use vantage::{acquisition, theory, AcquisitionConfig};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(p: (f64, f64)) -> PyResult<NormalizedPoint> {
    NormalizedPoint::new(p.0, p.1).map_err(value_error)
}

fn points(ps: &[(f64, f64)]) -> PyResult<Vec<NormalizedPoint>> {
    ps.iter().copied().map(point).collect()
}

fn tuple(p: &NormalizedPoint) -> (f64, f64) {
    (p.nu_h, p.nu_v)
}

#[pyclass(name = "AngleBounds", module = "vantage", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAngleBounds(AngleBounds);

#[pymethods]
impl PyAngleBounds {
    #[new]
    fn new(h_min: f64, h_max: f64, v_min: f64, v_max: f64) -> PyResult<Self> {
        AngleBounds::new(h_min, h_max, v_min, v_max).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn default() -> Self {
        Self(AngleBounds::default())
    }

    #[getter]
    fn h(&self) -> (f64, f64) {
        (self.0.h_min, self.0.h_max)
    }

    #[getter]
    fn v(&self) -> (f64, f64) {
        (self.0.v_min, self.0.v_max)
    }

    fn normalize(&self, theta_h: f64, theta_v: f64) -> PyResult<(f64, f64)> {
        let v = Viewpoint { theta_h, theta_v };
        geometry::normalize(v, &self.0).map(|p| tuple(&p)).map_err(value_error)
    }

    fn denormalize(&self, nu_h: f64, nu_v: f64) -> PyResult<(f64, f64)> {
        let v = geometry::denormalize(point((nu_h, nu_v))?, &self.0).map_err(value_error)?;
        Ok((v.theta_h, v.theta_v))
    }

    fn __repr__(&self) -> String {
        format!(
            "AngleBounds(h=({}, {}), v=({}, {}))",
            self.0.h_min, self.0.h_max, self.0.v_min, self.0.v_max
        )
    }
}

/// Camera position for a viewpoint on a sphere around `base`.
#[pyfunction]
#[pyo3(signature = (theta_h, theta_v, base = (0.0, 0.0, 0.0), radius = 1.0))]
fn to_cartesian(theta_h: f64, theta_v: f64, base: (f64, f64, f64), radius: f64) -> PyResult<(f64, f64, f64)> {
    let sphere = SphereConfig::new([base.0, base.1, base.2], radius).map_err(value_error)?;
    let [x, y, z] = geometry::to_cartesian(Viewpoint { theta_h, theta_v }, &sphere);
    Ok((x, y, z))
}

#[pyclass(name = "KernelParams", module = "vantage", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernelParams(KernelParams);

#[pymethods]
impl PyKernelParams {
    #[new]
    #[pyo3(signature = (signal_variance = 0.04, lengthscale_h = 0.2, lengthscale_v = 0.2, noise_variance = 1e-4))]
    fn new(signal_variance: f64, lengthscale_h: f64, lengthscale_v: f64, noise_variance: f64) -> PyResult<Self> {
        let p = KernelParams { signal_variance, lengthscale_h, lengthscale_v, noise_variance };
        p.validate().map_err(value_error)?;
        Ok(Self(p))
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.0.signal_variance
    }

    #[getter]
    fn lengthscale_h(&self) -> f64 {
        self.0.lengthscale_h
    }

    #[getter]
    fn lengthscale_v(&self) -> f64 {
        self.0.lengthscale_v
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.0.noise_variance
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "KernelParams(signal_variance={}, lengthscale_h={}, lengthscale_v={}, noise_variance={})",
            p.signal_variance, p.lengthscale_h, p.lengthscale_v, p.noise_variance
        )
    }
}

#[pyclass(name = "GaussianProcess", module = "vantage", frozen, skip_from_py_object)]
struct PyGaussianProcess(GpPosterior);

#[pymethods]
impl PyGaussianProcess {
    /// Conditions on `values` observed at `points`. With no points this is
    /// the prior.
    #[new]
    #[pyo3(signature = (points, values, params = None))]
    fn new(points: Vec<(f64, f64)>, values: Vec<f64>, params: Option<&PyKernelParams>) -> PyResult<Self> {
        if points.len() != values.len() {
            return Err(PyValueError::new_err(format!(
                "got {} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let observations = points
            .into_iter()
            .zip(values)
            .map(|(p, v)| Observation::new(point(p)?, v).map_err(value_error))
            .collect::<PyResult<Vec<_>>>()?;
        let params = params.map_or_else(KernelParams::default, |p| p.0);
        GpPosterior::fit(&observations, params).map(Self).map_err(value_error)
    }

    #[getter]
    fn params(&self) -> PyKernelParams {
        PyKernelParams(*self.0.params())
    }

    #[getter]
    fn prior_mean(&self) -> f64 {
        self.0.prior_mean()
    }

    fn mean(&self, nu_h: f64, nu_v: f64) -> PyResult<f64> {
        Ok(self.0.mean(&point((nu_h, nu_v))?))
    }

    fn variance(&self, nu_h: f64, nu_v: f64) -> PyResult<f64> {
        Ok(self.0.variance(&point((nu_h, nu_v))?))
    }

    /// Joint posterior mean vector and covariance matrix over a batch.
    fn mean_cov(&self, batch: Vec<(f64, f64)>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let (mu, cov) = self.0.posterior_mean_cov(&points(&batch)?);
        let rows = (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect();
        Ok((mu.iter().copied().collect(), rows))
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.0.log_marginal_likelihood()
    }
}

fn acquisition_config(q: usize, beta: f64, mc_samples: usize, restarts: usize) -> PyResult<AcquisitionConfig> {
    let cfg = AcquisitionConfig { q, beta, mc_samples, restarts, ..AcquisitionConfig::default() };
    cfg.validate().map_err(value_error)?;
    Ok(cfg)
}

/// Monte-Carlo q-UCB value of a fixed batch.
#[pyfunction]
#[pyo3(signature = (gp, batch, beta = 2.0, mc_samples = 256, seed = 0))]
fn qucb_score(gp: &PyGaussianProcess, batch: Vec<(f64, f64)>, beta: f64, mc_samples: usize, seed: u64) -> PyResult<f64> {
    let cfg = acquisition_config(batch.len(), beta, mc_samples, 1)?;
    acquisition::qucb_score(&gp.0, &points(&batch)?, &cfg, seed).map_err(value_error)
}

/// Maximizes q-UCB and returns `(points, score)`.
#[pyfunction]
#[pyo3(signature = (gp, q, beta = 2.0, mc_samples = 256, restarts = 64, seed = 0))]
fn propose_batch(
    gp: &PyGaussianProcess,
    q: usize,
    beta: f64,
    mc_samples: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<(Vec<(f64, f64)>, f64)> {
    let cfg = acquisition_config(q, beta, mc_samples, restarts)?;
    let proposal = acquisition::propose_batch(&gp.0, &cfg, seed).map_err(value_error)?;
    Ok((proposal.points.iter().map(tuple).collect(), proposal.score))
}

#[pyfunction]
#[pyo3(signature = (t, grid_size = 441, delta = 0.1))]
fn theory_beta(t: usize, grid_size: usize, delta: f64) -> f64 {
    acquisition::theory_beta(t, grid_size, delta)
}

/// Greedy information gain after `budget` picks from `candidates`.
#[pyfunction]
fn information_gain(params: &PyKernelParams, candidates: Vec<(f64, f64)>, budget: usize) -> PyResult<f64> {
    theory::information_gain(&params.0, &points(&candidates)?, budget).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (successes, trials, delta = 0.05))]
fn success_confidence_interval(successes: u64, trials: u64, delta: f64) -> PyResult<(f64, f64)> {
    simulator::success_confidence_interval(successes, trials, delta).map_err(value_error)
}

#[pyclass(name = "Config", module = "vantage", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(CampaignConfig);

impl PyConfig {
    fn test_points(&self) -> PyResult<Vec<NormalizedPoint>> {
        self.0.rollout.normalized_test_points().map_err(value_error)
    }
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset = "lift", strategy = "vantage", master_seed = 0, q = None, iterations = None))]
    fn new(preset: &str, strategy: &str, master_seed: u64, q: Option<usize>, iterations: Option<usize>) -> PyResult<Self> {
        let mut cfg = CampaignConfig {
            landscape: Preset::from_name(preset).map_err(value_error)?.landscape(),
            strategy: Strategy::from_name(strategy).map_err(value_error)?,
            master_seed,
            ..CampaignConfig::default()
        };
        if let Some(q) = q {
            cfg.q = q;
            cfg.acquisition.q = q;
        }
        if let Some(n) = iterations {
            cfg.iterations = n;
        }
        cfg.validate().map_err(value_error)?;
        Ok(Self(cfg))
    }

    /// Parses the same TOML document the command-line tool reads.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        vantage_cli::parse_config(text).map(Self).map_err(value_error)
    }

    #[getter]
    fn strategy(&self) -> &'static str {
        self.0.strategy.name()
    }

    #[setter]
    fn set_strategy(&mut self, name: &str) -> PyResult<()> {
        self.0.strategy = Strategy::from_name(name).map_err(value_error)?;
        Ok(())
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.0.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, seed: u64) {
        self.0.master_seed = seed;
    }

    #[getter]
    fn q(&self) -> usize {
        self.0.q
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn bounds(&self) -> PyAngleBounds {
        PyAngleBounds(self.0.bounds)
    }

    #[getter]
    fn kernel(&self) -> PyKernelParams {
        PyKernelParams(self.0.kernel)
    }

    fn budget(&self) -> usize {
        self.0.budget()
    }

    /// Noise-free objective of training at one point.
    fn true_objective(&self, nu_h: f64, nu_v: f64) -> PyResult<f64> {
        Ok(simulator::true_objective(&self.0.landscape, &point((nu_h, nu_v))?, &self.test_points()?))
    }

    /// `((nu_h, nu_v), value)` of the best point on the oracle lattice.
    #[pyo3(signature = (resolution = ORACLE_RESOLUTION))]
    fn optimum(&self, resolution: usize) -> PyResult<((f64, f64), f64)> {
        if resolution < 2 {
            return Err(PyValueError::new_err("resolution must be at least 2"));
        }
        let (p, v) = exhaustive_optimum(&self.0.landscape, &self.test_points()?, resolution);
        Ok((tuple(&p), v))
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRecord> {
        let cfg = self.0.clone();
        let record = py.detach(|| run(&cfg)).map_err(value_error)?;
        Ok(PyRecord { record, landscape: self.0.landscape.clone(), config: self.0.clone() })
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(strategy={:?}, q={}, iterations={}, master_seed={})",
            self.0.strategy.name(),
            self.0.q,
            self.0.iterations,
            self.0.master_seed
        )
    }
}

#[pyclass(name = "Record", module = "vantage", frozen, skip_from_py_object)]
struct PyRecord {
    record: CampaignRecord,
    landscape: Landscape,
    config: CampaignConfig,
}

#[pymethods]
impl PyRecord {
    #[getter]
    fn strategy(&self) -> &'static str {
        self.record.strategy.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.record.seed
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.record.evaluations()
    }

    /// `(iteration, nu_h, nu_v, observed)` in evaluation order.
    fn observations(&self) -> Vec<(usize, f64, f64, f64)> {
        self.record
            .iterations
            .iter()
            .flat_map(|it| it.observations.iter().map(move |o| (it.iteration, o.point.nu_h, o.point.nu_v, o.value)))
            .collect()
    }

    #[getter]
    fn best_so_far(&self) -> Vec<f64> {
        self.record.iterations.iter().map(|it| it.best_so_far).collect()
    }

    /// `((nu_h, nu_v), observed)` of the selected viewpoint.
    #[getter]
    fn final_selection(&self) -> ((f64, f64), f64) {
        let o = &self.record.final_selection;
        (tuple(&o.point), o.value)
    }

    /// Per-round cumulative regret, information gain, β and bound ratio.
    fn regret_report(&self) -> PyResult<Vec<(usize, usize, f64, f64, f64, f64)>> {
        let report = theory::regret_report(&self.record, &self.landscape, &self.config).map_err(value_error)?;
        Ok(report
            .rounds
            .iter()
            .map(|r| (r.round, r.evaluations, r.cumulative_regret, r.information_gain, r.beta, r.bound_ratio))
            .collect())
    }

    /// The record in the command-line tool's CSV layout.
    fn to_csv(&self) -> PyResult<String> {
        let tests = self.config.rollout.normalized_test_points().map_err(value_error)?;
        let (_, optimum_value) = exhaustive_optimum(&self.landscape, &tests, ORACLE_RESOLUTION);
        let run_id = format!("{}_seed{}", self.record.strategy.name(), self.record.seed);
        let ctx = vantage_cli::records::RecordContext {
            run_id: &run_id,
            bounds: &self.config.bounds,
            landscape: &self.landscape,
            test_points: &tests,
            optimum_value,
        };
        let bytes = vantage_cli::record_to_csv(&self.record, &ctx).map_err(value_error)?;
        String::from_utf8(bytes).map_err(value_error)
    }

    fn __len__(&self) -> usize {
        self.record.evaluations()
    }
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    [Preset::Lift, Preset::PickPlace, Preset::Square].iter().map(Preset::name).collect()
}

#[pymodule]
#[pyo3(name = "vantage")]
fn vantage_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAngleBounds>()?;
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRecord>()?;
    m.add_function(wrap_pyfunction!(to_cartesian, m)?)?;
    m.add_function(wrap_pyfunction!(qucb_score, m)?)?;
    m.add_function(wrap_pyfunction!(propose_batch, m)?)?;
    m.add_function(wrap_pyfunction!(theory_beta, m)?)?;
    m.add_function(wrap_pyfunction!(information_gain, m)?)?;
    m.add_function(wrap_pyfunction!(success_confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
