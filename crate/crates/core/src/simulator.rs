//! Synthetic stand-in for fine-tuning a policy at a training viewpoint and
//! measuring it across a grid of test viewpoints.
//!
//! A [`Landscape`] assigns each training point a policy quality (base rate
//! plus Gaussian bumps). That quality decays with the distance between
//! the training and test viewpoints. Rollouts are Bernoulli draws of the
//! resulting success probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, test_grid, unit_grid, AngleBounds, NormalizedPoint, Viewpoint};
use crate::seed::{derive, stream};

/// Resolution of the exhaustive search used as the ground-truth optimum.
pub const ORACLE_RESOLUTION: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: NormalizedPoint,
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub bumps: Vec<Bump>,
    pub base_rate: f64,
    pub generalization_width: f64,
}

/// Named landscapes mimicking three tasks of increasing difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Lift,
    PickPlace,
    Square,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Lift, Preset::PickPlace, Preset::Square];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Lift => "lift",
            Preset::PickPlace => "pickplace",
            Preset::Square => "square",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().trim_end_matches("-like") {
            "lift" => Ok(Preset::Lift),
            "pickplace" | "pick_place" | "pick-place" => Ok(Preset::PickPlace),
            "square" => Ok(Preset::Square),
            other => Err(Error::InvalidArgument(format!(
                "unknown landscape preset '{other}' (expected lift, pickplace or square)"
            ))),
        }
    }

    pub fn landscape(&self) -> Landscape {
        let bump = |h: f64, v: f64, height: f64, width: f64| Bump {
            center: NormalizedPoint { nu_h: h, nu_v: v },
            height,
            width,
        };
        match self {
            // One broad basin on top of a high base rate.
            Preset::Lift => Landscape {
                bumps: vec![bump(0.64, 0.38, 0.5, 0.3)],
                base_rate: 0.4,
                generalization_width: 0.4,
            },
            // Two asymmetric bumps, the taller one narrower.
            Preset::PickPlace => Landscape {
                bumps: vec![bump(0.25, 0.65, 0.45, 0.16), bump(0.72, 0.35, 0.75, 0.12)],
                base_rate: 0.15,
                generalization_width: 0.35,
            },
            // One narrow, low bump over an almost-zero base.
            Preset::Square => Landscape {
                bumps: vec![bump(0.68, 0.7, 0.6, 0.1)],
                base_rate: 0.03,
                generalization_width: 0.3,
            },
        }
    }
}

impl Landscape {
    pub fn validate(&self) -> Result<()> {
        if self.bumps.is_empty() {
            return Err(Error::InvalidArgument("landscape needs at least one bump".into()));
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(Error::InvalidArgument(format!(
                "base_rate must lie in [0, 1], got {}",
                self.base_rate
            )));
        }
        if !(self.generalization_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "generalization_width must be > 0, got {}",
                self.generalization_width
            )));
        }
        for (i, b) in self.bumps.iter().enumerate() {
            NormalizedPoint::new(b.center.nu_h, b.center.nu_v)?;
            if !(0.0..=1.0).contains(&b.height) {
                return Err(Error::InvalidArgument(format!(
                    "bump {i}: height must lie in [0, 1], got {}",
                    b.height
                )));
            }
            if !(b.width > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bump {i}: width must be > 0, got {}",
                    b.width
                )));
            }
        }
        Ok(())
    }

    /// A flat landscape with success probability `p` everywhere.
    pub fn constant(p: f64) -> Self {
        Self {
            bumps: vec![Bump {
                center: NormalizedPoint { nu_h: 0.5, nu_v: 0.5 },
                height: 0.0,
                width: 1.0,
            }],
            base_rate: p,
            generalization_width: 1.0,
        }
    }

    /// Quality gain of a policy fine-tuned at `train`, before decay.
    pub fn quality(&self, train: &NormalizedPoint) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.height * (-train.distance_squared(&b.center) / (2.0 * b.width * b.width)).exp())
            .sum()
    }
}

/// Success probability at `test` of the policy fine-tuned at `train`.
pub fn true_success_prob(landscape: &Landscape, train: &NormalizedPoint, test: &NormalizedPoint) -> f64 {
    let rho = landscape.generalization_width;
    let decay = (-test.distance_squared(train) / (2.0 * rho * rho)).exp();
    (landscape.base_rate + landscape.quality(train) * decay).clamp(0.0, 1.0)
}

/// Noise-free objective: mean success probability over the test points.
pub fn true_objective(landscape: &Landscape, train: &NormalizedPoint, test_points: &[NormalizedPoint]) -> f64 {
    let n = test_points.len();
    assert!(n > 0, "test grid must not be empty");
    test_points
        .iter()
        .map(|t| true_success_prob(landscape, train, t))
        .sum::<f64>()
        / n as f64
}

/// Best training point on a `resolution × resolution` lattice of the unit
/// square under [`true_objective`]. Ties keep the first lattice point.
pub fn exhaustive_optimum(
    landscape: &Landscape,
    test_points: &[NormalizedPoint],
    resolution: usize,
) -> (NormalizedPoint, f64) {
    let mut best = (NormalizedPoint { nu_h: 0.5, nu_v: 0.5 }, f64::NEG_INFINITY);
    for p in unit_grid(resolution, resolution) {
        let j = true_objective(landscape, &p, test_points);
        if j > best.1 {
            best = (p, j);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub rollouts_per_test_point: usize,
    pub test_grid: Vec<Viewpoint>,
    pub bounds: AngleBounds,
    pub rng_seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        let bounds = AngleBounds::default();
        Self {
            rollouts_per_test_point: 20,
            test_grid: test_grid(&bounds, 10, 10).expect("10x10 grid is valid"),
            bounds,
            rng_seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn with_grid(bounds: AngleBounds, n_h: usize, n_v: usize, rollouts: usize, rng_seed: u64) -> Result<Self> {
        let cfg = Self {
            rollouts_per_test_point: rollouts,
            test_grid: test_grid(&bounds, n_h, n_v)?,
            bounds,
            rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts_per_test_point < 1 {
            return Err(Error::InvalidArgument("rollouts_per_test_point must be ≥ 1".into()));
        }
        if self.test_grid.is_empty() {
            return Err(Error::InvalidArgument("test grid must not be empty".into()));
        }
        self.normalized_test_points().map(|_| ())
    }

    pub fn normalized_test_points(&self) -> Result<Vec<NormalizedPoint>> {
        self.test_grid.iter().map(|v| normalize(*v, &self.bounds)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub train_point: NormalizedPoint,
    pub mean_success: f64,
    pub per_test_point: Vec<(Viewpoint, f64)>,
    pub rollouts_used: usize,
}

fn rollout_seed(rng_seed: u64, train: &NormalizedPoint, test_index: usize) -> u64 {
    derive(
        rng_seed,
        &[
            stream::ROLLOUT,
            train.nu_h.to_bits(),
            train.nu_v.to_bits(),
            test_index as u64,
        ],
    )
}

/// Fine-tunes at `train` (memorylessly) and runs `n` rollouts at every test
/// viewpoint. Each test point has its own seeded stream.
pub fn evaluate(landscape: &Landscape, train: &NormalizedPoint, cfg: &RolloutConfig) -> Result<EvaluationResult> {
    cfg.validate()?;
    let tests = cfg.normalized_test_points()?;
    let n = cfg.rollouts_per_test_point;
    let per_test_point: Vec<(Viewpoint, f64)> = cfg
        .test_grid
        .iter()
        .zip(&tests)
        .enumerate()
        .map(|(k, (view, test))| {
            let p = true_success_prob(landscape, train, test);
            let mut rng = ChaCha8Rng::seed_from_u64(rollout_seed(cfg.rng_seed, train, k));
            let successes = (0..n).filter(|_| rng.random::<f64>() < p).count();
            (*view, successes as f64 / n as f64)
        })
        .collect();
    let mean_success = per_test_point.iter().map(|(_, r)| r).sum::<f64>() / per_test_point.len() as f64;
    Ok(EvaluationResult {
        train_point: *train,
        mean_success,
        rollouts_used: n * per_test_point.len(),
        per_test_point,
    })
}

/// Hoeffding interval `p̂ ± √(ln(2/δ) / 2n)` clamped to `[0, 1]`.
pub fn success_confidence_interval(successes: u64, trials: u64, delta: f64) -> Result<(f64, f64)> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument(format!(
            "successes ({successes}) exceed trials ({trials})"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let p = successes as f64 / trials as f64;
    let half = ((2.0 / delta).ln() / (2.0 * trials as f64)).sqrt();
    Ok(((p - half).max(0.0), (p + half).min(1.0)))
}
