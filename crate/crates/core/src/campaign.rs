//! End-to-end optimization runs: the Bayesian-optimization campaign and the
//! grid and random baselines it is compared against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{propose_batch, theory_beta, AcquisitionConfig};
use crate::error::{Error, Result};
use crate::geometry::{unit_grid, AngleBounds, NormalizedPoint};
use crate::seed::{derive, stream};
use crate::simulator::{evaluate, Landscape, RolloutConfig};
use crate::surrogate::{fit_hyperparameters, GpPosterior, HyperGrid, KernelParams, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vantage,
    Grid,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Vantage, Strategy::Grid, Strategy::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Vantage => "vantage",
            Strategy::Grid => "grid",
            Strategy::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "vantage" => Ok(Strategy::Vantage),
            "grid" => Ok(Strategy::Grid),
            "random" => Ok(Strategy::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy '{other}' (expected vantage, grid or random)"
            ))),
        }
    }
}

/// How the exploration weight evolves over BO iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BetaSchedule {
    /// Use `AcquisitionConfig::beta` throughout.
    Constant,
    /// `2 ln(G t² π² / (6δ))` at iteration `t`.
    Theory { grid_size: usize, delta: f64 },
}

impl BetaSchedule {
    pub const DEFAULT_THEORY: BetaSchedule = BetaSchedule::Theory { grid_size: 441, delta: 0.1 };

    pub fn beta(&self, constant: f64, t: usize) -> f64 {
        match *self {
            BetaSchedule::Constant => constant,
            BetaSchedule::Theory { grid_size, delta } => theory_beta(t, grid_size, delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub bounds: AngleBounds,
    pub q: usize,
    pub iterations: usize,
    pub init_batches: usize,
    pub acquisition: AcquisitionConfig,
    pub beta_schedule: BetaSchedule,
    pub kernel: KernelParams,
    pub refit_hyperparameters: bool,
    pub hyper_grid: HyperGrid,
    pub rollout: RolloutConfig,
    pub landscape: Landscape,
    pub strategy: Strategy,
    pub master_seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let acquisition = AcquisitionConfig::default();
        Self {
            bounds: AngleBounds::default(),
            q: acquisition.q,
            iterations: 4,
            init_batches: 1,
            acquisition,
            beta_schedule: BetaSchedule::Constant,
            kernel: KernelParams::default(),
            refit_hyperparameters: false,
            hyper_grid: HyperGrid::default(),
            rollout: RolloutConfig::default(),
            landscape: crate::simulator::Preset::Lift.landscape(),
            strategy: Strategy::Vantage,
            master_seed: 0,
        }
    }
}

impl CampaignConfig {
    /// Total number of simulator evaluations.
    pub fn budget(&self) -> usize {
        self.q * (self.init_batches + self.iterations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::InvalidArgument("q must be ≥ 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be ≥ 1".into()));
        }
        if self.acquisition.q != self.q {
            return Err(Error::InvalidArgument(format!(
                "acquisition.q ({}) must equal q ({})",
                self.acquisition.q, self.q
            )));
        }
        self.acquisition.validate()?;
        self.kernel.validate()?;
        self.rollout.validate()?;
        self.landscape.validate()?;
        if self.rollout.bounds != self.bounds {
            return Err(Error::InvalidArgument("rollout bounds must match campaign bounds".into()));
        }
        if let BetaSchedule::Theory { grid_size, delta } = self.beta_schedule {
            if grid_size < 1 || !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidArgument(
                    "theory beta schedule needs grid_size ≥ 1 and delta in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    fn rollout_for_run(&self) -> RolloutConfig {
        RolloutConfig {
            rng_seed: derive(self.master_seed, &[stream::ROLLOUT, self.rollout.rng_seed]),
            ..self.rollout.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub observations: Vec<Observation>,
    pub best_so_far: f64,
    pub elapsed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    pub final_selection: Observation,
}

impl CampaignRecord {
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.iterations.iter().flat_map(|it| it.observations.iter())
    }

    pub fn evaluations(&self) -> usize {
        self.iterations.iter().map(|it| it.observations.len()).sum()
    }

    /// Rebuilds a record from batches of observations, recomputing the
    /// running best and the final argmax (earliest wins ties).
    pub fn from_batches(strategy: Strategy, seed: u64, batches: Vec<Vec<Observation>>) -> Result<Self> {
        let mut builder = RecordBuilder::default();
        for batch in batches {
            builder.push(batch);
        }
        builder.finish(strategy, seed)
    }
}

#[derive(Default)]
struct RecordBuilder {
    iterations: Vec<IterationRecord>,
    best: Option<Observation>,
    elapsed: usize,
}

impl RecordBuilder {
    fn push(&mut self, observations: Vec<Observation>) {
        for o in &observations {
            if self.best.map_or(true, |b| o.value > b.value) {
                self.best = Some(*o);
            }
        }
        self.elapsed += observations.len();
        self.iterations.push(IterationRecord {
            iteration: self.iterations.len(),
            best_so_far: self.best.map_or(f64::NEG_INFINITY, |b| b.value),
            elapsed_evaluations: self.elapsed,
            observations,
        });
    }

    fn all(&self) -> Vec<Observation> {
        self.iterations.iter().flat_map(|it| it.observations.iter().copied()).collect()
    }

    fn finish(self, strategy: Strategy, seed: u64) -> Result<CampaignRecord> {
        let final_selection = self
            .best
            .ok_or_else(|| Error::InvalidArgument("campaign produced no observations".into()))?;
        Ok(CampaignRecord {
            strategy,
            seed,
            iterations: self.iterations,
            final_selection,
        })
    }
}

fn evaluate_batch(points: &[NormalizedPoint], landscape: &Landscape, rollout: &RolloutConfig) -> Result<Vec<Observation>> {
    points
        .iter()
        .map(|p| {
            let r = evaluate(landscape, p, rollout)?;
            Observation::new(r.train_point, r.mean_success)
        })
        .collect()
}

fn uniform_points(n: usize, seed: u64) -> Vec<NormalizedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| NormalizedPoint::clamped(rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

fn with_iteration<T>(iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Campaign {
        iteration,
        source: Box::new(e),
    })
}

/// Random initial batches followed by `iterations` rounds of q-UCB batch
/// selection. The final selection is the best observed evaluation.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignRecord> {
    cfg.validate()?;
    let rollout = cfg.rollout_for_run();
    let mut builder = RecordBuilder::default();

    let init = uniform_points(cfg.q * cfg.init_batches, derive(cfg.master_seed, &[stream::INIT]));
    for batch in init.chunks(cfg.q) {
        let obs = with_iteration(builder.iterations.len(), evaluate_batch(batch, &cfg.landscape, &rollout))?;
        builder.push(obs);
    }

    let mut params = cfg.kernel;
    if cfg.refit_hyperparameters && builder.elapsed >= 3 {
        params = with_iteration(builder.iterations.len(), fit_hyperparameters(&builder.all(), &cfg.hyper_grid))?;
    }

    for t in 1..=cfg.iterations {
        let index = builder.iterations.len();
        let data = builder.all();
        let gp = if data.is_empty() {
            GpPosterior::prior(params)
        } else {
            GpPosterior::fit(&data, params)
        };
        let gp = with_iteration(index, gp)?;
        let acq = AcquisitionConfig {
            beta: cfg.beta_schedule.beta(cfg.acquisition.beta, t),
            ..cfg.acquisition
        };
        let proposal = with_iteration(
            index,
            propose_batch(&gp, &acq, derive(cfg.master_seed, &[stream::ACQUISITION, t as u64])),
        )?;
        let obs = with_iteration(index, evaluate_batch(&proposal.points, &cfg.landscape, &rollout))?;
        builder.push(obs);
    }
    builder.finish(Strategy::Vantage, cfg.master_seed)
}

/// Lattice shape `(n_h, n_v)` for a grid of at most `budget` points. The
/// wider angular axis gets the larger count.
pub fn lattice_shape(budget: usize, bounds: &AngleBounds) -> (usize, usize) {
    let near_square = |b: usize| -> Option<(usize, usize)> {
        (2..=b).take_while(|r| r * r <= b).filter(|r| b % r == 0).last().map(|r| (r, b / r))
    };
    let (small, large) = match near_square(budget) {
        Some(shape) => shape,
        None if budget >= 4 => {
            // Prime: the largest near-square lattice that fits.
            (2..budget)
                .rev()
                .find_map(near_square)
                .expect("any budget ≥ 4 admits a 2x2 lattice")
        }
        None => (1, budget.max(1)),
    };
    if bounds.h_span() >= bounds.v_span() {
        (large, small)
    } else {
        (small, large)
    }
}

/// Uniform lattice over the unit square using the whole budget, topped up
/// with random points when the budget has no suitable factorization.
pub fn run_grid_baseline(cfg: &CampaignConfig) -> Result<CampaignRecord> {
    cfg.validate()?;
    let budget = cfg.budget();
    let (n_h, n_v) = lattice_shape(budget, &cfg.bounds);
    let mut points = unit_grid(n_h, n_v);
    points.extend(uniform_points(budget - points.len(), derive(cfg.master_seed, &[stream::GRID_FILL])));
    run_fixed(cfg, Strategy::Grid, &points)
}

/// `budget` independent uniform draws from the unit square.
pub fn run_random_baseline(cfg: &CampaignConfig) -> Result<CampaignRecord> {
    cfg.validate()?;
    let points = uniform_points(cfg.budget(), derive(cfg.master_seed, &[stream::RANDOM_BASELINE]));
    run_fixed(cfg, Strategy::Random, &points)
}

fn run_fixed(cfg: &CampaignConfig, strategy: Strategy, points: &[NormalizedPoint]) -> Result<CampaignRecord> {
    let rollout = cfg.rollout_for_run();
    let mut builder = RecordBuilder::default();
    for batch in points.chunks(cfg.q) {
        let obs = with_iteration(builder.iterations.len(), evaluate_batch(batch, &cfg.landscape, &rollout))?;
        builder.push(obs);
    }
    builder.finish(strategy, cfg.master_seed)
}

/// Runs whichever strategy `cfg.strategy` names.
pub fn run(cfg: &CampaignConfig) -> Result<CampaignRecord> {
    match cfg.strategy {
        Strategy::Vantage => run_campaign(cfg),
        Strategy::Grid => run_grid_baseline(cfg),
        Strategy::Random => run_random_baseline(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{exhaustive_optimum, true_objective, Preset};

    fn pt(h: f64, v: f64) -> NormalizedPoint {
        NormalizedPoint::new(h, v).unwrap()
    }

    fn small_cfg() -> CampaignConfig {
        let q = 3;
        CampaignConfig {
            q,
            iterations: 2,
            acquisition: AcquisitionConfig { q, restarts: 8, mc_samples: 128, ..AcquisitionConfig::default() },
            rollout: RolloutConfig::with_grid(AngleBounds::default(), 5, 5, 10, 0).unwrap(),
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn argmax_selection() {
        let obs = |h, y| Observation::new(pt(h, 0.5), y).unwrap();
        let r = CampaignRecord::from_batches(
            Strategy::Random,
            0,
            vec![vec![obs(0.1, 0.2), obs(0.2, 0.9)], vec![obs(0.3, 0.5), obs(0.4, 0.9)]],
        )
        .unwrap();
        assert_eq!(r.final_selection, obs(0.2, 0.9));
        assert_eq!(r.iterations[0].best_so_far, 0.9);
        assert_eq!(r.iterations[1].best_so_far, 0.9);
        assert_eq!(r.iterations[1].elapsed_evaluations, 4);
        assert!(CampaignRecord::from_batches(Strategy::Grid, 0, vec![]).is_err());
    }

    #[test]
    fn validation() {
        let mut c = small_cfg();
        c.q = 0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.acquisition.q = 2;
        assert!(c.validate().is_err());
        assert!(small_cfg().validate().is_ok());
    }

    #[test]
    fn lattice_shapes() {
        let b = AngleBounds::default();
        assert_eq!(lattice_shape(4, &b), (2, 2));
        assert_eq!(lattice_shape(9, &b), (3, 3));
        assert_eq!(lattice_shape(32, &b), (8, 4));
        assert_eq!(lattice_shape(40, &b), (8, 5));
        assert_eq!(lattice_shape(13, &b), (4, 3));
        assert_eq!(lattice_shape(7, &b), (3, 2));
        assert_eq!(lattice_shape(3, &b), (3, 1));
        assert_eq!(lattice_shape(1, &b), (1, 1));
        let tall = AngleBounds::new(-0.1, 0.1, -1.0, 1.0).unwrap();
        assert_eq!(lattice_shape(32, &tall), (4, 8));
    }

    #[test]
    fn grid_baseline_covers_corners() {
        let mut c = small_cfg();
        c.q = 2;
        c.acquisition.q = 2;
        c.iterations = 1;
        let r = run_grid_baseline(&c).unwrap();
        let pts: Vec<_> = r.observations().map(|o| o.point).collect();
        assert_eq!(pts, vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0)]);

        c.q = 3;
        c.acquisition.q = 3;
        c.init_batches = 1;
        c.iterations = 2;
        let r = run_grid_baseline(&c).unwrap();
        assert_eq!(r.evaluations(), 9);
        assert!(r.observations().any(|o| o.point == pt(0.5, 0.5)));
    }

    #[test]
    fn random_baseline_single_draw_and_determinism() {
        let mut c = small_cfg();
        c.q = 1;
        c.acquisition.q = 1;
        c.init_batches = 0;
        c.iterations = 1;
        let r = run_random_baseline(&c).unwrap();
        assert_eq!(r.evaluations(), 1);
        assert_eq!(r.final_selection, *r.observations().next().unwrap());
        assert_eq!(r, run_random_baseline(&c).unwrap());
    }

    #[test]
    fn campaign_is_deterministic_and_budget_matches() {
        let c = small_cfg();
        let a = run_campaign(&c).unwrap();
        let b = run_campaign(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.evaluations(), c.budget());
        assert_eq!(run_grid_baseline(&c).unwrap().evaluations(), c.budget());
        assert_eq!(run_random_baseline(&c).unwrap().evaluations(), c.budget());
        for w in a.iterations.windows(2) {
            assert!(w[1].best_so_far >= w[0].best_so_far);
        }
        let max = a.observations().map(|o| o.value).fold(f64::MIN, f64::max);
        assert_eq!(a.final_selection.value, max);
        let other = CampaignConfig { master_seed: 1, ..c };
        assert_ne!(run_campaign(&other).unwrap(), a);
    }

    #[test]
    fn optional_refit_is_deterministic() {
        let fixed = small_cfg();
        let refit = CampaignConfig { refit_hyperparameters: true, ..small_cfg() };
        let a = run_campaign(&refit).unwrap();
        assert_eq!(a, run_campaign(&refit).unwrap());
        // Same initial batch, different kernel afterwards.
        let b = run_campaign(&fixed).unwrap();
        assert_eq!(a.iterations[0], b.iterations[0]);
        assert_ne!(a.iterations[1], b.iterations[1]);
    }

    #[test]
    fn first_round_from_the_prior() {
        let mut c = small_cfg();
        c.init_batches = 0;
        c.iterations = 1;
        let r = run_campaign(&c).unwrap();
        assert_eq!(r.iterations.len(), 1);
        let first = &r.iterations[0];
        let max = first.observations.iter().map(|o| o.value).fold(f64::MIN, f64::max);
        assert_eq!(r.final_selection.value, max);
    }

    #[test]
    fn campaign_improves_on_initial_batch() {
        let mut c = small_cfg();
        c.landscape = Preset::Lift.landscape();
        let r = run_campaign(&c).unwrap();
        let tests = c.rollout.normalized_test_points().unwrap();
        let (_, best) = exhaustive_optimum(&c.landscape, &tests, 51);
        let chosen = true_objective(&c.landscape, &r.final_selection.point, &tests);
        assert!(chosen >= 0.9 * best, "{chosen} vs {best}");
    }
}
