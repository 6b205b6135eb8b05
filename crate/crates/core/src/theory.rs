//! Empirical checks of the GP-UCB guarantees: cumulative regret against the
//! noise-free optimum, maximum information gain, and convergence of the
//! average success rate.

use serde::{Deserialize, Serialize};

use crate::campaign::{BetaSchedule, CampaignConfig, CampaignRecord};
use crate::error::{Error, Result};
use crate::geometry::{unit_grid, NormalizedPoint};
use crate::simulator::{exhaustive_optimum, true_objective, Landscape, ORACLE_RESOLUTION};
use crate::surrogate::{kernel, KernelParams};

/// Side of the candidate lattice used for information-gain estimates.
pub const INFO_GAIN_GRID: usize = 21;

/// Greedy information gain for every budget up to `budget`. Entry `k` is
/// the gain after `k` points (entry 0 is 0).
///
/// Each step adds the candidate with the largest posterior variance, which
/// maximizes the marginal gain `½ ln(1 + σ²(x) / noise)`.
pub fn information_gain_curve(params: &KernelParams, candidates: &[NormalizedPoint], budget: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if params.noise_variance == 0.0 {
        return Err(Error::InvalidArgument(
            "information gain is undefined for zero noise variance".into(),
        ));
    }
    if budget > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds the {} candidates",
            candidates.len()
        )));
    }
    let n = candidates.len();
    let noise = params.noise_variance;
    let mut var = vec![params.signal_variance; n];
    let mut chosen = vec![false; n];
    // Rows of the incremental factor, one per selected point.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut curve = Vec::with_capacity(budget + 1);
    let mut total = 0.0;
    curve.push(0.0);
    for _ in 0..budget {
        let s = (0..n)
            .filter(|&i| !chosen[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if var[b] >= var[i] => Some(b),
                _ => Some(i),
            })
            .expect("budget ≤ candidates");
        total += 0.5 * (var[s] / noise).ln_1p();
        curve.push(total);
        chosen[s] = true;
        let denom = (var[s] + noise).sqrt();
        let row: Vec<f64> = (0..n)
            .map(|x| {
                let prior = kernel(&candidates[x], &candidates[s], params);
                let explained: f64 = rows.iter().map(|r| r[x] * r[s]).sum();
                (prior - explained) / denom
            })
            .collect();
        for x in 0..n {
            var[x] = (var[x] - row[x] * row[x]).max(0.0);
        }
        rows.push(row);
    }
    Ok(curve)
}

/// Greedy estimate of the maximum information gain `γ` after `budget`
/// noisy observations drawn from `candidates`.
pub fn information_gain(params: &KernelParams, candidates: &[NormalizedPoint], budget: usize) -> Result<f64> {
    information_gain_curve(params, candidates, budget).map(|c| c[budget])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    /// 1-based round index (the initial batch is round 1).
    pub round: usize,
    pub evaluations: usize,
    pub cumulative_regret: f64,
    pub average_success: f64,
    pub information_gain: f64,
    pub beta: f64,
    /// `R(T) / √(q T γ_qT β_T)`.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub optimum: NormalizedPoint,
    pub optimum_value: f64,
    /// Noise-free value of every evaluated point, in evaluation order.
    pub oracle_values: Vec<f64>,
    /// `f(θ*) - f(θ_t)` for every evaluation.
    pub instantaneous: Vec<f64>,
    pub rounds: Vec<RoundSummary>,
}

impl RegretReport {
    pub fn cumulative_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cumulative_regret)
    }

    pub fn max_bound_ratio(&self) -> f64 {
        self.rounds.iter().map(|r| r.bound_ratio).fold(0.0, f64::max)
    }

    /// Optimality gap `J* - (1/T) Σ J` after round `round` (1-based).
    pub fn gap_after(&self, round: usize) -> Option<f64> {
        self.rounds
            .get(round.checked_sub(1)?)
            .map(|r| self.optimum_value - r.average_success)
    }
}

/// Regret report against the exhaustive-lattice optimum.
pub fn regret_report(record: &CampaignRecord, landscape: &Landscape, cfg: &CampaignConfig) -> Result<RegretReport> {
    let tests = cfg.rollout.normalized_test_points()?;
    let optimum = exhaustive_optimum(landscape, &tests, ORACLE_RESOLUTION);
    regret_report_with_optimum(record, landscape, cfg, optimum)
}

/// Same as [`regret_report`] with a precomputed optimum.
pub fn regret_report_with_optimum(
    record: &CampaignRecord,
    landscape: &Landscape,
    cfg: &CampaignConfig,
    optimum: (NormalizedPoint, f64),
) -> Result<RegretReport> {
    let tests = cfg.rollout.normalized_test_points()?;
    let (theta_star, f_star) = optimum;
    let oracle_values: Vec<f64> = record
        .observations()
        .map(|o| true_objective(landscape, &o.point, &tests))
        .collect();
    let instantaneous: Vec<f64> = oracle_values.iter().map(|f| f_star - f).collect();

    let candidates = unit_grid(INFO_GAIN_GRID, INFO_GAIN_GRID);
    let gains = information_gain_curve(&cfg.kernel, &candidates, record.evaluations().min(candidates.len()))?;

    let mut rounds = Vec::with_capacity(record.iterations.len());
    let mut cumulative = 0.0;
    let mut oracle_sum = 0.0;
    let mut seen = 0;
    for (idx, it) in record.iterations.iter().enumerate() {
        for k in seen..seen + it.observations.len() {
            cumulative += instantaneous[k];
            oracle_sum += oracle_values[k];
        }
        seen += it.observations.len();
        let round = idx + 1;
        let beta = match cfg.beta_schedule {
            BetaSchedule::Constant => cfg.acquisition.beta,
            schedule => schedule.beta(cfg.acquisition.beta, round),
        };
        let gamma = gains[seen.min(gains.len() - 1)];
        let scale = (seen as f64 * gamma * beta).sqrt();
        rounds.push(RoundSummary {
            round,
            evaluations: seen,
            cumulative_regret: cumulative,
            average_success: oracle_sum / seen as f64,
            information_gain: gamma,
            beta,
            bound_ratio: if scale > 0.0 { cumulative / scale } else { 0.0 },
        });
    }
    Ok(RegretReport {
        optimum: theta_star,
        optimum_value: f_star,
        oracle_values,
        instantaneous,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{Strategy, CampaignRecord};
    use crate::oracle;
    use crate::surrogate::Observation;
    use approx::assert_abs_diff_eq;

    fn pt(h: f64, v: f64) -> NormalizedPoint {
        NormalizedPoint::new(h, v).unwrap()
    }

    #[test]
    fn information_gain_examples() {
        let params = KernelParams::default();
        let grid = unit_grid(2, 2);
        assert_eq!(information_gain(&params, &grid, 0).unwrap(), 0.0);
        let one = information_gain(&params, &grid, 1).unwrap();
        assert_abs_diff_eq!(one, 0.5 * (1.0 + params.signal_variance / params.noise_variance).ln(), epsilon = 1e-12);
        let all = information_gain(&params, &grid, 4).unwrap();
        assert_abs_diff_eq!(all, oracle::dense_information_gain(&params, &grid), epsilon = 1e-8);

        let wide = KernelParams { lengthscale_h: 0.7, lengthscale_v: 0.9, noise_variance: 1e-2, ..params };
        let grid = [pt(0.1, 0.1), pt(0.15, 0.2), pt(0.9, 0.4), pt(0.5, 0.5)];
        assert_abs_diff_eq!(
            information_gain(&wide, &grid, 4).unwrap(),
            oracle::dense_information_gain(&wide, &grid),
            epsilon = 1e-8
        );
    }

    #[test]
    fn information_gain_errors() {
        let grid = unit_grid(2, 2);
        let noiseless = KernelParams { noise_variance: 0.0, ..KernelParams::default() };
        assert!(information_gain(&noiseless, &grid, 1).is_err());
        assert!(information_gain(&KernelParams::default(), &grid, 5).is_err());
    }

    #[test]
    fn greedy_curve_is_increasing_and_submodular() {
        let curve = information_gain_curve(&KernelParams::default(), &unit_grid(7, 7), 30).unwrap();
        for w in curve.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-12);
        }
    }

    fn record_of(points: &[NormalizedPoint], q: usize, values: f64) -> CampaignRecord {
        let batches = points
            .chunks(q)
            .map(|c| c.iter().map(|p| Observation::new(*p, values).unwrap()).collect())
            .collect();
        CampaignRecord::from_batches(Strategy::Vantage, 0, batches).unwrap()
    }

    #[test]
    fn regret_zero_at_the_optimum() {
        let cfg = CampaignConfig::default();
        let tests = cfg.rollout.normalized_test_points().unwrap();
        let (star, f_star) = exhaustive_optimum(&cfg.landscape, &tests, 51);
        let record = record_of(&[star; 6], 2, 0.5);
        let report = regret_report_with_optimum(&record, &cfg.landscape, &cfg, (star, f_star)).unwrap();
        assert_eq!(report.cumulative_regret(), 0.0);
        assert_eq!(report.rounds.len(), 3);
        assert!(report.rounds.iter().all(|r| r.cumulative_regret == 0.0));
    }

    #[test]
    fn single_step_regret_and_average() {
        let cfg = CampaignConfig::default();
        let tests = cfg.rollout.normalized_test_points().unwrap();
        let optimum = exhaustive_optimum(&cfg.landscape, &tests, 51);
        let p = pt(0.1, 0.9);
        let report = regret_report_with_optimum(&record_of(&[p], 1, 0.3), &cfg.landscape, &cfg, optimum).unwrap();
        let f = true_objective(&cfg.landscape, &p, &tests);
        assert_abs_diff_eq!(report.instantaneous[0], optimum.1 - f, epsilon = 1e-15);

        let pts = [pt(0.1, 0.9), pt(0.5, 0.5), pt(0.7, 0.2), pt(0.3, 0.3)];
        let report = regret_report_with_optimum(&record_of(&pts, 2, 0.3), &cfg.landscape, &cfg, optimum).unwrap();
        let mean = pts.iter().map(|p| true_objective(&cfg.landscape, p, &tests)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(report.rounds.last().unwrap().average_success, mean, epsilon = 1e-12);
        for w in report.rounds.windows(2) {
            assert!(w[1].cumulative_regret >= w[0].cumulative_regret);
        }
    }

    #[test]
    fn theory_schedule_drives_reported_beta() {
        let cfg = CampaignConfig { beta_schedule: BetaSchedule::DEFAULT_THEORY, ..CampaignConfig::default() };
        let tests = cfg.rollout.normalized_test_points().unwrap();
        let optimum = exhaustive_optimum(&cfg.landscape, &tests, 21);
        let pts = [pt(0.2, 0.2), pt(0.8, 0.8), pt(0.5, 0.1), pt(0.1, 0.6)];
        let report = regret_report_with_optimum(&record_of(&pts, 2, 0.3), &cfg.landscape, &cfg, optimum).unwrap();
        assert_abs_diff_eq!(report.rounds[1].beta, crate::acquisition::theory_beta(2, 441, 0.1), epsilon = 1e-12);
        let r = &report.rounds[1];
        let expected = r.cumulative_regret / (4.0 * r.information_gain * r.beta).sqrt();
        assert_abs_diff_eq!(r.bound_ratio, expected, epsilon = 1e-12);
    }
}
