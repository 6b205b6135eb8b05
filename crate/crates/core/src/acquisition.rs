//! Batch upper-confidence-bound acquisition (q-UCB).
//!
//! The score of a batch is the reparameterized expectation
//! `E[max_i (μ_i + |z_i - μ_i|)]` with `z ~ N(μ, (βπ/2) Σ)`, estimated with
//! scrambled-Halton normal draws pushed through a factor of `Σ`. Batches are
//! found by multi-start coordinate search in the joint `2q`-dimensional
//! space, reusing one set of draws for every evaluation.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::NormalizedPoint;
use crate::qmc::{standard_normal_samples, ScrambledHalton};
use crate::seed::{derive, stream};
use crate::surrogate::{dot, kernel, GpPosterior, JITTER_MAX, JITTER_START};

/// Initial and final coordinate-search step sizes.
pub const INITIAL_STEP: f64 = 0.25;
pub const FINAL_STEP: f64 = 0.25 / 64.0;

/// Proposed points closer than this are treated as duplicates.
pub const DUPLICATE_RADIUS: f64 = 1e-3;

pub const MIN_MC_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub q: usize,
    pub beta: f64,
    pub mc_samples: usize,
    pub restarts: usize,
    pub refine_steps: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            q: 8,
            beta: 2.0,
            mc_samples: 256,
            restarts: 64,
            refine_steps: 4,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::InvalidArgument("q must be ≥ 1".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "mc_samples must be ≥ {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidArgument("restarts must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Exploration weight from the GP-UCB analysis,
/// `2 ln(G t² π² / (6δ))` for a candidate set of size `G`.
pub fn theory_beta(t: usize, grid_size: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    2.0 * (grid_size as f64 * t * t * PI * PI / (6.0 * delta)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProposal {
    pub points: Vec<NormalizedPoint>,
    pub score: f64,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QucbEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Lower-triangular factor of a positive semidefinite matrix, packed by
/// rows. Pivots below `1e-12 · reference` are treated as zero and their
/// columns dropped, so exactly certain points get exactly zero spread.
pub(crate) fn psd_factor(cov: &[f64], n: usize, reference: f64) -> Result<Vec<f64>> {
    let max_diag = (0..n).map(|i| cov[i * n + i]).fold(reference, f64::max);
    let attempt = |jitter: f64| -> Option<Vec<f64>> {
        let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        let neg_tol = 1e-9 * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * (n + 1) / 2];
        let row = |i: usize| i * (i + 1) / 2;
        for j in 0..n {
            let rj = row(j);
            let d = cov[j * n + j] + jitter - dot(&l[rj..rj + j], &l[rj..rj + j]);
            if d > tol {
                let ljj = d.sqrt();
                l[rj + j] = ljj;
                for i in j + 1..n {
                    let ri = row(i);
                    let s = cov[i * n + j] - dot(&l[ri..ri + j], &l[rj..rj + j]);
                    l[ri + j] = s / ljj;
                }
            } else if d < -neg_tol {
                return None;
            }
        }
        Some(l)
    };
    if let Some(l) = attempt(0.0) {
        return Ok(l);
    }
    let mut jitter = JITTER_START;
    loop {
        if let Some(l) = attempt(jitter) {
            return Ok(l);
        }
        if jitter >= JITTER_MAX {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter = (jitter * 10.0).min(JITTER_MAX);
    }
}

/// Core estimator: `mean_s max_i (μ_i + c |(L u_s)_i|)` for packed lower
/// factor `L` and draws `u_s` (row-major, `q` per draw).
pub fn qucb_from_factor(means: &[f64], factor: &[f64], scale: f64, draws: &[f64]) -> QucbEstimate {
    Draws::from_rows(draws, means.len()).estimate(means, factor, scale)
}

/// Draws stored column-major so the inner loops run across samples.
#[derive(Debug, Clone)]
struct Draws {
    q: usize,
    n: usize,
    columns: Vec<f64>,
}

impl Draws {
    fn from_rows(rows: &[f64], q: usize) -> Self {
        let n = rows.len() / q;
        let mut columns = vec![0.0; q * n];
        for (s, u) in rows.chunks_exact(q).enumerate() {
            for (k, x) in u.iter().enumerate() {
                columns[k * n + s] = *x;
            }
        }
        Self { q, n, columns }
    }

    fn estimate(&self, means: &[f64], factor: &[f64], scale: f64) -> QucbEstimate {
        let (q, n) = (self.q, self.n);
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut acc = vec![0.0; n];
        let mut offset = 0;
        for i in 0..q {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for k in 0..=i {
                let l = factor[offset + k];
                if l == 0.0 {
                    continue;
                }
                let col = &self.columns[k * n..(k + 1) * n];
                for (a, u) in acc.iter_mut().zip(col) {
                    *a += l * u;
                }
            }
            offset += i + 1;
            let m = means[i];
            for (b, a) in best.iter_mut().zip(&acc) {
                *b = b.max(m + scale * a.abs());
            }
        }
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for b in &best {
            sum += b;
            sum_sq += b * b;
        }
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        QucbEstimate {
            value: mean,
            std_error: (var / n as f64).sqrt(),
        }
    }
}

fn reparam_scale(beta: f64) -> f64 {
    (beta * PI / 2.0).sqrt()
}

/// QMC draws shared by every score evaluation made with `qmc_seed`.
pub fn qmc_draws(mc_samples: usize, q: usize, qmc_seed: u64) -> Vec<f64> {
    standard_normal_samples(mc_samples, q, derive(qmc_seed, &[stream::QMC]))
}

/// Posterior quantities of a batch, updated one point at a time.
#[derive(Debug, Clone)]
struct BatchState {
    signal_variance: f64,
    points: Vec<NormalizedPoint>,
    means: Vec<f64>,
    whitened: Vec<Vec<f64>>,
    cov: Vec<f64>,
}

impl BatchState {
    fn new(gp: &GpPosterior, points: Vec<NormalizedPoint>) -> Self {
        let q = points.len();
        let mut state = Self {
            signal_variance: gp.params().signal_variance,
            points: points.clone(),
            means: vec![0.0; q],
            whitened: vec![Vec::new(); q],
            cov: vec![0.0; q * q],
        };
        for (j, p) in points.into_iter().enumerate() {
            state.set_point(gp, j, p);
        }
        state
    }

    fn set_point(&mut self, gp: &GpPosterior, j: usize, p: NormalizedPoint) {
        let q = self.points.len();
        self.points[j] = p;
        let (m, w) = gp.mean_and_whitened(&p);
        self.means[j] = m;
        self.whitened[j] = w;
        let params = gp.params();
        for i in 0..q {
            let c = if i == j {
                (params.signal_variance - dot(&self.whitened[j], &self.whitened[j])).max(0.0)
            } else {
                kernel(&self.points[i], &p, params) - dot(&self.whitened[i], &self.whitened[j])
            };
            self.cov[i * q + j] = c;
            self.cov[j * q + i] = c;
        }
    }

    fn snapshot(&self, j: usize) -> (NormalizedPoint, f64, Vec<f64>, Vec<f64>) {
        let q = self.points.len();
        let col = (0..q).map(|i| self.cov[i * q + j]).collect();
        (self.points[j], self.means[j], self.whitened[j].clone(), col)
    }

    fn restore(&mut self, j: usize, snap: (NormalizedPoint, f64, Vec<f64>, Vec<f64>)) {
        let q = self.points.len();
        let (p, m, w, col) = snap;
        self.points[j] = p;
        self.means[j] = m;
        self.whitened[j] = w;
        for (i, c) in col.into_iter().enumerate() {
            self.cov[i * q + j] = c;
            self.cov[j * q + i] = c;
        }
    }

    /// Canonical order: descending mean, then coordinates. Makes the score
    /// a function of the set of points rather than their listing.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            self.means[b]
                .partial_cmp(&self.means[a])
                .unwrap_or(Ordering::Equal)
                .then(self.points[a].nu_h.total_cmp(&self.points[b].nu_h))
                .then(self.points[a].nu_v.total_cmp(&self.points[b].nu_v))
                .then(a.cmp(&b))
        });
        order
    }

    fn estimate(&self, scale: f64, draws: &Draws) -> Result<QucbEstimate> {
        let q = self.points.len();
        let order = self.canonical_order();
        let means: Vec<f64> = order.iter().map(|&i| self.means[i]).collect();
        let mut cov = vec![0.0; q * q];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                cov[a * q + b] = self.cov[i * q + j];
            }
        }
        let factor = psd_factor(&cov, q, self.signal_variance)?;
        Ok(draws.estimate(&means, &factor, scale))
    }

    fn mean_sum(&self) -> f64 {
        self.means.iter().sum()
    }
}

fn check_batch(batch: &[NormalizedPoint], cfg: &AcquisitionConfig) -> Result<()> {
    cfg.validate()?;
    if batch.len() != cfg.q {
        return Err(Error::InvalidArgument(format!(
            "batch has {} points but q = {}",
            batch.len(),
            cfg.q
        )));
    }
    Ok(())
}

/// q-UCB estimate together with its Monte Carlo standard error.
pub fn qucb_estimate(
    gp: &GpPosterior,
    batch: &[NormalizedPoint],
    cfg: &AcquisitionConfig,
    qmc_seed: u64,
) -> Result<QucbEstimate> {
    check_batch(batch, cfg)?;
    let draws = qmc_draws(cfg.mc_samples, cfg.q, qmc_seed);
    BatchState::new(gp, batch.to_vec()).estimate(reparam_scale(cfg.beta), &Draws::from_rows(&draws, cfg.q))
}

pub fn qucb_score(
    gp: &GpPosterior,
    batch: &[NormalizedPoint],
    cfg: &AcquisitionConfig,
    qmc_seed: u64,
) -> Result<f64> {
    qucb_estimate(gp, batch, cfg, qmc_seed).map(|e| e.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Objective {
    score: f64,
    mean_sum: f64,
}

impl Objective {
    // The mean sum only breaks exact ties, which happen when a point that
    // never attains the max moves. It pulls such points toward high means.
    fn improves_on(&self, other: &Objective) -> bool {
        self.score > other.score || (self.score == other.score && self.mean_sum > other.mean_sum)
    }
}

struct Searcher<'a> {
    gp: &'a GpPosterior,
    scale: f64,
    draws: Draws,
    refine_steps: usize,
}

impl Searcher<'_> {
    fn objective(&self, state: &BatchState) -> Option<Objective> {
        state.estimate(self.scale, &self.draws).ok().map(|e| Objective {
            score: e.value,
            mean_sum: state.mean_sum(),
        })
    }

    fn refine(&self, start: Vec<NormalizedPoint>) -> (Option<Objective>, Vec<NormalizedPoint>) {
        let mut state = BatchState::new(self.gp, start);
        let Some(mut current) = self.objective(&state) else {
            return (None, state.points);
        };
        let q = state.points.len();
        let mut step = INITIAL_STEP;
        while step >= FINAL_STEP {
            for _ in 0..self.refine_steps.max(1) {
                let mut improved = false;
                for j in 0..q {
                    for axis in 0..2 {
                        for dir in [1.0, -1.0] {
                            let mut coords = state.points[j].as_array();
                            let moved = (coords[axis] + dir * step).clamp(0.0, 1.0);
                            if moved == coords[axis] {
                                continue;
                            }
                            coords[axis] = moved;
                            let snap = state.snapshot(j);
                            state.set_point(self.gp, j, NormalizedPoint::clamped(coords[0], coords[1]));
                            match self.objective(&state) {
                                Some(trial) if trial.improves_on(&current) => {
                                    current = trial;
                                    improved = true;
                                    break;
                                }
                                _ => state.restore(j, snap),
                            }
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            step /= 2.0;
        }
        (Some(current), state.points)
    }
}

fn initial_candidates(q: usize, restarts: usize, seed: u64) -> Vec<Vec<NormalizedPoint>> {
    let halton = ScrambledHalton::new(2 * q, derive(seed, &[stream::INIT]));
    (0..restarts as u64)
        .map(|r| {
            let x = halton.point(r);
            x.chunks_exact(2)
                .map(|c| NormalizedPoint::clamped(c[0], c[1]))
                .collect()
        })
        .collect()
}

fn far_from(p: &NormalizedPoint, accepted: &[NormalizedPoint]) -> bool {
    accepted
        .iter()
        .all(|a| a.distance_squared(p) >= DUPLICATE_RADIUS * DUPLICATE_RADIUS)
}

/// Multi-start search for the batch with the largest q-UCB score.
pub fn propose_batch(gp: &GpPosterior, cfg: &AcquisitionConfig, seed: u64) -> Result<BatchProposal> {
    cfg.validate()?;
    let searcher = Searcher {
        gp,
        scale: reparam_scale(cfg.beta),
        draws: Draws::from_rows(&qmc_draws(cfg.mc_samples, cfg.q, seed), cfg.q),
        refine_steps: cfg.refine_steps,
    };

    let mut results: Vec<(usize, Objective, Vec<NormalizedPoint>)> =
        initial_candidates(cfg.q, cfg.restarts, seed)
            .into_iter()
            .enumerate()
            .filter_map(|(r, start)| match searcher.refine(start) {
                (Some(obj), pts) => Some((r, obj, pts)),
                (None, _) => None,
            })
            .collect();
    if results.is_empty() {
        return Err(Error::NotPositiveDefinite { jitter: JITTER_MAX });
    }
    // Best score first; ties keep the lowest restart index.
    results.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    let best = &results[0].2;
    let mut accepted: Vec<NormalizedPoint> = Vec::with_capacity(cfg.q);
    let mut replaced = false;
    for (j, p) in best.iter().enumerate() {
        if far_from(p, &accepted) {
            accepted.push(*p);
            continue;
        }
        replaced = true;
        let same_slot = results[1..].iter().map(|r| r.2[j]);
        let any_slot = results.iter().flat_map(|r| r.2.iter().copied());
        let fresh = initial_candidates(cfg.q, cfg.restarts + 64, seed)
            .into_iter()
            .skip(cfg.restarts)
            .flatten();
        let substitute = same_slot
            .chain(any_slot)
            .chain(fresh)
            .find(|c| far_from(c, &accepted))
            .unwrap_or(*p);
        accepted.push(substitute);
    }

    let score = if replaced {
        BatchState::new(gp, accepted.clone()).estimate(searcher.scale, &searcher.draws)?.value
    } else {
        results[0].1.score
    };
    Ok(BatchProposal {
        points: accepted,
        score,
    })
}
