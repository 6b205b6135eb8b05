//! TOML campaign configuration.
//!
//! Every key is optional. Missing keys take the library defaults, and
//! unknown keys are rejected. Angles are given either as numbers (radians)
//! or as strings with a `deg` or `rad` suffix, e.g. `h = ["-90deg", "90deg"]`.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;
use vantage::campaign::{BetaSchedule, CampaignConfig, Strategy};
use vantage::geometry::{AngleBounds, NormalizedPoint};
use vantage::simulator::{Bump, Preset, RolloutConfig};
use vantage::surrogate::{HyperGrid, LogRange};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A parsed config file: the campaign plus the comparison settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub campaign: CampaignConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: usize,
    pub workers: usize,
}

pub const DEFAULT_SEEDS: usize = 10;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Angle {
    Radians(f64),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    preset: Option<String>,
    strategy: Option<String>,
    master_seed: Option<u64>,
    q: Option<usize>,
    iterations: Option<usize>,
    init_batches: Option<usize>,
    refit_hyperparameters: Option<bool>,
    bounds: Option<RawBounds>,
    acquisition: Option<RawAcquisition>,
    kernel: Option<RawKernel>,
    hyper_grid: Option<RawHyperGrid>,
    rollout: Option<RawRollout>,
    landscape: Option<RawLandscape>,
    compare: Option<RawCompare>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    h: Option<[Angle; 2]>,
    v: Option<[Angle; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAcquisition {
    beta: Option<f64>,
    mc_samples: Option<usize>,
    restarts: Option<usize>,
    refine_steps: Option<usize>,
    beta_schedule: Option<String>,
    grid_size: Option<usize>,
    delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    signal_variance: Option<f64>,
    lengthscale_h: Option<f64>,
    lengthscale_v: Option<f64>,
    noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    min: f64,
    max: f64,
    count: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHyperGrid {
    signal_variance: Option<RawRange>,
    lengthscale: Option<RawRange>,
    noise_variance: Option<RawRange>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRollout {
    rollouts_per_test_point: Option<usize>,
    test_grid: Option<[usize; 2]>,
    rng_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLandscape {
    base_rate: Option<f64>,
    generalization_width: Option<f64>,
    bumps: Option<Vec<RawBump>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    h: f64,
    v: f64,
    height: f64,
    width: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    strategies: Option<Vec<String>>,
    seeds: Option<usize>,
    workers: Option<usize>,
}

/// Parses an angle: a bare number is radians, strings need a `deg` or
/// `rad` suffix.
pub fn parse_angle(key: &str, text: &str) -> Result<f64, ConfigError> {
    let t = text.trim();
    let (number, scale) = if let Some(n) = t.strip_suffix("deg") {
        (n, PI / 180.0)
    } else if let Some(n) = t.strip_suffix("rad") {
        (n, 1.0)
    } else {
        return Err(invalid(key, format!("angle '{text}' needs a 'deg' or 'rad' suffix")));
    };
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| invalid(key, format!("'{text}' is not a number")))?;
    if !value.is_finite() {
        return Err(invalid(key, format!("angle '{text}' is not finite")));
    }
    Ok(value * scale)
}

fn angle(key: &str, a: &Angle) -> Result<f64, ConfigError> {
    match a {
        Angle::Radians(r) if r.is_finite() => Ok(*r),
        Angle::Radians(r) => Err(invalid(key, format!("angle {r} is not finite"))),
        Angle::Text(t) => parse_angle(key, t),
    }
}

fn core(key: &str, r: vantage::Result<()>) -> Result<(), ConfigError> {
    r.map_err(|e| invalid(key, e.to_string()))
}

/// Parses and validates a config document.
pub fn parse_document(text: &str) -> Result<Document, ConfigError> {
    let raw: RawDocument = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut cfg = CampaignConfig::default();

    if let Some(name) = &raw.preset {
        cfg.landscape = Preset::from_name(name).map_err(|e| invalid("preset", e.to_string()))?.landscape();
    }
    if let Some(name) = &raw.strategy {
        cfg.strategy = Strategy::from_name(name).map_err(|e| invalid("strategy", e.to_string()))?;
    }
    if let Some(seed) = raw.master_seed {
        cfg.master_seed = seed;
    }
    if let Some(q) = raw.q {
        if q < 1 {
            return Err(invalid("q", "q must be ≥ 1"));
        }
        cfg.q = q;
        cfg.acquisition.q = q;
    }
    if let Some(n) = raw.iterations {
        if n < 1 {
            return Err(invalid("iterations", "iterations must be ≥ 1"));
        }
        cfg.iterations = n;
    }
    if let Some(n) = raw.init_batches {
        cfg.init_batches = n;
    }
    if let Some(refit) = raw.refit_hyperparameters {
        cfg.refit_hyperparameters = refit;
    }

    if let Some(b) = &raw.bounds {
        let mut bounds = cfg.bounds;
        if let Some([lo, hi]) = &b.h {
            bounds.h_min = angle("bounds.h", lo)?;
            bounds.h_max = angle("bounds.h", hi)?;
        }
        if let Some([lo, hi]) = &b.v {
            bounds.v_min = angle("bounds.v", lo)?;
            bounds.v_max = angle("bounds.v", hi)?;
        }
        cfg.bounds = AngleBounds::new(bounds.h_min, bounds.h_max, bounds.v_min, bounds.v_max)
            .map_err(|e| invalid("bounds", e.to_string()))?;
    }

    if let Some(a) = &raw.acquisition {
        let acq = &mut cfg.acquisition;
        acq.beta = a.beta.unwrap_or(acq.beta);
        acq.mc_samples = a.mc_samples.unwrap_or(acq.mc_samples);
        acq.restarts = a.restarts.unwrap_or(acq.restarts);
        acq.refine_steps = a.refine_steps.unwrap_or(acq.refine_steps);
        let (default_grid, default_delta) = match BetaSchedule::DEFAULT_THEORY {
            BetaSchedule::Theory { grid_size, delta } => (grid_size, delta),
            BetaSchedule::Constant => unreachable!(),
        };
        cfg.beta_schedule = match a.beta_schedule.as_deref() {
            None | Some("constant") => {
                if a.grid_size.is_some() || a.delta.is_some() {
                    return Err(invalid(
                        "acquisition.beta_schedule",
                        "grid_size and delta only apply to the \"theory\" schedule",
                    ));
                }
                BetaSchedule::Constant
            }
            Some("theory") => BetaSchedule::Theory {
                grid_size: a.grid_size.unwrap_or(default_grid),
                delta: a.delta.unwrap_or(default_delta),
            },
            Some(other) => {
                return Err(invalid(
                    "acquisition.beta_schedule",
                    format!("unknown schedule '{other}' (expected constant or theory)"),
                ))
            }
        };
        core("acquisition", cfg.acquisition.validate())?;
    }

    if let Some(k) = &raw.kernel {
        let p = &mut cfg.kernel;
        p.signal_variance = k.signal_variance.unwrap_or(p.signal_variance);
        p.lengthscale_h = k.lengthscale_h.unwrap_or(p.lengthscale_h);
        p.lengthscale_v = k.lengthscale_v.unwrap_or(p.lengthscale_v);
        p.noise_variance = k.noise_variance.unwrap_or(p.noise_variance);
        core("kernel", cfg.kernel.validate())?;
    }

    if let Some(g) = &raw.hyper_grid {
        let range = |key: &str, r: Option<RawRange>, default: LogRange| -> Result<LogRange, ConfigError> {
            let Some(r) = r else { return Ok(default) };
            if !(r.min > 0.0 && r.max >= r.min && r.max.is_finite()) || r.count < 1 {
                return Err(invalid(key, "needs 0 < min ≤ max and count ≥ 1"));
            }
            if r.count == 1 && r.min != r.max {
                return Err(invalid(key, "count = 1 requires min = max"));
            }
            Ok(LogRange { min: r.min, max: r.max, count: r.count })
        };
        let d = HyperGrid::default();
        cfg.hyper_grid = HyperGrid {
            signal_variance: range("hyper_grid.signal_variance", g.signal_variance, d.signal_variance)?,
            lengthscale: range("hyper_grid.lengthscale", g.lengthscale, d.lengthscale)?,
            noise_variance: range("hyper_grid.noise_variance", g.noise_variance, d.noise_variance)?,
        };
    }

    let r = raw.rollout.unwrap_or_default();
    let [n_h, n_v] = r.test_grid.unwrap_or([10, 10]);
    let defaults = RolloutConfig::default();
    cfg.rollout = RolloutConfig::with_grid(
        cfg.bounds,
        n_h,
        n_v,
        r.rollouts_per_test_point.unwrap_or(defaults.rollouts_per_test_point),
        r.rng_seed.unwrap_or(defaults.rng_seed),
    )
    .map_err(|e| invalid("rollout", e.to_string()))?;

    if let Some(l) = &raw.landscape {
        if let Some(b) = l.base_rate {
            cfg.landscape.base_rate = b;
        }
        if let Some(w) = l.generalization_width {
            cfg.landscape.generalization_width = w;
        }
        if let Some(bumps) = &l.bumps {
            cfg.landscape.bumps = bumps
                .iter()
                .map(|b| {
                    let center = NormalizedPoint::new(b.h, b.v).map_err(|e| invalid("landscape.bumps", e.to_string()))?;
                    Ok(Bump { center, height: b.height, width: b.width })
                })
                .collect::<Result<_, ConfigError>>()?;
        }
        core("landscape", cfg.landscape.validate())?;
    }

    let c = raw.compare.unwrap_or_default();
    let strategies = match c.strategies {
        None => Strategy::ALL.to_vec(),
        Some(names) => {
            if names.is_empty() {
                return Err(invalid("compare.strategies", "at least one strategy is required"));
            }
            let mut out: Vec<Strategy> = Vec::new();
            for n in &names {
                let s = Strategy::from_name(n).map_err(|e| invalid("compare.strategies", e.to_string()))?;
                if out.contains(&s) {
                    return Err(invalid("compare.strategies", format!("'{n}' is listed twice")));
                }
                out.push(s);
            }
            out
        }
    };
    let seeds = c.seeds.unwrap_or(DEFAULT_SEEDS);
    if seeds < 1 {
        return Err(invalid("compare.seeds", "seeds must be ≥ 1"));
    }
    let workers = c.workers.unwrap_or(1);
    if workers < 1 {
        return Err(invalid("compare.workers", "workers must be ≥ 1"));
    }

    core("config", cfg.validate())?;
    Ok(Document {
        campaign: cfg,
        strategies,
        seeds,
        workers,
    })
}

/// Parses a config document and returns just the campaign.
pub fn parse_config(text: &str) -> Result<CampaignConfig, ConfigError> {
    parse_document(text).map(|d| d.campaign)
}

/// Loads a config file, or the defaults when `path` is `None`.
pub fn load(path: Option<&Path>) -> Result<Document, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| invalid("--config", format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    Ok(parse_document(&text)?)
}

/// Replaces the landscape with a named preset.
pub fn apply_preset(doc: &mut Document, name: &str) -> Result<(), ConfigError> {
    doc.campaign.landscape = Preset::from_name(name).map_err(|e| invalid("--preset", e.to_string()))?.landscape();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config("preset = \"lift\"\n").unwrap();
        assert_eq!(cfg, CampaignConfig::default());
        let doc = parse_document("").unwrap();
        assert_eq!(doc.strategies, Strategy::ALL.to_vec());
        assert_eq!(doc.seeds, DEFAULT_SEEDS);
        assert_eq!(doc.workers, 1);
    }

    #[test]
    fn empty_sections_are_runnable() {
        let text = "[bounds]\n[acquisition]\n[kernel]\n[hyper_grid]\n[rollout]\n[landscape]\n[compare]\n";
        assert_eq!(parse_config(text).unwrap(), CampaignConfig::default());
    }

    #[test]
    fn zero_batch_size_is_rejected() {
        let err = parse_config("q = 0").unwrap_err().to_string();
        assert!(err.contains("q must be ≥ 1"), "{err}");
    }

    #[test]
    fn degree_bounds_become_radians() {
        let cfg = parse_config("[bounds]\nh = [\"-90deg\", \"90deg\"]\nv = [0, \"0.5rad\"]\n").unwrap();
        assert_abs_diff_eq!(cfg.bounds.h_min, -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.bounds.h_max, PI / 2.0, epsilon = 1e-15);
        assert_eq!(cfg.bounds.v_min, 0.0);
        assert_eq!(cfg.bounds.v_max, 0.5);
        assert_eq!(cfg.rollout.bounds, cfg.bounds);
    }

    #[test]
    fn angle_strings_need_units() {
        assert!(parse_angle("k", "90").unwrap_err().to_string().contains("suffix"));
        assert!(parse_angle("k", "ninetydeg").is_err());
        assert_abs_diff_eq!(parse_angle("k", " 45 deg ").unwrap(), PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("qq = 3").unwrap_err().to_string();
        assert!(err.contains("qq"), "{err}");
        let err = parse_config("[acquisition]\nbeat = 1.0").unwrap_err().to_string();
        assert!(err.contains("beat"), "{err}");
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse_config("[acquisition]\nmc_samples = 10").unwrap_err().to_string();
        assert!(err.contains("acquisition") && err.contains("mc_samples"), "{err}");
        let err = parse_config("[bounds]\nh = [\"1rad\", \"-1rad\"]").unwrap_err().to_string();
        assert!(err.contains("bounds"), "{err}");
        let err = parse_config("preset = \"stack\"").unwrap_err().to_string();
        assert!(err.contains("preset"), "{err}");
        let err = parse_config("[kernel]\nnoise_variance = -1.0").unwrap_err().to_string();
        assert!(err.contains("kernel"), "{err}");
        let err = parse_document("[compare]\nstrategies = [\"grid\", \"grid\"]").unwrap_err().to_string();
        assert!(err.contains("compare.strategies"), "{err}");
    }

    #[test]
    fn full_document() {
        let text = r#"
preset = "pickplace"
strategy = "random"
master_seed = 7
q = 4
iterations = 2
init_batches = 2

[acquisition]
beta = 1.5
mc_samples = 128
beta_schedule = "theory"
delta = 0.2

[rollout]
rollouts_per_test_point = 5
test_grid = [4, 3]

[landscape]
base_rate = 0.2
bumps = [{ h = 0.3, v = 0.4, height = 0.5, width = 0.1 }]

[compare]
strategies = ["vantage", "random"]
seeds = 3
workers = 2
"#;
        let doc = parse_document(text).unwrap();
        let cfg = &doc.campaign;
        assert_eq!((cfg.q, cfg.acquisition.q, cfg.iterations, cfg.init_batches), (4, 4, 2, 2));
        assert_eq!(cfg.strategy, Strategy::Random);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.beta_schedule, BetaSchedule::Theory { grid_size: 441, delta: 0.2 });
        assert_eq!(cfg.rollout.test_grid.len(), 12);
        assert_eq!(cfg.rollout.rollouts_per_test_point, 5);
        assert_eq!(cfg.landscape.base_rate, 0.2);
        assert_eq!(cfg.landscape.bumps.len(), 1);
        assert_eq!(cfg.landscape.generalization_width, Preset::PickPlace.landscape().generalization_width);
        assert_eq!(doc.strategies, vec![Strategy::Vantage, Strategy::Random]);
        assert_eq!((doc.seeds, doc.workers), (3, 2));
    }
}
