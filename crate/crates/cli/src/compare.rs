//! Strategy sweeps over a seed set.
//!
//! Every (strategy, seed index) pair gets its own run directory
//! `<strategy>_seed<k>` holding `record.csv`. The sweep also writes
//! `summary.csv` (final oracle J per strategy), `regret.csv` (per-round
//! regret curves) and `manifest.json`. Run `k` of every strategy uses the
//! master seed `derive(master_seed, [RUN, k])`, so strategies are paired.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use vantage::campaign::{run, CampaignConfig, CampaignRecord, Strategy};
use vantage::geometry::NormalizedPoint;
use vantage::seed::{derive, stream};
use vantage::simulator::{exhaustive_optimum, ORACLE_RESOLUTION};
use vantage::theory::{regret_report_with_optimum, RegretReport};

use crate::error::{io_error, write_atomic, CliError};
use crate::records::{record_to_csv, RecordContext};

pub const RECORD_FILE: &str = "record.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REGRET_FILE: &str = "regret.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Master seed of repetition `index` derived from the config's master seed.
pub fn run_seed(master_seed: u64, index: u64) -> u64 {
    derive(master_seed, &[stream::RUN, index])
}

pub fn run_id(strategy: Strategy, index: u64) -> String {
    format!("{}_seed{index}", strategy.name())
}

/// Everything needed to execute a sweep.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub base: CampaignConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub run_id: String,
    pub seed_index: u64,
    pub config: CampaignConfig,
}

impl RunManifest {
    /// Config for `strategy` before per-run seeding.
    pub fn resolved(&self, strategy: Strategy) -> CampaignConfig {
        CampaignConfig { strategy, ..self.base.clone() }
    }

    /// Runs in output order: strategy-major, then seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        self.strategies
            .iter()
            .flat_map(|&s| {
                self.seeds.iter().map(move |&k| RunSpec {
                    run_id: run_id(s, k),
                    seed_index: k,
                    config: CampaignConfig {
                        master_seed: run_seed(self.base.master_seed, k),
                        ..self.resolved(s)
                    },
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub wall_clock_seconds: f64,
    pub result: Result<(CampaignRecord, RegretReport), String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub runs: usize,
    pub budget: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub median_observed: f64,
    pub median_cumulative_regret: f64,
}

impl SummaryRow {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub optimum: (NormalizedPoint, f64),
}

impl CompareOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Per-strategy statistics of completed runs, in `strategies` order.
pub fn summarize(outcomes: &[RunOutcome], strategies: &[Strategy]) -> Vec<SummaryRow> {
    strategies
        .iter()
        .filter_map(|&s| {
            let done: Vec<(&CampaignConfig, &CampaignRecord, &RegretReport)> = outcomes
                .iter()
                .filter(|o| o.spec.config.strategy == s)
                .filter_map(|o| o.result.as_ref().ok().map(|(rec, rep)| (&o.spec.config, rec, rep)))
                .collect();
            if done.is_empty() {
                return None;
            }
            let final_oracle = sorted(done.iter().map(|(_, rec, rep)| final_oracle_value(rec, rep)).collect());
            let observed = sorted(done.iter().map(|(_, rec, _)| rec.final_selection.value).collect());
            let regret = sorted(done.iter().map(|(_, _, rep)| rep.cumulative_regret()).collect());
            Some(SummaryRow {
                strategy: s,
                runs: done.len(),
                budget: done[0].0.budget(),
                median: quantile(&final_oracle, 0.5),
                q1: quantile(&final_oracle, 0.25),
                q3: quantile(&final_oracle, 0.75),
                median_observed: quantile(&observed, 0.5),
                median_cumulative_regret: quantile(&regret, 0.5),
            })
        })
        .collect()
}

/// Oracle value at the final selection, the first observation holding the
/// best observed value.
pub fn final_oracle_value(record: &CampaignRecord, report: &RegretReport) -> f64 {
    let idx = record
        .observations()
        .position(|o| o.value == record.final_selection.value)
        .expect("final selection is one of the observations");
    report.oracle_values[idx]
}

fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    let mut out = String::from(
        "strategy,runs,budget,median_final_oracle_J,q1_final_oracle_J,q3_final_oracle_J,iqr_final_oracle_J,median_final_observed_J,median_cumulative_regret\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.strategy.name(),
            r.runs,
            r.budget,
            r.median,
            r.q1,
            r.q3,
            r.iqr(),
            r.median_observed,
            r.median_cumulative_regret
        ));
    }
    out.into_bytes()
}

fn regret_csv(outcomes: &[RunOutcome]) -> Vec<u8> {
    let mut out = String::from(
        "run_id,strategy,seed,round,evaluations,cumulative_regret,average_oracle_J,information_gain,beta,bound_ratio\n",
    );
    for o in outcomes {
        let Ok((record, report)) = &o.result else { continue };
        for r in &report.rounds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.spec.run_id,
                record.strategy.name(),
                record.seed,
                r.round,
                r.evaluations,
                r.cumulative_regret,
                r.average_success,
                r.information_gain,
                r.beta,
                r.bound_ratio
            ));
        }
    }
    out.into_bytes()
}

#[derive(Serialize)]
struct ManifestSeed {
    index: u64,
    master_seed: u64,
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    run_id: &'a str,
    strategy: &'a str,
    seed_index: u64,
    master_seed: u64,
    wall_clock_seconds: f64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    tool_version: &'static str,
    config_path: Option<String>,
    output_directory: String,
    workers: usize,
    seeds: Vec<ManifestSeed>,
    configs: Vec<CampaignConfig>,
    optimum: (NormalizedPoint, f64),
    runs: Vec<ManifestRun<'a>>,
}

fn execute(spec: &RunSpec, out_dir: &Path, optimum: (NormalizedPoint, f64)) -> Result<(CampaignRecord, RegretReport), String> {
    let cfg = &spec.config;
    let record = run(cfg).map_err(|e| e.to_string())?;
    let tests = cfg.rollout.normalized_test_points().map_err(|e| e.to_string())?;
    let report = regret_report_with_optimum(&record, &cfg.landscape, cfg, optimum).map_err(|e| e.to_string())?;
    let ctx = RecordContext {
        run_id: &spec.run_id,
        bounds: &cfg.bounds,
        landscape: &cfg.landscape,
        test_points: &tests,
        optimum_value: optimum.1,
    };
    let bytes = record_to_csv(&record, &ctx).map_err(|e| e.to_string())?;
    let dir = out_dir.join(&spec.run_id);
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    write_atomic(&dir.join(RECORD_FILE), &bytes).map_err(|e| e.to_string())?;
    Ok((record, report))
}

/// Executes every run of the manifest, `workers` at a time. Failed runs
/// are reported in the outcome and the manifest; completed runs keep their
/// outputs.
pub fn run_compare(manifest: &RunManifest) -> Result<CompareOutcome, CliError> {
    for s in &manifest.strategies {
        manifest.resolved(*s).validate()?;
    }
    let out_dir = &manifest.out_dir;
    std::fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let base = &manifest.base;
    let tests = base.rollout.normalized_test_points()?;
    let optimum = exhaustive_optimum(&base.landscape, &tests, ORACLE_RESOLUTION);

    let specs = manifest.runs();
    let slots: Vec<Mutex<Option<RunOutcome>>> = specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = manifest.workers.clamp(1, specs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let start = Instant::now();
                let result = execute(spec, out_dir, optimum);
                *slots[i].lock().expect("no panics while holding the lock") = Some(RunOutcome {
                    spec: spec.clone(),
                    wall_clock_seconds: start.elapsed().as_secs_f64(),
                    result,
                });
            });
        }
    });
    let runs: Vec<RunOutcome> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("worker finished").expect("every slot is filled"))
        .collect();

    let summary = summarize(&runs, &manifest.strategies);
    write_atomic(&out_dir.join(SUMMARY_FILE), &summary_csv(&summary))?;
    write_atomic(&out_dir.join(REGRET_FILE), &regret_csv(&runs))?;

    let file = ManifestFile {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_path: manifest.config_path.as_ref().map(|p| p.display().to_string()),
        output_directory: out_dir.display().to_string(),
        workers,
        seeds: manifest
            .seeds
            .iter()
            .map(|&k| ManifestSeed { index: k, master_seed: run_seed(base.master_seed, k) })
            .collect(),
        configs: manifest.strategies.iter().map(|&s| manifest.resolved(s)).collect(),
        optimum,
        runs: runs
            .iter()
            .map(|o| ManifestRun {
                run_id: &o.spec.run_id,
                strategy: o.spec.config.strategy.name(),
                seed_index: o.spec.seed_index,
                master_seed: o.spec.config.master_seed,
                wall_clock_seconds: o.wall_clock_seconds,
                status: if o.result.is_ok() { "ok" } else { "failed" },
                error: o.result.as_ref().err().map(String::as_str),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&file).expect("manifest is serializable");
    write_atomic(&out_dir.join(MANIFEST_FILE), &json)?;

    Ok(CompareOutcome { runs, summary, optimum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.5), 2.5);
        assert_eq!(quantile(&d, 0.25), 1.75);
        assert_eq!(quantile(&d, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
    }

    #[test]
    fn run_layout() {
        let m = RunManifest {
            config_path: None,
            base: CampaignConfig::default(),
            strategies: vec![Strategy::Grid, Strategy::Random],
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("unused"),
            workers: 1,
        };
        let runs = m.runs();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[0].run_id, "grid_seed0");
        assert_eq!(runs[5].run_id, "random_seed2");
        // Repetition k shares its master seed across strategies.
        assert_eq!(runs[1].config.master_seed, runs[4].config.master_seed);
        assert_ne!(runs[0].config.master_seed, runs[1].config.master_seed);
    }
}
