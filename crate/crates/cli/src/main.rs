use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vantage::campaign::{run, CampaignConfig, Strategy};
use vantage::simulator::{exhaustive_optimum, true_objective, ORACLE_RESOLUTION};

use vantage_cli::compare::{run_id, run_seed, RunManifest, RECORD_FILE};
use vantage_cli::config::{self, Document};
use vantage_cli::records::RecordContext;
use vantage_cli::{emit_heatmap, read_record_file, record_to_csv, run_compare, theory_check, CliError};

const THEORY_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "vantage", version, about = "Batched Bayesian optimization of training viewpoints")]
struct Cli {
    /// TOML config file. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "vantage-out")]
    out: PathBuf,
    /// Number of seed indices (0..N). Overrides `compare.seeds`.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Concurrent runs for `compare`. Overrides `compare.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Landscape preset (lift, pickplace, square). Overrides the config.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its record.
    Run {
        /// Strategy to run instead of the config's.
        #[arg(long)]
        strategy: Option<String>,
        /// Seed index, matching `compare`'s `<strategy>_seed<k>` runs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every strategy over the seed set.
    Compare,
    /// Oracle heatmap with a record's points overlaid.
    Heatmap {
        /// Record CSV to overlay. A fresh seed-0 run is used when omitted.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
    },
    /// Empirical regret and convergence checks.
    TheoryCheck,
}

fn load(cli: &Cli) -> Result<Document, CliError> {
    let mut doc = config::load(cli.config.as_deref())?;
    if let Some(name) = &cli.preset {
        config::apply_preset(&mut doc, name)?;
    }
    if let Some(n) = cli.seeds {
        if n < 1 {
            return Err(config::ConfigError::Invalid { key: "--seeds".into(), message: "must be ≥ 1".into() }.into());
        }
        doc.seeds = n;
    }
    if let Some(k) = cli.workers {
        if k < 1 {
            return Err(config::ConfigError::Invalid { key: "--workers".into(), message: "must be ≥ 1".into() }.into());
        }
        doc.workers = k;
    }
    Ok(doc)
}

fn single_run(cfg: &CampaignConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let run_cfg = CampaignConfig { master_seed: run_seed(cfg.master_seed, seed), ..cfg.clone() };
    let record = run(&run_cfg)?;
    let tests = run_cfg.rollout.normalized_test_points()?;
    let (_, f_star) = exhaustive_optimum(&run_cfg.landscape, &tests, ORACLE_RESOLUTION);
    let id = run_id(run_cfg.strategy, seed);
    let ctx = RecordContext {
        run_id: &id,
        bounds: &run_cfg.bounds,
        landscape: &run_cfg.landscape,
        test_points: &tests,
        optimum_value: f_star,
    };
    let bytes = record_to_csv(&record, &ctx)?;
    let dir = out.join(&id);
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let path = dir.join(RECORD_FILE);
    std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let best = record.final_selection;
    println!(
        "{id}: {} evaluations, final selection ({:.4}, {:.4}) observed J {:.4}, oracle J {:.4} (optimum {:.4})",
        record.evaluations(),
        best.point.nu_h,
        best.point.nu_v,
        best.value,
        true_objective(&run_cfg.landscape, &best.point, &tests),
        f_star
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    let doc = load(cli)?;
    match &cli.command {
        Command::Run { strategy, seed } => {
            let mut cfg = doc.campaign;
            if let Some(name) = strategy {
                cfg.strategy = Strategy::from_name(name)
                    .map_err(|e| config::ConfigError::Invalid { key: "--strategy".into(), message: e.to_string() })?;
            }
            single_run(&cfg, *seed, &cli.out)?;
        }
        Command::Compare => {
            let manifest = RunManifest {
                config_path: cli.config.clone(),
                base: doc.campaign,
                strategies: doc.strategies,
                seeds: (0..doc.seeds as u64).collect(),
                out_dir: cli.out.clone(),
                workers: doc.workers,
            };
            let outcome = run_compare(&manifest)?;
            println!("optimum J {:.4}", outcome.optimum.1);
            println!("{:<8} {:>4} {:>8} {:>8} {:>8}", "strategy", "runs", "median", "q1", "q3");
            for r in &outcome.summary {
                println!("{:<8} {:>4} {:>8.4} {:>8.4} {:>8.4}", r.strategy.name(), r.runs, r.median, r.q1, r.q3);
            }
            for o in &outcome.runs {
                if let Err(e) = &o.result {
                    eprintln!("{}: {e}", o.spec.run_id);
                }
            }
            println!("wrote {}", cli.out.display());
            let failed = outcome.failures();
            if failed > 0 {
                return Err(CliError::RunsFailed { failed, total: outcome.runs.len() });
            }
        }
        Command::Heatmap { record, resolution } => {
            if *resolution < 1 {
                return Err(config::ConfigError::Invalid { key: "--resolution".into(), message: "must be ≥ 1".into() }.into());
            }
            let cfg = doc.campaign;
            let record = match record {
                Some(path) => read_record_file(path)?.record,
                None => run(&CampaignConfig { master_seed: run_seed(cfg.master_seed, 0), ..cfg.clone() })?,
            };
            let files = emit_heatmap(&record, &cfg, *resolution, &cli.out)?;
            println!("wrote {} and {}", files.matrix.display(), files.image.display());
        }
        Command::TheoryCheck => {
            let result = theory_check(&doc.campaign, doc.seeds)?;
            print!("{}", result.table());
            if !result.passed() {
                return Ok(THEORY_FAILED);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
