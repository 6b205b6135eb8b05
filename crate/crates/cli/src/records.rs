//! One-row-per-evaluation CSV records.
//!
//! Floats are written with `Display`, which prints the shortest string that
//! parses back to the same `f64`, so a record survives a round trip exactly.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use vantage::campaign::{CampaignRecord, Strategy};
use vantage::geometry::{denormalize, AngleBounds, NormalizedPoint};
use vantage::simulator::{true_objective, Landscape};
use vantage::surrogate::Observation;

use crate::error::CliError;

pub const COLUMNS: [&str; 13] = [
    "run_id",
    "strategy",
    "seed",
    "iteration",
    "index_in_batch",
    "nu_h",
    "nu_v",
    "theta_h_rad",
    "theta_v_rad",
    "observed_J",
    "oracle_J",
    "best_so_far",
    "cumulative_regret",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Row {
    pub run_id: String,
    pub strategy: String,
    pub seed: u64,
    pub iteration: usize,
    pub index_in_batch: usize,
    pub nu_h: f64,
    pub nu_v: f64,
    pub theta_h_rad: f64,
    pub theta_v_rad: f64,
    #[serde(rename = "observed_J")]
    pub observed_j: f64,
    #[serde(rename = "oracle_J")]
    pub oracle_j: f64,
    pub best_so_far: f64,
    pub cumulative_regret: f64,
}

/// What a record needs besides its observations to fill every column.
#[derive(Debug, Clone, Copy)]
pub struct RecordContext<'a> {
    pub run_id: &'a str,
    pub bounds: &'a AngleBounds,
    pub landscape: &'a Landscape,
    pub test_points: &'a [NormalizedPoint],
    /// Noise-free optimum the regret column is measured against.
    pub optimum_value: f64,
}

pub fn record_to_csv(record: &CampaignRecord, ctx: &RecordContext) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Record {
        path: ctx.run_id.into(),
        message: e.to_string(),
    };
    w.write_record(COLUMNS).map_err(csv_err)?;
    let mut best = f64::NEG_INFINITY;
    let mut regret = 0.0;
    for it in &record.iterations {
        for (k, o) in it.observations.iter().enumerate() {
            let angles = denormalize(o.point, ctx.bounds)?;
            let oracle = true_objective(ctx.landscape, &o.point, ctx.test_points);
            best = best.max(o.value);
            regret += ctx.optimum_value - oracle;
            let fields = [
                ctx.run_id.to_string(),
                record.strategy.name().to_string(),
                record.seed.to_string(),
                it.iteration.to_string(),
                k.to_string(),
                o.point.nu_h.to_string(),
                o.point.nu_v.to_string(),
                angles.theta_h.to_string(),
                angles.theta_v.to_string(),
                o.value.to_string(),
                oracle.to_string(),
                best.to_string(),
                regret.to_string(),
            ];
            w.write_record(&fields).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Record {
        path: ctx.run_id.into(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub run_id: String,
    pub record: CampaignRecord,
    pub rows: Vec<Row>,
}

/// Reads rows back and rebuilds the record. `origin` only labels errors.
pub fn record_from_csv<R: Read>(reader: R, origin: &Path) -> Result<ParsedRecord, CliError> {
    let fail = |message: String| CliError::Record {
        path: origin.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(fail(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let rows: Vec<Row> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e: csv::Error| fail(e.to_string()))?;
    let first = rows.first().ok_or_else(|| fail("record has no rows".into()))?;
    let (run_id, strategy_name, seed) = (first.run_id.clone(), first.strategy.clone(), first.seed);
    let strategy = Strategy::from_name(&strategy_name).map_err(|e| fail(e.to_string()))?;

    let mut batches: Vec<Vec<Observation>> = Vec::new();
    for (line, row) in rows.iter().enumerate() {
        let line = line + 2;
        if row.run_id != run_id || row.strategy != strategy_name || row.seed != seed {
            return Err(fail(format!("line {line}: rows from more than one run")));
        }
        if row.iteration == batches.len() {
            batches.push(Vec::new());
        } else if row.iteration + 1 != batches.len() {
            return Err(fail(format!("line {line}: iteration {} out of order", row.iteration)));
        }
        let batch = batches.last_mut().expect("pushed above");
        if row.index_in_batch != batch.len() {
            return Err(fail(format!("line {line}: index_in_batch {} out of order", row.index_in_batch)));
        }
        let point = NormalizedPoint::new(row.nu_h, row.nu_v).map_err(|e| fail(format!("line {line}: {e}")))?;
        let obs = Observation::new(point, row.observed_j).map_err(|e| fail(format!("line {line}: {e}")))?;
        batch.push(obs);
    }
    let record = CampaignRecord::from_batches(strategy, seed, batches).map_err(|e| fail(e.to_string()))?;
    Ok(ParsedRecord { run_id, record, rows })
}

pub fn read_record_file(path: &Path) -> Result<ParsedRecord, CliError> {
    let file = std::fs::File::open(path).map_err(crate::error::io_error(path))?;
    record_from_csv(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vantage::campaign::{run, CampaignConfig};
    use vantage::simulator::{exhaustive_optimum, Preset};

    fn small(strategy: Strategy) -> CampaignConfig {
        let mut cfg = CampaignConfig {
            q: 3,
            iterations: 2,
            strategy,
            master_seed: 11,
            landscape: Preset::PickPlace.landscape(),
            ..CampaignConfig::default()
        };
        cfg.acquisition.q = 3;
        cfg.acquisition.restarts = 4;
        cfg.acquisition.mc_samples = 64;
        cfg
    }

    #[test]
    fn round_trip_is_exact() {
        for s in Strategy::ALL {
            let cfg = small(s);
            let record = run(&cfg).unwrap();
            let tests = cfg.rollout.normalized_test_points().unwrap();
            let (_, f_star) = exhaustive_optimum(&cfg.landscape, &tests, 21);
            let ctx = RecordContext {
                run_id: "r",
                bounds: &cfg.bounds,
                landscape: &cfg.landscape,
                test_points: &tests,
                optimum_value: f_star,
            };
            let bytes = record_to_csv(&record, &ctx).unwrap();
            let parsed = record_from_csv(bytes.as_slice(), Path::new("mem")).unwrap();
            assert_eq!(parsed.record, record);
            assert_eq!(parsed.run_id, "r");
            assert_eq!(parsed.rows.len(), cfg.budget());

            let last = parsed.rows.last().unwrap();
            assert_eq!(last.best_so_far, record.final_selection.value);
            let oracle_sum: f64 = parsed.rows.iter().map(|r| f_star - r.oracle_j).sum();
            assert!((last.cumulative_regret - oracle_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_records() {
        let text = "a,b\n1,2\n";
        assert!(record_from_csv(text.as_bytes(), Path::new("x")).is_err());
        let header = COLUMNS.join(",");
        let row = |it: usize, k: usize| format!("r,grid,0,{it},{k},0.5,0.5,0,0,0.4,0.4,0.4,0.1");
        let ok = format!("{header}\n{}\n{}\n{}\n", row(0, 0), row(0, 1), row(1, 0));
        assert!(record_from_csv(ok.as_bytes(), Path::new("x")).is_ok());
        let gap = format!("{header}\n{}\n{}\n", row(0, 0), row(2, 0));
        assert!(record_from_csv(gap.as_bytes(), Path::new("x")).is_err());
        let skipped = format!("{header}\n{}\n{}\n", row(0, 0), row(0, 2));
        assert!(record_from_csv(skipped.as_bytes(), Path::new("x")).is_err());
        let bad_value = format!("{header}\nr,grid,0,0,0,0.5,0.5,0,0,1.5,0.4,0.4,0.1\n");
        assert!(record_from_csv(bad_value.as_bytes(), Path::new("x")).is_err());
        assert!(record_from_csv(format!("{header}\n").as_bytes(), Path::new("x")).is_err());
    }
}
