use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vantage_cli::compare::quantile;
use vantage_cli::read_record_file;

const SMALL: &str = r#"
preset = "pickplace"
q = 3
iterations = 2

[acquisition]
restarts = 4
mc_samples = 64
refine_steps = 1

[rollout]
rollouts_per_test_point = 5
test_grid = [4, 4]
"#;

fn vantage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vantage")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, format!("{SMALL}\n{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_dirs(out: &Path) -> Vec<String> {
    let mut dirs: Vec<String> = fs::read_dir(out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    dirs
}

fn summary_rows(out: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(out.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn single_strategy_single_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[compare]\nstrategies = [\"grid\"]\n");
    let out = tmp.path().join("out");
    let o = vantage(&["compare", "--config", &cfg, "--seeds", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run_dirs(&out), vec!["grid_seed0"]);
    assert!(out.join("grid_seed0/record.csv").is_file());
    assert_eq!(summary_rows(&out).len(), 1);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn summary_is_recomputable_from_run_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let o = vantage(&["compare", "--config", &cfg, "--seeds", "10", "--workers", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dirs = run_dirs(&out);
    assert_eq!(dirs.len(), 30);
    let rows = summary_rows(&out);
    assert_eq!(rows.len(), 3);

    let regret = fs::read_to_string(out.join("regret.csv")).unwrap();
    for row in rows {
        let strategy = &row[0];
        let mut finals = Vec::new();
        let mut budgets = Vec::new();
        for k in 0..10 {
            let path = out.join(format!("{strategy}_seed{k}/record.csv"));
            let parsed = read_record_file(&path).unwrap();
            let best = parsed.rows.iter().map(|r| r.observed_j).fold(f64::NEG_INFINITY, f64::max);
            let chosen = parsed.rows.iter().find(|r| r.observed_j == best).unwrap();
            finals.push(chosen.oracle_j);
            budgets.push(parsed.rows.len());

            // Last round of the regret curve matches the last CSV row.
            let last_round = regret
                .lines()
                .filter(|l| l.starts_with(&format!("{strategy}_seed{k},")))
                .last()
                .unwrap();
            let cum: f64 = last_round.split(',').nth(5).unwrap().parse().unwrap();
            assert_eq!(cum, parsed.rows.last().unwrap().cumulative_regret);
        }
        finals.sort_by(f64::total_cmp);
        let num = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(row[1], "10");
        assert!(budgets.iter().all(|&b| b == 9));
        assert_eq!(num(2), 9.0);
        assert_eq!(num(3), quantile(&finals, 0.5));
        assert_eq!(num(4), quantile(&finals, 0.25));
        assert_eq!(num(5), quantile(&finals, 0.75));
    }
}

#[test]
fn run_matches_the_compare_run_with_the_same_seed_index() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[compare]\nstrategies = [\"vantage\"]\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(vantage(&["compare", "--config", &cfg, "--seeds", "3", "--out", a.to_str().unwrap()]).status.success());
    let o = vantage(&["run", "--config", &cfg, "--seed", "2", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.join("vantage_seed2/record.csv")).unwrap(),
        fs::read(b.join("vantage_seed2/record.csv")).unwrap()
    );
}

#[test]
fn heatmap_from_a_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let runs = tmp.path().join("runs");
    assert!(vantage(&["run", "--config", &cfg, "--strategy", "random", "--out", runs.to_str().unwrap()]).status.success());
    let record = runs.join("random_seed0/record.csv");
    let out = tmp.path().join("map");
    let o = vantage(&[
        "heatmap",
        "--config",
        &cfg,
        "--record",
        record.to_str().unwrap(),
        "--resolution",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("heatmap.txt")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(out.join("heatmap.png").is_file());
}

#[test]
fn theory_check_prints_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = vantage(&["theory-check", "--config", &cfg, "--seeds", "2"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 6, "{stdout}");
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 3);
    assert_eq!(code == 0, !stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "q = 0\n").unwrap();
    let o = vantage(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("q must be ≥ 1"));

    fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(vantage(&["compare", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(vantage(&["run", "--config", "/nonexistent/config.toml"]).status.code(), Some(1));
    assert_eq!(vantage(&["run", "--preset", "stack"]).status.code(), Some(1));
    assert_eq!(vantage(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vantage(&["--help"]).status.code(), Some(0));

    // An unwritable output location is a run failure.
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let cfg = write_config(tmp.path(), "[compare]\nstrategies = [\"grid\"]\n");
    let o = vantage(&["compare", "--config", &cfg, "--seeds", "1", "--out", blocker.join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
