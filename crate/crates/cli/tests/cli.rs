//! End-to-end tests of the command-line binary: pipelines between
//! subcommands, CSV and JSON shapes, determinism, and the exit-code
//! contract (0 ok, 1 assertion failure, 2 usage error, 3 resource cap).

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lookahead-cr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("lookahead-cr-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn envgen_emits_a_package_the_other_commands_accept() {
    let pkg = temp_path("chain.json");
    let out = run(&[
        "envgen",
        "--family",
        "chain",
        "--horizon",
        "5",
        "--actions",
        "2",
        "--out",
        pkg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed: Value =
        serde_json::from_str(&std::fs::read_to_string(&pkg).unwrap()).expect("package parses");
    assert_eq!(parsed["mdp"]["H"], 5);
    assert_eq!(parsed["descriptor"]["kind"], "chain");

    let out = run(&["cr", "--input", pkg.to_str().unwrap(), "--lookaheads", "1,5", "--mode", "fixed"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lookahead,mode,ratio,numerator,denominator,certified,degenerate,lps_solved,nodes_visited"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    // 1/((A-1)H) = 0.2 at both end-point lookaheads, printed to 12
    // significant digits.
    for row in rows {
        assert!(row.contains("2.00000000000e-1"), "{row}");
    }
    std::fs::remove_file(&pkg).ok();
}

#[test]
fn value_reports_a_consistent_sandwich_on_the_tree() {
    let pkg = temp_path("tree.json");
    let out = run(&[
        "envgen", "--family", "tree", "--depth", "1", "--horizon", "5", "--epsilon", "0.05",
        "--out", pkg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "value", "--input", pkg.to_str().unwrap(), "--lookaheads", "1,5", "--exact",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let sup: f64 = cols[1].parse().unwrap();
        let exact: f64 = cols[2].parse().unwrap();
        assert!(exact <= sup + 1e-9, "{row}");
        assert!(exact >= 0.0, "{row}");
    }
    std::fs::remove_file(&pkg).ok();
}

#[test]
fn cr_json_mode_reports_certificates() {
    let pkg = temp_path("bandit.json");
    let out = run(&[
        "envgen", "--family", "bandit", "--actions", "3", "--out", pkg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "cr", "--input", pkg.to_str().unwrap(), "--mode", "worst", "--lookaheads", "1", "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let reports: Value = serde_json::from_str(&stdout(&out)).expect("json parses");
    let r = &reports.as_array().expect("array")[0];
    assert_eq!(r["certified"], true);
    let ratio = r["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0 / 3.0).abs() <= 1e-8, "{ratio}");
    std::fs::remove_file(&pkg).ok();
}

#[test]
fn reach_emits_the_start_distribution_row() {
    let pkg = temp_path("grid.json");
    let out = run(&["envgen", "--family", "grid", "--n", "3", "--out", pkg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["reach", "--input", pkg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).expect("json parses");
    // Step 0 reach equals the start distribution: all mass on one cell.
    assert_eq!(v["d_star"][0][0], 1.0);
    std::fs::remove_file(&pkg).ok();
}

#[test]
fn simulate_is_deterministic_for_a_fixed_seed() {
    let pkg = temp_path("sim.json");
    let out = run(&["envgen", "--family", "random", "--seed", "4", "--out", pkg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let args = [
        "simulate", "--input", pkg.to_str().unwrap(), "--lookahead", "1", "--episodes", "2000",
        "--seed", "9",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&second));
    std::fs::remove_file(&pkg).ok();
}

#[test]
fn transition_tree_simulation_separates_the_agents() {
    let out = run(&[
        "simulate", "--transition-tree", "--actions", "3", "--horizon", "9", "--lookahead", "1",
        "--episodes", "20000", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).expect("json parses");
    let informed = v["estimate"]["mean"].as_f64().unwrap();
    assert!(informed > 0.9, "{informed}");

    let out = run(&[
        "simulate", "--transition-tree", "--actions", "3", "--horizon", "9", "--lookahead", "0",
        "--episodes", "20000", "--seed", "1",
    ]);
    let v: Value = serde_json::from_str(&stdout(&out)).expect("json parses");
    let blind = v["estimate"]["mean"].as_f64().unwrap();
    assert!(blind < 0.2, "{blind}");
}

#[test]
fn reproduce_sections_pass_and_report_five_columns() {
    for section in ["bandit", "chain", "grid", "tree"] {
        let out = run(&["reproduce", "--section", section]);
        assert!(
            out.status.success(),
            "section {section}: {}\n{}",
            stdout(&out),
            stderr(&out)
        );
        let text = stdout(&out);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "quantity,computed,reference,pass,tolerance");
        for row in lines {
            assert_eq!(row.split(',').count(), 5, "{row}");
            assert!(row.contains(",pass,"), "{row}");
        }
    }
}

#[test]
fn sweep_produces_deterministic_rows_and_honours_the_examples() {
    let cfg = temp_path("sweep.json");
    std::fs::write(
        &cfg,
        r#"{
            "envs": [
                {"family": "grid", "n": 4},
                {"family": "chain", "horizon": 5, "actions": 2, "lookaheads": [1, 2, 3, 4, 5]}
            ],
            "lookaheads": [1, 2, 3, 4, 5, 6, 7],
            "mode": "fixed"
        }"#,
    )
    .unwrap();
    let first = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&first), stdout(&second));

    let text = stdout(&first);
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    // Grid rows come first (config order); the dense-reward ratio is
    // nonincreasing in the lookahead.
    let grid_ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].starts_with("grid"))
        .map(|r| r[6].parse().unwrap())
        .collect();
    assert_eq!(grid_ratios.len(), 7);
    for w in grid_ratios.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{grid_ratios:?}");
    }
    // Chain rows: one end-point lookahead ratio equals the other.
    let chain_ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].starts_with("chain"))
        .map(|r| r[6].parse().unwrap())
        .collect();
    assert_eq!(chain_ratios.len(), 5);
    assert!((chain_ratios[0] - chain_ratios[4]).abs() <= 1e-12);
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn sweep_empty_env_list_gives_a_header_only_csv() {
    let cfg = temp_path("empty.json");
    std::fs::write(&cfg, r#"{"envs": []}"#).unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("env,"));
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn sweep_parse_errors_carry_line_numbers_and_exit_2() {
    let cfg = temp_path("bad.json");
    std::fs::write(&cfg, "{\n  \"envs\": [}\n").unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 2"), "{err}");
    std::fs::remove_file(&cfg).ok();
}

#[test]
fn check_fast_passes_quickly() {
    let start = std::time::Instant::now();
    let out = run(&["check", "--level", "fast"]);
    assert!(out.status.success(), "{}\n{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("ok"), "{}", stdout(&out));
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn check_names_the_violation_in_a_corrupted_package() {
    let good = temp_path("good.json");
    let bad = temp_path("badpkg.json");
    let out = run(&[
        "envgen", "--family", "chain", "--horizon", "3", "--out", good.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut pkg: Value =
        serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    pkg["mdp"]["P"][0][0][0][0] = Value::from(0.7);
    std::fs::write(&bad, serde_json::to_string(&pkg).unwrap()).unwrap();

    let out = run(&["check", "--input", bad.to_str().unwrap(), "--level", "fast"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("kernel_row_sum"), "{}", stdout(&out));
    std::fs::remove_file(&good).ok();
    std::fs::remove_file(&bad).ok();
}

#[test]
fn exit_codes_follow_the_contract() {
    // Usage error: unknown subcommand.
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    // Usage error: lookahead beyond the horizon.
    let pkg = temp_path("codes.json");
    let gen = run(&["envgen", "--family", "chain", "--horizon", "3", "--out", pkg.to_str().unwrap()]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let out = run(&["cr", "--input", pkg.to_str().unwrap(), "--lookaheads", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("exceeds the horizon"), "{}", stderr(&out));

    // Resource cap: a tiny enumeration budget.
    let big = temp_path("big.json");
    let gen = run(&[
        "envgen", "--family", "bandit", "--states", "3", "--actions", "3", "--horizon", "4",
        "--out", big.to_str().unwrap(),
    ]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let out = run(&[
        "cr", "--input", big.to_str().unwrap(), "--mode", "worst", "--lookaheads", "1",
        "--budget", "50",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cap"), "{}", stderr(&out));

    // Missing input file.
    let out = run(&["cr", "--input", "/nonexistent/nowhere.json"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_file(&pkg).ok();
    std::fs::remove_file(&big).ok();
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let out = bin()
        .env("LOOKAHEAD_CR_THREADS", "1")
        .args(["reproduce", "--section", "bandit"])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", stderr(&out));
}
