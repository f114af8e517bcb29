use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pmarb_mock_venue::{Behavior, MockBook, MockVenue};
use serde_json::Value;

fn pmarb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmarb")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCENARIO: &str = r#"{
    "seed": 31,
    "games": 1,
    "sweeps": 300,
    "tip_off_sweep": 60,
    "end_sweep": 270,
    "spreads": [1.5, -4.5],
    "totals": 1,
    "results": [1],
    "injections": [
        {"path": "long", "market": "ml", "phase": "pre_game", "start": 4, "length": 3, "edge_ticks": 2, "size": 500},
        {"path": "long", "market": "total:0", "phase": "in_game", "start": 10, "length": 2, "edge_ticks": 4, "size": 60},
        {"path": "combo", "market": "spread:0", "phase": "in_game", "start": 50, "length": 4, "edge_ticks": 6, "size": 200},
        {"path": "long", "market": "spread:1", "phase": "post_game", "start": 5, "length": 2, "edge_ticks": 3, "size": 80}
    ]
}"#;

fn write_synth(dir: &Path) {
    let spec = dir.join("scenario.json");
    fs::write(&spec, SCENARIO).unwrap();
    let out = pmarb(&["synth", "--spec", p(&spec), "--out", p(&dir.join("logs"))]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_round_trip_matches_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    write_synth(tmp.path());
    let logs = tmp.path().join("logs");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(logs.join("manifest.json")).unwrap()).unwrap();
    let expected: Vec<(String, String, String)> = manifest["episodes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["path"] != "combo" && e["excluded"] == false)
        .map(|e| {
            let s = |k: &str| e[k].as_str().unwrap().to_string();
            (s("unit"), s("path"), e["capped"].as_str().unwrap().to_string())
        })
        .collect();

    let out_dir = tmp.path().join("single");
    let out = pmarb(&["scan-single", "--input", p(&logs), "--out", p(&out_dir), "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got: Vec<(String, String, String)> = csv_rows(&out_dir.join("single_episodes.csv"))
        .into_iter()
        .map(|r| (r[1].clone(), r[2].clone(), r[9].clone()))
        .collect();
    let mut want = expected.clone();
    want.sort();
    let mut got_sorted = got.clone();
    got_sorted.sort();
    assert_eq!(got_sorted, want);

    let summary = fs::read_to_string(out_dir.join("single_summary.csv")).unwrap();
    assert!(summary.contains("excluded_post_game_episodes,1"), "{summary}");
}

#[test]
fn combo_audit_counts_the_jackpot() {
    let tmp = tempfile::tempdir().unwrap();
    write_synth(tmp.path());
    let out_dir = tmp.path().join("combo");
    let out = pmarb(&["scan-combo", "--input", p(&tmp.path().join("logs")), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("combo_report.json")).unwrap()).unwrap();
    let summary = report["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == "summary")
        .unwrap();
    let metric = |name: &str| {
        summary["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r[0] == name)
            .map(|r| r[1].as_str().unwrap().to_string())
    };
    assert_eq!(metric("episodes").as_deref(), Some("1"));
    assert_eq!(metric("jackpots").as_deref(), Some("1"));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = pmarb(&["synth", "--seed", seed, "--sweeps", "120", "--out", p(&dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(dir.join(format!("synth-{seed}-g000.jsonl"))).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("c", "5"), run("d", "6"));
}

#[test]
fn invalid_scenario_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    fs::write(&spec, r#"{"seed": 1, "sweeps": 10, "tip_off_sweep": 9, "end_sweep": 3}"#).unwrap();
    let out = pmarb(&["synth", "--spec", p(&spec), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn empty_directory_gives_an_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty");
    fs::create_dir(&input).unwrap();
    let out_dir = tmp.path().join("out");
    let out = pmarb(&["scan-single", "--input", p(&input), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("single_report.json").exists());
    assert_eq!(csv_rows(&out_dir.join("single_episodes.csv")).len(), 0);
}

#[test]
fn data_and_config_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_synth(tmp.path());
    let logs = tmp.path().join("logs");
    let log = logs.join("synth-31-g000.jsonl");
    let out_dir = tmp.path().join("out");

    // corrupt line 3
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{not json";
    fs::write(&log, lines.join("\n")).unwrap();
    let out = pmarb(&["scan-single", "--input", p(&logs), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("synth-31-g000.jsonl:3"), "{}", stderr(&out));

    fs::remove_file(logs.join("synth-31-g000.meta.json")).unwrap();
    let out = pmarb(&["scan-single", "--input", p(&logs), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("synth-31-g000"), "{}", stderr(&out));

    let out = pmarb(&["scan-combo", "--input", p(&logs), "--out", p(&out_dir), "--budget", "-5"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = tmp.path().join("pmarb.toml");
    fs::write(&cfg, "budget_usdc = 100\nnot_a_key = 1\n").unwrap();
    let out = pmarb(&["--config", p(&cfg), "scan-single", "--input", p(&logs), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn config_file_supplies_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    write_synth(tmp.path());
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("pmarb.toml");
    fs::write(
        &cfg,
        format!(
            "input = {:?}\nout = {:?}\nformat = \"csv\"\nbudget_usdc = 1\n",
            p(&tmp.path().join("logs")),
            p(&out_dir)
        ),
    )
    .unwrap();
    let out = pmarb(&["--config", p(&cfg), "scan-single"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&out_dir.join("single_episodes.csv"));
    assert!(!rows.is_empty());
    // a $1 budget buys at most one whole share
    assert!(rows.iter().all(|r| r[11].parse::<f64>().unwrap() <= 1.0), "{rows:?}");
}

fn sidecar_dir(dir: &Path) {
    let meta = serde_json::json!({
        "slug": "live",
        "tip_off": "2025-01-15T23:00:00Z",
        "physical_end": "2025-01-16T01:30:00Z",
        "markets": [
            {"id": "m", "kind": "moneyline", "tokens": ["t-a", "t-b"]}
        ]
    });
    fs::write(dir.join("live.meta.json"), meta.to_string()).unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn collect_appends_deduplicated_records() {
    let venue = MockVenue::start().await.unwrap();
    venue.set("t-a", Behavior::Static(MockBook::top(("0.40", "10"), ("0.42", "10"), "same")));
    venue.set(
        "t-b",
        Behavior::Cycle(vec![
            MockBook::top(("0.57", "10"), ("0.59", "10"), "x"),
            MockBook::top(("0.56", "10"), ("0.59", "10"), "y"),
        ]),
    );
    let tmp = tempfile::tempdir().unwrap();
    sidecar_dir(tmp.path());
    let url = venue.url();
    let dir = tmp.path().to_path_buf();
    let run = move || {
        pmarb(&["collect", "--endpoint", &url, "--slugs", "live", "--out", p(&dir), "--interval", "0.2", "--sweeps", "3"])
    };
    let out = tokio::task::spawn_blocking(run.clone()).await.unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let out = tokio::task::spawn_blocking(run).await.unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let log = fs::read_to_string(tmp.path().join("live.jsonl")).unwrap();
    let count = |t: &str| log.lines().filter(|l| l.contains(&format!("\"token\":\"{t}\""))).count();
    assert_eq!(count("t-a"), 1, "{log}");
    assert_eq!(count("t-b"), 6, "{log}");
    assert_eq!(log.lines().filter(|l| l.contains("\"schema\"")).count(), 1);

    let scan = pmarb(&["scan-single", "--input", p(tmp.path()), "--out", p(&tmp.path().join("r"))]);
    assert!(scan.status.success(), "{}", stderr(&scan));
}

#[test]
fn collect_needs_sidecars_and_a_reachable_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pmarb(&["collect", "--endpoint", "http://127.0.0.1:9", "--slugs", "live", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("live"));

    sidecar_dir(tmp.path());
    let out = pmarb(&["collect", "--endpoint", "http://127.0.0.1:9", "--slugs", "live", "--out", p(tmp.path()), "--sweeps", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
