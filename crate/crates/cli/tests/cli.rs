use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hoverscope"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn replay_reproduces_the_golden_report() {
    let out = run(bin()
        .args(["replay", "--config"])
        .arg(data("sample100.toml"))
        .arg("--trace")
        .arg(data("scripted_trace.jsonl")));
    let golden = fs::read_to_string(data("scripted_report.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn empty_trace_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    fs::write(&trace, "# nothing recorded\n\n").unwrap();
    let report = dir.path().join("report.json");
    run(bin().args(["replay", "--config"]).arg(data("sample100.toml")).arg("--trace").arg(&trace).arg("--out").arg(&report));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["accepted_moves"], 0);
    assert_eq!(v["result"]["stats"]["regions"], 0);
    assert_eq!(v["result"]["stats"]["idrs"], 0);
    assert_eq!(v["result"]["stats"]["coverage_pct"], 0.0);
}

#[test]
fn malformed_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.jsonl");
    fs::write(&trace, "{\"x\": 1, \"y\": 2, \"t\": 0}\n{\"x\": 1, \"t\": 300}\n").unwrap();
    let out = bin().args(["replay", "--config"]).arg(data("sample100.toml")).arg("--trace").arg(&trace).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    let mapping = fs::read_to_string(data("sample100.toml")).unwrap().replace("dataset = \"sample100.csv\"\n", "");
    fs::write(&config, mapping).unwrap();
    let out = bin().arg("replay").arg("--config").arg(&config).arg("--trace").arg(data("scripted_trace.jsonl")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no dataset given"));
}

#[test]
fn generated_data_replays_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, toml) = (dir.path().join("d.csv"), dir.path().join("d.toml"));
    run(bin().args(["generate-dataset", "--points", "1000", "--seed", "4", "--out"]).arg(&csv).arg("--config-out").arg(&toml));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1001);

    let mut reports = Vec::new();
    for seed in 0..20 {
        let trace = dir.path().join(format!("t{seed}.jsonl"));
        run(bin().args(["generate-trace", "--seed", &seed.to_string(), "--out"]).arg(&trace));
        let report = dir.path().join(format!("r{seed:02}.json"));
        run(bin()
            .arg("replay")
            .arg("--dataset")
            .arg(&csv)
            .arg("--config")
            .arg(&toml)
            .arg("--trace")
            .arg(&trace)
            .arg("--out")
            .arg(&report));
        reports.push(report);
    }

    let mut expected = Vec::new();
    for r in &reports {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(r).unwrap()).unwrap();
        let stats = &v["result"]["stats"];
        let (m, n) = (stats["points_in_idrs"].as_u64().unwrap(), stats["dataset_size"].as_u64().unwrap());
        assert_eq!(n, 1000);
        assert_eq!(stats["coverage_pct"].as_f64().unwrap(), 100.0 * m as f64 / n as f64);
        expected.push([stats["regions"].as_f64().unwrap(), stats["idrs"].as_f64().unwrap(), m as f64]);
    }

    let out = run(bin().args(["stats", "--json"]).args(&reports));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 20);
    let mean = |c: usize| expected.iter().map(|e| e[c]).sum::<f64>() / 20.0;
    let avg = &summary["average"];
    assert!((avg["regions"].as_f64().unwrap() - mean(0)).abs() < 1e-9);
    assert!((avg["idrs"].as_f64().unwrap() - mean(1)).abs() < 1e-9);
    assert!((avg["points_in_idrs"].as_f64().unwrap() - mean(2)).abs() < 1e-9);

    let table = String::from_utf8(run(bin().arg("stats").args(&reports)).stdout).unwrap();
    assert!(table.lines().any(|l| l.trim_start().starts_with("r00")));
    assert!(table.lines().any(|l| l.trim_start().starts_with("average")));
}

#[test]
fn stats_covers_the_coverage_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let make = |name: &str, m: u64, n: u64| {
        let path = dir.path().join(name);
        let pct = 100.0 * m as f64 / n as f64;
        let body = serde_json::json!({
            "result": { "stats": { "regions": 2, "idrs": 1, "points_in_idrs": m, "dataset_size": n, "coverage_pct": pct } }
        });
        fs::write(&path, body.to_string()).unwrap();
        path
    };
    let none = make("none.json", 0, 50);
    let all = make("all.json", 50, 50);
    let out = run(bin().args(["stats", "--json"]).arg(&none).arg(&all));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"][0]["coverage_pct"], 0.0);
    assert_eq!(v["rows"][1]["coverage_pct"], 100.0);
    assert_eq!(v["average"]["coverage_pct"], 50.0);
}

#[test]
fn bench_prints_one_row_per_size() {
    let out = run(bin().args(["bench", "--sizes", "100,200", "--repeats", "2"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].contains("highlights p95"));
    assert!(lines[1].trim_start().starts_with("100"));
    assert!(lines[2].trim_start().starts_with("200"));
}

#[test]
fn bench_rejects_tiny_sizes() {
    let out = bin().args(["bench", "--sizes", "10"]).output().unwrap();
    assert!(!out.status.success());
}
