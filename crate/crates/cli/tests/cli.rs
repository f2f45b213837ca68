use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn flowforge(args: &[&str], spill: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowforge"))
        .args(args)
        .env("FLOWFORGE_SPILL_DIR", spill)
        .env_remove("FLOWFORGE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = flowforge(&["flow", "validate", fixture("flows/pipeline.json").to_str().unwrap()], tmp.path());
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stderr));
    for (file, code) in [
        ("invalid_param", "PARAM_MISSING"),
        ("invalid_endpoint", "NO_ENDPOINT"),
        ("invalid_cycle", "CYCLE"),
        ("invalid_stage", "STAGE_ORDER"),
    ] {
        let out = flowforge(&["flow", "validate", fixture(&format!("flows/{file}.json")).to_str().unwrap()], tmp.path());
        assert_eq!(out.status.code(), Some(1), "{file}");
        assert!(text(&out.stderr).contains(code), "{file}: {}", text(&out.stderr));
    }
}

#[test]
fn plan_prints_wave_table_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let diamond = fixture("flows/diamond.json");
    let out = flowforge(&["flow", "plan", diamond.to_str().unwrap()], tmp.path());
    let s = text(&out.stdout);
    assert!(out.status.success());
    assert!(s.contains("4 waves"), "{s}");
    assert!(s.lines().any(|l| l.starts_with("1") && l.ends_with("B, C")), "{s}");

    let out = flowforge(&["flow", "plan", diamond.to_str().unwrap(), "--mode", "sequential", "--json"], tmp.path());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["mode"], "sequential");
    assert_eq!(plan["waves"].as_array().unwrap().len(), 5);
}

#[test]
fn run_prints_record_and_fails_on_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("in.csv"), "x,y\n1,2\n3,4\n").unwrap();
    let diamond = fixture("flows/diamond.json");
    let args = ["flow", "run", diamond.to_str().unwrap(), "--workers", "2", "--data-dir", data.to_str().unwrap()];
    let out = flowforge(&args, tmp.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["status"], "finished");
    assert_eq!(rec["tasks"].as_array().unwrap().len(), 5);
    assert!(data.join("out.csv").exists());

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let args = ["flow", "run", diamond.to_str().unwrap(), "--data-dir", empty.to_str().unwrap()];
    let out = flowforge(&args, tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["failed_node"], "A");
}

#[test]
fn agent_ask_with_script() {
    let tmp = tempfile::tempdir().unwrap();
    let tables = format!("sales={}", fixture("agent/sales.csv").display());
    let script = fixture("agent/average.json");
    let q = "What is the average of column price?";
    let out = flowforge(&["agent", "ask", "--tables", &tables, "--script", script.to_str().unwrap(), q], tmp.path());
    assert_eq!(text(&out.stdout).trim(), "2.0", "{}", text(&out.stderr));

    let out = flowforge(&["agent", "ask", "--tables", &tables, q], tmp.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("--script"));
}

#[test]
fn bench_scale_writes_ten_row_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("report");
    let args = [
        "bench", "scale", "--workers", "4", "--seed", "3", "--rows", "300", "--base-ms", "2", "--ms-per-krow", "0",
        "--out", out_dir.to_str().unwrap(),
    ];
    let out = flowforge(&args, tmp.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("fraction,rows,sequential_ms,optimized_ms,speedup"));
    assert_eq!(std::fs::read_to_string(out_dir.join("bench_report.csv")).unwrap(), csv);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bench_report.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["workers"], 4);
    assert_eq!(json["rows"].as_array().unwrap().len(), 10);
    assert!(!out_dir.join(".bench-work").exists());
}

#[test]
fn bad_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "workers = 0\n").unwrap();
    let diamond = fixture("flows/diamond.json");
    let out = flowforge(&["--config", cfg.to_str().unwrap(), "flow", "plan", diamond.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("workers"));
}

#[test]
fn docs_reference_flow_matches_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flowforge(&["bench", "flow"], tmp.path());
    let doc = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/reference_bench.json");
    assert_eq!(text(&out.stdout), std::fs::read_to_string(doc).unwrap());
}
