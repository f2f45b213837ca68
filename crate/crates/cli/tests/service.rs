use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use flowforge_cli::config::Config;
use flowforge_cli::service::{router, AppState};
use flowforge_core::components::io::{write_csv, VectorMode};
use flowforge_core::synth::{synth_dataset, SynthOptions};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

struct Harness {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    app: Router,
}

fn harness() -> Harness {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    let config = Config {
        data_dir: data.clone(),
        spill_dir: tmp.path().join("spill"),
        page_size: 50,
        ..Config::default()
    };
    let app = router(AppState::new(config).unwrap());
    Harness { _tmp: tmp, data, app }
}

impl Harness {
    async fn call(&self, method: Method, uri: &str, body: Option<String>, accept: Option<&str>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header(header::CONTENT_TYPE, "application/json");
        }
        if let Some(a) = accept {
            req = req.header(header::ACCEPT, a);
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, b) = self.call(method, uri, body.map(|v| v.to_string()), None).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    async fn submit(&self, flow_text: String) -> String {
        let (s, b) = self.call(Method::POST, "/flows", Some(flow_text), None).await;
        assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&b));
        let v: Value = serde_json::from_slice(&b).unwrap();
        v["flow_id"].as_str().unwrap().to_string()
    }

    async fn wait(&self, run: &str) -> Value {
        let t0 = Instant::now();
        loop {
            let (s, v) = self.json(Method::GET, &format!("/runs/{run}"), None).await;
            assert_eq!(s, StatusCode::OK);
            if v["state"] == "finished" || v["state"] == "failed" {
                return v;
            }
            assert!(t0.elapsed() < Duration::from_secs(120), "run {run} did not finish");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

fn write_synth(dir: &Path, rows: usize) {
    let data = synth_dataset(&SynthOptions { rows, seed: 5, ..SynthOptions::default() });
    write_csv(&data, &dir.join("data.csv"), VectorMode::Error, None).unwrap();
}

#[tokio::test]
async fn manifest_lists_components() {
    let h = harness();
    let (s, v) = h.json(Method::GET, "/components", None).await;
    assert_eq!(s, StatusCode::OK);
    let kinds: Vec<&str> = v["components"].as_array().unwrap().iter().map(|c| c["kind"].as_str().unwrap()).collect();
    for k in ["csv_read", "tokenize", "tf_idf", "select_features", "logreg", "predict", "evaluate", "csv_write"] {
        assert!(kinds.contains(&k), "{k} missing");
    }
}

#[tokio::test]
async fn invalid_flows_are_rejected_with_issues() {
    let h = harness();
    let (s, b) = h.call(Method::POST, "/flows", Some(read_fixture("flows/invalid_stage.json")), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["issues"][0]["code"], "STAGE_ORDER");
    assert_eq!(v["issues"][0]["node_ids"], json!(["predict", "clean"]));

    let (s, _) = h.call(Method::POST, "/flows", Some("{ not json".into()), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, v) = h.json(Method::GET, "/flows", None).await;
    assert_eq!(v["flows"], json!([]));
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let h = harness();
    for (m, uri) in [
        (Method::GET, "/runs/nope"),
        (Method::GET, "/runs/nope/results/x"),
        (Method::POST, "/flows/nope/plan"),
        (Method::POST, "/flows/nope/runs"),
        (Method::GET, "/flows/nope"),
    ] {
        let (s, _) = h.call(m.clone(), uri, None, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{m} {uri}");
    }
    let (s, _) = h.json(Method::POST, "/agent/sessions/nope/ask", Some(json!({ "question": "q" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn plan_endpoint_honours_mode() {
    let h = harness();
    let id = h.submit(read_fixture("flows/diamond.json")).await;
    let (s, v) = h.json(Method::POST, &format!("/flows/{id}/plan?mode=optimized"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["waves"], json!([["A"], ["B", "C"], ["D"], ["E"]]));
    let (_, v) = h.json(Method::POST, &format!("/flows/{id}/plan?mode=sequential"), None).await;
    assert_eq!(v["waves"].as_array().unwrap().len(), 5);
    let (s, _) = h.call(Method::POST, &format!("/flows/{id}/plan?mode=fastest"), None, None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pipeline_end_to_end() {
    let h = harness();
    write_synth(&h.data, 600);
    let id = h.submit(read_fixture("flows/pipeline.json")).await;

    let (s, v) = h.json(Method::POST, &format!("/flows/{id}/runs"), Some(json!({ "workers": 2, "run_id": "e2e" }))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["run_id"], "e2e");
    let (s, _) = h.json(Method::POST, &format!("/flows/{id}/runs"), Some(json!({ "run_id": "e2e" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let status = h.wait("e2e").await;
    assert_eq!(status["state"], "finished", "{status}");
    assert!(status["nodes"].as_object().unwrap().values().all(|s| s == "ok"));
    assert_eq!(status["record"]["status"], "finished");

    let (_, v) = h.json(Method::GET, "/runs/e2e/results", None).await;
    let tables: Vec<&str> = v["tables"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert!(tables.contains(&"evaluate") && tables.contains(&"split_train"));

    let (s, v) = h.json(Method::GET, "/runs/e2e/results/evaluate", None).await;
    assert_eq!(s, StatusCode::OK);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.last().unwrap()["class"], "overall");
    assert!(v.get("next_page_token").is_none());

    // paging through the training split reassembles every row
    let (_, first) = h.json(Method::GET, "/runs/e2e/results/split_train", None).await;
    let total = first["total_rows"].as_u64().unwrap() as usize;
    assert_eq!(first["rows"].as_array().unwrap().len(), 50);
    let mut seen = first["rows"].as_array().unwrap().len();
    let mut token = first["next_page_token"].as_str().map(str::to_string);
    while let Some(t) = token {
        let (s, page) = h.json(Method::GET, &format!("/runs/e2e/results/split_train?limit=200&page_token={t}"), None).await;
        assert_eq!(s, StatusCode::OK);
        seen += page["rows"].as_array().unwrap().len();
        token = page["next_page_token"].as_str().map(str::to_string);
    }
    assert_eq!(seen, total);

    let (s, csv) = h.call(Method::GET, "/runs/e2e/results/evaluate", None, Some("text/csv")).await;
    assert_eq!(s, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("class,support,predicted,correct,accuracy\n"));
    // same bytes the flow's own writer produced
    assert_eq!(csv, std::fs::read_to_string(h.data.join("report.csv")).unwrap());

    let (s, _) = h.call(Method::GET, "/runs/e2e/results/nothing", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call(Method::GET, "/runs/e2e/results/evaluate?page_token=zz", None, None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // the CLI over the same data and flow writes the same report
    let cli_data = h.data.parent().unwrap().join("cli");
    std::fs::create_dir_all(&cli_data).unwrap();
    std::fs::copy(h.data.join("data.csv"), cli_data.join("data.csv")).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_flowforge"))
        .args(["flow", "run", fixture("flows/pipeline.json").to_str().unwrap(), "--workers", "2"])
        .arg("--data-dir")
        .arg(&cli_data)
        .env("FLOWFORGE_SPILL_DIR", h.data.parent().unwrap().join("cli-spill"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(cli_data.join("report.csv")).unwrap(),
        std::fs::read(h.data.join("report.csv")).unwrap()
    );

    let (s, v) = h.json(Method::DELETE, "/runs/e2e", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["entries_dropped"].as_u64().unwrap() > 0);
    let (s, _) = h.call(Method::GET, "/runs/e2e", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn failed_run_reports_node_and_has_no_results() {
    let h = harness();
    let id = h.submit(read_fixture("flows/diamond.json")).await;
    let (s, v) = h.json(Method::POST, &format!("/flows/{id}/runs"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let run = v["run_id"].as_str().unwrap().to_string();
    let status = h.wait(&run).await;
    assert_eq!(status["state"], "failed");
    assert_eq!(status["failed_node"], "A");
    assert_eq!(status["nodes"]["A"], "failed");
    assert_eq!(status["nodes"]["E"], "skipped");
    let (s, _) = h.call(Method::GET, &format!("/runs/{run}/results/A"), None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn status_polls_do_not_wait_for_the_run() {
    let h = harness();
    std::fs::write(h.data.join("in.csv"), "x\n1\n").unwrap();
    let slow = read_fixture("flows/diamond.json").replace("\"base_ms\": 5.0", "\"base_ms\": 800.0");
    let id = h.submit(slow).await;
    let (_, v) = h.json(Method::POST, &format!("/flows/{id}/runs"), Some(json!({ "workers": 1 }))).await;
    let run = v["run_id"].as_str().unwrap().to_string();
    let t0 = Instant::now();
    let (s, v) = h.json(Method::GET, &format!("/runs/{run}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(t0.elapsed() < Duration::from_millis(500));
    assert!(v["state"] == "queued" || v["state"] == "running", "{v}");
    let (s, _) = h.call(Method::DELETE, &format!("/runs/{run}"), None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h.call(Method::GET, &format!("/runs/{run}/results/A"), None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(h.wait(&run).await["state"], "finished");
}

#[tokio::test]
async fn agent_sessions_answer_with_scripted_model() {
    let h = harness();
    std::fs::copy(fixture("agent/sales.csv"), h.data.join("sales.csv")).unwrap();
    let script: Value = serde_json::from_str(&read_fixture("agent/average.json")).unwrap();
    let (s, v) = h
        .json(Method::POST, "/agent/sessions", Some(json!({ "tables": { "sales": "sales.csv" }, "script": script })))
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["tables"], json!(["sales"]));
    let sid = v["session_id"].as_str().unwrap();
    let (s, v) = h
        .json(Method::POST, &format!("/agent/sessions/{sid}/ask"), Some(json!({ "question": script["question"] })))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["answer"], "2.0");
    assert_eq!(v["transcript"]["scratchpad"].as_array().unwrap().len(), 3);

    let (_, v) = h.json(Method::POST, "/agent/sessions", Some(json!({ "tables": { "sales": "sales.csv" } }))).await;
    let bare = v["session_id"].as_str().unwrap();
    let (s, _) = h.json(Method::POST, &format!("/agent/sessions/{bare}/ask"), Some(json!({ "question": "q" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, _) = h.json(Method::POST, "/agent/sessions", Some(json!({ "tables": { "x": "missing.csv" } }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h.json(Method::POST, "/agent/sessions", Some(json!({}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn agent_session_over_run_tables() {
    let h = harness();
    std::fs::write(h.data.join("in.csv"), "x,y\n1,2\n3,4\n").unwrap();
    let id = h.submit(read_fixture("flows/diamond.json")).await;
    let (_, v) = h.json(Method::POST, &format!("/flows/{id}/runs"), Some(json!({ "run_id": "d" }))).await;
    assert_eq!(v["run_id"], "d");
    assert_eq!(h.wait("d").await["state"], "finished");
    let script = json!({ "rules": [{ "when": "", "reply": "Thought: done\nFinal Answer: ok" }] });
    let (s, v) = h.json(Method::POST, "/agent/sessions", Some(json!({ "run_id": "d", "script": script }))).await;
    assert_eq!(s, StatusCode::CREATED);
    let tables: Vec<&str> = v["tables"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert!(tables.contains(&"A") && tables.contains(&"D"), "{tables:?}");
}

