//! Shared helpers for the integration and acceptance tests.

#![allow(dead_code)]

pub mod lru_oracle;
pub mod naive_sql;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowforge_core::agent::ScriptedLm;
use flowforge_core::components::io::{write_csv, VectorMode};
use flowforge_core::executor::RunRecord;
use flowforge_core::frame::Frame;
use flowforge_core::sql::Catalog;
use flowforge_core::synth::{synth_dataset, SynthOptions};
use flowforge_core::{codec, parse_flow, Engine, ExecutionPlan, Flow, Registry, RunId, Store, StoreConfig};
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn load_flow(rel: &str) -> Flow {
    parse_flow(&read_fixture(rel), &Registry::standard()).unwrap()
}

// ---- agent ------------------------------------------------------------

pub struct AgentFixture {
    pub question: String,
    pub catalog: Catalog,
    pub lm: ScriptedLm,
}

pub fn agent_fixture(name: &str) -> AgentFixture {
    let text = read_fixture(&format!("agent/{name}.json"));
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let tables: Vec<(String, PathBuf)> = doc["tables"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), fixture(&format!("agent/{}", v.as_str().unwrap()))))
        .collect();
    AgentFixture {
        question: doc["question"].as_str().unwrap().to_string(),
        catalog: flowforge_core::agent::catalog_from_csv(&tables).unwrap(),
        lm: ScriptedLm::from_json(&text).unwrap(),
    }
}

// ---- flows ------------------------------------------------------------

pub fn write_synth(dir: &Path, rows: usize, seed: u64) {
    let data = synth_dataset(&SynthOptions { rows, seed, ..SynthOptions::default() });
    write_csv(&data, &dir.join("data.csv"), VectorMode::Error, None).unwrap();
}

pub fn engine(dir: &Path) -> Engine {
    let store = Store::new(StoreConfig::new(512 << 20, dir.join("spill"))).unwrap();
    Engine::new(Arc::new(store), Arc::new(Registry::standard()), dir)
}

pub struct Outcome {
    pub record: RunRecord,
    /// Encoded bytes of every frame the run registered, by catalog name.
    pub frames: BTreeMap<String, Vec<u8>>,
    pub tables: BTreeMap<String, Arc<Frame>>,
}

pub fn run_flow(engine: &Engine, flow: &Flow, plan: &ExecutionPlan, run: &str, workers: usize) -> Outcome {
    let ctx = engine.create_context(RunId::new(run), workers, None).unwrap();
    let record = ctx.run_plan(flow, plan, None).unwrap();
    let mut frames = BTreeMap::new();
    let mut tables = BTreeMap::new();
    if let Ok(cat) = ctx.catalog() {
        for name in cat.keys() {
            let f = ctx.table(name).unwrap();
            frames.insert(name.clone(), codec::encode_frame(&f));
            tables.insert(name.clone(), f);
        }
    }
    ctx.release();
    Outcome { record, frames, tables }
}

// ---- random DAGs -------------------------------------------------------

/// Random DAG over `n` nodes: edges only go from lower to higher index, and
/// each node has at most `max_in` predecessors.
pub fn random_dag(rng: &mut impl Rng, n: usize, density: f64, max_in: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        let mut preds: Vec<usize> = (0..v).filter(|_| rng.random_bool(density)).collect();
        while preds.len() > max_in {
            preds.remove(rng.random_range(0..preds.len()));
        }
        edges.extend(preds.into_iter().map(|u| (u, v)));
    }
    edges
}

/// Longest path measured in nodes, by enumerating every path.
pub fn brute_longest_path(n: usize, edges: &[(usize, usize)]) -> usize {
    fn walk(u: usize, edges: &[(usize, usize)]) -> usize {
        1 + edges.iter().filter(|e| e.0 == u).map(|e| walk(e.1, edges)).max().unwrap_or(0)
    }
    (0..n).map(|u| walk(u, edges)).max().unwrap_or(0)
}

/// Sources become csv_read, every other node a join; one csv_write drains
/// the last node so the flow has both endpoints.
pub fn dag_flow(n: usize, edges: &[(usize, usize)]) -> Flow {
    let id = |i: usize| format!("n{i:02}");
    let mut flow = Flow::new("random");
    let mut inputs = vec![0usize; n];
    for &(_, v) in edges {
        inputs[v] += 1;
    }
    for (i, &deg) in inputs.iter().enumerate() {
        let node = if deg == 0 {
            flowforge_core::FlowNode::new(&id(i), "csv_read").param("path", "in.csv")
        } else {
            flowforge_core::FlowNode::new(&id(i), "join")
        };
        flow = flow.node(node);
    }
    let mut port = vec![0usize; n];
    for &(u, v) in edges {
        let p = format!("in{}", port[v]);
        port[v] += 1;
        flow = flow.edge((id(u).as_str(), "out"), (id(v).as_str(), p.as_str()));
    }
    flow.node(flowforge_core::FlowNode::new("sink", "csv_write").param("path", "out.csv"))
        .edge((id(n - 1).as_str(), "out"), ("sink", "in"))
}
