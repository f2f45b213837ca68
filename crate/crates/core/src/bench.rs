//! Scaling benchmark: the same flow on growing slices of a synthetic
//! dataset, once with the sequential plan and once with the optimized one.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::components::{io::write_csv, io::VectorMode, Registry};
use crate::executor::{ContextStatus, Engine, ExecError};
use crate::flow::{Flow, FlowNode, ParamValue};
use crate::planner::{build_plan, sequential_plan, CostModel, ExecutionPlan, PlanError};
use crate::store::{RunId, Store, StoreConfig, StoreError};
use crate::synth::{sample_rows, synth_dataset, SynthOptions, GENERATOR_VERSION};

pub const DEFAULT_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub fractions: Vec<f64>,
    pub workers: usize,
    pub seed: u64,
    /// Rows in the full dataset (fraction 1.0).
    pub rows: usize,
    pub memory_budget_bytes: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            workers: 4,
            seed: 7,
            rows: 5000,
            memory_budget_bytes: 256 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub fraction: f64,
    pub rows: usize,
    pub sequential_ms: f64,
    pub optimized_ms: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.sequential_ms / self.optimized_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub flow: String,
    pub workers: usize,
    pub seed: u64,
    pub generator_version: u32,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,rows,sequential_ms,optimized_ms,speedup\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.1},{},{:.3},{:.3},{:.3}\n",
                r.fraction,
                r.rows,
                r.sequential_ms,
                r.optimized_ms,
                r.speedup()
            ));
        }
        s
    }

    pub fn row(&self, fraction: f64) -> Option<&BenchRow> {
        self.rows.iter().find(|r| (r.fraction - fraction).abs() < 1e-9)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("plan: {0}")]
    Plan(#[from] PlanError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("fraction {fraction}: {message}")]
    Run { fraction: f64, message: String },
    #[error("bench needs a csv_read node to feed the sample into")]
    NoReader,
    #[error("fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// csv_read → fork → four delays → four feature branches → join →
/// select_features → csv_write. The delays stand in for per-branch latency,
/// so the branches are worth overlapping even on one core.
pub fn reference_bench_flow(base_ms: f64, ms_per_krow: f64) -> Flow {
    let mut f = Flow::new("reference_bench")
        .node(FlowNode::new("read", "csv_read").param("path", "data.csv").param("label", "label"))
        .node(FlowNode::new("fork", "fork"))
        .edge(("read", "out"), ("fork", "in"));
    for i in 0..4 {
        let d = format!("delay{i}");
        f = f
            .node(FlowNode::new(&d, "delay").param("base_ms", base_ms).param("ms_per_krow", ms_per_krow))
            .edge(("fork", format!("out{i}").as_str()), (d.as_str(), "in"));
    }
    f.node(FlowNode::new("tokens", "tokenize").param("input_col", "text").param("output_col", "tokens"))
        .node(
            FlowNode::new("tfidf", "tf_idf")
                .param("input_col", "tokens")
                .param("output_col", "text_vec")
                .param("min_df", 2i64),
        )
        .node(FlowNode::new("category", "one_hot").param("input_col", "category").param("output_col", "cat_vec"))
        .node(
            FlowNode::new("numeric", "join")
                .param("columns", ParamValue::List(vec!["amount".into(), "count".into()]))
                .param("output_col", "num"),
        )
        .node(
            FlowNode::new("scaled", "scale")
                .param("input_col", "num")
                .param("output_col", "num")
                .param("method", "minmax"),
        )
        .node(FlowNode::new("region", "one_hot").param("input_col", "region").param("output_col", "region_vec"))
        .node(FlowNode::new("assemble", "join").param("output_col", "features"))
        .node(
            FlowNode::new("select", "select_features")
                .param("input_col", "features")
                .param("output_col", "features")
                .param("criterion", "chi2")
                .param("k", 50i64),
        )
        .node(FlowNode::new("write", "csv_write").param("path", "bench_out.csv").param("vectors", "explode"))
        .edge(("delay0", "out"), ("tokens", "in"))
        .edge(("tokens", "out"), ("tfidf", "in"))
        .edge(("delay1", "out"), ("category", "in"))
        .edge(("delay2", "out"), ("numeric", "in0"))
        .edge(("numeric", "out"), ("scaled", "in"))
        .edge(("delay3", "out"), ("region", "in"))
        .edge(("tfidf", "out"), ("assemble", "in0"))
        .edge(("category", "out"), ("assemble", "in1"))
        .edge(("scaled", "out"), ("assemble", "in2"))
        .edge(("region", "out"), ("assemble", "in3"))
        .edge(("assemble", "out"), ("select", "in"))
        .edge(("select", "out"), ("write", "in"))
}

/// Points every csv_read node at `path`.
fn retarget(flow: &Flow, path: &str) -> Result<Flow, BenchError> {
    let mut out = flow.clone();
    let mut found = false;
    for n in out.nodes.iter_mut().filter(|n| n.kind == "csv_read") {
        n.params.insert("path".into(), path.into());
        found = true;
    }
    if found { Ok(out) } else { Err(BenchError::NoReader) }
}

fn timed_run(engine: &Engine, flow: &Flow, plan: &ExecutionPlan, run: String, workers: usize, fraction: f64) -> Result<f64, BenchError> {
    let fail = |message: String| BenchError::Run { fraction, message };
    let ctx = engine
        .create_context(RunId::new(run), workers, None)
        .map_err(|e: ExecError| fail(e.to_string()))?;
    let started = Instant::now();
    let rec = ctx.run_plan(flow, plan, None).map_err(|e| fail(e.to_string()))?;
    let ms = started.elapsed().as_secs_f64() * 1e3;
    ctx.release();
    if rec.status != ContextStatus::Finished {
        return Err(fail(format!(
            "node {} failed: {}",
            rec.failed_node.unwrap_or_default(),
            rec.error.unwrap_or_default()
        )));
    }
    Ok(ms)
}

/// Runs `flow` sequentially and optimized at each fraction of a seeded
/// synthetic dataset written under `work_dir`.
pub fn bench_scale(flow: &Flow, opts: &BenchOptions, work_dir: &Path) -> Result<BenchReport, BenchError> {
    if let Some(&bad) = opts.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(BenchError::BadFraction(bad));
    }
    let registry = Arc::new(Registry::standard());
    let store = Arc::new(Store::new(StoreConfig::new(opts.memory_budget_bytes, work_dir.join("spill")))?);
    let engine = Engine::new(store, registry.clone(), work_dir);
    let full = synth_dataset(&SynthOptions { rows: opts.rows, seed: opts.seed, ..SynthOptions::default() });
    let optimized = build_plan(flow, &registry, &CostModel::unit())?;
    let sequential = sequential_plan(flow)?;

    let mut rows = Vec::new();
    for (i, &fraction) in opts.fractions.iter().enumerate() {
        let sample = sample_rows(&full, fraction, opts.seed.wrapping_add(i as u64));
        let name = format!("sample_{i:02}.csv");
        write_csv(&sample, &work_dir.join(&name), VectorMode::Error, None)
            .map_err(|e| BenchError::Run { fraction, message: e.to_string() })?;
        let f = retarget(flow, &name)?;
        let sequential_ms = timed_run(&engine, &f, &sequential, format!("bench-{i}-seq"), opts.workers, fraction)?;
        let optimized_ms = timed_run(&engine, &f, &optimized, format!("bench-{i}-opt"), opts.workers, fraction)?;
        tracing::info!(fraction, rows = sample.row_count(), sequential_ms, optimized_ms, "bench slice");
        rows.push(BenchRow { fraction, rows: sample.row_count(), sequential_ms, optimized_ms });
    }
    Ok(BenchReport {
        flow: flow.name.clone(),
        workers: opts.workers,
        seed: opts.seed,
        generator_version: GENERATOR_VERSION,
        rows,
    })
}
