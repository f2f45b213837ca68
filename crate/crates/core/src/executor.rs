//! Runs execution plans: one context per run, a bounded worker pool per
//! wave, and a wave barrier between consecutive waves.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::components::{ComponentError, JobIo, Registry};
use crate::flow::{validate, Flow};
use crate::frame::Frame;
use crate::planner::{ExecutionPlan, PlanMode};
use crate::sql::Catalog;
use crate::store::{FrameHandle, RunId, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("run `{0}` already has an active context")]
    Conflict(RunId),
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("context for run `{0}` has been released")]
    Released(RunId),
    #[error("context for run `{run}` is {status:?}; a plan can only run on a fresh context")]
    NotRunnable { run: RunId, status: ContextStatus },
    #[error("plan does not fit the flow: {0}")]
    PlanMismatch(String),
    #[error("flow is invalid: {0}")]
    Invalid(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextStatus {
    Created,
    Running,
    Finished,
    Failed,
    Released,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub node_id: String,
    pub kind: String,
    pub wave: usize,
    pub worker: usize,
    pub status: TaskStatus,
    /// Milliseconds since the run started (monotonic clock).
    pub started_ms: f64,
    pub finished_ms: f64,
    pub outputs: BTreeMap<String, FrameHandle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveTiming {
    pub index: usize,
    pub started_ms: f64,
    pub finished_ms: f64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: RunId,
    pub mode: PlanMode,
    pub workers: usize,
    pub status: ContextStatus,
    pub tasks: Vec<TaskResult>,
    pub waves: Vec<WaveTiming>,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Nodes never started because an earlier wave failed.
    pub skipped: Vec<String>,
}

impl RunRecord {
    pub fn task(&self, node: &str) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.node_id == node)
    }
}

/// Per-task notifications for live progress displays.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskEvent {
    Started { node: String },
    Finished { node: String, ok: bool },
    Skipped { node: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReleaseSummary {
    pub entries_dropped: usize,
    pub already_released: bool,
}

struct Shared {
    store: Arc<Store>,
    registry: Arc<Registry>,
    base_dir: PathBuf,
    active: Mutex<BTreeSet<RunId>>,
}

/// Owns the store and component registry; hands out run contexts.
#[derive(Clone)]
pub struct Engine {
    shared: Arc<Shared>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Engine {
    /// Relative paths in component parameters resolve against `base_dir`.
    pub fn new(store: Arc<Store>, registry: Arc<Registry>, base_dir: impl Into<PathBuf>) -> Self {
        Engine {
            shared: Arc::new(Shared { store, registry, base_dir: base_dir.into(), active: Mutex::new(BTreeSet::new()) }),
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.shared.store
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.shared.registry
    }

    pub fn active_runs(&self) -> Vec<RunId> {
        lock(&self.shared.active).iter().cloned().collect()
    }

    /// Opens the run in the store (reserving its budget) and returns a
    /// fresh context.
    pub fn create_context(&self, run_id: RunId, workers: usize, budget: Option<u64>) -> Result<ExecutionContext, ExecError> {
        if workers == 0 {
            return Err(ExecError::ZeroWorkers);
        }
        let mut active = lock(&self.shared.active);
        if active.contains(&run_id) {
            return Err(ExecError::Conflict(run_id));
        }
        self.shared.store.open_run(&run_id, budget).map_err(|e| match e {
            StoreError::RunExists(r) => ExecError::Conflict(r),
            other => ExecError::Store(other),
        })?;
        active.insert(run_id.clone());
        Ok(ExecutionContext {
            shared: self.shared.clone(),
            run_id,
            workers,
            state: Mutex::new(CtxState { status: ContextStatus::Created, catalog: BTreeMap::new() }),
        })
    }
}

struct CtxState {
    status: ContextStatus,
    catalog: BTreeMap<String, FrameHandle>,
}

pub struct ExecutionContext {
    shared: Arc<Shared>,
    run_id: RunId,
    workers: usize,
    state: Mutex<CtxState>,
}

impl Drop for ExecutionContext {
    fn drop(&mut self) {
        self.release();
    }
}

type Outputs = BTreeMap<String, BTreeMap<String, FrameHandle>>;

impl ExecutionContext {
    pub fn run_id(&self) -> &RunId {
        &self.run_id
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn status(&self) -> ContextStatus {
        lock(&self.state).status
    }

    fn live(&self) -> Result<MutexGuard<'_, CtxState>, ExecError> {
        let st = lock(&self.state);
        if st.status == ContextStatus::Released {
            return Err(ExecError::Released(self.run_id.clone()));
        }
        Ok(st)
    }

    /// Table name to handle, as registered by the last run.
    pub fn catalog(&self) -> Result<BTreeMap<String, FrameHandle>, ExecError> {
        Ok(self.live()?.catalog.clone())
    }

    pub fn table(&self, name: &str) -> Result<Arc<Frame>, ExecError> {
        let h = self.live()?.catalog.get(name).cloned().ok_or_else(|| ExecError::UnknownTable(name.to_string()))?;
        Ok(self.shared.store.get_frame(&h)?)
    }

    /// Every catalogued table, loaded for querying.
    pub fn sql_catalog(&self) -> Result<Catalog, ExecError> {
        let mut c = Catalog::new();
        for (name, h) in self.catalog()? {
            c.insert(&name, self.shared.store.get_frame(&h)?);
        }
        Ok(c)
    }

    /// Executes the plan. Component failures are reported in the returned
    /// record (status `failed`); errors are reserved for misuse.
    pub fn run_plan(
        &self,
        flow: &Flow,
        plan: &ExecutionPlan,
        progress: Option<&(dyn Fn(TaskEvent) + Sync)>,
    ) -> Result<RunRecord, ExecError> {
        {
            let mut st = self.live()?;
            if st.status != ContextStatus::Created {
                return Err(ExecError::NotRunnable { run: self.run_id.clone(), status: st.status });
            }
            let issues = validate(flow, &self.shared.registry);
            if !issues.is_empty() {
                return Err(ExecError::Invalid(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")));
            }
            plan.check_against(flow).map_err(ExecError::PlanMismatch)?;
            st.status = ContextStatus::Running;
        }
        let emit = |e: TaskEvent| {
            if let Some(cb) = progress {
                cb(e)
            }
        };
        let t0 = Instant::now();
        let mut outputs: Outputs = BTreeMap::new();
        let mut tasks = Vec::new();
        let mut waves = Vec::new();
        let mut failure: Option<(String, String)> = None;
        let mut skipped = Vec::new();

        for (wi, wave) in plan.waves.iter().enumerate() {
            if failure.is_some() {
                for node in wave {
                    emit(TaskEvent::Skipped { node: node.clone() });
                    skipped.push(node.clone());
                }
                continue;
            }
            let started = ms(t0);
            let mut results = self.run_wave(flow, wi, wave, &outputs, t0, &emit);
            results.sort_by(|a, b| a.started_ms.total_cmp(&b.started_ms).then(a.node_id.cmp(&b.node_id)));
            for r in &results {
                if r.status == TaskStatus::Failed && failure.is_none() {
                    failure = Some((r.node_id.clone(), r.error.clone().unwrap_or_default()));
                }
                outputs.insert(r.node_id.clone(), r.outputs.clone());
            }
            waves.push(WaveTiming { index: wi, started_ms: started, finished_ms: ms(t0), tasks: wave.len() });
            tasks.extend(results);
        }

        let status = if failure.is_some() { ContextStatus::Failed } else { ContextStatus::Finished };
        let mut catalog = BTreeMap::new();
        if failure.is_none() {
            for (node, ports) in &outputs {
                for (port, h) in ports {
                    if self.shared.store.info(h).is_ok_and(|i| i.artifact_kind.is_none()) {
                        let name = if port == "out" { node.clone() } else { format!("{node}_{port}") };
                        catalog.insert(name, h.clone());
                    }
                }
            }
        }
        {
            let mut st = lock(&self.state);
            if st.status != ContextStatus::Released {
                st.status = status;
                st.catalog = catalog;
            }
        }
        let (failed_node, error) = failure.map_or((None, None), |(n, e)| (Some(n), Some(e)));
        Ok(RunRecord {
            run_id: self.run_id.clone(),
            mode: plan.mode,
            workers: self.workers,
            status,
            tasks,
            waves,
            wall_time_ms: ms(t0),
            failed_node,
            error,
            skipped,
        })
    }

    fn run_wave(
        &self,
        flow: &Flow,
        wave_index: usize,
        wave: &[String],
        outputs: &Outputs,
        t0: Instant,
        emit: &(dyn Fn(TaskEvent) + Sync),
    ) -> Vec<TaskResult> {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::with_capacity(wave.len()));
        let pool = self.workers.min(wave.len());
        std::thread::scope(|s| {
            for worker in 0..pool {
                let (next, results) = (&next, &results);
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(node) = wave.get(i) else { break };
                    emit(TaskEvent::Started { node: node.clone() });
                    let started_ms = ms(t0);
                    let outcome = self.run_task(flow, node, outputs);
                    let finished_ms = ms(t0);
                    let ok = outcome.is_ok();
                    let kind = flow.find(node).map(|n| n.kind.clone()).unwrap_or_default();
                    let (outs, error) = match outcome {
                        Ok(o) => (o, None),
                        Err(e) => {
                            tracing::warn!(run = %self.run_id, node = %node, error = %e, "task failed");
                            (BTreeMap::new(), Some(e.to_string()))
                        }
                    };
                    lock(results).push(TaskResult {
                        node_id: node.clone(),
                        kind,
                        wave: wave_index,
                        worker,
                        status: if ok { TaskStatus::Ok } else { TaskStatus::Failed },
                        started_ms,
                        finished_ms,
                        outputs: outs,
                        error,
                    });
                    emit(TaskEvent::Finished { node: node.clone(), ok });
                });
            }
        });
        results.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn run_task(&self, flow: &Flow, node_id: &str, outputs: &Outputs) -> Result<BTreeMap<String, FrameHandle>, ComponentError> {
        let node = flow.find(node_id).expect("plan checked against flow");
        let component = self
            .shared
            .registry
            .component(&node.kind)
            .ok_or_else(|| ComponentError::Data(format!("unknown component kind `{}`", node.kind)))?;
        let mut inputs = BTreeMap::new();
        for (port, src) in flow.inputs_of(node_id) {
            let h = outputs
                .get(&src.node)
                .and_then(|o| o.get(&src.port))
                .ok_or_else(|| ComponentError::Data(format!("upstream output {src} is not available")))?;
            inputs.insert(port.to_string(), h.clone());
        }
        let params = crate::components::Params::resolve(component.spec(), &node.params)?;
        let mut job = component.create_instance(&params)?;
        let mut io = JobIo::new(&self.shared.store, &self.run_id, node_id, &self.shared.base_dir, inputs);
        job.execute(&mut io)?;
        let produced = io.into_outputs();
        for port in &component.spec().out_ports {
            if !produced.contains_key(&port.name) {
                return Err(ComponentError::Data(format!("did not produce output `{}`", port.name)));
            }
        }
        Ok(produced)
    }

    /// Drops everything the run stored. Safe to call repeatedly.
    pub fn release(&self) -> ReleaseSummary {
        let mut st = lock(&self.state);
        if st.status == ContextStatus::Released {
            return ReleaseSummary { entries_dropped: 0, already_released: true };
        }
        st.status = ContextStatus::Released;
        st.catalog.clear();
        let entries_dropped = self.shared.store.drop_run(&self.run_id);
        lock(&self.shared.active).remove(&self.run_id);
        ReleaseSummary { entries_dropped, already_released: false }
    }
}

fn ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowNode;
    use crate::planner::{build_plan, sequential_plan, CostModel};
    use crate::store::StoreConfig;

    fn engine(dir: &std::path::Path) -> Engine {
        let store = Store::new(StoreConfig::new(64 << 20, dir.join("spill"))).unwrap();
        Engine::new(Arc::new(store), Arc::new(Registry::standard()), dir)
    }

    fn diamond(ms: f64) -> Flow {
        Flow::new("d")
            .node(FlowNode::new("A", "csv_read").param("path", "in.csv"))
            .node(FlowNode::new("B", "delay").param("base_ms", ms))
            .node(FlowNode::new("C", "delay").param("base_ms", ms))
            .node(FlowNode::new("D", "join"))
            .node(FlowNode::new("E", "csv_write").param("path", "out.csv").param("vectors", "explode"))
            .edge(("A", "out"), ("B", "in"))
            .edge(("A", "out"), ("C", "in"))
            .edge(("B", "out"), ("D", "in0"))
            .edge(("C", "out"), ("D", "in1"))
            .edge(("D", "out"), ("E", "in"))
    }

    #[test]
    fn diamond_runs_and_overlaps() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("in.csv"), "x,y\n1,2\n3,4\n").unwrap();
        let e = engine(dir.path());
        let f = diamond(60.0);
        let ctx = e.create_context(RunId::new("r1"), 2, None).unwrap();
        let plan = build_plan(&f, e.registry(), &CostModel::unit()).unwrap();
        let rec = ctx.run_plan(&f, &plan, None).unwrap();
        assert_eq!(rec.status, ContextStatus::Finished, "{:?}", rec.error);
        let (b, c) = (rec.task("B").unwrap(), rec.task("C").unwrap());
        assert!(b.started_ms < c.finished_ms && c.started_ms < b.finished_ms);
        assert!(std::fs::read_to_string(dir.path().join("out.csv")).unwrap().starts_with("features_0,features_1"));
        assert!(ctx.catalog().unwrap().contains_key("D"));
        assert!(ctx.release().entries_dropped > 0);
        assert_eq!(e.store().usage(ctx.run_id()).entries, 0);
        assert!(ctx.release().already_released);
        assert!(matches!(ctx.catalog(), Err(ExecError::Released(_))));
    }

    #[test]
    fn duplicate_and_zero_workers() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path());
        let _a = e.create_context(RunId::new("r"), 1, None).unwrap();
        assert!(matches!(e.create_context(RunId::new("r"), 1, None), Err(ExecError::Conflict(_))));
        assert!(matches!(e.create_context(RunId::new("z"), 0, None), Err(ExecError::ZeroWorkers)));
    }

    #[test]
    fn failure_skips_later_waves() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path());
        let f = diamond(0.0);
        let ctx = e.create_context(RunId::new("r"), 2, None).unwrap();
        let rec = ctx.run_plan(&f, &sequential_plan(&f).unwrap(), None).unwrap();
        assert_eq!(rec.status, ContextStatus::Failed);
        assert_eq!(rec.failed_node.as_deref(), Some("A"));
        assert_eq!(rec.skipped.len(), 4);
        assert_eq!(ctx.status(), ContextStatus::Failed);
    }
}
