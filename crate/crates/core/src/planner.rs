//! Turns a validated flow into waves of tasks that can run concurrently.
//!
//! Waves are longest-path layers (every node runs as early as its inputs
//! allow), so with unit costs the wave count equals the node count of the
//! critical path. Inside a wave, tasks are listed by descending remaining
//! path cost and then id, which is the order workers pick them up.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::components::Registry;
use crate::flow::{effective_phases, validate, Flow, StagePhase, ValidationIssue};
use crate::graph::DepGraph;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("flow has a cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("flow is invalid: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationIssue>),
    #[error("cost for `{0}` must be positive and finite")]
    BadCost(String),
}

/// Per-node cost; nodes without an entry cost 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostModel {
    pub costs: BTreeMap<String, f64>,
}

impl CostModel {
    pub fn unit() -> Self {
        CostModel::default()
    }

    pub fn with(mut self, node: &str, cost: f64) -> Self {
        self.costs.insert(node.to_string(), cost);
        self
    }

    pub fn cost(&self, node: &str) -> f64 {
        self.costs.get(node).copied().unwrap_or(1.0)
    }

    fn check(&self) -> Result<(), PlanError> {
        match self.costs.iter().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            Some((n, _)) => Err(PlanError::BadCost(n.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubProcess {
    pub phase: StagePhase,
    pub node_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPath {
    pub length: f64,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Optimized,
    Sequential,
}

impl PlanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanMode::Optimized => "optimized",
            PlanMode::Sequential => "sequential",
        }
    }
}

/// One stage's nodes split into groups that may run side by side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub phase: StagePhase,
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub mode: PlanMode,
    /// Task ids per wave, in dispatch order.
    pub waves: Vec<Vec<String>>,
    #[serde(default)]
    pub stages: Vec<StagePlan>,
    pub critical_path: CriticalPath,
}

impl ExecutionPlan {
    pub fn task_count(&self) -> usize {
        self.waves.iter().map(Vec::len).sum()
    }

    pub fn wave_of(&self) -> BTreeMap<&str, usize> {
        self.waves
            .iter()
            .enumerate()
            .flat_map(|(w, ids)| ids.iter().map(move |id| (id.as_str(), w)))
            .collect()
    }

    /// Checks that the plan covers the flow's nodes once each and that
    /// every edge points to a later wave.
    pub fn check_against(&self, flow: &Flow) -> Result<(), String> {
        let wave = self.wave_of();
        if wave.len() != self.task_count() {
            return Err("a task appears in more than one wave".into());
        }
        let nodes: BTreeSet<&str> = flow.nodes.iter().map(|n| n.id.as_str()).collect();
        let planned: BTreeSet<&str> = wave.keys().copied().collect();
        if nodes != planned {
            return Err("plan tasks do not match the flow's nodes".into());
        }
        for e in &flow.edges {
            if wave[e.src.node.as_str()] >= wave[e.dst.node.as_str()] {
                return Err(format!("edge {} -> {} does not cross forward", e.src, e.dst));
            }
        }
        Ok(())
    }

    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "plan: {} ({} waves, {} tasks)", self.mode.as_str(), self.waves.len(), self.task_count());
        let _ = writeln!(s, "{:<6}tasks", "wave");
        for (i, w) in self.waves.iter().enumerate() {
            let _ = writeln!(s, "{i:<6}{}", w.join(", "));
        }
        let _ = writeln!(
            s,
            "critical path ({}): {}",
            render_len(self.critical_path.length),
            self.critical_path.path.join(" -> ")
        );
        s
    }
}

fn render_len(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn acyclic(flow: &Flow) -> Result<(DepGraph, Vec<usize>), PlanError> {
    let g = flow.dep_graph();
    match g.topo_order() {
        Ok(order) => Ok((g, order)),
        Err(cycle) => Err(PlanError::Cycle(cycle.into_iter().map(|i| g.id(i).to_string()).collect())),
    }
}

fn layer_index(g: &DepGraph, order: &[usize]) -> Vec<usize> {
    let mut depth = vec![0; g.len()];
    for &u in order {
        for &v in g.successors(u) {
            depth[v] = depth[v].max(depth[u] + 1);
        }
    }
    depth
}

/// Layer k holds the nodes whose longest incoming path has k edges.
pub fn bfs_layers(flow: &Flow) -> Result<Vec<Vec<String>>, PlanError> {
    let (g, order) = acyclic(flow)?;
    let depth = layer_index(&g, &order);
    let mut layers = vec![Vec::new(); depth.iter().max().map_or(0, |d| d + 1)];
    for i in 0..g.len() {
        layers[depth[i]].push(g.id(i).to_string());
    }
    Ok(layers)
}

/// Nodes grouped by effective stage, in stage order; empty stages omitted.
pub fn partition_stages(flow: &Flow, registry: &Registry) -> Vec<SubProcess> {
    let phases = effective_phases(flow, registry);
    StagePhase::ALL
        .iter()
        .map(|&phase| SubProcess {
            phase,
            node_ids: phases.iter().filter(|(_, p)| **p == phase).map(|(id, _)| id.clone()).collect(),
        })
        .filter(|s| !s.node_ids.is_empty())
        .collect()
}

/// Heaviest source-to-sink path. Ties prefer the lexically smaller id at
/// each step.
pub fn critical_path(flow: &Flow, cost: &CostModel) -> Result<CriticalPath, PlanError> {
    cost.check()?;
    let (g, order) = acyclic(flow)?;
    if g.is_empty() {
        return Ok(CriticalPath { length: 0.0, path: Vec::new() });
    }
    // best[u]: heaviest path cost starting at u; next[u]: its successor
    let mut best = vec![0.0; g.len()];
    let mut next: Vec<Option<usize>> = vec![None; g.len()];
    for &u in order.iter().rev() {
        let mut tail = 0.0;
        for &v in g.successors(u) {
            if best[v] > tail {
                tail = best[v];
                next[u] = Some(v);
            }
        }
        best[u] = cost.cost(g.id(u)) + tail;
    }
    let mut start = 0;
    for u in 0..g.len() {
        if best[u] > best[start] {
            start = u;
        }
    }
    let mut path = vec![g.id(start).to_string()];
    let mut cur = start;
    while let Some(v) = next[cur] {
        path.push(g.id(v).to_string());
        cur = v;
    }
    Ok(CriticalPath { length: best[start], path })
}

/// Splits one stage into groups of mutually unordered nodes: the flow's
/// layers restricted to the stage. Branches under a common fork or feeding
/// a common join land in the same group, so they can run together.
pub fn group_join_fork(flow: &Flow, sub: &SubProcess) -> Result<Vec<Vec<String>>, PlanError> {
    Ok(bfs_layers(flow)?
        .into_iter()
        .map(|layer| layer.into_iter().filter(|id| sub.node_ids.contains(id)).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect())
}

/// Optimized plan for a valid flow.
pub fn build_plan(flow: &Flow, registry: &Registry, cost: &CostModel) -> Result<ExecutionPlan, PlanError> {
    let issues = validate(flow, registry);
    if !issues.is_empty() {
        return Err(PlanError::Invalid(issues));
    }
    cost.check()?;
    let (g, order) = acyclic(flow)?;
    let depth = layer_index(&g, &order);
    let mut remaining = vec![0.0; g.len()];
    for &u in order.iter().rev() {
        let tail = g.successors(u).iter().map(|&v| remaining[v]).fold(0.0, f64::max);
        remaining[u] = cost.cost(g.id(u)) + tail;
    }
    let mut waves: Vec<Vec<usize>> = vec![Vec::new(); depth.iter().max().map_or(0, |d| d + 1)];
    for i in 0..g.len() {
        waves[depth[i]].push(i);
    }
    for w in &mut waves {
        w.sort_by(|&a, &b| remaining[b].total_cmp(&remaining[a]).then(a.cmp(&b)));
    }
    let stages = partition_stages(flow, registry)
        .iter()
        .map(|s| Ok(StagePlan { phase: s.phase, groups: group_join_fork(flow, s)? }))
        .collect::<Result<_, PlanError>>()?;
    Ok(ExecutionPlan {
        mode: PlanMode::Optimized,
        waves: waves.into_iter().map(|w| w.into_iter().map(|i| g.id(i).to_string()).collect()).collect(),
        stages,
        critical_path: critical_path(flow, cost)?,
    })
}

/// One task per wave, in topological order with lexical tie-breaks.
pub fn sequential_plan(flow: &Flow) -> Result<ExecutionPlan, PlanError> {
    let (g, order) = acyclic(flow)?;
    Ok(ExecutionPlan {
        mode: PlanMode::Sequential,
        waves: order.into_iter().map(|i| vec![g.id(i).to_string()]).collect(),
        stages: Vec::new(),
        critical_path: critical_path(flow, &CostModel::unit())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowNode;

    fn diamond() -> Flow {
        Flow::new("d")
            .node(FlowNode::new("A", "csv_read").param("path", "x.csv"))
            .node(FlowNode::new("B", "delay"))
            .node(FlowNode::new("C", "delay"))
            .node(FlowNode::new("D", "join"))
            .node(FlowNode::new("E", "csv_write").param("path", "y.csv"))
            .edge(("A", "out"), ("B", "in"))
            .edge(("A", "out"), ("C", "in"))
            .edge(("B", "out"), ("D", "in0"))
            .edge(("C", "out"), ("D", "in1"))
            .edge(("D", "out"), ("E", "in"))
    }

    #[test]
    fn layers_of_diamond() {
        let l = bfs_layers(&diamond()).unwrap();
        assert_eq!(l, vec![vec!["A"], vec!["B", "C"], vec!["D"], vec!["E"]]);
    }

    #[test]
    fn critical_path_weighted() {
        let f = diamond();
        let cp = critical_path(&f, &CostModel::unit()).unwrap();
        assert_eq!(cp.length, 4.0);
        assert_eq!(cp.path, ["A", "B", "D", "E"]);
        let cp = critical_path(&f, &CostModel::unit().with("C", 5.0)).unwrap();
        assert_eq!(cp.path, ["A", "C", "D", "E"]);
        assert_eq!(cp.length, 8.0);
        assert!(critical_path(&f, &CostModel::unit().with("C", 0.0)).is_err());
    }

    #[test]
    fn plan_of_diamond() {
        let r = Registry::standard();
        let f = diamond();
        let p = build_plan(&f, &r, &CostModel::unit().with("C", 3.0)).unwrap();
        assert_eq!(p.waves, vec![vec!["A"], vec!["C", "B"], vec!["D"], vec!["E"]]);
        p.check_against(&f).unwrap();
        let s = sequential_plan(&f).unwrap();
        assert_eq!(s.waves.len(), 5);
        s.check_against(&f).unwrap();
        assert!(p.to_text_table().contains("1     C, B"));
    }

    #[test]
    fn stages_and_groups() {
        let r = Registry::standard();
        let f = diamond();
        let stages = partition_stages(&f, &r);
        let phases: Vec<StagePhase> = stages.iter().map(|s| s.phase).collect();
        assert_eq!(phases, [StagePhase::Input, StagePhase::Output]);
        assert_eq!(group_join_fork(&f, &stages[0]).unwrap(), vec![vec!["A"], vec!["B", "C"], vec!["D"]]);
    }

    #[test]
    fn cycle_is_plan_error() {
        let f = Flow::new("c")
            .node(FlowNode::new("A", "delay"))
            .node(FlowNode::new("B", "delay"))
            .edge(("A", "out"), ("B", "in"))
            .edge(("B", "out"), ("A", "in"));
        assert!(matches!(bfs_layers(&f), Err(PlanError::Cycle(_))));
        assert!(matches!(build_plan(&f, &Registry::standard(), &CostModel::unit()), Err(PlanError::Invalid(_))));
    }
}
