//! Flow documents: the user-authored DAG of components.
//!
//! Flows arrive as JSON (see `docs/flow.schema.json`), are parsed against
//! the component registry, and are checked by [`validate`] before any
//! planning or execution happens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::components::{PhaseRule, Registry};
use crate::graph::DepGraph;

/// Stage of the analysis process a component belongs to, in execution
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StagePhase {
    Input,
    Preprocess,
    Feature,
    Model,
    Predict,
    Output,
}

impl StagePhase {
    pub const ALL: [StagePhase; 6] = [
        StagePhase::Input,
        StagePhase::Preprocess,
        StagePhase::Feature,
        StagePhase::Model,
        StagePhase::Predict,
        StagePhase::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StagePhase::Input => "input",
            StagePhase::Preprocess => "preprocess",
            StagePhase::Feature => "feature",
            StagePhase::Model => "model",
            StagePhase::Predict => "predict",
            StagePhase::Output => "output",
        }
    }
}

impl fmt::Display for StagePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameter literal as written in a flow document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<ParamValue>),
}

impl ParamValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[ParamValue]> {
        match self {
            ParamValue::List(l) => Some(l),
            _ => None,
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Str(s.to_string())
    }
}

impl From<i64> for ParamValue {
    fn from(i: i64) -> Self {
        ParamValue::Int(i)
    }
}

impl From<f64> for ParamValue {
    fn from(f: f64) -> Self {
        ParamValue::Float(f)
    }
}

impl From<bool> for ParamValue {
    fn from(b: bool) -> Self {
        ParamValue::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNode {
    pub id: String,
    pub kind: String,
    pub params: BTreeMap<String, ParamValue>,
}

impl FlowNode {
    pub fn new(id: &str, kind: &str) -> Self {
        FlowNode {
            id: id.to_string(),
            kind: kind.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: String,
    pub port: String,
}

impl PortRef {
    pub fn new(node: &str, port: &str) -> Self {
        PortRef {
            node: node.to_string(),
            port: port.to_string(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowEdge {
    pub src: PortRef,
    pub dst: PortRef,
}

impl FlowEdge {
    pub fn new(src: (&str, &str), dst: (&str, &str)) -> Self {
        FlowEdge {
            src: PortRef::new(src.0, src.1),
            dst: PortRef::new(dst.0, dst.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Flow {
    pub name: String,
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

impl Flow {
    pub fn new(name: &str) -> Self {
        Flow {
            name: name.to_string(),
            ..Flow::default()
        }
    }

    pub fn node(mut self, node: FlowNode) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn edge(mut self, src: (&str, &str), dst: (&str, &str)) -> Self {
        self.edges.push(FlowEdge::new(src, dst));
        self
    }

    pub fn find(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Node-level dependency graph (ports collapsed). Edges to unknown nodes
    /// are dropped; [`validate`] reports them.
    pub fn dep_graph(&self) -> DepGraph {
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| ids.contains(e.src.node.as_str()) && ids.contains(e.dst.node.as_str()))
            .map(|e| (e.src.node.as_str(), e.dst.node.as_str()));
        DepGraph::new(ids.iter().copied(), edges).expect("edges filtered to known nodes")
    }

    /// Edges entering `node`, keyed by destination port.
    pub fn inputs_of(&self, node: &str) -> BTreeMap<&str, &PortRef> {
        self.edges
            .iter()
            .filter(|e| e.dst.node == node)
            .map(|e| (e.dst.port.as_str(), &e.src))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    ParamMissing,
    NoEndpoint,
    Cycle,
    StageOrder,
    UnknownKind,
    BadEdge,
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("code serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: IssueCode,
    pub node_ids: Vec<String>,
    pub message: String,
}

impl ValidationIssue {
    fn new(code: IssueCode, node_ids: Vec<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            code,
            node_ids,
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.code, self.node_ids.join(", "), self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("invalid node id `{0}`: ids must match [A-Za-z_][A-Za-z0-9_-]*")]
    InvalidId(String),
    #[error("bad edge endpoint `{endpoint}`: {reason}")]
    BadEndpoint { endpoint: String, reason: String },
    #[error("{}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Issues(Vec<ValidationIssue>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowDoc {
    #[serde(default)]
    name: String,
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
    /// Canvas positions written by the designer; not part of the flow.
    #[serde(default)]
    #[allow(dead_code)]
    layout: Option<serde_json::Value>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: String,
    dst: String,
}

#[derive(Serialize)]
struct FlowOut<'a> {
    name: &'a str,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

fn valid_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses a flow document. Implicit ports (`"node"` instead of
/// `"node.port"`) resolve to the component's only port on that side.
pub fn parse_flow(text: &str, registry: &Registry) -> Result<Flow, FlowError> {
    let doc: FlowDoc = serde_json::from_str(text).map_err(|e| FlowError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut kinds: HashMap<&str, &str> = HashMap::new();
    let mut unknown = Vec::new();
    for n in &doc.nodes {
        if !valid_id(&n.id) {
            return Err(FlowError::InvalidId(n.id.clone()));
        }
        if kinds.insert(&n.id, &n.kind).is_some() {
            return Err(FlowError::DuplicateNode(n.id.clone()));
        }
        if registry.get(&n.kind).is_none() {
            unknown.push(ValidationIssue::new(
                IssueCode::UnknownKind,
                vec![n.id.clone()],
                format!("unknown component kind `{}`", n.kind),
            ));
        }
    }
    if !unknown.is_empty() {
        return Err(FlowError::Issues(unknown));
    }

    let resolve = |endpoint: &str, outgoing: bool| -> Result<PortRef, FlowError> {
        let bad = |reason: String| FlowError::BadEndpoint {
            endpoint: endpoint.to_string(),
            reason,
        };
        let (node, port) = match endpoint.split_once('.') {
            Some((n, p)) => (n, Some(p)),
            None => (endpoint, None),
        };
        let kind = kinds
            .get(node)
            .ok_or_else(|| bad(format!("no node `{node}`")))?;
        let port = match port {
            Some(p) if !p.is_empty() => p.to_string(),
            _ => {
                let spec = registry.get(kind).expect("kinds checked");
                let ports = if outgoing { &spec.out_ports } else { &spec.in_ports };
                match ports.as_slice() {
                    [only] => only.name.clone(),
                    _ => return Err(bad(format!("`{kind}` has {} ports; name one", ports.len()))),
                }
            }
        };
        Ok(PortRef {
            node: node.to_string(),
            port,
        })
    };

    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        edges.push(FlowEdge {
            src: resolve(&e.src, true)?,
            dst: resolve(&e.dst, false)?,
        });
    }
    Ok(Flow {
        name: doc.name,
        nodes: doc
            .nodes
            .into_iter()
            .map(|n| FlowNode {
                id: n.id,
                kind: n.kind,
                params: n.params,
            })
            .collect(),
        edges,
    })
}

/// Canonical JSON: nodes sorted by id, edges sorted by (src, dst), explicit
/// ports, stable key order.
pub fn serialize_flow(flow: &Flow) -> String {
    let mut nodes: Vec<&FlowNode> = flow.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut edges: Vec<&FlowEdge> = flow.edges.iter().collect();
    edges.sort();
    let out = FlowOut {
        name: &flow.name,
        nodes: nodes
            .into_iter()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                kind: n.kind.clone(),
                params: n.params.clone(),
            })
            .collect(),
        edges: edges
            .into_iter()
            .map(|e| EdgeDoc {
                src: e.src.to_string(),
                dst: e.dst.to_string(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("flow serializes");
    s.push('\n');
    s
}

/// Topological order of node ids, or the ids of one cycle.
pub fn topo_order(flow: &Flow) -> Result<Vec<String>, Vec<String>> {
    let g = flow.dep_graph();
    match g.topo_order() {
        Ok(order) => Ok(order.into_iter().map(|i| g.id(i).to_string()).collect()),
        Err(cycle) => Err(cycle.into_iter().map(|i| g.id(i).to_string()).collect()),
    }
}

/// Effective phase per node: fixed phases as declared, transparent nodes
/// take the maximum phase of their inputs (`input` when they have none).
pub fn effective_phases(flow: &Flow, registry: &Registry) -> BTreeMap<String, StagePhase> {
    let g = flow.dep_graph();
    let rules: Vec<Option<PhaseRule>> = (0..g.len())
        .map(|i| {
            let node = flow.find(g.id(i)).expect("graph built from flow");
            registry.get(&node.kind).map(|s| s.phase)
        })
        .collect();
    let mut phase: Vec<StagePhase> = rules
        .iter()
        .map(|r| match r {
            Some(PhaseRule::Stage(p)) => *p,
            _ => StagePhase::Input,
        })
        .collect();
    // monotone and bounded, so this reaches a fixed point even on cycles
    loop {
        let mut changed = false;
        for i in 0..g.len() {
            if !matches!(rules[i], Some(PhaseRule::Transparent)) {
                continue;
            }
            let p = g
                .predecessors(i)
                .iter()
                .map(|&u| phase[u])
                .max()
                .unwrap_or(StagePhase::Input);
            if p > phase[i] {
                phase[i] = p;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..g.len()).map(|i| (g.id(i).to_string(), phase[i])).collect()
}

/// Runs all four checks and returns every issue, grouped in check order:
/// (1) parameters, ports and edges, (2) input/output endpoints,
/// (3) cycles, (4) stage ordering.
pub fn validate(flow: &Flow, registry: &Registry) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    check_nodes(flow, registry, &mut issues);
    check_endpoints(flow, registry, &mut issues);
    check_cycles(flow, &mut issues);
    check_stage_order(flow, registry, &mut issues);
    issues
}

fn sorted_nodes(flow: &Flow) -> Vec<&FlowNode> {
    let mut nodes: Vec<&FlowNode> = flow.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    nodes
}

fn check_nodes(flow: &Flow, registry: &Registry, issues: &mut Vec<ValidationIssue>) {
    use IssueCode::*;
    let mut seen = BTreeSet::new();
    for node in sorted_nodes(flow) {
        let one = vec![node.id.clone()];
        if !seen.insert(node.id.as_str()) {
            issues.push(ValidationIssue::new(BadEdge, one, format!("duplicate node id `{}`", node.id)));
            continue;
        }
        let Some(spec) = registry.get(&node.kind) else {
            issues.push(ValidationIssue::new(
                UnknownKind,
                one,
                format!("unknown component kind `{}`", node.kind),
            ));
            continue;
        };
        for p in &spec.params {
            match node.params.get(&p.name) {
                None if p.required => issues.push(ValidationIssue::new(
                    ParamMissing,
                    one.clone(),
                    format!("`{}` requires parameter `{}`", node.kind, p.name),
                )),
                Some(v) if !p.ty.accepts(v) => issues.push(ValidationIssue::new(
                    ParamMissing,
                    one.clone(),
                    format!("parameter `{}` must be {}", p.name, p.ty),
                )),
                _ => {}
            }
        }
        for name in node.params.keys() {
            if spec.param(name).is_none() {
                issues.push(ValidationIssue::new(
                    ParamMissing,
                    one.clone(),
                    format!("`{}` has no parameter `{name}`", node.kind),
                ));
            }
        }
        let wired = flow.inputs_of(&node.id);
        for port in spec.in_ports.iter().filter(|p| p.required) {
            if !wired.contains_key(port.name.as_str()) {
                issues.push(ValidationIssue::new(
                    ParamMissing,
                    one.clone(),
                    format!("input port `{}` is not connected", port.name),
                ));
            }
        }
    }

    let kinds: HashMap<&str, &str> = flow.nodes.iter().map(|n| (n.id.as_str(), n.kind.as_str())).collect();
    let mut edges: Vec<&FlowEdge> = flow.edges.iter().collect();
    edges.sort();
    let mut fed = BTreeSet::new();
    for e in edges {
        let ids = vec![e.src.node.clone(), e.dst.node.clone()];
        let mut problem = None;
        for (end, outgoing) in [(&e.src, true), (&e.dst, false)] {
            match kinds.get(end.node.as_str()) {
                None => problem = Some(format!("`{}` is not a node", end.node)),
                Some(kind) => {
                    if let Some(spec) = registry.get(kind) {
                        let ports = if outgoing { &spec.out_ports } else { &spec.in_ports };
                        if !ports.iter().any(|p| p.name == end.port) {
                            problem = Some(format!("`{kind}` has no {} port `{}`", if outgoing { "output" } else { "input" }, end.port));
                        }
                    }
                }
            }
            if problem.is_some() {
                break;
            }
        }
        if problem.is_none() && !fed.insert(&e.dst) {
            problem = Some(format!("input port `{}` is fed more than once", e.dst));
        }
        if let Some(msg) = problem {
            let ids = ids.into_iter().filter(|id| kinds.contains_key(id.as_str())).collect();
            issues.push(ValidationIssue::new(BadEdge, ids, format!("edge {} -> {}: {msg}", e.src, e.dst)));
        }
    }
}

fn check_endpoints(flow: &Flow, registry: &Registry, issues: &mut Vec<ValidationIssue>) {
    let has = |phase: StagePhase| {
        flow.nodes.iter().any(|n| {
            registry
                .get(&n.kind)
                .is_some_and(|s| s.phase == PhaseRule::Stage(phase))
        })
    };
    if !has(StagePhase::Input) {
        issues.push(ValidationIssue::new(
            IssueCode::NoEndpoint,
            vec![],
            "flow has no input component",
        ));
    }
    if !has(StagePhase::Output) {
        issues.push(ValidationIssue::new(
            IssueCode::NoEndpoint,
            vec![],
            "flow has no output component",
        ));
    }
}

fn check_cycles(flow: &Flow, issues: &mut Vec<ValidationIssue>) {
    let g = flow.dep_graph();
    for group in g.cyclic_groups() {
        let ids: Vec<String> = group.iter().map(|&i| g.id(i).to_string()).collect();
        let msg = if ids.len() == 1 {
            format!("`{}` feeds itself", ids[0])
        } else {
            format!("cycle through {}", ids.join(", "))
        };
        issues.push(ValidationIssue::new(IssueCode::Cycle, ids, msg));
    }
}

fn check_stage_order(flow: &Flow, registry: &Registry, issues: &mut Vec<ValidationIssue>) {
    let phases = effective_phases(flow, registry);
    let g = flow.dep_graph();
    for (u, v) in g.edges() {
        let (a, b) = (g.id(u), g.id(v));
        let known = |id: &str| flow.find(id).is_some_and(|n| registry.get(&n.kind).is_some());
        if !known(a) || !known(b) {
            continue;
        }
        let (pa, pb) = (phases[a], phases[b]);
        if pa > pb {
            issues.push(ValidationIssue::new(
                IssueCode::StageOrder,
                vec![a.to_string(), b.to_string()],
                format!("`{a}` ({pa}) cannot feed `{b}` ({pb})"),
            ));
        }
    }
}
