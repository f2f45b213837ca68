//! Small state-machine runtime: named handlers, fixed and conditional
//! edges, and a hard bound on node applications.

use std::collections::BTreeMap;

/// Sentinel target that stops the run.
pub const END: &str = "__end__";

type Handler<'a, S> = Box<dyn Fn(S) -> Result<S, String> + 'a>;
type Router<'a, S> = Box<dyn Fn(&S) -> String + 'a>;

enum Next<'a, S> {
    Fixed(String),
    Conditional { route: Router<'a, S>, targets: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("entry node is not set")]
    MissingEntry,
    #[error("`{0}` is not a node")]
    UnknownNode(String),
    #[error("node `{0}` has no outgoing edge")]
    NoOutgoing(String),
    #[error("node `{0}` already has an outgoing edge")]
    DuplicateEdge(String),
    #[error("node name `{0}` is reserved")]
    Reserved(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvokeError<S> {
    #[error("step budget of {steps} node applications exhausted")]
    BudgetExhausted { steps: usize, state: S },
    #[error("node `{node}` failed: {message}")]
    HandlerFailed { node: String, message: String },
    #[error("node `{node}` routed to undeclared target `{target}`")]
    BadRoute { node: String, target: String },
}

pub struct GraphBuilder<'a, S> {
    nodes: BTreeMap<String, Handler<'a, S>>,
    edges: BTreeMap<String, Next<'a, S>>,
    entry: Option<String>,
    error: Option<GraphError>,
}

impl<'a, S> Default for GraphBuilder<'a, S> {
    fn default() -> Self {
        GraphBuilder { nodes: BTreeMap::new(), edges: BTreeMap::new(), entry: None, error: None }
    }
}

impl<'a, S> GraphBuilder<'a, S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, name: &str, handler: impl Fn(S) -> Result<S, String> + 'a) -> Self {
        if name == END {
            self.error.get_or_insert(GraphError::Reserved(name.into()));
        }
        self.nodes.insert(name.to_string(), Box::new(handler));
        self
    }

    fn set_next(mut self, from: &str, next: Next<'a, S>) -> Self {
        if self.edges.insert(from.to_string(), next).is_some() {
            self.error.get_or_insert(GraphError::DuplicateEdge(from.into()));
        }
        self
    }

    pub fn edge(self, from: &str, to: &str) -> Self {
        self.set_next(from, Next::Fixed(to.to_string()))
    }

    /// `route` must return one of `targets` (which may include [`END`]).
    pub fn conditional(self, from: &str, route: impl Fn(&S) -> String + 'a, targets: &[&str]) -> Self {
        let targets = targets.iter().map(|t| t.to_string()).collect();
        self.set_next(from, Next::Conditional { route: Box::new(route), targets })
    }

    pub fn entry(mut self, name: &str) -> Self {
        self.entry = Some(name.to_string());
        self
    }

    pub fn compile(self) -> Result<StateGraph<'a, S>, GraphError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let entry = self.entry.ok_or(GraphError::MissingEntry)?;
        let known = |n: &str| n == END || self.nodes.contains_key(n);
        if !self.nodes.contains_key(&entry) {
            return Err(GraphError::UnknownNode(entry));
        }
        for (from, next) in &self.edges {
            if !self.nodes.contains_key(from) {
                return Err(GraphError::UnknownNode(from.clone()));
            }
            let targets: Vec<&String> = match next {
                Next::Fixed(t) => vec![t],
                Next::Conditional { targets, .. } => targets.iter().collect(),
            };
            if let Some(t) = targets.into_iter().find(|t| !known(t)) {
                return Err(GraphError::UnknownNode(t.clone()));
            }
        }
        if let Some(n) = self.nodes.keys().find(|n| !self.edges.contains_key(*n)) {
            return Err(GraphError::NoOutgoing(n.clone()));
        }
        Ok(StateGraph { nodes: self.nodes, edges: self.edges, entry })
    }
}

/// A compiled, immutable graph.
pub struct StateGraph<'a, S> {
    nodes: BTreeMap<String, Handler<'a, S>>,
    edges: BTreeMap<String, Next<'a, S>>,
    entry: String,
}

impl<S> StateGraph<'_, S> {
    pub fn entry(&self) -> &str {
        &self.entry
    }

    /// Applies handlers from the entry node until [`END`], applying at most
    /// `max_steps` handlers.
    pub fn invoke(&self, mut state: S, max_steps: usize) -> Result<S, InvokeError<S>> {
        let mut current = self.entry.clone();
        let mut steps = 0;
        while current != END {
            if steps == max_steps {
                return Err(InvokeError::BudgetExhausted { steps, state });
            }
            state = (self.nodes[&current])(state)
                .map_err(|message| InvokeError::HandlerFailed { node: current.clone(), message })?;
            steps += 1;
            current = match &self.edges[&current] {
                Next::Fixed(t) => t.clone(),
                Next::Conditional { route, targets } => {
                    let t = route(&state);
                    if !targets.contains(&t) {
                        return Err(InvokeError::BadRoute { node: current, target: t });
                    }
                    t
                }
            };
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_to_end() {
        let g = GraphBuilder::new().node("a", |s: u32| Ok(s + 1)).edge("a", END).entry("a").compile().unwrap();
        assert_eq!(g.invoke(0, 1).unwrap(), 1);
    }

    #[test]
    fn two_cycle_exhausts_budget() {
        let g = GraphBuilder::new()
            .node("a", |s: u32| Ok(s + 1))
            .node("b", |s: u32| Ok(s + 1))
            .edge("a", "b")
            .edge("b", "a")
            .entry("a")
            .compile()
            .unwrap();
        match g.invoke(0, 8) {
            Err(InvokeError::BudgetExhausted { steps: 8, state: 8 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conditional_loop_and_failures() {
        let g = GraphBuilder::new()
            .node("a", |s: u32| Ok(s + 1))
            .conditional("a", |s: &u32| if *s >= 3 { END.into() } else { "a".into() }, &["a", END])
            .entry("a")
            .compile()
            .unwrap();
        assert_eq!(g.invoke(0, 10).unwrap(), 3);
        let g = GraphBuilder::new().node("a", |_: u32| Err("boom".into())).edge("a", END).entry("a").compile().unwrap();
        assert!(matches!(g.invoke(0, 3), Err(InvokeError::HandlerFailed { node, .. }) if node == "a"));
    }

    #[test]
    fn compile_errors() {
        assert_eq!(GraphBuilder::<u32>::new().entry("a").compile().err(), Some(GraphError::Empty));
        let dangling = GraphBuilder::new().node("a", |s: u32| Ok(s)).edge("a", "zz").entry("a").compile();
        assert_eq!(dangling.err(), Some(GraphError::UnknownNode("zz".into())));
        let no_entry = GraphBuilder::new().node("a", |s: u32| Ok(s)).edge("a", END).compile();
        assert_eq!(no_entry.err(), Some(GraphError::MissingEntry));
    }
}
