//! Index-based dependency graph over string node ids.
//!
//! Nodes are stored in lexical id order, so "lowest index first" is the
//! same as "lexically smallest id first". Every tie-break in planning relies
//! on this.

use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge endpoint `{0}` is not a node")]
    UnknownNode(String),
}

impl DepGraph {
    /// Builds a graph; duplicate node ids collapse, parallel edges are
    /// deduplicated.
    pub fn new<I, S, E, A, B>(ids: I, edges: E) -> Result<DepGraph, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let set: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        let ids: Vec<String> = set.into_iter().collect();
        let index: HashMap<String, usize> =
            ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut succ = vec![BTreeSet::new(); ids.len()];
        let mut pred = vec![BTreeSet::new(); ids.len()];
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let u = *index.get(a).ok_or_else(|| GraphError::UnknownNode(a.to_string()))?;
            let v = *index.get(b).ok_or_else(|| GraphError::UnknownNode(b.to_string()))?;
            succ[u].insert(v);
            pred[v].insert(u);
        }
        Ok(DepGraph {
            ids,
            index,
            succ: succ.into_iter().map(|s| s.into_iter().collect()).collect(),
            pred: pred.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn predecessors(&self, i: usize) -> &[usize] {
        &self.pred[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, always releasing the smallest ready index. On a
    /// cycle returns the nodes of one directed cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>, Vec<usize>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.pred.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &v in &self.succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        // Every unprocessed node has an unprocessed predecessor; walking
        // predecessors must revisit a node, which closes a cycle.
        let start = (0..n).find(|&i| indeg[i] > 0).expect("some node left");
        let mut seen_at = HashMap::new();
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&pos) = seen_at.get(&cur) {
                let mut cycle: Vec<usize> = path[pos..].to_vec();
                cycle.reverse();
                return Err(cycle);
            }
            seen_at.insert(cur, path.len());
            path.push(cur);
            cur = *self.pred[cur]
                .iter()
                .find(|&&p| indeg[p] > 0)
                .expect("unprocessed node has an unprocessed predecessor");
        }
    }

    /// `reach[u][v]` is true when a non-empty directed path leads from u to v.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack: Vec<usize> = self.succ[s].clone();
            while let Some(u) = stack.pop() {
                if !row[u] {
                    row[u] = true;
                    stack.extend_from_slice(&self.succ[u]);
                }
            }
        }
        reach
    }

    /// Groups of nodes that lie on a common directed cycle (self-loops
    /// included). Each group is sorted; groups are ordered by first member.
    pub fn cyclic_groups(&self) -> Vec<Vec<usize>> {
        let reach = self.reachability();
        let n = self.len();
        let mut assigned = vec![false; n];
        let mut groups = Vec::new();
        for u in 0..n {
            if assigned[u] || !reach[u][u] {
                continue;
            }
            let group: Vec<usize> = (0..n).filter(|&v| reach[u][v] && reach[v][u]).collect();
            for &v in &group {
                assigned[v] = true;
            }
            groups.push(group);
        }
        groups
    }
}
