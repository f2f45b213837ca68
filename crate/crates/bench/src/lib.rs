//! Seeded inputs shared by the criterion benchmarks.

use flowforge_core::{Flow, FlowNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Most inputs a generated join node receives.
pub const MAX_FAN_IN: usize = 4;

/// A layered random DAG of `n` nodes: sources read a csv, inner nodes
/// join up to [`MAX_FAN_IN`] earlier nodes, and one writer hangs off the
/// last node. `width` bounds how far back an edge may reach.
pub fn random_flow(n: usize, width: usize, seed: u64) -> Flow {
    assert!(n >= 2 && width >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |i: usize| format!("n{i}");
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, ps) in parents.iter_mut().enumerate().skip(1) {
        if rng.random_bool(0.15) {
            continue;
        }
        let lo = v.saturating_sub(width);
        let k = rng.random_range(1..=MAX_FAN_IN.min(v - lo));
        while ps.len() < k {
            let u = rng.random_range(lo..v);
            if !ps.contains(&u) {
                ps.push(u);
            }
        }
    }
    // keep the last node reachable as a non-source so the writer has a feed
    if parents[n - 1].is_empty() {
        parents[n - 1].push(n - 2);
    }
    let mut flow = Flow::new("random");
    for (i, ps) in parents.iter().enumerate() {
        flow = flow.node(if ps.is_empty() {
            FlowNode::new(&id(i), "csv_read").param("path", "in.csv")
        } else {
            FlowNode::new(&id(i), "join")
        });
    }
    for (v, ps) in parents.iter().enumerate() {
        for (port, &u) in ps.iter().enumerate() {
            flow = flow.edge((id(u).as_str(), "out"), (id(v).as_str(), format!("in{port}").as_str()));
        }
    }
    flow.node(FlowNode::new("sink", "csv_write").param("path", "out.csv"))
        .edge((id(n - 1).as_str(), "out"), ("sink", "in"))
}
