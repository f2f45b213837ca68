//! Random forest of CART trees on bootstrap samples (no feature
//! subsampling), split by Gini impurity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::StagePhase;
use crate::frame::{Frame, Value};

use super::artifact::{ForestModel, ModelArtifact, Tree, TreeNode};
use super::{data_err, encode_labels, label_name, vectors, ComponentSpec, JobIo, ParamType, PhaseRule, PortKind, Registry, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions { n_trees: 20, max_depth: 8, min_leaf: 2, seed: 0 }
    }
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted Gini impurity of a two-way split.
pub fn split_impurity(left: &[usize], right: &[usize]) -> f64 {
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = (nl + nr) as f64;
    if n == 0.0 {
        return 0.0;
    }
    (nl as f64 * gini(left) + nr as f64 * gini(right)) / n
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a> {
    xs: &'a [&'a [f64]],
    y: &'a [usize],
    classes: usize,
    opts: &'a ForestOptions,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best (feature, threshold, impurity); rows with x <= threshold go left.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let dim = self.xs.first().map_or(0, |r| r.len());
        let total = self.counts(idx);
        let min_leaf = self.opts.min_leaf.max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..dim {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let mut left = vec![0; self.classes];
            for pos in 0..order.len() - 1 {
                left[self.y[order[pos]]] += 1;
                let (a, b) = (self.xs[order[pos]][f], self.xs[order[pos + 1]][f]);
                if a == b || pos + 1 < min_leaf || order.len() - pos - 1 < min_leaf {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let imp = split_impurity(&left, &right);
                if best.is_none_or(|(_, _, b)| imp < b) {
                    best = Some((f, a + (b - a) / 2.0, imp));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let here = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class: majority(&counts) });
        let parent = gini(&counts);
        if parent == 0.0 || depth >= self.opts.max_depth || idx.len() < 2 * self.opts.min_leaf.max(1) {
            return here;
        }
        let Some((feature, threshold, imp)) = self.best_split(idx) else { return here };
        if imp >= parent {
            return here;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[here] = TreeNode::Split { feature, threshold, left, right };
        here
    }
}

pub fn grow_tree(xs: &[&[f64]], y: &[usize], classes: usize, sample: &[usize], opts: &ForestOptions) -> Tree {
    let mut b = Builder { xs, y, classes, opts, nodes: Vec::new() };
    b.grow(sample, 0);
    Tree { nodes: b.nodes }
}

pub fn tree_predict(tree: &Tree, x: &[f64]) -> usize {
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            TreeNode::Leaf { class } => return class,
            TreeNode::Split { feature, threshold, left, right } => i = if x[feature] <= threshold { left } else { right },
        }
    }
}

/// Per-class vote counts; the prediction is the most voted class, ties to
/// the lower index.
pub fn forest_votes(m: &ForestModel, x: &[f64]) -> Vec<usize> {
    let mut votes = vec![0; m.classes.len()];
    for t in &m.trees {
        votes[tree_predict(t, x)] += 1;
    }
    votes
}

pub fn forest_predict(m: &ForestModel, x: &[f64]) -> usize {
    majority(&forest_votes(m, x))
}

pub fn fit_forest(xs: &[&[f64]], dim: usize, y: &[usize], classes: Vec<Value>, opts: &ForestOptions) -> Result<ForestModel> {
    if classes.len() < 2 {
        return Err(data_err("random forest needs at least two classes"));
    }
    if xs.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(data_err("features contain non-finite values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = xs.len();
    let trees = (0..opts.n_trees)
        .map(|_| {
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(xs, y, classes.len(), &sample, opts)
        })
        .collect();
    Ok(ForestModel { classes, dim, trees })
}

pub fn fit_from_frame(frame: &Frame, features: &str, label: Option<&str>, opts: &ForestOptions) -> Result<ForestModel> {
    let (dim, xs) = vectors(frame, features)?;
    let label = label_name(frame, label)?;
    let (classes, y) = encode_labels(frame, label)?;
    fit_forest(&xs, dim, &y, classes, opts)
}

pub(super) fn register(r: &mut Registry) {
    r.builtin(
        ComponentSpec::new("random_forest", PhaseRule::Stage(StagePhase::Model), "Fit a seeded random forest classifier.")
            .optional("features_col", ParamType::Str, Some("features".into()), "vector column of features")
            .optional("label_col", ParamType::Str, None, "label column (default: the label-role column)")
            .optional("n_trees", ParamType::Int, Some(20i64.into()), "number of trees")
            .optional("max_depth", ParamType::Int, Some(8i64.into()), "maximum tree depth")
            .optional("min_leaf", ParamType::Int, Some(2i64.into()), "minimum rows per leaf")
            .optional("seed", ParamType::Int, Some(0i64.into()), "bootstrap seed")
            .input("in", PortKind::Frame, true)
            .output("model", PortKind::Artifact),
        |p| {
            let features = p.str("features_col")?.to_string();
            let label = p.opt_str("label_col").map(str::to_string);
            let opts = ForestOptions {
                n_trees: p.usize_at_least("n_trees", 1)?,
                max_depth: p.usize_at_least("max_depth", 0)?,
                min_leaf: p.usize_at_least("min_leaf", 1)?,
                seed: p.int("seed")? as u64,
            };
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                let model = fit_from_frame(&f, &features, label.as_deref(), &opts)?;
                io.emit_artifact("model", &ModelArtifact::Forest(model))
            }))
        },
    );
}
