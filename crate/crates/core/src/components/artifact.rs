//! Fitted models and transformers, and their `FFML` binary form.
//!
//! Layout (little-endian): magic `FFML`, version u32, kind tag u8,
//! feature_dim u64, class count u64 and classes (tag u8 then i64 or
//! length-prefixed UTF-8), then the kind-specific payload. See
//! `docs/formats.md`.

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::frame::Value;

use super::{ComponentError, Result};

const MAGIC: &[u8; 4] = b"FFML";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMethod {
    Normalizer,
    Standard,
    MinMax,
}

impl ScaleMethod {
    pub fn parse(s: &str) -> Option<ScaleMethod> {
        match s {
            "normalizer" => Some(ScaleMethod::Normalizer),
            "standard" => Some(ScaleMethod::Standard),
            "minmax" => Some(ScaleMethod::MinMax),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Chi2,
    InfoGain,
    Gini,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Criterion> {
        match s {
            "chi2" => Some(Criterion::Chi2),
            "info_gain" => Some(Criterion::InfoGain),
            "gini" => Some(Criterion::Gini),
            _ => None,
        }
    }
}

/// Fitted feature transformer state.
#[derive(Debug, Clone, PartialEq)]
pub enum Transformer {
    /// `out = (x - offset) * factor` per dimension; the normalizer keeps
    /// both empty and rescales each row instead.
    Scale { method: ScaleMethod, offset: Vec<f64>, factor: Vec<f64> },
    OneHot { categories: Vec<String> },
    TfIdf { vocabulary: Vec<String>, idf: Vec<f64> },
    Select { criterion: Criterion, input_dim: usize, indices: Vec<usize>, scores: Vec<f64> },
    Pca { mean: Vec<f64>, components: Vec<Vec<f64>>, eigenvalues: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub classes: Vec<Value>,
    pub dim: usize,
    /// Row-major `classes x (dim + 1)`; the last entry of each row is the bias.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub classes: Vec<Value>,
    pub dim: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelArtifact {
    LogReg(LogRegModel),
    Forest(ForestModel),
    Transformer(Transformer),
}

fn bad(msg: impl Into<String>) -> ComponentError {
    ComponentError::Artifact(msg.into())
}

impl From<CodecError> for ComponentError {
    fn from(e: CodecError) -> Self {
        ComponentError::Artifact(e.to_string())
    }
}

fn write_classes(w: &mut ByteWriter, classes: &[Value]) {
    w.u64(classes.len() as u64);
    for c in classes {
        match c {
            Value::Int(i) => {
                w.u8(1);
                w.i64(*i);
            }
            other => {
                w.u8(0);
                w.str(&other.render());
            }
        }
    }
}

fn read_classes(r: &mut ByteReader) -> Result<Vec<Value>> {
    let n = r.len_prefix()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(match r.u8()? {
            0 => Value::Str(r.str()?),
            1 => Value::Int(r.i64()?),
            t => return Err(bad(format!("unknown class tag {t}"))),
        });
    }
    Ok(out)
}

fn write_strs(w: &mut ByteWriter, items: &[String]) {
    w.u64(items.len() as u64);
    for s in items {
        w.str(s);
    }
}

fn read_strs(r: &mut ByteReader) -> Result<Vec<String>> {
    let n = r.len_prefix()?;
    (0..n).map(|_| Ok(r.str()?)).collect()
}

fn read_usize(r: &mut ByteReader) -> Result<usize> {
    usize::try_from(r.u64()?).map_err(|_| bad("index out of range"))
}

impl ModelArtifact {
    /// Store kind label for the artifact entry.
    pub fn kind_label(&self) -> &'static str {
        match self {
            ModelArtifact::LogReg(_) => "logreg",
            ModelArtifact::Forest(_) => "random_forest",
            ModelArtifact::Transformer(_) => "fitted-transformer",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ModelArtifact::LogReg(m) => m.dim,
            ModelArtifact::Forest(m) => m.dim,
            ModelArtifact::Transformer(t) => match t {
                Transformer::Scale { offset, .. } => offset.len(),
                Transformer::OneHot { .. } => 1,
                Transformer::TfIdf { .. } => 1,
                Transformer::Select { input_dim, .. } => *input_dim,
                Transformer::Pca { mean, .. } => mean.len(),
            },
        }
    }

    pub fn classes(&self) -> &[Value] {
        match self {
            ModelArtifact::LogReg(m) => &m.classes,
            ModelArtifact::Forest(m) => &m.classes,
            ModelArtifact::Transformer(_) => &[],
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        let tag = match self {
            ModelArtifact::LogReg(_) => 1,
            ModelArtifact::Forest(_) => 2,
            ModelArtifact::Transformer(t) => match t {
                Transformer::Scale { .. } => 10,
                Transformer::OneHot { .. } => 11,
                Transformer::TfIdf { .. } => 12,
                Transformer::Select { .. } => 13,
                Transformer::Pca { .. } => 14,
            },
        };
        w.u8(tag);
        w.u64(self.feature_dim() as u64);
        write_classes(&mut w, self.classes());
        match self {
            ModelArtifact::LogReg(m) => w.f64s(&m.weights),
            ModelArtifact::Forest(m) => {
                w.u64(m.trees.len() as u64);
                for t in &m.trees {
                    w.u64(t.nodes.len() as u64);
                    for n in &t.nodes {
                        match n {
                            TreeNode::Leaf { class } => {
                                w.u8(0);
                                w.u64(*class as u64);
                            }
                            TreeNode::Split { feature, threshold, left, right } => {
                                w.u8(1);
                                w.u64(*feature as u64);
                                w.f64(*threshold);
                                w.u64(*left as u64);
                                w.u64(*right as u64);
                            }
                        }
                    }
                }
            }
            ModelArtifact::Transformer(t) => match t {
                Transformer::Scale { method, offset, factor } => {
                    w.u8(*method as u8);
                    w.f64s(offset);
                    w.f64s(factor);
                }
                Transformer::OneHot { categories } => write_strs(&mut w, categories),
                Transformer::TfIdf { vocabulary, idf } => {
                    write_strs(&mut w, vocabulary);
                    w.f64s(idf);
                }
                Transformer::Select { criterion, indices, scores, .. } => {
                    w.u8(*criterion as u8);
                    w.u64(indices.len() as u64);
                    for i in indices {
                        w.u64(*i as u64);
                    }
                    w.f64s(scores);
                }
                Transformer::Pca { mean, components, eigenvalues } => {
                    w.f64s(mean);
                    w.u64(components.len() as u64);
                    for c in components {
                        w.f64s(c);
                    }
                    w.f64s(eigenvalues);
                }
            },
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<ModelArtifact> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let tag = r.u8()?;
        let dim = read_usize(&mut r)?;
        let classes = read_classes(&mut r)?;
        let out = match tag {
            1 => {
                let weights = r.f64s()?;
                if weights.len() != classes.len() * (dim + 1) {
                    return Err(bad("weight matrix does not match classes and dimension"));
                }
                ModelArtifact::LogReg(LogRegModel { classes, dim, weights })
            }
            2 => {
                let n = r.len_prefix()?;
                let mut trees = Vec::with_capacity(n);
                for _ in 0..n {
                    let m = r.len_prefix()?;
                    let mut nodes = Vec::with_capacity(m);
                    for _ in 0..m {
                        nodes.push(match r.u8()? {
                            0 => TreeNode::Leaf { class: read_usize(&mut r)? },
                            1 => TreeNode::Split {
                                feature: read_usize(&mut r)?,
                                threshold: r.f64()?,
                                left: read_usize(&mut r)?,
                                right: read_usize(&mut r)?,
                            },
                            t => return Err(bad(format!("unknown tree node tag {t}"))),
                        });
                    }
                    trees.push(Tree { nodes });
                }
                ModelArtifact::Forest(ForestModel { classes, dim, trees })
            }
            10 => {
                let method = match r.u8()? {
                    0 => ScaleMethod::Normalizer,
                    1 => ScaleMethod::Standard,
                    2 => ScaleMethod::MinMax,
                    t => return Err(bad(format!("unknown scale method {t}"))),
                };
                let offset = r.f64s()?;
                let factor = r.f64s()?;
                ModelArtifact::Transformer(Transformer::Scale { method, offset, factor })
            }
            11 => ModelArtifact::Transformer(Transformer::OneHot { categories: read_strs(&mut r)? }),
            12 => {
                let vocabulary = read_strs(&mut r)?;
                let idf = r.f64s()?;
                ModelArtifact::Transformer(Transformer::TfIdf { vocabulary, idf })
            }
            13 => {
                let criterion = match r.u8()? {
                    0 => Criterion::Chi2,
                    1 => Criterion::InfoGain,
                    2 => Criterion::Gini,
                    t => return Err(bad(format!("unknown criterion {t}"))),
                };
                let n = r.len_prefix()?;
                let indices = (0..n).map(|_| read_usize(&mut r)).collect::<Result<Vec<_>>>()?;
                let scores = r.f64s()?;
                ModelArtifact::Transformer(Transformer::Select { criterion, input_dim: dim, indices, scores })
            }
            14 => {
                let mean = r.f64s()?;
                let n = r.len_prefix()?;
                let components = (0..n).map(|_| Ok(r.f64s()?)).collect::<Result<Vec<_>>>()?;
                let eigenvalues = r.f64s()?;
                ModelArtifact::Transformer(Transformer::Pca { mean, components, eigenvalues })
            }
            t => return Err(bad(format!("unknown artifact kind tag {t}"))),
        };
        r.expect_end()?;
        Ok(out)
    }
}
