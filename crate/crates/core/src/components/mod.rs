//! Component library: manifest entries, parameter resolution, and the
//! create-then-execute lifecycle every node goes through.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::flow::{ParamValue, StagePhase};
use crate::frame::{Column, ColumnRole, DType, Frame, FrameError, Value};
use crate::store::{FrameHandle, RunId, Store, StoreError};

pub mod artifact;
pub mod forest;
pub mod io;
pub mod logreg;
pub mod pca;
pub mod predict;
pub mod preprocess;
pub mod routing;
pub mod scale;
pub mod select;
pub mod text;

pub use artifact::{ModelArtifact, Transformer};

#[derive(Debug, thiserror::Error)]
pub enum ComponentError {
    #[error("parameter `{name}`: {message}")]
    Param { name: String, message: String },
    #[error("input port `{0}` is not connected")]
    MissingInput(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("expression: {0}")]
    Sql(#[from] crate::sql::QueryError),
    #[error("numerics: {0}")]
    Numeric(#[from] crate::numeric::NumericError),
    #[error("model artifact: {0}")]
    Artifact(String),
}

pub type Result<T, E = ComponentError> = std::result::Result<T, E>;

pub(crate) fn data_err(msg: impl Into<String>) -> ComponentError {
    ComponentError::Data(msg.into())
}

/// Fixed stage, or inherited from inputs (routing components).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseRule {
    Stage(StagePhase),
    Transparent,
}

impl Serialize for PhaseRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PhaseRule::Stage(p) => s.serialize_str(p.as_str()),
            PhaseRule::Transparent => s.serialize_str("transparent"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "choices")]
pub enum ParamType {
    Str,
    Int,
    Float,
    Bool,
    StrList,
    /// Any scalar literal.
    Scalar,
    Choice(Vec<String>),
}

impl ParamType {
    pub fn accepts(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamType::Str, ParamValue::Str(_)) => true,
            (ParamType::Int, ParamValue::Int(_)) => true,
            (ParamType::Float, ParamValue::Int(_) | ParamValue::Float(_)) => true,
            (ParamType::Bool, ParamValue::Bool(_)) => true,
            (ParamType::StrList, ParamValue::List(items)) => items.iter().all(|i| matches!(i, ParamValue::Str(_))),
            (ParamType::Scalar, ParamValue::List(_)) => false,
            (ParamType::Scalar, _) => true,
            (ParamType::Choice(opts), ParamValue::Str(s)) => opts.iter().any(|o| o == s),
            _ => false,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Str => f.write_str("a string"),
            ParamType::Int => f.write_str("an integer"),
            ParamType::Float => f.write_str("a number"),
            ParamType::Bool => f.write_str("a boolean"),
            ParamType::StrList => f.write_str("a list of strings"),
            ParamType::Scalar => f.write_str("a scalar"),
            ParamType::Choice(opts) => write!(f, "one of {}", opts.join("|")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
    pub doc: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKind {
    Frame,
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortSpec {
    pub name: String,
    pub kind: PortKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSpec {
    pub kind: String,
    pub phase: PhaseRule,
    pub params: Vec<ParamSpec>,
    pub in_ports: Vec<PortSpec>,
    pub out_ports: Vec<PortSpec>,
    pub doc: String,
}

impl ComponentSpec {
    pub fn new(kind: &str, phase: PhaseRule, doc: &str) -> Self {
        ComponentSpec {
            kind: kind.to_string(),
            phase,
            params: Vec::new(),
            in_ports: Vec::new(),
            out_ports: Vec::new(),
            doc: doc.to_string(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn required(mut self, name: &str, ty: ParamType, doc: &str) -> Self {
        self.params.push(ParamSpec { name: name.into(), ty, required: true, default: None, doc: doc.into() });
        self
    }

    pub fn optional(mut self, name: &str, ty: ParamType, default: Option<ParamValue>, doc: &str) -> Self {
        self.params.push(ParamSpec { name: name.into(), ty, required: false, default, doc: doc.into() });
        self
    }

    pub fn input(mut self, name: &str, kind: PortKind, required: bool) -> Self {
        self.in_ports.push(PortSpec { name: name.into(), kind, required });
        self
    }

    pub fn output(mut self, name: &str, kind: PortKind) -> Self {
        self.out_ports.push(PortSpec { name: name.into(), kind, required: true });
        self
    }
}

pub(crate) fn choice(opts: &[&str]) -> ParamType {
    ParamType::Choice(opts.iter().map(|s| s.to_string()).collect())
}

/// Parameters checked against a component spec, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    values: BTreeMap<String, ParamValue>,
}

fn param_err(name: &str, message: impl Into<String>) -> ComponentError {
    ComponentError::Param { name: name.to_string(), message: message.into() }
}

impl Params {
    pub fn resolve(spec: &ComponentSpec, raw: &BTreeMap<String, ParamValue>) -> Result<Params> {
        if let Some(unknown) = raw.keys().find(|k| spec.param(k).is_none()) {
            return Err(param_err(unknown, format!("`{}` has no such parameter", spec.kind)));
        }
        let mut values = BTreeMap::new();
        for p in &spec.params {
            match raw.get(&p.name).or(p.default.as_ref()) {
                Some(v) if p.ty.accepts(v) => {
                    values.insert(p.name.clone(), v.clone());
                }
                Some(_) => return Err(param_err(&p.name, format!("must be {}", p.ty))),
                None if p.required => return Err(param_err(&p.name, "is required")),
                None => {}
            }
        }
        Ok(Params { values })
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    pub fn str(&self, name: &str) -> Result<&str> {
        self.opt_str(name).ok_or_else(|| param_err(name, "is required"))
    }

    pub fn opt_str(&self, name: &str) -> Option<&str> {
        self.values.get(name).and_then(ParamValue::as_str)
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        self.values.get(name).and_then(ParamValue::as_i64).ok_or_else(|| param_err(name, "is required"))
    }

    pub fn float(&self, name: &str) -> Result<f64> {
        self.values.get(name).and_then(ParamValue::as_f64).ok_or_else(|| param_err(name, "is required"))
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        self.values.get(name).and_then(ParamValue::as_bool).ok_or_else(|| param_err(name, "is required"))
    }

    pub fn str_list(&self, name: &str) -> Option<Vec<String>> {
        self.values.get(name).and_then(ParamValue::as_list).map(|items| {
            items.iter().filter_map(|i| i.as_str().map(str::to_string)).collect()
        })
    }

    pub fn usize_at_least(&self, name: &str, min: usize) -> Result<usize> {
        let v = self.int(name)?;
        if v < min as i64 {
            return Err(param_err(name, format!("must be at least {min}")));
        }
        Ok(v as usize)
    }
}

/// Per-task view of the run: resolved input handles, the store, and the
/// outputs produced so far.
pub struct JobIo<'a> {
    pub store: &'a Store,
    pub run_id: &'a RunId,
    pub node_id: &'a str,
    /// Relative file paths in parameters resolve against this directory.
    pub base_dir: &'a Path,
    inputs: BTreeMap<String, FrameHandle>,
    outputs: BTreeMap<String, FrameHandle>,
}

impl<'a> JobIo<'a> {
    pub fn new(
        store: &'a Store,
        run_id: &'a RunId,
        node_id: &'a str,
        base_dir: &'a Path,
        inputs: BTreeMap<String, FrameHandle>,
    ) -> Self {
        JobIo { store, run_id, node_id, base_dir, inputs, outputs: BTreeMap::new() }
    }

    pub fn input(&self, port: &str) -> Option<&FrameHandle> {
        self.inputs.get(port)
    }

    pub fn has_input(&self, port: &str) -> bool {
        self.inputs.contains_key(port)
    }

    fn required(&self, port: &str) -> Result<&FrameHandle> {
        self.inputs.get(port).ok_or_else(|| ComponentError::MissingInput(port.to_string()))
    }

    pub fn frame(&self, port: &str) -> Result<Arc<Frame>> {
        Ok(self.store.get_frame(self.required(port)?)?)
    }

    pub fn artifact(&self, port: &str) -> Result<ModelArtifact> {
        let (_, bytes) = self.store.get_artifact(self.required(port)?)?;
        ModelArtifact::decode(&bytes)
    }

    pub fn emit_frame(&mut self, port: &str, frame: Frame) -> Result<()> {
        let h = self.store.put_frame(self.run_id, frame)?;
        self.outputs.insert(port.to_string(), h);
        Ok(())
    }

    pub fn emit_artifact(&mut self, port: &str, artifact: &ModelArtifact) -> Result<()> {
        let h = self.store.put_artifact(self.run_id, artifact.encode(), artifact.kind_label())?;
        self.outputs.insert(port.to_string(), h);
        Ok(())
    }

    /// Re-publishes an existing handle (zero-copy).
    pub fn emit_handle(&mut self, port: &str, handle: &FrameHandle) -> Result<()> {
        let h = self.store.alias(handle)?;
        self.outputs.insert(port.to_string(), h);
        Ok(())
    }

    pub fn resolve_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn into_outputs(self) -> BTreeMap<String, FrameHandle> {
        self.outputs
    }
}

pub trait Job: Send {
    fn execute(&mut self, io: &mut JobIo<'_>) -> Result<()>;
}

impl<F> Job for F
where
    F: FnMut(&mut JobIo<'_>) -> Result<()> + Send,
{
    fn execute(&mut self, io: &mut JobIo<'_>) -> Result<()> {
        self(io)
    }
}

pub trait Component: Send + Sync {
    fn spec(&self) -> &ComponentSpec;
    fn create_instance(&self, params: &Params) -> Result<Box<dyn Job>>;
}

type Factory = fn(&Params) -> Result<Box<dyn Job>>;

struct Builtin {
    spec: ComponentSpec,
    factory: Factory,
}

impl Component for Builtin {
    fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    fn create_instance(&self, params: &Params) -> Result<Box<dyn Job>> {
        (self.factory)(params)
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    components: BTreeMap<String, Arc<dyn Component>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.components.keys()).finish()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Every built-in component.
    pub fn standard() -> Self {
        let mut r = Registry::empty();
        io::register(&mut r);
        preprocess::register(&mut r);
        routing::register(&mut r);
        text::register(&mut r);
        scale::register(&mut r);
        select::register(&mut r);
        pca::register(&mut r);
        logreg::register(&mut r);
        forest::register(&mut r);
        predict::register(&mut r);
        r
    }

    pub fn register(&mut self, component: Arc<dyn Component>) {
        let spec = component.spec();
        debug_assert!(spec.params.iter().all(|p| !(p.required && p.default.is_some())));
        self.components.insert(spec.kind.clone(), component);
    }

    pub(crate) fn builtin(&mut self, spec: ComponentSpec, factory: Factory) {
        self.register(Arc::new(Builtin { spec, factory }));
    }

    pub fn get(&self, kind: &str) -> Option<&ComponentSpec> {
        self.components.get(kind).map(|c| c.spec())
    }

    pub fn component(&self, kind: &str) -> Option<&Arc<dyn Component>> {
        self.components.get(kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.components.keys().map(String::as_str)
    }

    /// Specs ordered by phase then kind, as served to the designer palette.
    pub fn manifest(&self) -> Vec<&ComponentSpec> {
        let mut specs: Vec<&ComponentSpec> = self.components.values().map(|c| c.spec()).collect();
        let rank = |p: PhaseRule| match p {
            PhaseRule::Stage(s) => s as usize,
            PhaseRule::Transparent => StagePhase::ALL.len(),
        };
        specs.sort_by(|a, b| rank(a.phase).cmp(&rank(b.phase)).then(a.kind.cmp(&b.kind)));
        specs
    }

    /// Resolves parameters and creates a job instance for one node.
    pub fn instantiate(&self, kind: &str, raw: &BTreeMap<String, ParamValue>) -> Result<Box<dyn Job>> {
        let c = self
            .components
            .get(kind)
            .ok_or_else(|| data_err(format!("unknown component kind `{kind}`")))?;
        let params = Params::resolve(c.spec(), raw)?;
        c.create_instance(&params)
    }
}

// ---- fitted-transformer plumbing ----

/// Spec skeleton shared by feature transformers: `in` plus an optional
/// fitted `model` to reuse, emitting the transformed frame and the model.
pub(crate) fn transformer_spec(kind: &str, doc: &str) -> ComponentSpec {
    ComponentSpec::new(kind, PhaseRule::Stage(StagePhase::Feature), doc)
        .required("input_col", ParamType::Str, "column to read")
        .required("output_col", ParamType::Str, "column to write")
        .input("in", PortKind::Frame, true)
        .input("model", PortKind::Artifact, false)
        .output("out", PortKind::Frame)
        .output("model", PortKind::Artifact)
}

impl Transformer {
    /// Applies fitted state to `input` and writes `output`.
    pub fn apply(&self, frame: &Frame, input: &str, output: &str) -> Result<Frame> {
        match self {
            Transformer::Scale { .. } => scale::apply(self, frame, input, output),
            Transformer::OneHot { categories } => text::apply_one_hot(categories, frame, input, output),
            Transformer::TfIdf { vocabulary, idf } => text::apply_tf_idf(vocabulary, idf, frame, input, output),
            Transformer::Select { input_dim, indices, .. } => select::apply(*input_dim, indices, frame, input, output),
            Transformer::Pca { mean, components, .. } => pca::apply(mean, components, frame, input, output),
        }
    }
}

/// Fits on the input (or reuses the connected `model`), then emits both.
pub(crate) fn run_transformer(
    io: &mut JobIo<'_>,
    input: &str,
    output: &str,
    fit: impl FnOnce(&Frame) -> Result<Transformer>,
) -> Result<()> {
    let frame = io.frame("in")?;
    let t = if io.has_input("model") {
        match io.artifact("model")? {
            ModelArtifact::Transformer(t) => t,
            other => return Err(data_err(format!("`model` input holds a {}, not a transformer", other.kind_label()))),
        }
    } else {
        fit(&frame)?
    };
    let out = t.apply(&frame, input, output)?;
    io.emit_frame("out", out)?;
    io.emit_artifact("model", &ModelArtifact::Transformer(t))
}

// ---- shared frame helpers ----

/// Rows of a vector column; nulls are rejected.
pub(crate) fn vectors<'f>(frame: &'f Frame, name: &str) -> Result<(usize, Vec<&'f [f64]>)> {
    let (_, col) = frame.require(name)?;
    match col {
        Column::Vector { dim, cells } => {
            let mut rows = Vec::with_capacity(cells.len());
            for (i, c) in cells.iter().enumerate() {
                rows.push(
                    c.as_deref()
                        .ok_or_else(|| data_err(format!("column `{name}` has a null vector at row {i}")))?,
                );
            }
            Ok((*dim, rows))
        }
        other => Err(data_err(format!("column `{name}` must be a vector column, found {}", other.dtype()))),
    }
}

/// The label column: the named one, or the frame's label-role column.
pub(crate) fn label_name<'f>(frame: &'f Frame, explicit: Option<&'f str>) -> Result<&'f str> {
    explicit
        .or_else(|| frame.label_name())
        .ok_or_else(|| data_err("no label column: set `label_col` or mark a column with the label role"))
}

/// Distinct labels in ascending order and each row's class index.
pub(crate) fn encode_labels(frame: &Frame, name: &str) -> Result<(Vec<Value>, Vec<usize>)> {
    let (field, col) = frame.require(name)?;
    if !matches!(field.dtype, DType::Utf8 | DType::Int64) {
        return Err(data_err(format!("label `{name}` must be utf8 or int64, found {}", field.dtype)));
    }
    let mut values = Vec::with_capacity(col.len());
    for r in 0..col.len() {
        let v = col.value(r);
        if v.is_null() {
            return Err(data_err(format!("label `{name}` is null at row {r}")));
        }
        values.push(v);
    }
    let mut classes = values.clone();
    classes.sort_by(Value::total_cmp);
    classes.dedup();
    let y = values
        .iter()
        .map(|v| classes.binary_search_by(|c| c.total_cmp(v)).expect("class present"))
        .collect();
    Ok((classes, y))
}

/// Field for a transformer output: a feature-role vector column.
pub(crate) fn feature_field(name: &str, dim: usize) -> crate::frame::Field {
    crate::frame::Field::new(name, DType::Vector(dim), ColumnRole::Feature)
}
