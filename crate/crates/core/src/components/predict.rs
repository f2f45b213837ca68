//! Applying fitted models, and accuracy metrics.

use crate::flow::StagePhase;
use crate::frame::{Column, ColumnRole, DType, Field, Frame, Value};

use super::artifact::ModelArtifact;
use super::forest::forest_predict;
use super::logreg::{argmax, predict_proba};
use super::{data_err, label_name, vectors, ComponentSpec, JobIo, ParamType, PhaseRule, PortKind, Registry, Result};

fn class_column(classes: &[Value], picks: &[usize]) -> Result<(DType, Column)> {
    let dtype = if classes.iter().all(|c| matches!(c, Value::Int(_))) { DType::Int64 } else { DType::Utf8 };
    let mut col = Column::with_capacity(dtype, picks.len());
    for &p in picks {
        let v = match (&classes[p], dtype) {
            (Value::Int(i), DType::Int64) => Value::Int(*i),
            (other, _) => Value::Str(other.render()),
        };
        col.push(v)?;
    }
    Ok((dtype, col))
}

/// Adds the prediction column (label dtype) and, for logistic regression,
/// a class-probability vector column.
pub fn predict_frame(model: &ModelArtifact, frame: &Frame, features: &str, prediction: &str, probability: &str) -> Result<Frame> {
    let (dim, xs) = vectors(frame, features)?;
    if dim != model.feature_dim() {
        return Err(data_err(format!("model expects {} features, `{features}` has {dim}", model.feature_dim())));
    }
    let (picks, probs): (Vec<usize>, Option<Vec<Vec<f64>>>) = match model {
        ModelArtifact::LogReg(m) => {
            let probs: Vec<Vec<f64>> = xs.iter().map(|x| predict_proba(m, x)).collect();
            (probs.iter().map(|p| argmax(p)).collect(), Some(probs))
        }
        ModelArtifact::Forest(m) => (xs.iter().map(|x| forest_predict(m, x)).collect(), None),
        ModelArtifact::Transformer(_) => return Err(data_err("`model` input holds a transformer, not a classifier")),
    };
    let (dtype, col) = class_column(model.classes(), &picks)?;
    let mut out = frame.with_column(Field::new(prediction, dtype, ColumnRole::Plain), col)?;
    if let Some(p) = probs {
        let k = model.classes().len();
        out = out.with_column(Field::plain(probability, DType::Vector(k)), Column::from_vectors(k, p))?;
    }
    Ok(out)
}

/// Per-class counts; the class with no support still appears if predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rows: usize,
    pub correct: usize,
    pub per_class: Vec<ClassMetrics>,
}

impl Metrics {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.rows as f64
    }

    /// One row per class then an `overall` row. `accuracy` is recall for
    /// class rows.
    pub fn to_frame(&self) -> Result<Frame> {
        let mut names: Vec<&str> = self.per_class.iter().map(|c| c.class.as_str()).collect();
        names.push("overall");
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let mut support: Vec<Option<i64>> = self.per_class.iter().map(|c| Some(c.support as i64)).collect();
        let mut predicted: Vec<Option<i64>> = self.per_class.iter().map(|c| Some(c.predicted as i64)).collect();
        let mut correct: Vec<Option<i64>> = self.per_class.iter().map(|c| Some(c.correct as i64)).collect();
        let mut acc: Vec<Option<f64>> = self.per_class.iter().map(|c| ratio(c.correct, c.support)).collect();
        support.push(Some(self.rows as i64));
        predicted.push(Some(self.rows as i64));
        correct.push(Some(self.correct as i64));
        acc.push(ratio(self.correct, self.rows));
        Ok(Frame::new(
            vec![
                Field::plain("class", DType::Utf8),
                Field::plain("support", DType::Int64),
                Field::plain("predicted", DType::Int64),
                Field::plain("correct", DType::Int64),
                Field::plain("accuracy", DType::Float64),
            ],
            vec![
                Column::Utf8(names.into_iter().map(|s| Some(s.to_string())).collect()),
                Column::Int64(support),
                Column::Int64(predicted),
                Column::Int64(correct),
                Column::Float64(acc),
            ],
        )?)
    }
}

pub fn evaluate(frame: &Frame, label: &str, prediction: &str) -> Result<Metrics> {
    let (lf, lc) = frame.require(label)?;
    let (pf, pc) = frame.require(prediction)?;
    if lf.dtype != pf.dtype {
        return Err(data_err(format!("`{label}` is {} but `{prediction}` is {}", lf.dtype, pf.dtype)));
    }
    if frame.row_count() == 0 {
        return Err(data_err("cannot evaluate an empty frame"));
    }
    let mut classes: Vec<Value> = (0..lc.len()).map(|r| lc.value(r)).chain((0..pc.len()).map(|r| pc.value(r))).collect();
    classes.sort_by(Value::total_cmp);
    classes.dedup();
    let mut per_class: Vec<ClassMetrics> = classes
        .iter()
        .map(|c| ClassMetrics { class: c.render(), support: 0, predicted: 0, correct: 0 })
        .collect();
    let pos = |v: &Value| classes.binary_search_by(|c| c.total_cmp(v)).expect("collected");
    let mut correct = 0;
    for r in 0..frame.row_count() {
        let (a, b) = (lc.value(r), pc.value(r));
        per_class[pos(&a)].support += 1;
        per_class[pos(&b)].predicted += 1;
        if a == b && !a.is_null() {
            per_class[pos(&a)].correct += 1;
            correct += 1;
        }
    }
    Ok(Metrics { rows: frame.row_count(), correct, per_class })
}

pub(super) fn register(r: &mut Registry) {
    let phase = PhaseRule::Stage(StagePhase::Predict);
    r.builtin(
        ComponentSpec::new("predict", phase, "Apply a fitted classifier to a feature column.")
            .optional("features_col", ParamType::Str, Some("features".into()), "vector column of features")
            .optional("prediction_col", ParamType::Str, Some("prediction".into()), "column for predicted labels")
            .optional("probability_col", ParamType::Str, Some("probability".into()), "column for class probabilities")
            .input("model", PortKind::Artifact, true)
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let features = p.str("features_col")?.to_string();
            let prediction = p.str("prediction_col")?.to_string();
            let probability = p.str("probability_col")?.to_string();
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let model = io.artifact("model")?;
                let f = io.frame("in")?;
                io.emit_frame("out", predict_frame(&model, &f, &features, &prediction, &probability)?)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("evaluate", phase, "Compare predictions with labels; emits per-class and overall accuracy.")
            .optional("label_col", ParamType::Str, None, "label column (default: the label-role column)")
            .optional("prediction_col", ParamType::Str, Some("prediction".into()), "predicted label column")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let label = p.opt_str("label_col").map(str::to_string);
            let prediction = p.str("prediction_col")?.to_string();
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                let label = label_name(&f, label.as_deref())?.to_string();
                let m = evaluate(&f, &label, &prediction)?;
                io.emit_frame("out", m.to_frame()?)
            }))
        },
    );
}
