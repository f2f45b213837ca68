//! Routing components: fork, join, split and delay. Fork, join and delay
//! take their stage from their inputs.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::StagePhase;
use crate::frame::{Column, ColumnRole, DType, Frame};

use super::{data_err, feature_field, ComponentError, ComponentSpec, JobIo, ParamType, PhaseRule, PortKind, Registry, Result};

pub const FAN: usize = 8;

/// Columns a join picks from one frame when none are named: feature-role
/// columns, or failing that every non-label numeric or vector column.
fn default_join_columns(frame: &Frame) -> Vec<&str> {
    let features: Vec<&str> = frame
        .fields()
        .iter()
        .filter(|f| f.role == ColumnRole::Feature)
        .map(|f| f.name.as_str())
        .collect();
    if !features.is_empty() {
        return features;
    }
    frame
        .fields()
        .iter()
        .filter(|f| f.role != ColumnRole::Label && (f.dtype.is_numeric() || matches!(f.dtype, DType::Vector(_))))
        .map(|f| f.name.as_str())
        .collect()
}

/// Concatenates the chosen columns of every frame into one vector column;
/// the first frame's label column, if any, is carried along.
pub fn join_frames(frames: &[&Frame], output: &str, columns: Option<&[String]>) -> Result<Frame> {
    let first = frames.first().ok_or_else(|| data_err("join needs at least one input"))?;
    let n = first.row_count();
    if let Some(bad) = frames.iter().find(|f| f.row_count() != n) {
        return Err(data_err(format!("join inputs differ in length: {n} vs {}", bad.row_count())));
    }
    let mut picked: Vec<&Column> = Vec::new();
    match columns {
        Some(names) => {
            for name in names {
                let col = frames
                    .iter()
                    .find_map(|f| f.column(name))
                    .ok_or_else(|| data_err(format!("join column `{name}` is in no input")))?;
                picked.push(col);
            }
        }
        None => {
            for f in frames {
                for name in default_join_columns(f) {
                    picked.push(f.column(name).expect("listed from schema"));
                }
            }
        }
    }
    if picked.is_empty() {
        return Err(data_err("join found no numeric or feature columns"));
    }
    let dim: usize = picked
        .iter()
        .map(|c| match c.dtype() {
            DType::Vector(d) => Ok(d),
            DType::Int64 | DType::Float64 => Ok(1),
            other => Err(data_err(format!("join cannot use a {other} column"))),
        })
        .sum::<Result<usize>>()?;
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let mut row = Vec::with_capacity(dim);
        for c in &picked {
            match c {
                Column::Vector { cells, .. } => {
                    row.extend_from_slice(cells[r].as_deref().ok_or_else(|| data_err(format!("null vector at row {r}")))?)
                }
                other => row.push(other.f64_at(r).ok_or_else(|| data_err(format!("null value at row {r}")))?),
            }
        }
        rows.push(row);
    }
    let mut fields = Vec::new();
    let mut cols = Vec::new();
    if let Some(label) = first.label_name().filter(|l| *l != output) {
        let (f, c) = first.require(label)?;
        fields.push(f.clone());
        cols.push(c.clone());
    }
    fields.push(feature_field(output, dim));
    cols.push(Column::from_vectors(dim, rows));
    Ok(Frame::new(fields, cols)?)
}

/// Seeded shuffle split; each part keeps the original row order.
pub fn split_frame(frame: &Frame, fraction: f64, seed: u64) -> (Frame, Frame) {
    let n = frame.row_count();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * fraction).round() as usize;
    let (mut a, mut b) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    (frame.take(&a), frame.take(&b))
}

pub fn delay_for(base_ms: f64, ms_per_krow: f64, rows: usize) -> Duration {
    Duration::from_secs_f64((base_ms + ms_per_krow * rows as f64 / 1000.0).max(0.0) / 1000.0)
}

pub(super) fn register(r: &mut Registry) {
    let mut fork = ComponentSpec::new("fork", PhaseRule::Transparent, "Publish the input on up to eight outputs without copying.")
        .input("in", PortKind::Frame, true);
    for i in 0..FAN {
        fork = fork.output(&format!("out{i}"), PortKind::Frame);
    }
    r.builtin(fork, |_| {
        Ok(Box::new(|io: &mut JobIo<'_>| {
            let h = io.input("in").cloned().ok_or_else(|| ComponentError::MissingInput("in".into()))?;
            for i in 0..FAN {
                io.emit_handle(&format!("out{i}"), &h)?;
            }
            Ok(())
        }))
    });

    let mut join = ComponentSpec::new("join", PhaseRule::Transparent, "Concatenate feature columns of row-aligned inputs into one vector column.")
        .optional("output_col", ParamType::Str, Some("features".into()), "name of the assembled vector column")
        .optional("columns", ParamType::StrList, None, "columns to assemble, in order (default: feature columns)");
    for i in 0..FAN {
        join = join.input(&format!("in{i}"), PortKind::Frame, i == 0);
    }
    r.builtin(join.output("out", PortKind::Frame), |p| {
        let output = p.str("output_col")?.to_string();
        let columns = p.str_list("columns");
        Ok(Box::new(move |io: &mut JobIo<'_>| {
            let mut frames = Vec::new();
            for i in 0..FAN {
                let port = format!("in{i}");
                if io.has_input(&port) {
                    frames.push(io.frame(&port)?);
                }
            }
            let refs: Vec<&Frame> = frames.iter().map(|f| f.as_ref()).collect();
            io.emit_frame("out", join_frames(&refs, &output, columns.as_deref())?)
        }))
    });

    r.builtin(
        ComponentSpec::new("split", PhaseRule::Stage(StagePhase::Preprocess), "Seeded random train/test split.")
            .optional("fraction", ParamType::Float, Some(0.8.into()), "share of rows sent to `train`")
            .optional("seed", ParamType::Int, Some(7i64.into()), "shuffle seed")
            .input("in", PortKind::Frame, true)
            .output("train", PortKind::Frame)
            .output("test", PortKind::Frame),
        |p| {
            let fraction = p.float("fraction")?;
            if !(0.0..=1.0).contains(&fraction) {
                return Err(ComponentError::Param { name: "fraction".into(), message: "must be within [0, 1]".into() });
            }
            let seed = p.int("seed")? as u64;
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                let (train, test) = split_frame(&f, fraction, seed);
                io.emit_frame("train", train)?;
                io.emit_frame("test", test)
            }))
        },
    );

    r.builtin(
        ComponentSpec::new("delay", PhaseRule::Transparent, "Pass the input through after a size-dependent pause.")
            .optional("base_ms", ParamType::Float, Some(0.0.into()), "fixed pause in milliseconds")
            .optional("ms_per_krow", ParamType::Float, Some(0.0.into()), "extra milliseconds per thousand rows")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let base = p.float("base_ms")?;
            let per = p.float("ms_per_krow")?;
            if base < 0.0 || per < 0.0 {
                return Err(ComponentError::Param { name: "base_ms".into(), message: "delays must be non-negative".into() });
            }
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let rows = io.frame("in")?.row_count();
                std::thread::sleep(delay_for(base, per, rows));
                let h = io.input("in").cloned().expect("checked by frame()");
                io.emit_handle("out", &h)
            }))
        },
    );
}
