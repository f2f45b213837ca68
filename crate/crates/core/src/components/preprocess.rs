//! Row cleaning, filtering, type changes and expression columns.

use crate::flow::{ParamValue, StagePhase};
use crate::frame::{Column, ColumnRole, DType, Field, Frame, Value};
use crate::sql::{compile_expr, eval_expr_column, SqlType};

use super::{choice, data_err, ComponentError, ComponentSpec, JobIo, ParamType, PhaseRule, PortKind, Registry, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CleanPolicy {
    DropNull,
    Fill(Value),
    /// Drops rows whose |z| exceeds the bound (sample standard deviation).
    DropOutlier { zmax: f64 },
}

fn target_columns<'f>(frame: &'f Frame, columns: &'f Option<Vec<String>>) -> Result<Vec<&'f str>> {
    match columns {
        Some(cols) => {
            for c in cols {
                frame.require(c)?;
            }
            Ok(cols.iter().map(String::as_str).collect())
        }
        None => Ok(frame.fields().iter().map(|f| f.name.as_str()).collect()),
    }
}

fn column_from(dtype: DType, values: Vec<Value>) -> Result<Column> {
    let mut col = Column::with_capacity(dtype, values.len());
    for v in values {
        col.push(v)?;
    }
    Ok(col)
}

pub fn clean_rows(frame: &Frame, policy: &CleanPolicy, columns: &Option<Vec<String>>) -> Result<Frame> {
    let targets = target_columns(frame, columns)?;
    let n = frame.row_count();
    match policy {
        CleanPolicy::DropNull => {
            let keep: Vec<bool> = (0..n)
                .map(|r| targets.iter().all(|c| !frame.column(c).expect("checked").is_null(r)))
                .collect();
            Ok(frame.filter(&keep))
        }
        CleanPolicy::Fill(fill) => {
            let mut out = frame.clone();
            for name in targets {
                let (field, col) = frame.require(name)?;
                if (0..n).all(|r| !col.is_null(r)) {
                    continue;
                }
                let values = (0..n).map(|r| if col.is_null(r) { fill.clone() } else { col.value(r) }).collect();
                let filled = column_from(field.dtype, values)
                    .map_err(|_| data_err(format!("fill value {fill} does not fit column `{name}` ({})", field.dtype)))?;
                out = out.with_column(field.clone(), filled)?;
            }
            Ok(out)
        }
        CleanPolicy::DropOutlier { zmax } => {
            let mut keep = vec![true; n];
            for name in targets {
                let (field, col) = frame.require(name)?;
                if !field.dtype.is_numeric() {
                    if columns.is_some() {
                        return Err(data_err(format!("outlier check needs a numeric column, `{name}` is {}", field.dtype)));
                    }
                    continue;
                }
                let xs: Vec<f64> = (0..n).filter_map(|r| col.f64_at(r)).collect();
                if xs.len() < 2 {
                    continue;
                }
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                let sd = var.sqrt();
                if sd == 0.0 {
                    continue;
                }
                for (r, k) in keep.iter_mut().enumerate() {
                    if let Some(x) = col.f64_at(r) {
                        if ((x - mean) / sd).abs() > *zmax {
                            *k = false;
                        }
                    }
                }
            }
            Ok(frame.filter(&keep))
        }
    }
}

/// Keeps rows where the boolean predicate is true (null counts as false).
pub fn filter_rows(frame: &Frame, predicate: &str) -> Result<Frame> {
    let (expr, ty) = compile_expr(predicate, frame.schema()).map_err(crate::sql::QueryError::Issues)?;
    if !matches!(ty, SqlType::Bool | SqlType::Null) {
        return Err(data_err(format!("predicate must be boolean, `{predicate}` is {ty:?}")));
    }
    let values = eval_expr_column(&expr, frame)?;
    let keep: Vec<bool> = values.iter().map(|v| matches!(v, Value::Bool(true))).collect();
    Ok(frame.filter(&keep))
}

fn cast(v: Value, to: DType, row: usize, name: &str) -> Result<Value> {
    let fail = |v: &Value| data_err(format!("column `{name}` row {row}: cannot convert `{v}` to {to}"));
    Ok(match (v, to) {
        (Value::Null, _) => Value::Null,
        (v, DType::Utf8) => Value::Str(v.render()),
        (Value::Int(i), DType::Float64) => Value::Float(i as f64),
        (Value::Float(f), DType::Int64) if f.fract() == 0.0 && f.abs() < 9.2e18 => Value::Int(f as i64),
        (Value::Bool(b), DType::Int64) => Value::Int(b as i64),
        (Value::Int(i), DType::Boolean) if i == 0 || i == 1 => Value::Bool(i == 1),
        (Value::Str(s), DType::Int64) => Value::Int(s.trim().parse().map_err(|_| fail(&Value::Str(s.clone())))?),
        (Value::Str(s), DType::Float64) => Value::Float(s.trim().parse().map_err(|_| fail(&Value::Str(s.clone())))?),
        (Value::Str(s), DType::Boolean) if s == "true" || s == "false" => Value::Bool(s == "true"),
        (v, _) if v_dtype_matches(&v, to) => v,
        (v, _) => return Err(fail(&v)),
    })
}

fn v_dtype_matches(v: &Value, to: DType) -> bool {
    matches!(
        (v, to),
        (Value::Int(_), DType::Int64) | (Value::Float(_), DType::Float64) | (Value::Bool(_), DType::Boolean)
    )
}

pub fn change_type(frame: &Frame, column: &str, to: DType) -> Result<Frame> {
    if matches!(to, DType::Vector(_)) {
        return Err(data_err("cannot convert to a vector type"));
    }
    let (field, col) = frame.require(column)?;
    let values = (0..col.len()).map(|r| cast(col.value(r), to, r, column)).collect::<Result<Vec<_>>>()?;
    let new = column_from(to, values)?;
    Ok(frame.with_column(Field::new(column, to, field.role), new)?)
}

/// Adds (or replaces) `output` with a row-level expression's values.
pub fn apply_expression(frame: &Frame, expression: &str, output: &str) -> Result<Frame> {
    let (expr, ty) = compile_expr(expression, frame.schema()).map_err(crate::sql::QueryError::Issues)?;
    let values = eval_expr_column(&expr, frame)?;
    let col = column_from(ty.dtype(), values)?;
    let role = match ty.dtype() {
        DType::Vector(_) => ColumnRole::Feature,
        _ => ColumnRole::Plain,
    };
    Ok(frame.with_column(Field::new(output, ty.dtype(), role), col)?)
}

fn scalar_value(p: &ParamValue) -> Value {
    match p {
        ParamValue::Bool(b) => Value::Bool(*b),
        ParamValue::Int(i) => Value::Int(*i),
        ParamValue::Float(f) => Value::Float(*f),
        ParamValue::Str(s) => Value::Str(s.clone()),
        ParamValue::List(_) => Value::Null,
    }
}

pub(super) fn register(r: &mut Registry) {
    let pre = PhaseRule::Stage(StagePhase::Preprocess);
    r.builtin(
        ComponentSpec::new("clean_rows", pre, "Drop or fill nulls, or drop numeric outliers.")
            .optional("policy", choice(&["drop_null", "fill", "drop_outlier"]), Some("drop_null".into()), "cleaning policy")
            .optional("columns", ParamType::StrList, None, "columns to inspect (default: all)")
            .optional("fill_value", ParamType::Scalar, None, "replacement for nulls under `fill`")
            .optional("zmax", ParamType::Float, Some(3.0.into()), "largest |z| kept under `drop_outlier`")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let policy = match p.str("policy")? {
                "fill" => CleanPolicy::Fill(scalar_value(p.get("fill_value").ok_or_else(|| ComponentError::Param {
                    name: "fill_value".into(),
                    message: "is required when policy is fill".into(),
                })?)),
                "drop_outlier" => {
                    let zmax = p.float("zmax")?;
                    if zmax.is_nan() || zmax <= 0.0 {
                        return Err(ComponentError::Param { name: "zmax".into(), message: "must be positive".into() });
                    }
                    CleanPolicy::DropOutlier { zmax }
                }
                _ => CleanPolicy::DropNull,
            };
            let columns = p.str_list("columns");
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                io.emit_frame("out", clean_rows(&f, &policy, &columns)?)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("filter_rows", pre, "Keep rows matching a boolean expression.")
            .required("predicate", ParamType::Str, "boolean expression over the input columns")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let predicate = p.str("predicate")?.to_string();
            crate::sql::parse_expr(&predicate)
                .map_err(|e| ComponentError::Param { name: "predicate".into(), message: e.to_string() })?;
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                io.emit_frame("out", filter_rows(&f, &predicate)?)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("change_type", pre, "Convert one column to another dtype.")
            .required("column", ParamType::Str, "column to convert")
            .required("dtype", choice(&["int64", "float64", "boolean", "utf8"]), "target dtype")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let column = p.str("column")?.to_string();
            let to = DType::parse(p.str("dtype")?)?;
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                io.emit_frame("out", change_type(&f, &column, to)?)
            }))
        },
    );
    r.builtin(
        ComponentSpec::new("udf", PhaseRule::Stage(StagePhase::Feature), "Add a column computed by a row-level expression.")
            .required("expression", ParamType::Str, "expression over the input columns")
            .required("output_col", ParamType::Str, "name of the new column")
            .input("in", PortKind::Frame, true)
            .output("out", PortKind::Frame),
        |p| {
            let expression = p.str("expression")?.to_string();
            crate::sql::parse_expr(&expression)
                .map_err(|e| ComponentError::Param { name: "expression".into(), message: e.to_string() })?;
            let output = p.str("output_col")?.to_string();
            Ok(Box::new(move |io: &mut JobIo<'_>| {
                let f = io.frame("in")?;
                io.emit_frame("out", apply_expression(&f, &expression, &output)?)
            }))
        },
    );
}
