//! Column-at-a-time query evaluation.

use std::collections::HashMap;

use super::ast::*;
use super::catalog::Catalog;
use super::check::{analyze, check_statement, Analysis, OrderKey, OutputSource};
use super::parser::parse_sql;
use super::QueryIssue;
use crate::frame::{Column, Field, Frame, FrameError, Value};

/// Row cap applied when the caller does not choose one.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("{}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Issues(Vec<QueryIssue>),
    #[error("division by zero at row {row}")]
    DivisionByZero { row: usize },
    #[error("integer overflow at row {row}")]
    Overflow { row: usize },
    #[error("result frame: {0}")]
    Frame(String),
}

impl From<FrameError> for QueryError {
    fn from(e: FrameError) -> Self {
        QueryError::Frame(e.to_string())
    }
}

type QResult<T> = Result<T, QueryError>;

pub(crate) fn arith(op: BinOp, a: &Value, b: &Value, row: usize) -> QResult<Value> {
    use Value::*;
    Ok(match (a, b) {
        (Null, _) | (_, Null) => Null,
        (Int(x), Int(y)) if op != BinOp::Div => {
            let r = match op {
                BinOp::Add => x.checked_add(*y),
                BinOp::Sub => x.checked_sub(*y),
                _ => x.checked_mul(*y),
            };
            Int(r.ok_or(QueryError::Overflow { row })?)
        }
        _ => {
            let (x, y) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
            Float(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                _ => {
                    if y == 0.0 {
                        return Err(QueryError::DivisionByZero { row });
                    }
                    x / y
                }
            })
        }
    })
}

pub(crate) fn compare(op: BinOp, a: &Value, b: &Value) -> Value {
    if a.is_null() || b.is_null() {
        return Value::Null;
    }
    let ord = a.total_cmp(b);
    Value::Bool(match op {
        BinOp::Eq => ord.is_eq(),
        BinOp::Ne => ord.is_ne(),
        BinOp::Lt => ord.is_lt(),
        BinOp::Le => ord.is_le(),
        BinOp::Gt => ord.is_gt(),
        _ => ord.is_ge(),
    })
}

/// Three-valued AND / OR.
pub(crate) fn logic(op: BinOp, a: &Value, b: &Value) -> Value {
    let (x, y) = (as_bool(a), as_bool(b));
    match op {
        BinOp::And => match (x, y) {
            (Some(false), _) | (_, Some(false)) => Value::Bool(false),
            (Some(true), Some(true)) => Value::Bool(true),
            _ => Value::Null,
        },
        _ => match (x, y) {
            (Some(true), _) | (_, Some(true)) => Value::Bool(true),
            (Some(false), Some(false)) => Value::Bool(false),
            _ => Value::Null,
        },
    }
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    }
}

fn literal(l: &Literal) -> Value {
    match l {
        Literal::Null => Value::Null,
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Int(i) => Value::Int(*i),
        Literal::Float(x) => Value::Float(*x),
        Literal::Str(s) => Value::Str(s.clone()),
    }
}

trait Env {
    fn len(&self) -> usize;
    fn column(&self, name: &str) -> Vec<Value>;
    fn aggregate(&self, e: &Expr) -> Vec<Value>;
    /// Source row used in error messages.
    fn row_id(&self, i: usize) -> usize;
}

struct RowEnv<'a> {
    frame: &'a Frame,
    rows: &'a [usize],
}

impl Env for RowEnv<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn column(&self, name: &str) -> Vec<Value> {
        let col = self.frame.column(name).expect("checked column");
        self.rows.iter().map(|&r| col.value(r)).collect()
    }

    fn aggregate(&self, _: &Expr) -> Vec<Value> {
        unreachable!("aggregates are rejected in row context by the checker")
    }

    fn row_id(&self, i: usize) -> usize {
        self.rows[i]
    }
}

struct GroupEnv<'a> {
    keys: HashMap<&'a str, Vec<Value>>,
    aggs: HashMap<*const Expr, Vec<Value>>,
    first_rows: Vec<usize>,
}

impl Env for GroupEnv<'_> {
    fn len(&self) -> usize {
        self.first_rows.len()
    }

    fn column(&self, name: &str) -> Vec<Value> {
        self.keys[name].clone()
    }

    fn aggregate(&self, e: &Expr) -> Vec<Value> {
        self.aggs[&(e as *const Expr)].clone()
    }

    fn row_id(&self, i: usize) -> usize {
        self.first_rows[i]
    }
}

fn eval(e: &Expr, env: &dyn Env) -> QResult<Vec<Value>> {
    let n = env.len();
    match &e.kind {
        ExprKind::Lit(l) => Ok(vec![literal(l); n]),
        ExprKind::Column(c) => Ok(env.column(c)),
        ExprKind::Agg(..) => Ok(env.aggregate(e)),
        ExprKind::Unary(op, inner) => {
            let mut v = eval(inner, env)?;
            for (i, x) in v.iter_mut().enumerate() {
                *x = match (op, &*x) {
                    (_, Value::Null) => Value::Null,
                    (UnOp::Neg, Value::Int(a)) => {
                        Value::Int(a.checked_neg().ok_or(QueryError::Overflow { row: env.row_id(i) })?)
                    }
                    (UnOp::Neg, Value::Float(a)) => Value::Float(-a),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    _ => Value::Null,
                };
            }
            Ok(v)
        }
        ExprKind::Binary(op, l, r) => {
            let lv = eval(l, env)?;
            let rv = eval(r, env)?;
            let mut out = Vec::with_capacity(n);
            if op.is_arithmetic() {
                for (i, (a, b)) in lv.iter().zip(&rv).enumerate() {
                    out.push(arith(*op, a, b, env.row_id(i))?);
                }
            } else if op.is_comparison() {
                out.extend(lv.iter().zip(&rv).map(|(a, b)| compare(*op, a, b)));
            } else {
                out.extend(lv.iter().zip(&rv).map(|(a, b)| logic(*op, a, b)));
            }
            Ok(out)
        }
    }
}

/// Evaluates a checked row-level expression over every row of `frame`.
pub fn eval_expr_column(expr: &Expr, frame: &Frame) -> QResult<Vec<Value>> {
    let rows: Vec<usize> = (0..frame.row_count()).collect();
    eval(expr, &RowEnv { frame, rows: &rows })
}

#[derive(Hash, PartialEq, Eq)]
enum KeyPart {
    Null,
    Bool(bool),
    Int(i64),
    Float(u64),
    Str(String),
}

fn key_part(v: &Value) -> KeyPart {
    match v {
        Value::Bool(b) => KeyPart::Bool(*b),
        Value::Int(i) => KeyPart::Int(*i),
        Value::Float(f) => KeyPart::Float((f + 0.0).to_bits()),
        Value::Str(s) => KeyPart::Str(s.clone()),
        _ => KeyPart::Null,
    }
}

fn collect_aggs<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match &e.kind {
        ExprKind::Agg(..) => out.push(e),
        ExprKind::Unary(_, x) => collect_aggs(x, out),
        ExprKind::Binary(_, l, r) => {
            collect_aggs(l, out);
            collect_aggs(r, out);
        }
        _ => {}
    }
}

fn fold(func: AggFunc, values: Option<&[Value]>, group_of: &[usize], groups: usize, rows: &[usize]) -> QResult<Vec<Value>> {
    let Some(values) = values else {
        let mut counts = vec![0i64; groups];
        for &g in group_of {
            counts[g] += 1;
        }
        return Ok(counts.into_iter().map(Value::Int).collect());
    };
    let mut acc = vec![Value::Null; groups];
    let mut fsum = vec![0.0f64; groups];
    let mut count = vec![0i64; groups];
    for (i, v) in values.iter().enumerate() {
        if v.is_null() {
            continue;
        }
        let g = group_of[i];
        count[g] += 1;
        match func {
            AggFunc::Count => {}
            AggFunc::Avg => fsum[g] += v.as_f64().unwrap_or(0.0),
            AggFunc::Sum => {
                acc[g] = match (&acc[g], v) {
                    (Value::Null, x) => x.clone(),
                    (Value::Int(a), Value::Int(b)) => {
                        Value::Int(a.checked_add(*b).ok_or(QueryError::Overflow { row: rows[i] })?)
                    }
                    (a, b) => Value::Float(a.as_f64().unwrap_or(0.0) + b.as_f64().unwrap_or(0.0)),
                }
            }
            AggFunc::Min | AggFunc::Max => {
                let replace = acc[g].is_null() || {
                    let o = v.total_cmp(&acc[g]);
                    if func == AggFunc::Min { o.is_lt() } else { o.is_gt() }
                };
                if replace {
                    acc[g] = v.clone();
                }
            }
        }
    }
    Ok(match func {
        AggFunc::Count => count.into_iter().map(Value::Int).collect(),
        AggFunc::Avg => fsum
            .into_iter()
            .zip(count)
            .map(|(s, c)| if c == 0 { Value::Null } else { Value::Float(s / c as f64) })
            .collect(),
        _ => acc,
    })
}

fn build_column(ty_dtype: crate::frame::DType, values: Vec<Value>) -> QResult<Column> {
    let mut col = Column::with_capacity(ty_dtype, values.len());
    for v in values {
        col.push(v)?;
    }
    Ok(col)
}

fn evaluate(an: &Analysis, frame: &Frame, top_k: usize) -> QResult<Frame> {
    let all: Vec<usize> = (0..frame.row_count()).collect();
    let rows: Vec<usize> = match &an.filter {
        None => all,
        Some(w) => {
            let keep = eval(w, &RowEnv { frame, rows: &all })?;
            all.into_iter().zip(keep).filter(|(_, k)| *k == Value::Bool(true)).map(|(r, _)| r).collect()
        }
    };

    // values per output column, one entry per result row
    let mut out_values: Vec<Option<Vec<Value>>> = Vec::with_capacity(an.outputs.len());
    let order_values: Option<Vec<Value>>;
    let result_rows: Vec<usize>;

    if an.aggregate {
        let row_env = RowEnv { frame, rows: &rows };
        let key_cols: Vec<Vec<Value>> = an
            .group_cols
            .iter()
            .map(|&c| rows.iter().map(|&r| frame.columns()[c].value(r)).collect())
            .collect();
        let mut group_ids: HashMap<Vec<KeyPart>, usize> = HashMap::new();
        let mut group_of = Vec::with_capacity(rows.len());
        let mut first_rows = Vec::new();
        let mut first_idx = Vec::new();
        for i in 0..rows.len() {
            let key: Vec<KeyPart> = key_cols.iter().map(|c| key_part(&c[i])).collect();
            let next = group_ids.len();
            let g = *group_ids.entry(key).or_insert(next);
            if g == next {
                first_rows.push(rows[i]);
                first_idx.push(i);
            }
            group_of.push(g);
        }
        let mut groups = first_rows.len();
        if an.group_cols.is_empty() && groups == 0 && !an.has_avg {
            // a global aggregate over no rows still yields one row
            groups = 1;
            first_rows.push(0);
        }
        let mut aggs = HashMap::new();
        for out in &an.outputs {
            let OutputSource::Expr(e) = &out.source else { continue };
            let mut nodes = Vec::new();
            collect_aggs(e, &mut nodes);
            for node in nodes {
                let ExprKind::Agg(func, arg) = &node.kind else { unreachable!() };
                let vals = match arg {
                    Some(a) => Some(eval(a, &row_env)?),
                    None => None,
                };
                aggs.insert(node as *const Expr, fold(*func, vals.as_deref(), &group_of, groups, &rows)?);
            }
        }
        let mut keys = HashMap::new();
        for (gi, &c) in an.group_cols.iter().enumerate() {
            let name = frame.fields()[c].name.as_str();
            keys.insert(name, first_idx.iter().map(|&i| key_cols[gi][i].clone()).collect());
        }
        let env = GroupEnv { keys, aggs, first_rows };
        for out in &an.outputs {
            let OutputSource::Expr(e) = &out.source else { unreachable!("no * under aggregation") };
            out_values.push(Some(eval(e, &env)?));
        }
        order_values = an.order.map(|(k, _)| match k {
            OrderKey::Output(i) => out_values[i].clone().expect("computed"),
            OrderKey::Group(g) => env.column(&frame.fields()[an.group_cols[g]].name),
            OrderKey::Source(_) => unreachable!("source keys only without aggregation"),
        });
        result_rows = Vec::new();
    } else {
        let env = RowEnv { frame, rows: &rows };
        for out in &an.outputs {
            out_values.push(match &out.source {
                OutputSource::Column(_) => None,
                OutputSource::Expr(e) => Some(eval(e, &env)?),
            });
        }
        order_values = an.order.map(|(k, _)| match k {
            OrderKey::Output(i) => match &an.outputs[i].source {
                OutputSource::Column(c) => rows.iter().map(|&r| frame.columns()[*c].value(r)).collect(),
                OutputSource::Expr(_) => out_values[i].clone().expect("computed"),
            },
            OrderKey::Source(c) => rows.iter().map(|&r| frame.columns()[c].value(r)).collect(),
            OrderKey::Group(_) => unreachable!("group keys only under aggregation"),
        });
        result_rows = rows;
    }

    let n = out_values
        .iter()
        .flatten()
        .map(Vec::len)
        .next()
        .unwrap_or(result_rows.len());
    let mut order: Vec<usize> = (0..n).collect();
    if let (Some(vals), Some((_, desc))) = (&order_values, an.order) {
        order.sort_by(|&a, &b| {
            let o = vals[a].total_cmp(&vals[b]);
            if desc { o.reverse() } else { o }
        });
    }
    let cap = an.limit.map_or(top_k, |l| (l.min(usize::MAX as u64) as usize).min(top_k));
    order.truncate(cap);

    let mut fields = Vec::with_capacity(an.outputs.len());
    let mut columns = Vec::with_capacity(an.outputs.len());
    for (out, vals) in an.outputs.iter().zip(out_values) {
        let dtype = out.ty.dtype();
        fields.push(Field::plain(out.name.clone(), dtype));
        columns.push(match (&out.source, vals) {
            (OutputSource::Column(c), _) => {
                let src: Vec<usize> = order.iter().map(|&i| result_rows[i]).collect();
                frame.columns()[*c].take(&src)
            }
            (_, Some(v)) => build_column(dtype, order.iter().map(|&i| v[i].clone()).collect())?,
            (_, None) => unreachable!(),
        });
    }
    Ok(Frame::new(fields, columns)?)
}

/// Runs a statement after checking it; nothing executes unless the check
/// is clean.
pub fn execute_query(stmt: &Statement, catalog: &Catalog, top_k: usize) -> QResult<Frame> {
    let issues = check_statement(stmt, catalog);
    if !issues.is_empty() {
        return Err(QueryError::Issues(issues));
    }
    let Statement::Select(sel) = stmt else { unreachable!("forbidden statements always fail the check") };
    let frame = catalog.get(&sel.from.name).expect("checked table");
    let an = analyze(sel, frame.schema()).map_err(QueryError::Issues)?;
    evaluate(&an, frame, top_k)
}

pub fn run_query(text: &str, catalog: &Catalog, top_k: usize) -> QResult<Frame> {
    let stmt = parse_sql(text).map_err(|i| QueryError::Issues(vec![i]))?;
    execute_query(&stmt, catalog, top_k)
}
