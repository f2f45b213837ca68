//! Row-at-a-time reference interpreter for the SELECT subset, plus a
//! generator of well-typed random queries. It works on its own query tree
//! and only meets the engine through the SQL text it prints.

#![allow(dead_code)]

use std::cmp::Ordering;

use flowforge_core::frame::{Frame, Value};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl Op {
    fn text(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::And => "AND",
            Op::Or => "OR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Agg {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum E {
    Lit(Value),
    Col(String),
    Neg(Box<E>),
    Not(Box<E>),
    Bin(Op, Box<E>, Box<E>),
    Agg(Agg, Option<Box<E>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Proj {
    Star,
    Expr(E, Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub projections: Vec<Proj>,
    pub table: String,
    pub filter: Option<E>,
    pub group_by: Vec<String>,
    pub order_by: Option<(String, bool)>,
    pub limit: Option<u64>,
}

fn lit_sql(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Bool(b) => if *b { "TRUE".into() } else { "FALSE".into() },
        Value::Int(i) if *i < 0 => format!("(-{})", -i),
        Value::Int(i) => i.to_string(),
        Value::Float(f) if *f < 0.0 => format!("(-{:?})", -f),
        Value::Float(f) => format!("{f:?}"),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Vector(_) => unreachable!(),
    }
}

impl E {
    pub fn sql(&self) -> String {
        match self {
            E::Lit(v) => lit_sql(v),
            E::Col(c) => c.clone(),
            E::Neg(e) => format!("(-{})", e.sql()),
            E::Not(e) => format!("(NOT {})", e.sql()),
            E::Bin(op, l, r) => format!("({} {} {})", l.sql(), op.text(), r.sql()),
            E::Agg(a, arg) => {
                let name = match a {
                    Agg::Count => "COUNT",
                    Agg::Sum => "SUM",
                    Agg::Avg => "AVG",
                    Agg::Min => "MIN",
                    Agg::Max => "MAX",
                };
                match arg {
                    None => format!("{name}(*)"),
                    Some(e) => format!("{name}({})", e.sql()),
                }
            }
        }
    }

    fn has_agg(&self) -> bool {
        match self {
            E::Agg(..) => true,
            E::Neg(e) | E::Not(e) => e.has_agg(),
            E::Bin(_, l, r) => l.has_agg() || r.has_agg(),
            _ => false,
        }
    }

    fn has_avg(&self) -> bool {
        match self {
            E::Agg(Agg::Avg, _) => true,
            E::Neg(e) | E::Not(e) => e.has_avg(),
            E::Bin(_, l, r) => l.has_avg() || r.has_avg(),
            _ => false,
        }
    }
}

impl Query {
    pub fn sql(&self) -> String {
        let proj: Vec<String> = self
            .projections
            .iter()
            .map(|p| match p {
                Proj::Star => "*".to_string(),
                Proj::Expr(e, None) => e.sql(),
                Proj::Expr(e, Some(a)) => format!("{} AS {a}", e.sql()),
            })
            .collect();
        let mut s = format!("SELECT {} FROM {}", proj.join(", "), self.table);
        if let Some(w) = &self.filter {
            s.push_str(&format!(" WHERE {}", w.sql()));
        }
        if !self.group_by.is_empty() {
            s.push_str(&format!(" GROUP BY {}", self.group_by.join(", ")));
        }
        if let Some((k, desc)) = &self.order_by {
            s.push_str(&format!(" ORDER BY {k}{}", if *desc { " DESC" } else { " ASC" }));
        }
        if let Some(l) = self.limit {
            s.push_str(&format!(" LIMIT {l}"));
        }
        s
    }

    fn is_aggregate(&self) -> bool {
        !self.group_by.is_empty() || self.projections.iter().any(|p| matches!(p, Proj::Expr(e, _) if e.has_agg()))
    }
}

// ---- semantics -------------------------------------------------------

/// Nulls first, numbers by IEEE total order, then booleans, then strings.
pub fn order(a: &Value, b: &Value) -> Ordering {
    let rank = |v: &Value| match v {
        Value::Null => 0,
        Value::Int(_) | Value::Float(_) => 1,
        Value::Bool(_) => 2,
        _ => 3,
    };
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => num(a).total_cmp(&num(b)),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        _ => rank(a).cmp(&rank(b)),
    }
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => f64::NAN,
    }
}

fn truth(v: &Value) -> Option<bool> {
    if let Value::Bool(b) = v { Some(*b) } else { None }
}

fn binary(op: Op, a: Value, b: Value) -> Result<Value, String> {
    use Value::*;
    Ok(match op {
        Op::And => match (truth(&a), truth(&b)) {
            (Some(false), _) | (_, Some(false)) => Bool(false),
            (Some(true), Some(true)) => Bool(true),
            _ => Null,
        },
        Op::Or => match (truth(&a), truth(&b)) {
            (Some(true), _) | (_, Some(true)) => Bool(true),
            (Some(false), Some(false)) => Bool(false),
            _ => Null,
        },
        _ if a.is_null() || b.is_null() => Null,
        Op::Add | Op::Sub | Op::Mul => match (&a, &b) {
            (Int(x), Int(y)) => {
                let r = match op {
                    Op::Add => x.checked_add(*y),
                    Op::Sub => x.checked_sub(*y),
                    _ => x.checked_mul(*y),
                };
                Int(r.ok_or("overflow")?)
            }
            _ => Float(match op {
                Op::Add => num(&a) + num(&b),
                Op::Sub => num(&a) - num(&b),
                _ => num(&a) * num(&b),
            }),
        },
        Op::Div => {
            if num(&b) == 0.0 {
                return Err("division by zero".into());
            }
            Float(num(&a) / num(&b))
        }
        cmp => {
            let o = order(&a, &b);
            Bool(match cmp {
                Op::Eq => o == Ordering::Equal,
                Op::Ne => o != Ordering::Equal,
                Op::Lt => o == Ordering::Less,
                Op::Le => o != Ordering::Greater,
                Op::Gt => o == Ordering::Greater,
                _ => o != Ordering::Less,
            })
        }
    })
}

struct Table<'a> {
    names: Vec<&'a str>,
    rows: Vec<Vec<Value>>,
}

impl Table<'_> {
    fn col(&self, name: &str) -> usize {
        self.names.iter().position(|n| *n == name).expect("generated queries use known columns")
    }
}

fn eval_row(e: &E, t: &Table<'_>, row: &[Value]) -> Result<Value, String> {
    Ok(match e {
        E::Lit(v) => v.clone(),
        E::Col(c) => row[t.col(c)].clone(),
        E::Neg(x) => match eval_row(x, t, row)? {
            Value::Int(i) => Value::Int(i.checked_neg().ok_or("overflow")?),
            Value::Float(f) => Value::Float(-f),
            _ => Value::Null,
        },
        E::Not(x) => match eval_row(x, t, row)? {
            Value::Bool(b) => Value::Bool(!b),
            _ => Value::Null,
        },
        E::Bin(op, l, r) => {
            let a = eval_row(l, t, row)?;
            let b = eval_row(r, t, row)?;
            binary(*op, a, b)?
        }
        E::Agg(..) => unreachable!("aggregate in row context"),
    })
}

fn aggregate(agg: Agg, arg: &Option<Box<E>>, t: &Table<'_>, rows: &[&Vec<Value>]) -> Result<Value, String> {
    let Some(arg) = arg else { return Ok(Value::Int(rows.len() as i64)) };
    let mut vals = Vec::new();
    for r in rows {
        let v = eval_row(arg, t, r)?;
        if !v.is_null() {
            vals.push(v);
        }
    }
    Ok(match agg {
        Agg::Count => Value::Int(vals.len() as i64),
        Agg::Avg if vals.is_empty() => Value::Null,
        Agg::Avg => {
            let mut s = 0.0;
            for v in &vals {
                s += num(v);
            }
            Value::Float(s / vals.len() as f64)
        }
        Agg::Sum => match vals.first() {
            None => Value::Null,
            Some(Value::Int(_)) => {
                let mut s: i64 = 0;
                for v in &vals {
                    let Value::Int(i) = v else { unreachable!() };
                    s = s.checked_add(*i).ok_or("overflow")?;
                }
                Value::Int(s)
            }
            Some(first) => {
                let mut s = num(first);
                for v in &vals[1..] {
                    s += num(v);
                }
                Value::Float(s)
            }
        },
        Agg::Min | Agg::Max => {
            let mut best: Option<Value> = None;
            for v in vals {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let o = order(&v, b);
                        if agg == Agg::Min { o == Ordering::Less } else { o == Ordering::Greater }
                    }
                };
                if better {
                    best = Some(v);
                }
            }
            best.unwrap_or(Value::Null)
        }
    })
}

fn eval_group(e: &E, t: &Table<'_>, key_cols: &[String], key: &[Value], rows: &[&Vec<Value>]) -> Result<Value, String> {
    Ok(match e {
        E::Lit(v) => v.clone(),
        E::Col(c) => key[key_cols.iter().position(|k| k == c).expect("grouped column")].clone(),
        E::Agg(a, arg) => aggregate(*a, arg, t, rows)?,
        E::Neg(x) => match eval_group(x, t, key_cols, key, rows)? {
            Value::Int(i) => Value::Int(i.checked_neg().ok_or("overflow")?),
            Value::Float(f) => Value::Float(-f),
            _ => Value::Null,
        },
        E::Not(x) => match eval_group(x, t, key_cols, key, rows)? {
            Value::Bool(b) => Value::Bool(!b),
            _ => Value::Null,
        },
        E::Bin(op, l, r) => {
            let a = eval_group(l, t, key_cols, key, rows)?;
            let b = eval_group(r, t, key_cols, key, rows)?;
            binary(*op, a, b)?
        }
    })
}

fn same_key(a: &[Value], b: &[Value]) -> bool {
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (Value::Null, Value::Null) => true,
        _ => order(x, y) == Ordering::Equal || (num(x) == 0.0 && num(y) == 0.0),
    })
}

/// Result rows, or an error description when evaluation fails.
pub fn run(q: &Query, frame: &Frame, top_k: usize) -> Result<Vec<Vec<Value>>, String> {
    let t = Table {
        names: frame.fields().iter().map(|f| f.name.as_str()).collect(),
        rows: (0..frame.row_count()).map(|r| frame.row(r)).collect(),
    };
    let mut kept: Vec<&Vec<Value>> = Vec::new();
    let mut filter_err = None;
    for row in &t.rows {
        match &q.filter {
            None => kept.push(row),
            Some(w) => match eval_row(w, &t, row) {
                Ok(Value::Bool(true)) => kept.push(row),
                Ok(_) => {}
                Err(e) => filter_err = Some(e),
            },
        }
    }
    if let Some(e) = filter_err {
        return Err(e);
    }

    // (output row, order key)
    let mut out: Vec<(Vec<Value>, Value)> = Vec::new();
    let names: Vec<String> = q
        .projections
        .iter()
        .flat_map(|p| match p {
            Proj::Star => t.names.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            Proj::Expr(E::Col(c), None) => vec![c.clone()],
            Proj::Expr(_, Some(a)) => vec![a.clone()],
            Proj::Expr(e, None) => vec![e.sql()],
        })
        .collect();
    let order_pos = q.order_by.as_ref().map(|(k, _)| names.iter().position(|n| n == k));

    if q.is_aggregate() {
        let mut groups: Vec<(Vec<Value>, Vec<&Vec<Value>>)> = Vec::new();
        for row in &kept {
            let key: Vec<Value> = q.group_by.iter().map(|g| row[t.col(g)].clone()).collect();
            match groups.iter_mut().find(|(k, _)| same_key(k, &key)) {
                Some((_, rows)) => rows.push(row),
                None => groups.push((key, vec![row])),
            }
        }
        let has_avg = q.projections.iter().any(|p| matches!(p, Proj::Expr(e, _) if e.has_avg()));
        if q.group_by.is_empty() && groups.is_empty() && !has_avg {
            groups.push((vec![], vec![]));
        }
        // evaluate every output first so errors surface regardless of order
        let mut results = Vec::new();
        for (key, rows) in &groups {
            let mut vals = Vec::new();
            for p in &q.projections {
                let Proj::Expr(e, _) = p else { unreachable!() };
                vals.push(eval_group(e, &t, &q.group_by, key, rows)?);
            }
            results.push(vals);
        }
        for ((key, _), vals) in groups.iter().zip(results) {
            let ok = match (&q.order_by, order_pos) {
                (Some(_), Some(Some(i))) => vals[i].clone(),
                (Some((k, _)), _) => key[q.group_by.iter().position(|g| g == k).expect("group key")].clone(),
                _ => Value::Null,
            };
            out.push((vals, ok));
        }
    } else {
        for row in &kept {
            let mut vals = Vec::new();
            for p in &q.projections {
                match p {
                    Proj::Star => vals.extend(row.iter().cloned()),
                    Proj::Expr(e, _) => vals.push(eval_row(e, &t, row)?),
                }
            }
            let ok = match (&q.order_by, order_pos) {
                (Some(_), Some(Some(i))) => vals[i].clone(),
                (Some((k, _)), _) => row[t.col(k)].clone(),
                _ => Value::Null,
            };
            out.push((vals, ok));
        }
    }

    // stable insertion sort
    if let Some((_, desc)) = &q.order_by {
        for i in 1..out.len() {
            let mut j = i;
            while j > 0 {
                let o = order(&out[j - 1].1, &out[j].1);
                let swap = if *desc { o == Ordering::Less } else { o == Ordering::Greater };
                if !swap {
                    break;
                }
                out.swap(j - 1, j);
                j -= 1;
            }
        }
    }
    let cap = q.limit.map_or(top_k, |l| (l as usize).min(top_k));
    Ok(out.into_iter().take(cap).map(|(v, _)| v).collect())
}

// ---- generator -------------------------------------------------------

pub const TABLE: &str = "t";
const NUM_COLS: [&str; 2] = ["a", "b"];

fn maybe_null<T>(rng: &mut impl Rng, v: T) -> Option<T> {
    if rng.random_bool(0.15) { None } else { Some(v) }
}

/// Table `t`: a int, b float, s utf8, f boolean; every column nullable.
pub fn random_table(rng: &mut impl Rng) -> Frame {
    use flowforge_core::frame::{Column, DType, Field};
    let n = rng.random_range(0..=12);
    let a = (0..n).map(|_| { let v = rng.random_range(-4..=4); maybe_null(rng, v) }).collect();
    let b = (0..n).map(|_| { let v = rng.random_range(-6..=6) as f64 / 2.0; maybe_null(rng, v) }).collect();
    let s = (0..n)
        .map(|_| { let v = ["x", "y", "z"][rng.random_range(0..3)].to_string(); maybe_null(rng, v) })
        .collect();
    let f = (0..n).map(|_| { let v = rng.random_bool(0.5); maybe_null(rng, v) }).collect();
    Frame::new(
        vec![
            Field::plain("a", DType::Int64),
            Field::plain("b", DType::Float64),
            Field::plain("s", DType::Utf8),
            Field::plain("f", DType::Boolean),
        ],
        vec![Column::Int64(a), Column::Float64(b), Column::Utf8(s), Column::Boolean(f)],
    )
    .unwrap()
}

fn num_leaf(rng: &mut impl Rng, cols: &[&str]) -> E {
    match rng.random_range(0..4) {
        0 if !cols.is_empty() => E::Col(cols[rng.random_range(0..cols.len())].to_string()),
        1 if !cols.is_empty() => E::Col(cols[rng.random_range(0..cols.len())].to_string()),
        2 => E::Lit(Value::Float(rng.random_range(-4..=4) as f64 / 2.0)),
        _ => E::Lit(Value::Int(rng.random_range(-3..=3))),
    }
}

pub fn num_expr(rng: &mut impl Rng, depth: u32, cols: &[&str]) -> E {
    if depth == 0 || rng.random_bool(0.35) {
        return num_leaf(rng, cols);
    }
    if rng.random_bool(0.1) {
        return E::Neg(Box::new(num_expr(rng, depth - 1, cols)));
    }
    let op = [Op::Add, Op::Sub, Op::Mul, Op::Div][rng.random_range(0..4)];
    E::Bin(op, Box::new(num_expr(rng, depth - 1, cols)), Box::new(num_expr(rng, depth - 1, cols)))
}

pub fn bool_expr(rng: &mut impl Rng, depth: u32) -> E {
    if depth == 0 || rng.random_bool(0.4) {
        return match rng.random_range(0..6) {
            0 => E::Col("f".into()),
            1 => E::Bin(
                [Op::Eq, Op::Ne, Op::Lt][rng.random_range(0..3)],
                Box::new(E::Col("s".into())),
                Box::new(E::Lit(Value::Str(["x", "y", "w"][rng.random_range(0..3)].into()))),
            ),
            2 => E::Bin(Op::Eq, Box::new(E::Col("a".into())), Box::new(E::Lit(Value::Null))),
            _ => {
                let op = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge][rng.random_range(0..6)];
                E::Bin(op, Box::new(num_expr(rng, 1, &NUM_COLS)), Box::new(num_expr(rng, 1, &NUM_COLS)))
            }
        };
    }
    match rng.random_range(0..3) {
        0 => E::Not(Box::new(bool_expr(rng, depth - 1))),
        1 => E::Bin(Op::And, Box::new(bool_expr(rng, depth - 1)), Box::new(bool_expr(rng, depth - 1))),
        _ => E::Bin(Op::Or, Box::new(bool_expr(rng, depth - 1)), Box::new(bool_expr(rng, depth - 1))),
    }
}

fn agg_leaf(rng: &mut impl Rng) -> E {
    let any = ["a", "b", "s", "f"];
    match rng.random_range(0..7) {
        0 => E::Agg(Agg::Count, None),
        1 => E::Agg(Agg::Count, Some(Box::new(E::Col(["a", "s", "f"][rng.random_range(0..3)].into())))),
        2 => E::Agg(Agg::Sum, Some(Box::new(num_expr(rng, 1, &NUM_COLS)))),
        3 => E::Agg(Agg::Avg, Some(Box::new(num_expr(rng, 1, &NUM_COLS)))),
        4 => E::Agg(Agg::Min, Some(Box::new(E::Col(any[rng.random_range(0..4)].into())))),
        5 => E::Agg(Agg::Max, Some(Box::new(E::Col(any[rng.random_range(0..4)].into())))),
        _ => E::Agg(Agg::Sum, Some(Box::new(E::Col("a".into())))),
    }
}

fn agg_expr(rng: &mut impl Rng, groups: &[&str]) -> E {
    if rng.random_bool(0.25) {
        let numeric_groups: Vec<&str> = groups.iter().copied().filter(|g| *g == "a").collect();
        let other = if rng.random_bool(0.5) { num_leaf(rng, &numeric_groups) } else { E::Agg(Agg::Count, None) };
        let op = [Op::Add, Op::Mul, Op::Div][rng.random_range(0..3)];
        let sum = E::Agg(Agg::Sum, Some(Box::new(E::Col(NUM_COLS[rng.random_range(0..2)].into()))));
        return E::Bin(op, Box::new(sum), Box::new(other));
    }
    agg_leaf(rng)
}

pub fn random_query(rng: &mut impl Rng) -> Query {
    let mut q = Query {
        projections: vec![],
        table: TABLE.into(),
        filter: rng.random_bool(0.5).then(|| bool_expr(rng, 2)),
        group_by: vec![],
        order_by: None,
        limit: rng.random_bool(0.3).then(|| rng.random_range(0..8)),
    };
    let mut names: Vec<String> = Vec::new();
    if rng.random_bool(0.45) {
        // aggregate query
        let mut pool = vec!["s", "f", "a"];
        for _ in 0..rng.random_range(0..=2) {
            let g = pool.remove(rng.random_range(0..pool.len()));
            q.group_by.push(g.to_string());
        }
        for g in &q.group_by {
            if rng.random_bool(0.7) {
                q.projections.push(Proj::Expr(E::Col(g.clone()), None));
                names.push(g.clone());
            }
        }
        let groups: Vec<&str> = q.group_by.iter().map(String::as_str).collect();
        for i in 0..rng.random_range(1..=3) {
            let alias = format!("m{i}");
            q.projections.push(Proj::Expr(agg_expr(rng, &groups), Some(alias.clone())));
            names.push(alias);
        }
        if rng.random_bool(0.6) {
            let mut keys = names.clone();
            keys.extend(q.group_by.iter().cloned());
            q.order_by = Some((keys[rng.random_range(0..keys.len())].clone(), rng.random_bool(0.5)));
        }
    } else {
        if rng.random_bool(0.2) {
            q.projections.push(Proj::Star);
        } else {
            let mut pool = vec!["a", "b", "s", "f"];
            for i in 0..rng.random_range(1..=3) {
                if rng.random_bool(0.5) && !pool.is_empty() {
                    let c = pool.remove(rng.random_range(0..pool.len()));
                    q.projections.push(Proj::Expr(E::Col(c.into()), None));
                    names.push(c.into());
                } else {
                    let alias = format!("e{i}");
                    let e = if rng.random_bool(0.7) { num_expr(rng, 2, &NUM_COLS) } else { bool_expr(rng, 1) };
                    q.projections.push(Proj::Expr(e, Some(alias.clone())));
                    names.push(alias);
                }
            }
        }
        if rng.random_bool(0.6) {
            let mut keys = names.clone();
            keys.extend(["a", "b", "s", "f"].map(String::from));
            q.order_by = Some((keys[rng.random_range(0..keys.len())].clone(), rng.random_bool(0.5)));
        }
    }
    q
}
