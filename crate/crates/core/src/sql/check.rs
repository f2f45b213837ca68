//! Static checks: name resolution, typing and aggregate placement.

use serde::Serialize;

use super::ast::*;
use super::catalog::Catalog;
use super::parser::{parse_expr, parse_sql};
use super::{IssueCode, QueryIssue};
use crate::frame::{DType, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SqlType {
    Null,
    Bool,
    Int,
    Float,
    Str,
    Vector(usize),
}

impl SqlType {
    pub fn from_dtype(d: DType) -> SqlType {
        match d {
            DType::Int64 => SqlType::Int,
            DType::Float64 => SqlType::Float,
            DType::Boolean => SqlType::Bool,
            DType::Utf8 => SqlType::Str,
            DType::Vector(n) => SqlType::Vector(n),
        }
    }

    /// Column dtype for results; an all-null expression becomes int64.
    pub fn dtype(self) -> DType {
        match self {
            SqlType::Null | SqlType::Int => DType::Int64,
            SqlType::Float => DType::Float64,
            SqlType::Bool => DType::Boolean,
            SqlType::Str => DType::Utf8,
            SqlType::Vector(n) => DType::Vector(n),
        }
    }

    fn numeric(self) -> bool {
        matches!(self, SqlType::Null | SqlType::Int | SqlType::Float)
    }

    fn comparable(self, other: SqlType) -> bool {
        self == SqlType::Null
            || other == SqlType::Null
            || (self.numeric() && other.numeric())
            || (self == other && matches!(self, SqlType::Bool | SqlType::Str))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutputSource {
    /// Source column index (from `*`).
    Column(usize),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputCol {
    pub name: String,
    pub ty: SqlType,
    pub source: OutputSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKey {
    Output(usize),
    /// Source column, non-aggregate queries only.
    Source(usize),
    /// Position in GROUP BY, aggregate queries only.
    Group(usize),
}

/// A checked query, ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub table: String,
    pub aggregate: bool,
    pub filter: Option<Expr>,
    pub group_cols: Vec<usize>,
    pub outputs: Vec<OutputCol>,
    pub order: Option<(OrderKey, bool)>,
    pub limit: Option<u64>,
    pub has_avg: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Row,
    Group,
    InAgg,
}

struct Checker<'a> {
    schema: &'a Schema,
    group: &'a [String],
    issues: Vec<QueryIssue>,
}

impl Checker<'_> {
    fn issue(&mut self, code: IssueCode, msg: String, span: Span) {
        self.issues.push(QueryIssue::error(code, msg, span));
    }

    fn ty(&mut self, e: &Expr, mode: Mode) -> Option<SqlType> {
        use SqlType::*;
        match &e.kind {
            ExprKind::Lit(l) => Some(match l {
                Literal::Null => Null,
                Literal::Bool(_) => Bool,
                Literal::Int(_) => Int,
                Literal::Float(_) => Float,
                Literal::Str(_) => Str,
            }),
            ExprKind::Column(name) => {
                let Some(field) = self.schema.field(name) else {
                    self.issue(IssueCode::UnknownColumn, format!("no column `{name}`"), e.span);
                    return None;
                };
                let t = SqlType::from_dtype(field.dtype);
                if let Vector(_) = t {
                    self.issue(IssueCode::Type, format!("vector column `{name}` cannot be used in expressions"), e.span);
                    return None;
                }
                if mode == Mode::Group && !self.group.contains(name) {
                    self.issue(
                        IssueCode::Type,
                        format!("column `{name}` must appear in GROUP BY or inside an aggregate"),
                        e.span,
                    );
                    return None;
                }
                Some(t)
            }
            ExprKind::Unary(op, inner) => {
                let t = self.ty(inner, mode)?;
                match op {
                    UnOp::Neg if t.numeric() => Some(t),
                    UnOp::Not if matches!(t, Bool | Null) => Some(Bool),
                    UnOp::Neg => {
                        self.issue(IssueCode::Type, format!("cannot negate {t:?}"), e.span);
                        None
                    }
                    UnOp::Not => {
                        self.issue(IssueCode::Type, format!("NOT expects a boolean, found {t:?}"), e.span);
                        None
                    }
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.ty(l, mode);
                let rt = self.ty(r, mode);
                let (lt, rt) = (lt?, rt?);
                if op.is_arithmetic() {
                    if !(lt.numeric() && rt.numeric()) {
                        self.issue(
                            IssueCode::Type,
                            format!("`{}` needs numbers, found {lt:?} and {rt:?}", op.symbol()),
                            e.span,
                        );
                        return None;
                    }
                    Some(if *op == BinOp::Div || lt == Float || rt == Float { Float } else { Int })
                } else if op.is_comparison() {
                    if !lt.comparable(rt) {
                        self.issue(IssueCode::Type, format!("cannot compare {lt:?} with {rt:?}"), e.span);
                        return None;
                    }
                    Some(Bool)
                } else {
                    if !matches!(lt, Bool | Null) || !matches!(rt, Bool | Null) {
                        self.issue(
                            IssueCode::Type,
                            format!("{} expects booleans, found {lt:?} and {rt:?}", op.symbol()),
                            e.span,
                        );
                        return None;
                    }
                    Some(Bool)
                }
            }
            ExprKind::Agg(func, arg) => {
                match mode {
                    Mode::Row => {
                        self.issue(IssueCode::Type, format!("{} is not allowed here", func.name()), e.span);
                        return None;
                    }
                    Mode::InAgg => {
                        self.issue(IssueCode::Type, "aggregates cannot be nested".to_string(), e.span);
                        return None;
                    }
                    Mode::Group => {}
                }
                let Some(arg) = arg else { return Some(Int) };
                let t = self.ty(arg, Mode::InAgg)?;
                let ok = match func {
                    AggFunc::Count => Some(Int),
                    AggFunc::Sum if t.numeric() => Some(if t == Float { Float } else { Int }),
                    AggFunc::Avg if t.numeric() => Some(Float),
                    AggFunc::Min | AggFunc::Max => Some(t),
                    _ => None,
                };
                if ok.is_none() {
                    self.issue(IssueCode::Type, format!("{} needs a numeric argument, found {t:?}", func.name()), e.span);
                }
                ok
            }
        }
    }
}

fn has_avg(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Agg(AggFunc::Avg, _) => true,
        ExprKind::Unary(_, x) => has_avg(x),
        ExprKind::Binary(_, l, r) => has_avg(l) || has_avg(r),
        _ => false,
    }
}

/// Resolves and types a SELECT against the schema of its source table.
pub fn analyze(select: &Select, schema: &Schema) -> Result<Analysis, Vec<QueryIssue>> {
    let group: Vec<String> = select.group_by.iter().map(|g| g.name.clone()).collect();
    let mut ck = Checker { schema, group: &group, issues: Vec::new() };
    let aggregate = !select.group_by.is_empty()
        || select.projections.iter().any(|p| matches!(p, Projection::Expr { expr, .. } if expr.contains_aggregate()));

    let mut group_cols = Vec::new();
    for g in &select.group_by {
        match schema.index_of(&g.name) {
            None => ck.issue(IssueCode::UnknownColumn, format!("no column `{}`", g.name), g.span),
            Some(i) if matches!(schema.fields()[i].dtype, DType::Vector(_)) => {
                ck.issue(IssueCode::Type, format!("cannot group by vector column `{}`", g.name), g.span)
            }
            Some(i) => group_cols.push(i),
        }
    }

    if let Some(w) = &select.filter {
        if let Some(t) = ck.ty(w, Mode::Row) {
            if !matches!(t, SqlType::Bool | SqlType::Null) {
                ck.issue(IssueCode::Type, format!("WHERE needs a boolean, found {t:?}"), w.span);
            }
        }
    }

    let mut outputs: Vec<OutputCol> = Vec::new();
    for p in &select.projections {
        match p {
            Projection::Star => {
                if aggregate {
                    ck.issue(IssueCode::Type, "`*` cannot be mixed with aggregation".to_string(), select.from.span);
                    continue;
                }
                for (i, f) in schema.fields().iter().enumerate() {
                    outputs.push(OutputCol {
                        name: f.name.clone(),
                        ty: SqlType::from_dtype(f.dtype),
                        source: OutputSource::Column(i),
                    });
                }
            }
            Projection::Expr { expr, alias } => {
                let mode = if aggregate { Mode::Group } else { Mode::Row };
                if let Some(ty) = ck.ty(expr, mode) {
                    let name = match (alias, &expr.kind) {
                        (Some(a), _) => a.name.clone(),
                        (None, ExprKind::Column(c)) => c.clone(),
                        (None, _) => expr.to_string(),
                    };
                    outputs.push(OutputCol { name, ty, source: OutputSource::Expr(expr.clone()) });
                }
            }
        }
    }
    dedupe_names(&mut outputs);

    let order = select.order_by.as_ref().and_then(|o| {
        let key = outputs
            .iter()
            .position(|c| c.name == o.key.name)
            .map(OrderKey::Output)
            .or_else(|| {
                if aggregate {
                    group.iter().position(|g| *g == o.key.name).map(OrderKey::Group)
                } else {
                    schema.index_of(&o.key.name).map(OrderKey::Source)
                }
            });
        let ty = match key {
            Some(OrderKey::Output(i)) => outputs[i].ty,
            Some(OrderKey::Source(i)) => SqlType::from_dtype(schema.fields()[i].dtype),
            Some(OrderKey::Group(i)) => schema
                .field(&group[i])
                .map_or(SqlType::Null, |f| SqlType::from_dtype(f.dtype)),
            None => {
                ck.issue(IssueCode::UnknownColumn, format!("cannot order by unknown column `{}`", o.key.name), o.key.span);
                return None;
            }
        };
        if let SqlType::Vector(_) = ty {
            ck.issue(IssueCode::Type, format!("cannot order by vector column `{}`", o.key.name), o.key.span);
            return None;
        }
        key.map(|k| (k, o.descending))
    });

    if !ck.issues.is_empty() {
        return Err(ck.issues);
    }
    let has_avg = outputs.iter().any(|c| matches!(&c.source, OutputSource::Expr(e) if has_avg(e)));
    Ok(Analysis {
        table: select.from.name.clone(),
        aggregate,
        filter: select.filter.clone(),
        group_cols,
        outputs,
        order,
        limit: select.limit,
        has_avg,
    })
}

/// Repeated output names get `_2`, `_3`, ... suffixes.
fn dedupe_names(outputs: &mut [OutputCol]) {
    let mut seen = std::collections::HashSet::new();
    for c in outputs.iter_mut() {
        if seen.insert(c.name.clone()) {
            continue;
        }
        let mut n = 2;
        while !seen.insert(format!("{}_{n}", c.name)) {
            n += 1;
        }
        c.name = format!("{}_{n}", c.name);
    }
}

pub fn check_statement(stmt: &Statement, catalog: &Catalog) -> Vec<QueryIssue> {
    match stmt {
        Statement::Forbidden { kind, span } => vec![QueryIssue::error(
            IssueCode::DmlForbidden,
            format!("{} statements are not allowed; only SELECT queries may run", kind.keyword()),
            *span,
        )],
        Statement::Select(sel) => match catalog.get(&sel.from.name) {
            None => vec![QueryIssue::error(
                IssueCode::UnknownTable,
                format!("no table `{}`", sel.from.name),
                sel.from.span,
            )],
            Some(frame) => analyze(sel, frame.schema()).err().unwrap_or_default(),
        },
    }
}

/// Every problem that would stop `text` from running.
pub fn check_query(text: &str, catalog: &Catalog) -> Vec<QueryIssue> {
    match parse_sql(text) {
        Err(issue) => vec![issue],
        Ok(stmt) => check_statement(&stmt, catalog),
    }
}

/// Parses and types a row-level expression against `schema`.
pub fn compile_expr(text: &str, schema: &Schema) -> Result<(Expr, SqlType), Vec<QueryIssue>> {
    let expr = parse_expr(text).map_err(|i| vec![i])?;
    let mut ck = Checker { schema, group: &[], issues: Vec::new() };
    match ck.ty(&expr, Mode::Row) {
        Some(t) if ck.issues.is_empty() => Ok((expr, t)),
        _ => Err(ck.issues),
    }
}
