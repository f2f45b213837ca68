//! Query syntax tree. Equality ignores source spans so that re-printed
//! queries compare equal to the originals.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Byte range in the query text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Ident {
    pub fn new(name: &str) -> Self {
        Ident { name: name.to_string(), span: Span::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StatementKind {
    Select,
    Insert,
    Update,
    Delete,
    Drop,
    Create,
    Alter,
    Truncate,
}

impl StatementKind {
    pub const FORBIDDEN: [StatementKind; 7] = [
        StatementKind::Insert,
        StatementKind::Update,
        StatementKind::Delete,
        StatementKind::Drop,
        StatementKind::Create,
        StatementKind::Alter,
        StatementKind::Truncate,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            StatementKind::Select => "SELECT",
            StatementKind::Insert => "INSERT",
            StatementKind::Update => "UPDATE",
            StatementKind::Delete => "DELETE",
            StatementKind::Drop => "DROP",
            StatementKind::Create => "CREATE",
            StatementKind::Alter => "ALTER",
            StatementKind::Truncate => "TRUNCATE",
        }
    }

    pub fn from_keyword(word: &str) -> Option<StatementKind> {
        std::iter::once(StatementKind::Select)
            .chain(StatementKind::FORBIDDEN)
            .find(|k| k.keyword().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Select(Select),
    /// A data-modifying statement. Only its kind is recorded; it is never
    /// parsed further and never executed.
    Forbidden { kind: StatementKind, span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub projections: Vec<Projection>,
    pub from: Ident,
    pub filter: Option<Expr>,
    pub group_by: Vec<Ident>,
    pub order_by: Option<OrderBy>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBy {
    pub key: Ident,
    pub descending: bool,
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr { kind, span: Span::default() }
    }

    pub fn column(name: &str) -> Self {
        Expr::new(ExprKind::Column(name.to_string()))
    }

    pub fn lit(l: Literal) -> Self {
        Expr::new(ExprKind::Lit(l))
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::new(ExprKind::Binary(op, Box::new(l), Box::new(r)))
    }

    pub fn contains_aggregate(&self) -> bool {
        match &self.kind {
            ExprKind::Agg(..) => true,
            ExprKind::Unary(_, e) => e.contains_aggregate(),
            ExprKind::Binary(_, l, r) => l.contains_aggregate() || r.contains_aggregate(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Lit(Literal),
    Column(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `None` argument is `COUNT(*)`.
    Agg(AggFunc, Option<Box<Expr>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
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

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max];

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "ORDER", "LIMIT", "ASC", "DESC", "AND", "OR", "NOT", "AS",
    "TRUE", "FALSE", "NULL", "COUNT", "SUM", "AVG", "MIN", "MAX", "INSERT", "UPDATE", "DELETE", "DROP",
    "CREATE", "ALTER", "TRUNCATE",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn write_ident(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_reserved(name);
    if plain {
        f.write_str(name)
    } else {
        write!(f, "\"{}\"", name.replace('"', "\"\""))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x:?}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // compound operands are always parenthesized
        let operand = |f: &mut fmt::Formatter<'_>, e: &Expr| match e.kind {
            ExprKind::Binary(..) | ExprKind::Unary(..) => write!(f, "({e})"),
            _ => write!(f, "{e}"),
        };
        match &self.kind {
            ExprKind::Lit(l) => write!(f, "{l}"),
            ExprKind::Column(c) => write_ident(f, c),
            ExprKind::Unary(UnOp::Neg, e) => {
                f.write_str("-")?;
                operand(f, e)
            }
            ExprKind::Unary(UnOp::Not, e) => {
                f.write_str("NOT ")?;
                operand(f, e)
            }
            ExprKind::Binary(op, l, r) => {
                operand(f, l)?;
                write!(f, " {} ", op.symbol())?;
                operand(f, r)
            }
            ExprKind::Agg(func, None) => write!(f, "{}(*)", func.name()),
            ExprKind::Agg(func, Some(e)) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, p) in self.projections.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match p {
                Projection::Star => f.write_str("*")?,
                Projection::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        f.write_str(" AS ")?;
                        write_ident(f, &a.name)?;
                    }
                }
            }
        }
        f.write_str(" FROM ")?;
        write_ident(f, &self.from.name)?;
        if let Some(w) = &self.filter {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            for (i, g) in self.group_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_ident(f, &g.name)?;
            }
        }
        if let Some(o) = &self.order_by {
            f.write_str(" ORDER BY ")?;
            write_ident(f, &o.key.name)?;
            f.write_str(if o.descending { " DESC" } else { " ASC" })?;
        }
        if let Some(l) = self.limit {
            write!(f, " LIMIT {l}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Select(s) => write!(f, "{s}"),
            Statement::Forbidden { kind, .. } => write!(f, "{} ...", kind.keyword()),
        }
    }
}
