//! SELECT-only SQL subset over named frames: parsing, static checks and a
//! column-at-a-time evaluator. Data-modifying statements are recognised
//! only so they can be refused.

pub mod ast;
mod catalog;
mod check;
mod eval;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{Span, Statement, StatementKind};
pub use catalog::{list_tables, table_info, Catalog};
pub use check::{analyze, check_query, check_statement, compile_expr, Analysis, OrderKey, OutputCol, OutputSource, SqlType};
pub use eval::{eval_expr_column, execute_query, run_query, QueryError, DEFAULT_TOP_K};
pub use parser::{parse_expr, parse_sql};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    Syntax,
    UnknownTable,
    UnknownColumn,
    Type,
    DmlForbidden,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::Syntax => "SYNTAX",
            IssueCode::UnknownTable => "UNKNOWN_TABLE",
            IssueCode::UnknownColumn => "UNKNOWN_COLUMN",
            IssueCode::Type => "TYPE",
            IssueCode::DmlForbidden => "DML_FORBIDDEN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryIssue {
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
    pub span: Option<Span>,
}

impl QueryIssue {
    pub fn error(code: IssueCode, message: impl Into<String>, span: Span) -> Self {
        QueryIssue { severity: Severity::Error, code, message: message.into(), span: Some(span) }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for QueryIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)?;
        if let Some(s) = self.span {
            write!(f, " (at {}..{})", s.start, s.end)?;
        }
        Ok(())
    }
}
