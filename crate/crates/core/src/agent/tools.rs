//! The four catalog tools the agent can call. All are read-only.

use crate::sql::{check_query, list_tables, parse_sql, table_info, execute_query, Catalog, QueryIssue};
use crate::frame::Frame;

pub const TOOL_NAMES: [&str; 4] = ["list_tables", "table_info", "query_checker", "query"];

pub fn describe_tools() -> String {
    [
        "list_tables: input is ignored; returns the table names, comma separated.",
        "table_info: input is a comma-separated list of tables; returns columns, types and sample rows.",
        "query_checker: input is a SQL query; returns OK or the problems found.",
        "query: input is a SQL query; it is checked, then run. Errors come back instead of results.",
    ]
    .join("\n")
}

fn issues_text(issues: &[QueryIssue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
    format!("Error: {}", lines.join("\n"))
}

/// Pipe-separated header and rows.
pub fn render_result(frame: &Frame) -> String {
    let names: Vec<&str> = frame.fields().iter().map(|f| f.name.as_str()).collect();
    let mut lines = vec![names.join(" | ")];
    for r in 0..frame.row_count() {
        let cells: Vec<String> = frame.row(r).iter().map(|v| v.to_string()).collect();
        lines.push(cells.join(" | "));
    }
    lines.join("\n")
}

/// Strips whitespace and wrapping backticks or quotes a model may add.
pub fn clean_input(input: &str) -> &str {
    let mut s = input.trim();
    for q in ['`', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            s = s[1..s.len() - 1].trim();
        }
    }
    s
}

pub struct Tools<'a> {
    pub catalog: &'a Catalog,
    pub top_k: usize,
}

impl Tools<'_> {
    pub fn list_tables(&self) -> String {
        let names = list_tables(self.catalog);
        if names.is_empty() { "(no tables)".to_string() } else { names.join(", ") }
    }

    pub fn table_info(&self, input: &str) -> String {
        let blocks: Vec<String> = clean_input(input)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| match table_info(self.catalog, name) {
                Ok(b) => b,
                Err(issue) => issues_text(&[issue]),
            })
            .collect();
        if blocks.is_empty() { "Error: no table named".to_string() } else { blocks.join("\n") }
    }

    pub fn query_checker(&self, input: &str) -> String {
        let issues = check_query(clean_input(input), self.catalog);
        if issues.is_empty() { "OK".to_string() } else { issues_text(&issues) }
    }

    /// Runs only when the checker reports no errors.
    pub fn query(&self, input: &str) -> String {
        let text = clean_input(input);
        let issues = check_query(text, self.catalog);
        if issues.iter().any(QueryIssue::is_error) {
            return issues_text(&issues);
        }
        let result = parse_sql(text)
            .map_err(|i| i.to_string())
            .and_then(|stmt| execute_query(&stmt, self.catalog, self.top_k).map_err(|e| e.to_string()));
        match result {
            Ok(frame) => render_result(&frame),
            Err(e) => format!("Error: {e}"),
        }
    }

    /// `None` for an unknown tool name.
    pub fn dispatch(&self, name: &str, input: &str) -> Option<String> {
        Some(match name.trim() {
            "list_tables" => self.list_tables(),
            "table_info" => self.table_info(input),
            "query_checker" => self.query_checker(input),
            "query" => self.query(input),
            _ => return None,
        })
    }
}
