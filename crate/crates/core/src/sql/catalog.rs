use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{IssueCode, QueryIssue, Span};
use crate::codec::encode_frame;
use crate::frame::{Frame, Value};

/// Named, read-only tables visible to queries.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Arc<Frame>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, frame: impl Into<Arc<Frame>>) {
        self.tables.insert(name.to_string(), frame.into());
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Frame>> {
        self.tables.get(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// SHA-256 over every table name and its encoded bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, frame) in &self.tables {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            let bytes = encode_frame(frame);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn list_tables(catalog: &Catalog) -> Vec<String> {
    catalog.names()
}

const SAMPLE_ROWS: usize = 3;

/// Column names, dtypes and roles, then up to three rows in stored order.
pub fn table_info(catalog: &Catalog, name: &str) -> Result<String, QueryIssue> {
    let frame = catalog.get(name).ok_or_else(|| {
        QueryIssue::error(IssueCode::UnknownTable, format!("no table `{name}`"), Span::new(0, name.len()))
    })?;
    let mut out = format!("table {name} ({} rows)\ncolumns:\n", frame.row_count());
    for f in frame.fields() {
        out.push_str(&format!("  {} {} {}\n", f.name, f.dtype, f.role));
    }
    let shown = frame.row_count().min(SAMPLE_ROWS);
    out.push_str(&format!("sample rows ({shown}):\n"));
    let names: Vec<&str> = frame.fields().iter().map(|f| f.name.as_str()).collect();
    out.push_str(&format!("  {}\n", names.join(" | ")));
    for r in 0..shown {
        let cells: Vec<String> = frame.row(r).iter().map(Value::to_string).collect();
        out.push_str(&format!("  {}\n", cells.join(" | ")));
    }
    Ok(out)
}
