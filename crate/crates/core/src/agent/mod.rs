//! Data agent: a state-graph runtime hosting a ReAct loop over the SQL
//! tools.

pub mod graph;
pub mod lm;
pub mod react;
pub mod tools;

pub use graph::{GraphBuilder, GraphError, InvokeError, StateGraph, END};
pub use lm::{LmClient, LmError, ScriptedLm};
pub use react::{
    build_prompt, parse_completion, react_step, run_agent, AgentConfig, AgentError, AgentOutcome, AgentState,
    Completion, Step, DONT_KNOW,
};
pub use tools::Tools;

use std::path::Path;

use crate::components::io::{read_csv, CsvReadOptions};
use crate::components::ComponentError;
use crate::sql::Catalog;

/// Builds a catalog from `(table name, csv path)` pairs.
pub fn catalog_from_csv<P: AsRef<Path>>(tables: &[(String, P)]) -> Result<Catalog, ComponentError> {
    let mut catalog = Catalog::new();
    for (name, path) in tables {
        catalog.insert(name, read_csv(path.as_ref(), &CsvReadOptions::default())?);
    }
    Ok(catalog)
}
