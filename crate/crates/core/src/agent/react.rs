//! ReAct loop: the model thinks, picks a tool, sees the observation, and
//! repeats until it gives a final answer.

use serde::{Deserialize, Serialize};

use super::graph::{GraphBuilder, InvokeError, END};
use super::lm::LmClient;
use super::tools::{describe_tools, Tools, TOOL_NAMES};
use crate::sql::{list_tables, Catalog, DEFAULT_TOP_K};

pub const DEFAULT_PROMPT: &str = include_str!("prompt.txt");
pub const DONT_KNOW: &str = "I don't know";
pub const PARSE_FAILURE: &str =
    "Invalid format: reply with `Action:` and `Action Input:` lines, or with `Final Answer:`.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub top_k: usize,
    /// Upper bound on graph node applications.
    pub max_steps: usize,
    pub prompt_template: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { top_k: DEFAULT_TOP_K, max_steps: 8, prompt_template: DEFAULT_PROMPT.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAction {
    pub thought: String,
    pub action: String,
    pub action_input: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub question: String,
    pub scratchpad: Vec<Step>,
    pub step_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingAction>,
    pub final_answer: Option<String>,
    pub budget_exhausted: bool,
}

impl AgentState {
    pub fn new(question: &str) -> Self {
        AgentState { question: question.to_string(), ..AgentState::default() }
    }

    fn push(&mut self, step: Step) {
        self.scratchpad.push(step);
        self.step_count = self.scratchpad.len();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completion {
    Action { thought: String, action: String, input: String },
    Final { thought: String, answer: String },
    Invalid,
}

const MARKERS: [&str; 4] = ["Thought:", "Action Input:", "Action:", "Final Answer:"];

/// Text after `marker` up to the next marker (or the end).
fn section<'t>(text: &'t str, marker: &str) -> Option<&'t str> {
    let start = find_marker(text, marker)? + marker.len();
    let rest = &text[start..];
    let end = MARKERS
        .iter()
        .filter_map(|m| find_marker(rest, m))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Markers count only at a line start; "Action:" never matches inside
/// "Action Input:".
fn find_marker(text: &str, marker: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with(marker) {
            return Some(offset + (line.len() - trimmed.len()));
        }
        offset += line.len();
    }
    None
}

pub fn parse_completion(text: &str) -> Completion {
    let thought = section(text, "Thought:")
        .or_else(|| {
            let first = MARKERS.iter().filter_map(|m| find_marker(text, m)).min()?;
            Some(text[..first].trim())
        })
        .unwrap_or("")
        .to_string();
    let action = section(text, "Action:");
    let answer = section(text, "Final Answer:");
    match (action, answer) {
        (Some(a), None) if !a.is_empty() => Completion::Action {
            thought,
            action: a.to_string(),
            input: section(text, "Action Input:").unwrap_or("").to_string(),
        },
        (None, Some(ans)) => Completion::Final { thought, answer: ans.to_string() },
        _ => Completion::Invalid,
    }
}

pub fn render_scratchpad(steps: &[Step]) -> String {
    let mut s = String::new();
    for st in steps {
        s.push_str(&format!(
            "Thought: {}\nAction: {}\nAction Input: {}\nObservation: {}\n",
            st.thought, st.action, st.action_input, st.observation
        ));
    }
    s
}

pub fn build_prompt(config: &AgentConfig, catalog: &Catalog, state: &AgentState) -> String {
    let tables = list_tables(catalog);
    config
        .prompt_template
        .replace("{top_k}", &config.top_k.to_string())
        .replace("{tools}", &describe_tools())
        .replace("{tool_names}", &TOOL_NAMES.join(", "))
        .replace("{tables}", &if tables.is_empty() { "(none)".to_string() } else { tables.join(", ") })
        .replace("{question}", &state.question)
        .replace("{scratchpad}", &render_scratchpad(&state.scratchpad))
}

/// The "agent" node: ask the model and record what it decided.
fn think(mut state: AgentState, lm: &dyn LmClient, catalog: &Catalog, config: &AgentConfig) -> Result<AgentState, String> {
    let prompt = build_prompt(config, catalog, &state);
    let reply = lm.complete(&prompt).map_err(|e| e.to_string())?;
    match parse_completion(&reply) {
        Completion::Action { thought, action, input } => {
            state.pending = Some(PendingAction { thought, action, action_input: input })
        }
        Completion::Final { answer, .. } => state.final_answer = Some(answer),
        Completion::Invalid => state.push(Step {
            thought: String::new(),
            action: String::new(),
            action_input: reply.trim().to_string(),
            observation: PARSE_FAILURE.to_string(),
        }),
    }
    Ok(state)
}

/// The "tools" node: run the pending action and record the observation.
fn act(mut state: AgentState, tools: &Tools<'_>) -> Result<AgentState, String> {
    let Some(p) = state.pending.take() else { return Ok(state) };
    let observation = tools
        .dispatch(&p.action, &p.action_input)
        .unwrap_or_else(|| format!("unknown tool `{}`; use one of {}", p.action, TOOL_NAMES.join(", ")));
    state.push(Step { thought: p.thought, action: p.action, action_input: p.action_input, observation });
    Ok(state)
}

/// One thought plus, when the model picked an action, its observation.
pub fn react_step(state: AgentState, lm: &dyn LmClient, catalog: &Catalog, config: &AgentConfig) -> Result<AgentState, String> {
    let state = think(state, lm, catalog, config)?;
    act(state, &Tools { catalog, top_k: config.top_k })
}

fn route(state: &AgentState) -> String {
    if state.final_answer.is_some() {
        END.to_string()
    } else if state.pending.is_some() {
        "tools".to_string()
    } else {
        "agent".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("agent node `{node}` failed: {message}")]
    Handler { node: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub answer: String,
    pub state: AgentState,
}

/// Answers `question` over `catalog`. Running out of steps yields
/// "I don't know" with `budget_exhausted` set.
pub fn run_agent(question: &str, catalog: &Catalog, lm: &dyn LmClient, config: &AgentConfig) -> Result<AgentOutcome, AgentError> {
    if config.max_steps == 0 {
        return Err(AgentError::Config("max_steps must be at least 1".into()));
    }
    let tools = Tools { catalog, top_k: config.top_k };
    let graph = GraphBuilder::new()
        .node("agent", |s| think(s, lm, catalog, config))
        .node("tools", |s| act(s, &tools))
        .conditional("agent", route, &["agent", "tools", END])
        .edge("tools", "agent")
        .entry("agent")
        .compile()
        .expect("fixed graph shape compiles");
    let state = match graph.invoke(AgentState::new(question), config.max_steps) {
        Ok(s) => s,
        Err(InvokeError::BudgetExhausted { mut state, .. }) => {
            state.budget_exhausted = true;
            state.pending = None;
            state.final_answer = Some(DONT_KNOW.to_string());
            state
        }
        Err(InvokeError::HandlerFailed { node, message }) => return Err(AgentError::Handler { node, message }),
        Err(InvokeError::BadRoute { node, target }) => {
            return Err(AgentError::Handler { node, message: format!("bad route to {target}") })
        }
    };
    Ok(AgentOutcome { answer: state.final_answer.clone().unwrap_or_default(), state })
}
