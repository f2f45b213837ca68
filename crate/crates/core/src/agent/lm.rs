//! Language-model clients. Only the scripted client ships; anything that
//! can turn a prompt into text can implement [`LmClient`].

use regex::Regex;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("no scripted reply matches the prompt")]
    NoMatch,
    #[error("bad script: {0}")]
    Script(String),
    #[error("model request failed: {0}")]
    Request(String),
}

pub trait LmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LmError>;
}

#[derive(Debug, Clone, Deserialize)]
struct RuleDoc {
    when: String,
    reply: String,
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptDoc {
    rules: Vec<RuleDoc>,
}

/// Replies chosen by regex over the full prompt; the first matching rule
/// wins, so later conversation stages should be listed first.
#[derive(Debug, Clone)]
pub struct ScriptedLm {
    rules: Vec<(Regex, String)>,
}

impl ScriptedLm {
    pub fn new<'s>(rules: impl IntoIterator<Item = (&'s str, &'s str)>) -> Result<Self, LmError> {
        let rules = rules
            .into_iter()
            .map(|(w, r)| Regex::new(w).map(|re| (re, r.to_string())).map_err(|e| LmError::Script(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(ScriptedLm { rules })
    }

    /// Reads `{"rules": [{"when": regex, "reply": text}, ...]}`; other
    /// top-level keys are ignored.
    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let doc: ScriptDoc = serde_json::from_str(text).map_err(|e| LmError::Script(e.to_string()))?;
        Self::new(doc.rules.iter().map(|r| (r.when.as_str(), r.reply.as_str())))
    }
}

impl LmClient for ScriptedLm {
    fn complete(&self, prompt: &str) -> Result<String, LmError> {
        self.rules
            .iter()
            .find(|(re, _)| re.is_match(prompt))
            .map(|(_, reply)| reply.clone())
            .ok_or(LmError::NoMatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_match_wins() {
        let lm = ScriptedLm::new([("b", "second"), ("a", "first")]).unwrap();
        assert_eq!(lm.complete("ab").unwrap(), "second");
        assert_eq!(lm.complete("a").unwrap(), "first");
        assert_eq!(lm.complete("z"), Err(LmError::NoMatch));
    }

    #[test]
    fn from_json_ignores_extra_keys() {
        let lm = ScriptedLm::from_json(r#"{"question": "q", "rules": [{"when": "x", "reply": "y"}]}"#).unwrap();
        assert_eq!(lm.complete("x").unwrap(), "y");
        assert!(ScriptedLm::from_json(r#"{"rules": [{"when": "(", "reply": ""}]}"#).is_err());
    }
}
