//! Replays stored responses keyed by sample id.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{io_err, HarnessError, ModelAdapter, Query, Reply, TransportError};

/// Serves responses from a JSON-lines file. Each line needs an `id` and the
/// text under `response` or `raw_response`, so a run's `records.jsonl` can
/// be replayed directly. Lines whose text is null are ignored.
#[derive(Debug, Clone, Default)]
pub struct ReplayAdapter {
    label: String,
    responses: HashMap<String, String>,
}

impl ReplayAdapter {
    pub fn new(label: impl Into<String>, responses: HashMap<String, String>) -> Self {
        Self {
            label: label.into(),
            responses,
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut responses = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| HarnessError::Record {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let id = value
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing string field `id`".into()))?;
            let response = value.get("response").or_else(|| value.get("raw_response"));
            match response {
                Some(Value::String(s)) => {
                    responses.insert(id.to_string(), s.clone());
                }
                Some(Value::Null) | None => {}
                Some(_) => return Err(bad("response must be a string".into())),
            }
        }
        Ok(Self::new(format!("replay:{}", path.display()), responses))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.responses.get(id).map(String::as_str)
    }
}

impl ModelAdapter for ReplayAdapter {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn query(&self, query: &Query<'_>) -> Result<Reply, TransportError> {
        self.get(query.id)
            .map(|text| Reply {
                text: text.to_string(),
                attempts: 1,
            })
            .ok_or_else(|| TransportError::MissingResponse(query.id.to_string()))
    }
}
