// SPDX-License-Identifier: Apache-2.0

//! Chat transcripts with token accounting.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Main,
    Context,
    LintFix,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Main => "main",
            AgentKind::Context => "context",
            AgentKind::LintFix => "lint_fix",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, args: Value) -> Self {
        ToolCall {
            name: name.into(),
            args,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
            tool_call: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("tool message at {0} does not follow an assistant tool call")]
    OrphanToolResult(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub agent_kind: AgentKind,
    pub messages: Vec<Message>,
    pub tokens_used: u64,
}

impl AgentTranscript {
    pub fn new(agent_kind: AgentKind) -> Self {
        AgentTranscript {
            agent_kind,
            messages: Vec::new(),
            tokens_used: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn system(&mut self, text: impl Into<String>) {
        self.messages.push(Message::new(Role::System, text));
    }

    pub fn user(&mut self, text: impl Into<String>) {
        self.messages.push(Message::new(Role::User, text));
    }

    pub fn assistant(&mut self, text: impl Into<String>, tool_call: Option<ToolCall>) {
        self.messages.push(Message {
            role: Role::Assistant,
            content: text.into(),
            tool_call,
        });
    }

    /// Appends a tool result. It must answer the tool call of the preceding
    /// assistant message.
    pub fn tool(&mut self, text: impl Into<String>) -> Result<(), TranscriptError> {
        match self.messages.last() {
            Some(Message {
                role: Role::Assistant,
                tool_call: Some(_),
                ..
            }) => {
                self.messages.push(Message::new(Role::Tool, text));
                Ok(())
            }
            _ => Err(TranscriptError::OrphanToolResult(self.messages.len())),
        }
    }

    pub fn charge(&mut self, tokens: u64) {
        self.tokens_used = self.tokens_used.saturating_add(tokens);
    }

    /// Every tool message directly follows an assistant tool call.
    pub fn validate(&self) -> Result<(), TranscriptError> {
        for (i, m) in self.messages.iter().enumerate() {
            if m.role == Role::Tool {
                let ok = i > 0
                    && self.messages[i - 1].role == Role::Assistant
                    && self.messages[i - 1].tool_call.is_some();
                if !ok {
                    return Err(TranscriptError::OrphanToolResult(i));
                }
            }
        }
        Ok(())
    }

    /// Plain-text rendering, one block per message.
    pub fn render(&self) -> String {
        let mut out = format!("# {} transcript, {} tokens\n", self.agent_kind, self.tokens_used);
        for (i, m) in self.messages.iter().enumerate() {
            out.push_str(&format!("\n[{i}] {}\n", m.role));
            if !m.content.is_empty() {
                out.push_str(&m.content);
                if !m.content.ends_with('\n') {
                    out.push('\n');
                }
            }
            if let Some(tc) = &m.tool_call {
                out.push_str(&format!("-> {}({})\n", tc.name, tc.args));
            }
        }
        out
    }
}

/// Whitespace token approximation used by the replay backend.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn approx_message_tokens(messages: &[Message]) -> u64 {
    messages
        .iter()
        .map(|m| approx_tokens(&m.content) + m.tool_call.as_ref().map_or(0, |t| 1 + approx_tokens(&t.args.to_string())))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orphan_tool_result_rejected() {
        let mut t = AgentTranscript::new(AgentKind::Main);
        t.user("hi");
        assert!(t.tool("x").is_err());
        t.assistant("", Some(ToolCall::new("run_sim", Value::Null)));
        t.tool("ok").unwrap();
        assert!(t.validate().is_ok());
        t.messages.push(Message::new(Role::Tool, "again"));
        assert_eq!(t.validate(), Err(TranscriptError::OrphanToolResult(3)));
    }

    #[test]
    fn token_counts() {
        assert_eq!(approx_tokens("  a b\n c "), 3);
        let mut t = AgentTranscript::new(AgentKind::Context);
        t.charge(5);
        t.charge(0);
        assert_eq!(t.tokens_used, 5);
    }
}
