// SPDX-License-Identifier: Apache-2.0

//! Line-delimited replay fixtures: one JSON object per turn.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{approx_call_tokens, ChatRequest, LlmBackend, LlmError, LlmReply};
use crate::transcript::{AgentKind, Role, ToolCall};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// Index of the message in the agent's conversation.
    pub pos: usize,
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ReplayLoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("fixture line {line}: {err}")]
    Parse { line: usize, err: serde_json::Error },
}

/// Serves recorded assistant turns in order. Non-assistant records are
/// expectations on the conversation and must match what the agent sent.
#[derive(Clone, Debug)]
pub struct ReplayBackend {
    records: Vec<ReplayRecord>,
    cursor: usize,
    turn: usize,
}

impl ReplayBackend {
    pub fn new(records: Vec<ReplayRecord>) -> Self {
        ReplayBackend {
            records,
            cursor: 0,
            turn: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ReplayLoadError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line).map_err(|err| ReplayLoadError::Parse { line: i + 1, err })?;
            records.push(r);
        }
        Ok(ReplayBackend::new(records))
    }

    pub fn load(path: &Path) -> Result<Self, ReplayLoadError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ReplayLoadError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Records not yet consumed.
    pub fn remaining(&self) -> usize {
        self.records.len() - self.cursor
    }

    fn diverged(&self, pos: usize, detail: String) -> LlmError {
        LlmError::ReplayDivergence {
            turn: self.turn,
            pos,
            detail,
        }
    }
}

impl LlmBackend for ReplayBackend {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        let pos = req.messages.len();
        while let Some(r) = self.records.get(self.cursor).filter(|r| r.role != Role::Assistant) {
            let ok = req
                .messages
                .get(r.pos)
                .is_some_and(|m| m.role == r.role && m.content == r.content);
            if !ok {
                return Err(self.diverged(r.pos, format!("recorded {} message differs", r.role)));
            }
            self.cursor += 1;
        }
        let Some(r) = self.records.get(self.cursor) else {
            return Err(self.diverged(pos, "no recorded turn left".into()));
        };
        if r.pos != pos {
            return Err(self.diverged(pos, format!("recorded turn is at position {}", r.pos)));
        }
        if let Some(a) = r.agent.filter(|a| *a != req.agent) {
            return Err(self.diverged(pos, format!("recorded turn belongs to the {a} agent, not {}", req.agent)));
        }
        let tokens = r
            .tokens
            .unwrap_or_else(|| approx_call_tokens(req.messages, &r.content, r.tool_call.as_ref()));
        let reply = LlmReply {
            content: r.content.clone(),
            tool_call: r.tool_call.clone(),
            tokens,
        };
        self.cursor += 1;
        self.turn += 1;
        Ok(reply)
    }
}

/// Wraps a backend and records every assistant turn as a fixture line.
pub struct Recorder<B> {
    pub inner: B,
    pub records: Vec<ReplayRecord>,
}

impl<B: LlmBackend> Recorder<B> {
    pub fn new(inner: B) -> Self {
        Recorder {
            inner,
            records: Vec::new(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

impl<B: LlmBackend> LlmBackend for Recorder<B> {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        let reply = self.inner.chat(req)?;
        self.records.push(ReplayRecord {
            pos: req.messages.len(),
            role: Role::Assistant,
            content: reply.content.clone(),
            tool_call: reply.tool_call.clone(),
            agent: Some(req.agent),
            tokens: Some(reply.tokens),
        });
        Ok(reply)
    }
}
