// SPDX-License-Identifier: Apache-2.0

//! Chat backends: a live HTTP endpoint, replay of recorded fixtures, and
//! in-process scripts.

mod live;
mod replay;

use serde_json::Value;
use thiserror::Error;

use crate::transcript::{approx_message_tokens, AgentKind, Message, Role, ToolCall};

pub use live::{LiveBackend, LiveConfig, ENV_KEY, ENV_MODEL, ENV_URL};
pub use replay::{ReplayBackend, ReplayLoadError, ReplayRecord, Recorder};

#[derive(Clone, Debug, PartialEq)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Value,
}

pub struct ChatRequest<'a> {
    pub agent: AgentKind,
    pub messages: &'a [Message],
    pub tools: &'a [ToolSpec],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmReply {
    pub content: String,
    pub tool_call: Option<ToolCall>,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay diverged at turn {turn}, conversation position {pos}: {detail}")]
    ReplayDivergence { turn: usize, pos: usize, detail: String },
}

impl LlmError {
    /// Transport failures may succeed when retried; a diverged replay never will.
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

pub trait LlmBackend {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        (**self).chat(req)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for &mut B {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        (**self).chat(req)
    }
}

/// Whitespace-approximated cost of one call: prompt plus reply.
pub fn approx_call_tokens(messages: &[Message], content: &str, tool_call: Option<&ToolCall>) -> u64 {
    let reply = Message {
        role: Role::Assistant,
        content: content.to_string(),
        tool_call: tool_call.cloned(),
    };
    approx_message_tokens(messages) + approx_message_tokens(std::slice::from_ref(&reply))
}

/// A backend computed by a closure, with whitespace token accounting.
pub struct FnBackend<F>(pub F);

impl<F> LlmBackend for FnBackend<F>
where
    F: FnMut(&ChatRequest<'_>) -> Result<(String, Option<ToolCall>), LlmError>,
{
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        let (content, tool_call) = (self.0)(req)?;
        let tokens = approx_call_tokens(req.messages, &content, tool_call.as_ref());
        Ok(LlmReply {
            content,
            tool_call,
            tokens,
        })
    }
}
