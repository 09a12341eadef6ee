// SPDX-License-Identifier: Apache-2.0

//! One LLM turn with budget checks and token accounting.

use crate::backend::{ChatRequest, LlmBackend, LlmReply};
use crate::config::Meter;
use crate::tools::tool_specs;
use crate::transcript::AgentTranscript;
use crate::AgentError;

/// Global meter plus the token count of the current tree path.
pub struct Spend<'a> {
    pub meter: &'a mut Meter,
    pub path_tokens: &'a mut u64,
}

impl Spend<'_> {
    pub fn reborrow(&mut self) -> Spend<'_> {
        Spend {
            meter: self.meter,
            path_tokens: self.path_tokens,
        }
    }
}

/// Sends the transcript, appends the reply and charges its tokens.
pub fn ask(llm: &mut dyn LlmBackend, t: &mut AgentTranscript, spend: &mut Spend<'_>) -> Result<LlmReply, AgentError> {
    if spend.meter.exhausted() {
        return Err(AgentError::BudgetExhausted);
    }
    let tools = tool_specs(t.agent_kind);
    let reply = llm.chat(&ChatRequest {
        agent: t.agent_kind,
        messages: &t.messages,
        tools: &tools,
    })?;
    t.charge(reply.tokens);
    spend.meter.tokens = spend.meter.tokens.saturating_add(reply.tokens);
    *spend.path_tokens = spend.path_tokens.saturating_add(reply.tokens);
    t.assistant(reply.content.clone(), reply.tool_call.clone());
    Ok(reply)
}
