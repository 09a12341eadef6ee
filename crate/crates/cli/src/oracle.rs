// SPDX-License-Identifier: Apache-2.0

//! A scripted stand-in for a chat model. It knows the injected bug and walks
//! the agent protocol to the fix, which makes it a source of replay fixtures.

use rtlfix_agents::backend::approx_call_tokens;
use rtlfix_agents::{AgentKind, ChatRequest, LlmBackend, LlmError, LlmReply, Role, ToolCall};
use serde_json::json;

use crate::synth::{BugInjection, FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleStyle {
    /// Patches under the root hypothesis.
    Direct,
    /// Simulates, consults the context agent and proposes a hypothesis
    /// first; the patch lands in a child node.
    Explore,
    /// Never patches; abandons every hypothesis.
    Hopeless,
}

pub struct Oracle {
    pub bug: BugInjection,
    pub style: OracleStyle,
}

fn call(name: &str, args: serde_json::Value) -> Option<ToolCall> {
    Some(ToolCall {
        name: name.to_string(),
        args,
    })
}

impl Oracle {
    pub fn new(bug: BugInjection, style: OracleStyle) -> Self {
        Oracle { bug, style }
    }

    fn main_turn(&self, req: &ChatRequest<'_>) -> (String, Option<ToolCall>) {
        let msgs = req.messages;
        let start = msgs
            .iter()
            .rposition(|m| m.role == Role::User && m.content.starts_with("Hypothesis #"))
            .unwrap_or(0);
        let hyp: u64 = msgs[start]
            .content
            .strip_prefix("Hypothesis #")
            .and_then(|r| r.split(':').next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(0);
        let turn = msgs[start..].iter().filter(|m| m.role == Role::Assistant).count();
        let sig = &self.bug.signal;
        let give_up = (String::new(), call("give_up_hypothesis", json!({})));
        match self.style {
            OracleStyle::Hopeless => give_up,
            OracleStyle::Explore if hyp == 0 => match turn {
                0 => ("Checking the failing outputs.".into(), call("run_sim", json!({}))),
                1 => (
                    String::new(),
                    call("ask_context_agent", json!({"question": format!("Where is `{sig}` driven and what reads it?")})),
                ),
                2 => (
                    String::new(),
                    call(
                        "propose_hypothesis",
                        json!({"text": format!("In the logic driving `{sig}`, {}.", self.bug.class.description())}),
                    ),
                ),
                _ => give_up,
            },
            _ => match turn {
                0 => (
                    String::new(),
                    call(
                        "read_file",
                        json!({"file": FILE, "start_line": self.bug.lines.0, "end_line": self.bug.lines.1}),
                    ),
                ),
                1 => (
                    format!("Restoring the logic of `{sig}`."),
                    call(
                        "edit_file",
                        json!({"file": FILE, "old": self.bug.mutated, "new": self.bug.original}),
                    ),
                ),
                _ => give_up,
            },
        }
    }

    fn context_turn(&self, req: &ChatRequest<'_>) -> (String, Option<ToolCall>) {
        match req.messages.last().map(|m| m.role) {
            Some(Role::Tool) => (
                format!("`{}` is defined around line {} of {FILE}.", self.bug.signal, self.bug.lines.0),
                None,
            ),
            _ => (String::new(), call("query_def", json!({"name": self.bug.signal}))),
        }
    }
}

impl LlmBackend for Oracle {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<LlmReply, LlmError> {
        let (content, tool_call) = match req.agent {
            AgentKind::Main => self.main_turn(req),
            AgentKind::Context => self.context_turn(req),
            AgentKind::LintFix => ("suppress: reported by an unrelated change".to_string(), None),
        };
        let tokens = approx_call_tokens(req.messages, &content, tool_call.as_ref());
        Ok(LlmReply {
            content,
            tool_call,
            tokens,
        })
    }
}
