// SPDX-License-Identifier: Apache-2.0

//! LLM agents for RTL debugging: the main agent's nested loops, the context
//! and lint-fix sub-agents, their toolbox, and live or replayed chat
//! backends.

pub mod backend;
pub mod config;
pub mod context;
pub mod lint_fix;
pub mod main_agent;
pub mod prompts;
pub mod session;
pub mod tools;
pub mod transcript;

use thiserror::Error;

pub use backend::{ChatRequest, FnBackend, LlmBackend, LlmError, LlmReply, ReplayBackend};
pub use config::{AgentConfig, Budget, Hypothesis, Meter, QueryCounting};
pub use context::{context_agent_query, ContextAgent, ContextTask};
pub use lint_fix::{lint_fix_agent, LintDecision, LintFixRun};
pub use main_agent::{main_agent_step, AgentState, Env, Step, StepEvent, StepOutcome};
pub use session::Spend;
pub use transcript::{AgentKind, AgentTranscript, Message, Role, ToolCall};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("token or time budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Transcript(#[from] transcript::TranscriptError),
}

impl AgentError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, AgentError::Llm(e) if e.is_retryable())
    }
}
