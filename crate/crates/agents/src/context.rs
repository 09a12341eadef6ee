// SPDX-License-Identifier: Apache-2.0

//! The context agent: navigates the design on behalf of the main agent and
//! answers with bounded summaries.

use rtlfix_core::rtl::{Patch, SourceProject};
use serde::{Deserialize, Serialize};

use crate::config::AgentConfig;
use crate::prompts;
use crate::session::{ask, Spend};
use crate::tools::{allowed, navigate, read_file, ToolName};
use crate::transcript::{AgentKind, AgentTranscript};
use crate::{AgentError, LlmBackend};

const TRUNCATED: &str = " [truncated]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextAgent {
    pub transcript: AgentTranscript,
    pub patches_seen: usize,
}

impl Default for ContextAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl ContextAgent {
    pub fn new() -> Self {
        let mut transcript = AgentTranscript::new(AgentKind::Context);
        transcript.system(prompts::context_system());
        ContextAgent {
            transcript,
            patches_seen: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContextTask {
    NewPatch(Patch),
    Question(String),
}

/// Cuts `s` to at most `cap` characters, marking the cut.
pub fn cap_summary(s: &str, cap: usize) -> String {
    let s = s.trim();
    if s.chars().count() <= cap {
        return s.to_string();
    }
    if cap < 2 * TRUNCATED.len() {
        return s.chars().take(cap).collect();
    }
    let mut out: String = s.chars().take(cap - TRUNCATED.len()).collect();
    out.push_str(TRUNCATED);
    out
}

fn overview(src: &SourceProject) -> String {
    let files: Vec<String> = src
        .files
        .iter()
        .map(|f| format!("{} ({} lines)", f.path, f.text.lines().count()))
        .collect();
    format!("Top module `{}`. Files: {}.", src.top_module, files.join(", "))
}

/// Runs one task on the instance. Patch registrations are acknowledged
/// without a model call; questions may use up to `max_nav_steps` tool calls.
pub fn context_agent_query(
    inst: &mut ContextAgent,
    task: ContextTask,
    project: &SourceProject,
    cfg: &AgentConfig,
    llm: &mut dyn LlmBackend,
    mut spend: Spend<'_>,
) -> Result<String, AgentError> {
    let question = match task {
        ContextTask::NewPatch(p) => {
            inst.patches_seen += 1;
            let n = inst.patches_seen;
            inst.transcript
                .user(format!("The debugging agent applied patch #{n}:\n{}", p.render(project)));
            let ack = format!("Registered patch #{n} ({} edit(s)).", p.edits.len());
            inst.transcript.assistant(ack.clone(), None);
            return Ok(ack);
        }
        ContextTask::Question(q) => q,
    };
    inst.transcript
        .user(format!("{}\nQuestion: {question}", overview(project)));
    for _ in 0..cfg.max_nav_steps {
        let reply = ask(llm, &mut inst.transcript, &mut spend)?;
        let Some(tc) = reply.tool_call else {
            return Ok(cap_summary(&reply.content, cfg.summary_cap));
        };
        let result = match allowed(AgentKind::Context, &tc.name) {
            Some(ToolName::ReadFile) => read_file(project, &tc.args),
            Some(t @ (ToolName::QueryDef | ToolName::QueryRef)) => navigate(project, t, &tc.args),
            _ => format!("tool `{}` is not available to the context agent", tc.name),
        };
        inst.transcript.tool(result)?;
    }
    inst.transcript
        .user("Navigation limit reached. Answer now without calling a tool.");
    let reply = ask(llm, &mut inst.transcript, &mut spend)?;
    if reply.tool_call.is_some() {
        return Ok("The context agent found no answer within its navigation limit.".into());
    }
    Ok(cap_summary(&reply.content, cfg.summary_cap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_cap_counts_characters() {
        assert_eq!(cap_summary("short", 2000), "short");
        let long = "x".repeat(5000);
        let s = cap_summary(&long, 2000);
        assert_eq!(s.chars().count(), 2000);
        assert!(s.ends_with(TRUNCATED));
        assert_eq!(cap_summary("abcdef", 3), "abc");
    }
}
