// SPDX-License-Identifier: Apache-2.0

//! The lint-fix agent: a fresh conversation per dispatch that either patches
//! or suppresses each message.

use rtlfix_core::lint::LintMessage;
use rtlfix_core::rtl::{Patch, Provenance, SourceProject};
use serde::{Deserialize, Serialize};

use crate::config::AgentConfig;
use crate::prompts;
use crate::session::{ask, Spend};
use crate::tools::{allowed, edits_to_patch, lint_block, navigate, parse_edits, read_file, ToolName};
use crate::transcript::{AgentKind, AgentTranscript};
use crate::{AgentError, LlmBackend};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LintDecision {
    Patch(Patch),
    Suppress(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LintFixRun {
    pub decisions: Vec<(LintMessage, LintDecision)>,
    pub transcript: AgentTranscript,
}

fn source_line(src: &SourceProject, m: &LintMessage) -> Option<String> {
    let f = src.files.iter().find(|f| f.path == m.location.file)?;
    let line = f.text.lines().nth(m.location.line.checked_sub(1)?)?;
    Some(line.trim().to_string())
}

/// `suppress: reason`, case-insensitive, anywhere at the start of a line.
fn suppression(text: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let l = l.trim();
        let head = l.get(..8)?;
        if head.eq_ignore_ascii_case("suppress") {
            let reason = l[8..].trim_start_matches([':', ' ', '-']).trim();
            Some(if reason.is_empty() { "no reason given".into() } else { reason.to_string() })
        } else {
            None
        }
    })
}

pub fn lint_fix_agent(
    project: &SourceProject,
    msgs: &[LintMessage],
    cfg: &AgentConfig,
    llm: &mut dyn LlmBackend,
    mut spend: Spend<'_>,
) -> Result<LintFixRun, AgentError> {
    if msgs.is_empty() {
        return Err(AgentError::Precondition("the lint-fix agent needs at least one message".into()));
    }
    let mut t = AgentTranscript::new(AgentKind::LintFix);
    t.system(prompts::lint_fix_system());
    let mut decisions = Vec::with_capacity(msgs.len());
    for (i, m) in msgs.iter().enumerate() {
        let mut task = format!("Message {} of {}:\n{}", i + 1, msgs.len(), lint_block(std::slice::from_ref(m)));
        if let Some(l) = source_line(project, m) {
            task.push_str(&format!("Source line: {l}\n"));
        }
        t.user(task);
        let mut decision = None;
        for _ in 0..=cfg.max_nav_steps {
            let reply = ask(llm, &mut t, &mut spend)?;
            let Some(tc) = reply.tool_call else {
                match suppression(&reply.content) {
                    Some(r) => {
                        decision = Some(LintDecision::Suppress(r));
                        break;
                    }
                    None => {
                        t.user("Call emit_patch or answer `suppress: <reason>`.");
                        continue;
                    }
                }
            };
            let result = match allowed(AgentKind::LintFix, &tc.name) {
                Some(ToolName::ReadFile) => read_file(project, &tc.args),
                Some(n @ (ToolName::QueryDef | ToolName::QueryRef)) => navigate(project, n, &tc.args),
                Some(ToolName::EmitPatch) => {
                    match parse_edits(&tc.args).and_then(|e| edits_to_patch(project, &e, Provenance::LintFix)) {
                        Ok(p) => {
                            t.tool("patch recorded")?;
                            decision = Some(LintDecision::Patch(p));
                            break;
                        }
                        Err(e) => format!("invalid patch: {e}"),
                    }
                }
                _ => format!("tool `{}` is not available to the lint-fix agent", tc.name),
            };
            t.tool(result)?;
        }
        let d = decision.unwrap_or_else(|| LintDecision::Suppress("no decision within the step limit".into()));
        decisions.push((m.clone(), d));
    }
    Ok(LintFixRun {
        decisions,
        transcript: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suppression_syntax() {
        assert_eq!(suppression("SUPPRESS: debug only").as_deref(), Some("debug only"));
        assert_eq!(suppression("I think so.\nsuppress - unused tap").as_deref(), Some("unused tap"));
        assert_eq!(suppression("suppress").as_deref(), Some("no reason given"));
        assert_eq!(suppression("fix it"), None);
    }
}
