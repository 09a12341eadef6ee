// SPDX-License-Identifier: Apache-2.0

//! The main agent: validation loop around a patch loop, one hypothesis at a
//! time.

use std::fmt::Write as _;
use std::str::FromStr;

use rtlfix_core::check::evaluate;
use rtlfix_core::lint::{lint_project, run_external_linter, LintMessage, Severity, LINT_TOOL_ERROR};
use rtlfix_core::rtl::source::Location;
use rtlfix_core::rtl::{apply_patch, build, Patch, Provenance, SourceProject};
use rtlfix_core::smt::{actions_to_prompt, fallback_patch, repair, RepairTemplate, Target, TemplateKind};
use rtlfix_core::wave::Testbench;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{AgentConfig, Hypothesis, Meter, QueryCounting};
use crate::context::{context_agent_query, ContextAgent, ContextTask};
use crate::lint_fix::{lint_fix_agent, LintDecision};
use crate::prompts;
use crate::session::{ask, Spend};
use crate::tools::{
    allowed, diff_waveform, edits_to_patch, parse_edits, read_file, run_testbenches, string_arg, strings_arg,
    TbStatus, ToolName,
};
use crate::transcript::{AgentKind, AgentTranscript};
use crate::{AgentError, LlmBackend};

/// Everything a hypothesis node needs to resume the agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub project: SourceProject,
    pub transcript: AgentTranscript,
    pub context: ContextAgent,
    pub patches: Vec<Patch>,
    pub n_queries: u64,
    pub n_compile_errors: u64,
    /// Tokens spent along the tree path, sub-agents included.
    pub tokens: u64,
    pub tb: TbStatus,
    pub suppressed: Vec<LintMessage>,
    /// Lint-fix conversations of the last step.
    pub lint_runs: Vec<AgentTranscript>,
}

fn task_message(src: &SourceProject, report: &str) -> String {
    let mut s = format!("Top module `{}`.\nFiles:\n", src.top_module);
    for f in &src.files {
        let _ = writeln!(s, "- {} ({} lines)", f.path, f.text.lines().count());
    }
    let _ = write!(s, "Testbench results:\n{report}");
    s
}

impl AgentState {
    pub fn new(project: SourceProject, tbs: &[Testbench]) -> Self {
        let (tb, report) = run_testbenches(&project, tbs);
        let mut transcript = AgentTranscript::new(AgentKind::Main);
        transcript.system(prompts::main_system());
        transcript.user(task_message(&project, &report));
        AgentState {
            project,
            transcript,
            context: ContextAgent::new(),
            patches: Vec::new(),
            n_queries: 0,
            n_compile_errors: 0,
            tokens: 0,
            tb,
            suppressed: Vec::new(),
            lint_runs: Vec::new(),
        }
    }

    /// Starting point for a new hypothesis: same code and dialogue, a fresh
    /// context agent.
    pub fn for_child(&self) -> Self {
        AgentState {
            context: ContextAgent::new(),
            lint_runs: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    Fixed(Vec<Patch>),
    NewHypothesis(Hypothesis),
    /// The operation budget ran out or the agent gave up; a replacement
    /// hypothesis is attached when the agent named one.
    OutOfPatience { forced: Option<Hypothesis> },
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepEvent {
    LlmTurn(AgentKind),
    LintDispatch(usize),
    ContextQuery,
    PatchApplied(usize),
    PatchRejected,
    Simulated { passed: usize, total: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub outcome: StepOutcome,
    /// Operations attempted, including the one that ran out of patience.
    pub ops: u32,
    pub events: Vec<StepEvent>,
}

pub struct Env<'a> {
    pub testbenches: &'a [Testbench],
    pub config: &'a AgentConfig,
}

enum Applied {
    Fixed,
    Kept(String),
    Rejected(String),
}

/// What the patch loop does after a patch attempt.
enum Flow {
    Done(StepOutcome),
    Validate,
    Continue,
}

enum SmtOut {
    Patch(Patch, String),
    Text(String),
}

struct Run<'a, 'b> {
    state: &'a mut AgentState,
    hyp: &'a Hypothesis,
    next_id: u64,
    env: &'a Env<'b>,
    llm: &'a mut dyn LlmBackend,
    meter: &'a mut Meter,
    ops: u32,
    events: Vec<StepEvent>,
}

fn same_message(a: &LintMessage, b: &LintMessage) -> bool {
    a.code == b.code && a.signal == b.signal && a.message == b.message
}

/// Open lint messages of a project; a front-end failure is one error message.
pub fn lint_messages(src: &SourceProject, cfg: &AgentConfig) -> Vec<LintMessage> {
    let mut msgs = match build(src) {
        Ok((modules, ts)) => lint_project(src, Some(&ts), &modules),
        Err(e) => {
            let d = e.diagnostic();
            vec![LintMessage {
                severity: Severity::Error,
                code: d.code.clone(),
                location: Location {
                    file: d.file.clone(),
                    line: d.line,
                    column: d.column,
                },
                message: d.message.clone(),
                signal: None,
            }]
        }
    };
    msgs.extend(run_external_linter(src, cfg.linter.as_ref()));
    msgs.retain(|m| m.code != LINT_TOOL_ERROR);
    msgs
}

impl Run<'_, '_> {
    fn cfg(&self) -> &AgentConfig {
        self.env.config
    }

    fn simulate(&mut self) -> String {
        let (st, report) = run_testbenches(&self.state.project, self.env.testbenches);
        self.events.push(StepEvent::Simulated {
            passed: st.passed,
            total: st.total,
        });
        self.state.tb = st;
        report
    }

    fn validation_loop(&mut self) -> Result<StepOutcome, AgentError> {
        let report = self.simulate();
        if self.state.tb.all_pass() {
            return Ok(StepOutcome::Fixed(self.state.patches.clone()));
        }
        self.state
            .transcript
            .user(format!("Hypothesis #{}: {}\n{report}", self.hyp.id, self.hyp.text));
        loop {
            let open: Vec<LintMessage> = lint_messages(&self.state.project, self.cfg())
                .into_iter()
                .filter(|m| !self.state.suppressed.iter().any(|s| same_message(s, m)))
                .collect();
            if !open.is_empty() {
                self.ops += 1;
                if self.ops > self.cfg().budget.max_ops_per_hypothesis {
                    return Ok(StepOutcome::OutOfPatience { forced: None });
                }
                if let Some(o) = self.lint_fix(open)? {
                    return Ok(o);
                }
                continue;
            }
            if let Some(o) = self.patch_loop()? {
                return Ok(o);
            }
        }
    }

    fn lint_fix(&mut self, open: Vec<LintMessage>) -> Result<Option<StepOutcome>, AgentError> {
        self.events.push(StepEvent::LintDispatch(open.len()));
        let project = self.state.project.clone();
        let cfg = self.env.config;
        let run = {
            let llm = &mut *self.llm;
            let spend = Spend {
                meter: self.meter,
                path_tokens: &mut self.state.tokens,
            };
            lint_fix_agent(&project, &open, cfg, llm, spend)?
        };
        let turns = run.transcript.messages.iter().filter(|m| m.role == crate::Role::Assistant).count();
        self.events.extend((0..turns).map(|_| StepEvent::LlmTurn(AgentKind::LintFix)));
        let mut merged = Patch::new(Provenance::LintFix);
        let mut summary = format!("The lint-fix agent handled {} lint message(s):\n", open.len());
        for (m, d) in &run.decisions {
            match d {
                LintDecision::Patch(p) => {
                    merged.edits.extend(p.edits.iter().cloned());
                    let _ = writeln!(summary, "- {} on {}: patched", m.code, m.signal.as_deref().unwrap_or("design"));
                }
                LintDecision::Suppress(r) => {
                    self.state.suppressed.push(m.clone());
                    let _ = writeln!(
                        summary,
                        "- {} on {}: suppressed ({r})",
                        m.code,
                        m.signal.as_deref().unwrap_or("design")
                    );
                }
            }
        }
        self.state.lint_runs.push(run.transcript);
        if merged.edits.is_empty() {
            self.state.transcript.user(summary);
            return Ok(None);
        }
        match self.apply(merged)? {
            Applied::Fixed => {
                self.state.transcript.user(summary + "All testbenches pass.");
                Ok(Some(StepOutcome::Fixed(self.state.patches.clone())))
            }
            Applied::Kept(r) => {
                self.state.transcript.user(summary + &r);
                Ok(None)
            }
            Applied::Rejected(r) => {
                // keep the dispatch from repeating forever
                for (m, _) in run.decisions {
                    self.state.suppressed.push(m);
                }
                self.state.transcript.user(summary + &r);
                Ok(None)
            }
        }
    }

    /// Applies, registers, simulates. A patch that does not parse or
    /// elaborate is counted as a compile error and dropped.
    fn apply(&mut self, patch: Patch) -> Result<Applied, AgentError> {
        let new = match apply_patch(&self.state.project, &patch) {
            Ok(p) => p,
            Err(e) => {
                self.state.n_compile_errors += 1;
                self.events.push(StepEvent::PatchRejected);
                return Ok(Applied::Rejected(format!("patch rejected: {e}")));
            }
        };
        if let Err(e) = build(&new) {
            self.state.n_compile_errors += 1;
            self.events.push(StepEvent::PatchRejected);
            return Ok(Applied::Rejected(format!("patch rejected, the design no longer elaborates: {e}")));
        }
        let rendered_on = self.state.project.clone();
        self.state.project = new;
        self.state.patches.push(patch.clone());
        let n = self.state.patches.len();
        self.events.push(StepEvent::PatchApplied(n));
        let cfg = self.env.config;
        {
            let llm = &mut *self.llm;
            let spend = Spend {
                meter: self.meter,
                path_tokens: &mut self.state.tokens,
            };
            context_agent_query(&mut self.state.context, ContextTask::NewPatch(patch), &rendered_on, cfg, llm, spend)?;
        }
        let report = self.simulate();
        if self.state.tb.all_pass() {
            return Ok(Applied::Fixed);
        }
        Ok(Applied::Kept(format!("Patch #{n} applied.\n{report}")))
    }

    fn tool_result(&mut self, text: impl Into<String>) -> Result<(), AgentError> {
        self.state.transcript.tool(text)?;
        Ok(())
    }

    fn patch_loop(&mut self) -> Result<Option<StepOutcome>, AgentError> {
        loop {
            self.ops += 1;
            if self.ops > self.cfg().budget.max_ops_per_hypothesis {
                return Ok(Some(StepOutcome::OutOfPatience { forced: None }));
            }
            let reply = {
                let llm = &mut *self.llm;
                let mut spend = Spend {
                    meter: self.meter,
                    path_tokens: &mut self.state.tokens,
                };
                ask(llm, &mut self.state.transcript, &mut spend)?
            };
            self.events.push(StepEvent::LlmTurn(AgentKind::Main));
            let Some(tc) = reply.tool_call else {
                self.state.transcript.user("Call exactly one tool.");
                continue;
            };
            if self.cfg().query_counting == QueryCounting::AllTools {
                self.state.n_queries += 1;
            }
            let Some(tool) = allowed(AgentKind::Main, &tc.name) else {
                self.tool_result(format!("tool `{}` is not available", tc.name))?;
                continue;
            };
            match tool {
                ToolName::ReadFile => {
                    let r = read_file(&self.state.project, &tc.args);
                    self.tool_result(r)?;
                }
                ToolName::RunSim => {
                    let r = self.simulate();
                    self.tool_result(r)?;
                }
                ToolName::DiffWaveform => {
                    let r = diff_waveform(&self.state.project, self.env.testbenches, &tc.args);
                    self.tool_result(r)?;
                }
                ToolName::RunLint => {
                    let r = self.lint_counts();
                    self.tool_result(r)?;
                }
                ToolName::AskContextAgent => {
                    let Some(q) = string_arg(&tc.args, "question") else {
                        self.tool_result("missing `question`")?;
                        continue;
                    };
                    if self.cfg().query_counting == QueryCounting::ContextAgent {
                        self.state.n_queries += 1;
                    }
                    self.events.push(StepEvent::ContextQuery);
                    let cfg = self.env.config;
                    let summary = {
                        let llm = &mut *self.llm;
                        let spend = Spend {
                            meter: self.meter,
                            path_tokens: &mut self.state.tokens,
                        };
                        context_agent_query(
                            &mut self.state.context,
                            ContextTask::Question(q),
                            &self.state.project,
                            cfg,
                            llm,
                            spend,
                        )?
                    };
                    self.tool_result(format!("Context agent: {summary}"))?;
                }
                ToolName::EditFile | ToolName::EmitPatch => {
                    let patch = parse_edits(&tc.args)
                        .and_then(|e| edits_to_patch(&self.state.project, &e, Provenance::Agent));
                    match patch {
                        Err(e) => self.tool_result(format!("invalid patch: {e}"))?,
                        Ok(p) => match self.patch_result(p, String::new())? {
                            Flow::Done(o) => return Ok(Some(o)),
                            Flow::Validate => return Ok(None),
                            Flow::Continue => {}
                        },
                    }
                }
                ToolName::SmtRepair => match self.smt(&tc.args) {
                    SmtOut::Text(t) => self.tool_result(t)?,
                    SmtOut::Patch(p, prompt) => match self.patch_result(p, prompt)? {
                        Flow::Done(o) => return Ok(Some(o)),
                        Flow::Validate => return Ok(None),
                        Flow::Continue => {}
                    },
                },
                ToolName::ProposeHypothesis => {
                    let Some(text) = string_arg(&tc.args, "text").filter(|t| !t.trim().is_empty()) else {
                        self.tool_result("missing `text`")?;
                        continue;
                    };
                    self.tool_result(format!("Hypothesis #{} recorded.", self.next_id))?;
                    return Ok(Some(StepOutcome::NewHypothesis(self.new_hypothesis(text))));
                }
                ToolName::GiveUpHypothesis => {
                    self.tool_result(format!("Hypothesis #{} abandoned.", self.hyp.id))?;
                    let forced = string_arg(&tc.args, "text")
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| self.new_hypothesis(t));
                    return Ok(Some(StepOutcome::OutOfPatience { forced }));
                }
                ToolName::QueryDef | ToolName::QueryRef => unreachable!("not offered to the main agent"),
            }
        }
    }

    /// Applies a patch requested through a tool call and answers the call.
    fn patch_result(&mut self, p: Patch, preface: String) -> Result<Flow, AgentError> {
        match self.apply(p)? {
            Applied::Fixed => {
                self.tool_result(format!("{preface}Patch applied. All testbenches pass."))?;
                Ok(Flow::Done(StepOutcome::Fixed(self.state.patches.clone())))
            }
            Applied::Kept(r) => {
                self.tool_result(format!("{preface}{r}"))?;
                Ok(Flow::Validate)
            }
            Applied::Rejected(r) => {
                self.tool_result(format!("{preface}{r}"))?;
                Ok(Flow::Continue)
            }
        }
    }

    fn new_hypothesis(&self, text: String) -> Hypothesis {
        Hypothesis {
            id: self.next_id,
            text,
            parent: Some(self.hyp.id),
            created_from: self.state.transcript.len(),
        }
    }

    fn lint_counts(&self) -> String {
        let msgs = lint_messages(&self.state.project, self.cfg());
        let open = msgs
            .iter()
            .filter(|m| !self.state.suppressed.iter().any(|s| same_message(s, m)))
            .count();
        let mut codes: Vec<&str> = msgs.iter().map(|m| m.code.as_str()).collect();
        codes.sort_unstable();
        codes.dedup();
        format!(
            "{} lint message(s), {open} open, {} suppressed; codes: {}",
            msgs.len(),
            msgs.len() - open,
            if codes.is_empty() { "none".into() } else { codes.join(", ") }
        )
    }

    fn smt(&mut self, args: &Value) -> SmtOut {
        let Some(kind) = string_arg(args, "template") else {
            return SmtOut::Text("missing `template`".into());
        };
        let kind = match TemplateKind::from_str(&kind) {
            Ok(k) => k,
            Err(e) => return SmtOut::Text(e),
        };
        let (_, ts) = match build(&self.state.project) {
            Ok(x) => x,
            Err(e) => return SmtOut::Text(format!("the design does not elaborate: {e}")),
        };
        let targets: Vec<Target> = strings_arg(args, "targets").iter().map(|s| Target::parse(s)).collect();
        let template = if !targets.is_empty() {
            RepairTemplate::new(kind, targets)
        } else if matches!(kind, TemplateKind::ReplaceLiteral | TemplateKind::AddGuard) {
            RepairTemplate::all_sites(kind, &ts)
        } else {
            return SmtOut::Text(format!("{kind} needs signal targets"));
        };
        let tbs = self.env.testbenches;
        let Some(tb) = tbs
            .iter()
            .find(|tb| !evaluate(&self.state.project, tb).is_ok_and(|e| e.passed()))
            .or(tbs.first())
        else {
            return SmtOut::Text("no testbench to repair against".into());
        };
        let mut solver = self.cfg().solver.clone();
        if let Some(dir) = &self.cfg().smt_dir {
            solver.script_path = Some(dir.join(format!("h{}_op{}.smt2", self.hyp.id, self.ops)));
        }
        let r = match repair(&ts, tb, &template, self.cfg().smt_horizon, &solver) {
            Ok(r) => r,
            Err(e) => return SmtOut::Text(format!("smt_repair failed: {e}")),
        };
        if !r.result.is_sat() {
            return SmtOut::Text(format!(
                "smt_repair ({kind}): {}; no repair of this template exists for these targets",
                r.result.solver_stats.result
            ));
        }
        let prompt = match actions_to_prompt(&r.result) {
            Ok(p) => p,
            Err(_) => return SmtOut::Text("smt_repair: the design already matches this testbench".into()),
        };
        match fallback_patch(&self.state.project, &r.result, ts.clock.as_deref()) {
            Ok(p) if !p.edits.is_empty() => SmtOut::Patch(p, prompt),
            _ => SmtOut::Text(format!("{prompt}Apply this change with edit_file.")),
        }
    }
}

/// Runs one expansion of a hypothesis. `next_id` is the id a newly proposed
/// hypothesis receives.
pub fn main_agent_step(
    state: &mut AgentState,
    hyp: &Hypothesis,
    next_id: u64,
    env: &Env<'_>,
    llm: &mut dyn LlmBackend,
    meter: &mut Meter,
) -> Result<Step, AgentError> {
    let mut run = Run {
        state,
        hyp,
        next_id,
        env,
        llm,
        meter,
        ops: 0,
        events: Vec::new(),
    };
    let outcome = match run.validation_loop() {
        Ok(o) => o,
        Err(AgentError::BudgetExhausted) => StepOutcome::BudgetExhausted,
        Err(e) => return Err(e),
    };
    Ok(Step {
        outcome,
        ops: run.ops,
        events: run.events,
    })
}
