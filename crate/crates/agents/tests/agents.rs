// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rtlfix_agents::backend::{ChatRequest, Recorder};
use rtlfix_agents::tools::{LINT_MARKER, NAV_MARKER};
use rtlfix_agents::*;
use rtlfix_core::bits::Bv;
use rtlfix_core::lint::{LintMessage, Severity, UNUSED, WIDTH_MISMATCH};
use rtlfix_core::rtl::source::Location;
use rtlfix_core::rtl::{build, SourceProject};
use rtlfix_core::wave::{Testbench, WaveformTrace};
use serde_json::json;

const REFERENCE: &str = "module top(input clk, input rst, input en, output reg [2:0] count, output wrap);
  always @(posedge clk) begin
    if (rst) count <= 3'd0;
    else if (en) count <= count + 3'd1;
  end
  assign wrap = (count == 3'd7);
endmodule
";

fn buggy() -> String {
    REFERENCE.replace("3'd7);", "3'd5);")
}

fn project(text: &str) -> SourceProject {
    SourceProject::new("top").with_file("top.v", text)
}

fn testbench() -> Testbench {
    let (_, ts) = build(&project(REFERENCE)).unwrap();
    let n = 40;
    let mut stim = WaveformTrace::new(n);
    stim.insert("rst", 1, (0..n).map(|c| Bv::new(1, (c < 2) as u128)).collect()).unwrap();
    stim.insert("en", 1, (0..n).map(|c| Bv::new(1, (c % 5 != 3) as u128)).collect()).unwrap();
    Testbench::from_reference("count", &ts, stim).unwrap()
}

fn call(name: &str, args: serde_json::Value) -> Result<(String, Option<ToolCall>), LlmError> {
    Ok((String::new(), Some(ToolCall::new(name, args))))
}

/// Scripted model: turn i of the main agent plays `main[i]`; the context
/// agent looks up a definition and then answers.
fn scripted(
    main: Vec<(&'static str, serde_json::Value)>,
) -> FnBackend<impl FnMut(&ChatRequest<'_>) -> Result<(String, Option<ToolCall>), LlmError>> {
    let mut turn = 0;
    FnBackend(move |req: &ChatRequest<'_>| match req.agent {
        AgentKind::Main => {
            let (n, a) = main.get(turn).cloned().unwrap_or(("run_sim", json!({})));
            turn += 1;
            call(n, a)
        }
        AgentKind::Context => match req.messages.last().map(|m| m.role) {
            Some(Role::Tool) => Ok(("`wrap` is driven by `assign wrap = (count == 3'd5);` on line 6.".into(), None)),
            _ => call("query_def", json!({"name": "wrap"})),
        },
        AgentKind::LintFix => Ok(("suppress: intentional".into(), None)),
    })
}

fn fix_call() -> (&'static str, serde_json::Value) {
    ("edit_file", json!({"file": "top.v", "old": "3'd5", "new": "3'd7"}))
}

fn run(
    state: &mut AgentState,
    llm: &mut dyn LlmBackend,
    cfg: &AgentConfig,
) -> Step {
    let tbs = [testbench()];
    let env = Env {
        testbenches: &tbs,
        config: cfg,
    };
    let mut meter = Meter::new(&cfg.budget);
    main_agent_step(state, &Hypothesis::root(), 1, &env, llm, &mut meter).unwrap()
}

#[test]
fn patch_that_passes_is_fixed() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    assert_eq!(state.tb.passed, 0);
    let mut llm = scripted(vec![("read_file", json!({"start_line": 6, "end_line": 6})), fix_call()]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    let StepOutcome::Fixed(stack) = step.outcome else {
        panic!("{:?}", step.outcome)
    };
    assert_eq!(stack.len(), 1);
    assert_eq!(state.project.files[0].text, REFERENCE);
    assert_eq!(step.ops, 2);
    assert!(state.tb.all_pass());
    // the context agent saw the patch without a model call
    assert_eq!(state.context.patches_seen, 1);
    assert_eq!(state.context.transcript.tokens_used, 0);
}

#[test]
fn correct_design_needs_no_call() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(REFERENCE), &tbs);
    let mut llm = FnBackend(|_: &ChatRequest<'_>| -> Result<(String, Option<ToolCall>), LlmError> {
        panic!("no call expected")
    });
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    assert_eq!(step.outcome, StepOutcome::Fixed(vec![]));
}

#[test]
fn out_of_patience_on_attempt_max_plus_one() {
    for max in [1u32, 3, 12] {
        let tbs = [testbench()];
        let mut state = AgentState::new(project(&buggy()), &tbs);
        let mut calls = 0u32;
        let mut llm = FnBackend(|req: &ChatRequest<'_>| {
            assert_eq!(req.agent, AgentKind::Main);
            calls += 1;
            call("run_sim", json!({}))
        });
        let mut cfg = AgentConfig::default();
        cfg.budget.max_ops_per_hypothesis = max;
        let step = run(&mut state, &mut llm, &cfg);
        assert_eq!(step.outcome, StepOutcome::OutOfPatience { forced: None });
        assert_eq!(step.ops, max + 1);
        assert_eq!(calls, max);
    }
}

#[test]
fn proposal_becomes_child_hypothesis() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![
        ("run_sim", json!({})),
        ("propose_hypothesis", json!({"text": "the wrap comparison constant is wrong"})),
    ]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    let StepOutcome::NewHypothesis(h) = step.outcome else {
        panic!("{:?}", step.outcome)
    };
    assert_eq!((h.id, h.parent), (1, Some(0)));
    assert_eq!(h.created_from, state.transcript.len());
    assert!(state.patches.is_empty());
}

#[test]
fn give_up_carries_forced_hypothesis() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![("give_up_hypothesis", json!({"text": "look at the enable"}))]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    let StepOutcome::OutOfPatience { forced: Some(h) } = step.outcome else {
        panic!("{:?}", step.outcome)
    };
    assert_eq!(h.text, "look at the enable");
}

#[test]
fn one_patch_between_simulations_and_patches_accumulate() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    // first patch is wrong, second reverts part of it and fixes the bug
    let mut llm = scripted(vec![
        ("edit_file", json!({"old": "3'd5", "new": "3'd6"})),
        ("emit_patch", json!({"edits": [{"old": "3'd6", "new": "3'd7"}]})),
    ]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    assert!(matches!(step.outcome, StepOutcome::Fixed(ref s) if s.len() == 2));
    let mut since_sim = 0;
    for e in &step.events {
        match e {
            StepEvent::PatchApplied(_) => {
                since_sim += 1;
                assert!(since_sim <= 1, "{:?}", step.events);
            }
            StepEvent::Simulated { .. } => since_sim = 0,
            _ => {}
        }
    }
}

#[test]
fn broken_patch_counts_compile_error_and_is_dropped() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![("edit_file", json!({"old": "3'd5);", "new": "3'd7;"})), fix_call()]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    assert!(matches!(step.outcome, StepOutcome::Fixed(ref s) if s.len() == 1));
    assert_eq!(state.n_compile_errors, 1);
    assert!(step.events.contains(&StepEvent::PatchRejected));
}

#[test]
fn context_isolation() {
    let tbs = [testbench()];
    let text = buggy().replace(
        "  assign wrap",
        "  wire [3:0] dbg;\n  assign dbg = 4'd1;\n  assign wrap",
    );
    let mut state = AgentState::new(project(&text), &tbs);
    let mut llm = scripted(vec![("ask_context_agent", json!({"question": "who drives wrap?"})), fix_call()]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    assert!(matches!(step.outcome, StepOutcome::Fixed(_)));
    assert!(step.events.iter().any(|e| matches!(e, StepEvent::LintDispatch(_))));
    assert_eq!(state.n_queries, 1);
    for m in &state.transcript.messages {
        assert!(!m.content.contains(NAV_MARKER), "{}", m.content);
        assert!(!m.content.contains(LINT_MARKER), "{}", m.content);
    }
    // the sub-agents did see raw output
    assert!(state.context.transcript.messages.iter().any(|m| m.content.starts_with(NAV_MARKER)));
    assert!(state.lint_runs[0].messages.iter().any(|m| m.content.contains(LINT_MARKER)));
    assert!(state.transcript.messages.iter().any(|m| m.content.contains("suppressed (intentional)")));
    state.transcript.validate().unwrap();
}

#[test]
fn query_counting_all_tools() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![("run_sim", json!({})), ("read_file", json!({})), fix_call()]);
    let cfg = AgentConfig {
        query_counting: QueryCounting::AllTools,
        ..AgentConfig::default()
    };
    run(&mut state, &mut llm, &cfg);
    assert_eq!(state.n_queries, 3);
}

#[test]
fn replay_reproduces_recorded_run() {
    let tbs = [testbench()];
    let script = || {
        scripted(vec![
            ("ask_context_agent", json!({"question": "who drives wrap?"})),
            ("diff_waveform", json!({})),
            fix_call(),
        ])
    };
    let mut rec = Recorder::new(script());
    let mut a = AgentState::new(project(&buggy()), &tbs);
    let sa = run(&mut a, &mut rec, &AgentConfig::default());
    let fixture = rec.to_jsonl();

    let mut replay = ReplayBackend::parse(&fixture).unwrap();
    let mut b = AgentState::new(project(&buggy()), &tbs);
    let sb = run(&mut b, &mut replay, &AgentConfig::default());
    assert_eq!(sa.outcome, sb.outcome);
    assert_eq!(a, b);
    assert_eq!(replay.remaining(), 0);
    assert!(a.tokens > 0);
    assert_eq!(a.tokens, a.transcript.tokens_used + a.context.transcript.tokens_used);

    // an extra call the fixture does not have
    let mut short = ReplayBackend::parse(fixture.lines().next().unwrap()).unwrap();
    let mut c = AgentState::new(project(&buggy()), &tbs);
    let cfg = AgentConfig::default();
    let env = Env {
        testbenches: &tbs,
        config: &cfg,
    };
    let err = main_agent_step(&mut c, &Hypothesis::root(), 1, &env, &mut short, &mut Meter::new(&cfg.budget))
        .unwrap_err();
    assert!(matches!(err, AgentError::Llm(LlmError::ReplayDivergence { .. })));
    assert!(!err.is_retryable());
}

#[test]
fn transport_error_is_retryable() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = rtlfix_agents::backend::LiveBackend::new(rtlfix_agents::backend::LiveConfig {
        url: None,
        model: None,
        key: None,
        timeout: std::time::Duration::from_secs(1),
    });
    let cfg = AgentConfig::default();
    let env = Env {
        testbenches: &tbs,
        config: &cfg,
    };
    let err = main_agent_step(&mut state, &Hypothesis::root(), 1, &env, &mut llm, &mut Meter::new(&cfg.budget))
        .unwrap_err();
    assert!(err.is_retryable(), "{err}");
}

#[test]
fn token_budget_stops_the_step() {
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![]);
    let mut cfg = AgentConfig::default();
    cfg.budget.max_tokens_total = 1;
    let step = run(&mut state, &mut llm, &cfg);
    assert_eq!(step.outcome, StepOutcome::BudgetExhausted);
    // usage is only known after a call, so one call may overshoot
    assert!(step.events.iter().filter(|e| matches!(e, StepEvent::LlmTurn(_))).count() <= 1);
}

#[test]
fn smt_repair_tool_patches_literal() {
    if !rtlfix_core::smt::solver_available(&Default::default()) {
        eprintln!("skipping: no SMT solver");
        return;
    }
    let tbs = [testbench()];
    let mut state = AgentState::new(project(&buggy()), &tbs);
    let mut llm = scripted(vec![("smt_repair", json!({"template": "replace_literal"}))]);
    let step = run(&mut state, &mut llm, &AgentConfig::default());
    let StepOutcome::Fixed(stack) = step.outcome else {
        panic!("{:?}", step.outcome)
    };
    assert_eq!(stack[0].provenance, rtlfix_core::rtl::Provenance::SmtTemplate);
    assert_eq!(state.project.files[0].text, REFERENCE);
}

fn message(code: &str, signal: &str, line: usize) -> LintMessage {
    LintMessage {
        severity: Severity::Warning,
        code: code.into(),
        location: Location {
            file: "top.v".into(),
            line,
            column: 3,
        },
        message: format!("{signal} issue"),
        signal: Some(signal.into()),
    }
}

#[test]
fn lint_fix_patch_or_suppress() {
    let text = "module top(input [3:0] a, output [7:0] y);\n  wire dbg;\n  assign y = a + 4'd1;\nendmodule\n";
    let src = project(text);
    let msgs = [message(WIDTH_MISMATCH, "y", 3), message(UNUSED, "dbg", 2)];
    let mut llm = FnBackend(|req: &ChatRequest<'_>| {
        assert_eq!(req.agent, AgentKind::LintFix);
        let last = &req.messages.last().unwrap().content;
        if last.contains(WIDTH_MISMATCH) {
            call("emit_patch", json!({"old": "4'd1", "new": "8'd1"}))
        } else {
            Ok(("suppress: debug signal".into(), None))
        }
    });
    let cfg = AgentConfig::default();
    let mut meter = Meter::new(&cfg.budget);
    let mut path = 0;
    let run = lint_fix_agent(
        &src,
        &msgs,
        &cfg,
        &mut llm,
        Spend {
            meter: &mut meter,
            path_tokens: &mut path,
        },
    )
    .unwrap();
    assert!(matches!(&run.decisions[0].1, LintDecision::Patch(p) if p.edits[0].replacement == "8'd1"));
    assert_eq!(run.decisions[1].1, LintDecision::Suppress("debug signal".into()));
    assert_eq!(path, meter.tokens);

    let err = lint_fix_agent(
        &src,
        &[],
        &cfg,
        &mut llm,
        Spend {
            meter: &mut meter,
            path_tokens: &mut path,
        },
    )
    .unwrap_err();
    assert!(matches!(err, AgentError::Precondition(_)));
}

#[test]
fn context_agent_answers_and_caps() {
    let src = project(REFERENCE);
    let mut inst = ContextAgent::new();
    let mut seen = BTreeMap::new();
    let mut llm = FnBackend(|req: &ChatRequest<'_>| {
        let last = req.messages.last().unwrap();
        if last.role == Role::Tool {
            seen.insert(req.messages.len(), last.content.clone());
            Ok(("x".repeat(3000), None))
        } else {
            call("query_def", json!({"name": "busy"}))
        }
    });
    let cfg = AgentConfig::default();
    let mut meter = Meter::new(&cfg.budget);
    let mut path = 0;
    let s = context_agent_query(
        &mut inst,
        ContextTask::Question("who drives signal busy?".into()),
        &src,
        &cfg,
        &mut llm,
        Spend {
            meter: &mut meter,
            path_tokens: &mut path,
        },
    )
    .unwrap();
    assert_eq!(s.chars().count(), 2000);
    assert!(seen.values().any(|v| v.ends_with("busy: not found")));
}
