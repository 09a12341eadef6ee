// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlfix_core::check::evaluate;
use rtlfix_core::rtl::build;
use rtlfix_core::rtl::{apply_patch, SourceProject, TransitionSystem};
use rtlfix_core::smt::*;
use rtlfix_core::wave::{compare, simulate, simulate_with, SimOptions, Testbench, WaveformTrace};
use rtlfix_core::Bv;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn project(text: &str) -> SourceProject {
    SourceProject::new("top").with_file("top.v", text)
}

fn ts_of(text: &str) -> TransitionSystem {
    build(&project(text)).unwrap().1
}

fn stimulus(ts: &TransitionSystem, n: usize, seed: u64, hold: &[(&str, u128, usize)]) -> WaveformTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = WaveformTrace::new(n);
    for i in &ts.inputs {
        let vals = (0..n)
            .map(|c| match hold.iter().find(|h| h.0 == i.name) {
                Some(&(_, v, until)) if c < until => Bv::new(i.width, v),
                Some(_) => Bv::zero(i.width),
                None => Bv::new(i.width, rng.gen()),
            })
            .collect();
        t.insert(i.name.clone(), i.width, vals).unwrap();
    }
    t
}

/// Testbench whose golden trace is the reference design's output.
fn golden_tb(reference: &str, n: usize, seed: u64, hold: &[(&str, u128, usize)]) -> Testbench {
    let ts = ts_of(reference);
    let stim = stimulus(&ts, n, seed, hold);
    let empty = WaveformTrace::new(n);
    let tb = Testbench::new("tb", stim.clone(), empty).unwrap();
    let out = simulate(&ts, &tb, &SimOptions::default()).unwrap();
    let golden = out.restrict(ts.outputs.iter().map(|o| o.name.as_str()));
    Testbench::new("tb", stim, golden).unwrap()
}

const COUNTER: &str = "module top(input clk, input rst, output reg [2:0] count, output wrap);
  always @(posedge clk) begin
    if (rst) count <= 3'd0;
    else count <= count + 3'd1;
  end
  assign wrap = (count == 3'd7);
endmodule
";

fn verified(src: &SourceProject, r: &Repair, tb: &Testbench) {
    let free = r.fvm.assignment(&r.result.model);
    let got = simulate_with(&r.instrumented, tb, &SimOptions::default(), &free).unwrap();
    assert!(compare(&got, &tb.golden).unwrap().passed, "instrumented model does not reproduce golden");
    let patch = fallback_patch(src, &r.result, r.instrumented.clock.as_deref()).unwrap();
    let fixed = apply_patch(src, &patch).unwrap();
    let ev = evaluate(&fixed, tb).unwrap();
    assert!(ev.passed(), "patched design fails:\n{}", fixed.files[0].text);
}

#[test]
fn literal_repair_matches_brute_force() {
    let tb = golden_tb(COUNTER, 24, 1, &[("rst", 1, 1)]);
    let buggy = COUNTER.replace("3'd7);", "3'd5);");
    // oracle: every value of the literal, checked by simulation
    let passing: Vec<u128> = (0..8)
        .filter(|v| {
            let text = buggy.replace("3'd5);", &format!("3'd{v});"));
            evaluate(&project(&text), &tb).unwrap().passed()
        })
        .collect();
    assert_eq!(passing, vec![7]);

    let src = project(&buggy);
    let ts = build(&src).unwrap().1;
    let template = RepairTemplate::all_sites(TemplateKind::ReplaceLiteral, &ts);
    let r = repair(&ts, &tb, &template, None, &cfg()).unwrap();
    assert_eq!(r.result.solver_stats.result, SolveStatus::Sat);
    assert_eq!(r.result.solver_stats.active_flags, Some(1));
    match &r.result.actions[..] {
        [RepairAction::RewriteLiteral { site, new_bits, new_text }] => {
            assert_eq!(site.text, "3'd5");
            assert_eq!(new_bits.bits(), passing[0]);
            assert_eq!(new_text, "3'd7");
        }
        other => panic!("{other:?}"),
    }
    let prompt = actions_to_prompt(&r.result).unwrap();
    assert!(prompt.contains("top.v:6") && prompt.contains("`3'd5`") && prompt.contains("`3'd7`"));
    verified(&src, &r, &tb);

    // minimality: no model with fewer active flags
    let script = encode_bmc(&r.instrumented, &tb, default_horizon(&tb)).unwrap();
    let mut text = script.clone();
    text.text.push_str(&at_most(&r.fvm.flags(), 0));
    text.text.push('\n');
    assert_eq!(check_script(&text, &cfg()).unwrap(), SolveStatus::Unsat);
}

#[test]
fn correct_design_needs_no_change() {
    let tb = golden_tb(COUNTER, 16, 2, &[("rst", 1, 1)]);
    let ts = ts_of(COUNTER);
    for kind in [TemplateKind::ReplaceLiteral, TemplateKind::ConditionalOverwrite] {
        let template = match kind {
            TemplateKind::ReplaceLiteral => RepairTemplate::all_sites(kind, &ts),
            _ => RepairTemplate::new(kind, vec![Target::Signal("count".into())]),
        };
        let r = repair(&ts, &tb, &template, None, &cfg()).unwrap();
        assert_eq!(r.result.solver_stats.result, SolveStatus::Sat);
        assert_eq!(r.result.solver_stats.active_flags, Some(0));
        assert!(r.result.actions.is_empty());
        assert!(actions_to_prompt(&r.result).is_err());
    }
}

const PIPE_GOLDEN: &str = "module top(input clk, input a, input b, output reg y);
  always @(posedge clk) y <= a & b;
endmodule
";
const PIPE_BUGGY: &str = "module top(input clk, input a, input b, output y);
  assign y = a & b;
endmodule
";

#[test]
fn cycle_shift_registers_signal() {
    let tb = golden_tb(PIPE_GOLDEN, 20, 3, &[]);
    // oracle: only the registered variant matches
    assert!(evaluate(&project(PIPE_GOLDEN), &tb).unwrap().passed());
    assert!(!evaluate(&project(PIPE_BUGGY), &tb).unwrap().passed());
    let src = project(PIPE_BUGGY);
    let ts = build(&src).unwrap().1;
    let t = RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal("y".into())]);
    let (inst, fvm) = instrument(&ts, &t).unwrap();
    let mut phi_on = fvm.identity();
    phi_on.insert(fvm.flags()[0].to_string(), Bv::new(1, 1));
    let delayed = simulate_with(&inst, &tb, &SimOptions::default(), &phi_on).unwrap();
    assert!(compare(&delayed, &tb.golden).unwrap().passed);

    let r = repair(&ts, &tb, &t, None, &cfg()).unwrap();
    assert_eq!(r.result.actions, vec![RepairAction::MakeRegistered { signal: "y".into() }]);
    let prompt = actions_to_prompt(&r.result).unwrap();
    assert!(prompt.contains("nonblocking"));
    verified(&src, &r, &tb);
}

#[test]
fn cycle_shift_makes_combinational() {
    let tb = golden_tb(PIPE_BUGGY, 20, 4, &[]);
    let src = project(PIPE_GOLDEN);
    let ts = build(&src).unwrap().1;
    let t = RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal("y".into())]);
    let r = repair(&ts, &tb, &t, None, &cfg()).unwrap();
    assert_eq!(r.result.actions, vec![RepairAction::MakeCombinational { signal: "y".into() }]);
    verified(&src, &r, &tb);
}

#[test]
fn cycle_shift_on_feedback_is_rejected() {
    let ts = ts_of(COUNTER);
    let t = RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal("count".into())]);
    assert!(matches!(instrument(&ts, &t), Err(InstrumentError::CombinationalLoop(_))));
    let bad = RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal("nope".into())]);
    assert!(matches!(instrument(&ts, &bad), Err(InstrumentError::TargetNotFound(..))));
    let empty = RepairTemplate::new(TemplateKind::ReplaceLiteral, vec![]);
    assert!(matches!(instrument(&ts, &empty), Err(InstrumentError::NoTargets)));
}

const LOAD_GOLDEN: &str = "module top(input clk, input en, input ld, input [3:0] d, output reg [3:0] q);
  always @(posedge clk) begin
    if (en && ld) q <= d;
  end
endmodule
";

#[test]
fn guard_adds_missing_condition() {
    let tb = golden_tb(LOAD_GOLDEN, 32, 5, &[]);
    let buggy = LOAD_GOLDEN.replace("if (en && ld)", "if (en)");
    let src = project(&buggy);
    let ts = build(&src).unwrap().1;
    let t = RepairTemplate::all_sites(TemplateKind::AddGuard, &ts);
    assert_eq!(t.targets.len(), 1);
    let r = repair(&ts, &tb, &t, None, &cfg()).unwrap();
    assert_eq!(r.result.solver_stats.active_flags, Some(1));
    match &r.result.actions[..] {
        [RepairAction::GuardCondition { new_expr, .. }] => assert!(new_expr.contains("ld"), "{new_expr}"),
        other => panic!("{other:?}"),
    }
    verified(&src, &r, &tb);
}

#[test]
fn guard_negates_condition() {
    let tb = golden_tb(LOAD_GOLDEN, 32, 6, &[]);
    let buggy = LOAD_GOLDEN.replace("if (en && ld)", "if (!(en && ld))");
    let src = project(&buggy);
    let ts = build(&src).unwrap().1;
    let r = repair(&ts, &tb, &RepairTemplate::all_sites(TemplateKind::AddGuard, &ts), None, &cfg()).unwrap();
    assert_eq!(r.result.solver_stats.active_flags, Some(1));
    verified(&src, &r, &tb);
}

#[test]
fn overwrite_restores_reset() {
    let tb = golden_tb(COUNTER, 24, 7, &[("rst", 1, 2)]);
    let buggy = COUNTER.replace("if (rst) count <= 3'd0;\n    else count <= count + 3'd1;", "count <= count + 3'd1;");
    assert_ne!(buggy, COUNTER);
    let src = project(&buggy);
    let ts = build(&src).unwrap().1;
    let t = RepairTemplate::new(TemplateKind::ConditionalOverwrite, vec![Target::Signal("count".into())]);
    let r = repair(&ts, &tb, &t, None, &cfg()).unwrap();
    match &r.result.actions[..] {
        [RepairAction::OverwriteUnder { signal, value, condition, .. }] => {
            assert_eq!(signal, "count");
            assert_eq!(value.bits(), 0);
            assert!(condition.contains("rst"), "{condition}");
        }
        other => panic!("{other:?}"),
    }
    verified(&src, &r, &tb);
}

#[test]
fn flags_off_is_identity() {
    let designs = [COUNTER, PIPE_BUGGY, LOAD_GOLDEN];
    for (k, d) in designs.iter().enumerate() {
        let ts = ts_of(d);
        let stim = stimulus(&ts, 128, 10 + k as u64, &[]);
        let tb = Testbench::new("r", stim, WaveformTrace::new(128)).unwrap();
        let base = simulate(&ts, &tb, &SimOptions::default()).unwrap();
        let mut templates = vec![
            RepairTemplate::all_sites(TemplateKind::ReplaceLiteral, &ts),
            RepairTemplate::all_sites(TemplateKind::AddGuard, &ts),
        ];
        for o in &ts.outputs {
            templates.push(RepairTemplate::new(TemplateKind::ConditionalOverwrite, vec![Target::Signal(o.name.clone())]));
            templates.push(RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal(o.name.clone())]));
        }
        for t in templates.into_iter().filter(|t| !t.targets.is_empty()) {
            let Ok((inst, fvm)) = instrument(&ts, &t) else { continue };
            let got = simulate_with(&inst, &tb, &SimOptions::default(), &fvm.identity()).unwrap();
            assert_eq!(got.signals, base.signals, "{:?} on design {k}", t.kind);
        }
    }
}

#[test]
fn bmc_agrees_with_simulation() {
    let tb = golden_tb(COUNTER, 12, 8, &[("rst", 1, 1)]);
    for (text, expect) in [(COUNTER.to_string(), true), (COUNTER.replace("3'd7);", "3'd6);"), false)] {
        let ts = ts_of(&text);
        let script = encode_bmc(&ts, &tb, 12).unwrap();
        let sat = check_script(&script, &cfg()).unwrap() == SolveStatus::Sat;
        assert_eq!(sat, expect);
        assert_eq!(evaluate(&project(&text), &tb).unwrap().passed(), expect);
    }
}
