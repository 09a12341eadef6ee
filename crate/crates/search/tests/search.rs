// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtlfix_agents::backend::ChatRequest;
use rtlfix_agents::{AgentConfig, AgentKind, AgentState, Budget, Env, FnBackend, LlmError, Meter, Role, ToolCall};
use rtlfix_core::bits::Bv;
use rtlfix_core::rtl::{build, SourceProject};
use rtlfix_core::wave::{Testbench, WaveformTrace};
use rtlfix_search::*;
use serde_json::json;

fn formula_oracle(tb_p: f64, n_tb: f64, q: f64, ce: f64, tok: f64, p: f64) -> f64 {
    let (l1, l2, l3, l4, l5, b) = (50.0, 1.0, 5.0, 0.0005, 3.0, 10.0);
    let mut acc = b;
    acc += l1 * (tb_p / n_tb);
    acc += l2 * q;
    acc -= l3 * ce;
    acc -= l4 * tok;
    acc -= l5 * p;
    acc
}

fn softmax_oracle(f: &[f64]) -> Vec<f64> {
    // direct form, fine for the small magnitudes used here
    let z: f64 = f.iter().map(|x| x.exp()).sum();
    f.iter().map(|x| x.exp() / z).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn heuristic_matches_oracle(
        total in 1u64..64,
        frac in 0.0f64..=1.0,
        q in 0u64..100,
        ce in 0u64..50,
        tok in 0u64..3_000_000,
        p in 0u64..40,
    ) {
        let passed = ((total as f64) * frac).floor() as u64;
        let f = NodeFeatures { tb_passed: passed, tb_total: total, n_queries: q, n_compile_errors: ce, n_tokens: tok, n_patches: p };
        let got = heuristic_value(&f, &HeuristicCoeffs::default()).unwrap();
        let want = formula_oracle(passed as f64, total as f64, q as f64, ce as f64, tok as f64, p as f64);
        prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }

    #[test]
    fn softmax_is_a_distribution(f in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let p = softmax(&f);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = f.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in p.iter().zip(softmax_oracle(&f)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn two_node_frequencies() {
    let e = std::f64::consts::E;
    let want = e / (e + 1.0);
    assert!((want - 0.7311).abs() < 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let first = (0..n).filter(|_| sample_index(&[1.0, 0.0], &mut rng) == Some(0)).count();
    let freq = first as f64 / n as f64;
    assert!((freq - want).abs() <= 0.02, "{freq}");
    assert!(((1.0 - freq) - (1.0 - want)).abs() <= 0.02);
}

const REFERENCE: &str = "module top(input clk, input rst, input en, output reg [2:0] count, output wrap);
  always @(posedge clk) begin
    if (rst) count <= 3'd0;
    else if (en) count <= count + 3'd1;
  end
  assign wrap = (count == 3'd7);
endmodule
";

fn project(text: &str) -> SourceProject {
    SourceProject::new("top").with_file("top.v", text)
}

fn buggy() -> SourceProject {
    project(&REFERENCE.replace("else if (en)", "else if (!en)"))
}

fn testbench() -> Vec<Testbench> {
    let (_, ts) = build(&project(REFERENCE)).unwrap();
    let n = 40;
    let mut stim = WaveformTrace::new(n);
    stim.insert("rst", 1, (0..n).map(|c| Bv::new(1, (c < 2) as u128)).collect()).unwrap();
    stim.insert("en", 1, (0..n).map(|c| Bv::new(1, (c % 5 != 3) as u128)).collect()).unwrap();
    vec![Testbench::from_reference("count", &ts, stim).unwrap()]
}

type Reply = Result<(String, Option<ToolCall>), LlmError>;

fn tool(name: &str, args: serde_json::Value) -> Reply {
    Ok((String::new(), Some(ToolCall::new(name, args))))
}

/// Proposes a hypothesis from the root and fixes the bug from any child.
fn solver_model(req: &ChatRequest<'_>) -> Reply {
    if req.agent != AgentKind::Main {
        return Ok(("nothing to add".into(), None));
    }
    let last_user = req
        .messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User && m.content.starts_with("Hypothesis #"))
        .unwrap();
    let since = req.messages.iter().rev().take_while(|m| !std::ptr::eq(*m, last_user)).count();
    if last_user.content.starts_with("Hypothesis #0:") {
        match since {
            0 => tool("run_sim", json!({})),
            _ => tool("propose_hypothesis", json!({"text": "the enable test is inverted"})),
        }
    } else {
        tool("edit_file", json!({"old": "if (!en)", "new": "if (en)"}))
    }
}

#[test]
fn already_correct_design() {
    let mut llm = FnBackend(|_: &ChatRequest<'_>| -> Reply { panic!("no call") });
    let run = run_search(&project(REFERENCE), &testbench(), &SearchConfig::default(), &mut llm);
    let SearchOutcome::Fixed { patches, stats, .. } = &run.outcome else {
        panic!()
    };
    assert!(patches.is_empty());
    assert_eq!(stats.expansions, 0);
}

#[test]
fn zero_token_budget_fails_before_expanding() {
    let mut llm = FnBackend(|_: &ChatRequest<'_>| -> Reply { panic!("no call") });
    let cfg = SearchConfig {
        budget: Budget {
            max_tokens_total: 0,
            ..Budget::default()
        },
        ..SearchConfig::default()
    };
    let run = run_search(&buggy(), &testbench(), &cfg, &mut llm);
    let SearchOutcome::Failed { stats } = &run.outcome else {
        panic!()
    };
    assert_eq!(stats.expansions, 0);
    assert_eq!(stats.failure.as_deref(), Some("budget exhausted"));
    assert_eq!(run.tree.nodes.len(), 1);
}

#[test]
fn negated_condition_fixed() {
    let tbs = testbench();
    let mut llm = FnBackend(solver_model);
    let run = run_search(&buggy(), &tbs, &SearchConfig::default(), &mut llm);
    let SearchOutcome::Fixed { project: p, patches, stats } = &run.outcome else {
        panic!("{:?}", run.outcome)
    };
    assert!(!patches.is_empty());
    assert_eq!(p.files[0].text, REFERENCE);
    assert!(stats.winning_path.len() >= 2);
    assert_eq!(stats.winning_path[0], 0);
    for tb in &tbs {
        assert!(rtlfix_core::check::evaluate(p, tb).unwrap().passed());
    }
    // append-only with consistent parentage
    for n in &run.tree.nodes[1..] {
        let parent = n.parent().unwrap();
        assert!(parent < n.id);
        assert!(run.tree.nodes[parent as usize].children.contains(&n.id));
        assert_eq!(n.f_value, heuristic_value(&n.features, &run.tree.coeffs).unwrap());
    }
}

#[test]
fn always_failing_model_runs_out_of_budget() {
    let mut llm = FnBackend(|req: &ChatRequest<'_>| -> Reply {
        if req.messages.iter().filter(|m| m.role == Role::Assistant).count() % 3 == 2 {
            tool("propose_hypothesis", json!({"text": "maybe elsewhere"}))
        } else {
            tool("run_sim", json!({}))
        }
    });
    let cfg = SearchConfig {
        budget: Budget {
            max_tokens_total: 60_000,
            ..Budget::default()
        },
        ..SearchConfig::default()
    };
    let run = run_search(&buggy(), &testbench(), &cfg, &mut llm);
    let SearchOutcome::Failed { stats } = &run.outcome else {
        panic!()
    };
    assert_eq!(stats.failure.as_deref(), Some("budget exhausted"));
    assert!(stats.tokens >= 60_000);
    assert!(run.tree.nodes.len() > 1);
    // features are path-cumulative, so tokens never decrease down the tree
    for n in &run.tree.nodes[1..] {
        let p = &run.tree.nodes[n.parent().unwrap() as usize];
        assert!(n.features.n_tokens >= p.features.n_tokens);
    }
}

#[test]
fn same_seed_same_reports() {
    let go = |seed| {
        let mut llm = FnBackend(solver_model);
        let cfg = SearchConfig {
            rng_seed: seed,
            ..SearchConfig::default()
        };
        let run = run_search(&buggy(), &testbench(), &cfg, &mut llm);
        (render_tree(&run.tree), machine_report(&run).to_string())
    };
    assert_eq!(go(5), go(5));
}

#[test]
fn sampling_is_reproducible_and_skips_exhausted() {
    let tbs = testbench();
    let state = AgentState::new(buggy(), &tbs);
    let mut tree = HypothesisTree::new(state.clone(), HeuristicCoeffs::default()).unwrap();
    for i in 0..3 {
        let h = rtlfix_agents::Hypothesis {
            id: 0,
            text: format!("h{i}"),
            parent: Some(0),
            created_from: 0,
        };
        tree.add_child(h, state.for_child()).unwrap();
    }
    tree.nodes[2].status = NodeStatus::Exhausted;
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200).map(|_| sample_node(&tree, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    let a = draw(9);
    assert_eq!(a, draw(9));
    assert!(!a.contains(&2));
    for n in &mut tree.nodes {
        n.status = NodeStatus::Exhausted;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_node(&tree, &mut rng), Err(TreeError::EmptyTree));
}

#[test]
fn expand_restores_snapshot() {
    let tbs = testbench();
    let cfg = AgentConfig::default();
    let env = Env {
        testbenches: &tbs,
        config: &cfg,
    };
    let mut meter = Meter::new(&cfg.budget);
    let mut log = Vec::new();
    let mut tree = HypothesisTree::new(AgentState::new(buggy(), &tbs), HeuristicCoeffs::default()).unwrap();
    let root_before = tree.nodes[0].state.clone();
    let mut llm = FnBackend(solver_model);

    let Expansion::Child(c) = expand(&mut tree, 0, &env, None, &mut llm, &mut meter, &mut log).unwrap() else {
        panic!()
    };
    assert_eq!(tree.nodes.len(), 2);
    assert_eq!(tree.nodes[c as usize].parent(), Some(0));
    // the child's snapshot is the code and dialogue at proposal time
    let child = &tree.nodes[c as usize];
    assert_eq!(child.transcript_snapshot().len(), child.hypothesis.created_from);

    let Expansion::Fixed(st) = expand(&mut tree, c, &env, None, &mut llm, &mut meter, &mut log).unwrap() else {
        panic!()
    };
    assert_eq!(st.project.files[0].text, REFERENCE);
    // neither snapshot changed
    assert_eq!(tree.nodes[0].state, root_before);
    assert_ne!(tree.nodes[c as usize].code_snapshot().files[0].text, REFERENCE);

    // expanding the root again starts from the identical bytes
    let seen = std::cell::RefCell::new(None);
    let mut probe = FnBackend(|req: &ChatRequest<'_>| -> Reply {
        seen.borrow_mut().get_or_insert_with(|| req.messages[..2].to_vec());
        tool("give_up_hypothesis", json!({}))
    });
    let out = expand(&mut tree, 0, &env, None, &mut probe, &mut meter, &mut log).unwrap();
    assert!(matches!(out, Expansion::Exhausted(None)));
    assert_eq!(seen.borrow().clone().unwrap(), root_before.transcript.messages[..2].to_vec());
    assert_eq!(tree.nodes[0].status, NodeStatus::Exhausted);
    assert!(matches!(
        expand(&mut tree, 0, &env, None, &mut probe, &mut meter, &mut log),
        Err(ExpandError::Tree(TreeError::NotOpen(0)))
    ));
}

#[test]
fn child_cap_exhausts_parent() {
    let tbs = testbench();
    let cfg = AgentConfig::default();
    let env = Env {
        testbenches: &tbs,
        config: &cfg,
    };
    let mut meter = Meter::new(&cfg.budget);
    let mut tree = HypothesisTree::new(AgentState::new(buggy(), &tbs), HeuristicCoeffs::default()).unwrap();
    let mut llm = FnBackend(solver_model);
    expand(&mut tree, 0, &env, Some(1), &mut llm, &mut meter, &mut Vec::new()).unwrap();
    assert_eq!(tree.nodes[0].status, NodeStatus::Exhausted);
}
