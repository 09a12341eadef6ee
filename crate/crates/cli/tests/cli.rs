// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use common::*;
use proptest::prelude::*;
use rtlfix_agents::{FnBackend, LlmBackend, LlmError, ToolCall};
use rtlfix_cli::commands::*;
use rtlfix_cli::config::{ConfigError, LlmSelection, ProjectConfig};
use rtlfix_cli::oracle::{Oracle, OracleStyle};
use rtlfix_cli::synth::*;
use rtlfix_core::check::evaluate;
use rtlfix_core::rtl::build;
use rtlfix_core::wave::{vcd_read, vcd_write};
use rtlfix_core::Bv;

fn load(dir: &Path) -> ProjectConfig {
    ProjectConfig::load_with_env(&dir.join(CONFIG_NAME), &BTreeMap::new()).unwrap()
}

fn out_text(buf: Vec<u8>) -> String {
    String::from_utf8(buf).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtlfix"))
}

// ---------------------------------------------------------------- generator

#[test]
fn same_seed_same_bytes() {
    let a = bench(5, BugClass::NegateIfCondition, Some(OracleStyle::Explore));
    let b = bench(5, BugClass::NegateIfCondition, Some(OracleStyle::Explore));
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn committed_fixtures_are_current() {
    for c in BugClass::ALL {
        let fresh = bench(11, c, Some(OracleStyle::Explore));
        let dir = fixtures().join(c.name());
        for f in ["top.v", "reference.v", "bug.json", "fixture.jsonl", "tb0.golden.vcd", "tb1.tbl"] {
            assert_eq!(read(&fresh.path().join(f)), read(&dir.join(f)), "{c} {f}");
        }
    }
}

fn decls(text: &str, kw: &str) -> usize {
    text.lines().filter(|l| l.trim_start().starts_with(kw)).count()
}

#[test]
fn delayed_class_adds_one_register() {
    for seed in 0..10 {
        let b = generate(seed, BugClass::DelayedOneCycle).unwrap();
        assert_eq!(decls(&b.buggy, "reg ") , decls(&b.reference, "reg ") + 1);
        assert_eq!(
            b.buggy.matches("always @(posedge clk)").count(),
            b.reference.matches("always @(posedge clk)").count() + 1
        );
        assert!(b.bug.mutated.contains(&format!("{}_q", b.bug.signal)));
    }
}

#[test]
fn signal_and_register_counts() {
    for seed in 0..30 {
        let b = generate(seed, BugClass::IncorrectBinaryOp).unwrap();
        let regs = decls(&b.reference, "reg ");
        let wires = decls(&b.reference, "wire ");
        assert!((2..=4).contains(&regs), "{regs}");
        assert!((8..=16).contains(&(regs + wires)), "{}", regs + wires);
    }
}

#[test]
fn zero_attempts_exhaust() {
    assert_eq!(
        generate_with_attempts(1, BugClass::MissingExprItem, 0).unwrap_err(),
        SynthError::ResampleExhausted(BugClass::MissingExprItem, 0)
    );
}

#[test]
fn injection_record_points_at_the_change() {
    for c in BugClass::ALL {
        let b = generate(2, c).unwrap();
        assert_eq!(&b.buggy[b.bug.span.0..b.bug.span.1], b.bug.mutated);
        assert_eq!(b.buggy.replacen(&b.bug.mutated, &b.bug.original, 1), b.reference, "{c}");
        let line = b.buggy[..b.bug.span.0].lines().count() + 1;
        assert_eq!(line, b.bug.lines.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reference_passes_mutant_fails(seed in 0u64..10_000, k in 0usize..8) {
        let class = BugClass::ALL[k];
        let b = generate(seed, class).unwrap();
        prop_assert!(build(&b.buggy_project()).is_ok());
        for tb in &b.testbenches {
            prop_assert!(evaluate(&b.reference_project(), tb).unwrap().passed());
        }
        prop_assert!(b.testbenches.iter().any(|tb| !evaluate(&b.buggy_project(), tb).unwrap().passed()));
    }
}

// ------------------------------------------------------------------ config

#[test]
fn missing_golden_is_a_config_error() {
    let d = bench(3, BugClass::IncorrectReduceOp, None);
    fs::remove_file(d.path().join("tb1.golden.vcd")).unwrap();
    let e = ProjectConfig::load(&d.path().join(CONFIG_NAME)).unwrap_err();
    assert!(matches!(e, ConfigError::Missing { ref what, .. } if what == "golden VCD"), "{e}");
    let out = bin().args(["repair", "-c"]).arg(d.path().join(CONFIG_NAME)).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tb1.golden.vcd"));
}

#[test]
fn config_validation() {
    let d = bench(3, BugClass::IncorrectReduceOp, Some(OracleStyle::Direct));
    let path = d.path().join(CONFIG_NAME);
    let env = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    };
    let cfg = ProjectConfig::load_with_env(&path, &env(&[])).unwrap();
    assert_eq!(cfg.budget.max_tokens_total, 2_000_000);
    assert_eq!(cfg.budget.max_wall_seconds, 1800);
    assert_eq!(cfg.retries, 10);
    assert_eq!(cfg.coeffs.lambda1, 50.0);
    assert!(matches!(cfg.llm, LlmSelection::Replay(_)));

    let cfg = ProjectConfig::load_with_env(
        &path,
        &env(&[("RTLFIX__HEURISTIC__LAMBDA1", "7"), ("RTLFIX__SMT__SOLVER_CMD", "cvc5 --lang smt2")]),
    )
    .unwrap();
    assert_eq!(cfg.coeffs.lambda1, 7.0);
    assert_eq!(cfg.solver.cmd, "cvc5 --lang smt2");

    for bad in [
        ("RTLFIX__BUDGET__MAX_TOKENS_TOTAL", "0"),
        ("RTLFIX__LLM__BACKEND", "carrier-pigeon"),
        ("RTLFIX__LINT__EXTERNAL_CMD", "x"),
        ("RTLFIX__SEARCH__RETRIES", "0"),
        ("RTLFIX__PROJECT__NOPE", "1"),
    ] {
        let mut e = env(&[bad]);
        if bad.0 == "RTLFIX__LINT__EXTERNAL_CMD" {
            e.insert("RTLFIX__LINT__PARSE_REGEX".into(), "(".into());
        }
        assert!(ProjectConfig::load_with_env(&path, &e).is_err(), "{bad:?}");
    }
}

// ------------------------------------------------------------------ repair

#[test]
fn correct_design_exits_zero_with_no_patches() {
    let d = bench(4, BugClass::AdditionalMinusOne, None);
    set_key(&d.path().join(CONFIG_NAME), "project", "sources", "[\"reference.v\"]");
    fs::write(d.path().join(FIXTURE_NAME), "").unwrap();
    let cfg = load(d.path());
    let mut out = Vec::new();
    assert_eq!(cmd_repair(&cfg, &mut out).unwrap(), Exit::Ok);
    assert_eq!(read(&cfg.work_dir.join("patches.json")).trim(), "[]");
    assert_eq!(read(&cfg.work_dir.join("patches.txt")), "");
    assert!(cfg.work_dir.join("nodes/0/reference.v").exists());
}

#[test]
fn repair_then_verify() {
    for (i, c) in BugClass::ALL.into_iter().enumerate() {
        let d = bench(20 + i as u64, c, Some(OracleStyle::Explore));
        let cfg = load(d.path());
        assert_eq!(cmd_repair(&cfg, &mut Vec::new()).unwrap(), Exit::Ok, "{c}");
        let patched = cfg.work_dir.join("patched");
        let mut out = Vec::new();
        assert_eq!(cmd_verify(&cfg, Some(&patched), &mut out).unwrap(), Exit::Ok, "{c}");
        assert_eq!(out_text(out).matches(": pass").count(), 2);
        for f in ["report.txt", "report.json", "patches.txt", "stats.json"] {
            assert!(cfg.work_dir.join(f).exists(), "{f}");
        }
        assert!(fs::read_dir(cfg.work_dir.join("transcripts")).unwrap().count() >= 2);
        assert!(cfg.work_dir.join("nodes/1/hypothesis.txt").exists());
    }
}

#[test]
fn failed_search_exits_one() {
    let d = bench(6, BugClass::IncorrectBinaryOp, Some(OracleStyle::Hopeless));
    let cfg = load(d.path());
    let mut out = Vec::new();
    assert_eq!(cmd_repair(&cfg, &mut out).unwrap(), Exit::Failed);
    assert!(out_text(out).contains("outcome: failed"));
    assert!(!cfg.work_dir.join("patched").exists());
}

#[test]
fn stale_fixture_is_not_a_fix() {
    let a = bench(7, BugClass::NegateIfCondition, Some(OracleStyle::Explore));
    let b = bench(8, BugClass::DelayedOneCycle, None);
    fs::copy(a.path().join(FIXTURE_NAME), b.path().join(FIXTURE_NAME)).unwrap();
    let cfg = load(b.path());
    assert_eq!(cmd_repair(&cfg, &mut Vec::new()).unwrap(), Exit::Failed);
}

// ------------------------------------------------------------------ verify

#[test]
fn verify_reports_mismatches_and_parse_errors() {
    let d = bench(9, BugClass::IncorrectReduceOp, None);
    fs::write(d.path().join(FIXTURE_NAME), "").unwrap();
    let cfg = load(d.path());

    let mut out = Vec::new();
    assert_eq!(cmd_verify(&cfg, None, &mut out).unwrap(), Exit::Failed);
    let text = out_text(out);
    assert!(text.contains("FAIL") && text.contains("expected"), "{text}");
    assert!(text.contains("\n  p "), "{text}");

    let good = d.path().join("good");
    fs::create_dir_all(&good).unwrap();
    fs::copy(d.path().join("reference.v"), good.join("top.v")).unwrap();
    assert_eq!(cmd_verify(&cfg, Some(&good), &mut Vec::new()).unwrap(), Exit::Ok);

    // one flipped golden cell gives exactly one table row
    let gpath = d.path().join("tb0.golden.vcd");
    let mut golden = vcd_read(&fs::read(&gpath).unwrap()).unwrap();
    let p = golden.signals.get_mut("p").unwrap();
    p.values[5] = Bv::new(1, p.values[5].bits() ^ 1);
    fs::write(&gpath, vcd_write(&golden)).unwrap();
    let mut out = Vec::new();
    assert_eq!(cmd_verify(&cfg, Some(&good), &mut out).unwrap(), Exit::Failed);
    let text = out_text(out);
    assert!(text.contains("tb0: FAIL (1 mismatching cells)"), "{text}");
    assert!(text.contains("tb1: pass"), "{text}");
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with("p ")).count(), 1, "{text}");

    let bad = d.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("top.v"), "module top(input clk;\n").unwrap();
    let mut out = Vec::new();
    assert_eq!(cmd_verify(&cfg, Some(&bad), &mut out).unwrap(), Exit::Failed);
    assert!(out_text(out).contains("error:"));
}

// ------------------------------------------------------------------- passk

fn hopeless() -> Box<dyn LlmBackend> {
    Box::new(FnBackend(|_: &rtlfix_agents::ChatRequest<'_>| -> Result<(String, Option<ToolCall>), LlmError> {
        Ok((String::new(), Some(ToolCall::new("give_up_hypothesis", serde_json::json!({})))))
    }))
}

#[test]
fn passk_estimates() {
    let d = bench(12, BugClass::MissingExprItem, None);
    fs::write(d.path().join(FIXTURE_NAME), "").unwrap();
    let cfg = load(d.path());
    let bug = load_bug(d.path()).unwrap();
    let work = d.path().join("pk");

    let r = passk_with(&cfg, 10, 100, &work, &mut |_| Ok(Box::new(Oracle::new(bug.clone(), OracleStyle::Direct)))).unwrap();
    assert_eq!(r.pass_at_1(), 1.0);
    assert_eq!(r.trials.iter().map(|t| t.seed).collect::<Vec<_>>(), (100..110).collect::<Vec<_>>());
    assert!(work.join("trial_9/report.txt").exists() && work.join("passk.json").exists());

    let r = passk_with(&cfg, 10, 0, &work, &mut |_| Ok(hopeless())).unwrap();
    assert!(r.pass_at.iter().all(|p| *p == 0.0));
    assert_eq!(r.fixed, 0);

    let r = passk_with(&cfg, 10, 0, &work, &mut |seed| {
        Ok(if seed % 5 == 4 {
            hopeless()
        } else {
            Box::new(Oracle::new(bug.clone(), OracleStyle::Explore))
        })
    })
    .unwrap();
    assert_eq!(r.fixed, 8);
    assert!((r.pass_at_1() - 0.8).abs() < 1e-12);
    assert_eq!(r.pass_at[9], 1.0);
    assert!(r.trials.iter().all(|t| t.fixed == (t.outcome == "fixed")));
}

#[test]
fn passk_replay_per_seed() {
    let d = bench(13, BugClass::NegateIfCondition, None);
    let bug = load_bug(d.path()).unwrap();
    fs::write(d.path().join(FIXTURE_NAME), "").unwrap();
    let cfg = load(d.path());
    for seed in 40..43u64 {
        let style = if seed == 41 { OracleStyle::Hopeless } else { OracleStyle::Explore };
        let (jsonl, _) = record_fixture(&cfg, seed, Oracle::new(bug.clone(), style)).unwrap();
        fs::write(d.path().join(format!("fx_{seed}.jsonl")), jsonl).unwrap();
    }
    let path = d.path().join(CONFIG_NAME);
    set_key(&path, "llm", "replay", "\"fx_{seed}.jsonl\"");
    set_key(&path, "project", "seed", "40");
    let out = bin().args(["passk", "-k", "4", "-c"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("fixed 2/4"), "{text}");
    assert!(text.contains("trial 3 seed 43: error: replay fixture"), "{text}");
    assert!(text.contains("pass@1 = 0.5000"), "{text}");
}

// --------------------------------------------------------------------- bin

#[test]
fn binary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["synth-bench", "--seed", "17", "--class", "advanced-one-cycle", "--fixture", "explore", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = dir.path().join(CONFIG_NAME);
    let out = bin().args(["verify", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["repair", "-c"]).arg(&cfg).arg("--work-dir").arg(dir.path().join("w")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = bin()
        .args(["verify", "-c"])
        .arg(&cfg)
        .arg("--patched")
        .arg(dir.path().join("w/patched"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin().args(["repair", "--set", "budget.max_wall_seconds=0", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["repair", "-c", "/nonexistent/rtlfix.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
