// SPDX-License-Identifier: Apache-2.0

//! One line per acceptance criterion. Every check runs even when an earlier
//! one fails; the test fails at the end if any did.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlfix_agents::backend::ENV_KEY;
use rtlfix_cli::commands::*;
use rtlfix_cli::config::{LlmSelection, ProjectConfig};
use rtlfix_cli::oracle::OracleStyle;
use rtlfix_cli::synth::{generate, BugClass};
use rtlfix_core::check::evaluate;
use rtlfix_core::lint::lint_project;
use rtlfix_core::rtl::{apply_patch, build, parse_project, SourceProject, TransitionSystem};
use rtlfix_core::smt::*;
use rtlfix_core::wave::*;
use rtlfix_core::Bv;
use rtlfix_search::{heuristic_value, sample_index, softmax, HeuristicCoeffs, NodeFeatures};

// pinned tolerances and limits
const HEURISTIC_TOL: f64 = 1e-9;
const HEURISTIC_VECTORS: usize = 1000;
const HEURISTIC_TIME: Duration = Duration::from_secs(1);
const SOFTMAX_SUM_TOL: f64 = 1e-12;
const SOFTMAX_SHIFT_TOL: f64 = 1e-12;
const DRAWS: usize = 10_000;
const FREQ_TOL: f64 = 0.02;
const BMC_DESIGNS: usize = 20;
const BMC_MAX_CYCLES: usize = 64;
const BMC_TIME: Duration = Duration::from_secs(120);
const SOLVE_TIME: Duration = Duration::from_secs(30);
const REPLAY_TIME: Duration = Duration::from_secs(300);
const VCD_TRACES: usize = 100;
const PASSK_RETRIES: usize = 10;

fn criterion(n: u32, name: &str, f: impl FnOnce() -> String) -> bool {
    let started = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f));
    let ms = started.elapsed().as_millis();
    match r {
        Ok(detail) => {
            println!("criterion {n} PASS  {name}: {detail} [{ms} ms]");
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("criterion {n} FAIL  {name}: {msg} [{ms} ms]");
            false
        }
    }
}

// ----------------------------------------------------------------------- 1

fn heuristic_oracle(tb_p: u64, n_tb: u64, q: u64, ce: u64, tok: u64, p: u64) -> f64 {
    let a = 50.0 * (tb_p as f64 / n_tb as f64);
    let b = 1.0 * q as f64;
    let c = 5.0 * ce as f64;
    let d = 0.0005 * tok as f64;
    let e = 3.0 * p as f64;
    a + b - c - d - e + 10.0
}

fn c1() -> String {
    let c = HeuristicCoeffs::default();
    assert_eq!(
        (c.lambda1, c.lambda2, c.lambda3, c.lambda4, c.lambda5, c.base_b),
        (50.0, 1.0, 5.0, 0.0005, 3.0, 10.0)
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..HEURISTIC_VECTORS {
        let n_tb = rng.gen_range(1..=64);
        let f = NodeFeatures {
            tb_passed: rng.gen_range(0..=n_tb),
            tb_total: n_tb,
            n_queries: rng.gen_range(0..200),
            n_compile_errors: rng.gen_range(0..50),
            n_tokens: rng.gen_range(0..=2_000_000),
            n_patches: rng.gen_range(0..30),
        };
        let got = heuristic_value(&f, &c).unwrap();
        let want = heuristic_oracle(f.tb_passed, f.tb_total, f.n_queries, f.n_compile_errors, f.n_tokens, f.n_patches);
        worst = worst.max((got - want).abs());
    }
    let el = started.elapsed();
    assert!(worst <= HEURISTIC_TOL, "max error {worst:e}");
    assert!(el < HEURISTIC_TIME, "took {el:?}");
    format!("{HEURISTIC_VECTORS} vectors, max error {worst:e}, {el:?}")
}

// ----------------------------------------------------------------------- 2

fn c2() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..50);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
        let p = softmax(&f);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let shift = rng.gen_range(-500.0..500.0);
        let q = softmax(&f.iter().map(|x| x + shift).collect::<Vec<_>>());
        for (a, b) in p.iter().zip(&q) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    assert!(worst_sum <= SOFTMAX_SUM_TOL, "sum error {worst_sum:e}");
    assert!(worst_shift <= SOFTMAX_SHIFT_TOL, "shift error {worst_shift:e}");
    let e = std::f64::consts::E;
    let want = [e / (1.0 + e), 1.0 / (1.0 + e)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 2];
    for _ in 0..DRAWS {
        counts[sample_index(&[1.0, 0.0], &mut rng).unwrap()] += 1;
    }
    let freq = [counts[0] as f64 / DRAWS as f64, counts[1] as f64 / DRAWS as f64];
    for i in 0..2 {
        assert!((freq[i] - want[i]).abs() <= FREQ_TOL, "frequency {freq:?} vs {want:?}");
    }
    format!("sum err {worst_sum:e}, shift err {worst_shift:e}, draws ({:.4}, {:.4})", freq[0], freq[1])
}

// ----------------------------------------------------------------------- 3

fn c3() -> String {
    let started = Instant::now();
    let cfg = SolverConfig::default();
    let mut agree = 0;
    let mut outcomes = BTreeSet::new();
    for i in 0..BMC_DESIGNS / 2 {
        let b = generate(300 + i as u64, BugClass::ALL[i % 8]).unwrap();
        for src in [b.reference_project(), b.buggy_project()] {
            let (_, ts) = build(&src).unwrap();
            let mut ok = true;
            for tb in &b.testbenches {
                assert!(tb.n_cycles() <= BMC_MAX_CYCLES);
                let sim = evaluate(&src, tb).unwrap().passed();
                let script = encode_bmc(&ts, tb, tb.n_cycles()).unwrap();
                let bmc = check_script(&script, &cfg).unwrap() == SolveStatus::Sat;
                ok &= sim == bmc;
                outcomes.insert(sim);
            }
            agree += ok as usize;
        }
    }
    let el = started.elapsed();
    assert_eq!(agree, BMC_DESIGNS, "{agree}/{BMC_DESIGNS} agree");
    assert_eq!(outcomes.len(), 2, "only one verdict seen");
    assert!(el < BMC_TIME, "took {el:?}");
    format!("{agree}/{BMC_DESIGNS} agree, {el:?}")
}

// ----------------------------------------------------------------------- 4

const COUNTER: &str = "module top(input clk, input rst, output reg [2:0] count, output wrap);
  always @(posedge clk) begin
    if (rst) count <= 3'd0;
    else count <= count + 3'd1;
  end
  assign wrap = (count == 3'd7);
endmodule
";

const LOAD: &str = "module top(input clk, input en, input ld, input [3:0] d, output reg [3:0] q);
  always @(posedge clk) begin
    if (en && ld) q <= d;
  end
endmodule
";

const PIPE: &str = "module top(input clk, input a, input b, output reg y);
  always @(posedge clk) y <= a & b;
endmodule
";

fn stimulus(ts: &TransitionSystem, n: usize, seed: u64, rst_cycles: usize) -> WaveformTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = WaveformTrace::new(n);
    for i in ts.inputs.iter().filter(|i| i.name != "clk") {
        let vals = (0..n)
            .map(|c| match i.name.as_str() {
                "rst" => Bv::new(1, (c < rst_cycles) as u128),
                _ => Bv::new(i.width, rng.gen()),
            })
            .collect();
        t.insert(i.name.clone(), i.width, vals).unwrap();
    }
    t
}

/// A project directory whose golden comes from `reference`.
fn write_project(dir: &Path, reference: &str, buggy: &str, n: usize, seed: u64, rst: usize) -> ProjectConfig {
    let rsrc = SourceProject::new("top").with_file("top.v", reference);
    let (_, rts) = build(&rsrc).unwrap();
    let tb = Testbench::from_reference("tb0", &rts, stimulus(&rts, n, seed, rst)).unwrap();
    fs::write(dir.join("top.v"), buggy).unwrap();
    fs::write(dir.join("tb0.tbl"), write_table(&tb.stimulus)).unwrap();
    fs::write(dir.join("tb0.golden.vcd"), vcd_write(&tb.golden)).unwrap();
    fs::write(dir.join("fixture.jsonl"), "").unwrap();
    fs::write(
        dir.join("rtlfix.toml"),
        "[project]\ntop = \"top\"\nsources = [\"top.v\"]\n\n[[testbench]]\nstimulus = \"tb0.tbl\"\ngolden = \"tb0.golden.vcd\"\n\n[llm]\nreplay = \"fixture.jsonl\"\n",
    )
    .unwrap();
    ProjectConfig::load_with_env(&dir.join("rtlfix.toml"), &BTreeMap::new()).unwrap()
}

fn c4() -> String {
    let cases: Vec<(&str, String, String, Box<dyn Fn(&TransitionSystem) -> RepairTemplate>, usize)> = vec![
        (
            "replace_literal",
            COUNTER.into(),
            COUNTER.replace("3'd7);", "3'd5);"),
            Box::new(|ts| RepairTemplate::all_sites(TemplateKind::ReplaceLiteral, ts)),
            1,
        ),
        (
            "add_guard",
            LOAD.into(),
            LOAD.replace("if (en && ld)", "if (en)"),
            Box::new(|ts| RepairTemplate::all_sites(TemplateKind::AddGuard, ts)),
            0,
        ),
        (
            "conditional_overwrite",
            COUNTER.into(),
            COUNTER.replace("if (rst) count <= 3'd0;\n    else count <= count + 3'd1;", "count <= count + 3'd1;"),
            Box::new(|_| RepairTemplate::new(TemplateKind::ConditionalOverwrite, vec![Target::Signal("count".into())])),
            2,
        ),
        (
            "cycle_shift",
            PIPE.into(),
            PIPE.replace("output reg y", "output y").replace("always @(posedge clk) y <=", "assign y ="),
            Box::new(|_| RepairTemplate::new(TemplateKind::CycleShift, vec![Target::Signal("y".into())])),
            0,
        ),
    ];
    let cfg = SolverConfig::default();
    let mut parts = Vec::new();
    for (k, (name, reference, buggy, template, rst)) in cases.into_iter().enumerate() {
        assert_ne!(reference, buggy, "{name}: mutation did not apply");
        let dir = tempfile::tempdir().unwrap();
        let pc = write_project(dir.path(), &reference, &buggy, 32, 40 + k as u64, rst);
        let src = load_sources(&pc, None).unwrap();
        let (_, ts) = build(&src).unwrap();
        let tb = &load_testbenches(&pc, &ts).unwrap()[0];
        // oracle for minimality: the unchanged design fails, so one change is the least
        assert!(!evaluate(&src, tb).unwrap().passed(), "{name}: buggy design passes");
        let started = Instant::now();
        let r = repair(&ts, tb, &template(&ts), None, &cfg).unwrap();
        let el = started.elapsed();
        assert!(el < SOLVE_TIME, "{name}: solve took {el:?}");
        assert_eq!(r.result.solver_stats.result, SolveStatus::Sat, "{name}");
        assert_eq!(r.result.solver_stats.active_flags, Some(1), "{name}: not minimal");
        let patch = fallback_patch(&src, &r.result, r.instrumented.clock.as_deref()).unwrap();
        let fixed = apply_patch(&src, &patch).unwrap();
        let out = dir.path().join("patched");
        fs::create_dir_all(&out).unwrap();
        fs::write(out.join("top.v"), &fixed.files[0].text).unwrap();
        let mut text = Vec::new();
        assert_eq!(cmd_verify(&pc, Some(&out), &mut text).unwrap(), Exit::Ok, "{name}: {}", String::from_utf8_lossy(&text));
        parts.push(format!("{name} {} ms", el.as_millis()));
    }
    parts.join(", ")
}

// ----------------------------------------------------------------------- 5

fn c5() -> String {
    let started = Instant::now();
    let mut fixed = 0;
    for c in BugClass::ALL {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&fixtures().join(c.name()), dir.path());
        let cfg = ProjectConfig::load_with_env(&dir.path().join(CONFIG_NAME), &BTreeMap::new()).unwrap();
        assert_eq!(cmd_repair(&cfg, &mut Vec::new()).unwrap(), Exit::Ok, "{c}: repair failed");
        let patched = cfg.work_dir.join("patched");
        assert_eq!(cmd_verify(&cfg, Some(&patched), &mut Vec::new()).unwrap(), Exit::Ok, "{c}: verify failed");
        fixed += 1;
    }
    let el = started.elapsed();
    assert!(el < REPLAY_TIME, "took {el:?}");
    format!("{fixed}/8 classes fixed, {el:?}")
}

// ----------------------------------------------------------------------- 6

fn c6() -> String {
    let files = ["patches.txt", "patches.json", "report.txt", "report.json"];
    let mut compared = 0;
    for c in BugClass::ALL {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&fixtures().join(c.name()), dir.path());
        let mut cfg = ProjectConfig::load_with_env(&dir.path().join(CONFIG_NAME), &BTreeMap::new()).unwrap();
        let mut runs = Vec::new();
        for w in ["run_a", "run_b"] {
            cfg.work_dir = dir.path().join(w);
            cmd_repair(&cfg, &mut Vec::new()).unwrap();
            runs.push(files.map(|f| fs::read(cfg.work_dir.join(f)).unwrap()));
        }
        assert!(runs[0] == runs[1], "{c}: artifacts differ");
        compared += files.len();
    }
    format!("{compared} artifact pairs byte-identical")
}

// ----------------------------------------------------------------------- 7

const LINT_CORPUS: [(&str, &str); 12] = [
    ("MULTI_DRIVEN", "module m(input a, b, output w); assign w = a; assign w = b; endmodule"),
    (
        "MULTI_DRIVEN",
        "module m(input clk, input a, b, output reg q); always @(posedge clk) q <= a; always @(posedge clk) q <= b; endmodule",
    ),
    ("PART_DRIVEN", "module m(input [7:0] x, output [7:0] w); assign w[3:0] = x[3:0]; endmodule"),
    (
        "PART_DRIVEN",
        "module m(input [3:0] x, output [3:0] y); wire [3:0] t; assign t[0] = x[0]; assign t[3:2] = x[3:2]; assign y = t; endmodule",
    ),
    ("WIDTH_MISMATCH", "module m(input [7:0] a, b, output [3:0] y); assign y = a[7:0] + b[7:0]; endmodule"),
    ("WIDTH_MISMATCH", "module m(input [7:0] a, output [3:0] y); assign y = a; endmodule"),
    ("UNDRIVEN", "module m(input a, output y); wire t; assign y = a & t; endmodule"),
    ("UNDRIVEN", "module m(input a, output y, output z); assign y = a; endmodule"),
    ("UNUSED", "module m(input a, input b, output y); assign y = a; endmodule"),
    ("UNUSED", "module m(input a, output y); wire t; assign t = ~a; assign y = a; endmodule"),
    ("LATCH_INFERRED", "module m(input en, input d, output reg q); always @(*) if (en) q = d; endmodule"),
    (
        "LATCH_INFERRED",
        "module m(input [1:0] s, input a, b, output reg y); always @(*) case (s) 2'd0: y = a; 2'd1: y = b; endcase endmodule",
    ),
];

fn c7() -> String {
    let mut hits = 0;
    let mut per_code: BTreeMap<&str, usize> = BTreeMap::new();
    for (want, text) in LINT_CORPUS {
        let p = SourceProject::new("m").with_file("m.v", text);
        let ms = parse_project(&p).unwrap();
        let ts = build(&p).ok().map(|x| x.1);
        let codes: Vec<String> = lint_project(&p, ts.as_ref(), &ms).into_iter().map(|m| m.code).collect();
        if codes == [want] {
            hits += 1;
        } else {
            println!("  lint: expected [{want}], got {codes:?} for {text}");
        }
        *per_code.entry(want).or_default() += 1;
    }
    assert!(per_code.values().all(|n| *n == 2) && per_code.len() == 6);
    assert_eq!(hits, LINT_CORPUS.len(), "{hits}/12");
    format!("{hits}/12")
}

// ----------------------------------------------------------------------- 8

fn c8() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cells = 0;
    for _ in 0..VCD_TRACES {
        let n = rng.gen_range(1..60);
        let mut t = WaveformTrace::new(n);
        for s in 0..rng.gen_range(1..8) {
            let w = rng.gen_range(1..=128u32);
            t.insert(format!("s{s}"), w, (0..n).map(|_| Bv::new(w, rng.gen())).collect()).unwrap();
        }
        let back = vcd_read(&vcd_write(&t)).unwrap();
        assert_eq!(back, t, "VCD roundtrip changed the trace");

        let mut got = t.clone();
        let mut flipped = BTreeSet::new();
        for _ in 0..rng.gen_range(0..10) {
            let names: Vec<String> = got.signals.keys().cloned().collect();
            let name = names[rng.gen_range(0..names.len())].clone();
            let sig = got.signals.get_mut(&name).unwrap();
            let c = rng.gen_range(0..n);
            if flipped.insert((name, c)) {
                let bit = rng.gen_range(0..sig.width.min(64));
                sig.values[c] = Bv::new(sig.width, sig.values[c].bits() ^ (1u128 << bit));
            }
        }
        let opts = DiffOptions {
            max_width_shown: 128,
            max_signals: 64,
        };
        let r = diff_view(&got, &t, Some((0, n)), &opts).unwrap();
        let marked: BTreeSet<(String, usize)> = r
            .rows
            .iter()
            .filter(|row| !row.expected)
            .flat_map(|row| {
                row.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.starts_with(MARK_OPEN) && c.ends_with(MARK_CLOSE))
                    .map(|(i, _)| (row.signal.clone(), i))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(marked, flipped, "diff marks differ from the flipped cells");
        cells += flipped.len();
    }
    format!("{VCD_TRACES} traces roundtrip, {cells} flipped cells marked exactly")
}

// ----------------------------------------------------------------------- 9

fn c9() -> String {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("NegateIfCondition"), dir.path());
    let bug = load_bug(dir.path()).unwrap();
    let server = serve(bug, OracleStyle::Explore);
    let path = dir.path().join(CONFIG_NAME);
    set_key(&path, "llm", "backend", "\"live\"");
    set_key(&path, "llm", "url", &format!("\"{}\"", server.url));
    set_key(&path, "llm", "model", "\"scripted\"");
    set_key(&path, "budget", "max_wall_seconds", "1800");
    set_key(&path, "budget", "max_tokens_total", "2000000");
    set_key(&path, "search", "retries", &PASSK_RETRIES.to_string());
    std::env::set_var(ENV_KEY, "test-key");
    let cfg = ProjectConfig::load_with_env(&path, &BTreeMap::new()).unwrap();
    assert!(matches!(cfg.llm, LlmSelection::Live(_)));
    let mut out = Vec::new();
    assert_eq!(cmd_passk(&cfg, None, &mut out).unwrap(), Exit::Ok);
    let report: serde_json::Value = serde_json::from_str(&read(&cfg.work_dir.join("passk.json"))).unwrap();
    assert_eq!(report["k"], PASSK_RETRIES);
    assert_eq!(report["trials"].as_array().unwrap().len(), PASSK_RETRIES);
    assert_eq!(report["max_wall_seconds"], 1800);
    assert_eq!(report["max_tokens_total"], 2_000_000);
    let seeds: Vec<u64> = report["trials"].as_array().unwrap().iter().map(|t| t["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (cfg.seed..cfg.seed + PASSK_RETRIES as u64).collect::<Vec<_>>());
    let hits = server.hits.load(std::sync::atomic::Ordering::SeqCst);
    assert!(hits > 0);
    format!(
        "{PASSK_RETRIES} trials over HTTP ({hits} calls), limits 1800 s / 2M tokens, pass@1 = {}",
        report["pass_at"][0]
    )
}

#[test]
fn acceptance() {
    let results = [
        criterion(1, "heuristic matches straight-line oracle", c1),
        criterion(2, "softmax normalization, shift invariance, sampling frequencies", c2),
        criterion(3, "BMC agrees with simulate+compare", c3),
        criterion(4, "each repair template fixes minimally and verifies", c4),
        criterion(5, "replay fixtures fix all eight bug classes", c5),
        criterion(6, "identical runs give identical patch stacks and reports", c6),
        criterion(7, "lint corpus yields exactly the expected codes", c7),
        criterion(8, "VCD roundtrip and exact diff marking", c8),
        criterion(9, "pass@k runs with 10 retries and 30 min / 2M token limits", c9),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
