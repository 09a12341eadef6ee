// SPDX-License-Identifier: Apache-2.0

//! The four subcommands. Each returns an exit code and writes its
//! human-readable output to the given sink.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rtlfix_agents::backend::{LiveBackend, Recorder};
use rtlfix_agents::{LlmBackend, ReplayBackend};
use rtlfix_core::check::evaluate;
use rtlfix_core::rtl::{apply_patch, build, Patch, SourceProject, TransitionSystem};
use rtlfix_core::wave::{read_table, vcd_read, vcd_write, write_table, Testbench, WaveformTrace};
use rtlfix_search::{machine_report, render_tree, run_search, SearchOutcome, SearchRun};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, LlmSelection, ProjectConfig};
use crate::oracle::{Oracle, OracleStyle};
use crate::synth::{generate, BugClass, SynthError, FILE, TOP};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failed = 1,
    Config = 2,
}

#[derive(Debug, Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("testbench `{0}`: {1}")]
    Testbench(String, String),
    #[error("design does not build: {0}")]
    Design(String),
    #[error("replay fixture {0}: {1}")]
    Fixture(String, String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CmdError {
    pub fn exit(&self) -> Exit {
        match self {
            CmdError::Design(_) | CmdError::Synth(_) => Exit::Failed,
            _ => Exit::Config,
        }
    }
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, CmdError> {
    r.map_err(|e| CmdError::Io(path.to_path_buf(), e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CmdError> {
    if let Some(d) = path.parent() {
        io(d, fs::create_dir_all(d))?;
    }
    io(path, fs::write(path, bytes))
}

/// Sources keyed by their path as written in the config. With `dir` the
/// files are read from there instead of the config directory.
pub fn load_sources(cfg: &ProjectConfig, dir: Option<&Path>) -> Result<SourceProject, CmdError> {
    let mut p = SourceProject::new(cfg.top.clone());
    for s in &cfg.sources {
        let path = match dir {
            Some(d) => d.join(relative_name(s)),
            None => cfg.source_path(s),
        };
        let text = io(&path, fs::read_to_string(&path))?;
        p = p.with_file(s.clone(), text);
    }
    Ok(p)
}

/// Where a source lands below an output directory.
pub fn relative_name(s: &str) -> PathBuf {
    let p = Path::new(s);
    if p.is_absolute() {
        PathBuf::from(p.file_name().unwrap_or_default())
    } else {
        p.components()
            .filter(|c| matches!(c, std::path::Component::Normal(_)))
            .collect()
    }
}

fn read_trace(path: &Path, ts: &TransitionSystem, name: &str) -> Result<WaveformTrace, CmdError> {
    let bytes = io(path, fs::read(path))?;
    let tb_err = |e: String| CmdError::Testbench(name.to_string(), format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "vcd") {
        vcd_read(&bytes).map_err(|e| tb_err(e.to_string()))
    } else {
        let text = String::from_utf8(bytes).map_err(|e| tb_err(e.to_string()))?;
        read_table(&text, &ts.inputs).map_err(|e| tb_err(e.to_string()))
    }
}

/// Stimulus as a table or VCD, golden as VCD; both trimmed to the design's
/// ports.
pub fn load_testbenches(cfg: &ProjectConfig, ts: &TransitionSystem) -> Result<Vec<Testbench>, CmdError> {
    cfg.testbenches
        .iter()
        .map(|t| {
            let stim = read_trace(&t.stimulus, ts, &t.name)?;
            let golden = vcd_read(&io(&t.golden, fs::read(&t.golden))?)
                .map_err(|e| CmdError::Testbench(t.name.clone(), format!("{}: {e}", t.golden.display())))?;
            let stimulus = stim.restrict(ts.inputs.iter().map(|s| s.name.as_str()));
            let golden = golden.restrict(ts.outputs.iter().map(|s| s.name.as_str()));
            let tb = Testbench::new(t.name.clone(), stimulus, golden)
                .map_err(|e| CmdError::Testbench(t.name.clone(), e.to_string()))?;
            tb.check(ts).map_err(|e| CmdError::Testbench(t.name.clone(), e.to_string()))?;
            if tb.golden.signals.is_empty() {
                return Err(CmdError::Testbench(t.name.clone(), "golden VCD has no output of the design".into()));
            }
            Ok(tb)
        })
        .collect()
}

fn ports(src: &SourceProject) -> Result<TransitionSystem, CmdError> {
    build(src).map(|(_, ts)| ts).map_err(|e| CmdError::Design(e.to_string()))
}

pub fn make_backend(cfg: &ProjectConfig, seed: u64) -> Result<Box<dyn LlmBackend>, CmdError> {
    match &cfg.llm {
        LlmSelection::Replay(p) => {
            let path = p.replace("{seed}", &seed.to_string());
            let r = ReplayBackend::load(Path::new(&path)).map_err(|e| CmdError::Fixture(path.clone(), e.to_string()))?;
            Ok(Box::new(r))
        }
        LlmSelection::Live(live) => Ok(Box::new(LiveBackend::new(live.clone()))),
    }
}

// ------------------------------------------------------------------ repair

#[derive(Clone, Debug, Serialize)]
pub struct RepairSummary {
    pub fixed: bool,
    pub patches: usize,
    pub tokens: u64,
    pub wall_ms: u64,
    pub failure: Option<String>,
}

const WORK_ENTRIES: [&str; 10] = [
    "nodes",
    "transcripts",
    "smt",
    "patched",
    "patches.txt",
    "patches.json",
    "report.txt",
    "report.json",
    "stats.json",
    "passk.json",
];

fn clear_work_dir(dir: &Path) -> Result<(), CmdError> {
    for e in WORK_ENTRIES {
        let p = dir.join(e);
        if p.is_dir() {
            io(&p, fs::remove_dir_all(&p))?;
        } else if p.exists() {
            io(&p, fs::remove_file(&p))?;
        }
    }
    io(dir, fs::create_dir_all(dir.join("smt")))
}

fn write_sources(dir: &Path, src: &SourceProject) -> Result<(), CmdError> {
    for f in &src.files {
        write_file(&dir.join(relative_name(&f.path)), &f.text)?;
    }
    Ok(())
}

/// Each patch rendered against the sources it was applied to.
pub fn render_patch_stack(root: &SourceProject, patches: &[Patch]) -> String {
    let mut cur = root.clone();
    let mut out = String::new();
    for (i, p) in patches.iter().enumerate() {
        let _ = write!(out, "# {}\n{}", i + 1, p.render(&cur));
        if let Ok(next) = apply_patch(&cur, p) {
            cur = next;
        }
    }
    out
}

fn summary_text(run: &SearchRun) -> String {
    let s = run.outcome.stats();
    let mut out = match &run.outcome {
        SearchOutcome::Fixed { patches, .. } => format!("outcome: fixed with {} patch(es)\n", patches.len()),
        SearchOutcome::Failed { .. } => format!("outcome: failed ({})\n", s.failure.as_deref().unwrap_or("unknown")),
    };
    let _ = writeln!(out, "tokens: {}", s.tokens);
    let _ = writeln!(out, "nodes: {}", s.nodes_created);
    let _ = writeln!(out, "expansions: {}", s.expansions);
    if !s.winning_path.is_empty() {
        let path: Vec<String> = s.winning_path.iter().map(|n| format!("#{n}")).collect();
        let _ = writeln!(out, "winning path: {}", path.join(" -> "));
    }
    out
}

/// Writes every artifact of a finished search below `dir`.
pub fn write_run(dir: &Path, root: &SourceProject, run: &SearchRun) -> Result<(), CmdError> {
    for n in &run.tree.nodes {
        let nd = dir.join("nodes").join(n.id.to_string());
        write_sources(&nd, n.code_snapshot())?;
        write_file(&nd.join("hypothesis.txt"), format!("{}\n", n.hypothesis.text))?;
        let f = serde_json::to_string_pretty(&n.features).expect("features serialize");
        write_file(&nd.join("features.json"), f + "\n")?;
    }
    let td = dir.join("transcripts");
    io(&td, fs::create_dir_all(&td))?;
    for (k, e) in run.expansions.iter().enumerate() {
        let stem = format!("e{k:03}_n{}", e.node);
        write_file(&td.join(format!("{stem}_main.txt")), e.main.render())?;
        write_file(&td.join(format!("{stem}_context.txt")), e.context.render())?;
        for (j, l) in e.lint_runs.iter().enumerate() {
            write_file(&td.join(format!("{stem}_lint{j}.txt")), l.render())?;
        }
    }
    let patches: &[Patch] = match &run.outcome {
        SearchOutcome::Fixed { patches, project, .. } => {
            write_sources(&dir.join("patched"), project)?;
            patches
        }
        SearchOutcome::Failed { .. } => &[],
    };
    write_file(&dir.join("patches.txt"), render_patch_stack(root, patches))?;
    let pj = serde_json::to_string_pretty(patches).expect("patches serialize");
    write_file(&dir.join("patches.json"), pj + "\n")?;
    write_file(&dir.join("report.txt"), format!("{}\n{}", render_tree(&run.tree), summary_text(run)))?;
    let rj = serde_json::to_string_pretty(&machine_report(run)).expect("report serializes");
    write_file(&dir.join("report.json"), rj + "\n")?;
    Ok(())
}

/// Runs one search with `llm` and writes the work directory.
pub fn repair_with(
    cfg: &ProjectConfig,
    seed: u64,
    work_dir: &Path,
    llm: &mut dyn LlmBackend,
) -> Result<(RepairSummary, SearchRun), CmdError> {
    let root = load_sources(cfg, None)?;
    let ts = ports(&root)?;
    let tbs = load_testbenches(cfg, &ts)?;
    clear_work_dir(work_dir)?;
    let started = Instant::now();
    let run = run_search(&root, &tbs, &cfg.search_config(seed, Some(work_dir)), llm);
    let wall_ms = started.elapsed().as_millis() as u64;
    write_run(work_dir, &root, &run)?;
    let s = run.outcome.stats();
    let summary = RepairSummary {
        fixed: run.outcome.is_fixed(),
        patches: match &run.outcome {
            SearchOutcome::Fixed { patches, .. } => patches.len(),
            SearchOutcome::Failed { .. } => 0,
        },
        tokens: s.tokens,
        wall_ms,
        failure: s.failure.clone(),
    };
    let st = serde_json::to_string_pretty(&summary).expect("stats serialize");
    write_file(&work_dir.join("stats.json"), st + "\n")?;
    Ok((summary, run))
}

pub fn cmd_repair(cfg: &ProjectConfig, out: &mut dyn Write) -> Result<Exit, CmdError> {
    let mut llm = make_backend(cfg, cfg.seed)?;
    let (summary, run) = repair_with(cfg, cfg.seed, &cfg.work_dir, &mut llm)?;
    let _ = write!(out, "{}", summary_text(&run));
    let _ = writeln!(out, "work dir: {}", cfg.work_dir.display());
    Ok(if summary.fixed { Exit::Ok } else { Exit::Failed })
}

// ------------------------------------------------------------------ verify

pub const MISMATCH_ROWS: usize = 20;

/// Simulates the sources in `patched` (or the configured ones) on every
/// testbench. Testbenches are loaded against the configured design's ports.
pub fn cmd_verify(cfg: &ProjectConfig, patched: Option<&Path>, out: &mut dyn Write) -> Result<Exit, CmdError> {
    let src = load_sources(cfg, patched)?;
    let ts = match build(&src) {
        Ok((_, ts)) => ts,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return Ok(Exit::Failed);
        }
    };
    let tbs = load_testbenches(cfg, &ts)?;
    let mut all = true;
    for tb in &tbs {
        match evaluate(&src, tb) {
            Ok(ev) if ev.passed() => {
                let _ = writeln!(out, "{}: pass ({} cycles)", tb.name, tb.n_cycles());
            }
            Ok(ev) => {
                all = false;
                let m = &ev.comparison.mismatches;
                let _ = writeln!(out, "{}: FAIL ({} mismatching cells)", tb.name, m.len());
                let _ = writeln!(out, "  {:<16} {:>6} {:>12} {:>12}", "signal", "cycle", "got", "expected");
                for x in m.iter().take(MISMATCH_ROWS) {
                    let _ = writeln!(
                        out,
                        "  {:<16} {:>6} {:>12} {:>12}",
                        x.signal,
                        x.cycle,
                        x.got.to_string(),
                        x.expected.to_string()
                    );
                }
                if m.len() > MISMATCH_ROWS {
                    let _ = writeln!(out, "  ... {} more", m.len() - MISMATCH_ROWS);
                }
            }
            Err(e) => {
                all = false;
                let _ = writeln!(out, "{}: error: {e}", tb.name);
            }
        }
    }
    Ok(if all { Exit::Ok } else { Exit::Failed })
}

// ------------------------------------------------------------- synth-bench

pub const CONFIG_NAME: &str = "rtlfix.toml";
pub const FIXTURE_NAME: &str = "fixture.jsonl";

fn bench_config(seed: u64, n_tbs: usize) -> String {
    let mut s = format!(
        "[project]\ntop = \"{TOP}\"\nsources = [\"{FILE}\"]\nwork_dir = \"work\"\nseed = {seed}\n\n"
    );
    for i in 0..n_tbs {
        let _ = write!(
            s,
            "[[testbench]]\nname = \"tb{i}\"\nstimulus = \"tb{i}.tbl\"\ngolden = \"tb{i}.golden.vcd\"\n\n"
        );
    }
    s.push_str("[llm]\nbackend = \"replay\"\nreplay = \"fixture.jsonl\"\n");
    s
}

/// Runs the scripted agent on a loaded project and returns the replay
/// fixture it produced.
pub fn record_fixture(cfg: &ProjectConfig, seed: u64, oracle: Oracle) -> Result<(String, bool), CmdError> {
    let root = load_sources(cfg, None)?;
    let ts = ports(&root)?;
    let tbs = load_testbenches(cfg, &ts)?;
    let mut rec = Recorder::new(oracle);
    let run = run_search(&root, &tbs, &cfg.search_config(seed, None), &mut rec);
    Ok((rec.to_jsonl(), run.outcome.is_fixed()))
}

/// Writes `top.v` (buggy), `reference.v`, stimulus tables, golden VCDs,
/// `bug.json` and `rtlfix.toml` into `out_dir`. With `fixture` a replay
/// fixture from the scripted agent is added.
pub fn cmd_synth_bench(
    seed: u64,
    class: BugClass,
    out_dir: &Path,
    fixture: Option<OracleStyle>,
    out: &mut dyn Write,
) -> Result<Exit, CmdError> {
    let bench = generate(seed, class)?;
    io(out_dir, fs::create_dir_all(out_dir))?;
    write_file(&out_dir.join(FILE), &bench.buggy)?;
    write_file(&out_dir.join("reference.v"), &bench.reference)?;
    for (i, tb) in bench.testbenches.iter().enumerate() {
        write_file(&out_dir.join(format!("tb{i}.tbl")), write_table(&tb.stimulus))?;
        write_file(&out_dir.join(format!("tb{i}.golden.vcd")), vcd_write(&tb.golden))?;
    }
    let bug = serde_json::to_string_pretty(&bench.bug).expect("bug serializes");
    write_file(&out_dir.join("bug.json"), bug + "\n")?;
    write_file(&out_dir.join(CONFIG_NAME), bench_config(seed, bench.testbenches.len()))?;
    if let Some(style) = fixture {
        // the config needs the fixture to exist before it loads
        write_file(&out_dir.join(FIXTURE_NAME), "")?;
        let cfg = ProjectConfig::load_with_env(&out_dir.join(CONFIG_NAME), &Default::default())?;
        let (jsonl, fixed) = record_fixture(&cfg, seed, Oracle::new(bench.bug.clone(), style))?;
        write_file(&out_dir.join(FIXTURE_NAME), jsonl)?;
        if !fixed {
            let _ = writeln!(out, "warning: the scripted run did not fix the design");
        }
    }
    let _ = writeln!(
        out,
        "{} seed {} (attempt {}): `{}` at line {}",
        class, seed, bench.bug.attempt, bench.bug.signal, bench.bug.lines.0
    );
    Ok(Exit::Ok)
}

// ------------------------------------------------------------------- passk

#[derive(Clone, Debug, Serialize)]
pub struct Trial {
    pub seed: u64,
    pub fixed: bool,
    pub wall_ms: u64,
    pub tokens: u64,
    pub outcome: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PasskReport {
    pub base_seed: u64,
    pub k: usize,
    pub max_tokens_total: u64,
    pub max_wall_seconds: u64,
    pub trials: Vec<Trial>,
    pub fixed: usize,
    /// `pass@j` for j = 1..=k, unbiased estimate from the k trials.
    pub pass_at: Vec<f64>,
}

impl PasskReport {
    pub fn pass_at_1(&self) -> f64 {
        self.pass_at[0]
    }
}

/// Probability that at least one of `j` trials drawn without replacement
/// from `n` with `c` successes is a success.
pub fn pass_at(n: usize, c: usize, j: usize) -> f64 {
    if n - c < j {
        return 1.0;
    }
    // 1 - C(n-c, j) / C(n, j)
    let mut q = 1.0;
    for i in 0..j {
        q *= (n - c - i) as f64 / (n - i) as f64;
    }
    1.0 - q
}

/// Trial i runs with seed `base + i` in `work_dir/trial_i`. Failures of a
/// single trial are recorded, never raised.
pub fn passk_with(
    cfg: &ProjectConfig,
    k: usize,
    base: u64,
    work_dir: &Path,
    backend: &mut dyn FnMut(u64) -> Result<Box<dyn LlmBackend>, CmdError>,
) -> Result<PasskReport, CmdError> {
    io(work_dir, fs::create_dir_all(work_dir))?;
    let mut trials = Vec::new();
    for i in 0..k {
        let seed = base + i as u64;
        let dir = work_dir.join(format!("trial_{i}"));
        let started = Instant::now();
        let trial = match backend(seed).and_then(|mut llm| repair_with(cfg, seed, &dir, &mut llm)) {
            Ok((s, _)) => Trial {
                seed,
                fixed: s.fixed,
                wall_ms: s.wall_ms,
                tokens: s.tokens,
                outcome: if s.fixed {
                    "fixed".into()
                } else {
                    s.failure.unwrap_or_else(|| "failed".into())
                },
            },
            Err(e @ (CmdError::Config(_) | CmdError::Testbench(..) | CmdError::Design(_))) => return Err(e),
            Err(e) => Trial {
                seed,
                fixed: false,
                wall_ms: started.elapsed().as_millis() as u64,
                tokens: 0,
                outcome: format!("error: {e}"),
            },
        };
        trials.push(trial);
    }
    let fixed = trials.iter().filter(|t| t.fixed).count();
    let report = PasskReport {
        base_seed: base,
        k,
        max_tokens_total: cfg.budget.max_tokens_total,
        max_wall_seconds: cfg.budget.max_wall_seconds,
        pass_at: (1..=k).map(|j| pass_at(k, fixed, j)).collect(),
        fixed,
        trials,
    };
    let j = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&work_dir.join("passk.json"), j + "\n")?;
    Ok(report)
}

pub fn render_passk(r: &PasskReport) -> String {
    let mut out = String::new();
    for (i, t) in r.trials.iter().enumerate() {
        let _ = writeln!(
            out,
            "trial {i} seed {}: {} in {} ms, {} tokens",
            t.seed, t.outcome, t.wall_ms, t.tokens
        );
    }
    let _ = writeln!(out, "fixed {}/{}", r.fixed, r.k);
    for (j, p) in r.pass_at.iter().enumerate() {
        let _ = writeln!(out, "pass@{} = {:.4}", j + 1, p);
    }
    out
}

pub fn cmd_passk(cfg: &ProjectConfig, k: Option<usize>, out: &mut dyn Write) -> Result<Exit, CmdError> {
    let k = k.unwrap_or(cfg.retries);
    if k == 0 {
        return Err(ConfigError::Invalid("k must be at least 1".into()).into());
    }
    let report = passk_with(cfg, k, cfg.seed, &cfg.work_dir, &mut |seed| make_backend(cfg, seed))?;
    let _ = write!(out, "{}", render_passk(&report));
    Ok(Exit::Ok)
}

/// Reads `bug.json` next to a generated bench.
pub fn load_bug(dir: &Path) -> Result<crate::synth::BugInjection, CmdError> {
    let p = dir.join("bug.json");
    let text = io(&p, fs::read_to_string(&p))?;
    serde_json::from_str(&text).map_err(|e| CmdError::Fixture(p.display().to_string(), e.to_string()))
}
