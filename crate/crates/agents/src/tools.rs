// SPDX-License-Identifier: Apache-2.0

//! The agent toolbox: names, schemas, per-agent availability, and the
//! implementations that only need the design and its testbenches.

use std::fmt::Write as _;

use rtlfix_core::check::evaluate;
use rtlfix_core::lint::LintMessage;
use rtlfix_core::rtl::index::{query_def, query_ref};
use rtlfix_core::rtl::{parse_project, Patch, Provenance, SourceProject};
use rtlfix_core::wave::{diff_view, DiffOptions, Testbench};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::ToolSpec;
use crate::transcript::AgentKind;

/// Prefix of raw navigation output. Only sub-agent transcripts carry it.
pub const NAV_MARKER: &str = "[nav]";
/// Prefix of raw lint messages handed to the lint-fix agent.
pub const LINT_MARKER: &str = "[lint]";

const MAX_READ_LINES: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    ReadFile,
    EditFile,
    RunSim,
    DiffWaveform,
    RunLint,
    QueryDef,
    QueryRef,
    AskContextAgent,
    SmtRepair,
    ProposeHypothesis,
    EmitPatch,
    GiveUpHypothesis,
}

impl ToolName {
    pub const ALL: [ToolName; 12] = [
        ToolName::ReadFile,
        ToolName::EditFile,
        ToolName::RunSim,
        ToolName::DiffWaveform,
        ToolName::RunLint,
        ToolName::QueryDef,
        ToolName::QueryRef,
        ToolName::AskContextAgent,
        ToolName::SmtRepair,
        ToolName::ProposeHypothesis,
        ToolName::EmitPatch,
        ToolName::GiveUpHypothesis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::ReadFile => "read_file",
            ToolName::EditFile => "edit_file",
            ToolName::RunSim => "run_sim",
            ToolName::DiffWaveform => "diff_waveform",
            ToolName::RunLint => "run_lint",
            ToolName::QueryDef => "query_def",
            ToolName::QueryRef => "query_ref",
            ToolName::AskContextAgent => "ask_context_agent",
            ToolName::SmtRepair => "smt_repair",
            ToolName::ProposeHypothesis => "propose_hypothesis",
            ToolName::EmitPatch => "emit_patch",
            ToolName::GiveUpHypothesis => "give_up_hypothesis",
        }
    }

    pub fn parse(s: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn spec(self) -> ToolSpec {
        let edit = json!({
            "type": "object",
            "properties": {
                "file": {"type": "string"},
                "old": {"type": "string", "description": "exact text to replace; must occur once"},
                "new": {"type": "string"}
            },
            "required": ["old", "new"]
        });
        let (description, parameters) = match self {
            ToolName::ReadFile => (
                "Show a numbered range of source lines.",
                json!({"type": "object", "properties": {
                    "file": {"type": "string"},
                    "start_line": {"type": "integer"},
                    "end_line": {"type": "integer"}}}),
            ),
            ToolName::EditFile => ("Replace one exact occurrence of text in a file.", edit.clone()),
            ToolName::RunSim => (
                "Simulate the current design on the testbenches and compare with the golden outputs.",
                json!({"type": "object", "properties": {}}),
            ),
            ToolName::DiffWaveform => (
                "Show simulated against golden waveforms with mismatches marked >>v<<.",
                json!({"type": "object", "properties": {
                    "testbench": {"type": "integer"},
                    "start": {"type": "integer"},
                    "end": {"type": "integer"}}}),
            ),
            ToolName::RunLint => (
                "Count the open lint messages of the current design.",
                json!({"type": "object", "properties": {}}),
            ),
            ToolName::QueryDef => (
                "Find where a signal or module is declared and driven.",
                json!({"type": "object", "properties": {"name": {"type": "string"}}, "required": ["name"]}),
            ),
            ToolName::QueryRef => (
                "Find every place a signal is read.",
                json!({"type": "object", "properties": {"name": {"type": "string"}}, "required": ["name"]}),
            ),
            ToolName::AskContextAgent => (
                "Ask the context agent a question about the design; it answers with a summary.",
                json!({"type": "object", "properties": {"question": {"type": "string"}}, "required": ["question"]}),
            ),
            ToolName::SmtRepair => (
                "Search for a minimal repair with a template: replace_literal, add_guard, conditional_overwrite or cycle_shift.",
                json!({"type": "object", "properties": {
                    "template": {"type": "string"},
                    "targets": {"type": "array", "items": {"type": "string"},
                        "description": "sites as #id or signal names"}},
                    "required": ["template"]}),
            ),
            ToolName::ProposeHypothesis => (
                "Record a new root-cause hypothesis and stop working on the current one.",
                json!({"type": "object", "properties": {"text": {"type": "string"}}, "required": ["text"]}),
            ),
            ToolName::EmitPatch => (
                "Apply one patch made of one or more exact-text replacements.",
                json!({"type": "object", "properties": {
                    "file": {"type": "string"}, "old": {"type": "string"}, "new": {"type": "string"},
                    "edits": {"type": "array", "items": edit}}}),
            ),
            ToolName::GiveUpHypothesis => (
                "Abandon the current hypothesis, optionally naming a replacement.",
                json!({"type": "object", "properties": {"text": {"type": "string"}}}),
            ),
        };
        ToolSpec {
            name: self.as_str(),
            description,
            parameters,
        }
    }
}

/// Tools offered to each agent. Navigation and raw lint output stay with the
/// sub-agents.
pub fn tools_for(kind: AgentKind) -> &'static [ToolName] {
    use ToolName::*;
    match kind {
        AgentKind::Main => &[
            ReadFile,
            EditFile,
            RunSim,
            DiffWaveform,
            RunLint,
            AskContextAgent,
            SmtRepair,
            ProposeHypothesis,
            EmitPatch,
            GiveUpHypothesis,
        ],
        AgentKind::Context => &[ReadFile, QueryDef, QueryRef],
        AgentKind::LintFix => &[ReadFile, QueryDef, QueryRef, EmitPatch],
    }
}

pub fn tool_specs(kind: AgentKind) -> Vec<ToolSpec> {
    tools_for(kind).iter().map(|t| t.spec()).collect()
}

pub fn allowed(kind: AgentKind, name: &str) -> Option<ToolName> {
    ToolName::parse(name).filter(|t| tools_for(kind).contains(t))
}

fn arg_str<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn arg_usize(args: &Value, key: &str) -> Option<usize> {
    args.get(key).and_then(|v| {
        v.as_u64()
            .map(|n| n as usize)
            .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
    })
}

pub fn string_arg(args: &Value, key: &str) -> Option<String> {
    arg_str(args, key).map(str::to_string)
}

pub fn strings_arg(args: &Value, key: &str) -> Vec<String> {
    match args.get(key) {
        Some(Value::Array(a)) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
        Some(Value::String(s)) => s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
        _ => Vec::new(),
    }
}

fn resolve_file<'a>(src: &'a SourceProject, file: Option<&str>) -> Result<&'a rtlfix_core::rtl::source::SourceFile, String> {
    match file {
        None if src.files.len() == 1 => Ok(&src.files[0]),
        None => Err(format!("several files exist, name one of: {}", file_list(src))),
        Some(f) => src
            .files
            .iter()
            .find(|x| x.path == f)
            .or_else(|| src.files.iter().find(|x| x.path.rsplit('/').next() == Some(f)))
            .ok_or_else(|| format!("file `{f}` not found; files: {}", file_list(src))),
    }
}

fn file_list(src: &SourceProject) -> String {
    src.files.iter().map(|f| f.path.as_str()).collect::<Vec<_>>().join(", ")
}

/// Numbered lines of one file.
pub fn read_file(src: &SourceProject, args: &Value) -> String {
    let f = match resolve_file(src, arg_str(args, "file")) {
        Ok(f) => f,
        Err(e) => return e,
    };
    let lines: Vec<&str> = f.text.lines().collect();
    let start = arg_usize(args, "start_line").unwrap_or(1).max(1);
    let end = arg_usize(args, "end_line")
        .unwrap_or(lines.len())
        .min(lines.len())
        .min(start + MAX_READ_LINES - 1);
    if start > end {
        return format!("{}: no lines in {start}..{end}, the file has {} lines", f.path, lines.len());
    }
    let mut out = format!("{} lines {start}-{end} of {}\n", f.path, lines.len());
    for (i, l) in lines[start - 1..end].iter().enumerate() {
        let _ = writeln!(out, "{:>4}| {l}", start + i);
    }
    out
}

/// Raw navigation output, marked with [`NAV_MARKER`].
pub fn navigate(src: &SourceProject, tool: ToolName, args: &Value) -> String {
    let Some(name) = arg_str(args, "name") else {
        return format!("{NAV_MARKER} {}: missing `name`", tool.as_str());
    };
    let modules = match parse_project(src) {
        Ok(m) => m,
        Err(e) => return format!("{NAV_MARKER} {}: the design does not parse: {e}", tool.as_str()),
    };
    let sites = if tool == ToolName::QueryRef {
        query_ref(src, &modules, name)
    } else {
        query_def(src, &modules, name)
    };
    if sites.is_empty() {
        return format!("{NAV_MARKER} {} {name}: not found", tool.as_str());
    }
    let mut out = format!("{NAV_MARKER} {} {name}: {} site(s)\n", tool.as_str(), sites.len());
    for s in sites {
        let _ = writeln!(out, "{s}");
    }
    out
}

pub fn lint_block(msgs: &[LintMessage]) -> String {
    msgs.iter().map(|m| format!("{LINT_MARKER} {m}\n")).collect()
}

/// One exact-text replacement requested by an agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextEdit {
    pub file: Option<String>,
    pub old: String,
    pub new: String,
}

pub fn parse_edits(args: &Value) -> Result<Vec<TextEdit>, String> {
    let one = |v: &Value| -> Result<TextEdit, String> {
        let old = arg_str(v, "old").ok_or("edit is missing `old`")?;
        let new = arg_str(v, "new").ok_or("edit is missing `new`")?;
        Ok(TextEdit {
            file: string_arg(v, "file"),
            old: old.to_string(),
            new: new.to_string(),
        })
    };
    let edits = match args.get("edits") {
        Some(Value::Array(a)) => a.iter().map(one).collect::<Result<Vec<_>, _>>()?,
        _ => vec![one(args)?],
    };
    if edits.is_empty() {
        return Err("patch has no edits".into());
    }
    Ok(edits)
}

/// Locates every edit in the current sources.
pub fn edits_to_patch(src: &SourceProject, edits: &[TextEdit], provenance: Provenance) -> Result<Patch, String> {
    let mut patch = Patch::new(provenance);
    for e in edits {
        let f = resolve_file(src, e.file.as_deref())?;
        if e.old.is_empty() {
            return Err("`old` must not be empty".into());
        }
        let hits: Vec<usize> = f.text.match_indices(&e.old).map(|(i, _)| i).collect();
        match hits.as_slice() {
            [] => return Err(format!("`{}` does not occur in {}", e.old, f.path)),
            [at] => patch = patch.with_edit(f.path.clone(), *at..*at + e.old.len(), e.new.clone()),
            _ => {
                return Err(format!(
                    "`{}` occurs {} times in {}; include more context",
                    e.old,
                    hits.len(),
                    f.path
                ))
            }
        }
    }
    Ok(patch)
}

/// Result of simulating every testbench.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TbStatus {
    pub passed: usize,
    pub total: usize,
    /// Front-end failure: nothing could be simulated.
    pub error: Option<String>,
}

impl TbStatus {
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.total > 0 && self.passed == self.total
    }
}

pub fn run_testbenches(src: &SourceProject, tbs: &[Testbench]) -> (TbStatus, String) {
    let mut st = TbStatus {
        passed: 0,
        total: tbs.len(),
        error: None,
    };
    let mut out = String::new();
    for (i, tb) in tbs.iter().enumerate() {
        match evaluate(src, tb) {
            Ok(ev) if ev.passed() => {
                st.passed += 1;
                let _ = writeln!(out, "tb{i} {}: pass ({} cycles)", tb.name, tb.n_cycles());
            }
            Ok(ev) => {
                let m = &ev.comparison.mismatches;
                let first = &m[0];
                let _ = writeln!(
                    out,
                    "tb{i} {}: FAIL, {} mismatching cells, first at cycle {}: {} = {} expected {}",
                    tb.name,
                    m.len(),
                    first.cycle,
                    first.signal,
                    first.got,
                    first.expected
                );
            }
            Err(e) => {
                let msg = e.to_string();
                let _ = writeln!(out, "tb{i} {}: ERROR {msg}", tb.name);
                st.error.get_or_insert(msg);
            }
        }
    }
    let _ = writeln!(out, "{}/{} testbenches pass", st.passed, st.total);
    (st, out)
}

pub fn diff_waveform(src: &SourceProject, tbs: &[Testbench], args: &Value) -> String {
    let i = arg_usize(args, "testbench").unwrap_or_else(|| {
        tbs.iter()
            .position(|tb| !evaluate(src, tb).is_ok_and(|e| e.passed()))
            .unwrap_or(0)
    });
    let Some(tb) = tbs.get(i) else {
        return format!("no testbench {i}; there are {}", tbs.len());
    };
    let ev = match evaluate(src, tb) {
        Ok(ev) => ev,
        Err(e) => return format!("cannot simulate: {e}"),
    };
    let window = match (arg_usize(args, "start"), arg_usize(args, "end")) {
        (Some(s), Some(e)) => Some((s, e)),
        (Some(s), None) => Some((s, (s + 32).min(tb.n_cycles()))),
        _ => None,
    };
    let got = ev.trace.restrict(tb.golden.signals.keys().map(String::as_str).chain(tb.stimulus.signals.keys().map(String::as_str)));
    match diff_view(&got, &tb.golden, window, &DiffOptions::default()) {
        Ok(r) => format!("tb{i} {} cycles {}..{}\n{}", tb.name, r.window.0, r.window.1, r.text),
        Err(e) => format!("cannot show the diff: {e}"),
    }
}
