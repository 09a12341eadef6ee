// SPDX-License-Identifier: Apache-2.0

//! Structural lint checks and an optional external linter subprocess.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::process::Command;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rtl::ast::{AstModule, CaseKind, Direction, ExprKind, Item, Sensitivity, Stmt};
use crate::rtl::index::{lvalue_names, stmt_exprs};
use crate::rtl::lower::{LvalTarget, Scope, Sink};
use crate::rtl::{infer_widths, Location, SourceProject, Span, TransitionSystem};

pub const MULTI_DRIVEN: &str = "MULTI_DRIVEN";
pub const PART_DRIVEN: &str = "PART_DRIVEN";
pub const WIDTH_MISMATCH: &str = "WIDTH_MISMATCH";
pub const UNDRIVEN: &str = "UNDRIVEN";
pub const UNUSED: &str = "UNUSED";
pub const LATCH_INFERRED: &str = "LATCH_INFERRED";
pub const LINT_TOOL_ERROR: &str = "LINT_TOOL_ERROR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LintMessage {
    pub severity: Severity,
    pub code: String,
    pub location: Location,
    pub message: String,
    pub signal: Option<String>,
}

impl fmt::Display for LintMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}: {}", self.location, self.severity, self.code, self.message)
    }
}

/// One message per line.
pub fn render_messages(msgs: &[LintMessage]) -> String {
    msgs.iter().map(|m| format!("{m}\n")).collect()
}

pub fn sort_messages(msgs: &mut Vec<LintMessage>) {
    msgs.sort_by(|a, b| {
        (&a.location.file, a.location.line, a.location.column, &a.code, &a.message).cmp(&(
            &b.location.file,
            b.location.line,
            b.location.column,
            &b.code,
            &b.message,
        ))
    });
    msgs.dedup();
}

struct Driver {
    id: usize,
    bits: Vec<(u32, u32)>,
    span: Span,
}

#[derive(Default)]
struct ModuleFacts {
    drivers: BTreeMap<String, Vec<Driver>>,
    initialised: BTreeSet<String>,
    read: BTreeSet<String>,
    loop_vars: BTreeSet<String>,
    latches: Vec<(String, Span)>,
}

/// Runs the built-in checks. `ts`, when elaboration succeeded, adds latches
/// discovered during elaboration that the syntactic check missed.
pub fn lint_project(src: &SourceProject, ts: Option<&TransitionSystem>, modules: &[AstModule]) -> Vec<LintMessage> {
    let mut out = Vec::new();
    for m in modules {
        lint_module(src, m, modules, &mut out);
    }
    if let Some(ts) = ts {
        if let Some(top) = modules.iter().find(|m| m.name == src.top_module) {
            for s in &ts.states {
                let Some(base) = s.name.strip_suffix(crate::rtl::elab::LATCH_SUFFIX) else { continue };
                if base.contains('.') || out.iter().any(|m| m.code == LATCH_INFERRED && m.signal.as_deref() == Some(base)) {
                    continue;
                }
                let span = ts
                    .drivers
                    .get(base)
                    .and_then(|d| d.sites.first().copied())
                    .unwrap_or(top.name_span);
                out.push(msg(
                    src,
                    Severity::Warning,
                    LATCH_INFERRED,
                    span,
                    format!("`{base}` keeps its previous value on some path of a combinational block (latch)"),
                    Some(base),
                ));
            }
        }
    }
    sort_messages(&mut out);
    out
}

fn msg(src: &SourceProject, severity: Severity, code: &str, span: Span, message: String, signal: Option<&str>) -> LintMessage {
    LintMessage {
        severity,
        code: code.to_string(),
        location: src.location(span),
        message,
        signal: signal.map(str::to_string),
    }
}

fn lint_module(src: &SourceProject, m: &AstModule, modules: &[AstModule], out: &mut Vec<LintMessage>) {
    let mut scope = Scope::new(src);
    if scope.bind_params(m, &HashMap::new()).is_err() || scope.declare_signals(m, "").is_err() {
        return;
    }
    let mut facts = ModuleFacts::default();
    let mut next_id = 0usize;
    collect_items(&scope, m, &m.items, modules, &mut facts, &mut next_id);
    for d in &m.decls {
        if d.init.is_some() && d.kind != crate::rtl::ast::NetKind::Wire {
            facts.initialised.insert(d.name.clone());
        }
        if let Some(e) = &d.init {
            for i in e.idents() {
                facts.read.insert(i.to_string());
            }
        }
    }

    let width_of = |n: &str| scope.signals.get(n).map(|s| s.width).unwrap_or(1);
    let decl_span = |n: &str| {
        m.port(n)
            .map(|p| p.name_span)
            .or_else(|| m.decl(n).map(|d| d.name_span))
            .unwrap_or(m.name_span)
    };
    let mut names: Vec<(&str, Option<Direction>)> = m.ports.iter().map(|p| (p.name.as_str(), Some(p.dir))).collect();
    for d in &m.decls {
        if m.port(&d.name).is_none() {
            names.push((&d.name, None));
        }
    }

    for (name, dir) in names {
        if facts.loop_vars.contains(name) {
            continue;
        }
        let drivers = facts.drivers.get(name).map(Vec::as_slice).unwrap_or(&[]);
        let read = facts.read.contains(name);
        let w = width_of(name);
        // multiple drivers
        let mut reported = false;
        'outer: for (i, a) in drivers.iter().enumerate() {
            for b in &drivers[..i] {
                if a.id == b.id {
                    continue;
                }
                let overlap = a.bits.iter().any(|x| b.bits.iter().any(|y| x.1 <= y.0 && y.1 <= x.0));
                if overlap {
                    let loc = src.location(b.span);
                    out.push(msg(
                        src,
                        Severity::Error,
                        MULTI_DRIVEN,
                        a.span,
                        format!("`{name}` is also driven at {loc}"),
                        Some(name),
                    ));
                    reported = true;
                    break 'outer;
                }
            }
        }
        if dir == Some(Direction::Input) {
            if !drivers.is_empty() && !reported {
                out.push(msg(
                    src,
                    Severity::Error,
                    MULTI_DRIVEN,
                    drivers[0].span,
                    format!("input `{name}` is driven inside the module"),
                    Some(name),
                ));
            }
            if !read {
                out.push(msg(
                    src,
                    Severity::Warning,
                    UNUSED,
                    decl_span(name),
                    format!("input `{name}` is never read"),
                    Some(name),
                ));
            }
            continue;
        }
        if drivers.is_empty() {
            if (read || dir == Some(Direction::Output)) && !facts.initialised.contains(name) {
                out.push(msg(
                    src,
                    Severity::Warning,
                    UNDRIVEN,
                    decl_span(name),
                    format!("`{name}` is read but never driven"),
                    Some(name),
                ));
            }
            continue;
        }
        let mut covered = vec![false; w as usize];
        for d in drivers {
            for (hi, lo) in &d.bits {
                for b in *lo..=(*hi).min(w - 1) {
                    covered[b as usize] = true;
                }
            }
        }
        let holes = ranges(&covered);
        if !holes.is_empty() {
            let list: Vec<String> = holes
                .iter()
                .map(|(hi, lo)| if hi == lo { format!("[{hi}]") } else { format!("[{hi}:{lo}]") })
                .collect();
            out.push(msg(
                src,
                Severity::Warning,
                PART_DRIVEN,
                decl_span(name),
                format!("bits {} of `{name}` are never driven", list.join(", ")),
                Some(name),
            ));
        }
        if !read && dir.is_none() {
            out.push(msg(
                src,
                Severity::Warning,
                UNUSED,
                decl_span(name),
                format!("`{name}` is driven but never read"),
                Some(name),
            ));
        }
    }

    for (name, span) in &facts.latches {
        out.push(msg(
            src,
            Severity::Warning,
            LATCH_INFERRED,
            *span,
            format!("`{name}` is not assigned on every path of a combinational block (latch)"),
            Some(name),
        ));
    }

    if let Ok(tm) = infer_widths(src, m) {
        let mut seen = BTreeSet::new();
        for w in tm.warnings {
            if seen.insert((w.span, w.message.clone())) {
                out.push(msg(src, Severity::Warning, WIDTH_MISMATCH, w.span, w.message, Some(&w.target)));
            }
        }
    }
}

/// Undriven bit ranges, most significant first.
fn ranges(covered: &[bool]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut i = covered.len();
    while i > 0 {
        i -= 1;
        if !covered[i] {
            let hi = i as u32;
            while i > 0 && !covered[i - 1] {
                i -= 1;
            }
            out.push((hi, i as u32));
        }
    }
    out
}

fn part_bits(t: &LvalTarget, width: u32) -> (u32, u32) {
    match t {
        LvalTarget::Whole | LvalTarget::Dynamic(..) => (width - 1, 0),
        LvalTarget::Range(hi, lo) => (*hi, *lo),
    }
}

fn collect_items(
    scope: &Scope,
    m: &AstModule,
    items: &[Item],
    modules: &[AstModule],
    facts: &mut ModuleFacts,
    next_id: &mut usize,
) {
    for it in items {
        *next_id += 1;
        let id = *next_id;
        match it {
            Item::Assign(a) => {
                add_target(scope, &a.lhs, id, a.span, facts);
                mark_reads(&a.rhs, facts);
                mark_index_reads(&a.lhs, facts);
            }
            Item::Always(a) => {
                if let Sensitivity::Edges(edges) = &a.sens {
                    for (_, n) in edges {
                        facts.read.insert(n.clone());
                    }
                }
                stmt_exprs(&a.body, &mut |e, lhs| {
                    if lhs {
                        mark_index_reads(e, facts);
                    } else {
                        mark_reads(e, facts);
                    }
                });
                a.body.walk(&mut |s| {
                    if let Stmt::For { var, .. } = s {
                        facts.loop_vars.insert(var.clone());
                    }
                });
                collect_stmt(scope, &a.body, id, facts);
                if a.is_comb() {
                    let all = assigned_anywhere(&a.body);
                    let sure = definitely_assigned(scope, &a.body);
                    for n in all {
                        if !sure.contains(&n) && !facts.loop_vars.contains(&n) {
                            facts.latches.push((n, a.header_span));
                        }
                    }
                }
            }
            Item::Initial(i) => {
                i.body.walk(&mut |s| {
                    if let Stmt::Assign { lhs, .. } = s {
                        for n in lvalue_names(lhs) {
                            facts.initialised.insert(n.to_string());
                        }
                    }
                });
                stmt_exprs(&i.body, &mut |e, lhs| {
                    if !lhs {
                        mark_reads(e, facts);
                    }
                });
            }
            Item::Instance(inst) => {
                let child = modules.iter().find(|c| c.name == inst.module);
                for (k, c) in inst.conns.iter().enumerate() {
                    let Some(e) = &c.expr else { continue };
                    let port = match (&c.port, child) {
                        (Some(p), Some(ch)) => ch.port(p),
                        (None, Some(ch)) => ch.ports.get(k),
                        _ => None,
                    };
                    if port.is_some_and(|p| p.dir == Direction::Output) {
                        *next_id += 1;
                        add_target(scope, e, *next_id, c.span, facts);
                        mark_index_reads(e, facts);
                    } else {
                        mark_reads(e, facts);
                    }
                }
                for (_, e) in &inst.params {
                    mark_reads(e, facts);
                }
            }
            Item::GenFor(g) => {
                let _ = scope.unroll(&g.var, &g.init, &g.cond, &g.step, g.span, |s| {
                    collect_items(s, m, &g.items, modules, facts, next_id);
                    Ok(())
                });
            }
        }
    }
}

fn add_target(scope: &Scope, lhs: &crate::rtl::ast::Expr, id: usize, span: Span, facts: &mut ModuleFacts) {
    match scope.lvalue(lhs, &mut Sink::default()) {
        Ok(parts) => {
            for p in parts {
                let bits = part_bits(&p.target, p.sig_width);
                let list = facts.drivers.entry(p.name).or_default();
                match list.iter_mut().find(|d| d.id == id) {
                    Some(d) => d.bits.push(bits),
                    None => list.push(Driver {
                        id,
                        bits: vec![bits],
                        span,
                    }),
                }
            }
        }
        Err(_) => {
            for n in lvalue_names(lhs) {
                let w = scope.signals.get(n).map(|s| s.width).unwrap_or(1);
                facts.drivers.entry(n.to_string()).or_default().push(Driver {
                    id,
                    bits: vec![(w - 1, 0)],
                    span,
                });
            }
        }
    }
}

fn collect_stmt(scope: &Scope, s: &Stmt, id: usize, facts: &mut ModuleFacts) {
    match s {
        Stmt::Block { stmts, .. } => stmts.iter().for_each(|x| collect_stmt(scope, x, id, facts)),
        Stmt::If {
            then_branch,
            else_branch,
            ..
        } => {
            collect_stmt(scope, then_branch, id, facts);
            if let Some(e) = else_branch {
                collect_stmt(scope, e, id, facts);
            }
        }
        Stmt::Case { arms, default, .. } => {
            for a in arms {
                collect_stmt(scope, &a.body, id, facts);
            }
            if let Some(d) = default {
                collect_stmt(scope, d, id, facts);
            }
        }
        Stmt::Assign { lhs, span, .. } => add_target(scope, lhs, id, *span, facts),
        Stmt::For {
            var,
            init,
            cond,
            step,
            body,
            span,
        } => {
            let ok = scope.unroll(var, init, cond, step, *span, |sc| {
                collect_stmt(sc, body, id, facts);
                Ok(())
            });
            if ok.is_err() {
                collect_stmt(scope, body, id, facts);
            }
        }
        Stmt::SysTask { .. } | Stmt::Null { .. } => {}
    }
}

fn mark_reads(e: &crate::rtl::ast::Expr, facts: &mut ModuleFacts) {
    for n in e.idents() {
        facts.read.insert(n.to_string());
    }
}

fn mark_index_reads(e: &crate::rtl::ast::Expr, facts: &mut ModuleFacts) {
    e.walk(&mut |x| match &x.kind {
        ExprKind::Index(_, i) => mark_reads(i, facts),
        ExprKind::PartSelect(_, a, b) => {
            mark_reads(a, facts);
            mark_reads(b, facts);
        }
        ExprKind::IndexedPart { start, width, .. } => {
            mark_reads(start, facts);
            mark_reads(width, facts);
        }
        _ => {}
    });
}

fn assigned_anywhere(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    s.walk(&mut |st| {
        if let Stmt::Assign { lhs, .. } = st {
            out.extend(lvalue_names(lhs).into_iter().map(str::to_string));
        }
    });
    out
}

/// Names assigned on every path through `s`.
fn definitely_assigned(scope: &Scope, s: &Stmt) -> BTreeSet<String> {
    match s {
        Stmt::Block { stmts, .. } => stmts.iter().flat_map(|x| definitely_assigned(scope, x)).collect(),
        Stmt::If {
            then_branch,
            else_branch,
            ..
        } => match else_branch {
            Some(e) => {
                let t = definitely_assigned(scope, then_branch);
                let e = definitely_assigned(scope, e);
                t.intersection(&e).cloned().collect()
            }
            None => BTreeSet::new(),
        },
        Stmt::Case {
            kind,
            subject,
            arms,
            default,
            ..
        } => {
            let complete = default.is_some() || case_is_full(scope, *kind, subject, arms);
            if !complete {
                return BTreeSet::new();
            }
            let mut sets = arms.iter().map(|a| definitely_assigned(scope, &a.body));
            let mut acc = match default {
                Some(d) => definitely_assigned(scope, d),
                None => sets.next().unwrap_or_default(),
            };
            for s in sets {
                acc = acc.intersection(&s).cloned().collect();
            }
            acc
        }
        Stmt::Assign { lhs, .. } => lvalue_names(lhs).into_iter().map(str::to_string).collect(),
        Stmt::For { body, .. } => definitely_assigned(scope, body),
        Stmt::SysTask { .. } | Stmt::Null { .. } => BTreeSet::new(),
    }
}

fn case_is_full(scope: &Scope, kind: CaseKind, subject: &crate::rtl::ast::Expr, arms: &[crate::rtl::ast::CaseArm]) -> bool {
    if kind != CaseKind::Case {
        return false;
    }
    let Ok(w) = scope.self_width(subject) else { return false };
    if w > 12 {
        return false;
    }
    let mut seen = BTreeSet::new();
    for a in arms {
        for l in &a.labels {
            match scope.const_eval(l) {
                Ok(v) if v < (1u128 << w) => {
                    seen.insert(v);
                }
                _ => return false,
            }
        }
    }
    seen.len() == 1usize << w
}

// ---------------------------------------------------------------- external

/// Default line format: `file:line[:col]: [severity:] [CODE] message`.
pub const DEFAULT_PARSE_REGEX: &str =
    r"^(?P<file>[^:\s]+):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?:(?P<severity>error|warning|note|info)\s*:)?\s*(?:(?P<code>[A-Z][A-Z0-9_]+)\b:?)?\s*(?P<message>.*)$";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalLinter {
    /// Shell command; `{files}` is replaced by the project file paths and
    /// they are appended when the placeholder is absent.
    pub cmd: String,
    pub parse_regex: String,
}

impl ExternalLinter {
    pub fn new(cmd: impl Into<String>) -> Self {
        ExternalLinter {
            cmd: cmd.into(),
            parse_regex: DEFAULT_PARSE_REGEX.to_string(),
        }
    }
}

fn tool_error(message: String) -> LintMessage {
    LintMessage {
        severity: Severity::Warning,
        code: LINT_TOOL_ERROR.to_string(),
        location: Location {
            file: String::new(),
            line: 0,
            column: 0,
        },
        message,
        signal: None,
    }
}

/// Writes the project to a scratch directory, runs the configured command
/// there and parses its output. Never fails: problems with the tool become a
/// single `LINT_TOOL_ERROR` warning.
pub fn run_external_linter(src: &SourceProject, cfg: Option<&ExternalLinter>) -> Vec<LintMessage> {
    let Some(cfg) = cfg.filter(|c| !c.cmd.trim().is_empty()) else {
        return Vec::new();
    };
    let re = match Regex::new(&cfg.parse_regex) {
        Ok(r) => r,
        Err(e) => return vec![tool_error(format!("invalid lint.parse_regex: {e}"))],
    };
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return vec![tool_error(format!("cannot create scratch directory: {e}"))],
    };
    let mut paths = Vec::new();
    for f in &src.files {
        let p = dir.path().join(&f.path);
        if let Some(parent) = p.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Err(e) = std::fs::write(&p, &f.text) {
            return vec![tool_error(format!("cannot write {}: {e}", f.path))];
        }
        paths.push(f.path.clone());
    }
    let files = paths.join(" ");
    let cmd = if cfg.cmd.contains("{files}") {
        cfg.cmd.replace("{files}", &files)
    } else {
        format!("{} {files}", cfg.cmd)
    };
    let output = match Command::new("sh").arg("-c").arg(&cmd).current_dir(dir.path()).output() {
        Ok(o) => o,
        Err(e) => return vec![tool_error(format!("cannot run `{}`: {e}", cfg.cmd))],
    };
    let text = format!(
        "{}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(c) = re.captures(line.trim()) else { continue };
        let get = |n: &str| c.name(n).map(|m| m.as_str());
        let (Some(file), Some(line_no)) = (get("file"), get("line").and_then(|l| l.parse().ok())) else {
            continue;
        };
        let severity = match get("severity") {
            Some("error") => Severity::Error,
            _ => Severity::Warning,
        };
        let file = file.trim_start_matches("./").to_string();
        out.push(LintMessage {
            severity,
            code: get("code").unwrap_or("EXTERNAL").to_string(),
            location: Location {
                file,
                line: line_no,
                column: get("col").and_then(|c| c.parse().ok()).unwrap_or(1),
            },
            message: get("message").unwrap_or("").trim().to_string(),
            signal: None,
        });
    }
    if out.is_empty() && !output.status.success() {
        let tail: String = text.trim().chars().take(400).collect();
        return vec![tool_error(format!("`{}` exited with {}: {tail}", cfg.cmd, output.status))];
    }
    sort_messages(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::parser::parse_project;

    fn codes(src: &str) -> Vec<String> {
        let p = SourceProject::new("m").with_file("m.v", src);
        let ms = parse_project(&p).unwrap();
        lint_project(&p, None, &ms).into_iter().map(|m| m.code).collect()
    }

    #[test]
    fn basic_checks() {
        assert_eq!(
            codes("module m(input a, b, output w); assign w = a; assign w = b; endmodule"),
            vec![MULTI_DRIVEN]
        );
        assert_eq!(
            codes("module m(input [7:0] x, output [7:0] w); assign w[3:0] = x[3:0]; endmodule"),
            vec![PART_DRIVEN]
        );
        assert_eq!(
            codes("module m(input [7:0] a, b, output [3:0] y); assign y = a[7:0] + b[7:0]; endmodule"),
            vec![WIDTH_MISMATCH]
        );
        assert!(codes("module m(input a, output y); assign y = a; endmodule").is_empty());
    }

    #[test]
    fn external_tool() {
        let p = SourceProject::new("m").with_file("file.v", "module m; endmodule");
        assert!(run_external_linter(&p, None).is_empty());
        let cfg = ExternalLinter::new("echo 'file.v:10:5: warning: WIDTH operand widths differ' #");
        let out = run_external_linter(&p, Some(&cfg));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].code, "WIDTH");
        assert_eq!(out[0].location.line, 10);
        assert_eq!(out[0].location.column, 5);
        let crash = ExternalLinter::new("exit 3 #");
        let out = run_external_linter(&p, Some(&crash));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].code, LINT_TOOL_ERROR);
    }
}
