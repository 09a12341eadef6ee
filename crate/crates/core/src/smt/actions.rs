// SPDX-License-Identifier: Apache-2.0

//! Decoding solver models into source-level repair actions, prompt text for
//! the agent, and a mechanical rewrite used when no agent is involved.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instrument::{FreeVarMap, GuardLiteral, SiteDetail, TemplateKind};
use super::solver::{SolveStatus, SolverStats};
use crate::bits::Bv;
use crate::rtl::ast::{AstModule, Direction, Item, NetKind, Stmt};
use crate::rtl::index::lvalue_names;
use crate::rtl::ir::SiteInfo;
use crate::rtl::{parse_project, Patch, Provenance, SourceProject};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairAction {
    RewriteLiteral {
        site: SiteInfo,
        new_bits: Bv,
        /// Replacement text in the style of the original literal.
        new_text: String,
    },
    GuardCondition {
        site: SiteInfo,
        new_expr: String,
    },
    OverwriteUnder {
        signal: String,
        sequential: bool,
        condition: String,
        value: Bv,
    },
    MakeRegistered {
        signal: String,
    },
    MakeCombinational {
        signal: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairResult {
    pub template: TemplateKind,
    pub actions: Vec<RepairAction>,
    pub solver_stats: SolverStats,
    /// Free-variable values of the chosen model.
    pub model: BTreeMap<String, Bv>,
}

impl RepairResult {
    pub fn is_sat(&self) -> bool {
        self.solver_stats.result == SolveStatus::Sat
    }
}

fn is_on(model: &BTreeMap<String, Bv>, var: &str) -> bool {
    model.get(var).is_some_and(|v| v.is_true())
}

fn value(model: &BTreeMap<String, Bv>, var: &str, width: u32) -> Bv {
    model.get(var).map(|v| v.resize(width)).unwrap_or(Bv::zero(width))
}

fn simple(text: &str) -> bool {
    text.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '[' | ']' | ':' | '.' | '\''))
}

fn paren(text: &str) -> String {
    let t = text.trim();
    if simple(t) {
        t.to_string()
    } else {
        format!("({t})")
    }
}

fn product_text(lits: &[GuardLiteral], model: &BTreeMap<String, Bv>) -> Option<String> {
    let terms: Vec<String> = lits
        .iter()
        .filter(|l| is_on(model, &l.enable))
        .map(|l| {
            let x = if l.width == 1 {
                l.local.clone()
            } else {
                format!("(|{})", l.local)
            };
            if is_on(model, &l.polarity) {
                x
            } else {
                format!("!{x}")
            }
        })
        .collect();
    if terms.is_empty() {
        None
    } else {
        Some(terms.join(" && "))
    }
}

/// Renders `v` like `old` (same size prefix and base), or in decimal for
/// plain numbers and non-literal text.
pub fn render_literal(old: &str, v: &Bv) -> String {
    let t = old.trim();
    if let Some(q) = t.find('\'') {
        let size = t[..q].trim();
        let rest = &t[q + 1..];
        let (signed, rest) = match rest.chars().next() {
            Some(c @ ('s' | 'S')) => (c.to_string(), &rest[1..]),
            _ => (String::new(), rest),
        };
        if let Some(base) = rest.chars().next().filter(|c| "bBoOdDhH".contains(*c)) {
            if size.chars().all(|c| c.is_ascii_digit()) {
                let digits = match base.to_ascii_lowercase() {
                    'b' => format!("{:b}", v.bits()),
                    'o' => format!("{:o}", v.bits()),
                    'd' => v.bits().to_string(),
                    _ if rest.chars().any(|c| c.is_ascii_uppercase()) => format!("{:X}", v.bits()),
                    _ => format!("{:x}", v.bits()),
                };
                return format!("{size}'{signed}{base}{digits}");
            }
        }
    }
    if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '_') {
        return v.bits().to_string();
    }
    format!("{}'d{}", v.width(), v.bits())
}

fn sized(v: &Bv) -> String {
    format!("{}'h{}", v.width(), v.to_hex_string())
}

/// Actions for every site whose change flag is set in `model`.
pub fn decode(fvm: &FreeVarMap, model: &BTreeMap<String, Bv>) -> Vec<RepairAction> {
    let mut out = Vec::new();
    for s in &fvm.sites {
        if !is_on(model, &s.flag) {
            continue;
        }
        out.push(match &s.detail {
            SiteDetail::Literal {
                info,
                var,
                observed_width,
            } => {
                let full = value(model, var, info.width);
                let new_bits = full.resize(*observed_width).resize(info.width);
                RepairAction::RewriteLiteral {
                    new_text: render_literal(&info.text, &new_bits),
                    site: info.clone(),
                    new_bits,
                }
            }
            SiteDetail::Guard { info, mode, literals } => {
                let m = value(model, mode, 2).bits();
                let c = paren(&info.text);
                let base = if m & 2 != 0 { format!("!{c}") } else { c };
                let new_expr = match (product_text(literals, model), m & 1 != 0) {
                    (None, false) => base,
                    (None, true) => "1'b1".to_string(),
                    (Some(p), false) => format!("{base} && {p}"),
                    (Some(p), true) => format!("{base} || {}", paren(&p)),
                };
                RepairAction::GuardCondition {
                    site: info.clone(),
                    new_expr,
                }
            }
            SiteDetail::Overwrite {
                signal,
                width,
                sequential,
                value: var,
                literals,
            } => RepairAction::OverwriteUnder {
                signal: signal.clone(),
                sequential: *sequential,
                condition: product_text(literals, model).unwrap_or_else(|| "1'b1".to_string()),
                value: value(model, var, *width),
            },
            SiteDetail::Shift { signal, was_state } => {
                if *was_state {
                    RepairAction::MakeCombinational { signal: signal.clone() }
                } else {
                    RepairAction::MakeRegistered { signal: signal.clone() }
                }
            }
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("repair result has no actions")]
pub struct EmptyActions;

/// Action list for the agent with template-specific patching rules. Never
/// edits the source itself.
pub fn actions_to_prompt(result: &RepairResult) -> Result<String, EmptyActions> {
    if result.actions.is_empty() {
        return Err(EmptyActions);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "SMT repair ({}) found a fix with {} change(s) [{} in {} ms]:",
        result.template,
        result.actions.len(),
        result.solver_stats.result,
        result.solver_stats.time_ms
    );
    let mut rules: Vec<String> = Vec::new();
    for (i, a) in result.actions.iter().enumerate() {
        let n = i + 1;
        match a {
            RepairAction::RewriteLiteral { site, new_text, .. } => {
                let _ = writeln!(
                    out,
                    "{n}. {}: replace literal `{}` with `{new_text}`",
                    site.location, site.text
                );
                rules.push("Change only the listed constants and keep their width and base.".into());
            }
            RepairAction::GuardCondition { site, new_expr } => {
                let _ = writeln!(
                    out,
                    "{n}. {}: change condition `{}` to `{new_expr}`",
                    site.location, site.text
                );
                rules.push("Prefer editing the existing if/else condition over inserting a new mux.".into());
            }
            RepairAction::OverwriteUnder {
                signal,
                sequential,
                condition,
                value,
            } => {
                let op = if *sequential { "<=" } else { "=" };
                let _ = writeln!(
                    out,
                    "{n}. signal `{signal}`: when `{condition}` holds, assign `{signal} {op} {}` instead of its current value",
                    sized(value)
                );
                rules.push(format!(
                    "Prefer adding a branch to the existing if/else or case that drives `{signal}` over inserting a separate mux."
                ));
            }
            RepairAction::MakeRegistered { signal } => {
                let _ = writeln!(out, "{n}. signal `{signal}` must be delayed by one clock cycle (make it a register)");
                rules.push(format!(
                    "Drive `{signal}` from a clocked always block with a nonblocking assignment (`{signal} <= ...;`) and declare it as reg; do not add a parallel copy."
                ));
            }
            RepairAction::MakeCombinational { signal } => {
                let _ = writeln!(out, "{n}. signal `{signal}` must take its new value in the same cycle (make it combinational)");
                rules.push(format!(
                    "Compute `{signal}` combinationally with `assign` or an always @* block using blocking assignments (`=`)."
                ));
            }
        }
    }
    rules.dedup();
    out.push_str("Constraints:\n");
    for r in rules {
        let _ = writeln!(out, "- {r}");
    }
    out.push_str("- Keep the original coding style and touch nothing else.\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FallbackError {
    #[error("cannot parse the design: {0}")]
    Parse(String),
    #[error("no mechanical rewrite for {0}")]
    Unsupported(String),
}

fn top<'a>(src: &SourceProject, modules: &'a [AstModule]) -> Result<&'a AstModule, FallbackError> {
    modules
        .iter()
        .find(|m| m.name == src.top_module)
        .ok_or_else(|| FallbackError::Unsupported(format!("missing top module `{}`", src.top_module)))
}

fn driving_items<'a>(m: &'a AstModule, signal: &str) -> Vec<&'a Item> {
    m.items
        .iter()
        .filter(|it| match it {
            Item::Assign(a) => lvalue_names(&a.lhs).contains(&signal),
            Item::Always(a) => {
                let mut hit = false;
                a.body.walk(&mut |s| {
                    if let Stmt::Assign { lhs, .. } = s {
                        hit |= lvalue_names(lhs).contains(&signal);
                    }
                });
                hit
            }
            _ => false,
        })
        .collect()
}

fn only_drives(body: &Stmt, signal: &str) -> bool {
    let mut ok = true;
    body.walk(&mut |s| {
        if let Stmt::Assign { lhs, .. } = s {
            ok &= lvalue_names(lhs).iter().all(|n| *n == signal);
        }
    });
    ok
}

/// Rewrites the source directly from the actions. Covers literal and
/// condition edits anywhere, and signal-level actions for top-module signals
/// with a single driving block.
pub fn fallback_patch(src: &SourceProject, result: &RepairResult, clock: Option<&str>) -> Result<Patch, FallbackError> {
    let modules = parse_project(src).map_err(|e| FallbackError::Parse(e.to_string()))?;
    let mut patch = Patch::new(Provenance::SmtTemplate);
    for a in &result.actions {
        match a {
            RepairAction::RewriteLiteral { site, new_text, .. } => {
                let file = &src.file(site.span.file).path;
                patch = patch.with_edit(file, site.span.range(), new_text);
            }
            RepairAction::GuardCondition { site, new_expr } => {
                let file = &src.file(site.span.file).path;
                patch = patch.with_edit(file, site.span.range(), new_expr);
            }
            RepairAction::OverwriteUnder {
                signal,
                condition,
                value,
                ..
            } => {
                let m = top(src, &modules)?;
                let items = driving_items(m, signal);
                let [item] = items.as_slice() else {
                    return Err(FallbackError::Unsupported(format!("`{signal}` with {} driving items", items.len())));
                };
                let file = &src.file(m.file).path;
                match item {
                    Item::Assign(c) if lvalue_names(&c.lhs) == [signal.as_str()] => {
                        let rhs = src.text(c.rhs.span);
                        let text = format!("({condition}) ? {} : ({rhs})", sized(value));
                        patch = patch.with_edit(file, c.rhs.span.range(), text);
                    }
                    Item::Always(b) => {
                        let op = if b.is_comb() { "=" } else { "<=" };
                        let body = src.text(b.body.span());
                        let text = format!(
                            "begin\n    {body}\n    if ({condition}) {signal} {op} {};\n  end",
                            sized(value)
                        );
                        patch = patch.with_edit(file, b.body.span().range(), text);
                    }
                    _ => return Err(FallbackError::Unsupported(format!("partial driver of `{signal}`"))),
                }
            }
            RepairAction::MakeRegistered { signal } => {
                let m = top(src, &modules)?;
                let clk = clock
                    .or_else(|| {
                        m.ports
                            .iter()
                            .find(|p| p.dir == Direction::Input && matches!(p.name.as_str(), "clk" | "clock"))
                            .map(|p| p.name.as_str())
                    })
                    .ok_or_else(|| FallbackError::Unsupported("registering without a clock".into()))?;
                let items = driving_items(m, signal);
                let [item] = items.as_slice() else {
                    return Err(FallbackError::Unsupported(format!("`{signal}` with {} driving items", items.len())));
                };
                let file = src.file(m.file).path.clone();
                match item {
                    Item::Assign(c) if lvalue_names(&c.lhs) == [signal.as_str()] => {
                        let lhs = src.text(c.lhs.span);
                        let rhs = src.text(c.rhs.span);
                        let range = whole_assign(&src.file(m.file).text, c.span.start as usize, c.span.end as usize)
                            .ok_or_else(|| FallbackError::Unsupported(format!("shared assign of `{signal}`")))?;
                        patch = patch.with_edit(&file, range, format!("always @(posedge {clk}) {lhs} <= {rhs};"));
                    }
                    Item::Always(b) if b.is_comb() && only_drives(&b.body, signal) => {
                        patch = patch.with_edit(&file, b.header_span.range(), format!("always @(posedge {clk})"));
                        let mut ops = Vec::new();
                        b.body.walk(&mut |s| {
                            if let Stmt::Assign {
                                blocking: true, op_span, ..
                            } = s
                            {
                                ops.push(*op_span);
                            }
                        });
                        for sp in ops {
                            patch = patch.with_edit(&file, sp.range(), "<=");
                        }
                    }
                    _ => return Err(FallbackError::Unsupported(format!("driver of `{signal}`"))),
                }
                patch = declare_reg(src, m, signal, item, patch)?;
            }
            RepairAction::MakeCombinational { signal } => {
                let m = top(src, &modules)?;
                let items = driving_items(m, signal);
                let [Item::Always(b)] = items.as_slice() else {
                    return Err(FallbackError::Unsupported(format!("driver of `{signal}`")));
                };
                if b.is_comb() || !only_drives(&b.body, signal) {
                    return Err(FallbackError::Unsupported(format!("block driving `{signal}`")));
                }
                let file = src.file(m.file).path.clone();
                patch = patch.with_edit(&file, b.header_span.range(), "always @*");
                let mut ops = Vec::new();
                b.body.walk(&mut |s| {
                    if let Stmt::Assign {
                        blocking: false, op_span, ..
                    } = s
                    {
                        ops.push(*op_span);
                    }
                });
                for sp in ops {
                    patch = patch.with_edit(&file, sp.range(), "=");
                }
            }
        }
    }
    Ok(patch)
}

/// Byte range of `assign <start..end>;` when it holds a single assignment.
fn whole_assign(text: &str, start: usize, end: usize) -> Option<std::ops::Range<usize>> {
    let head = text[..start].trim_end();
    let from = head.strip_suffix("assign").map(|h| h.len())?;
    if text[..end].ends_with(';') {
        return Some(from..end);
    }
    let tail = &text[end..];
    let semi = tail.find(';')?;
    if !tail[..semi].trim().is_empty() {
        return None;
    }
    Some(from..end + semi + 1)
}

fn declare_reg(src: &SourceProject, m: &AstModule, signal: &str, item: &Item, patch: Patch) -> Result<Patch, FallbackError> {
    let file = src.file(m.file).path.clone();
    if let Some(p) = m.port(signal) {
        match (p.kind, p.kind_span) {
            (Some(NetKind::Reg | NetKind::Logic), _) => return Ok(patch),
            (Some(NetKind::Wire), Some(ks)) => return Ok(patch.with_edit(&file, ks.range(), "reg")),
            (None, _) if p.ansi => {
                let at = p.dir_span.end as usize;
                return Ok(patch.with_edit(&file, at..at, " reg"));
            }
            _ => {}
        }
    }
    if let Some(d) = m.decl(signal) {
        return match d.kind {
            NetKind::Reg | NetKind::Logic => Ok(patch),
            NetKind::Wire if d.group_len == 1 && d.init.is_none() => Ok(patch.with_edit(&file, d.kind_span.range(), "reg")),
            _ => Err(FallbackError::Unsupported(format!("declaration of `{signal}`"))),
        };
    }
    let range = m
        .port(signal)
        .and_then(|p| p.range.as_ref())
        .map(|r| format!("{} ", src.text(r.span)))
        .unwrap_or_default();
    let at = item.span().start as usize;
    Ok(patch.with_edit(&file, at..at, format!("reg {range}{signal};\n  ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_style() {
        assert_eq!(render_literal("3'd5", &Bv::new(3, 7)), "3'd7");
        assert_eq!(render_literal("8'hFF", &Bv::new(8, 0x1a)), "8'h1A");
        assert_eq!(render_literal("4'b0010", &Bv::new(4, 5)), "4'b101");
        assert_eq!(render_literal("5", &Bv::new(32, 7)), "7");
        assert_eq!(render_literal("WIDTH", &Bv::new(4, 3)), "4'd3");
    }
}
