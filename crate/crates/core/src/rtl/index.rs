// SPDX-License-Identifier: Apache-2.0

//! Symbol navigation over parsed modules: where a name is declared and
//! driven, and where it is read.

use serde::{Deserialize, Serialize};

use super::ast::{AstModule, ExprKind, Item, Stmt};
use super::ast::Expr as AExpr;
use super::source::{Location, SourceProject, Span};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSite {
    pub module: String,
    /// `module`, `parameter`, `input`, `output`, `wire`, `reg`, `instance`,
    /// `assign`, `always`, `initial`, `port connection` or `reference`.
    pub kind: String,
    pub span: Span,
    pub location: Location,
    /// The first source line of the site, trimmed.
    pub snippet: String,
}

impl std::fmt::Display for SymbolSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} [{} in {}] {}", self.location, self.kind, self.module, self.snippet)
    }
}

fn site(src: &SourceProject, module: &str, kind: &str, span: Span) -> SymbolSite {
    let text = &src.file(span.file).text;
    let start = text[..(span.start as usize).min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let end = text[start..].find('\n').map_or(text.len(), |i| start + i);
    SymbolSite {
        module: module.to_string(),
        kind: kind.to_string(),
        span,
        location: src.location(span),
        snippet: text[start..end].trim().to_string(),
    }
}

/// Splits `u0.u1.sig` into the module declaring `sig` and the local name.
fn resolve<'m>(modules: &'m [AstModule], top: &str, name: &str) -> Vec<(&'m AstModule, String)> {
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() == 1 {
        return modules.iter().map(|m| (m, name.to_string())).collect();
    }
    let Some(mut m) = modules.iter().find(|m| m.name == top) else {
        return Vec::new();
    };
    for inst in &parts[..parts.len() - 1] {
        let mut next = None;
        for_each_item(&m.items, &mut |it| {
            if let Item::Instance(i) = it {
                if i.name == *inst {
                    next = modules.iter().find(|x| x.name == i.module);
                }
            }
        });
        match next {
            Some(n) => m = n,
            None => return Vec::new(),
        }
    }
    vec![(m, parts[parts.len() - 1].to_string())]
}

pub fn for_each_item<'a>(items: &'a [Item], f: &mut dyn FnMut(&'a Item)) {
    for it in items {
        f(it);
        if let Item::GenFor(g) = it {
            for_each_item(&g.items, f);
        }
    }
}

/// Every expression in statement `s` as `(expr, is_lvalue)`.
pub fn stmt_exprs<'a>(s: &'a Stmt, f: &mut dyn FnMut(&'a AExpr, bool)) {
    s.walk(&mut |st| match st {
        Stmt::If { cond, .. } => f(cond, false),
        Stmt::Case { subject, arms, .. } => {
            f(subject, false);
            for a in arms {
                for l in &a.labels {
                    f(l, false);
                }
            }
        }
        Stmt::Assign { lhs, rhs, .. } => {
            f(lhs, true);
            f(rhs, false);
        }
        Stmt::For { init, cond, step, .. } => {
            f(init, false);
            f(cond, false);
            f(step, false);
        }
        _ => {}
    });
}

/// Every expression in a module as `(expr, is_lvalue)`.
pub fn module_exprs<'a>(m: &'a AstModule, f: &mut dyn FnMut(&'a AExpr, bool)) {
    for p in &m.params {
        f(&p.value, false);
    }
    for p in &m.ports {
        if let Some(r) = &p.range {
            f(&r.msb, false);
            f(&r.lsb, false);
        }
    }
    for d in &m.decls {
        if let Some(r) = &d.range {
            f(&r.msb, false);
            f(&r.lsb, false);
        }
        if let Some(i) = &d.init {
            f(i, false);
        }
    }
    for_each_item(&m.items, &mut |it| match it {
        Item::Assign(a) => {
            f(&a.lhs, true);
            f(&a.rhs, false);
        }
        Item::Always(a) => stmt_exprs(&a.body, f),
        Item::Initial(i) => stmt_exprs(&i.body, f),
        Item::Instance(i) => {
            for (_, e) in &i.params {
                f(e, false);
            }
            for c in &i.conns {
                if let Some(e) = &c.expr {
                    f(e, false);
                }
            }
        }
        Item::GenFor(g) => {
            f(&g.init, false);
            f(&g.cond, false);
            f(&g.step, false);
        }
    });
}

/// Base names written by an lvalue expression.
pub fn lvalue_names(e: &AExpr) -> Vec<&str> {
    match &e.kind {
        ExprKind::Ident(n) => vec![n.as_str()],
        ExprKind::Index(b, _) | ExprKind::PartSelect(b, _, _) => lvalue_names(b),
        ExprKind::IndexedPart { base, .. } => lvalue_names(base),
        ExprKind::Concat(items) => items.iter().flat_map(lvalue_names).collect(),
        _ => Vec::new(),
    }
}

fn stmt_drives(s: &Stmt, name: &str) -> bool {
    let mut hit = false;
    s.walk(&mut |st| {
        if let Stmt::Assign { lhs, .. } = st {
            hit |= lvalue_names(lhs).contains(&name);
        }
    });
    hit
}

/// Declarations of `name` plus the items that drive it. Hierarchical names
/// (`u0.count`) are resolved from `src.top_module`.
pub fn query_def(src: &SourceProject, modules: &[AstModule], name: &str) -> Vec<SymbolSite> {
    let mut out = Vec::new();
    if !name.contains('.') {
        for m in modules.iter().filter(|m| m.name == name) {
            out.push(site(src, &m.name, "module", m.name_span));
        }
    }
    for (m, local) in resolve(modules, &src.top_module, name) {
        let local = local.as_str();
        for p in m.params.iter().filter(|p| p.name == local) {
            out.push(site(src, &m.name, if p.local { "localparam" } else { "parameter" }, p.span));
        }
        for p in m.ports.iter().filter(|p| p.name == local) {
            let kind = match p.dir {
                super::ast::Direction::Input => "input",
                super::ast::Direction::Output => "output",
            };
            out.push(site(src, &m.name, kind, p.name_span));
        }
        for d in m.decls.iter().filter(|d| d.name == local) {
            if m.port(local).is_none() || d.init.is_some() {
                out.push(site(src, &m.name, d.kind.keyword(), d.name_span));
            }
        }
        for_each_item(&m.items, &mut |it| match it {
            Item::Assign(a) if lvalue_names(&a.lhs).contains(&local) => {
                out.push(site(src, &m.name, "assign", a.span));
            }
            Item::Always(a) if stmt_drives(&a.body, local) => {
                out.push(site(src, &m.name, "always", a.span));
            }
            Item::Initial(i) if stmt_drives(&i.body, local) => {
                out.push(site(src, &m.name, "initial", i.span));
            }
            Item::Instance(i) => {
                if i.name == local {
                    out.push(site(src, &m.name, "instance", i.span));
                }
                let child = modules.iter().find(|c| c.name == i.module);
                for (k, c) in i.conns.iter().enumerate() {
                    let Some(e) = &c.expr else { continue };
                    let port = match (&c.port, child) {
                        (Some(p), Some(ch)) => ch.port(p),
                        (None, Some(ch)) => ch.ports.get(k),
                        _ => None,
                    };
                    let is_out = port.is_some_and(|p| p.dir == super::ast::Direction::Output);
                    if is_out && lvalue_names(e).contains(&local) {
                        out.push(site(src, &m.name, "port connection", c.span));
                    }
                }
            }
            _ => {}
        });
    }
    out.sort_by(|a, b| (&a.location, &a.kind).cmp(&(&b.location, &b.kind)));
    out.dedup_by(|a, b| a.span == b.span && a.kind == b.kind);
    out
}

/// Every place `name` is read.
pub fn query_ref(src: &SourceProject, modules: &[AstModule], name: &str) -> Vec<SymbolSite> {
    let mut out = Vec::new();
    for (m, local) in resolve(modules, &src.top_module, name) {
        module_exprs(m, &mut |e, lhs| {
            if lhs {
                // only index expressions inside a target are reads
                e.walk(&mut |x| match &x.kind {
                    ExprKind::Index(_, i) => i.walk(&mut |y| push_ident(src, m, y, &local, &mut out)),
                    ExprKind::PartSelect(_, a, b) => {
                        a.walk(&mut |y| push_ident(src, m, y, &local, &mut out));
                        b.walk(&mut |y| push_ident(src, m, y, &local, &mut out));
                    }
                    ExprKind::IndexedPart { start, width, .. } => {
                        start.walk(&mut |y| push_ident(src, m, y, &local, &mut out));
                        width.walk(&mut |y| push_ident(src, m, y, &local, &mut out));
                    }
                    _ => {}
                });
            } else {
                e.walk(&mut |x| push_ident(src, m, x, &local, &mut out));
            }
        });
        for_each_item(&m.items, &mut |it| {
            if let Item::Always(a) = it {
                if let super::ast::Sensitivity::Edges(edges) = &a.sens {
                    if edges.iter().any(|(_, n)| *n == local) {
                        out.push(site(src, &m.name, "reference", a.header_span));
                    }
                }
            }
        });
    }
    out.sort_by(|a, b| a.location.cmp(&b.location));
    out.dedup_by(|a, b| a.span == b.span);
    out
}

fn push_ident(src: &SourceProject, m: &AstModule, e: &AExpr, name: &str, out: &mut Vec<SymbolSite>) {
    if let ExprKind::Ident(n) = &e.kind {
        if n == name {
            out.push(site(src, &m.name, "reference", e.span));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::parser::parse_project;

    const SRC: &str = "module m(input clk, input a, output reg busy);\n\
                       wire n = ~a;\n\
                       always @(posedge clk)\n\
                         busy <= n;\n\
                       endmodule\n";

    #[test]
    fn def_and_ref() {
        let p = SourceProject::new("m").with_file("m.v", SRC);
        let ms = parse_project(&p).unwrap();
        let d = query_def(&p, &ms, "busy");
        assert!(d.iter().any(|s| s.kind == "output"));
        assert!(d.iter().any(|s| s.kind == "always" && s.location.line == 3));
        let r = query_ref(&p, &ms, "n");
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].location.line, 4);
        assert!(query_def(&p, &ms, "nothing").is_empty());
    }
}
