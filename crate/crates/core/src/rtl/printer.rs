// SPDX-License-Identifier: Apache-2.0

//! Renders an AST back to Verilog text. Expressions are fully parenthesized;
//! reparsing the output yields the same tree up to spans.

use std::fmt::Write;

use super::ast::*;

pub fn print_modules(modules: &[AstModule]) -> String {
    let mut out = String::new();
    for (i, m) in modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_module(m, &mut out);
    }
    out
}

pub fn print_module(m: &AstModule, out: &mut String) {
    let _ = write!(out, "module {}", m.name);
    if !m.params.is_empty() {
        out.push_str(" #(");
        for (i, p) in m.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let kw = if p.local { "localparam" } else { "parameter" };
            let _ = write!(out, "{kw} {} = {}", p.name, expr(&p.value));
        }
        out.push(')');
    }
    let ansi = m.ports.iter().all(|p| p.ansi);
    out.push_str(" (");
    for (i, p) in m.ports.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        if ansi {
            out.push_str(&port_head(p));
            out.push(' ');
        }
        out.push_str(&p.name);
    }
    out.push_str(");\n");
    if !ansi {
        let mut i = 0;
        while i < m.ports.len() {
            let p = &m.ports[i];
            let mut names = vec![p.name.as_str()];
            let mut j = i + 1;
            while j < m.ports.len() && m.ports[j].decl_span == p.decl_span {
                names.push(&m.ports[j].name);
                j += 1;
            }
            let _ = writeln!(out, "  {} {};", port_head(p), names.join(", "));
            i = j;
        }
    }
    let mut i = 0;
    while i < m.decls.len() {
        let d = &m.decls[i];
        let mut j = i + 1;
        while j < m.decls.len() && m.decls[j].decl_span == d.decl_span && j - i < d.group_len {
            j += 1;
        }
        let names: Vec<String> = m.decls[i..j]
            .iter()
            .map(|d| match &d.init {
                Some(e) => format!("{} = {}", d.name, expr(e)),
                None => d.name.clone(),
            })
            .collect();
        let _ = writeln!(
            out,
            "  {}{} {};",
            d.kind.keyword(),
            range(&d.range),
            names.join(", ")
        );
        i = j;
    }
    for it in &m.items {
        item(it, 1, out);
    }
    out.push_str("endmodule\n");
}

fn port_head(p: &PortDecl) -> String {
    let mut s = String::from(match p.dir {
        Direction::Input => "input",
        Direction::Output => "output",
    });
    if let Some(k) = p.kind {
        s.push(' ');
        s.push_str(k.keyword());
    }
    s.push_str(&range(&p.range));
    s
}

fn range(r: &Option<Range>) -> String {
    match r {
        Some(r) => format!(" [{}:{}]", expr(&r.msb), expr(&r.lsb)),
        None => String::new(),
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn item(it: &Item, level: usize, out: &mut String) {
    indent(level, out);
    match it {
        Item::Assign(a) => {
            let _ = writeln!(out, "assign {} = {};", expr(&a.lhs), expr(&a.rhs));
        }
        Item::Always(a) => {
            match &a.sens {
                Sensitivity::Comb => out.push_str("always @*"),
                Sensitivity::Edges(edges) => {
                    let list: Vec<String> = edges
                        .iter()
                        .map(|(e, s)| {
                            let kw = match e {
                                Edge::Pos => "posedge",
                                Edge::Neg => "negedge",
                            };
                            format!("{kw} {s}")
                        })
                        .collect();
                    let _ = write!(out, "always @({})", list.join(" or "));
                }
            }
            out.push('\n');
            stmt(&a.body, level + 1, out);
        }
        Item::Initial(i) => {
            out.push_str("initial\n");
            stmt(&i.body, level + 1, out);
        }
        Item::Instance(inst) => {
            out.push_str(&inst.module);
            if !inst.params.is_empty() {
                let ps: Vec<String> = inst
                    .params
                    .iter()
                    .map(|(n, v)| match n {
                        Some(n) => format!(".{n}({})", expr(v)),
                        None => expr(v),
                    })
                    .collect();
                let _ = write!(out, " #({})", ps.join(", "));
            }
            let cs: Vec<String> = inst
                .conns
                .iter()
                .map(|c| {
                    let e = c.expr.as_ref().map(expr).unwrap_or_default();
                    match &c.port {
                        Some(p) => format!(".{p}({e})"),
                        None => e,
                    }
                })
                .collect();
            let _ = writeln!(out, " {} ({});", inst.name, cs.join(", "));
        }
        Item::GenFor(g) => {
            let _ = write!(
                out,
                "for ({v} = {}; {}; {v} = {}) begin",
                expr(&g.init),
                expr(&g.cond),
                expr(&g.step),
                v = g.var
            );
            if let Some(l) = &g.label {
                let _ = write!(out, " : {l}");
            }
            out.push('\n');
            for i in &g.items {
                item(i, level + 1, out);
            }
            indent(level, out);
            out.push_str("end\n");
        }
    }
}

pub fn stmt(s: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match s {
        Stmt::Block { stmts, .. } => {
            out.push_str("begin\n");
            for st in stmts {
                stmt(st, level + 1, out);
            }
            indent(level, out);
            out.push_str("end\n");
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let _ = writeln!(out, "if ({})", expr(cond));
            stmt(then_branch, level + 1, out);
            if let Some(e) = else_branch {
                indent(level, out);
                out.push_str("else\n");
                stmt(e, level + 1, out);
            }
        }
        Stmt::Case {
            kind,
            subject,
            arms,
            default,
            ..
        } => {
            let kw = match kind {
                CaseKind::Case => "case",
                CaseKind::Casez => "casez",
                CaseKind::Casex => "casex",
            };
            let _ = writeln!(out, "{kw} ({})", expr(subject));
            for a in arms {
                indent(level + 1, out);
                let labels: Vec<String> = a.labels.iter().map(expr).collect();
                let _ = writeln!(out, "{}:", labels.join(", "));
                stmt(&a.body, level + 2, out);
            }
            if let Some(d) = default {
                indent(level + 1, out);
                out.push_str("default:\n");
                stmt(d, level + 2, out);
            }
            indent(level, out);
            out.push_str("endcase\n");
        }
        Stmt::Assign {
            lhs, rhs, blocking, ..
        } => {
            let op = if *blocking { "=" } else { "<=" };
            let _ = writeln!(out, "{} {op} {};", expr(lhs), expr(rhs));
        }
        Stmt::For {
            var,
            init,
            cond,
            step,
            body,
            ..
        } => {
            let _ = writeln!(
                out,
                "for ({var} = {}; {}; {var} = {})",
                expr(init),
                expr(cond),
                expr(step)
            );
            stmt(body, level + 1, out);
        }
        Stmt::SysTask { name, .. } => {
            let _ = writeln!(out, "{name};");
        }
        Stmt::Null { .. } => out.push_str(";\n"),
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Number(l) => literal(l),
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Index(b, i) => format!("{}[{}]", expr(b), expr(i)),
        ExprKind::PartSelect(b, m, l) => format!("{}[{}:{}]", expr(b), expr(m), expr(l)),
        ExprKind::IndexedPart {
            base,
            start,
            width,
            up,
        } => format!(
            "{}[{} {} {}]",
            expr(base),
            expr(start),
            if *up { "+:" } else { "-:" },
            expr(width)
        ),
        ExprKind::Concat(items) => {
            let parts: Vec<String> = items.iter().map(expr).collect();
            format!("{{{}}}", parts.join(", "))
        }
        ExprKind::Repeat(n, items) => {
            let parts: Vec<String> = items.iter().map(expr).collect();
            format!("{{{}{{{}}}}}", expr(n), parts.join(", "))
        }
        ExprKind::Unary(op, x) => format!("{}({})", op.symbol(), expr(x)),
        ExprKind::Binary(op, l, r) => format!("({} {} {})", expr(l), op.symbol(), expr(r)),
        ExprKind::Ternary(c, t, f) => format!("({} ? {} : {})", expr(c), expr(t), expr(f)),
    }
}

pub fn literal(l: &Literal) -> String {
    if let Some(c) = l.fill {
        return format!("'{c}");
    }
    let Some(base) = l.base else {
        return l.value.to_string();
    };
    let size = l.size.map(|s| s.to_string()).unwrap_or_default();
    let wild_char = if l.has_z { 'z' } else { 'x' };
    let digits = match base {
        'd' => {
            if l.wild != 0 {
                wild_char.to_string()
            } else {
                l.value.to_string()
            }
        }
        _ => {
            let bits_per = match base {
                'b' => 1,
                'o' => 3,
                _ => 4,
            };
            let significant = 128 - (l.value | l.wild).leading_zeros();
            let width = l.size.unwrap_or(significant.max(1));
            let n = width.div_ceil(bits_per).max(1);
            let mut s = String::new();
            for d in (0..n).rev() {
                let shift = d * bits_per;
                let m = ((1u128 << bits_per) - 1) << shift;
                if l.wild & m != 0 {
                    s.push(wild_char);
                } else {
                    let v = (l.value & m) >> shift;
                    s.push(std::char::from_digit(v as u32, 16).unwrap());
                }
            }
            s
        }
    };
    format!("{size}'{base}{digits}")
}
