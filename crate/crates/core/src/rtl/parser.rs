// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser for the synthesizable two-state subset.
//!
//! Accepted: module/port/wire/reg/logic/integer declarations, parameters,
//! `assign`, `always @(posedge clk ...)`, `always @*` and its SystemVerilog
//! spellings, `initial` blocks of constant assignments, if/else, case/casez/
//! casex, constant-bound `for` loops, generate-for, and module instances.
//! Anything else with hardware meaning is rejected with
//! [`ParseError::Unsupported`] naming the construct.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{lex_project, Tok, Token};
use super::source::{Diagnostic, FileId, SourceProject, Span};
use super::ParseError;
use crate::bits::MAX_WIDTH;

/// Parses every file of the project into modules.
pub fn parse_project(src: &SourceProject) -> Result<Vec<AstModule>, ParseError> {
    let streams = lex_project(src)?;
    let included = included_files(src);
    let mut modules: Vec<AstModule> = Vec::new();
    for (id, toks) in streams.iter().enumerate() {
        if included.contains(&(id as FileId)) {
            continue;
        }
        let mut p = Parser {
            project: src,
            toks,
            pos: 0,
            file: id as FileId,
        };
        while !p.at_eof() {
            if p.peek().is(";") {
                p.bump();
                continue;
            }
            let m = p.module()?;
            if let Some(prev) = modules.iter().find(|x| x.name == m.name) {
                let loc = src.location(prev.name_span);
                return Err(p.syntax(
                    m.name_span,
                    format!("module `{}` already declared at {loc}", m.name),
                ));
            }
            modules.push(m);
        }
    }
    if modules.is_empty() {
        let span = Span::new(0, 0, 0);
        let diag = if src.files.is_empty() {
            Diagnostic::global("E_SYNTAX", "project has no source files")
        } else {
            Diagnostic::at(src, span, "E_SYNTAX", "no module declaration found")
        };
        return Err(ParseError::Syntax(diag));
    }
    Ok(modules)
}

fn included_files(src: &SourceProject) -> HashSet<FileId> {
    let mut out = HashSet::new();
    for f in &src.files {
        let mut rest = f.text.as_str();
        while let Some(i) = rest.find("`include") {
            rest = &rest[i + 8..];
            let trimmed = rest.trim_start();
            if let Some(q) = trimmed.strip_prefix('"') {
                if let Some(end) = q.find('"') {
                    if let Some(id) = src.file_id(&q[..end]) {
                        out.insert(id);
                    }
                }
            }
        }
    }
    out
}

const RESERVED: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "logic", "integer",
    "parameter", "localparam", "assign", "always", "always_ff", "always_comb", "always_latch",
    "initial", "begin", "end", "if", "else", "case", "casez", "casex", "endcase", "default",
    "for", "generate", "endgenerate", "genvar", "posedge", "negedge", "or", "function", "task",
    "endfunction", "endtask",
];

struct Parser<'a> {
    project: &'a SourceProject,
    toks: &'a [Token],
    pos: usize,
    file: FileId,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, n: usize) -> &'a Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == Tok::Eof
    }

    fn bump(&mut self) -> &'a Token {
        let t = self.peek();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn syntax(&self, span: Span, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax(Diagnostic::at(self.project, span, "E_SYNTAX", msg))
    }

    fn unsupported(&self, span: Span, what: &str) -> ParseError {
        ParseError::Unsupported {
            construct: what.to_string(),
            diag: Diagnostic::at(
                self.project,
                span,
                "E_UNSUPPORTED",
                format!("{what} is outside the supported subset"),
            ),
        }
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.peek().is(text) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<&'a Token> {
        if self.peek().is(text) {
            Ok(self.bump())
        } else {
            let t = self.peek();
            let found = if t.kind == Tok::Eof {
                "end of file".to_string()
            } else {
                format!("`{}`", t.text)
            };
            Err(self.syntax(t.span, format!("expected `{text}`, found {found}")))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        let t = self.peek();
        if t.kind == Tok::Ident && !RESERVED.contains(&t.text.as_str()) {
            self.bump();
            Ok((t.text.clone(), t.span))
        } else {
            let found = if t.kind == Tok::Eof {
                "end of file".to_string()
            } else {
                format!("`{}`", t.text)
            };
            Err(self.syntax(t.span, format!("expected identifier, found {found}")))
        }
    }

    fn reject_signed(&mut self) -> PResult<()> {
        if self.peek().is("signed") {
            return Err(self.unsupported(self.peek().span, "signed arithmetic"));
        }
        self.eat("unsigned");
        Ok(())
    }

    // ---------------------------------------------------------------- modules

    fn module(&mut self) -> PResult<AstModule> {
        let kw = self.peek();
        if kw.is("interface") || kw.is("package") || kw.is("class") || kw.is("program") {
            return Err(self.unsupported(kw.span, &format!("`{}` declaration", kw.text)));
        }
        if !(self.eat("module") || self.eat("macromodule")) {
            return Err(self.syntax(kw.span, format!("expected `module`, found `{}`", kw.text)));
        }
        let start = kw.span;
        let (name, name_span) = self.ident()?;
        let mut m = AstModule {
            name,
            file: self.file,
            span: start,
            name_span,
            params: Vec::new(),
            ports: Vec::new(),
            decls: Vec::new(),
            items: Vec::new(),
        };
        if self.eat("#") {
            self.expect("(")?;
            if !self.peek().is(")") {
                loop {
                    let local = if self.eat("localparam") {
                        true
                    } else {
                        self.eat("parameter");
                        false
                    };
                    self.param_assignment(&mut m, local)?;
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        let mut header_names: Vec<(String, Span)> = Vec::new();
        if self.eat("(") {
            if !self.peek().is(")") {
                if self.is_direction() {
                    self.ansi_ports(&mut m)?;
                } else {
                    loop {
                        header_names.push(self.ident()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
            }
            self.expect(")")?;
        }
        self.expect(";")?;
        let mut items = Vec::new();
        while !self.peek().is("endmodule") {
            if self.at_eof() {
                return Err(self.syntax(self.peek().span, "missing `endmodule`"));
            }
            self.module_item(&mut m, &mut items, header_names.is_empty())?;
        }
        let end = self.bump().span;
        if self.eat(":") {
            self.ident()?;
        }
        m.items = items;
        m.span = start.to(end);

        if !header_names.is_empty() {
            let mut ordered = Vec::new();
            for (n, sp) in &header_names {
                match m.ports.iter().position(|p| &p.name == n) {
                    Some(i) => ordered.push(m.ports[i].clone()),
                    None => {
                        return Err(
                            self.syntax(*sp, format!("port `{n}` has no direction declaration"))
                        )
                    }
                }
            }
            if let Some(extra) = m.ports.iter().find(|p| !header_names.iter().any(|(n, _)| *n == p.name)) {
                return Err(self.syntax(
                    extra.name_span,
                    format!("`{}` is declared as a port but not listed in the module header", extra.name),
                ));
            }
            m.ports = ordered;
        }
        self.check_names(&m)?;
        Ok(m)
    }

    fn check_names(&self, m: &AstModule) -> PResult<()> {
        let mut seen = HashSet::new();
        for p in &m.params {
            if !seen.insert(p.name.as_str()) {
                return Err(self.syntax(p.span, format!("`{}` declared twice", p.name)));
            }
        }
        for p in &m.ports {
            if !seen.insert(p.name.as_str()) {
                return Err(self.syntax(p.name_span, format!("`{}` declared twice", p.name)));
            }
        }
        for d in &m.decls {
            let is_port = m.port(&d.name).is_some();
            if is_port {
                continue;
            }
            if !seen.insert(d.name.as_str()) {
                return Err(self.syntax(d.name_span, format!("`{}` declared twice", d.name)));
            }
        }
        Ok(())
    }

    fn is_direction(&self) -> bool {
        let t = self.peek();
        t.is("input") || t.is("output") || t.is("inout")
    }

    fn net_kind(&mut self) -> PResult<Option<(NetKind, Span)>> {
        let t = self.peek();
        let kind = match t.text.as_str() {
            "wire" if t.kind == Tok::Ident => NetKind::Wire,
            "reg" if t.kind == Tok::Ident => NetKind::Reg,
            "logic" | "bit" if t.kind == Tok::Ident => NetKind::Logic,
            "integer" | "int" if t.kind == Tok::Ident => NetKind::Integer,
            "tri" | "tri0" | "tri1" | "wand" | "wor" | "triand" | "trior" | "supply0"
            | "supply1" | "uwire"
                if t.kind == Tok::Ident =>
            {
                return Err(self.unsupported(t.span, &format!("`{}` net type", t.text)));
            }
            "real" | "realtime" | "time" | "shortreal" | "byte" | "shortint" | "longint"
                if t.kind == Tok::Ident =>
            {
                return Err(self.unsupported(t.span, &format!("`{}` variables", t.text)));
            }
            _ => return Ok(None),
        };
        self.bump();
        Ok(Some((kind, t.span)))
    }

    fn range(&mut self) -> PResult<Option<Range>> {
        if !self.peek().is("[") {
            return Ok(None);
        }
        let open = self.bump().span;
        let msb = self.expr()?;
        self.expect(":")?;
        let lsb = self.expr()?;
        let close = self.expect("]")?.span;
        Ok(Some(Range {
            msb,
            lsb,
            span: open.to(close),
        }))
    }

    fn reject_unpacked(&mut self) -> PResult<()> {
        if self.peek().is("[") {
            return Err(self.unsupported(self.peek().span, "memory array"));
        }
        Ok(())
    }

    fn ansi_ports(&mut self, m: &mut AstModule) -> PResult<()> {
        let mut dir = Direction::Input;
        let mut dir_span = self.peek().span;
        let mut kind: Option<(NetKind, Span)> = None;
        let mut range: Option<Range> = None;
        let mut decl_start = self.peek().span;
        loop {
            if self.is_direction() {
                let t = self.bump();
                if t.is("inout") {
                    return Err(self.unsupported(t.span, "inout port (tri-state)"));
                }
                dir = if t.is("input") {
                    Direction::Input
                } else {
                    Direction::Output
                };
                dir_span = t.span;
                decl_start = t.span;
                kind = self.net_kind()?;
                self.reject_signed()?;
                range = self.range()?;
            } else if let Some(k) = self.net_kind()? {
                kind = Some(k);
                self.reject_signed()?;
                range = self.range()?;
            }
            let (name, name_span) = self.ident()?;
            self.reject_unpacked()?;
            if self.peek().is("=") {
                return Err(self.unsupported(self.peek().span, "port default value"));
            }
            m.ports.push(PortDecl {
                name,
                dir,
                kind: kind.map(|k| k.0),
                kind_span: kind.map(|k| k.1),
                range: range.clone(),
                name_span,
                decl_span: decl_start.to(name_span),
                dir_span,
                ansi: true,
            });
            if !self.eat(",") {
                break;
            }
        }
        Ok(())
    }

    fn param_assignment(&mut self, m: &mut AstModule, local: bool) -> PResult<()> {
        let start = self.peek().span;
        // optional type and range, ignored: parameters are untyped integers
        if self.peek().is("integer") || self.peek().is("int") {
            self.bump();
        }
        self.reject_signed()?;
        self.range()?;
        let (name, _) = self.ident()?;
        self.expect("=")?;
        let value = self.expr()?;
        m.params.push(ParamDecl {
            name,
            local,
            span: start.to(value.span),
            value,
        });
        Ok(())
    }

    fn module_item(&mut self, m: &mut AstModule, items: &mut Vec<Item>, ansi: bool) -> PResult<()> {
        let t = self.peek();
        if t.kind == Tok::SysIdent {
            return Err(self.unsupported(t.span, "system task at module scope"));
        }
        if t.kind == Tok::Punct {
            if t.is(";") {
                self.bump();
                return Ok(());
            }
            if t.is("(") && self.peek_at(1).is("*") && !self.peek_at(2).is(")") {
                return Err(self.unsupported(t.span, "attribute instance"));
            }
            return Err(self.syntax(t.span, format!("unexpected `{}` in module body", t.text)));
        }
        match t.text.as_str() {
            "input" | "output" | "inout" => {
                if ansi && !m.ports.is_empty() {
                    return Err(self.syntax(t.span, "port re-declared in ANSI-style module"));
                }
                self.port_declaration(m)
            }
            "wire" | "reg" | "logic" | "bit" | "integer" | "int" | "tri" | "tri0" | "tri1"
            | "wand" | "wor" | "supply0" | "supply1" | "uwire" | "real" | "time" | "byte"
            | "shortint" | "longint" | "realtime" | "shortreal" => self.net_declaration(m),
            "parameter" | "localparam" => {
                let local = t.is("localparam");
                self.bump();
                loop {
                    self.param_assignment(m, local)?;
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(";")?;
                Ok(())
            }
            "assign" => {
                self.bump();
                loop {
                    let lhs = self.lvalue()?;
                    self.expect("=")?;
                    let rhs = self.expr()?;
                    let span = lhs.span.to(rhs.span);
                    items.push(Item::Assign(ContAssign { lhs, rhs, span }));
                    if !self.eat(",") {
                        break;
                    }
                }
                let semi = self.expect(";")?.span;
                if let Some(Item::Assign(a)) = items.last_mut() {
                    a.span = a.span.to(semi);
                }
                Ok(())
            }
            "always" | "always_ff" | "always_comb" | "always_latch" => {
                let a = self.always()?;
                items.push(Item::Always(a));
                Ok(())
            }
            "initial" => {
                let start = self.bump().span;
                let body = self.stmt()?;
                items.push(Item::Initial(InitialBlock {
                    span: start.to(body.span()),
                    body,
                }));
                Ok(())
            }
            "genvar" => {
                self.bump();
                loop {
                    self.ident()?;
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect(";")?;
                Ok(())
            }
            "generate" => {
                self.bump();
                while !self.peek().is("endgenerate") {
                    if self.at_eof() {
                        return Err(self.syntax(self.peek().span, "missing `endgenerate`"));
                    }
                    self.module_item(m, items, ansi)?;
                }
                self.bump();
                Ok(())
            }
            "for" => {
                let g = self.gen_for(m, ansi)?;
                items.push(Item::GenFor(g));
                Ok(())
            }
            "if" | "case" => Err(self.unsupported(t.span, "generate if/case")),
            "begin" => Err(self.unsupported(t.span, "generate block")),
            "function" | "task" => Err(self.unsupported(t.span, "function/task")),
            "typedef" | "enum" | "struct" | "union" => {
                Err(self.unsupported(t.span, "user-defined types"))
            }
            "assert" | "assume" | "cover" | "property" | "sequence" => {
                Err(self.unsupported(t.span, "assertions"))
            }
            "defparam" => Err(self.unsupported(t.span, "defparam")),
            "specify" => Err(self.unsupported(t.span, "specify block")),
            "module" => Err(self.unsupported(t.span, "nested module")),
            "import" => Err(self.unsupported(t.span, "package import")),
            "endmodule" => Ok(()),
            _ if t.kind == Tok::Ident => {
                let next = self.peek_at(1);
                if next.kind == Tok::Ident || next.is("#") {
                    self.instances(items)
                } else {
                    Err(self.syntax(t.span, format!("unexpected `{}` in module body", t.text)))
                }
            }
            _ => Err(self.syntax(t.span, format!("unexpected `{}` in module body", t.text))),
        }
    }

    fn port_declaration(&mut self, m: &mut AstModule) -> PResult<()> {
        let kw = self.bump();
        if kw.is("inout") {
            return Err(self.unsupported(kw.span, "inout port (tri-state)"));
        }
        let dir = if kw.is("input") {
            Direction::Input
        } else {
            Direction::Output
        };
        let kind = self.net_kind()?;
        self.reject_signed()?;
        let range = self.range()?;
        let mut names = Vec::new();
        loop {
            let (name, span) = self.ident()?;
            self.reject_unpacked()?;
            names.push((name, span));
            if !self.eat(",") {
                break;
            }
        }
        let semi = self.expect(";")?.span;
        let decl_span = kw.span.to(semi);
        for (name, name_span) in names {
            m.ports.push(PortDecl {
                name: name.clone(),
                dir,
                kind: kind.map(|k| k.0),
                kind_span: kind.map(|k| k.1),
                range: range.clone(),
                name_span,
                decl_span,
                dir_span: kw.span,
                ansi: false,
            });
        }
        Ok(())
    }

    fn net_declaration(&mut self, m: &mut AstModule) -> PResult<()> {
        let start = self.peek().span;
        let (kind, kind_span) = self
            .net_kind()?
            .ok_or_else(|| self.syntax(start, "expected a net declaration"))?;
        self.reject_signed()?;
        let range = if kind == NetKind::Integer {
            None
        } else {
            self.range()?
        };
        let mut decls = Vec::new();
        loop {
            let (name, name_span) = self.ident()?;
            self.reject_unpacked()?;
            let init = if self.eat("=") { Some(self.expr()?) } else { None };
            decls.push((name, name_span, init));
            if !self.eat(",") {
                break;
            }
        }
        let semi = self.expect(";")?.span;
        let n = decls.len();
        for (name, name_span, init) in decls {
            m.decls.push(NetDecl {
                name,
                kind,
                range: range.clone(),
                init,
                name_span,
                kind_span,
                decl_span: start.to(semi),
                group_len: n,
            });
        }
        Ok(())
    }

    fn always(&mut self) -> PResult<AlwaysBlock> {
        let kw = self.bump();
        let start = kw.span;
        let sens;
        let header_end;
        if kw.is("always_comb") || kw.is("always_latch") {
            sens = Sensitivity::Comb;
            header_end = kw.span;
        } else {
            if self.peek().is("#") {
                return Err(self.unsupported(self.peek().span, "delay control"));
            }
            if !self.peek().is("@") {
                return Err(self.unsupported(kw.span, "always block without event control"));
            }
            self.bump();
            if self.peek().is("*") {
                header_end = self.bump().span;
                sens = Sensitivity::Comb;
            } else {
                self.expect("(")?;
                if self.peek().is("*") {
                    self.bump();
                    header_end = self.expect(")")?.span;
                    sens = Sensitivity::Comb;
                } else {
                    let mut edges = Vec::new();
                    let mut plain = 0;
                    loop {
                        let edge = if self.eat("posedge") {
                            Some(Edge::Pos)
                        } else if self.eat("negedge") {
                            Some(Edge::Neg)
                        } else {
                            None
                        };
                        let e = self.expr()?;
                        match (edge, e.ident()) {
                            (Some(edge), Some(name)) => edges.push((edge, name.to_string())),
                            (Some(_), None) => {
                                return Err(self.unsupported(e.span, "edge on a non-signal expression"))
                            }
                            (None, _) => plain += 1,
                        }
                        if !(self.eat("or") || self.eat(",")) {
                            break;
                        }
                    }
                    header_end = self.expect(")")?.span;
                    if !edges.is_empty() && plain > 0 {
                        return Err(self.unsupported(start.to(header_end), "mixed edge and level sensitivity"));
                    }
                    sens = if edges.is_empty() {
                        Sensitivity::Comb
                    } else {
                        Sensitivity::Edges(edges)
                    };
                }
            }
        }
        if kw.is("always_ff") && matches!(sens, Sensitivity::Comb) {
            return Err(self.syntax(kw.span, "always_ff requires an edge-triggered event control"));
        }
        let body = self.stmt()?;
        Ok(AlwaysBlock {
            sens,
            span: start.to(body.span()),
            header_span: start.to(header_end),
            body,
        })
    }

    fn instances(&mut self, items: &mut Vec<Item>) -> PResult<()> {
        let (module, mspan) = self.ident()?;
        let mut params = Vec::new();
        if self.eat("#") {
            self.expect("(")?;
            if !self.peek().is(")") {
                loop {
                    if self.eat(".") {
                        let (n, _) = self.ident()?;
                        self.expect("(")?;
                        let v = self.expr()?;
                        self.expect(")")?;
                        params.push((Some(n), v));
                    } else {
                        params.push((None, self.expr()?));
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        loop {
            let (name, _) = self.ident()?;
            self.reject_unpacked()?;
            self.expect("(")?;
            let mut conns = Vec::new();
            if !self.peek().is(")") {
                loop {
                    let cstart = self.peek().span;
                    if self.peek().is(".*") || (self.peek().is(".") && self.peek_at(1).is("*")) {
                        return Err(self.unsupported(cstart, "wildcard port connection"));
                    }
                    if self.eat(".") {
                        let (port, _) = self.ident()?;
                        self.expect("(")?;
                        let expr = if self.peek().is(")") {
                            None
                        } else {
                            Some(self.expr()?)
                        };
                        let close = self.expect(")")?.span;
                        conns.push(PortConn {
                            port: Some(port),
                            expr,
                            span: cstart.to(close),
                        });
                    } else {
                        let e = self.expr()?;
                        conns.push(PortConn {
                            port: None,
                            span: e.span,
                            expr: Some(e),
                        });
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            let close = self.expect(")")?.span;
            items.push(Item::Instance(Instance {
                module: module.clone(),
                name,
                params: params.clone(),
                conns,
                span: mspan.to(close),
            }));
            if !self.eat(",") {
                break;
            }
        }
        let semi = self.expect(";")?.span;
        if let Some(Item::Instance(i)) = items.last_mut() {
            i.span = i.span.to(semi);
        }
        Ok(())
    }

    fn loop_header(&mut self) -> PResult<(String, Expr, Expr, Expr)> {
        self.expect("(")?;
        if self.peek().is("genvar") || self.peek().is("integer") || self.peek().is("int") {
            self.bump();
        }
        let (var, _) = self.ident()?;
        self.expect("=")?;
        let init = self.expr()?;
        self.expect(";")?;
        let cond = self.expr()?;
        self.expect(";")?;
        let (svar, sspan) = self.ident()?;
        if svar != var {
            return Err(self.unsupported(sspan, "loop step on a different variable"));
        }
        let step = if self.eat("++") {
            self.step_expr(&var, sspan, BinaryOp::Add, None)
        } else if self.eat("--") {
            self.step_expr(&var, sspan, BinaryOp::Sub, None)
        } else if self.eat("+=") {
            let e = self.expr()?;
            self.step_expr(&var, sspan, BinaryOp::Add, Some(e))
        } else if self.eat("-=") {
            let e = self.expr()?;
            self.step_expr(&var, sspan, BinaryOp::Sub, Some(e))
        } else {
            self.expect("=")?;
            self.expr()?
        };
        self.expect(")")?;
        Ok((var, init, cond, step))
    }

    fn step_expr(&self, var: &str, span: Span, op: BinaryOp, rhs: Option<Expr>) -> Expr {
        let one = rhs.unwrap_or_else(|| {
            Expr::new(
                ExprKind::Number(Literal {
                    size: None,
                    base: None,
                    value: 1,
                    wild: 0,
                    has_z: false,
                    fill: None,
                }),
                span,
            )
        });
        Expr::new(
            ExprKind::Binary(
                op,
                Box::new(Expr::new(ExprKind::Ident(var.to_string()), span)),
                Box::new(one),
            ),
            span,
        )
    }

    fn gen_for(&mut self, m: &mut AstModule, ansi: bool) -> PResult<GenFor> {
        let start = self.bump().span;
        let (var, init, cond, step) = self.loop_header()?;
        let mut label = None;
        let mut items = Vec::new();
        if self.eat("begin") {
            if self.eat(":") {
                label = Some(self.ident()?.0);
            }
            while !self.peek().is("end") {
                if self.at_eof() {
                    return Err(self.syntax(self.peek().span, "missing `end` in generate loop"));
                }
                let t = self.peek();
                if t.is("wire") || t.is("reg") || t.is("logic") || t.is("integer") {
                    return Err(self.unsupported(t.span, "declaration inside generate block"));
                }
                self.module_item(m, &mut items, ansi)?;
            }
            self.bump();
            if self.eat(":") {
                self.ident()?;
            }
        } else {
            self.module_item(m, &mut items, ansi)?;
        }
        Ok(GenFor {
            var,
            init,
            cond,
            step,
            label,
            items,
            span: start.to(self.prev_span()),
        })
    }

    // ------------------------------------------------------------- statements

    fn stmt(&mut self) -> PResult<Stmt> {
        let t = self.peek();
        if t.kind == Tok::SysIdent {
            let start = self.bump().span;
            let name = t.text.clone();
            if self.eat("(") {
                let mut depth = 1;
                while depth > 0 {
                    let x = self.bump();
                    if x.kind == Tok::Eof {
                        return Err(self.syntax(x.span, "unterminated system task call"));
                    }
                    if x.is("(") {
                        depth += 1;
                    } else if x.is(")") {
                        depth -= 1;
                    }
                }
            }
            let end = self.expect(";")?.span;
            return Ok(Stmt::SysTask {
                name,
                span: start.to(end),
            });
        }
        if t.is(";") {
            self.bump();
            return Ok(Stmt::Null { span: t.span });
        }
        if t.kind == Tok::Punct {
            return match t.text.as_str() {
                "#" => Err(self.unsupported(t.span, "delay control")),
                "@" => Err(self.unsupported(t.span, "event control")),
                "{" => self.assignment(),
                _ => Err(self.syntax(t.span, format!("unexpected `{}` in statement", t.text))),
            };
        }
        match t.text.as_str() {
            "begin" => {
                let start = self.bump().span;
                if self.eat(":") {
                    self.ident()?;
                }
                let mut stmts = Vec::new();
                while !self.peek().is("end") {
                    if self.at_eof() {
                        return Err(self.syntax(self.peek().span, "missing `end`"));
                    }
                    let tt = self.peek();
                    if tt.is("reg") || tt.is("integer") || tt.is("logic") || tt.is("int") {
                        return Err(self.unsupported(tt.span, "block-local declaration"));
                    }
                    stmts.push(self.stmt()?);
                }
                let end = self.bump().span;
                if self.eat(":") {
                    self.ident()?;
                }
                Ok(Stmt::Block {
                    stmts,
                    span: start.to(end),
                })
            }
            "unique" | "unique0" | "priority" => {
                self.bump();
                self.stmt()
            }
            "if" => {
                let start = self.bump().span;
                self.expect("(")?;
                let cond = self.expr()?;
                self.expect(")")?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.eat("else") {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                let end = else_branch
                    .as_ref()
                    .map(|s| s.span())
                    .unwrap_or_else(|| then_branch.span());
                Ok(Stmt::If {
                    cond,
                    then_branch,
                    else_branch,
                    span: start.to(end),
                })
            }
            "case" | "casez" | "casex" => {
                let start = self.bump().span;
                let kind = match t.text.as_str() {
                    "case" => CaseKind::Case,
                    "casez" => CaseKind::Casez,
                    _ => CaseKind::Casex,
                };
                self.expect("(")?;
                let subject = self.expr()?;
                self.expect(")")?;
                if self.peek().is("inside") {
                    return Err(self.unsupported(self.peek().span, "case inside"));
                }
                let mut arms = Vec::new();
                let mut default = None;
                while !self.peek().is("endcase") {
                    if self.at_eof() {
                        return Err(self.syntax(self.peek().span, "missing `endcase`"));
                    }
                    if self.eat("default") {
                        self.eat(":");
                        if default.is_some() {
                            return Err(self.syntax(self.prev_span(), "duplicate default arm"));
                        }
                        default = Some(Box::new(self.stmt()?));
                        continue;
                    }
                    let mut labels = Vec::new();
                    loop {
                        labels.push(self.expr()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect(":")?;
                    let body = self.stmt()?;
                    arms.push(CaseArm { labels, body });
                }
                let end = self.bump().span;
                Ok(Stmt::Case {
                    kind,
                    subject,
                    arms,
                    default,
                    span: start.to(end),
                })
            }
            "for" => {
                let start = self.bump().span;
                let (var, init, cond, step) = self.loop_header()?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::For {
                    span: start.to(body.span()),
                    var,
                    init,
                    cond,
                    step,
                    body,
                })
            }
            "wait" | "forever" | "repeat" | "while" | "do" | "fork" | "disable" | "return"
            | "break" | "continue" => Err(self.unsupported(t.span, &format!("`{}` statement", t.text))),
            "assign" | "deassign" | "force" | "release" => {
                Err(self.unsupported(t.span, "procedural continuous assignment"))
            }
            _ => self.assignment(),
        }
    }

    fn assignment(&mut self) -> PResult<Stmt> {
        let lhs = self.lvalue()?;
        let op = self.peek();
        let blocking = if op.is("=") {
            true
        } else if op.is("<=") {
            false
        } else if op.is("++") || op.is("+=") || op.is("-=") || op.is("--") {
            return Err(self.unsupported(op.span, "compound assignment operator"));
        } else {
            return Err(self.syntax(op.span, format!("expected `=` or `<=`, found `{}`", op.text)));
        };
        self.bump();
        if self.peek().is("#") {
            return Err(self.unsupported(self.peek().span, "delay control"));
        }
        if self.peek().is("@") {
            return Err(self.unsupported(self.peek().span, "event control"));
        }
        let rhs = self.expr()?;
        let end = self.expect(";")?.span;
        Ok(Stmt::Assign {
            span: lhs.span.to(end),
            lhs,
            rhs,
            blocking,
            op_span: op.span,
        })
    }

    fn lvalue(&mut self) -> PResult<Expr> {
        if self.peek().is("{") {
            let open = self.bump().span;
            let mut parts = Vec::new();
            loop {
                parts.push(self.lvalue()?);
                if !self.eat(",") {
                    break;
                }
            }
            let close = self.expect("}")?.span;
            return Ok(Expr::new(ExprKind::Concat(parts), open.to(close)));
        }
        let (name, span) = self.ident()?;
        if self.peek().is(".") {
            return Err(self.unsupported(self.peek().span, "hierarchical reference"));
        }
        let base = Expr::new(ExprKind::Ident(name), span);
        self.selects(base)
    }

    // ------------------------------------------------------------ expressions

    fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(0)?;
        if self.eat("?") {
            let t = self.expr()?;
            self.expect(":")?;
            let f = self.expr()?;
            let span = cond.span.to(f.span);
            return Ok(Expr::new(
                ExprKind::Ternary(Box::new(cond), Box::new(t), Box::new(f)),
                span,
            ));
        }
        Ok(cond)
    }

    fn binop(&self) -> Option<BinaryOp> {
        let t = self.peek();
        if t.kind != Tok::Punct {
            return None;
        }
        use BinaryOp::*;
        Some(match t.text.as_str() {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Rem,
            "**" => Pow,
            "&" => And,
            "|" => Or,
            "^" => Xor,
            "~^" | "^~" => Xnor,
            "<<" => Shl,
            ">>" => Shr,
            "<<<" => AShl,
            ">>>" => AShr,
            "==" => Eq,
            "!=" => Ne,
            "===" => CaseEq,
            "!==" => CaseNe,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "&&" => LogicAnd,
            "||" => LogicOr,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            // `**` is right associative, everything else left
            let next = if op == BinaryOp::Pow { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        let op = if t.kind == Tok::Punct {
            match t.text.as_str() {
                "+" => Some(UnaryOp::Plus),
                "-" => Some(UnaryOp::Neg),
                "~" => Some(UnaryOp::Not),
                "!" => Some(UnaryOp::LogicNot),
                "&" => Some(UnaryOp::RedAnd),
                "~&" => Some(UnaryOp::RedNand),
                "|" => Some(UnaryOp::RedOr),
                "~|" => Some(UnaryOp::RedNor),
                "^" => Some(UnaryOp::RedXor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                _ => None,
            }
        } else {
            None
        };
        if let Some(op) = op {
            let start = self.bump().span;
            let e = self.unary()?;
            let span = start.to(e.span);
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(e)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        match t.kind {
            Tok::Number => {
                self.bump();
                let lit = self.literal(t)?;
                Ok(Expr::new(ExprKind::Number(lit), t.span))
            }
            Tok::Ident => {
                let (name, span) = self.ident()?;
                if self.peek().is("(") {
                    return Err(self.unsupported(span, "function call"));
                }
                if self.peek().is(".") || self.peek().is("::") {
                    return Err(self.unsupported(self.peek().span, "hierarchical reference"));
                }
                if self.peek().is("'") {
                    return Err(self.unsupported(self.peek().span, "cast"));
                }
                self.selects(Expr::new(ExprKind::Ident(name), span))
            }
            Tok::SysIdent => Err(self.unsupported(t.span, &format!("system function `{}`", t.text))),
            Tok::Str => Err(self.unsupported(t.span, "string literal")),
            Tok::Punct if t.is("(") => {
                let open = self.bump().span;
                let mut e = self.expr()?;
                let close = self.expect(")")?.span;
                e.span = open.to(close);
                Ok(e)
            }
            Tok::Punct if t.is("{") => {
                let open = self.bump().span;
                let first = self.expr()?;
                if self.peek().is("{") {
                    self.bump();
                    let mut items = Vec::new();
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect("}")?;
                    let close = self.expect("}")?.span;
                    let e = Expr::new(ExprKind::Repeat(Box::new(first), items), open.to(close));
                    return self.selects_on_concat(e);
                }
                let mut items = vec![first];
                while self.eat(",") {
                    items.push(self.expr()?);
                }
                let close = self.expect("}")?.span;
                let e = Expr::new(ExprKind::Concat(items), open.to(close));
                self.selects_on_concat(e)
            }
            Tok::Punct if t.is("'") => Err(self.unsupported(t.span, "assignment pattern or cast")),
            Tok::Eof => Err(self.syntax(t.span, "unexpected end of file in expression")),
            _ => Err(self.syntax(t.span, format!("unexpected `{}` in expression", t.text))),
        }
    }

    fn selects_on_concat(&mut self, e: Expr) -> PResult<Expr> {
        if self.peek().is("[") {
            return Err(self.unsupported(self.peek().span, "select on a concatenation"));
        }
        Ok(e)
    }

    fn selects(&mut self, mut base: Expr) -> PResult<Expr> {
        while self.peek().is("[") {
            self.bump();
            let first = self.expr()?;
            let kind = if self.eat(":") {
                let lsb = self.expr()?;
                ExprKind::PartSelect(Box::new(base.clone()), Box::new(first), Box::new(lsb))
            } else if self.peek().is("+:") || self.peek().is("-:") {
                let up = self.bump().is("+:");
                let width = self.expr()?;
                ExprKind::IndexedPart {
                    base: Box::new(base.clone()),
                    start: Box::new(first),
                    width: Box::new(width),
                    up,
                }
            } else {
                ExprKind::Index(Box::new(base.clone()), Box::new(first))
            };
            let close = self.expect("]")?.span;
            base = Expr::new(kind, base.span.to(close));
        }
        Ok(base)
    }

    fn literal(&self, t: &Token) -> PResult<Literal> {
        parse_literal(&t.text).map_err(|e| match e {
            LitError::Unsupported(what) => self.unsupported(t.span, what),
            LitError::Bad(msg) => self.syntax(t.span, msg),
        })
    }
}

enum LitError {
    Unsupported(&'static str),
    Bad(String),
}

fn parse_literal(raw: &str) -> Result<Literal, LitError> {
    let text: String = raw.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
    if text.contains('.') {
        return Err(LitError::Unsupported("real number"));
    }
    let Some(tick) = text.find('\'') else {
        let value: u128 = text
            .parse()
            .map_err(|_| LitError::Bad(format!("invalid number `{raw}`")))?;
        if value > u32::MAX as u128 {
            return Err(LitError::Unsupported("unsized literal wider than 32 bits"));
        }
        return Ok(Literal {
            size: None,
            base: None,
            value,
            wild: 0,
            has_z: false,
            fill: None,
        });
    };
    let size = if tick == 0 {
        None
    } else {
        let s: u32 = text[..tick]
            .parse()
            .map_err(|_| LitError::Bad(format!("invalid literal size in `{raw}`")))?;
        if s == 0 {
            return Err(LitError::Bad("literal size must be positive".into()));
        }
        if s > MAX_WIDTH {
            return Err(LitError::Unsupported("vector wider than 128 bits"));
        }
        Some(s)
    };
    let rest = &text[tick + 1..];
    let lower = rest.to_ascii_lowercase();
    if size.is_none() && matches!(lower.as_str(), "0" | "1" | "x" | "z") {
        let c = lower.chars().next().unwrap();
        if c == 'z' {
            return Err(LitError::Unsupported("high-impedance value (tri-state)"));
        }
        return Ok(Literal {
            size: None,
            base: None,
            value: 0,
            wild: 0,
            has_z: false,
            fill: Some(c),
        });
    }
    let mut chars = lower.chars();
    let mut base = chars.next().unwrap_or(' ');
    if base == 's' {
        return Err(LitError::Unsupported("signed arithmetic"));
    }
    let digits: String = chars.collect();
    if digits.is_empty() {
        return Err(LitError::Bad(format!("missing digits in `{raw}`")));
    }
    let bits_per = match base {
        'b' => 1,
        'o' => 3,
        'h' => 4,
        'd' => 0,
        _ => return Err(LitError::Bad(format!("invalid base in `{raw}`"))),
    };
    let mut value: u128 = 0;
    let mut wild: u128 = 0;
    let mut has_z = false;
    let mut ndigits_bits = 0u32;
    if bits_per == 0 {
        if matches!(digits.as_str(), "x" | "z" | "?") {
            wild = u128::MAX;
            has_z = digits != "x";
        } else {
            value = digits
                .parse()
                .map_err(|_| LitError::Bad(format!("invalid decimal digits in `{raw}`")))?;
        }
    } else {
        for c in digits.chars() {
            if ndigits_bits + bits_per > 128 {
                return Err(LitError::Unsupported("vector wider than 128 bits"));
            }
            let digit_mask = (1u128 << bits_per) - 1;
            value <<= bits_per;
            wild <<= bits_per;
            match c {
                'x' => wild |= digit_mask,
                'z' | '?' => {
                    wild |= digit_mask;
                    has_z = true;
                }
                _ => {
                    let d = c
                        .to_digit(16)
                        .filter(|d| (*d as u128) <= digit_mask)
                        .ok_or_else(|| LitError::Bad(format!("invalid digit `{c}` in `{raw}`")))?;
                    value |= d as u128;
                }
            }
            ndigits_bits += bits_per;
        }
        // leading x/z extends to the full size
        if let Some(first) = digits.chars().next() {
            if matches!(first, 'x' | 'z' | '?') {
                let w = size.unwrap_or(32);
                if w > ndigits_bits {
                    let ext = crate::bits::mask(w) & !crate::bits::mask(ndigits_bits);
                    wild |= ext;
                }
            }
        }
        if bits_per == 1 {
            base = 'b';
        }
    }
    let width = size.unwrap_or(32);
    let m = crate::bits::mask(width);
    Ok(Literal {
        size,
        base: Some(base),
        value: value & m & !wild,
        wild: wild & m,
        has_z,
        fill: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<Vec<AstModule>, ParseError> {
        parse_project(&SourceProject::new("m").with_file("a.v", src))
    }

    #[test]
    fn minimal_module() {
        let ms = parse("module m(input a, output b); assign b = a; endmodule").unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].ports.len(), 2);
        assert_eq!(ms[0].items.len(), 1);
        assert!(matches!(ms[0].items[0], Item::Assign(_)));
    }

    #[test]
    fn empty_file_has_no_module() {
        let e = parse("").unwrap_err();
        assert!(matches!(e, ParseError::Syntax(_)));
    }

    #[test]
    fn delay_is_unsupported() {
        let e = parse("module m(input a, output reg b); always @* b = #5 a; endmodule").unwrap_err();
        match e {
            ParseError::Unsupported { construct, .. } => assert_eq!(construct, "delay control"),
            other => panic!("{other:?}"),
        }
        let e = parse("module m(input a, output reg b); always #5 b = a; endmodule").unwrap_err();
        assert!(matches!(e, ParseError::Unsupported { ref construct, .. } if construct == "delay control"));
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for (src, what) in [
            ("module m(inout a); endmodule", "inout port (tri-state)"),
            ("module m(input a); reg [7:0] mem [0:3]; endmodule", "memory array"),
            ("module m(input a); function f; endfunction endmodule", "function/task"),
            ("module m(input signed [3:0] a); endmodule", "signed arithmetic"),
            ("module m(input a, output b); assign b = $clog2(a); endmodule", "system function `$clog2`"),
        ] {
            match parse(src) {
                Err(ParseError::Unsupported { construct, .. }) => assert_eq!(construct, what, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn non_ansi_ports() {
        let ms = parse(
            "module m(a, b, q);\n input a; input [3:0] b;\n output q; reg q;\n always @(posedge a) q <= b[0];\nendmodule",
        )
        .unwrap();
        let m = &ms[0];
        assert_eq!(m.ports.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["a", "b", "q"]);
        assert_eq!(m.decls.len(), 1);
        assert!(!m.ports[1].ansi);
    }

    #[test]
    fn literals() {
        let l = parse_literal("4'b10x1").ok().unwrap();
        assert_eq!((l.size, l.value, l.wild), (Some(4), 0b1001, 0b0010));
        let l = parse_literal("8 'h F_f").ok().unwrap();
        assert_eq!(l.value, 255);
        let l = parse_literal("'d7").ok().unwrap();
        assert_eq!((l.size, l.value), (None, 7));
        let l = parse_literal("4'bx").ok().unwrap();
        assert_eq!(l.wild, 0xf);
        let l = parse_literal("3'd9").ok().unwrap();
        assert_eq!(l.value, 1);
        assert!(matches!(parse_literal("1.5"), Err(LitError::Unsupported(_))));
        assert!(matches!(parse_literal("'z"), Err(LitError::Unsupported(_))));
    }

    #[test]
    fn precedence() {
        let ms = parse("module m(input [3:0] a, b, c, output y); assign y = a + b * c == 4'd3 && a[0] | b[1]; endmodule").unwrap();
        let Item::Assign(asg) = &ms[0].items[0] else { panic!() };
        let ExprKind::Binary(op, _, _) = &asg.rhs.kind else { panic!() };
        assert_eq!(*op, BinaryOp::LogicAnd);
    }

    #[test]
    fn always_forms() {
        let ms = parse(
            "module m(input clk, rst, d, output reg q, output reg r);\n\
             always @(posedge clk or posedge rst) if (rst) q <= 0; else q <= d;\n\
             always @(d or q) r = d ^ q;\nendmodule",
        )
        .unwrap();
        let Item::Always(a) = &ms[0].items[0] else { panic!() };
        assert_eq!(a.clock(), Some((Edge::Pos, "clk")));
        let Item::Always(b) = &ms[0].items[1] else { panic!() };
        assert!(b.is_comb());
    }

    #[test]
    fn duplicate_declaration_rejected() {
        assert!(parse("module m(input a); wire b; wire b; endmodule").is_err());
        assert!(parse("module m(input a); endmodule module m(input b); endmodule").is_err());
    }
}
