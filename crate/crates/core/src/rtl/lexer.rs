// SPDX-License-Identifier: Apache-2.0

//! Tokenizer with a small preprocessor: object-like `` `define `` macros with
//! literal expansion, `` `include `` of other project files, and
//! `` `ifdef``/`` `ifndef``/`` `else``/`` `endif``. Tokens produced by a macro
//! expansion carry the span of the macro use.

use std::collections::HashMap;

use super::source::{Diagnostic, FileId, SourceProject, Span};
use super::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident,
    Number,
    SysIdent,
    Str,
    Punct,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: Tok,
    pub text: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, Tok::Ident | Tok::Punct) && self.text == text
    }
}

const PUNCTS: &[&str] = &[
    "<<<=", ">>>=", "<<<", ">>>", "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>",
    "~&", "~|", "~^", "^~", "**", "+:", "-:", "::", "++", "--", "+=", "-=", "(", ")", "[", "]",
    "{", "}", ";", ",", ".", ":", "=", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<",
    ">", "?", "@", "#", "'",
];

const MAX_DEPTH: usize = 32;

/// Lexes all project files in order, sharing the macro table. Returns one token
/// stream per file, each terminated by an `Eof` token.
pub fn lex_project(project: &SourceProject) -> Result<Vec<Vec<Token>>, ParseError> {
    let mut lexer = Lexer {
        project,
        macros: HashMap::new(),
    };
    let mut out = Vec::new();
    for id in 0..project.files.len() as FileId {
        let mut toks = Vec::new();
        lexer.lex_file(id, 0, &mut toks)?;
        let end = project.file(id).text.len();
        toks.push(Token {
            kind: Tok::Eof,
            text: String::new(),
            span: Span::new(id, end, end),
        });
        out.push(toks);
    }
    Ok(out)
}

/// Plain tokenization of a text fragment with no preprocessing; used to check
/// that spans re-lex to the tokens they were parsed from.
pub fn lex_fragment(text: &str) -> Result<Vec<(Tok, String)>, String> {
    let project = SourceProject::new("").with_file("<fragment>", text);
    let mut lexer = Lexer {
        project: &project,
        macros: HashMap::new(),
    };
    let mut toks = Vec::new();
    lexer
        .lex_file(0, 0, &mut toks)
        .map_err(|e| e.to_string())?;
    Ok(toks.into_iter().map(|t| (t.kind, t.text)).collect())
}

struct Lexer<'p> {
    project: &'p SourceProject,
    macros: HashMap<String, String>,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

impl<'p> Lexer<'p> {
    fn err(&self, file: FileId, at: usize, msg: impl Into<String>) -> ParseError {
        let span = Span::new(file, at, at);
        ParseError::Syntax(Diagnostic::at(self.project, span, "E_LEX", msg))
    }

    fn unsupported(&self, file: FileId, at: usize, what: &str) -> ParseError {
        let span = Span::new(file, at, at);
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

    fn lex_file(&mut self, file: FileId, depth: usize, out: &mut Vec<Token>) -> Result<(), ParseError> {
        let text = self.project.file(file).text.clone();
        self.lex_text(&text, file, None, depth, out)
    }

    /// `site` is set when lexing a macro body: every token gets that span.
    fn lex_text(
        &mut self,
        text: &str,
        file: FileId,
        site: Option<Span>,
        depth: usize,
        out: &mut Vec<Token>,
    ) -> Result<(), ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err(file, 0, "macro or include nesting too deep"));
        }
        let b = text.as_bytes();
        let mut i = 0;
        // stack of (active, any_branch_taken) for `ifdef
        let mut cond: Vec<(bool, bool)> = Vec::new();
        let active = |cond: &Vec<(bool, bool)>| cond.iter().all(|(a, _)| *a);
        let span_of = |s: usize, e: usize| site.unwrap_or(Span::new(file, s, e));

        while i < b.len() {
            let c = b[i];
            if c.is_ascii_whitespace() {
                i += 1;
                continue;
            }
            if c == b'/' && b.get(i + 1) == Some(&b'/') {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            if c == b'/' && b.get(i + 1) == Some(&b'*') {
                let start = i;
                i += 2;
                loop {
                    if i + 1 >= b.len() {
                        return Err(self.err(file, start, "unterminated block comment"));
                    }
                    if b[i] == b'*' && b[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
                continue;
            }
            if c == b'`' {
                let start = i;
                i += 1;
                let ns = i;
                while i < b.len() && is_ident_char(b[i]) {
                    i += 1;
                }
                let name = &text[ns..i];
                match name {
                    "ifdef" | "ifndef" | "elsif" => {
                        let (arg, next) = directive_word(text, i);
                        i = next;
                        let defined = self.macros.contains_key(arg);
                        let want = if name == "ifndef" { !defined } else { defined };
                        if name == "elsif" {
                            let Some(top) = cond.last_mut() else {
                                return Err(self.err(file, start, "`elsif without `ifdef"));
                            };
                            let take = !top.1 && want;
                            top.0 = take;
                            top.1 |= take;
                        } else {
                            cond.push((want, want));
                        }
                    }
                    "else" => {
                        let Some(top) = cond.last_mut() else {
                            return Err(self.err(file, start, "`else without `ifdef"));
                        };
                        top.0 = !top.1;
                        top.1 = true;
                    }
                    "endif" => {
                        if cond.pop().is_none() {
                            return Err(self.err(file, start, "`endif without `ifdef"));
                        }
                    }
                    _ if !active(&cond) => {}
                    "define" => {
                        let (mname, next) = directive_word(text, i);
                        if mname.is_empty() {
                            return Err(self.err(file, start, "`define without a name"));
                        }
                        i = next;
                        if b.get(i) == Some(&b'(') {
                            return Err(self.unsupported(file, start, "function-like macro"));
                        }
                        let (body, next) = directive_body(text, i);
                        i = next;
                        self.macros.insert(mname.to_string(), body);
                    }
                    "undef" => {
                        let (mname, next) = directive_word(text, i);
                        i = next;
                        self.macros.remove(mname);
                    }
                    "include" => {
                        while i < b.len() && (b[i] == b' ' || b[i] == b'\t') {
                            i += 1;
                        }
                        if b.get(i) != Some(&b'"') {
                            return Err(self.err(file, start, "`include expects a quoted file name"));
                        }
                        let ps = i + 1;
                        let pe = text[ps..].find('"').map(|o| ps + o).ok_or_else(|| {
                            self.err(file, start, "unterminated `include file name")
                        })?;
                        i = pe + 1;
                        let path = &text[ps..pe];
                        let Some(inc) = self.project.file_id(path) else {
                            return Err(self.err(
                                file,
                                start,
                                format!("`include file `{path}` is not part of the project"),
                            ));
                        };
                        self.lex_file(inc, depth + 1, out)?;
                    }
                    "timescale" | "default_nettype" | "resetall" | "celldefine"
                    | "endcelldefine" | "pragma" | "line" => {
                        while i < b.len() && b[i] != b'\n' {
                            i += 1;
                        }
                    }
                    _ => {
                        let Some(body) = self.macros.get(name).cloned() else {
                            return Err(self.err(file, start, format!("undefined macro `{name}")));
                        };
                        let use_span = span_of(start, i);
                        self.lex_text(&body, file, Some(use_span), depth + 1, out)?;
                    }
                }
                continue;
            }
            if !active(&cond) {
                i += 1;
                continue;
            }
            let start = i;
            if is_ident_start(c) {
                while i < b.len() && is_ident_char(b[i]) {
                    i += 1;
                }
                out.push(Token {
                    kind: Tok::Ident,
                    text: text[start..i].to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            if c == b'\\' {
                i += 1;
                while i < b.len() && !b[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(Token {
                    kind: Tok::Ident,
                    text: text[start + 1..i].to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            if c == b'$' {
                i += 1;
                while i < b.len() && is_ident_char(b[i]) {
                    i += 1;
                }
                out.push(Token {
                    kind: Tok::SysIdent,
                    text: text[start..i].to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            if c == b'"' {
                i += 1;
                while i < b.len() && b[i] != b'"' {
                    if b[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if i >= b.len() {
                    return Err(self.err(file, start, "unterminated string"));
                }
                i += 1;
                out.push(Token {
                    kind: Tok::Str,
                    text: text[start..i].to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            if c.is_ascii_digit() {
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                    i += 1;
                }
                let mut j = i;
                while j < b.len() && (b[j] == b' ' || b[j] == b'\t') {
                    j += 1;
                }
                if let Some(end) = based_literal(b, j) {
                    i = end;
                } else if b.get(i) == Some(&b'.') && b.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    i += 1;
                    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
                        i += 1;
                    }
                }
                out.push(Token {
                    kind: Tok::Number,
                    text: text[start..i].to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            if c == b'\'' {
                if let Some(end) = based_literal(b, i) {
                    i = end;
                    out.push(Token {
                        kind: Tok::Number,
                        text: text[start..i].to_string(),
                        span: span_of(start, i),
                    });
                    continue;
                }
                if let Some(&f) = b.get(i + 1) {
                    let fill = matches!(f, b'0' | b'1' | b'x' | b'X' | b'z' | b'Z');
                    let boundary = b.get(i + 2).is_none_or(|n| !is_ident_char(*n));
                    if fill && boundary {
                        i += 2;
                        out.push(Token {
                            kind: Tok::Number,
                            text: text[start..i].to_string(),
                            span: span_of(start, i),
                        });
                        continue;
                    }
                }
            }
            if let Some(p) = PUNCTS.iter().find(|p| text[i..].starts_with(**p)) {
                i += p.len();
                out.push(Token {
                    kind: Tok::Punct,
                    text: p.to_string(),
                    span: span_of(start, i),
                });
                continue;
            }
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(self.err(file, i, format!("unexpected character `{ch}`")));
        }
        if !cond.is_empty() {
            return Err(self.err(file, b.len(), "missing `endif"));
        }
        Ok(())
    }
}

/// Recognizes `'[sS]?[bodh] digits` starting at `i` (which must point at the
/// apostrophe); returns the end offset.
fn based_literal(b: &[u8], i: usize) -> Option<usize> {
    if b.get(i) != Some(&b'\'') {
        return None;
    }
    let mut j = i + 1;
    if matches!(b.get(j), Some(b's' | b'S')) {
        j += 1;
    }
    if !matches!(
        b.get(j),
        Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
    ) {
        return None;
    }
    j += 1;
    while j < b.len() && (b[j] == b' ' || b[j] == b'\t') {
        j += 1;
    }
    let ds = j;
    while j < b.len() && (b[j].is_ascii_hexdigit() || matches!(b[j], b'_' | b'x' | b'X' | b'z' | b'Z' | b'?')) {
        j += 1;
    }
    (j > ds).then_some(j)
}

fn directive_word(text: &str, mut i: usize) -> (&str, usize) {
    let b = text.as_bytes();
    while i < b.len() && (b[i] == b' ' || b[i] == b'\t') {
        i += 1;
    }
    let s = i;
    while i < b.len() && is_ident_char(b[i]) {
        i += 1;
    }
    (&text[s..i], i)
}

fn directive_body(text: &str, mut i: usize) -> (String, usize) {
    let b = text.as_bytes();
    let mut body = String::new();
    while i < b.len() && b[i] != b'\n' {
        if b[i] == b'\\' && b.get(i + 1) == Some(&b'\n') {
            body.push(' ');
            i += 2;
            continue;
        }
        if b[i] == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            break;
        }
        let ch = text[i..].chars().next().unwrap();
        body.push(ch);
        i += ch.len_utf8();
    }
    (body.trim().to_string(), i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        let p = SourceProject::new("m").with_file("a.v", src);
        lex_project(&p).unwrap()[0]
            .iter()
            .filter(|t| t.kind != Tok::Eof)
            .map(|t| t.text.clone())
            .collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            texts("a <= 4'b1010 + 8 'h FF; // c\n/* x */ b >>> 'd3"),
            vec!["a", "<=", "4'b1010", "+", "8 'h FF", ";", "b", ">>>", "'d3"]
        );
        assert_eq!(texts("x = '0;"), vec!["x", "=", "'0", ";"]);
    }

    #[test]
    fn macros_expand_with_use_site_span() {
        let p = SourceProject::new("m").with_file("a.v", "`define W 8\nwire [`W-1:0] x;");
        let toks = &lex_project(&p).unwrap()[0];
        let eight = toks.iter().find(|t| t.text == "8").unwrap();
        assert_eq!(p.text(eight.span), "`W");
    }

    #[test]
    fn ifdef_selects_branch() {
        assert_eq!(
            texts("`define A\n`ifdef A a `else b `endif `ifndef A c `endif"),
            vec!["a"]
        );
    }

    #[test]
    fn include_splices_other_file() {
        let p = SourceProject::new("m")
            .with_file("top.v", "x `include \"defs.vh\" y")
            .with_file("defs.vh", "z");
        let toks: Vec<_> = lex_project(&p).unwrap()[0]
            .iter()
            .map(|t| t.text.clone())
            .collect();
        assert_eq!(toks, vec!["x", "z", "y", ""]);
    }

    #[test]
    fn undefined_macro_is_error() {
        let p = SourceProject::new("m").with_file("a.v", "`FOO");
        assert!(lex_project(&p).is_err());
    }
}
