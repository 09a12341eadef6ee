// SPDX-License-Identifier: Apache-2.0

//! Verilog front end: sources, parsing, patching, width inference, and
//! elaboration to a word-level transition system.

pub mod ast;
pub mod elab;
pub mod index;
pub mod ir;
pub mod lexer;
pub mod lower;
pub mod parser;
pub mod patch;
pub mod printer;
pub mod source;

use thiserror::Error;

pub use ast::AstModule;
pub use elab::elaborate;
pub use ir::{Expr, SiteId, SiteInfo, SiteKind, TransitionSystem};
pub use lower::{infer_widths, TypedModule, WidthWarning};
pub use parser::parse_project;
pub use patch::{apply_patch, Edit, Patch, Provenance};
pub use source::{Diagnostic, Location, SourceProject, Span};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{0}")]
    Syntax(Diagnostic),
    #[error("unsupported feature `{construct}`: {diag}")]
    Unsupported { construct: String, diag: Diagnostic },
}

impl ParseError {
    pub fn diagnostic(&self) -> &Diagnostic {
        match self {
            ParseError::Syntax(d) | ParseError::Unsupported { diag: d, .. } => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("invalid edit range: {0}")]
    Range(String),
    #[error("patched project does not parse: {0}")]
    Reparse(ParseError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct WidthError(pub Diagnostic);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElabError {
    #[error("combinational loop through {}: {diag}", signals.join(" -> "))]
    CombinationalLoop { signals: Vec<String>, diag: Diagnostic },
    #[error("`{signal}` has multiple drivers: {diag}")]
    MultipleDrivers { signal: String, diag: Diagnostic },
    #[error("hierarchy error: {0}")]
    Hierarchy(Diagnostic),
    #[error("{0}")]
    Width(#[from] WidthError),
    #[error("unsupported feature `{construct}`: {diag}")]
    Unsupported { construct: String, diag: Diagnostic },
}

impl ElabError {
    pub fn diagnostic(&self) -> &Diagnostic {
        match self {
            ElabError::CombinationalLoop { diag, .. }
            | ElabError::MultipleDrivers { diag, .. }
            | ElabError::Hierarchy(diag)
            | ElabError::Width(WidthError(diag))
            | ElabError::Unsupported { diag, .. } => diag,
        }
    }
}

/// Any failure turning source text into a transition system.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Elab(#[from] ElabError),
}

impl FrontError {
    pub fn diagnostic(&self) -> &Diagnostic {
        match self {
            FrontError::Parse(e) => e.diagnostic(),
            FrontError::Elab(e) => e.diagnostic(),
        }
    }
}

/// Parses and elaborates the project's top module.
pub fn build(src: &SourceProject) -> Result<(Vec<AstModule>, TransitionSystem), FrontError> {
    let modules = parse_project(src)?;
    let ts = elaborate(src, &modules, &src.top_module)?;
    Ok((modules, ts))
}
