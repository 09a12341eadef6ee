// SPDX-License-Identifier: Apache-2.0

//! Byte-range patches over a [`SourceProject`].

use std::fmt;

use serde::{Deserialize, Serialize};

use super::parser::parse_project;
use super::source::SourceProject;
use super::PatchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Agent,
    LintFix,
    SmtTemplate,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Agent => "agent",
            Provenance::LintFix => "lint_fix",
            Provenance::SmtTemplate => "smt_template",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub file: String,
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    pub edits: Vec<Edit>,
    pub provenance: Provenance,
}

impl Patch {
    pub fn new(provenance: Provenance) -> Self {
        Patch {
            edits: Vec::new(),
            provenance,
        }
    }

    pub fn single(
        provenance: Provenance,
        file: impl Into<String>,
        range: std::ops::Range<usize>,
        replacement: impl Into<String>,
    ) -> Self {
        Patch {
            edits: vec![Edit {
                file: file.into(),
                start: range.start,
                end: range.end,
                replacement: replacement.into(),
            }],
            provenance,
        }
    }

    pub fn with_edit(mut self, file: impl Into<String>, range: std::ops::Range<usize>, text: impl Into<String>) -> Self {
        self.edits.push(Edit {
            file: file.into(),
            start: range.start,
            end: range.end,
            replacement: text.into(),
        });
        self
    }

    /// Unified-diff-like rendering with one hunk per edit.
    pub fn render(&self, src: &SourceProject) -> String {
        let mut out = format!("patch ({})\n", self.provenance);
        for e in &self.edits {
            let old = src
                .file_id(&e.file)
                .and_then(|id| src.file(id).text.get(e.start..e.end))
                .unwrap_or("");
            let (line, col) = src
                .file_id(&e.file)
                .map(|id| src.line_col(id, e.start))
                .unwrap_or((0, 0));
            out.push_str(&format!("@@ {}:{}:{} @@\n", e.file, line, col));
            for l in old.lines() {
                out.push_str(&format!("-{l}\n"));
            }
            for l in e.replacement.lines() {
                out.push_str(&format!("+{l}\n"));
            }
        }
        out
    }
}

/// Applies the edits to a copy of `src`; the input is left untouched. The
/// result must still parse.
pub fn apply_patch(src: &SourceProject, p: &Patch) -> Result<SourceProject, PatchError> {
    let out = apply_edits(src, &p.edits)?;
    parse_project(&out).map_err(PatchError::Reparse)?;
    Ok(out)
}

/// Applies edits without reparsing.
pub fn apply_edits(src: &SourceProject, edits: &[Edit]) -> Result<SourceProject, PatchError> {
    let mut per_file: Vec<Vec<&Edit>> = vec![Vec::new(); src.files.len()];
    for e in edits {
        let id = src
            .file_id(&e.file)
            .ok_or_else(|| PatchError::Range(format!("unknown file `{}`", e.file)))?;
        let text = &src.file(id).text;
        if e.start > e.end || e.end > text.len() {
            return Err(PatchError::Range(format!(
                "{}: range {}..{} outside 0..{}",
                e.file,
                e.start,
                e.end,
                text.len()
            )));
        }
        if !text.is_char_boundary(e.start) || !text.is_char_boundary(e.end) {
            return Err(PatchError::Range(format!(
                "{}: range {}..{} splits a character",
                e.file, e.start, e.end
            )));
        }
        per_file[id as usize].push(e);
    }
    let mut out = src.clone();
    for (id, mut es) in per_file.into_iter().enumerate() {
        if es.is_empty() {
            continue;
        }
        es.sort_by_key(|e| (e.start, e.end));
        for w in es.windows(2) {
            let (a, b) = (w[0], w[1]);
            // two insertions at the same point are ambiguous as well
            if b.start < a.end || (a.start == b.start && a.end == a.start && b.end == b.start) {
                return Err(PatchError::Range(format!(
                    "{}: edits {}..{} and {}..{} overlap",
                    a.file, a.start, a.end, b.start, b.end
                )));
            }
        }
        let text = &src.files[id].text;
        let mut new = String::with_capacity(text.len());
        let mut pos = 0;
        for e in es {
            new.push_str(&text[pos..e.start]);
            new.push_str(&e.replacement);
            pos = e.end;
        }
        new.push_str(&text[pos..]);
        out.files[id].text = new;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "module m(input a, output [3:0] b); assign b = 5; endmodule";

    fn project() -> SourceProject {
        SourceProject::new("m").with_file("m.v", SRC)
    }

    #[test]
    fn replaces_literal() {
        let at = SRC.find('5').unwrap();
        let p = Patch::single(Provenance::Agent, "m.v", at..at + 1, "7");
        let src = project();
        let out = apply_patch(&src, &p).unwrap();
        assert_eq!(out.files[0].text, SRC.replace('5', "7"));
        assert_eq!(src, project());
    }

    #[test]
    fn overlapping_edits_rejected() {
        let p = Patch::new(Provenance::Agent)
            .with_edit("m.v", 10..20, "x")
            .with_edit("m.v", 15..25, "y");
        assert!(matches!(apply_patch(&project(), &p), Err(PatchError::Range(_))));
    }

    #[test]
    fn syntax_break_rejected() {
        let at = SRC.find('5').unwrap();
        let p = Patch::single(Provenance::Agent, "m.v", at..at + 1, "");
        assert!(matches!(apply_patch(&project(), &p), Err(PatchError::Reparse(_))));
    }
}
