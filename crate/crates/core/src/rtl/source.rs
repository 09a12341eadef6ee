// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a file inside a [`SourceProject`].
pub type FileId = u32;

/// Half-open byte range `[start, end)` into one project file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub file: FileId,
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn new(file: FileId, start: usize, end: usize) -> Self {
        Span {
            file,
            start: start as u32,
            end: end as u32,
        }
    }

    /// Smallest span covering both; falls back to `self` across files.
    pub fn to(self, other: Span) -> Span {
        if self.file != other.file {
            return self;
        }
        Span {
            file: self.file,
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..self.end as usize
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

/// The observable part of a design: its source files and the name of the top
/// module. Values are immutable snapshots; edits produce new projects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProject {
    pub files: Vec<SourceFile>,
    pub top_module: String,
}

impl SourceProject {
    pub fn new(top_module: impl Into<String>) -> Self {
        SourceProject {
            files: Vec::new(),
            top_module: top_module.into(),
        }
    }

    pub fn with_file(mut self, path: impl Into<String>, text: impl Into<String>) -> Self {
        self.files.push(SourceFile {
            path: path.into(),
            text: text.into(),
        });
        self
    }

    /// Reads every path as UTF-8; the file path recorded is the one given.
    pub fn load<P: AsRef<std::path::Path>>(
        paths: &[P],
        top_module: &str,
    ) -> std::io::Result<SourceProject> {
        let mut project = SourceProject::new(top_module);
        for p in paths {
            let text = std::fs::read_to_string(p.as_ref())?;
            project.files.push(SourceFile {
                path: p.as_ref().to_string_lossy().into_owned(),
                text,
            });
        }
        Ok(project)
    }

    pub fn file(&self, id: FileId) -> &SourceFile {
        &self.files[id as usize]
    }

    pub fn file_id(&self, path: &str) -> Option<FileId> {
        self.files
            .iter()
            .position(|f| f.path == path)
            .or_else(|| {
                // basename match, used by `include and by agents quoting short names
                self.files.iter().position(|f| {
                    std::path::Path::new(&f.path)
                        .file_name()
                        .map(|n| n.to_string_lossy() == path)
                        .unwrap_or(false)
                })
            })
            .map(|i| i as FileId)
    }

    pub fn text(&self, span: Span) -> &str {
        &self.file(span.file).text[span.range()]
    }

    /// 1-based line and column of a byte offset.
    pub fn line_col(&self, file: FileId, offset: usize) -> (usize, usize) {
        line_col(&self.file(file).text, offset)
    }

    pub fn location(&self, span: Span) -> Location {
        let (line, column) = self.line_col(span.file, span.start as usize);
        Location {
            file: self.file(span.file).path.clone(),
            line,
            column,
        }
    }

    /// Byte offset of a 1-based line/column pair.
    pub fn offset_of(&self, file: FileId, line: usize, column: usize) -> Option<usize> {
        let text = &self.file(file).text;
        let mut cur = 1;
        let mut start = 0;
        if line == 0 || column == 0 {
            return None;
        }
        for (i, c) in text.char_indices() {
            if cur == line {
                break;
            }
            if c == '\n' {
                cur += 1;
                start = i + 1;
            }
        }
        if cur != line {
            return None;
        }
        let off = start + column - 1;
        (off <= text.len()).then_some(off)
    }
}

pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = match before.rfind('\n') {
        Some(nl) => offset - nl,
        None => offset + 1,
    };
    (line, col)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

/// Structured diagnostic: `(file, line, column, code, message)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn at(project: &SourceProject, span: Span, code: &str, message: impl Into<String>) -> Self {
        let loc = project.location(span);
        Diagnostic {
            file: loc.file,
            line: loc.line,
            column: loc.column,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn global(code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            file: String::new(),
            line: 0,
            column: 0,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.file.is_empty() {
            write!(f, "{}: {}", self.code, self.message)
        } else {
            write!(
                f,
                "{}:{}:{}: {}: {}",
                self.file, self.line, self.column, self.code, self.message
            )
        }
    }
}
