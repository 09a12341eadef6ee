// SPDX-License-Identifier: Apache-2.0

//! Tabular stimulus: a header line of signal names followed by one
//! whitespace-separated row per cycle. Cells are binary digits or `0x` hex.
//! Lines starting with `#` are comments.

use thiserror::Error;

use super::WaveformTrace;
use crate::bits::Bv;
use crate::rtl::ir::Signal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("empty table")]
    Empty,
    #[error("line {0}: unknown signal `{1}`")]
    UnknownSignal(usize, String),
    #[error("line {0}: duplicate column `{1}`")]
    Duplicate(usize, String),
    #[error("line {0}: expected {1} cells, found {2}")]
    Cells(usize, usize, usize),
    #[error("line {0}: `{1}` is not a {2}-bit value")]
    Value(usize, String, u32),
}

/// Reads a table whose columns name signals in `signals`.
pub fn read_table(text: &str, signals: &[Signal]) -> Result<WaveformTrace, TableError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(TableError::Empty)?;
    let mut cols: Vec<(String, u32)> = Vec::new();
    for name in header.split_whitespace() {
        let w = signals
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.width)
            .ok_or_else(|| TableError::UnknownSignal(hline, name.to_string()))?;
        if cols.iter().any(|(n, _)| n == name) {
            return Err(TableError::Duplicate(hline, name.to_string()));
        }
        cols.push((name.to_string(), w));
    }
    let mut values: Vec<Vec<Bv>> = vec![Vec::new(); cols.len()];
    for (ln, line) in lines {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != cols.len() {
            return Err(TableError::Cells(ln, cols.len(), cells.len()));
        }
        for (k, cell) in cells.iter().enumerate() {
            let w = cols[k].1;
            let v = Bv::parse_cell(w, cell).ok_or_else(|| TableError::Value(ln, cell.to_string(), w))?;
            values[k].push(v);
        }
    }
    let n = values.first().map_or(0, Vec::len);
    let mut t = WaveformTrace::new(n);
    for ((name, w), vals) in cols.into_iter().zip(values) {
        t.insert(name, w, vals).expect("rows have equal length");
    }
    Ok(t)
}

pub fn write_table(t: &WaveformTrace) -> String {
    let names: Vec<&String> = t.signals.keys().collect();
    let mut out = names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
    out.push('\n');
    for c in 0..t.n_cycles {
        let row: Vec<String> = names.iter().map(|n| cell(&t.signals[*n].values[c])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn cell(v: &Bv) -> String {
    if v.width() <= 8 {
        v.to_bin_string()
    } else {
        format!("0x{}", v.to_hex_string())
    }
}
