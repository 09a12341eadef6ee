// SPDX-License-Identifier: Apache-2.0

//! Textual waveform table with mismatching cells marked `>>v<<`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{compare, Mismatch, ShapeError, WaveformTrace};
use crate::bits::Bv;

pub const MARK_OPEN: &str = ">>";
pub const MARK_CLOSE: &str = "<<";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffOptions {
    pub max_width_shown: u32,
    /// Cap on rows without mismatches; rows with mismatches are always shown.
    pub max_signals: usize,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            max_width_shown: 64,
            max_signals: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub signal: String,
    pub cells: Vec<String>,
    /// Row of expected values printed under a mismatching signal.
    pub expected: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub window: (usize, usize),
    pub rows: Vec<DiffRow>,
    pub mismatches: Vec<Mismatch>,
    pub suppressed: Vec<(String, String)>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("window {0}..{1} is not inside 0..{2}")]
    Range(usize, usize, usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// 32 cycles centred on the first mismatch, or the first 32 cycles.
pub fn default_window(got: &WaveformTrace, golden: &WaveformTrace) -> (usize, usize) {
    let n = golden.n_cycles;
    let first = compare(got, golden)
        .ok()
        .and_then(|c| c.mismatches.first().map(|m| m.cycle))
        .unwrap_or(0);
    let start = first.saturating_sub(16).min(n.saturating_sub(32));
    (start, (start + 32).min(n))
}

fn render(v: &Bv) -> String {
    if v.width() <= 4 {
        v.to_bin_string()
    } else {
        v.to_hex_string()
    }
}

pub fn diff_view(
    got: &WaveformTrace,
    golden: &WaveformTrace,
    window: Option<(usize, usize)>,
    opts: &DiffOptions,
) -> Result<DiffReport, WindowError> {
    let cmp = compare(got, golden)?;
    let (start, end) = window.unwrap_or_else(|| default_window(got, golden));
    let n = golden.n_cycles;
    if start > end || end > n || (start == end && n > 0) {
        return Err(WindowError::Range(start, end, n));
    }
    let mismatches: Vec<Mismatch> = cmp
        .mismatches
        .into_iter()
        .filter(|m| m.cycle >= start && m.cycle < end)
        .collect();

    // context signals (only in `got`) first, then compared signals
    let mut order: Vec<(&String, bool)> = got
        .signals
        .keys()
        .filter(|k| !golden.signals.contains_key(*k))
        .map(|k| (k, false))
        .collect();
    order.extend(golden.signals.keys().map(|k| (k, true)));

    let mut rows = Vec::new();
    let mut suppressed = Vec::new();
    let mut plain_rows = 0;
    for (name, compared) in order {
        let s = &got.signals[name];
        let bad: Vec<&Mismatch> = mismatches.iter().filter(|m| &m.signal == name).collect();
        if bad.is_empty() {
            if plain_rows >= opts.max_signals {
                suppressed.push((name.clone(), "row limit".to_string()));
                continue;
            }
            plain_rows += 1;
        }
        let wide = s.width > opts.max_width_shown;
        if wide {
            suppressed.push((
                name.clone(),
                format!("{} bits exceeds {}", s.width, opts.max_width_shown),
            ));
        }
        let cells: Vec<String> = (start..end)
            .map(|c| {
                let v = &s.values[c];
                if bad.iter().any(|m| m.cycle == c) {
                    format!("{MARK_OPEN}{}{MARK_CLOSE}", render(v))
                } else if wide {
                    "=".to_string()
                } else {
                    render(v)
                }
            })
            .collect();
        rows.push(DiffRow {
            signal: name.clone(),
            cells,
            expected: false,
        });
        if compared && !bad.is_empty() {
            let g = &golden.signals[name];
            let cells = (start..end)
                .map(|c| {
                    if wide && !bad.iter().any(|m| m.cycle == c) {
                        "=".to_string()
                    } else {
                        render(&g.values[c])
                    }
                })
                .collect();
            rows.push(DiffRow {
                signal: format!("{name} (expected)"),
                cells,
                expected: true,
            });
        }
    }

    let mut text = String::new();
    let label_w = rows.iter().map(|r| r.signal.len()).max().unwrap_or(5).max(5);
    let cell_w = rows
        .iter()
        .flat_map(|r| r.cells.iter().map(String::len))
        .chain((start..end).map(|c| c.to_string().len()))
        .max()
        .unwrap_or(1);
    let header: Vec<String> = (start..end).map(|c| format!("{c:>cell_w$}")).collect();
    text.push_str(&format!("{:<label_w$} | {}\n", "cycle", header.join(" ")));
    for r in &rows {
        let cells: Vec<String> = r.cells.iter().map(|c| format!("{c:>cell_w$}")).collect();
        text.push_str(&format!("{:<label_w$} | {}\n", r.signal, cells.join(" ")));
    }
    for (s, why) in &suppressed {
        text.push_str(&format!("suppressed {s}: {why}\n"));
    }
    if mismatches.is_empty() {
        text.push_str("no mismatches in window\n");
    } else {
        text.push_str(&format!("{} mismatching cells in window\n", mismatches.len()));
    }
    Ok(DiffReport {
        window: (start, end),
        rows,
        mismatches,
        suppressed,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(name: &str, w: u32, vals: &[u128]) -> WaveformTrace {
        let mut t = WaveformTrace::new(vals.len());
        t.insert(name, w, vals.iter().map(|v| Bv::new(w, *v)).collect()).unwrap();
        t
    }

    #[test]
    fn one_marked_cell() {
        let golden = tr("y", 4, &[0, 1, 2, 3, 4, 5, 6, 7]);
        let got = tr("y", 4, &[0, 1, 2, 9, 4, 5, 6, 7]);
        let r = diff_view(&got, &golden, Some((0, 8)), &DiffOptions::default()).unwrap();
        assert_eq!(r.mismatches.len(), 1);
        assert_eq!(r.text.matches(MARK_OPEN).count(), 1);
        assert!(r.text.contains(">>1001<<"));
        let clean = diff_view(&golden, &golden, Some((0, 8)), &DiffOptions::default()).unwrap();
        assert!(clean.mismatches.is_empty());
        assert!(!clean.text.contains(MARK_OPEN));
    }

    #[test]
    fn wide_signal_suppressed() {
        let t = tr("w", 128, &[1, 2]);
        let r = diff_view(&t, &t, Some((0, 2)), &DiffOptions::default()).unwrap();
        assert_eq!(r.suppressed.len(), 1);
        assert_eq!(r.suppressed[0].0, "w");
    }

    #[test]
    fn bad_window() {
        let t = tr("w", 1, &[1, 0]);
        assert!(matches!(
            diff_view(&t, &t, Some((1, 5)), &DiffOptions::default()),
            Err(WindowError::Range(..))
        ));
    }
}
