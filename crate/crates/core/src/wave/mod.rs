// SPDX-License-Identifier: Apache-2.0

//! Per-cycle waveforms: simulation, comparison against a golden reference,
//! VCD and tabular I/O, and a textual diff view.

mod diff;
mod sim;
mod table;
mod vcd;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bv;
use crate::rtl::ir::{Signal, TransitionSystem};

pub use diff::{default_window, diff_view, DiffOptions, DiffReport, DiffRow, WindowError, MARK_CLOSE, MARK_OPEN};
pub use sim::{simulate, simulate_with, SimError, SimOptions, Simulator};
pub use table::{read_table, write_table, TableError};
pub use vcd::{vcd_read, vcd_read_with, vcd_write, VcdError, VcdReadOptions};

pub const DEFAULT_CLOCK: &str = "clk";
pub const DEFAULT_TIMESCALE: &str = "1ns";
pub const DEFAULT_SCOPE: &str = "top";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub width: u32,
    pub values: Vec<Bv>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformTrace {
    pub signals: BTreeMap<String, SignalTrace>,
    pub n_cycles: usize,
    pub clock_name: String,
    pub timescale: String,
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("signal `{0}` has {1} values, expected {2}")]
    Length(String, usize, usize),
    #[error("signal `{0}` value {1:?} does not have width {2}")]
    Width(String, Bv, u32),
    #[error("duplicate signal `{0}`")]
    Duplicate(String),
}

impl WaveformTrace {
    pub fn new(n_cycles: usize) -> Self {
        WaveformTrace {
            signals: BTreeMap::new(),
            n_cycles,
            clock_name: DEFAULT_CLOCK.to_string(),
            timescale: DEFAULT_TIMESCALE.to_string(),
            scope: DEFAULT_SCOPE.to_string(),
        }
    }

    pub fn with_clock(mut self, name: impl Into<String>) -> Self {
        self.clock_name = name.into();
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, width: u32, values: Vec<Bv>) -> Result<(), TraceError> {
        let name = name.into();
        if values.len() != self.n_cycles {
            return Err(TraceError::Length(name, values.len(), self.n_cycles));
        }
        if let Some(v) = values.iter().find(|v| v.width() != width) {
            return Err(TraceError::Width(name, *v, width));
        }
        if self.signals.contains_key(&name) {
            return Err(TraceError::Duplicate(name));
        }
        self.signals.insert(name, SignalTrace { width, values });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&SignalTrace> {
        self.signals.get(name)
    }

    pub fn value(&self, name: &str, cycle: usize) -> Option<Bv> {
        self.signals.get(name).and_then(|s| s.values.get(cycle)).copied()
    }

    /// Checks the length and width invariants.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (n, s) in &self.signals {
            if s.values.len() != self.n_cycles {
                return Err(TraceError::Length(n.clone(), s.values.len(), self.n_cycles));
            }
            if let Some(v) = s.values.iter().find(|v| v.width() != s.width) {
                return Err(TraceError::Width(n.clone(), *v, s.width));
            }
        }
        Ok(())
    }

    /// Copy with only the named signals (those present).
    pub fn restrict<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> WaveformTrace {
        let mut out = WaveformTrace {
            signals: BTreeMap::new(),
            ..self.clone_header()
        };
        for n in names {
            if let Some(s) = self.signals.get(n) {
                out.signals.insert(n.to_string(), s.clone());
            }
        }
        out
    }

    /// First `n` cycles.
    pub fn truncate(&self, n: usize) -> WaveformTrace {
        let n = n.min(self.n_cycles);
        let mut out = self.clone_header();
        out.n_cycles = n;
        for (k, s) in &self.signals {
            out.signals.insert(
                k.clone(),
                SignalTrace {
                    width: s.width,
                    values: s.values[..n].to_vec(),
                },
            );
        }
        out
    }

    /// Union of two traces with the same length; `other` wins on conflicts.
    pub fn merged(&self, other: &WaveformTrace) -> WaveformTrace {
        let mut out = self.clone();
        for (k, s) in &other.signals {
            out.signals.insert(k.clone(), s.clone());
        }
        out
    }

    fn clone_header(&self) -> WaveformTrace {
        WaveformTrace {
            signals: BTreeMap::new(),
            n_cycles: self.n_cycles,
            clock_name: self.clock_name.clone(),
            timescale: self.timescale.clone(),
            scope: self.scope.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetSpec {
    pub signal: String,
    pub active: u128,
    pub cycles: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testbench {
    pub name: String,
    pub stimulus: WaveformTrace,
    pub golden: WaveformTrace,
    pub reset: Option<ResetSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestbenchError {
    #[error("stimulus has {0} cycles but golden has {1}")]
    Length(usize, usize),
    #[error("input `{0}` is not driven by the stimulus")]
    MissingInput(String),
    #[error("input `{0}` is {1} bits in the stimulus but {2} bits in the design")]
    InputWidth(String, u32, u32),
    #[error("golden output `{0}` is not an output of the design")]
    UnknownOutput(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl Testbench {
    pub fn new(name: impl Into<String>, stimulus: WaveformTrace, golden: WaveformTrace) -> Result<Self, TestbenchError> {
        stimulus.validate()?;
        golden.validate()?;
        if stimulus.n_cycles != golden.n_cycles {
            return Err(TestbenchError::Length(stimulus.n_cycles, golden.n_cycles));
        }
        Ok(Testbench {
            name: name.into(),
            stimulus,
            golden,
            reset: None,
        })
    }

    /// Splits one dump holding inputs and outputs into a testbench for `ts`.
    pub fn split(name: impl Into<String>, dump: &WaveformTrace, ts: &TransitionSystem) -> Result<Self, TestbenchError> {
        let stimulus = dump.restrict(ts.inputs.iter().map(|s| s.name.as_str()));
        let golden = dump.restrict(ts.outputs.iter().map(|s| s.name.as_str()));
        let tb = Testbench::new(name, stimulus, golden)?;
        tb.check(ts)?;
        Ok(tb)
    }

    /// Fills a reset input that the stimulus leaves out: active for the first
    /// `cycles` cycles, inactive afterwards.
    pub fn with_reset(mut self, spec: ResetSpec, width: u32) -> Self {
        if !self.stimulus.signals.contains_key(&spec.signal) {
            let active = Bv::new(width, spec.active);
            let idle = Bv::new(width, if spec.active == 0 { 1 } else { 0 });
            let values = (0..self.stimulus.n_cycles)
                .map(|c| if c < spec.cycles { active } else { idle })
                .collect();
            self.stimulus
                .insert(spec.signal.clone(), width, values)
                .expect("fresh signal");
        }
        self.reset = Some(spec);
        self
    }

    pub fn n_cycles(&self) -> usize {
        self.stimulus.n_cycles
    }

    /// Golden outputs recorded from a reference design driven by `stimulus`.
    pub fn from_reference(
        name: impl Into<String>,
        reference: &TransitionSystem,
        stimulus: WaveformTrace,
    ) -> Result<Self, ReferenceError> {
        let name = name.into();
        let probe = Testbench::new(name.clone(), stimulus.clone(), WaveformTrace::new(stimulus.n_cycles))?;
        let out = simulate(reference, &probe, &SimOptions::default())?;
        let golden = out.restrict(reference.outputs.iter().map(|o| o.name.as_str()));
        Ok(Testbench::new(name, stimulus, golden)?)
    }

    /// Every input that the design reads is driven with the right width and
    /// every golden signal is an output. Unread inputs may be left out; they
    /// are held at zero.
    pub fn check(&self, ts: &TransitionSystem) -> Result<(), TestbenchError> {
        for Signal { name, width } in &ts.inputs {
            match self.stimulus.get(name) {
                None if !ts.reads(name) => {}
                None => return Err(TestbenchError::MissingInput(name.clone())),
                Some(s) if s.width != *width => {
                    return Err(TestbenchError::InputWidth(name.clone(), s.width, *width))
                }
                _ => {}
            }
        }
        for n in self.golden.signals.keys() {
            if !ts.outputs.iter().any(|o| &o.name == n) {
                return Err(TestbenchError::UnknownOutput(n.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Testbench(#[from] TestbenchError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub signal: String,
    pub cycle: usize,
    pub got: Bv,
    pub expected: Bv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub passed: bool,
    pub mismatches: Vec<Mismatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("traces have {0} and {1} cycles")]
    Length(usize, usize),
    #[error("signal `{0}` is missing from the simulated trace")]
    Missing(String),
    #[error("signal `{0}` is {1} bits but the golden trace has {2}")]
    Width(String, u32, u32),
}

/// Compares every golden signal cycle by cycle. Signals that only `got`
/// carries are ignored.
pub fn compare(got: &WaveformTrace, golden: &WaveformTrace) -> Result<Comparison, ShapeError> {
    if got.n_cycles != golden.n_cycles {
        return Err(ShapeError::Length(got.n_cycles, golden.n_cycles));
    }
    let mut mismatches = Vec::new();
    for (name, g) in &golden.signals {
        let Some(s) = got.signals.get(name) else {
            return Err(ShapeError::Missing(name.clone()));
        };
        if s.width != g.width {
            return Err(ShapeError::Width(name.clone(), s.width, g.width));
        }
        for (cycle, (a, b)) in s.values.iter().zip(&g.values).enumerate() {
            if a != b {
                mismatches.push(Mismatch {
                    signal: name.clone(),
                    cycle,
                    got: *a,
                    expected: *b,
                });
            }
        }
    }
    mismatches.sort_by(|a, b| (a.cycle, &a.signal).cmp(&(b.cycle, &b.signal)));
    Ok(Comparison {
        passed: mismatches.is_empty(),
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(vals: &[u128]) -> WaveformTrace {
        let mut t = WaveformTrace::new(vals.len());
        t.insert("y", 4, vals.iter().map(|v| Bv::new(4, *v)).collect()).unwrap();
        t
    }

    #[test]
    fn identical_traces_pass() {
        let t = trace(&[1, 2, 3]);
        assert_eq!(
            compare(&t, &t).unwrap(),
            Comparison {
                passed: true,
                mismatches: vec![]
            }
        );
    }

    #[test]
    fn flipped_bit_reported() {
        let vals: Vec<u128> = (0..10).collect();
        let mut bad = vals.clone();
        bad[7] ^= 1;
        let c = compare(&trace(&bad), &trace(&vals)).unwrap();
        assert!(!c.passed);
        assert_eq!(c.mismatches.len(), 1);
        assert_eq!(c.mismatches[0].cycle, 7);
        assert_eq!(c.mismatches[0].got, Bv::new(4, 6));
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let a = trace(&[1]);
        let mut b = WaveformTrace::new(1);
        b.insert("y", 5, vec![Bv::new(5, 1)]).unwrap();
        assert!(matches!(compare(&a, &b), Err(ShapeError::Width(..))));
        assert!(matches!(compare(&a, &trace(&[1, 1])), Err(ShapeError::Length(..))));
    }
}
