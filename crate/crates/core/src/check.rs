// SPDX-License-Identifier: Apache-2.0

//! Parse, elaborate, simulate and compare in one call.

use thiserror::Error;

use crate::rtl::{AstModule, FrontError, SourceProject, TransitionSystem};
use crate::wave::{compare, simulate, Comparison, ShapeError, SimError, SimOptions, Testbench, WaveformTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Front(#[from] FrontError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub modules: Vec<AstModule>,
    pub ts: TransitionSystem,
    pub trace: WaveformTrace,
    pub comparison: Comparison,
}

impl Evaluation {
    pub fn passed(&self) -> bool {
        self.comparison.passed
    }
}

/// Simulates `src` on the testbench stimulus and compares with its golden trace.
pub fn evaluate(src: &SourceProject, tb: &Testbench) -> Result<Evaluation, CheckError> {
    let (modules, ts) = crate::rtl::build(src)?;
    let trace = simulate(&ts, tb, &SimOptions::default())?;
    let comparison = compare(&trace, &tb.golden)?;
    Ok(Evaluation {
        modules,
        ts,
        trace,
        comparison,
    })
}
