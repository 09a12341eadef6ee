// SPDX-License-Identifier: Apache-2.0

//! Template-based repair through bounded model checking with an external
//! SMT solver.

mod actions;
mod bmc;
mod instrument;
pub mod sexpr;
mod solver;

use thiserror::Error;

pub use actions::{actions_to_prompt, decode, fallback_patch, render_literal, EmptyActions, FallbackError, RepairAction, RepairResult};
pub use bmc::{default_horizon, encode_bmc, term, BmcError, SmtScript, MAX_DEFAULT_HORIZON};
pub use instrument::{
    instrument, FreeVarMap, GuardLiteral, InstrumentError, InstrumentedSite, RepairTemplate, SiteDetail, Target,
    TemplateKind, VarKind, MAX_GUARD_LITERALS, PRE_SUFFIX, SHIFT_SUFFIX,
};
pub use solver::{
    at_most, check_script, parse_model, solve_min, solver_available, Session, SolveOutcome, SolveStatus, SolverConfig,
    SolverProcessError, SolverStats, DEFAULT_SOLVER_CMD,
};

use crate::rtl::TransitionSystem;
use crate::wave::Testbench;

/// Solves `script` for the fewest active change flags and decodes the model.
pub fn solve(script: &SmtScript, fvm: &FreeVarMap, cfg: &SolverConfig) -> Result<RepairResult, SolverProcessError> {
    let out = solve_min(script, fvm, cfg)?;
    let actions = if out.stats.result == SolveStatus::Sat {
        decode(fvm, &out.model)
    } else {
        Vec::new()
    };
    Ok(RepairResult {
        template: fvm.template,
        actions,
        solver_stats: out.stats,
        model: out.model,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmtError {
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Bmc(#[from] BmcError),
    #[error(transparent)]
    Solver(#[from] SolverProcessError),
}

/// A solved repair together with the instrumented design it refers to.
#[derive(Clone, Debug)]
pub struct Repair {
    pub result: RepairResult,
    pub instrumented: TransitionSystem,
    pub fvm: FreeVarMap,
}

/// Instrument, encode and solve in one step. `horizon` defaults to the
/// testbench length capped at [`MAX_DEFAULT_HORIZON`].
pub fn repair(
    ts: &TransitionSystem,
    tb: &Testbench,
    template: &RepairTemplate,
    horizon: Option<usize>,
    cfg: &SolverConfig,
) -> Result<Repair, SmtError> {
    let (instrumented, fvm) = instrument(ts, template)?;
    let h = horizon.unwrap_or_else(|| default_horizon(tb)).min(tb.n_cycles());
    let script = encode_bmc(&instrumented, tb, h)?;
    let result = solve(&script, &fvm, cfg)?;
    Ok(Repair {
        result,
        instrumented,
        fvm,
    })
}
