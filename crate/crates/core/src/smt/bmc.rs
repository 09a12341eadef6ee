// SPDX-License-Identifier: Apache-2.0

//! Bounded-model-checking encoding of a transition system against a
//! testbench as QF_BV SMT-LIB text.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bv;
use crate::rtl::ir::{BinOp, Expr, RedOp, Signal, TransitionSystem, UnOp};
use crate::wave::{Testbench, TestbenchError};

pub const MAX_DEFAULT_HORIZON: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtScript {
    pub text: String,
    pub horizon: usize,
    /// Cycles whose outputs are asserted.
    pub checked_cycles: usize,
    pub free_vars: Vec<Signal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BmcError {
    #[error("horizon {horizon} exceeds the testbench length {cycles}")]
    Horizon { horizon: usize, cycles: usize },
    #[error(transparent)]
    Testbench(#[from] TestbenchError),
}

pub fn default_horizon(tb: &Testbench) -> usize {
    tb.n_cycles().min(MAX_DEFAULT_HORIZON)
}

/// Unrolls `ts` for cycles `0..=horizon`. Inputs and outputs are pinned to the
/// testbench for every unrolled cycle that the testbench covers; state
/// transitions connect consecutive cycles. Free variables are shared by all
/// cycles.
pub fn encode_bmc(ts: &TransitionSystem, tb: &Testbench, horizon: usize) -> Result<SmtScript, BmcError> {
    let n = tb.n_cycles();
    if horizon > n {
        return Err(BmcError::Horizon { horizon, cycles: n });
    }
    tb.check(ts)?;
    let free: BTreeSet<&str> = ts.free_vars.iter().map(|s| s.name.as_str()).collect();
    let mut out = String::new();
    let checked = (horizon + 1).min(n);
    let _ = writeln!(out, "; bmc horizon={horizon} checked={checked}");
    out.push_str("(set-option :produce-models true)\n(set-logic QF_BV)\n");
    for v in &ts.free_vars {
        let _ = writeln!(out, "(declare-const |{}| {})", v.name, sort(v.width));
    }
    for s in &ts.states {
        let _ = writeln!(out, "(declare-const |{}@0| {})", s.name, sort(s.width));
        let _ = writeln!(out, "(assert (= |{}@0| {}))", s.name, bv(&s.init));
    }
    for t in 0..=horizon {
        if t >= n {
            continue;
        }
        for i in &ts.inputs {
            let v = tb.stimulus.value(&i.name, t).unwrap_or(Bv::zero(i.width));
            let _ = writeln!(out, "(declare-const |{}@{t}| {})", i.name, sort(i.width));
            let _ = writeln!(out, "(assert (= |{}@{t}| {}))", i.name, bv(&v));
        }
        for c in &ts.comb {
            let _ = write!(out, "(define-fun |{}@{t}| () {} ", c.name, sort(c.width));
            term(&c.expr, t, &free, &mut out);
            out.push_str(")\n");
        }
        for (name, trace) in &tb.golden.signals {
            let _ = writeln!(out, "(assert (= |{name}@{t}| {}))", bv(&trace.values[t]));
        }
        if t < horizon {
            for s in &ts.states {
                let _ = writeln!(out, "(declare-const |{}@{}| {})", s.name, t + 1, sort(s.width));
                let _ = write!(out, "(assert (= |{}@{}| ", s.name, t + 1);
                term(&s.next, t, &free, &mut out);
                out.push_str("))\n");
            }
        }
    }
    Ok(SmtScript {
        text: out,
        horizon,
        checked_cycles: checked,
        free_vars: ts.free_vars.clone(),
    })
}

pub fn sort(width: u32) -> String {
    format!("(_ BitVec {width})")
}

pub fn bv(v: &Bv) -> String {
    format!("(_ bv{} {})", v.bits(), v.width())
}

fn boolean(cond: &str, out: &mut String) {
    let _ = write!(out, "(ite {cond} #b1 #b0)");
}

/// Appends the SMT-LIB term for `e` at cycle `t`.
pub fn term(e: &Expr, t: usize, free: &BTreeSet<&str>, out: &mut String) {
    match e {
        Expr::Literal { value, .. } => out.push_str(&bv(value)),
        Expr::Ref { name, .. } => {
            if free.contains(name.as_str()) {
                let _ = write!(out, "|{name}|");
            } else {
                let _ = write!(out, "|{name}@{t}|");
            }
        }
        Expr::Unary(op, x) => {
            out.push_str(match op {
                UnOp::Not => "(bvnot ",
                UnOp::Neg => "(bvneg ",
            });
            term(x, t, free, out);
            out.push(')');
        }
        Expr::Reduce(op, x) => {
            let w = x.width();
            let mut inner = String::new();
            term(x, t, free, &mut inner);
            match op {
                RedOp::And => boolean(&format!("(= {inner} {})", bv(&Bv::ones(w))), out),
                RedOp::Or => boolean(&format!("(distinct {inner} {})", bv(&Bv::zero(w))), out),
                RedOp::Xor => {
                    // parity by folding halves keeps the term linear in size
                    let mut acc = inner;
                    let mut width = w;
                    while width > 1 {
                        let half = width / 2;
                        let hi = format!("((_ extract {} {}) {acc})", width - 1, width - half);
                        let lo = if width - half == half {
                            format!("((_ extract {} 0) {acc})", half - 1)
                        } else {
                            format!("((_ zero_extend 1) ((_ extract {} 0) {acc}))", width - half - 1)
                        };
                        let hi = if width - half == half {
                            hi
                        } else {
                            format!("((_ zero_extend 1) {hi})")
                        };
                        acc = format!("(bvxor {hi} {lo})");
                        width -= half;
                    }
                    out.push_str(&acc);
                }
            }
        }
        Expr::Binary(op, l, r) => {
            let mut a = String::new();
            let mut b = String::new();
            term(l, t, free, &mut a);
            term(r, t, free, &mut b);
            let lw = l.width();
            let rw = r.width();
            let name = match op {
                BinOp::Add => "bvadd",
                BinOp::Sub => "bvsub",
                BinOp::Mul => "bvmul",
                BinOp::Udiv => "bvudiv",
                BinOp::Urem => "bvurem",
                BinOp::And => "bvand",
                BinOp::Or => "bvor",
                BinOp::Xor => "bvxor",
                BinOp::Shl | BinOp::Lshr => {
                    let f = if *op == BinOp::Shl { "bvshl" } else { "bvlshr" };
                    if rw == lw {
                        let _ = write!(out, "({f} {a} {b})");
                    } else if rw < lw {
                        let _ = write!(out, "({f} {a} ((_ zero_extend {}) {b}))", lw - rw);
                    } else {
                        let _ = write!(
                            out,
                            "(ite (bvuge {b} {}) {} ({f} {a} ((_ extract {} 0) {b})))",
                            bv(&Bv::new(rw, lw as u128)),
                            bv(&Bv::zero(lw)),
                            lw - 1
                        );
                    }
                    return;
                }
                BinOp::Eq => return boolean(&format!("(= {a} {b})"), out),
                BinOp::Ne => return boolean(&format!("(distinct {a} {b})"), out),
                BinOp::Ult => return boolean(&format!("(bvult {a} {b})"), out),
                BinOp::Ule => return boolean(&format!("(bvule {a} {b})"), out),
                BinOp::Ugt => return boolean(&format!("(bvugt {a} {b})"), out),
                BinOp::Uge => return boolean(&format!("(bvuge {a} {b})"), out),
            };
            let _ = write!(out, "({name} {a} {b})");
        }
        Expr::Ternary { cond, then, els, .. } => {
            out.push_str("(ite (= ");
            term(cond, t, free, out);
            out.push_str(" #b1) ");
            term(then, t, free, out);
            out.push(' ');
            term(els, t, free, out);
            out.push(')');
        }
        Expr::Slice(x, hi, lo) => {
            let _ = write!(out, "((_ extract {hi} {lo}) ");
            term(x, t, free, out);
            out.push(')');
        }
        Expr::Concat(parts) => {
            for p in &parts[..parts.len() - 1] {
                out.push_str("(concat ");
                term(p, t, free, out);
                out.push(' ');
            }
            term(&parts[parts.len() - 1], t, free, out);
            for _ in 1..parts.len() {
                out.push(')');
            }
        }
    }
}
