// SPDX-License-Identifier: Apache-2.0

//! Cycle-based simulation of a [`TransitionSystem`].

use std::collections::HashMap;

use thiserror::Error;

use super::{Testbench, TestbenchError, WaveformTrace};
use crate::bits::Bv;
use crate::rtl::ir::{BinOp, Expr, RedOp, TransitionSystem, UnOp};

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    /// Also record inputs, states and internal wires.
    pub internal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Testbench(#[from] TestbenchError),
    #[error("free variable `{0}` has width {1}, value has {2}")]
    FreeWidth(String, u32, u32),
}

#[derive(Clone, Debug)]
enum Op {
    Lit(Bv),
    Slot(usize),
    Un(UnOp, Box<Op>),
    Bin(BinOp, Box<Op>, Box<Op>),
    Red(RedOp, Box<Op>),
    Mux(Box<Op>, Box<Op>, Box<Op>),
    Slice(Box<Op>, u32, u32),
    Concat(Vec<Op>),
}

impl Op {
    fn eval(&self, slots: &[Bv]) -> Bv {
        match self {
            Op::Lit(v) => *v,
            Op::Slot(i) => slots[*i],
            Op::Un(UnOp::Not, e) => e.eval(slots).not(),
            Op::Un(UnOp::Neg, e) => e.eval(slots).neg(),
            Op::Bin(op, l, r) => op.apply(&l.eval(slots), &r.eval(slots)),
            Op::Red(op, e) => {
                let v = e.eval(slots);
                match op {
                    RedOp::And => v.reduce_and(),
                    RedOp::Or => v.reduce_or(),
                    RedOp::Xor => v.reduce_xor(),
                }
            }
            Op::Mux(c, t, e) => {
                if c.eval(slots).is_true() {
                    t.eval(slots)
                } else {
                    e.eval(slots)
                }
            }
            Op::Slice(e, hi, lo) => e.eval(slots).slice(*hi, *lo),
            Op::Concat(parts) => {
                let mut acc = parts[0].eval(slots);
                for p in &parts[1..] {
                    acc = acc.concat(&p.eval(slots));
                }
                acc
            }
        }
    }
}

/// A transition system compiled to slot-indexed evaluation.
#[derive(Clone, Debug)]
pub struct Simulator {
    slots: Vec<Bv>,
    index: HashMap<String, usize>,
    names: Vec<String>,
    inputs: Vec<usize>,
    comb: Vec<(usize, Op)>,
    states: Vec<(usize, Op)>,
    init: Vec<(usize, Bv)>,
}

impl Simulator {
    pub fn new(ts: &TransitionSystem) -> Self {
        let mut index = HashMap::new();
        let mut names = Vec::new();
        let mut slots = Vec::new();
        for s in ts.all_signals() {
            index.insert(s.name.clone(), slots.len());
            names.push(s.name);
            slots.push(Bv::zero(s.width));
        }
        let compile = |e: &Expr| compile(e, &index);
        let comb = ts.comb.iter().map(|c| (index[&c.name], compile(&c.expr))).collect();
        let states = ts.states.iter().map(|s| (index[&s.name], compile(&s.next))).collect();
        let init = ts.states.iter().map(|s| (index[&s.name], s.init)).collect();
        let inputs = ts.inputs.iter().map(|s| index[&s.name]).collect();
        let mut sim = Simulator {
            slots,
            index,
            names,
            inputs,
            comb,
            states,
            init,
        };
        sim.reset();
        sim
    }

    /// Restores initial state values and zeroes everything else.
    pub fn reset(&mut self) {
        for v in self.slots.iter_mut() {
            *v = Bv::zero(v.width());
        }
        for (i, v) in &self.init {
            self.slots[*i] = *v;
        }
    }

    pub fn set(&mut self, name: &str, v: Bv) -> bool {
        match self.index.get(name) {
            Some(&i) if self.slots[i].width() == v.width() => {
                self.slots[i] = v;
                true
            }
            _ => false,
        }
    }

    pub fn get(&self, name: &str) -> Option<Bv> {
        self.index.get(name).map(|&i| self.slots[i])
    }

    /// Recomputes combinational values from inputs and state.
    pub fn settle(&mut self) {
        for (slot, op) in &self.comb {
            let v = op.eval(&self.slots);
            self.slots[*slot] = v;
        }
    }

    /// Clock edge: every state takes its next value simultaneously.
    pub fn tick(&mut self) {
        let next: Vec<Bv> = self.states.iter().map(|(_, op)| op.eval(&self.slots)).collect();
        for ((slot, _), v) in self.states.iter().zip(next) {
            self.slots[*slot] = v;
        }
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|&i| self.names[i].as_str())
    }
}

fn compile(e: &Expr, index: &HashMap<String, usize>) -> Op {
    let c = |e: &Expr| Box::new(compile(e, index));
    match e {
        Expr::Literal { value, .. } => Op::Lit(*value),
        Expr::Ref { name, .. } => Op::Slot(*index.get(name).unwrap_or_else(|| panic!("unknown signal `{name}`"))),
        Expr::Unary(op, x) => Op::Un(*op, c(x)),
        Expr::Binary(op, l, r) => Op::Bin(*op, c(l), c(r)),
        Expr::Reduce(op, x) => Op::Red(*op, c(x)),
        Expr::Ternary { cond, then, els, .. } => Op::Mux(c(cond), c(then), c(els)),
        Expr::Slice(x, hi, lo) => Op::Slice(c(x), *hi, *lo),
        Expr::Concat(parts) => Op::Concat(parts.iter().map(|p| compile(p, index)).collect()),
    }
}

pub fn simulate(ts: &TransitionSystem, tb: &Testbench, opts: &SimOptions) -> Result<WaveformTrace, SimError> {
    simulate_with(ts, tb, opts, &HashMap::new())
}

/// Simulation with values for the system's free variables (zero if absent).
pub fn simulate_with(
    ts: &TransitionSystem,
    tb: &Testbench,
    opts: &SimOptions,
    free: &HashMap<String, Bv>,
) -> Result<WaveformTrace, SimError> {
    tb.check(ts)?;
    let mut sim = Simulator::new(ts);
    for f in &ts.free_vars {
        if let Some(v) = free.get(&f.name) {
            if v.width() != f.width {
                return Err(SimError::FreeWidth(f.name.clone(), f.width, v.width()));
            }
            sim.set(&f.name, *v);
        }
    }
    let n = tb.n_cycles();
    let recorded: Vec<(String, u32)> = if opts.internal {
        ts.all_signals().into_iter().map(|s| (s.name, s.width)).collect()
    } else {
        ts.outputs.iter().map(|s| (s.name.clone(), s.width)).collect()
    };
    let slots: Vec<usize> = recorded.iter().map(|(n, _)| sim.index[n]).collect();
    let mut values: Vec<Vec<Bv>> = vec![Vec::with_capacity(n); recorded.len()];
    let stim: Vec<(usize, &Vec<Bv>)> = ts
        .inputs
        .iter()
        .filter_map(|s| Some((sim.index[&s.name], &tb.stimulus.signals.get(&s.name)?.values)))
        .collect();
    for cycle in 0..n {
        for (slot, vals) in &stim {
            sim.slots[*slot] = vals[cycle];
        }
        sim.settle();
        for (k, slot) in slots.iter().enumerate() {
            values[k].push(sim.slots[*slot]);
        }
        sim.tick();
    }
    let mut out = WaveformTrace::new(n);
    out.clock_name = ts.clock.clone().unwrap_or_else(|| tb.stimulus.clock_name.clone());
    out.timescale = tb.stimulus.timescale.clone();
    out.scope = tb.stimulus.scope.clone();
    for ((name, width), vals) in recorded.into_iter().zip(values) {
        out.insert(name, width, vals).expect("simulator widths are consistent");
    }
    Ok(out)
}
