// SPDX-License-Identifier: Apache-2.0

//! Random-logic benchmark designs with one injected bug each.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtlfix_core::bits::Bv;
use rtlfix_core::check::evaluate;
use rtlfix_core::rtl::{build, SourceProject};
use rtlfix_core::wave::{Testbench, WaveformTrace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ATTEMPTS: usize = 100;
pub const TOP: &str = "top";
pub const FILE: &str = "top.v";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BugClass {
    IncorrectBinaryOp,
    DuplicatedExprItem,
    NegateIfCondition,
    AdditionalMinusOne,
    MissingExprItem,
    IncorrectReduceOp,
    DelayedOneCycle,
    AdvancedOneCycle,
}

impl BugClass {
    pub const ALL: [BugClass; 8] = [
        BugClass::IncorrectBinaryOp,
        BugClass::DuplicatedExprItem,
        BugClass::NegateIfCondition,
        BugClass::AdditionalMinusOne,
        BugClass::MissingExprItem,
        BugClass::IncorrectReduceOp,
        BugClass::DelayedOneCycle,
        BugClass::AdvancedOneCycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BugClass::IncorrectBinaryOp => "IncorrectBinaryOp",
            BugClass::DuplicatedExprItem => "DuplicatedExprItem",
            BugClass::NegateIfCondition => "NegateIfCondition",
            BugClass::AdditionalMinusOne => "AdditionalMinusOne",
            BugClass::MissingExprItem => "MissingExprItem",
            BugClass::IncorrectReduceOp => "IncorrectReduceOp",
            BugClass::DelayedOneCycle => "DelayedOneCycle",
            BugClass::AdvancedOneCycle => "AdvancedOneCycle",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            BugClass::IncorrectBinaryOp => "an operator looks wrong",
            BugClass::DuplicatedExprItem => "an operand seems to be counted twice",
            BugClass::NegateIfCondition => "a condition seems inverted",
            BugClass::AdditionalMinusOne => "a value looks off by one",
            BugClass::MissingExprItem => "an operand seems to be missing",
            BugClass::IncorrectReduceOp => "a reduction operator looks wrong",
            BugClass::DelayedOneCycle => "a value arrives one cycle late",
            BugClass::AdvancedOneCycle => "a value arrives one cycle early",
        }
    }
}

impl fmt::Display for BugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BugClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        BugClass::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == norm)
            .ok_or_else(|| format!("unknown bug class `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

impl Op {
    const ALL: [Op; 5] = [Op::Add, Op::Sub, Op::And, Op::Or, Op::Xor];

    fn sym(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::And => "&",
            Op::Or => "|",
            Op::Xor => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Red {
    And,
    Or,
    Xor,
}

impl Red {
    const ALL: [Red; 3] = [Red::And, Red::Or, Red::Xor];

    fn sym(self) -> &'static str {
        match self {
            Red::And => "&",
            Red::Or => "|",
            Red::Xor => "^",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum E {
    Var(String),
    Const(u32, u128),
    Nary(Op, Vec<E>),
    Reduce(Red, Box<E>),
    Eq(Box<E>, Box<E>),
    Mux(Box<E>, Box<E>, Box<E>),
    MinusOne(Box<E>, u32),
}

impl E {
    fn render(&self, nested: bool) -> String {
        let s = match self {
            E::Var(n) => return n.clone(),
            E::Const(w, v) => return format!("{w}'d{v}"),
            E::Reduce(r, e) => return format!("{}{}", r.sym(), e.render(true)),
            E::Nary(op, items) => items
                .iter()
                .map(|i| i.render(true))
                .collect::<Vec<_>>()
                .join(&format!(" {} ", op.sym())),
            E::Eq(a, b) => format!("{} == {}", a.render(true), b.render(true)),
            E::Mux(c, a, b) => format!("{} ? {} : {}", c.render(true), a.render(true), b.render(true)),
            E::MinusOne(e, w) => format!("{} - {w}'d1", e.render(true)),
        };
        if nested {
            format!("({s})")
        } else {
            s
        }
    }

    fn reads(&self, out: &mut Vec<String>) {
        match self {
            E::Var(n) => out.push(n.clone()),
            E::Const(..) => {}
            E::Nary(_, items) => items.iter().for_each(|i| i.reads(out)),
            E::Reduce(_, e) | E::MinusOne(e, _) => e.reads(out),
            E::Eq(a, b) => {
                a.reads(out);
                b.reads(out);
            }
            E::Mux(c, a, b) => {
                c.reads(out);
                a.reads(out);
                b.reads(out);
            }
        }
    }

    /// Pre-order walk handing out mutable references.
    fn walk_mut(&mut self, f: &mut dyn FnMut(&mut E)) {
        f(self);
        match self {
            E::Var(_) | E::Const(..) => {}
            E::Nary(_, items) => items.iter_mut().for_each(|i| i.walk_mut(f)),
            E::Reduce(_, e) | E::MinusOne(e, _) => e.walk_mut(f),
            E::Eq(a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            E::Mux(c, a, b) => {
                c.walk_mut(f);
                a.walk_mut(f);
                b.walk_mut(f);
            }
        }
    }

    fn count(&mut self, pred: &dyn Fn(&E) -> bool) -> usize {
        let mut n = 0;
        self.walk_mut(&mut |e| n += pred(e) as usize);
        n
    }

    /// Applies `f` to the `k`-th node matching `pred`.
    fn edit_nth(&mut self, pred: &dyn Fn(&E) -> bool, k: usize, f: &mut dyn FnMut(&mut E)) {
        let mut i = 0;
        let mut done = false;
        self.walk_mut(&mut |e| {
            if !done && pred(e) {
                if i == k {
                    f(e);
                    done = true;
                }
                i += 1;
            }
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Wire {
    name: String,
    width: u32,
    expr: E,
    delayed: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct Reg {
    name: String,
    width: u32,
    reset: u128,
    cond: Option<E>,
    negated: bool,
    next: E,
}

#[derive(Clone, Debug, PartialEq)]
struct Design {
    width: u32,
    data_inputs: Vec<String>,
    ctrl_inputs: Vec<String>,
    regs: Vec<Reg>,
    wires: Vec<Wire>,
    outputs: Vec<Wire>,
}

impl Design {
    fn render(&self, seed: u64) -> String {
        let w = self.width;
        let mut ports = vec!["  input clk".to_string(), "  input rst".to_string()];
        ports.extend(self.data_inputs.iter().map(|n| format!("  input [{}:0] {n}", w - 1)));
        ports.extend(self.ctrl_inputs.iter().map(|n| format!("  input {n}")));
        for o in &self.outputs {
            ports.push(if o.width == 1 {
                format!("  output {}", o.name)
            } else {
                format!("  output [{}:0] {}", o.width - 1, o.name)
            });
        }
        let mut s = format!("// random logic, seed {seed}\nmodule {TOP}(\n{}\n);\n", ports.join(",\n"));
        for r in &self.regs {
            s.push_str(&format!("  reg [{}:0] {};\n", r.width - 1, r.name));
        }
        for x in &self.wires {
            s.push_str(&format!("  wire [{}:0] {};\n", x.width - 1, x.name));
        }
        s.push('\n');
        for x in &self.wires {
            if x.delayed {
                s.push_str(&format!("  reg [{}:0] {}_q;\n", x.width - 1, x.name));
                s.push_str(&format!("  always @(posedge clk) {}_q <= {};\n", x.name, x.expr.render(false)));
                s.push_str(&format!("  assign {} = {}_q;\n", x.name, x.name));
            } else {
                s.push_str(&format!("  assign {} = {};\n", x.name, x.expr.render(false)));
            }
        }
        for r in &self.regs {
            s.push_str("\n  always @(posedge clk) begin\n");
            s.push_str(&format!("    if (rst) {} <= {}'d{};\n", r.name, r.width, r.reset));
            match &r.cond {
                Some(c) if r.negated => s.push_str(&format!("    else if (!({})) {} <= {};\n", c.render(false), r.name, r.next.render(false))),
                Some(c) => s.push_str(&format!("    else if ({}) {} <= {};\n", c.render(false), r.name, r.next.render(false))),
                None => s.push_str(&format!("    else {} <= {};\n", r.name, r.next.render(false))),
            }
            s.push_str("  end\n");
        }
        s.push('\n');
        for o in &self.outputs {
            s.push_str(&format!("  assign {} = {};\n", o.name, o.expr.render(false)));
        }
        s.push_str("endmodule\n");
        s
    }

    fn exprs_mut(&mut self) -> Vec<&mut E> {
        let mut v: Vec<&mut E> = Vec::new();
        for x in &mut self.wires {
            v.push(&mut x.expr);
        }
        for r in &mut self.regs {
            if let Some(c) = &mut r.cond {
                v.push(c);
            }
            v.push(&mut r.next);
        }
        for o in &mut self.outputs {
            v.push(&mut o.expr);
        }
        v
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    width: u32,
}

impl Gen<'_> {
    fn leaf(&mut self, pool: &[String]) -> E {
        if self.rng.gen_bool(0.15) {
            E::Const(self.width, self.rng.gen_range(1..(1u128 << self.width)))
        } else {
            E::Var(pool.choose(self.rng).expect("pool").clone())
        }
    }

    fn nary(&mut self, pool: &[String], items: usize) -> E {
        let op = *Op::ALL.choose(self.rng).expect("ops");
        let mut v: Vec<E> = (0..items).map(|_| self.leaf(pool)).collect();
        if v.iter().all(|e| matches!(e, E::Const(..))) {
            v[0] = E::Var(pool.choose(self.rng).expect("pool").clone());
        }
        E::Nary(op, v)
    }

    fn cond(&mut self, pool: &[String], ctrl: &[String]) -> E {
        match self.rng.gen_range(0..3) {
            0 => E::Var(ctrl.choose(self.rng).expect("ctrl").clone()),
            1 => E::Reduce(
                *Red::ALL.choose(self.rng).expect("red"),
                Box::new(E::Var(pool.choose(self.rng).expect("pool").clone())),
            ),
            _ => E::Eq(
                Box::new(E::Var(pool.choose(self.rng).expect("pool").clone())),
                Box::new(self.leaf(pool)),
            ),
        }
    }

    fn data(&mut self, pool: &[String], ctrl: &[String]) -> E {
        match self.rng.gen_range(0..10) {
            0..=6 => {
                let n = self.rng.gen_range(2..=3);
                self.nary(pool, n)
            }
            7 => E::Mux(Box::new(self.cond(pool, ctrl)), Box::new(self.leaf(pool)), Box::new(self.leaf(pool))),
            _ => E::Nary(Op::Add, vec![E::Var(pool.choose(self.rng).expect("pool").clone()), self.leaf(pool)]),
        }
    }
}

fn random_design(rng: &mut ChaCha8Rng) -> Design {
    let width = *[4u32, 8].choose(rng).expect("widths");
    let n_sig = rng.gen_range(8..=16);
    let n_reg = rng.gen_range(2..=4);
    let n_wire = n_sig - n_reg;
    let data_inputs: Vec<String> = (0..rng.gen_range(3..=4)).map(|i| format!("in{i}")).collect();
    let ctrl_inputs: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("s{i}")).collect();
    let reg_names: Vec<String> = (0..n_reg).map(|i| format!("r{i}")).collect();
    let mut g = Gen { rng, width };

    let mut pool: Vec<String> = data_inputs.iter().chain(reg_names.iter()).cloned().collect();
    let mut wires = Vec::new();
    for i in 0..n_wire {
        let expr = if i == 0 { g.nary(&pool, 3) } else { g.data(&pool, &ctrl_inputs) };
        let name = format!("w{i}");
        wires.push(Wire {
            name: name.clone(),
            width,
            expr,
            delayed: false,
        });
        pool.push(name);
    }
    let mut regs = Vec::new();
    for (i, name) in reg_names.iter().enumerate() {
        let cond = if i == 0 || g.rng.gen_bool(0.5) {
            Some(g.cond(&pool, &ctrl_inputs))
        } else {
            None
        };
        let reset = g.rng.gen_range(0..(1u128 << width));
        let next = g.data(&pool, &ctrl_inputs);
        regs.push(Reg {
            name: name.clone(),
            width,
            reset,
            cond,
            negated: false,
            next,
        });
    }
    let wire_names: Vec<String> = wires.iter().map(|w| w.name.clone()).collect();
    let n_out = g.rng.gen_range(2..=3);
    let mut outputs = Vec::new();
    for i in 0..n_out {
        let src: Vec<String> = wire_names.iter().chain(reg_names.iter()).cloned().collect();
        let expr = g.nary(&src, 2);
        outputs.push(Wire {
            name: format!("y{i}"),
            width,
            expr,
            delayed: false,
        });
    }
    let parity_src = wire_names.choose(g.rng).expect("wires").clone();
    outputs.push(Wire {
        name: "p".into(),
        width: 1,
        expr: E::Reduce(*Red::ALL.choose(g.rng).expect("red"), Box::new(E::Var(parity_src))),
        delayed: false,
    });
    let mut d = Design {
        width,
        data_inputs,
        ctrl_inputs,
        regs,
        wires,
        outputs,
    };
    // fold every unread signal into the first output
    let mut read = Vec::new();
    for e in d.exprs_mut() {
        e.reads(&mut read);
    }
    let unread: Vec<String> = d
        .data_inputs
        .iter()
        .chain(d.ctrl_inputs.iter())
        .chain(d.regs.iter().map(|r| &r.name))
        .chain(d.wires.iter().map(|w| &w.name))
        .filter(|n| !read.contains(n))
        .cloned()
        .collect();
    if !unread.is_empty() {
        let y0 = &mut d.outputs[0].expr;
        let mut items = vec![std::mem::replace(y0, E::Const(width, 0))];
        for n in unread {
            if d.ctrl_inputs.contains(&n) {
                items.push(E::Mux(
                    Box::new(E::Var(n)),
                    Box::new(E::Const(width, 1)),
                    Box::new(E::Const(width, 0)),
                ));
            } else {
                items.push(E::Var(n));
            }
        }
        *y0 = E::Nary(Op::Xor, items);
    }
    d
}

fn is_nary(e: &E) -> bool {
    matches!(e, E::Nary(..))
}

fn is_long_nary(e: &E) -> bool {
    matches!(e, E::Nary(_, v) if v.len() >= 3)
}

fn is_reduce(e: &E) -> bool {
    matches!(e, E::Reduce(..))
}

/// Picks a random matching node among all expressions and edits it.
fn mutate_node(d: &mut Design, rng: &mut ChaCha8Rng, pred: &dyn Fn(&E) -> bool, f: &mut dyn FnMut(&mut E)) -> bool {
    let mut exprs = d.exprs_mut();
    let total: usize = exprs.iter_mut().map(|e| e.count(pred)).sum();
    if total == 0 {
        return false;
    }
    let mut k = rng.gen_range(0..total);
    for e in exprs {
        let n = e.count(pred);
        if k < n {
            e.edit_nth(pred, k, f);
            return true;
        }
        k -= n;
    }
    false
}

fn mutate(d: &mut Design, class: BugClass, rng: &mut ChaCha8Rng) -> bool {
    match class {
        BugClass::IncorrectBinaryOp => {
            let other = *Op::ALL.choose(rng).expect("ops");
            mutate_node(d, rng, &is_nary, &mut |e| {
                if let E::Nary(op, _) = e {
                    *op = if *op == other { Op::Xor } else { other };
                    if *op == other && other == Op::Xor {
                        *op = Op::Add;
                    }
                }
            })
        }
        BugClass::DuplicatedExprItem => {
            let pick: usize = rng.gen();
            mutate_node(d, rng, &is_nary, &mut |e| {
                if let E::Nary(_, items) = e {
                    let i = pick % items.len();
                    let dup = items[i].clone();
                    items.insert(i + 1, dup);
                }
            })
        }
        BugClass::MissingExprItem => {
            let pick: usize = rng.gen();
            mutate_node(d, rng, &is_long_nary, &mut |e| {
                if let E::Nary(_, items) = e {
                    let i = pick % items.len();
                    items.remove(i);
                }
            })
        }
        BugClass::IncorrectReduceOp => {
            let shift: usize = rng.gen_range(1..3);
            mutate_node(d, rng, &is_reduce, &mut |e| {
                if let E::Reduce(r, _) = e {
                    let i = Red::ALL.iter().position(|x| x == r).expect("known");
                    *r = Red::ALL[(i + shift) % 3];
                }
            })
        }
        BugClass::NegateIfCondition => {
            let with_cond: Vec<usize> = (0..d.regs.len()).filter(|i| d.regs[*i].cond.is_some()).collect();
            match with_cond.choose(rng) {
                Some(i) => {
                    d.regs[*i].negated = true;
                    true
                }
                None => false,
            }
        }
        BugClass::AdditionalMinusOne => {
            let w = d.width;
            let n = d.wires.len() + d.regs.len() + d.outputs.len() - 1;
            let k = rng.gen_range(0..n);
            let target: &mut E = if k < d.wires.len() {
                &mut d.wires[k].expr
            } else if k < d.wires.len() + d.regs.len() {
                &mut d.regs[k - d.wires.len()].next
            } else {
                // the parity output is one bit wide and excluded
                &mut d.outputs[k - d.wires.len() - d.regs.len()].expr
            };
            let old = std::mem::replace(target, E::Const(w, 0));
            *target = E::MinusOne(Box::new(old), w);
            true
        }
        BugClass::DelayedOneCycle => {
            let i = rng.gen_range(0..d.wires.len());
            d.wires[i].delayed = true;
            true
        }
        BugClass::AdvancedOneCycle => {
            let i = rng.gen_range(0..d.regs.len());
            let r = d.regs[i].clone();
            let early = match &r.cond {
                Some(c) => E::Mux(Box::new(c.clone()), Box::new(r.next.clone()), Box::new(E::Var(r.name.clone()))),
                None => r.next.clone(),
            };
            // only readers outside the register's own update
            let mut readers: Vec<&mut E> = Vec::new();
            for x in &mut d.wires {
                readers.push(&mut x.expr);
            }
            for o in &mut d.outputs {
                readers.push(&mut o.expr);
            }
            let is_r = |e: &E| matches!(e, E::Var(n) if *n == r.name);
            let total: usize = readers.iter_mut().map(|e| e.count(&is_r)).sum();
            if total == 0 {
                return false;
            }
            let mut k = rng.gen_range(0..total);
            for e in readers {
                let n = e.count(&is_r);
                if k < n {
                    e.edit_nth(&is_r, k, &mut |x| *x = early.clone());
                    return true;
                }
                k -= n;
            }
            false
        }
    }
}

fn stimulus(d: &Design, rng: &mut ChaCha8Rng, n: usize) -> WaveformTrace {
    let mut t = WaveformTrace::new(n);
    t.insert("rst", 1, (0..n).map(|c| Bv::new(1, (c < 2) as u128)).collect())
        .expect("fresh");
    for name in &d.data_inputs {
        let vals = (0..n).map(|_| Bv::new(d.width, rng.gen_range(0..(1u128 << d.width)))).collect();
        t.insert(name.clone(), d.width, vals).expect("fresh");
    }
    for name in &d.ctrl_inputs {
        let vals = (0..n).map(|_| Bv::new(1, rng.gen_bool(0.6) as u128)).collect();
        t.insert(name.clone(), 1, vals).expect("fresh");
    }
    t
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugInjection {
    pub class: BugClass,
    pub seed: u64,
    pub attempt: usize,
    /// Signal whose defining statement was mutated.
    pub signal: String,
    /// First and last changed line in the buggy source, 1-based.
    pub lines: (usize, usize),
    /// Byte range of the changed lines in the buggy source.
    pub span: (usize, usize),
    pub original: String,
    pub mutated: String,
}

#[derive(Clone, Debug)]
pub struct SynthBench {
    pub reference: String,
    pub buggy: String,
    pub testbenches: Vec<Testbench>,
    pub bug: BugInjection,
}

impl SynthBench {
    pub fn buggy_project(&self) -> SourceProject {
        SourceProject::new(TOP).with_file(FILE, self.buggy.clone())
    }

    pub fn reference_project(&self) -> SourceProject {
        SourceProject::new(TOP).with_file(FILE, self.reference.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("no behaviour-changing {0} mutant after {1} attempts")]
    ResampleExhausted(BugClass, usize),
}

/// Smallest run of whole lines that differs, grown until the buggy text is
/// unique in the buggy file.
fn hunk(orig: &str, buggy: &str) -> ((usize, usize), (usize, usize), String, String) {
    let a: Vec<&str> = orig.split_inclusive('\n').collect();
    let b: Vec<&str> = buggy.split_inclusive('\n').collect();
    let mut pre = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut suf = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count()
        .min(a.len().min(b.len()) - pre);
    loop {
        let old: String = b[pre..b.len() - suf].concat();
        if buggy.matches(&old).count() == 1 || (pre == 0 && suf == 0) {
            let new: String = a[pre..a.len() - suf].concat();
            let start: usize = b[..pre].iter().map(|l| l.len()).sum();
            let span = (start, start + old.len());
            return ((pre + 1, b.len() - suf), span, new, old);
        }
        pre = pre.saturating_sub(1);
        suf = suf.saturating_sub(1);
    }
}

fn defined_signal(text: &str) -> String {
    for l in text.lines() {
        let l = l.trim();
        if let Some(rest) = l.strip_prefix("assign ") {
            return rest.split([' ', '=']).next().unwrap_or("").to_string();
        }
        if let Some(i) = l.find("<=") {
            let lhs = l[..i].trim();
            return lhs.rsplit([' ', ')']).next().unwrap_or(lhs).trim_end_matches("_q").to_string();
        }
    }
    String::new()
}

/// Deterministic in `seed`. Every attempt draws a fresh design and site.
pub fn generate(seed: u64, class: BugClass) -> Result<SynthBench, SynthError> {
    generate_with_attempts(seed, class, MAX_ATTEMPTS)
}

pub fn generate_with_attempts(seed: u64, class: BugClass, max_attempts: usize) -> Result<SynthBench, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..max_attempts {
        let design = random_design(&mut rng);
        let mut mutant = design.clone();
        if !mutate(&mut mutant, class, &mut rng) || mutant == design {
            continue;
        }
        let reference = design.render(seed);
        let buggy = mutant.render(seed);
        if reference == buggy {
            continue;
        }
        let n_cycles = rng.gen_range(32..=48);
        let stims: Vec<WaveformTrace> = (0..2).map(|_| stimulus(&design, &mut rng, n_cycles)).collect();
        let ref_src = SourceProject::new(TOP).with_file(FILE, reference.clone());
        let bug_src = SourceProject::new(TOP).with_file(FILE, buggy.clone());
        let Ok((_, ts)) = build(&ref_src) else { continue };
        if build(&bug_src).is_err() {
            continue;
        }
        let tbs: Vec<Testbench> = stims
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| Testbench::from_reference(format!("tb{i}"), &ts, s).ok())
            .collect();
        if tbs.len() != 2 {
            continue;
        }
        let differs = tbs
            .iter()
            .any(|tb| evaluate(&bug_src, tb).map_or(true, |e| !e.passed()));
        if !differs {
            continue;
        }
        let (lines, span, original, mutated) = hunk(&reference, &buggy);
        let signal = defined_signal(&mutated);
        return Ok(SynthBench {
            reference,
            buggy,
            testbenches: tbs,
            bug: BugInjection {
                class,
                seed,
                attempt,
                signal,
                lines,
                span,
                original,
                mutated,
            },
        });
    }
    Err(SynthError::ResampleExhausted(class, max_attempts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_roundtrip() {
        for c in BugClass::ALL {
            assert_eq!(c.name().parse::<BugClass>(), Ok(c));
        }
        assert_eq!("negate_if_condition".parse(), Ok(BugClass::NegateIfCondition));
        assert!("nope".parse::<BugClass>().is_err());
    }

    #[test]
    fn hunk_is_the_changed_lines() {
        let a = "x\nassign a = b;\ny\n";
        let b = "x\nassign a = !b;\ny\n";
        let (lines, span, new, old) = hunk(a, b);
        assert_eq!(lines, (2, 2));
        assert_eq!(&b[span.0..span.1], old);
        assert_eq!((old.as_str(), new.as_str()), ("assign a = !b;\n", "assign a = b;\n"));
        assert_eq!(defined_signal(&old), "a");
    }
}
