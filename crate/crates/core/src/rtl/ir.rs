// SPDX-License-Identifier: Apache-2.0

//! Word-level expressions and the transition system produced by elaboration.
//!
//! Expressions are unsigned two-state bit-vectors with explicit widths: both
//! operands of a binary operator have the same width (shift amounts excepted)
//! and every extension or truncation is spelled out as a concat or slice. The
//! constructors fold constants and push truncations through arithmetic so that
//! source literals keep the width of the operand they are compared against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::source::{Location, Span};
use crate::bits::Bv;

/// Identifies a repairable source location (a literal or a branch condition).
pub type SiteId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Udiv,
    Urem,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
    Eq,
    Ne,
    Ult,
    Ule,
    Ugt,
    Uge,
}

impl BinOp {
    pub fn is_compare(self) -> bool {
        use BinOp::*;
        matches!(self, Eq | Ne | Ult | Ule | Ugt | Uge)
    }

    pub fn is_shift(self) -> bool {
        matches!(self, BinOp::Shl | BinOp::Lshr)
    }

    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Udiv => "/",
            Urem => "%",
            And => "&",
            Or => "|",
            Xor => "^",
            Shl => "<<",
            Lshr => ">>",
            Eq => "==",
            Ne => "!=",
            Ult => "<",
            Ule => "<=",
            Ugt => ">",
            Uge => ">=",
        }
    }

    pub fn apply(self, a: &Bv, b: &Bv) -> Bv {
        use BinOp::*;
        match self {
            Add => a.add(b),
            Sub => a.sub(b),
            Mul => a.mul(b),
            Udiv => a.udiv(b),
            Urem => a.urem(b),
            And => a.and(b),
            Or => a.or(b),
            Xor => a.xor(b),
            Shl => a.shl(b),
            Lshr => a.lshr(b),
            Eq => Bv::from_bool(a.bits() == b.bits()),
            Ne => Bv::from_bool(a.bits() != b.bits()),
            Ult => Bv::from_bool(a.bits() < b.bits()),
            Ule => Bv::from_bool(a.bits() <= b.bits()),
            Ugt => Bv::from_bool(a.bits() > b.bits()),
            Uge => Bv::from_bool(a.bits() >= b.bits()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RedOp {
    And,
    Or,
    Xor,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Literal { value: Bv, site: Option<SiteId> },
    Ref { name: String, width: u32 },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Reduce(RedOp, Box<Expr>),
    Ternary {
        cond: Box<Expr>,
        then: Box<Expr>,
        els: Box<Expr>,
        site: Option<SiteId>,
    },
    Slice(Box<Expr>, u32, u32),
    /// Most significant part first.
    Concat(Vec<Expr>),
}

impl Expr {
    pub fn lit(width: u32, bits: u128) -> Expr {
        Expr::Literal {
            value: Bv::new(width, bits),
            site: None,
        }
    }

    pub fn konst(value: Bv) -> Expr {
        Expr::Literal { value, site: None }
    }

    pub fn bool_lit(b: bool) -> Expr {
        Expr::lit(1, b as u128)
    }

    pub fn var(name: impl Into<String>, width: u32) -> Expr {
        Expr::Ref {
            name: name.into(),
            width,
        }
    }

    pub fn width(&self) -> u32 {
        match self {
            Expr::Literal { value, .. } => value.width(),
            Expr::Ref { width, .. } => *width,
            Expr::Unary(_, e) => e.width(),
            Expr::Binary(op, l, _) => {
                if op.is_compare() {
                    1
                } else {
                    l.width()
                }
            }
            Expr::Reduce(..) => 1,
            Expr::Ternary { then, .. } => then.width(),
            Expr::Slice(_, hi, lo) => hi - lo + 1,
            Expr::Concat(parts) => parts.iter().map(Expr::width).sum(),
        }
    }

    /// Value of a plain constant. Literals tied to a repair site are not
    /// treated as constants so that folding never erases a site.
    pub fn as_const(&self) -> Option<Bv> {
        match self {
            Expr::Literal { value, site: None } => Some(*value),
            _ => None,
        }
    }

    // ------------------------------------------------------------ constructors

    pub fn not(e: Expr) -> Expr {
        match e {
            Expr::Literal { value, site: None } => Expr::konst(value.not()),
            Expr::Unary(UnOp::Not, inner) => *inner,
            e => Expr::Unary(UnOp::Not, Box::new(e)),
        }
    }

    pub fn neg(e: Expr) -> Expr {
        match e.as_const() {
            Some(v) => Expr::konst(v.neg()),
            None => Expr::Unary(UnOp::Neg, Box::new(e)),
        }
    }

    pub fn reduce(op: RedOp, e: Expr) -> Expr {
        if let Some(v) = e.as_const() {
            return Expr::konst(match op {
                RedOp::And => v.reduce_and(),
                RedOp::Or => v.reduce_or(),
                RedOp::Xor => v.reduce_xor(),
            });
        }
        if e.width() == 1 {
            return e;
        }
        Expr::Reduce(op, Box::new(e))
    }

    /// Nonzero test, 1 bit wide.
    pub fn truthy(e: Expr) -> Expr {
        Expr::reduce(RedOp::Or, e)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        debug_assert!(
            op.is_shift() || l.width() == r.width(),
            "width mismatch {op:?}: {} vs {}",
            l.width(),
            r.width()
        );
        if let (Some(a), Some(b)) = (l.as_const(), r.as_const()) {
            return Expr::konst(op.apply(&a, &b));
        }
        let w = l.width();
        let zero = |e: &Expr| e.as_const().is_some_and(|v| v.is_zero());
        let ones = |e: &Expr| e.as_const().is_some_and(|v| v == Bv::ones(v.width()));
        match op {
            BinOp::And if zero(&l) || zero(&r) => return Expr::lit(w, 0),
            BinOp::And if ones(&l) => return r,
            BinOp::And if ones(&r) => return l,
            BinOp::Or if zero(&l) => return r,
            BinOp::Or | BinOp::Xor | BinOp::Add | BinOp::Sub | BinOp::Shl | BinOp::Lshr
                if zero(&r) =>
            {
                return l
            }
            BinOp::Xor | BinOp::Add if zero(&l) => return r,
            BinOp::Or if ones(&l) || ones(&r) => return Expr::lit(w, u128::MAX),
            BinOp::Mul if zero(&l) || zero(&r) => return Expr::lit(w, 0),
            _ => {}
        }
        if op.is_compare() && w > 1 {
            if let Some(e) = narrow_compare(op, &l, &r) {
                return e;
            }
        }
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn mux(cond: Expr, then: Expr, els: Expr, site: Option<SiteId>) -> Expr {
        debug_assert_eq!(cond.width(), 1);
        debug_assert_eq!(then.width(), els.width());
        if let Some(c) = cond.as_const() {
            return if c.is_true() { then } else { els };
        }
        if then == els {
            return then;
        }
        if site.is_none() && then.width() == 1 {
            match (then.as_const(), els.as_const()) {
                (Some(t), Some(e)) if t.is_true() && e.is_zero() => return cond,
                (Some(t), Some(e)) if t.is_zero() && e.is_true() => return Expr::not(cond),
                _ => {}
            }
        }
        Expr::Ternary {
            cond: Box::new(cond),
            then: Box::new(then),
            els: Box::new(els),
            site,
        }
    }

    pub fn slice(e: Expr, hi: u32, lo: u32) -> Expr {
        let w = e.width();
        assert!(hi >= lo && hi < w, "slice [{hi}:{lo}] of width {w}");
        if lo == 0 && hi == w - 1 {
            return e;
        }
        match e {
            Expr::Literal { value, site } => Expr::Literal {
                value: value.slice(hi, lo),
                site,
            },
            Expr::Slice(inner, _, l2) => Expr::slice(*inner, hi + l2, lo + l2),
            Expr::Concat(parts) => {
                let mut out = Vec::new();
                let mut top = w;
                for p in parts {
                    let pw = p.width();
                    let p_lo = top - pw;
                    let p_hi = top - 1;
                    top = p_lo;
                    if p_hi < lo || p_lo > hi {
                        continue;
                    }
                    let a = hi.min(p_hi) - p_lo;
                    let b = lo.max(p_lo) - p_lo;
                    out.push(Expr::slice(p, a, b));
                }
                Expr::concat(out)
            }
            Expr::Unary(UnOp::Not, inner) => Expr::not(Expr::slice(*inner, hi, lo)),
            Expr::Unary(UnOp::Neg, inner) if lo == 0 => Expr::neg(Expr::slice(*inner, hi, lo)),
            Expr::Binary(op @ (BinOp::And | BinOp::Or | BinOp::Xor), l, r) => {
                Expr::bin(op, Expr::slice(*l, hi, lo), Expr::slice(*r, hi, lo))
            }
            Expr::Binary(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul), l, r) if lo == 0 => {
                Expr::bin(op, Expr::slice(*l, hi, lo), Expr::slice(*r, hi, lo))
            }
            Expr::Binary(BinOp::Shl, l, r) if lo == 0 => {
                Expr::bin(BinOp::Shl, Expr::slice(*l, hi, lo), *r)
            }
            Expr::Ternary {
                cond,
                then,
                els,
                site,
            } => Expr::mux(
                *cond,
                Expr::slice(*then, hi, lo),
                Expr::slice(*els, hi, lo),
                site,
            ),
            e => Expr::Slice(Box::new(e), hi, lo),
        }
    }

    pub fn concat(parts: Vec<Expr>) -> Expr {
        let mut flat: Vec<Expr> = Vec::new();
        for p in parts {
            let items = match p {
                Expr::Concat(inner) => inner,
                p => vec![p],
            };
            for it in items {
                if let (Some(prev), Some(cur)) = (flat.last().and_then(Expr::as_const), it.as_const()) {
                    if prev.width() + cur.width() <= crate::bits::MAX_WIDTH {
                        flat.pop();
                        flat.push(Expr::konst(prev.concat(&cur)));
                        continue;
                    }
                }
                flat.push(it);
            }
        }
        assert!(!flat.is_empty(), "empty concatenation");
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        Expr::Concat(flat)
    }

    /// Zero-extends (or keeps) to `width`; `width` must be at least the
    /// current width.
    pub fn zext(e: Expr, width: u32) -> Expr {
        let w = e.width();
        assert!(width >= w, "zext {w} -> {width}");
        if width == w {
            return e;
        }
        if let Expr::Literal { value, site } = e {
            return Expr::Literal {
                value: value.resize(width),
                site,
            };
        }
        Expr::concat(vec![Expr::lit(width - w, 0), e])
    }

    /// Zero-extends or truncates.
    pub fn resize(e: Expr, width: u32) -> Expr {
        if e.width() >= width {
            Expr::slice(e, width - 1, 0)
        } else {
            Expr::zext(e, width)
        }
    }

    // ---------------------------------------------------------------- queries

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Literal { .. } | Expr::Ref { .. } => {}
            Expr::Unary(_, e) | Expr::Reduce(_, e) | Expr::Slice(e, _, _) => e.visit(f),
            Expr::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Expr::Ternary {
                cond, then, els, ..
            } => {
                cond.visit(f);
                then.visit(f);
                els.visit(f);
            }
            Expr::Concat(parts) => parts.iter().for_each(|p| p.visit(f)),
        }
    }

    pub fn refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Ref { name, .. } = e {
                out.insert(name.clone());
            }
        });
        out
    }

    pub fn mentions(&self, name: &str) -> bool {
        let mut hit = false;
        self.visit(&mut |e| {
            if let Expr::Ref { name: n, .. } = e {
                hit |= n == name;
            }
        });
        hit
    }

    pub fn sites(&self) -> BTreeSet<SiteId> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| match e {
            Expr::Literal { site: Some(s), .. } | Expr::Ternary { site: Some(s), .. } => {
                out.insert(*s);
            }
            _ => {}
        });
        out
    }

    /// Bottom-up rewrite; `f` sees each node after its children were rebuilt
    /// and may return a replacement. Rebuilt nodes go through the simplifying
    /// constructors.
    pub fn rewrite(&self, f: &mut dyn FnMut(&Expr) -> Option<Expr>) -> Expr {
        let rebuilt = match self {
            Expr::Literal { .. } | Expr::Ref { .. } => self.clone(),
            Expr::Unary(UnOp::Not, e) => Expr::not(e.rewrite(f)),
            Expr::Unary(UnOp::Neg, e) => Expr::neg(e.rewrite(f)),
            Expr::Reduce(op, e) => Expr::reduce(*op, e.rewrite(f)),
            Expr::Slice(e, hi, lo) => Expr::slice(e.rewrite(f), *hi, *lo),
            Expr::Binary(op, l, r) => Expr::bin(*op, l.rewrite(f), r.rewrite(f)),
            Expr::Ternary {
                cond,
                then,
                els,
                site,
            } => Expr::mux(cond.rewrite(f), then.rewrite(f), els.rewrite(f), *site),
            Expr::Concat(parts) => Expr::concat(parts.iter().map(|p| p.rewrite(f)).collect()),
        };
        f(&rebuilt).unwrap_or(rebuilt)
    }

    /// Replaces references by the given expressions (same width).
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rewrite(&mut |e| match e {
            Expr::Ref { name, .. } => map.get(name).cloned(),
            _ => None,
        })
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Bv) -> Bv {
        match self {
            Expr::Literal { value, .. } => *value,
            Expr::Ref { name, width } => {
                let v = env(name);
                debug_assert_eq!(v.width(), *width, "width of {name}");
                v
            }
            Expr::Unary(UnOp::Not, e) => e.eval(env).not(),
            Expr::Unary(UnOp::Neg, e) => e.eval(env).neg(),
            Expr::Reduce(op, e) => {
                let v = e.eval(env);
                match op {
                    RedOp::And => v.reduce_and(),
                    RedOp::Or => v.reduce_or(),
                    RedOp::Xor => v.reduce_xor(),
                }
            }
            Expr::Binary(op, l, r) => op.apply(&l.eval(env), &r.eval(env)),
            Expr::Ternary {
                cond, then, els, ..
            } => {
                if cond.eval(env).is_true() {
                    then.eval(env)
                } else {
                    els.eval(env)
                }
            }
            Expr::Slice(e, hi, lo) => e.eval(env).slice(*hi, *lo),
            Expr::Concat(parts) => {
                let mut it = parts.iter();
                let mut acc = it.next().expect("non-empty concat").eval(env);
                for p in it {
                    acc = acc.concat(&p.eval(env));
                }
                acc
            }
        }
    }
}

/// `{0, x} op lit` where the literal fits in `x`'s width compares at that width.
fn narrow_compare(op: BinOp, l: &Expr, r: &Expr) -> Option<Expr> {
    fn strip(e: &Expr) -> Option<&Expr> {
        match e {
            Expr::Concat(parts) if parts.len() == 2 && parts[0].as_const().is_some_and(|v| v.is_zero()) => {
                Some(&parts[1])
            }
            _ => None,
        }
    }
    fn lit_fits(e: &Expr, w: u32) -> Option<Expr> {
        match e {
            Expr::Literal { value, site } if w < 128 && value.bits() >> w == 0 => Some(Expr::Literal {
                value: value.resize(w),
                site: *site,
            }),
            _ => None,
        }
    }
    if let Some(x) = strip(l) {
        if let Some(lit) = lit_fits(r, x.width()) {
            return Some(Expr::bin(op, x.clone(), lit));
        }
        if let Some(y) = strip(r) {
            if x.width() == y.width() {
                return Some(Expr::bin(op, x.clone(), y.clone()));
            }
        }
    }
    if let Some(y) = strip(r) {
        if let Some(lit) = lit_fits(l, y.width()) {
            return Some(Expr::bin(op, lit, y.clone()));
        }
    }
    None
}

/// Verilog-flavoured rendering used in diagnostics and prompts.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal { value, .. } => {
                write!(f, "{}'h{}", value.width(), value.to_hex_string())
            }
            Expr::Ref { name, .. } => write!(f, "{name}"),
            Expr::Unary(UnOp::Not, e) => write!(f, "~({e})"),
            Expr::Unary(UnOp::Neg, e) => write!(f, "-({e})"),
            Expr::Reduce(op, e) => {
                let s = match op {
                    RedOp::And => "&",
                    RedOp::Or => "|",
                    RedOp::Xor => "^",
                };
                write!(f, "{s}({e})")
            }
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Ternary {
                cond, then, els, ..
            } => write!(f, "({cond} ? {then} : {els})"),
            Expr::Slice(e, hi, lo) => {
                if hi == lo {
                    write!(f, "{e}[{hi}]")
                } else {
                    write!(f, "{e}[{hi}:{lo}]")
                }
            }
            Expr::Concat(parts) => {
                write!(f, "{{")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub name: String,
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub width: u32,
    pub init: Bv,
    pub next: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombDef {
    pub name: String,
    pub width: u32,
    pub expr: Expr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteKind {
    Literal,
    Condition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub id: SiteId,
    pub kind: SiteKind,
    pub span: Span,
    pub location: Location,
    /// Source text of the site.
    pub text: String,
    /// Width of the literal or 1 for conditions.
    pub width: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverKind {
    Input,
    Comb,
    Seq,
    Latch,
}

/// Where a top-level signal comes from in the source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverInfo {
    pub kind: DriverKind,
    /// Declaration of the signal.
    pub decl: Option<Span>,
    /// Statements or items that assign it.
    pub sites: Vec<Span>,
}

/// Flattened synchronous design. Names of signals inside instances are
/// prefixed with the instance path (`u0.q`).
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransitionSystem {
    pub inputs: Vec<Signal>,
    pub outputs: Vec<Signal>,
    pub states: Vec<StateVar>,
    /// Topologically ordered: each definition only reads inputs, states,
    /// free variables, or earlier definitions.
    pub comb: Vec<CombDef>,
    pub clock: Option<String>,
    pub sites: BTreeMap<SiteId, SiteInfo>,
    /// Unconstrained constants introduced by repair instrumentation.
    pub free_vars: Vec<Signal>,
    pub drivers: BTreeMap<String, DriverInfo>,
}

impl TransitionSystem {
    pub fn width_of(&self, name: &str) -> Option<u32> {
        self.inputs
            .iter()
            .chain(self.free_vars.iter())
            .find(|s| s.name == name)
            .map(|s| s.width)
            .or_else(|| self.states.iter().find(|s| s.name == name).map(|s| s.width))
            .or_else(|| self.comb.iter().find(|c| c.name == name).map(|c| c.width))
    }

    pub fn state(&self, name: &str) -> Option<&StateVar> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn comb_def(&self, name: &str) -> Option<&CombDef> {
        self.comb.iter().find(|c| c.name == name)
    }

    /// Whether any next-state function or combinational definition reads `name`.
    pub fn reads(&self, name: &str) -> bool {
        self.states.iter().any(|s| s.next.mentions(name)) || self.comb.iter().any(|c| c.expr.mentions(name))
    }

    pub fn is_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|s| s.name == name)
    }

    /// Every named signal with its width: inputs, states, comb, free vars.
    pub fn all_signals(&self) -> Vec<Signal> {
        let mut out: Vec<Signal> = self.inputs.clone();
        out.extend(self.states.iter().map(|s| Signal {
            name: s.name.clone(),
            width: s.width,
        }));
        out.extend(self.comb.iter().map(|c| Signal {
            name: c.name.clone(),
            width: c.width,
        }));
        out.extend(self.free_vars.iter().cloned());
        out
    }

    /// Reorders `comb` topologically; returns the names on a cycle otherwise.
    pub fn sort_comb(&mut self) -> Result<(), Vec<String>> {
        let order = topo_order(&self.comb)?;
        let mut old: Vec<Option<CombDef>> = std::mem::take(&mut self.comb).into_iter().map(Some).collect();
        self.comb = order.into_iter().map(|i| old[i].take().unwrap()).collect();
        Ok(())
    }

    /// Checks the structural invariants; used by tests and after instrumentation.
    pub fn validate(&self) -> Result<(), String> {
        let mut known: HashMap<&str, u32> = HashMap::new();
        for s in self.inputs.iter().chain(self.free_vars.iter()) {
            known.insert(&s.name, s.width);
        }
        for s in &self.states {
            known.insert(&s.name, s.width);
        }
        for c in &self.comb {
            known.insert(&c.name, c.width);
        }
        let check = |what: &str, e: &Expr, w: u32, known: &HashMap<&str, u32>| -> Result<(), String> {
            if e.width() != w {
                return Err(format!("{what}: expression width {} != {w}", e.width()));
            }
            let mut err = Ok(());
            e.visit(&mut |x| {
                if let Expr::Ref { name, width } = x {
                    match known.get(name.as_str()) {
                        Some(kw) if kw == width => {}
                        Some(kw) => err = Err(format!("{what}: `{name}` used as {width} bits, declared {kw}")),
                        None => err = Err(format!("{what}: undeclared `{name}`")),
                    }
                }
            });
            err
        };
        for s in &self.states {
            check(&s.name, &s.next, s.width, &known)?;
            if s.init.width() != s.width {
                return Err(format!("{}: init width", s.name));
            }
        }
        let mut defined: BTreeSet<&str> = BTreeSet::new();
        for s in self.inputs.iter().chain(self.free_vars.iter()) {
            defined.insert(&s.name);
        }
        for s in &self.states {
            defined.insert(&s.name);
        }
        for c in &self.comb {
            check(&c.name, &c.expr, c.width, &known)?;
            for r in c.expr.refs() {
                if !defined.contains(r.as_str()) {
                    return Err(format!("{}: reads `{r}` before its definition", c.name));
                }
            }
            defined.insert(&c.name);
        }
        for o in &self.outputs {
            if known.get(o.name.as_str()) != Some(&o.width) {
                return Err(format!("output `{}` is not defined", o.name));
            }
        }
        Ok(())
    }
}

/// Indices of `defs` in dependency order, or one cycle of names.
pub fn topo_order(defs: &[CombDef]) -> Result<Vec<usize>, Vec<String>> {
    let index: HashMap<&str, usize> = defs.iter().enumerate().map(|(i, d)| (d.name.as_str(), i)).collect();
    let deps: Vec<Vec<usize>> = defs
        .iter()
        .map(|d| d.expr.refs().iter().filter_map(|r| index.get(r.as_str()).copied()).collect())
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; defs.len()];
    let mut order = Vec::with_capacity(defs.len());
    for root in 0..defs.len() {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < deps[node].len() {
                let d = deps[node][*next];
                *next += 1;
                match state[d] {
                    0 => {
                        state[d] = 1;
                        stack.push((d, 0));
                    }
                    1 => {
                        let pos = stack.iter().position(|(n, _)| *n == d).unwrap();
                        let mut cycle: Vec<String> =
                            stack[pos..].iter().map(|(n, _)| defs[*n].name.clone()).collect();
                        cycle.push(defs[d].name.clone());
                        return Err(cycle);
                    }
                    _ => {}
                }
            } else {
                state[node] = 2;
                order.push(node);
                stack.pop();
            }
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_keeps_sites() {
        let sited = Expr::Literal {
            value: Bv::new(32, 5),
            site: Some(0),
        };
        let x = Expr::var("count", 3);
        let cmp = Expr::bin(BinOp::Eq, Expr::zext(x.clone(), 32), sited);
        match cmp {
            Expr::Binary(BinOp::Eq, l, r) => {
                assert_eq!(*l, x);
                assert_eq!(r.width(), 3);
                assert!(matches!(*r, Expr::Literal { site: Some(0), .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_pushes_through_add() {
        let a = Expr::var("a", 4);
        let e = Expr::bin(BinOp::Add, Expr::zext(a.clone(), 32), Expr::lit(32, 1));
        let t = Expr::slice(e, 3, 0);
        assert_eq!(t, Expr::Binary(BinOp::Add, Box::new(a), Box::new(Expr::lit(4, 1))));
    }

    #[test]
    fn slice_of_concat() {
        let e = Expr::concat(vec![Expr::var("a", 4), Expr::var("b", 4)]);
        assert_eq!(Expr::slice(e.clone(), 3, 0), Expr::var("b", 4));
        assert_eq!(Expr::slice(e, 5, 2).width(), 4);
    }

    #[test]
    fn topo_detects_cycle() {
        let defs = vec![
            CombDef {
                name: "a".into(),
                width: 1,
                expr: Expr::var("b", 1),
            },
            CombDef {
                name: "b".into(),
                width: 1,
                expr: Expr::not(Expr::var("a", 1)),
            },
        ];
        let cyc = topo_order(&defs).unwrap_err();
        assert!(cyc.contains(&"a".to_string()) && cyc.contains(&"b".to_string()));
    }
}
