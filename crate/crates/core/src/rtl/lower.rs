// SPDX-License-Identifier: Apache-2.0

//! Expression sizing and lowering from the AST to the word-level IR.
//!
//! Sizing follows the Verilog rules for unsigned operands: arithmetic and
//! bitwise operands are context-determined, comparison/reduction/logical
//! operands are self-determined, and an assignment's context is the wider of
//! its two sides. Lowering materializes every implicit zero-extension.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::{self, BinaryOp, Expr, ExprKind, Literal, Stmt, UnaryOp};
use super::ir::{self, BinOp, RedOp, SiteId, SiteInfo, SiteKind};
use super::source::{Diagnostic, SourceProject, Span};
use super::{ElabError, WidthError};
use crate::bits::{Bv, MAX_WIDTH};

pub const MAX_UNROLL: usize = 4096;

#[derive(Clone, Debug)]
pub struct SigInfo {
    pub ir_name: String,
    pub width: u32,
    pub lsb: u32,
}

#[derive(Clone, Debug)]
pub struct ParamVal {
    pub value: Bv,
    pub is_unsized: bool,
    /// Span of the literal the value came from, when it is a single literal.
    pub site: Option<Span>,
}

/// Names visible inside one module instance.
#[derive(Clone)]
pub struct Scope<'a> {
    pub project: &'a SourceProject,
    pub signals: HashMap<String, SigInfo>,
    pub params: HashMap<String, ParamVal>,
    /// Loop and generate variables bound to constants.
    pub consts: HashMap<String, u128>,
}

/// Allocates repair sites keyed by source span.
#[derive(Clone, Debug, Default)]
pub struct SiteTable {
    by_span: HashMap<(Span, u8), SiteId>,
    pub infos: BTreeMap<SiteId, SiteInfo>,
}

impl SiteTable {
    pub fn site(&mut self, project: &SourceProject, span: Span, kind: SiteKind, width: u32) -> SiteId {
        let key = (span, kind as u8);
        if let Some(id) = self.by_span.get(&key) {
            return *id;
        }
        let id = self.infos.len() as SiteId;
        self.by_span.insert(key, id);
        self.infos.insert(
            id,
            SiteInfo {
                id,
                kind,
                span,
                location: project.location(span),
                text: project.text(span).to_string(),
                width,
            },
        );
        id
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthWarning {
    pub span: Span,
    pub target: String,
    pub lhs_width: u32,
    pub rhs_width: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extension {
    pub span: Span,
    pub from: u32,
    pub to: u32,
}

#[derive(Clone, Debug, Default)]
pub struct WidthLog {
    pub widths: BTreeMap<Span, u32>,
    pub extensions: Vec<Extension>,
    pub warnings: Vec<WidthWarning>,
}

/// Side outputs of lowering.
#[derive(Default)]
pub struct Sink {
    pub sites: Option<SiteTable>,
    pub log: Option<WidthLog>,
}

impl Sink {
    pub fn with_sites() -> Self {
        Sink {
            sites: Some(SiteTable::default()),
            log: None,
        }
    }
}

/// One piece of an assignment target, most significant first.
#[derive(Clone, Debug)]
pub struct LvalPart {
    pub name: String,
    pub ir_name: String,
    pub sig_width: u32,
    pub target: LvalTarget,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum LvalTarget {
    Whole,
    /// Normalized bit positions.
    Range(u32, u32),
    /// Dynamic select of `width` bits starting at the (normalized) index.
    Dynamic(ir::Expr, u32),
}

impl LvalPart {
    pub fn width(&self) -> u32 {
        match &self.target {
            LvalTarget::Whole => self.sig_width,
            LvalTarget::Range(hi, lo) => hi - lo + 1,
            LvalTarget::Dynamic(_, w) => *w,
        }
    }

    /// Bits this part may write, for driver-overlap checks.
    pub fn bits(&self) -> (u32, u32) {
        match &self.target {
            LvalTarget::Range(hi, lo) => (*hi, *lo),
            _ => (self.sig_width - 1, 0),
        }
    }
}

fn diag(project: &SourceProject, span: Span, code: &str, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::at(project, span, code, msg)
}

impl<'a> Scope<'a> {
    pub fn new(project: &'a SourceProject) -> Self {
        Scope {
            project,
            signals: HashMap::new(),
            params: HashMap::new(),
            consts: HashMap::new(),
        }
    }

    pub fn width_err(&self, span: Span, msg: impl Into<String>) -> ElabError {
        ElabError::Width(WidthError(diag(self.project, span, "E_WIDTH", msg)))
    }

    pub fn unsupported(&self, span: Span, what: &str) -> ElabError {
        ElabError::Unsupported {
            construct: what.to_string(),
            diag: diag(
                self.project,
                span,
                "E_UNSUPPORTED",
                format!("{what} is outside the supported subset"),
            ),
        }
    }

    pub fn name_err(&self, span: Span, name: &str) -> ElabError {
        ElabError::Hierarchy(diag(
            self.project,
            span,
            "E_NAME",
            format!("undeclared identifier `{name}`"),
        ))
    }

    // ---------------------------------------------------------------- sizing

    fn literal_width(l: &Literal) -> u32 {
        match l.size {
            Some(s) => s,
            None if l.fill.is_some() => 1,
            None => (128 - (l.value | l.wild).leading_zeros()).max(32),
        }
    }

    /// Self-determined width.
    pub fn self_width(&self, e: &Expr) -> Result<u32, ElabError> {
        Ok(match &e.kind {
            ExprKind::Number(l) => Self::literal_width(l),
            ExprKind::Ident(n) => {
                if let Some(s) = self.signals.get(n) {
                    s.width
                } else if let Some(p) = self.params.get(n) {
                    p.value.width()
                } else if self.consts.contains_key(n) {
                    32
                } else {
                    return Err(self.name_err(e.span, n));
                }
            }
            ExprKind::Index(..) => 1,
            ExprKind::PartSelect(_, m, l) => {
                let m = self.const_eval(m)?;
                let l = self.const_eval(l)?;
                if m < l {
                    return Err(self.unsupported(e.span, "ascending part select"));
                }
                (m - l + 1) as u32
            }
            ExprKind::IndexedPart { width, .. } => {
                let w = self.const_eval(width)?;
                if w == 0 || w > MAX_WIDTH as u128 {
                    return Err(self.width_err(e.span, format!("indexed part select width {w}")));
                }
                w as u32
            }
            ExprKind::Concat(items) => {
                let mut w = 0;
                for i in items {
                    w += self.self_width(i)?;
                }
                self.check_width(e.span, w)?
            }
            ExprKind::Repeat(n, items) => {
                let n = self.const_eval(n)?;
                let mut w = 0u128;
                for i in items {
                    w += self.self_width(i)? as u128;
                }
                let total = n.saturating_mul(w);
                if total == 0 {
                    return Err(self.unsupported(e.span, "zero replication"));
                }
                if total > MAX_WIDTH as u128 {
                    return Err(self.unsupported(e.span, "vector wider than 128 bits"));
                }
                total as u32
            }
            ExprKind::Unary(op, x) => match op {
                UnaryOp::Plus | UnaryOp::Neg | UnaryOp::Not => self.self_width(x)?,
                _ => 1,
            },
            ExprKind::Binary(op, l, r) => {
                if op.is_comparison() || op.is_logical() {
                    1
                } else if op.is_shift() {
                    self.self_width(l)?
                } else {
                    self.self_width(l)?.max(self.self_width(r)?)
                }
            }
            ExprKind::Ternary(_, t, f) => self.self_width(t)?.max(self.self_width(f)?),
        })
    }

    fn check_width(&self, span: Span, w: u32) -> Result<u32, ElabError> {
        if w > MAX_WIDTH {
            Err(self.unsupported(span, "vector wider than 128 bits"))
        } else {
            Ok(w)
        }
    }

    /// Width used for mismatch warnings: is_unsized literals count only their
    /// significant bits. The flag is true when no sized operand contributed.
    pub fn lint_width(&self, e: &Expr) -> (u32, bool) {
        match &e.kind {
            ExprKind::Number(l) if l.size.is_none() => (l.min_width(), true),
            ExprKind::Ident(n) => match self.params.get(n) {
                Some(p) if p.is_unsized => ((128 - p.value.bits().leading_zeros()).max(1), true),
                _ => (self.self_width(e).unwrap_or(1), self.consts.contains_key(n)),
            },
            ExprKind::Unary(UnaryOp::Plus | UnaryOp::Neg | UnaryOp::Not, x) => self.lint_width(x),
            ExprKind::Binary(op, l, r) if !(op.is_comparison() || op.is_logical()) => {
                if op.is_shift() {
                    self.lint_width(l)
                } else {
                    merge(self.lint_width(l), self.lint_width(r))
                }
            }
            ExprKind::Ternary(_, t, f) => merge(self.lint_width(t), self.lint_width(f)),
            _ => (self.self_width(e).unwrap_or(1), false),
        }
    }

    // ------------------------------------------------------------- constants

    pub fn const_eval(&self, e: &Expr) -> Result<u128, ElabError> {
        let w = self.self_width(e)?.max(32);
        let v = self.lower(e, w, &mut Sink::default())?;
        v.as_const()
            .map(|b| b.bits())
            .ok_or_else(|| self.unsupported(e.span, "non-constant expression where a constant is required"))
    }

    /// `(width, lsb)` of a declared range.
    pub fn eval_range(&self, r: &Option<ast::Range>) -> Result<(u32, u32), ElabError> {
        let Some(r) = r else { return Ok((1, 0)) };
        let m = self.const_eval(&r.msb)?;
        let l = self.const_eval(&r.lsb)?;
        if m < l {
            return Err(self.unsupported(r.span, "ascending bit range"));
        }
        let w = m - l + 1;
        if w > MAX_WIDTH as u128 {
            return Err(self.unsupported(r.span, "vector wider than 128 bits"));
        }
        Ok((w as u32, l as u32))
    }

    // -------------------------------------------------------------- lowering

    /// Lowers `e` in a context of `ctx` bits (at least its self width).
    pub fn lower(&self, e: &Expr, ctx: u32, sink: &mut Sink) -> Result<ir::Expr, ElabError> {
        let out = self.lower_inner(e, ctx, sink)?;
        debug_assert_eq!(out.width(), ctx, "lowered width of {:?}", e.kind);
        if let Some(log) = sink.log.as_mut() {
            log.widths.insert(e.span, ctx);
        }
        Ok(out)
    }

    fn extend(&self, e: &Expr, v: ir::Expr, ctx: u32, sink: &mut Sink) -> Result<ir::Expr, ElabError> {
        let w = v.width();
        if w > ctx {
            return Err(self.width_err(e.span, format!("{w}-bit value in a {ctx}-bit context")));
        }
        if w < ctx {
            if let Some(log) = sink.log.as_mut() {
                log.extensions.push(Extension {
                    span: e.span,
                    from: w,
                    to: ctx,
                });
            }
        }
        Ok(ir::Expr::zext(v, ctx))
    }

    fn lower_inner(&self, e: &Expr, ctx: u32, sink: &mut Sink) -> Result<ir::Expr, ElabError> {
        match &e.kind {
            ExprKind::Number(l) => {
                if let Some(c) = l.fill {
                    let v = if c == '1' { u128::MAX } else { 0 };
                    return Ok(ir::Expr::lit(ctx, v));
                }
                let w = Self::literal_width(l);
                let value = Bv::new(w, l.value);
                let lit = match sink.sites.as_mut() {
                    Some(t) => {
                        let id = t.site(self.project, e.span, SiteKind::Literal, w);
                        ir::Expr::Literal {
                            value,
                            site: Some(id),
                        }
                    }
                    None => ir::Expr::konst(value),
                };
                self.extend(e, lit, ctx, sink)
            }
            ExprKind::Ident(n) => {
                let v = if let Some(s) = self.signals.get(n) {
                    ir::Expr::var(s.ir_name.clone(), s.width)
                } else if let Some(p) = self.params.get(n) {
                    match (p.site, sink.sites.as_mut()) {
                        (Some(span), Some(t)) => {
                            let id = t.site(self.project, span, SiteKind::Literal, p.value.width());
                            ir::Expr::Literal {
                                value: p.value,
                                site: Some(id),
                            }
                        }
                        _ => ir::Expr::konst(p.value),
                    }
                } else if let Some(c) = self.consts.get(n) {
                    ir::Expr::lit(32, *c)
                } else {
                    return Err(self.name_err(e.span, n));
                };
                self.extend(e, v, ctx, sink)
            }
            ExprKind::Index(base, idx) => {
                let (b, lsb) = self.select_base(base, sink)?;
                let bw = b.width();
                let v = match self.try_const(idx)? {
                    Some(i) => {
                        let Some(pos) = i.checked_sub(lsb as u128).filter(|p| *p < bw as u128) else {
                            return Err(self.width_err(
                                e.span,
                                format!("bit index {i} outside [{}:{}]", bw - 1 + lsb, lsb),
                            ));
                        };
                        ir::Expr::slice(b, pos as u32, pos as u32)
                    }
                    None => {
                        let amount = self.dynamic_index(idx, lsb, sink)?;
                        ir::Expr::slice(ir::Expr::bin(BinOp::Lshr, b, amount), 0, 0)
                    }
                };
                self.extend(e, v, ctx, sink)
            }
            ExprKind::PartSelect(base, m, l) => {
                let (b, lsb) = self.select_base(base, sink)?;
                let bw = b.width();
                let m = self.const_eval(m)?;
                let l = self.const_eval(l)?;
                if m < l {
                    return Err(self.unsupported(e.span, "ascending part select"));
                }
                let top = bw as u128 - 1 + lsb as u128;
                if l < lsb as u128 || m > top {
                    return Err(self.width_err(
                        e.span,
                        format!("part select [{m}:{l}] outside [{top}:{lsb}]"),
                    ));
                }
                let v = ir::Expr::slice(b, (m - lsb as u128) as u32, (l - lsb as u128) as u32);
                self.extend(e, v, ctx, sink)
            }
            ExprKind::IndexedPart {
                base,
                start,
                width,
                up,
            } => {
                let (b, lsb) = self.select_base(base, sink)?;
                let bw = b.width();
                let w = self.const_eval(width)? as u32;
                if w == 0 || w > bw {
                    return Err(self.width_err(e.span, format!("{w}-bit select of a {bw}-bit value")));
                }
                let v = match self.try_const(start)? {
                    Some(s) => {
                        let lo = if *up { s } else { s.wrapping_sub(w as u128 - 1) };
                        let lo = lo.checked_sub(lsb as u128);
                        match lo {
                            Some(lo) if lo + w as u128 <= bw as u128 => {
                                ir::Expr::slice(b, lo as u32 + w - 1, lo as u32)
                            }
                            _ => return Err(self.width_err(e.span, "indexed part select out of range")),
                        }
                    }
                    None => {
                        let mut amount = self.dynamic_index(start, lsb, sink)?;
                        if !*up {
                            let aw = amount.width();
                            amount = ir::Expr::bin(BinOp::Sub, amount, ir::Expr::lit(aw, (w - 1) as u128));
                        }
                        ir::Expr::slice(ir::Expr::bin(BinOp::Lshr, b, amount), w - 1, 0)
                    }
                };
                self.extend(e, v, ctx, sink)
            }
            ExprKind::Concat(items) => {
                let mut parts = Vec::new();
                for i in items {
                    let w = self.self_width(i)?;
                    parts.push(self.lower(i, w, sink)?);
                }
                let v = ir::Expr::concat(parts);
                self.check_width(e.span, v.width())?;
                self.extend(e, v, ctx, sink)
            }
            ExprKind::Repeat(n, items) => {
                let n = self.const_eval(n)?;
                let total = self.self_width(e)?;
                let mut one = Vec::new();
                for i in items {
                    let w = self.self_width(i)?;
                    one.push(self.lower(i, w, sink)?);
                }
                let mut parts = Vec::new();
                for _ in 0..n {
                    parts.extend(one.iter().cloned());
                }
                let v = ir::Expr::concat(parts);
                debug_assert_eq!(v.width(), total);
                self.extend(e, v, ctx, sink)
            }
            ExprKind::Unary(op, x) => match op {
                UnaryOp::Plus => self.lower(x, ctx, sink),
                UnaryOp::Neg => Ok(ir::Expr::neg(self.lower(x, ctx, sink)?)),
                UnaryOp::Not => Ok(ir::Expr::not(self.lower(x, ctx, sink)?)),
                _ => {
                    let w = self.self_width(x)?;
                    let v = self.lower(x, w, sink)?;
                    let r = match op {
                        UnaryOp::LogicNot => ir::Expr::not(ir::Expr::truthy(v)),
                        UnaryOp::RedAnd => ir::Expr::reduce(RedOp::And, v),
                        UnaryOp::RedNand => ir::Expr::not(ir::Expr::reduce(RedOp::And, v)),
                        UnaryOp::RedOr => ir::Expr::reduce(RedOp::Or, v),
                        UnaryOp::RedNor => ir::Expr::not(ir::Expr::reduce(RedOp::Or, v)),
                        UnaryOp::RedXor => ir::Expr::reduce(RedOp::Xor, v),
                        UnaryOp::RedXnor => ir::Expr::not(ir::Expr::reduce(RedOp::Xor, v)),
                        _ => unreachable!(),
                    };
                    self.extend(e, r, ctx, sink)
                }
            },
            ExprKind::Binary(op, l, r) => self.lower_binary(e, *op, l, r, ctx, sink),
            ExprKind::Ternary(c, t, f) => {
                let cw = self.self_width(c)?;
                let cond = ir::Expr::truthy(self.lower(c, cw, sink)?);
                let site = sink
                    .sites
                    .as_mut()
                    .map(|tab| tab.site(self.project, c.span, SiteKind::Condition, 1));
                let t = self.lower(t, ctx, sink)?;
                let f = self.lower(f, ctx, sink)?;
                Ok(ir::Expr::mux(cond, t, f, site))
            }
        }
    }

    fn lower_binary(
        &self,
        e: &Expr,
        op: BinaryOp,
        l: &Expr,
        r: &Expr,
        ctx: u32,
        sink: &mut Sink,
    ) -> Result<ir::Expr, ElabError> {
        use BinaryOp::*;
        let arith = |o: BinOp, s: &Self, sink: &mut Sink| -> Result<ir::Expr, ElabError> {
            Ok(ir::Expr::bin(o, s.lower(l, ctx, sink)?, s.lower(r, ctx, sink)?))
        };
        match op {
            Add => arith(BinOp::Add, self, sink),
            Sub => arith(BinOp::Sub, self, sink),
            Mul => arith(BinOp::Mul, self, sink),
            Div => arith(BinOp::Udiv, self, sink),
            Rem => arith(BinOp::Urem, self, sink),
            And => arith(BinOp::And, self, sink),
            Or => arith(BinOp::Or, self, sink),
            Xor => arith(BinOp::Xor, self, sink),
            Xnor => Ok(ir::Expr::not(arith(BinOp::Xor, self, sink)?)),
            Shl | Shr | AShl | AShr => {
                let a = self.lower(l, ctx, sink)?;
                let rw = self.self_width(r)?;
                let b = self.lower(r, rw, sink)?;
                let o = if matches!(op, Shl | AShl) { BinOp::Shl } else { BinOp::Lshr };
                Ok(ir::Expr::bin(o, a, b))
            }
            Pow => {
                let rw = self.self_width(r)?;
                let b = self.lower(r, rw, &mut Sink::default())?;
                let a = self.lower(l, ctx, &mut Sink::default())?;
                match (a.as_const(), b.as_const()) {
                    (Some(a), Some(b)) => {
                        let mut acc = Bv::new(ctx, 1);
                        let mut n = b.bits().min(256);
                        while n > 0 {
                            acc = acc.mul(&a);
                            n -= 1;
                        }
                        Ok(ir::Expr::konst(acc))
                    }
                    (Some(a), None) if a.bits() == 2 => {
                        let b = self.lower(r, rw, sink)?;
                        Ok(ir::Expr::bin(BinOp::Shl, ir::Expr::lit(ctx, 1), b))
                    }
                    _ => Err(self.unsupported(e.span, "non-constant power")),
                }
            }
            Eq | Ne | CaseEq | CaseNe | Lt | Le | Gt | Ge => {
                let w = self.self_width(l)?.max(self.self_width(r)?);
                let a = self.lower(l, w, sink)?;
                let b = self.lower(r, w, sink)?;
                let o = match op {
                    Eq | CaseEq => BinOp::Eq,
                    Ne | CaseNe => BinOp::Ne,
                    Lt => BinOp::Ult,
                    Le => BinOp::Ule,
                    Gt => BinOp::Ugt,
                    _ => BinOp::Uge,
                };
                let v = ir::Expr::bin(o, a, b);
                self.extend(e, v, ctx, sink)
            }
            LogicAnd | LogicOr => {
                let lw = self.self_width(l)?;
                let rw = self.self_width(r)?;
                let a = ir::Expr::truthy(self.lower(l, lw, sink)?);
                let b = ir::Expr::truthy(self.lower(r, rw, sink)?);
                let o = if op == LogicAnd { BinOp::And } else { BinOp::Or };
                let v = ir::Expr::bin(o, a, b);
                self.extend(e, v, ctx, sink)
            }
        }
    }

    fn try_const(&self, e: &Expr) -> Result<Option<u128>, ElabError> {
        let w = self.self_width(e)?.max(32);
        Ok(self.lower(e, w, &mut Sink::default())?.as_const().map(|b| b.bits()))
    }

    /// Lowered select base and its declared lsb.
    fn select_base(&self, base: &Expr, sink: &mut Sink) -> Result<(ir::Expr, u32), ElabError> {
        let lsb = match &base.kind {
            ExprKind::Ident(n) => self.signals.get(n).map(|s| s.lsb).unwrap_or(0),
            _ => 0,
        };
        let w = self.self_width(base)?;
        Ok((self.lower(base, w, sink)?, lsb))
    }

    fn dynamic_index(&self, idx: &Expr, lsb: u32, sink: &mut Sink) -> Result<ir::Expr, ElabError> {
        let w = self.self_width(idx)?;
        let v = self.lower(idx, w, sink)?;
        if lsb == 0 {
            return Ok(v);
        }
        Ok(ir::Expr::bin(BinOp::Sub, v, ir::Expr::lit(w, lsb as u128)))
    }

    // -------------------------------------------------------------- targets

    pub fn lvalue(&self, e: &Expr, sink: &mut Sink) -> Result<Vec<LvalPart>, ElabError> {
        match &e.kind {
            ExprKind::Concat(items) => {
                let mut out = Vec::new();
                for i in items {
                    out.extend(self.lvalue(i, sink)?);
                }
                Ok(out)
            }
            ExprKind::Ident(n) => {
                let s = self.target_signal(n, e.span)?;
                Ok(vec![LvalPart {
                    name: n.clone(),
                    ir_name: s.ir_name.clone(),
                    sig_width: s.width,
                    target: LvalTarget::Whole,
                    span: e.span,
                }])
            }
            ExprKind::Index(base, idx) => {
                let (n, s) = self.target_base(base)?;
                let target = match self.try_const(idx)? {
                    Some(i) => {
                        let Some(p) = i.checked_sub(s.lsb as u128).filter(|p| *p < s.width as u128) else {
                            return Err(self.width_err(e.span, format!("bit index {i} out of range for `{n}`")));
                        };
                        LvalTarget::Range(p as u32, p as u32)
                    }
                    None => LvalTarget::Dynamic(self.dynamic_index(idx, s.lsb, sink)?, 1),
                };
                Ok(vec![LvalPart {
                    name: n.to_string(),
                    ir_name: s.ir_name.clone(),
                    sig_width: s.width,
                    target,
                    span: e.span,
                }])
            }
            ExprKind::PartSelect(base, m, l) => {
                let (n, s) = self.target_base(base)?;
                let m = self.const_eval(m)?;
                let l = self.const_eval(l)?;
                let top = s.width as u128 - 1 + s.lsb as u128;
                if m < l || l < s.lsb as u128 || m > top {
                    return Err(self.width_err(e.span, format!("part select [{m}:{l}] out of range for `{n}`")));
                }
                Ok(vec![LvalPart {
                    name: n.to_string(),
                    ir_name: s.ir_name.clone(),
                    sig_width: s.width,
                    target: LvalTarget::Range((m - s.lsb as u128) as u32, (l - s.lsb as u128) as u32),
                    span: e.span,
                }])
            }
            ExprKind::IndexedPart {
                base,
                start,
                width,
                up,
            } => {
                let (n, s) = self.target_base(base)?;
                let w = self.const_eval(width)? as u32;
                if w == 0 || w > s.width {
                    return Err(self.width_err(e.span, "indexed part select out of range"));
                }
                let target = match self.try_const(start)? {
                    Some(st) => {
                        let lo = if *up { st } else { st.wrapping_sub(w as u128 - 1) };
                        match lo.checked_sub(s.lsb as u128) {
                            Some(lo) if lo + w as u128 <= s.width as u128 => {
                                LvalTarget::Range(lo as u32 + w - 1, lo as u32)
                            }
                            _ => return Err(self.width_err(e.span, "indexed part select out of range")),
                        }
                    }
                    None => {
                        let mut amount = self.dynamic_index(start, s.lsb, sink)?;
                        if !*up {
                            let aw = amount.width();
                            amount = ir::Expr::bin(BinOp::Sub, amount, ir::Expr::lit(aw, (w - 1) as u128));
                        }
                        LvalTarget::Dynamic(amount, w)
                    }
                };
                Ok(vec![LvalPart {
                    name: n.to_string(),
                    ir_name: s.ir_name.clone(),
                    sig_width: s.width,
                    target,
                    span: e.span,
                }])
            }
            _ => Err(self.unsupported(e.span, "assignment to a non-signal expression")),
        }
    }

    fn target_signal(&self, n: &str, span: Span) -> Result<&SigInfo, ElabError> {
        if self.params.contains_key(n) || self.consts.contains_key(n) {
            return Err(self.unsupported(span, "assignment to a parameter or loop variable"));
        }
        self.signals.get(n).ok_or_else(|| self.name_err(span, n))
    }

    fn target_base<'e>(&self, base: &'e Expr) -> Result<(&'e str, &SigInfo), ElabError> {
        match &base.kind {
            ExprKind::Ident(n) => Ok((n.as_str(), self.target_signal(n, base.span)?)),
            _ => Err(self.unsupported(base.span, "nested select in assignment target")),
        }
    }

    /// Lowers the right-hand side of an assignment to exactly `lhs_width` bits,
    /// recording a warning when the widths disagree.
    pub fn assign_rhs(
        &self,
        rhs: &Expr,
        lhs_width: u32,
        target: &str,
        span: Span,
        sink: &mut Sink,
    ) -> Result<ir::Expr, ElabError> {
        let sw = self.self_width(rhs)?;
        let ctx = sw.max(lhs_width);
        let v = self.lower(rhs, ctx, sink)?;
        if let Some(log) = sink.log.as_mut() {
            let (lw, flexible) = self.lint_width(rhs);
            let mismatch = if flexible { lw > lhs_width } else { lw != lhs_width };
            if mismatch {
                let what = if lw > lhs_width { "truncated" } else { "extended" };
                log.warnings.push(WidthWarning {
                    span,
                    target: target.to_string(),
                    lhs_width,
                    rhs_width: lw,
                    message: format!(
                        "{lw}-bit expression assigned to {lhs_width}-bit `{target}` is implicitly {what}"
                    ),
                });
            }
        }
        Ok(ir::Expr::resize(v, lhs_width))
    }

    /// Binds the module's parameters, applying overrides given as already
    /// evaluated values.
    pub fn bind_params(
        &mut self,
        m: &ast::AstModule,
        overrides: &HashMap<String, ParamVal>,
    ) -> Result<(), ElabError> {
        for p in &m.params {
            let val = match overrides.get(&p.name) {
                Some(v) if !p.local => v.clone(),
                _ => self.param_value(&p.value)?,
            };
            self.params.insert(p.name.clone(), val);
        }
        Ok(())
    }

    pub fn param_value(&self, e: &Expr) -> Result<ParamVal, ElabError> {
        let w = self.self_width(e)?;
        let v = self.lower(e, w, &mut Sink::default())?;
        let value = v
            .as_const()
            .ok_or_else(|| self.unsupported(e.span, "non-constant parameter value"))?;
        let (is_unsized, site) = match &e.kind {
            ExprKind::Number(l) => (l.size.is_none(), Some(e.span)),
            _ => (self.lint_width(e).1, None),
        };
        Ok(ParamVal {
            value,
            is_unsized,
            site,
        })
    }

    /// Declares ports and nets with `prefix` applied to their IR names.
    pub fn declare_signals(&mut self, m: &ast::AstModule, prefix: &str) -> Result<(), ElabError> {
        for p in &m.ports {
            let range = if p.range.is_some() {
                &p.range
            } else {
                m.decl(&p.name).map(|d| &d.range).unwrap_or(&p.range)
            };
            let (width, lsb) = if p.kind == Some(ast::NetKind::Integer) {
                (32, 0)
            } else {
                self.eval_range(range)?
            };
            self.signals.insert(
                p.name.clone(),
                SigInfo {
                    ir_name: format!("{prefix}{}", p.name),
                    width,
                    lsb,
                },
            );
        }
        for d in &m.decls {
            if self.signals.contains_key(&d.name) {
                continue;
            }
            let (width, lsb) = if d.kind == ast::NetKind::Integer {
                (32, 0)
            } else {
                self.eval_range(&d.range)?
            };
            self.signals.insert(
                d.name.clone(),
                SigInfo {
                    ir_name: format!("{prefix}{}", d.name),
                    width,
                    lsb,
                },
            );
        }
        Ok(())
    }

    /// Iterates a constant-bounded loop, calling `body` with each value bound.
    pub fn unroll(
        &self,
        var: &str,
        init: &Expr,
        cond: &Expr,
        step: &Expr,
        span: Span,
        mut body: impl FnMut(&Scope<'a>) -> Result<(), ElabError>,
    ) -> Result<(), ElabError> {
        let mut scope = self.clone();
        scope.signals.remove(var);
        let mut v = self.const_eval(init)? & 0xffff_ffff;
        let mut n = 0usize;
        loop {
            scope.consts.insert(var.to_string(), v);
            if scope.const_eval(cond)? == 0 {
                break;
            }
            n += 1;
            if n > MAX_UNROLL {
                return Err(scope.unsupported(span, "loop with more than 4096 iterations"));
            }
            body(&scope)?;
            v = scope.const_eval(step)? & 0xffff_ffff;
        }
        Ok(())
    }
}

fn merge(a: (u32, bool), b: (u32, bool)) -> (u32, bool) {
    match (a.1, b.1) {
        (true, true) | (false, false) => (a.0.max(b.0), a.1),
        (true, false) => (b.0.max(a.0), false),
        (false, true) => (a.0.max(b.0), false),
    }
}

/// Per-module width annotation.
#[derive(Clone, Debug)]
pub struct TypedModule {
    pub module: ast::AstModule,
    /// Final width of each expression node, keyed by its span.
    pub widths: BTreeMap<Span, u32>,
    pub signal_widths: BTreeMap<String, u32>,
    /// Implicit zero-extensions: an operand of `from` bits used as `to` bits.
    pub extensions: Vec<Extension>,
    /// Assignment-boundary width disagreements.
    pub warnings: Vec<WidthWarning>,
}

impl TypedModule {
    pub fn width_of(&self, e: &Expr) -> Option<u32> {
        self.widths.get(&e.span).copied()
    }
}

/// Sizes every expression of `m` using default parameter values.
pub fn infer_widths(project: &SourceProject, m: &ast::AstModule) -> Result<TypedModule, WidthError> {
    let to_width = |e: ElabError| match e {
        ElabError::Width(w) => w,
        other => WidthError(other.diagnostic().clone()),
    };
    let mut scope = Scope::new(project);
    scope.bind_params(m, &HashMap::new()).map_err(to_width)?;
    scope.declare_signals(m, "").map_err(to_width)?;
    let mut sink = Sink {
        sites: None,
        log: Some(WidthLog::default()),
    };
    annotate_items(&scope, &m.items, &mut sink).map_err(to_width)?;
    let log = sink.log.take().unwrap_or_default();
    let mut signal_widths = BTreeMap::new();
    for (n, s) in &scope.signals {
        signal_widths.insert(n.clone(), s.width);
    }
    Ok(TypedModule {
        module: m.clone(),
        widths: log.widths,
        signal_widths,
        extensions: log.extensions,
        warnings: log.warnings,
    })
}

fn annotate_items(scope: &Scope, items: &[ast::Item], sink: &mut Sink) -> Result<(), ElabError> {
    for it in items {
        match it {
            ast::Item::Assign(a) => annotate_assign(scope, &a.lhs, &a.rhs, a.span, sink)?,
            ast::Item::Always(a) => annotate_stmt(scope, &a.body, sink)?,
            ast::Item::Initial(i) => annotate_stmt(scope, &i.body, sink)?,
            ast::Item::Instance(inst) => {
                for c in &inst.conns {
                    if let Some(e) = &c.expr {
                        let w = scope.self_width(e)?;
                        scope.lower(e, w, sink)?;
                    }
                }
            }
            ast::Item::GenFor(g) => {
                scope.unroll(&g.var, &g.init, &g.cond, &g.step, g.span, |s| {
                    annotate_items(s, &g.items, sink)
                })?;
            }
        }
    }
    Ok(())
}

fn annotate_assign(scope: &Scope, lhs: &Expr, rhs: &Expr, span: Span, sink: &mut Sink) -> Result<(), ElabError> {
    let parts = scope.lvalue(lhs, sink)?;
    let w: u32 = parts.iter().map(LvalPart::width).sum();
    let target = if parts.len() == 1 {
        parts[0].name.clone()
    } else {
        super::printer::expr(lhs)
    };
    if let Some(log) = sink.log.as_mut() {
        log.widths.insert(lhs.span, w);
    }
    scope.assign_rhs(rhs, w, &target, span, sink)?;
    Ok(())
}

fn annotate_stmt(scope: &Scope, s: &Stmt, sink: &mut Sink) -> Result<(), ElabError> {
    match s {
        Stmt::Block { stmts, .. } => {
            for st in stmts {
                annotate_stmt(scope, st, sink)?;
            }
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let w = scope.self_width(cond)?;
            scope.lower(cond, w, sink)?;
            annotate_stmt(scope, then_branch, sink)?;
            if let Some(e) = else_branch {
                annotate_stmt(scope, e, sink)?;
            }
        }
        Stmt::Case {
            subject,
            arms,
            default,
            ..
        } => {
            let mut w = scope.self_width(subject)?;
            for a in arms {
                for l in &a.labels {
                    w = w.max(scope.self_width(l)?);
                }
            }
            scope.lower(subject, w, sink)?;
            for a in arms {
                for l in &a.labels {
                    scope.lower(l, w, sink)?;
                }
                annotate_stmt(scope, &a.body, sink)?;
            }
            if let Some(d) = default {
                annotate_stmt(scope, d, sink)?;
            }
        }
        Stmt::Assign { lhs, rhs, span, .. } => annotate_assign(scope, lhs, rhs, *span, sink)?,
        Stmt::For {
            var,
            init,
            cond,
            step,
            body,
            span,
        } => {
            scope.unroll(var, init, cond, step, *span, |sc| annotate_stmt(sc, body, sink))?;
        }
        Stmt::SysTask { .. } | Stmt::Null { .. } => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::parser::parse_project;

    fn typed(src: &str) -> Result<TypedModule, WidthError> {
        let p = SourceProject::new("m").with_file("m.v", src);
        let ms = parse_project(&p).unwrap();
        infer_widths(&p, &ms[0])
    }

    fn rhs_width(t: &TypedModule) -> u32 {
        let ast::Item::Assign(a) = &t.module.items[0] else { panic!() };
        t.width_of(&a.rhs).unwrap()
    }

    #[test]
    fn bitwise_and_is_four_bits() {
        let t = typed("module m(input [7:0] a, b, output [3:0] y); assign y = a[3:0] & b[3:0]; endmodule").unwrap();
        assert_eq!(rhs_width(&t), 4);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn add_extends_narrow_operand() {
        let t = typed("module m(input [7:0] a, input [3:0] b, output [7:0] y); assign y = a[7:0] + b[3:0]; endmodule").unwrap();
        assert_eq!(rhs_width(&t), 8);
        assert!(t.extensions.iter().any(|x| x.from == 4 && x.to == 8));
    }

    #[test]
    fn out_of_range_slice_is_an_error() {
        assert!(typed("module m(input [3:0] a, output [4:0] y); assign y = a[8:4]; endmodule").is_err());
    }

    #[test]
    fn truncation_warns() {
        let t = typed("module m(input [7:0] a, b, output [3:0] y); assign y = a[7:0] + b[7:0]; endmodule").unwrap();
        assert_eq!(t.warnings.len(), 1);
        let t = typed("module m(input [3:0] a, output [3:0] y); assign y = a + 1; endmodule").unwrap();
        assert!(t.warnings.is_empty());
    }
}
