// SPDX-License-Identifier: Apache-2.0

//! Flattening elaboration from modules to a [`TransitionSystem`].
//!
//! Edge-triggered blocks become next-state functions, continuous assignments
//! and combinational blocks become combinational definitions. Procedural code
//! is executed symbolically: each branch produces a mux, loops are unrolled,
//! and a combinational block that leaves a target unassigned on some path gets
//! a hidden `<name>$latch` state holding its previous value.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::ast::{self, AstModule, CaseKind, Direction, ExprKind, Item, Stmt};
use super::ir::{self, BinOp, CombDef, DriverInfo, DriverKind, Expr, Signal, StateVar, TransitionSystem};
use super::lower::{LvalPart, LvalTarget, ParamVal, Scope, Sink};
use super::source::{Diagnostic, SourceProject, Span};
use super::ElabError;
use crate::bits::Bv;

pub const PREV_SUFFIX: &str = "$prev";
pub const LATCH_SUFFIX: &str = "$latch";

pub fn elaborate(src: &SourceProject, modules: &[AstModule], top: &str) -> Result<TransitionSystem, ElabError> {
    let map: HashMap<&str, &AstModule> = modules.iter().map(|m| (m.name.as_str(), m)).collect();
    let Some(top_m) = map.get(top).copied() else {
        return Err(ElabError::Hierarchy(Diagnostic::global(
            "E_HIER",
            format!("top module `{top}` is not declared"),
        )));
    };
    let mut el = Elab {
        project: src,
        modules: &map,
        sink: Sink::with_sites(),
        order: Vec::new(),
        widths: HashMap::new(),
        pieces: HashMap::new(),
        inits: HashMap::new(),
        clocks: Vec::new(),
        assign_spans: HashMap::new(),
        decl_spans: HashMap::new(),
    };
    let mut stack = vec![top.to_string()];
    el.instance(top_m, "", &HashMap::new(), &mut stack)?;
    el.finish(top_m)
}

#[derive(Clone, Debug)]
struct Piece {
    hi: u32,
    lo: u32,
    expr: Expr,
    seq: bool,
    span: Span,
}

struct Elab<'a> {
    project: &'a SourceProject,
    modules: &'a HashMap<&'a str, &'a AstModule>,
    sink: Sink,
    order: Vec<String>,
    widths: HashMap<String, u32>,
    pieces: HashMap<String, Vec<Piece>>,
    inits: HashMap<String, Bv>,
    clocks: Vec<(String, Span)>,
    assign_spans: HashMap<String, Vec<Span>>,
    decl_spans: HashMap<String, Span>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Comb,
    Seq,
    Init,
}

#[derive(Clone, Default)]
struct Proc {
    cur: HashMap<String, Expr>,
    next: HashMap<String, Expr>,
    cover: BTreeMap<String, (u32, u32)>,
}

impl<'a> Elab<'a> {
    fn diag(&self, span: Span, code: &str, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::at(self.project, span, code, msg)
    }

    fn instance(
        &mut self,
        m: &AstModule,
        prefix: &str,
        overrides: &HashMap<String, ParamVal>,
        stack: &mut Vec<String>,
    ) -> Result<(), ElabError> {
        let mut scope = Scope::new(self.project);
        scope.bind_params(m, overrides)?;
        scope.declare_signals(m, prefix)?;
        for p in &m.ports {
            let s = &scope.signals[&p.name];
            self.declare(&s.ir_name.clone(), s.width, p.name_span);
        }
        for d in &m.decls {
            let s = scope.signals[&d.name].clone();
            if m.port(&d.name).is_none() {
                self.declare(&s.ir_name, s.width, d.name_span);
            }
            if let Some(init) = &d.init {
                if d.kind == ast::NetKind::Wire {
                    let v = scope.assign_rhs(init, s.width, &d.name, d.decl_span, &mut self.sink)?;
                    self.add_piece(&s.ir_name, s.width - 1, 0, v, false, d.decl_span)?;
                    self.assign_spans.entry(s.ir_name.clone()).or_default().push(d.decl_span);
                } else {
                    let v = scope.assign_rhs(init, s.width, &d.name, d.decl_span, &mut Sink::default())?;
                    let c = v
                        .as_const()
                        .ok_or_else(|| scope.unsupported(init.span, "non-constant initial value"))?;
                    self.inits.insert(s.ir_name.clone(), c);
                }
            }
        }
        self.items(&scope, &m.items, stack)
    }

    fn declare(&mut self, ir_name: &str, width: u32, span: Span) {
        if !self.widths.contains_key(ir_name) {
            self.order.push(ir_name.to_string());
            self.widths.insert(ir_name.to_string(), width);
            self.decl_spans.insert(ir_name.to_string(), span);
        }
    }

    fn items(&mut self, scope: &Scope, items: &[Item], stack: &mut Vec<String>) -> Result<(), ElabError> {
        for it in items {
            match it {
                Item::Assign(a) => {
                    let parts = scope.lvalue(&a.lhs, &mut self.sink)?;
                    let total: u32 = parts.iter().map(LvalPart::width).sum();
                    let target = parts.first().map(|p| p.name.clone()).unwrap_or_default();
                    let v = scope.assign_rhs(&a.rhs, total, &target, a.span, &mut self.sink)?;
                    let mut off = total;
                    for p in &parts {
                        let w = p.width();
                        off -= w;
                        let val = Expr::slice(v.clone(), off + w - 1, off);
                        let (hi, lo) = match &p.target {
                            LvalTarget::Whole => (p.sig_width - 1, 0),
                            LvalTarget::Range(hi, lo) => (*hi, *lo),
                            LvalTarget::Dynamic(..) => {
                                return Err(scope.unsupported(p.span, "dynamic select in a continuous assignment target"))
                            }
                        };
                        self.add_piece(&p.ir_name, hi, lo, val, false, a.span)?;
                        self.assign_spans.entry(p.ir_name.clone()).or_default().push(a.span);
                    }
                }
                Item::Always(a) => {
                    if a.is_comb() {
                        self.procedure(scope, &a.body, Mode::Comb, a.span)?;
                    } else {
                        let clk = pick_clock(a);
                        let Some(s) = scope.signals.get(&clk) else {
                            return Err(scope.name_err(a.header_span, &clk));
                        };
                        self.clocks.push((s.ir_name.clone(), a.header_span));
                        self.procedure(scope, &a.body, Mode::Seq, a.span)?;
                    }
                }
                Item::Initial(i) => {
                    self.procedure(scope, &i.body, Mode::Init, i.span)?;
                }
                Item::Instance(inst) => self.child(scope, inst, stack)?,
                Item::GenFor(g) => {
                    scope.unroll(&g.var, &g.init, &g.cond, &g.step, g.span, |s| self.items(s, &g.items, stack))?;
                }
            }
        }
        Ok(())
    }

    fn child(&mut self, scope: &Scope, inst: &ast::Instance, stack: &mut Vec<String>) -> Result<(), ElabError> {
        let Some(cm) = self.modules.get(inst.module.as_str()).copied() else {
            return Err(ElabError::Hierarchy(self.diag(
                inst.span,
                "E_HIER",
                format!("module `{}` is not declared", inst.module),
            )));
        };
        if stack.contains(&inst.module) {
            return Err(ElabError::Hierarchy(self.diag(
                inst.span,
                "E_HIER",
                format!("recursive instantiation of `{}`", inst.module),
            )));
        }
        let mut overrides = HashMap::new();
        let public: Vec<&ast::ParamDecl> = cm.params.iter().filter(|p| !p.local).collect();
        for (i, (name, e)) in inst.params.iter().enumerate() {
            let pname = match name {
                Some(n) => n.clone(),
                None => match public.get(i) {
                    Some(p) => p.name.clone(),
                    None => {
                        return Err(ElabError::Hierarchy(self.diag(
                            e.span,
                            "E_HIER",
                            format!("too many parameter overrides for `{}`", cm.name),
                        )))
                    }
                },
            };
            if cm.param(&pname).is_none() {
                return Err(ElabError::Hierarchy(self.diag(
                    e.span,
                    "E_HIER",
                    format!("`{}` has no parameter `{pname}`", cm.name),
                )));
            }
            let mut v = scope.param_value(e)?;
            v.site = None;
            overrides.insert(pname, v);
        }
        let prefix = {
            let any = scope.signals.values().next().map(|s| s.ir_name.as_str()).unwrap_or("");
            let parent = match any.rfind('.') {
                Some(i) => &any[..=i],
                None => "",
            };
            format!("{parent}{}.", inst.name)
        };
        // child scope is needed for port widths before the child body runs
        let mut cscope = Scope::new(self.project);
        cscope.bind_params(cm, &overrides)?;
        cscope.declare_signals(cm, &prefix)?;

        let mut bound: BTreeSet<String> = BTreeSet::new();
        let mut conns: Vec<(&ast::PortDecl, &ast::Expr, Span)> = Vec::new();
        for (i, c) in inst.conns.iter().enumerate() {
            let port = match &c.port {
                Some(n) => cm.port(n).ok_or_else(|| {
                    ElabError::Hierarchy(self.diag(c.span, "E_HIER", format!("`{}` has no port `{n}`", cm.name)))
                })?,
                None => cm.ports.get(i).ok_or_else(|| {
                    ElabError::Hierarchy(self.diag(c.span, "E_HIER", format!("too many connections to `{}`", cm.name)))
                })?,
            };
            if !bound.insert(port.name.clone()) {
                return Err(ElabError::Hierarchy(self.diag(
                    c.span,
                    "E_HIER",
                    format!("port `{}` connected twice", port.name),
                )));
            }
            if let Some(e) = &c.expr {
                conns.push((port, e, c.span));
            }
        }
        stack.push(inst.module.clone());
        self.instance(cm, &prefix, &overrides, stack)?;
        stack.pop();

        for (port, e, span) in conns {
            let ps = &cscope.signals[&port.name];
            match port.dir {
                Direction::Input => {
                    let v = scope.assign_rhs(e, ps.width, &port.name, span, &mut self.sink)?;
                    self.add_piece(&ps.ir_name.clone(), ps.width - 1, 0, v, false, span)?;
                }
                Direction::Output => {
                    if !is_lvalue(e) {
                        return Err(scope.unsupported(e.span, "output port connected to a non-signal expression"));
                    }
                    let parts = scope.lvalue(e, &mut self.sink)?;
                    let total: u32 = parts.iter().map(LvalPart::width).sum();
                    let v = Expr::resize(Expr::var(ps.ir_name.clone(), ps.width), total);
                    let mut off = total;
                    for p in &parts {
                        let w = p.width();
                        off -= w;
                        let val = Expr::slice(v.clone(), off + w - 1, off);
                        let (hi, lo) = match &p.target {
                            LvalTarget::Whole => (p.sig_width - 1, 0),
                            LvalTarget::Range(hi, lo) => (*hi, *lo),
                            LvalTarget::Dynamic(..) => {
                                return Err(scope.unsupported(p.span, "dynamic select in a port connection"))
                            }
                        };
                        self.add_piece(&p.ir_name, hi, lo, val, false, span)?;
                        self.assign_spans.entry(p.ir_name.clone()).or_default().push(inst.span);
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn add_piece(
        &mut self,
        ir_name: &str,
        hi: u32,
        lo: u32,
        expr: Expr,
        seq: bool,
        span: Span,
    ) -> Result<(), ElabError> {
        debug_assert_eq!(expr.width(), hi - lo + 1);
        let list = self.pieces.entry(ir_name.to_string()).or_default();
        if let Some(other) = list.iter().find(|p| p.lo <= hi && lo <= p.hi) {
            let loc = self.project.location(other.span);
            return Err(ElabError::MultipleDrivers {
                signal: ir_name.to_string(),
                diag: Diagnostic::at(
                    self.project,
                    span,
                    "E_MULTI",
                    format!("`{ir_name}` is also driven at {loc}"),
                ),
            });
        }
        list.push(Piece {
            hi,
            lo,
            expr,
            seq,
            span,
        });
        Ok(())
    }

    // ------------------------------------------------------------ procedures

    fn procedure(&mut self, scope: &Scope, body: &Stmt, mode: Mode, span: Span) -> Result<(), ElabError> {
        let saved = if mode == Mode::Init { self.sink.sites.take() } else { None };
        let mut p = Proc::default();
        let r = self.exec(scope, body, &mut p, mode);
        if mode == Mode::Init {
            self.sink.sites = saved;
        }
        r?;
        let vals = if mode == Mode::Seq { &p.next } else { &p.cur };
        let mut names: Vec<&String> = vals.keys().collect();
        names.sort();
        for name in names {
            let v = vals[name].clone();
            let (hi, lo) = p.cover[name];
            match mode {
                Mode::Init => {
                    let c = v
                        .as_const()
                        .ok_or_else(|| scope.unsupported(span, "non-constant initial value"))?;
                    self.inits.insert(name.clone(), c);
                }
                Mode::Comb | Mode::Seq => {
                    let piece = Expr::slice(v, hi, lo);
                    self.add_piece(name, hi, lo, piece, mode == Mode::Seq, span)?;
                }
            }
        }
        Ok(())
    }

    fn default_value(&self, name: &str, mode: Mode) -> Expr {
        let w = self.widths[name];
        match mode {
            Mode::Comb => Expr::var(format!("{name}{PREV_SUFFIX}"), w),
            Mode::Seq => Expr::var(name, w),
            Mode::Init => Expr::konst(self.inits.get(name).copied().unwrap_or(Bv::zero(w))),
        }
    }

    fn read(&mut self, scope: &Scope, e: &ast::Expr, ctx: u32, p: &Proc) -> Result<Expr, ElabError> {
        let v = scope.lower(e, ctx, &mut self.sink)?;
        Ok(v.substitute(&p.cur))
    }

    fn exec(&mut self, scope: &Scope, s: &Stmt, p: &mut Proc, mode: Mode) -> Result<(), ElabError> {
        match s {
            Stmt::Block { stmts, .. } => {
                for st in stmts {
                    self.exec(scope, st, p, mode)?;
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let w = scope.self_width(cond)?;
                let c = Expr::truthy(self.read(scope, cond, w, p)?);
                let site = self
                    .sink
                    .sites
                    .as_mut()
                    .map(|t| t.site(self.project, cond.span, ir::SiteKind::Condition, 1));
                let mut tp = p.clone();
                self.exec(scope, then_branch, &mut tp, mode)?;
                let mut ep = p.clone();
                if let Some(e) = else_branch {
                    self.exec(scope, e, &mut ep, mode)?;
                }
                *p = self.merge(c, site, tp, ep, p, mode);
            }
            Stmt::Case {
                kind,
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
                let subj = self.read(scope, subject, w, p)?;
                let mut conds = Vec::new();
                for a in arms {
                    let mut any: Option<Expr> = None;
                    for l in &a.labels {
                        let c = self.case_match(scope, *kind, &subj, l, w, p)?;
                        any = Some(match any {
                            None => c,
                            Some(prev) => Expr::bin(BinOp::Or, prev, c),
                        });
                    }
                    conds.push(any.unwrap_or_else(|| Expr::bool_lit(false)));
                }
                self.exec_case(scope, arms, &conds, 0, default.as_deref(), p, mode)?;
            }
            Stmt::Assign {
                lhs,
                rhs,
                blocking,
                span,
                ..
            } => {
                let parts = scope.lvalue(lhs, &mut self.sink)?;
                let total: u32 = parts.iter().map(LvalPart::width).sum();
                let target = parts.first().map(|x| x.name.clone()).unwrap_or_default();
                let v = scope
                    .assign_rhs(rhs, total, &target, *span, &mut self.sink)?
                    .substitute(&p.cur);
                let mut off = total;
                for part in &parts {
                    let w = part.width();
                    off -= w;
                    let val = Expr::slice(v.clone(), off + w - 1, off);
                    let name = part.ir_name.clone();
                    let nonblocking = mode == Mode::Seq && !blocking;
                    let base = if nonblocking {
                        p.next.get(&name).cloned().unwrap_or_else(|| Expr::var(&name, part.sig_width))
                    } else {
                        p.cur.get(&name).cloned().unwrap_or_else(|| self.default_value(&name, mode))
                    };
                    let target = match &part.target {
                        LvalTarget::Dynamic(idx, w) => LvalTarget::Dynamic(idx.substitute(&p.cur), *w),
                        t => t.clone(),
                    };
                    let new = splice(base, &target, val);
                    if !nonblocking {
                        p.cur.insert(name.clone(), new.clone());
                    }
                    if mode == Mode::Seq {
                        p.next.insert(name.clone(), new);
                    }
                    let (hi, lo) = part.bits();
                    let e = p.cover.entry(name.clone()).or_insert((hi, lo));
                    e.0 = e.0.max(hi);
                    e.1 = e.1.min(lo);
                    if mode != Mode::Init {
                        self.assign_spans.entry(name).or_default().push(*span);
                    }
                }
            }
            Stmt::For {
                var,
                init,
                cond,
                step,
                body,
                span,
            } => {
                let mut err = None;
                scope.unroll(var, init, cond, step, *span, |sc| {
                    if let Err(e) = self.exec(sc, body, p, mode) {
                        err = Some(e.clone());
                        return Err(e);
                    }
                    Ok(())
                })?;
                if let Some(e) = err {
                    return Err(e);
                }
            }
            Stmt::SysTask { .. } | Stmt::Null { .. } => {}
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn exec_case(
        &mut self,
        scope: &Scope,
        arms: &[ast::CaseArm],
        conds: &[Expr],
        i: usize,
        default: Option<&Stmt>,
        p: &mut Proc,
        mode: Mode,
    ) -> Result<(), ElabError> {
        if i == arms.len() {
            if let Some(d) = default {
                self.exec(scope, d, p, mode)?;
            }
            return Ok(());
        }
        let mut tp = p.clone();
        self.exec(scope, &arms[i].body, &mut tp, mode)?;
        let mut ep = p.clone();
        self.exec_case(scope, arms, conds, i + 1, default, &mut ep, mode)?;
        *p = self.merge(conds[i].clone(), None, tp, ep, p, mode);
        Ok(())
    }

    fn case_match(
        &mut self,
        scope: &Scope,
        kind: CaseKind,
        subj: &Expr,
        label: &ast::Expr,
        w: u32,
        p: &Proc,
    ) -> Result<Expr, ElabError> {
        if let ExprKind::Number(l) = &label.kind {
            if l.wild != 0 {
                let wild_ok = match kind {
                    CaseKind::Case => false,
                    CaseKind::Casez => l.has_z,
                    CaseKind::Casex => true,
                };
                if !wild_ok {
                    return Ok(Expr::bool_lit(false));
                }
                let wild = Bv::new(w, l.wild);
                let care = Expr::konst(wild.not());
                let lit = Expr::konst(Bv::new(w, l.value));
                return Ok(Expr::bin(
                    BinOp::Eq,
                    Expr::bin(BinOp::And, subj.clone(), care.clone()),
                    Expr::bin(BinOp::And, lit, care),
                ));
            }
        }
        let lv = self.read(scope, label, w, p)?;
        Ok(Expr::bin(BinOp::Eq, subj.clone(), lv))
    }

    fn merge(&self, c: Expr, site: Option<ir::SiteId>, t: Proc, e: Proc, pre: &Proc, mode: Mode) -> Proc {
        let mut out = Proc::default();
        let keys: BTreeSet<&String> = t.cur.keys().chain(e.cur.keys()).collect();
        for k in keys {
            let d = || pre.cur.get(k).cloned().unwrap_or_else(|| self.default_value(k, mode));
            let tv = t.cur.get(k).cloned().unwrap_or_else(d);
            let ev = e.cur.get(k).cloned().unwrap_or_else(d);
            out.cur.insert(k.clone(), Expr::mux(c.clone(), tv, ev, site));
        }
        let keys: BTreeSet<&String> = t.next.keys().chain(e.next.keys()).collect();
        for k in keys {
            let d = || {
                pre.next
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| Expr::var(k.as_str(), self.widths[k.as_str()]))
            };
            let tv = t.next.get(k).cloned().unwrap_or_else(d);
            let ev = e.next.get(k).cloned().unwrap_or_else(d);
            out.next.insert(k.clone(), Expr::mux(c.clone(), tv, ev, site));
        }
        out.cover = t.cover;
        for (k, (hi, lo)) in e.cover {
            let x = out.cover.entry(k).or_insert((hi, lo));
            x.0 = x.0.max(hi);
            x.1 = x.1.min(lo);
        }
        out
    }

    // ---------------------------------------------------------------- finish

    fn finish(mut self, top: &AstModule) -> Result<TransitionSystem, ElabError> {
        let mut ts = TransitionSystem::default();
        let top_inputs: BTreeSet<&str> = top
            .ports
            .iter()
            .filter(|p| p.dir == Direction::Input)
            .map(|p| p.name.as_str())
            .collect();

        // clock resolution through port aliases
        let resolve = |pieces: &HashMap<String, Vec<Piece>>, mut n: String| {
            for _ in 0..64 {
                match pieces.get(&n).map(|v| v.as_slice()) {
                    Some([p]) if !p.seq => match &p.expr {
                        Expr::Ref { name, width } if p.lo == 0 && *width == p.hi + 1 => n = name.clone(),
                        _ => break,
                    },
                    _ => break,
                }
            }
            n
        };
        let mut clock: Option<String> = None;
        let mut aliases: BTreeSet<String> = BTreeSet::new();
        for (c, span) in &self.clocks {
            let r = resolve(&self.pieces, c.clone());
            if !top_inputs.contains(r.as_str()) {
                return Err(ElabError::Unsupported {
                    construct: "derived clock".into(),
                    diag: self.diag(*span, "E_UNSUPPORTED", format!("clock `{c}` is not a top-level input")),
                });
            }
            match &clock {
                Some(k) if *k != r => {
                    return Err(ElabError::Unsupported {
                        construct: "multiple clocks".into(),
                        diag: self.diag(*span, "E_UNSUPPORTED", format!("second clock `{r}` (first is `{k}`)")),
                    })
                }
                _ => clock = Some(r.clone()),
            }
            let mut n = c.clone();
            while n != r {
                aliases.insert(n.clone());
                n = match &self.pieces[&n][0].expr {
                    Expr::Ref { name, .. } => name.clone(),
                    _ => break,
                };
            }
        }

        let mut states = Vec::new();
        let mut comb = Vec::new();
        let mut kinds: HashMap<String, DriverKind> = HashMap::new();
        for name in self.order.clone() {
            let w = self.widths[&name];
            let pieces = self.pieces.remove(&name).unwrap_or_default();
            if top_inputs.contains(name.as_str()) {
                if let Some(p) = pieces.first() {
                    return Err(ElabError::MultipleDrivers {
                        signal: name.clone(),
                        diag: self.diag(p.span, "E_MULTI", format!("input port `{name}` is driven inside the design")),
                    });
                }
                kinds.insert(name.clone(), DriverKind::Input);
                if clock.as_deref() != Some(name.as_str()) {
                    ts.inputs.push(Signal { name, width: w });
                }
                continue;
            }
            if aliases.contains(&name) {
                continue;
            }
            let seq = pieces.iter().filter(|p| p.seq).count();
            if seq > 0 && seq < pieces.len() {
                let p = pieces.iter().find(|p| !p.seq).unwrap();
                return Err(ElabError::Unsupported {
                    construct: "mixed sequential and combinational drivers".into(),
                    diag: self.diag(
                        p.span,
                        "E_UNSUPPORTED",
                        format!("`{name}` is driven both by a clocked block and by combinational logic"),
                    ),
                });
            }
            if seq > 0 {
                let next = assemble(&pieces, w, |hi, lo| Expr::slice(Expr::var(&name, w), hi, lo));
                let init = self.inits.get(&name).copied().unwrap_or(Bv::zero(w));
                kinds.insert(name.clone(), DriverKind::Seq);
                states.push(StateVar {
                    name,
                    width: w,
                    init,
                    next,
                });
            } else {
                let expr = assemble(&pieces, w, |hi, lo| Expr::lit(hi - lo + 1, 0));
                kinds.insert(name.clone(), DriverKind::Comb);
                comb.push(CombDef { name, width: w, expr });
            }
        }

        // latches: a combinational value that still reads its own previous value
        let mut latched: BTreeSet<String> = BTreeSet::new();
        for c in &comb {
            for r in c.expr.refs() {
                if let Some(base) = r.strip_suffix(PREV_SUFFIX) {
                    latched.insert(base.to_string());
                }
            }
        }
        if !latched.is_empty() {
            let map: HashMap<String, Expr> = latched
                .iter()
                .map(|n| {
                    let w = self.widths[n];
                    (format!("{n}{PREV_SUFFIX}"), Expr::var(format!("{n}{LATCH_SUFFIX}"), w))
                })
                .collect();
            for c in comb.iter_mut() {
                c.expr = c.expr.substitute(&map);
            }
            for n in &latched {
                let w = self.widths[n];
                kinds.insert(n.clone(), DriverKind::Latch);
                states.push(StateVar {
                    name: format!("{n}{LATCH_SUFFIX}"),
                    width: w,
                    init: Bv::zero(w),
                    next: Expr::var(n.as_str(), w),
                });
            }
        }

        if let Some(clk) = &clock {
            let uses_clock = |e: &Expr| e.mentions(clk) || aliases.iter().any(|a| e.mentions(a));
            if comb.iter().any(|c| uses_clock(&c.expr)) || states.iter().any(|s| uses_clock(&s.next)) {
                return Err(ElabError::Unsupported {
                    construct: "clock used as data".into(),
                    diag: Diagnostic::global("E_UNSUPPORTED", format!("clock `{clk}` is read by design logic")),
                });
            }
        }

        ts.states = states;
        ts.comb = comb;
        ts.clock = clock;
        if let Err(cycle) = ts.sort_comb() {
            let span = cycle
                .first()
                .and_then(|n| self.assign_spans.get(n).and_then(|v| v.first()).copied())
                .or_else(|| cycle.first().and_then(|n| self.decl_spans.get(n).copied()));
            let msg = format!("combinational loop: {}", cycle.join(" -> "));
            let diag = match span {
                Some(s) => self.diag(s, "E_LOOP", msg),
                None => Diagnostic::global("E_LOOP", msg),
            };
            return Err(ElabError::CombinationalLoop { signals: cycle, diag });
        }
        for p in &top.ports {
            if p.dir == Direction::Output {
                ts.outputs.push(Signal {
                    name: p.name.clone(),
                    width: self.widths[&p.name],
                });
            }
        }
        for name in &self.order {
            if name.contains('.') {
                continue;
            }
            let Some(kind) = kinds.get(name) else { continue };
            ts.drivers.insert(
                name.clone(),
                DriverInfo {
                    kind: *kind,
                    decl: self.decl_spans.get(name).copied(),
                    sites: self.assign_spans.get(name).cloned().unwrap_or_default(),
                },
            );
        }
        ts.sites = self.sink.sites.take().map(|t| t.infos).unwrap_or_default();
        debug_assert_eq!(ts.validate(), Ok(()));
        Ok(ts)
    }
}

fn is_lvalue(e: &ast::Expr) -> bool {
    match &e.kind {
        ExprKind::Ident(_) | ExprKind::Index(..) | ExprKind::PartSelect(..) | ExprKind::IndexedPart { .. } => true,
        ExprKind::Concat(items) => items.iter().all(is_lvalue),
        _ => false,
    }
}

/// The edge signal not read by the body (an asynchronous reset is).
fn pick_clock(a: &ast::AlwaysBlock) -> String {
    let ast::Sensitivity::Edges(edges) = &a.sens else {
        unreachable!()
    };
    if edges.len() == 1 {
        return edges[0].1.clone();
    }
    let mut read = BTreeSet::new();
    a.body.walk(&mut |s| match s {
        Stmt::If { cond, .. } => {
            for i in cond.idents() {
                read.insert(i.to_string());
            }
        }
        Stmt::Assign { rhs, .. } => {
            for i in rhs.idents() {
                read.insert(i.to_string());
            }
        }
        Stmt::Case { subject, .. } => {
            for i in subject.idents() {
                read.insert(i.to_string());
            }
        }
        _ => {}
    });
    edges
        .iter()
        .find(|(_, n)| !read.contains(n))
        .unwrap_or(&edges[0])
        .1
        .clone()
}

/// Writes `val` into the targeted bits of `base`.
fn splice(base: Expr, target: &LvalTarget, val: Expr) -> Expr {
    let w = base.width();
    match target {
        LvalTarget::Whole => val,
        LvalTarget::Range(hi, lo) => {
            let mut parts = Vec::new();
            if *hi + 1 < w {
                parts.push(Expr::slice(base.clone(), w - 1, hi + 1));
            }
            parts.push(val);
            if *lo > 0 {
                parts.push(Expr::slice(base, lo - 1, 0));
            }
            Expr::concat(parts)
        }
        LvalTarget::Dynamic(idx, vw) => {
            let mask = Expr::bin(BinOp::Shl, Expr::lit(w, crate::bits::mask(*vw)), idx.clone());
            let shifted = Expr::bin(BinOp::Shl, Expr::zext(val, w), idx.clone());
            Expr::bin(
                BinOp::Or,
                Expr::bin(BinOp::And, base, Expr::not(mask.clone())),
                Expr::bin(BinOp::And, shifted, mask),
            )
        }
    }
}

/// Concatenates pieces over `width` bits, filling gaps with `gap(hi, lo)`.
fn assemble(pieces: &[Piece], width: u32, gap: impl Fn(u32, u32) -> Expr) -> Expr {
    let mut sorted: Vec<&Piece> = pieces.iter().collect();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.hi));
    let mut parts = Vec::new();
    let mut top = width; // next bit to fill is top-1
    for p in sorted {
        if p.hi + 1 < top {
            parts.push(gap(top - 1, p.hi + 1));
        }
        parts.push(p.expr.clone());
        top = p.lo;
    }
    if top > 0 {
        parts.push(gap(top - 1, 0));
    }
    Expr::concat(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::parser::parse_project;

    fn elab(src: &str) -> Result<TransitionSystem, ElabError> {
        let p = SourceProject::new("m").with_file("m.v", src);
        let ms = parse_project(&p).unwrap();
        elaborate(&p, &ms, "m")
    }

    #[test]
    fn register() {
        let ts = elab("module m(input clk, input d, output reg q); always @(posedge clk) q <= d; endmodule").unwrap();
        assert_eq!(ts.states.len(), 1);
        assert_eq!(ts.states[0].name, "q");
        assert_eq!(ts.states[0].next, Expr::var("d", 1));
        assert_eq!(ts.clock.as_deref(), Some("clk"));
        assert_eq!(ts.inputs.len(), 1);
    }

    #[test]
    fn multiple_drivers() {
        let e = elab("module m(input a, b, output w); assign w = a; assign w = b; endmodule").unwrap_err();
        assert!(matches!(e, ElabError::MultipleDrivers { ref signal, .. } if signal == "w"));
    }

    #[test]
    fn comb_loop() {
        let e = elab("module m(input a, output x); wire y; assign x = y & a; assign y = x; endmodule").unwrap_err();
        assert!(matches!(e, ElabError::CombinationalLoop { .. }));
    }

    #[test]
    fn hierarchy_flattens() {
        let ts = elab(
            "module inv(input i, output o); assign o = ~i; endmodule\n\
             module m(input a, output y); wire t; inv u0(.i(a), .o(t)); inv u1(t, y); endmodule",
        )
        .unwrap();
        assert!(ts.comb_def("u0.o").is_some());
        assert!(ts.validate().is_ok());
        let e = elab("module m(input a, output y); nope u(.i(a)); endmodule").unwrap_err();
        assert!(matches!(e, ElabError::Hierarchy(_)));
    }

    #[test]
    fn latch_inferred() {
        let ts = elab("module m(input en, d, output reg q); always @* if (en) q = d; endmodule").unwrap();
        assert!(ts.state("q$latch").is_some());
    }

    #[test]
    fn partial_drivers_combine() {
        let ts = elab(
            "module m(input [3:0] a, b, output [7:0] w); assign w[3:0] = a; assign w[7:4] = b; endmodule",
        )
        .unwrap();
        assert_eq!(
            ts.comb_def("w").unwrap().expr,
            Expr::Concat(vec![Expr::var("b", 4), Expr::var("a", 4)])
        );
    }
}
