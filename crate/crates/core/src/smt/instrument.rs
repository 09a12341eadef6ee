// SPDX-License-Identifier: Apache-2.0

//! Repair templates: rewrite a transition system so that each candidate
//! change is selected by free variables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bv;
use crate::rtl::ir::{CombDef, Expr, Signal, SiteId, SiteInfo, SiteKind, StateVar, TransitionSystem};

/// Cap on the literals of a synthesized guard product.
pub const MAX_GUARD_LITERALS: usize = 4;

pub const SHIFT_SUFFIX: &str = "$shift";
pub const PRE_SUFFIX: &str = "$pre";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    ReplaceLiteral,
    AddGuard,
    ConditionalOverwrite,
    CycleShift,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::ReplaceLiteral,
        TemplateKind::AddGuard,
        TemplateKind::ConditionalOverwrite,
        TemplateKind::CycleShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::ReplaceLiteral => "replace_literal",
            TemplateKind::AddGuard => "add_guard",
            TemplateKind::ConditionalOverwrite => "conditional_overwrite",
            TemplateKind::CycleShift => "cycle_shift",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown repair template `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Site(SiteId),
    Signal(String),
}

impl Target {
    /// `#3` or `site:3` name a site, anything else a signal.
    pub fn parse(s: &str) -> Target {
        let s = s.trim();
        let id = s.strip_prefix('#').or_else(|| s.strip_prefix("site:"));
        match id.and_then(|d| d.trim().parse().ok()) {
            Some(id) => Target::Site(id),
            None => Target::Signal(s.to_string()),
        }
    }

    fn key(&self) -> String {
        match self {
            Target::Site(id) => format!("s{id}"),
            Target::Signal(n) => n.clone(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Site(id) => write!(f, "#{id}"),
            Target::Signal(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTemplate {
    pub kind: TemplateKind,
    pub targets: Vec<Target>,
}

impl RepairTemplate {
    pub fn new(kind: TemplateKind, targets: Vec<Target>) -> Self {
        RepairTemplate { kind, targets }
    }

    /// Every literal (or condition) site of the design as targets.
    pub fn all_sites(kind: TemplateKind, ts: &TransitionSystem) -> Self {
        let want = if kind == TemplateKind::AddGuard {
            SiteKind::Condition
        } else {
            SiteKind::Literal
        };
        let targets = ts
            .sites
            .values()
            .filter(|s| s.kind == want)
            .map(|s| Target::Site(s.id))
            .collect();
        RepairTemplate { kind, targets }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("repair template has no targets")]
    NoTargets,
    #[error("target `{0}` not found: {1}")]
    TargetNotFound(String, String),
    #[error("instrumentation creates a combinational loop through {}", .0.join(" -> "))]
    CombinationalLoop(Vec<String>),
    #[error("instrumented design is malformed: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    ConstBits(u32),
    BoolSelect,
    PhiSelect,
}

/// One literal of a synthesized guard product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardLiteral {
    /// Name in the scope of the module that holds the site.
    pub local: String,
    pub width: u32,
    pub enable: String,
    pub polarity: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteDetail {
    Literal {
        info: SiteInfo,
        var: String,
        /// Bits of the literal that reach the design.
        observed_width: u32,
    },
    Guard {
        info: SiteInfo,
        mode: String,
        literals: Vec<GuardLiteral>,
    },
    Overwrite {
        signal: String,
        width: u32,
        sequential: bool,
        value: String,
        literals: Vec<GuardLiteral>,
    },
    Shift {
        signal: String,
        was_state: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedSite {
    pub target: Target,
    pub flag: String,
    pub detail: SiteDetail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeVarMap {
    pub template: TemplateKind,
    /// Free variable name to the target it belongs to and its kind.
    pub vars: BTreeMap<String, (Target, VarKind)>,
    /// Target key to its activation flag.
    pub change_flags: BTreeMap<String, String>,
    pub sites: Vec<InstrumentedSite>,
}

impl FreeVarMap {
    fn new(template: TemplateKind) -> Self {
        FreeVarMap {
            template,
            vars: BTreeMap::new(),
            change_flags: BTreeMap::new(),
            sites: Vec::new(),
        }
    }

    pub fn flags(&self) -> Vec<&str> {
        self.sites.iter().map(|s| s.flag.as_str()).collect()
    }

    pub fn width(&self, var: &str) -> Option<u32> {
        self.vars.get(var).map(|(_, k)| match k {
            VarKind::ConstBits(w) => *w,
            VarKind::BoolSelect | VarKind::PhiSelect => 1,
        })
    }

    /// Values for every free variable, zero where `model` is silent.
    pub fn assignment(&self, model: &BTreeMap<String, Bv>) -> HashMap<String, Bv> {
        self.vars
            .keys()
            .map(|n| {
                let w = self.width(n).unwrap_or(1);
                let v = model.get(n).map(|v| v.resize(w)).unwrap_or(Bv::zero(w));
                (n.clone(), v)
            })
            .collect()
    }

    /// All flags off: the instrumented design behaves like the original.
    pub fn identity(&self) -> HashMap<String, Bv> {
        self.assignment(&BTreeMap::new())
    }

    fn add_var(&mut self, ts: &mut TransitionSystem, name: String, target: &Target, kind: VarKind) -> Expr {
        let width = match kind {
            VarKind::ConstBits(w) => w,
            _ => 1,
        };
        ts.free_vars.push(Signal {
            name: name.clone(),
            width,
        });
        self.vars.insert(name.clone(), (target.clone(), kind));
        Expr::var(name, width)
    }

    fn add_flag(&mut self, ts: &mut TransitionSystem, target: &Target, kind: VarKind) -> (String, Expr) {
        let name = format!("$flag.{}", target.key());
        let e = self.add_var(ts, name.clone(), target, kind);
        self.change_flags.insert(target.key(), name.clone());
        (name, e)
    }
}

fn prefix_of(name: &str) -> &str {
    match name.rfind('.') {
        Some(i) => &name[..=i],
        None => "",
    }
}

/// Every signal `e` reads, directly or through combinational definitions.
fn fan_in(ts: &TransitionSystem, roots: &BTreeSet<String>) -> BTreeSet<String> {
    let comb: HashMap<&str, &Expr> = ts.comb.iter().map(|c| (c.name.as_str(), &c.expr)).collect();
    let mut seen = BTreeSet::new();
    let mut work: Vec<String> = roots.iter().cloned().collect();
    while let Some(n) = work.pop() {
        if !seen.insert(n.clone()) {
            continue;
        }
        if let Some(e) = comb.get(n.as_str()) {
            work.extend(e.refs());
        }
    }
    seen
}

fn is_plain(local: &str) -> bool {
    !local.is_empty() && !local.contains('.') && !local.contains('$')
}

/// Guard literal candidates for definitions named in `defs`: signals the
/// definitions read first, then the rest of their fan-in, then top-level
/// inputs. Candidates must exist under every prefix involved.
fn guard_candidates(ts: &TransitionSystem, defs: &BTreeSet<String>, exclude: &BTreeSet<String>) -> Vec<(String, u32)> {
    let prefixes: BTreeSet<&str> = defs.iter().map(|d| prefix_of(d)).collect();
    let first = *prefixes.iter().next().unwrap_or(&"");
    let exprs: Vec<&Expr> = defs
        .iter()
        .filter_map(|d| ts.comb_def(d).map(|c| &c.expr).or_else(|| ts.state(d).map(|s| &s.next)))
        .collect();
    let direct: BTreeSet<String> = exprs.iter().flat_map(|e| e.refs()).collect();
    let all = fan_in(ts, &direct);
    let free: BTreeSet<&str> = ts.free_vars.iter().map(|v| v.name.as_str()).collect();
    let clock = ts.clock.as_deref().unwrap_or("");
    let mut groups: [Vec<(String, u32)>; 3] = Default::default();
    let mut taken = BTreeSet::new();
    let tops: Vec<String> = if first.is_empty() {
        ts.inputs.iter().map(|i| i.name.clone()).collect()
    } else {
        Vec::new()
    };
    let sources = direct
        .iter()
        .map(|n| (0, n))
        .chain(all.iter().map(|n| (1, n)))
        .chain(tops.iter().map(|n| (2, n)));
    for (g, full) in sources {
        if free.contains(full.as_str()) || exclude.contains(full) || full == clock {
            continue;
        }
        let Some(local) = full.strip_prefix(first) else { continue };
        if !is_plain(local) || taken.contains(local) {
            continue;
        }
        let Some(width) = ts.width_of(full) else { continue };
        let everywhere = prefixes.iter().all(|p| {
            let n = format!("{p}{local}");
            ts.width_of(&n) == Some(width) && !exclude.contains(&n)
        });
        if everywhere {
            taken.insert(local.to_string());
            groups[g].push((local.to_string(), width));
        }
    }
    let mut out = Vec::new();
    for mut g in groups {
        g.sort_by(|a, b| (a.1 != 1, &a.0).cmp(&(b.1 != 1, &b.0)));
        out.extend(g);
    }
    out.truncate(MAX_GUARD_LITERALS);
    out
}

fn guard_literals(
    fvm: &mut FreeVarMap,
    ts: &mut TransitionSystem,
    target: &Target,
    cands: &[(String, u32)],
) -> Vec<GuardLiteral> {
    cands
        .iter()
        .enumerate()
        .map(|(i, (local, width))| {
            let enable = format!("$en{i}.{}", target.key());
            let polarity = format!("$pol{i}.{}", target.key());
            fvm.add_var(ts, enable.clone(), target, VarKind::BoolSelect);
            fvm.add_var(ts, polarity.clone(), target, VarKind::BoolSelect);
            GuardLiteral {
                local: local.clone(),
                width: *width,
                enable,
                polarity,
            }
        })
        .collect()
}

/// Conjunction of the enabled literals under `prefix`.
fn product(lits: &[GuardLiteral], prefix: &str) -> Expr {
    let mut acc = Expr::bool_lit(true);
    for l in lits {
        let x = Expr::truthy(Expr::var(format!("{prefix}{}", l.local), l.width));
        let signed = Expr::mux(Expr::var(&l.polarity, 1), x.clone(), Expr::not(x), None);
        let term = Expr::mux(Expr::var(&l.enable, 1), signed, Expr::bool_lit(true), None);
        acc = Expr::bin(crate::rtl::ir::BinOp::And, acc, term);
    }
    acc
}

/// Applies `f` to every state next-function and combinational definition,
/// passing the definition name.
fn map_defs(ts: &mut TransitionSystem, f: &mut dyn FnMut(&str, &Expr) -> Expr) {
    for s in &mut ts.states {
        s.next = f(&s.name, &s.next);
    }
    for c in &mut ts.comb {
        c.expr = f(&c.name, &c.expr);
    }
}

fn defs_with(ts: &TransitionSystem, pred: &dyn Fn(&Expr) -> bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in &ts.states {
        let mut hit = false;
        s.next.visit(&mut |e| hit |= pred(e));
        if hit {
            out.insert(s.name.clone());
        }
    }
    for c in &ts.comb {
        let mut hit = false;
        c.expr.visit(&mut |e| hit |= pred(e));
        if hit {
            out.insert(c.name.clone());
        }
    }
    out
}

fn not_found(t: &Target, why: &str) -> InstrumentError {
    InstrumentError::TargetNotFound(t.to_string(), why.to_string())
}

fn site_info<'a>(ts: &'a TransitionSystem, t: &Target, kind: SiteKind) -> Result<&'a SiteInfo, InstrumentError> {
    let Target::Site(id) = t else {
        return Err(not_found(t, "expected a site reference"));
    };
    match ts.sites.get(id) {
        Some(i) if i.kind == kind => Ok(i),
        Some(_) => Err(not_found(
            t,
            if kind == SiteKind::Literal {
                "site is not a literal"
            } else {
                "site is not a condition"
            },
        )),
        None => Err(not_found(t, "no such site")),
    }
}

/// Rewrites `ts` so that every target of `template` can change under its own
/// activation flag. All flags off leaves the behaviour unchanged.
pub fn instrument(ts: &TransitionSystem, template: &RepairTemplate) -> Result<(TransitionSystem, FreeVarMap), InstrumentError> {
    if template.targets.is_empty() {
        return Err(InstrumentError::NoTargets);
    }
    let mut out = ts.clone();
    let mut fvm = FreeVarMap::new(template.kind);
    let mut seen = BTreeSet::new();
    for t in &template.targets {
        if !seen.insert(t.clone()) {
            continue;
        }
        match template.kind {
            TemplateKind::ReplaceLiteral => replace_literal(&mut out, &mut fvm, t)?,
            TemplateKind::AddGuard => add_guard(&mut out, &mut fvm, t)?,
            TemplateKind::ConditionalOverwrite => overwrite(&mut out, &mut fvm, t)?,
            TemplateKind::CycleShift => cycle_shift(&mut out, &mut fvm, t)?,
        }
    }
    out.sort_comb().map_err(InstrumentError::CombinationalLoop)?;
    out.validate().map_err(InstrumentError::Malformed)?;
    Ok((out, fvm))
}

fn replace_literal(ts: &mut TransitionSystem, fvm: &mut FreeVarMap, t: &Target) -> Result<(), InstrumentError> {
    let info = site_info(ts, t, SiteKind::Literal)?.clone();
    let id = info.id;
    let mut observed = 0;
    let is_site = |e: &Expr| matches!(e, Expr::Literal { site: Some(s), .. } if *s == id);
    for d in defs_with(ts, &is_site) {
        let e = ts.comb_def(&d).map(|c| &c.expr).or_else(|| ts.state(&d).map(|s| &s.next)).unwrap();
        e.visit(&mut |x| {
            if is_site(x) {
                observed = observed.max(x.width());
            }
        });
    }
    if observed == 0 {
        return Err(not_found(t, "literal does not reach the elaborated design"));
    }
    let width = info.width;
    let (flag_name, flag) = fvm.add_flag(ts, t, VarKind::BoolSelect);
    let var_name = format!("$lit.{}", t.key());
    let var = fvm.add_var(ts, var_name.clone(), t, VarKind::ConstBits(width));
    map_defs(ts, &mut |_, e| {
        e.rewrite(&mut |x| {
            if !is_site(x) {
                return None;
            }
            let w = x.width();
            let fresh = if w <= width {
                Expr::slice(var.clone(), w - 1, 0)
            } else {
                Expr::zext(var.clone(), w)
            };
            Some(Expr::mux(flag.clone(), fresh, x.clone(), None))
        })
    });
    fvm.sites.push(InstrumentedSite {
        target: t.clone(),
        flag: flag_name,
        detail: SiteDetail::Literal {
            info,
            var: var_name,
            observed_width: observed.min(width),
        },
    });
    Ok(())
}

fn add_guard(ts: &mut TransitionSystem, fvm: &mut FreeVarMap, t: &Target) -> Result<(), InstrumentError> {
    let info = site_info(ts, t, SiteKind::Condition)?.clone();
    let id = info.id;
    let is_site = |e: &Expr| matches!(e, Expr::Ternary { site: Some(s), .. } if *s == id);
    let defs = defs_with(ts, &is_site);
    if defs.is_empty() {
        return Err(not_found(t, "condition does not reach the elaborated design"));
    }
    let exclude: BTreeSet<String> = defs.iter().filter(|d| ts.comb_def(d).is_some()).cloned().collect();
    let cands = guard_candidates(ts, &defs, &exclude);
    let (flag_name, flag) = fvm.add_flag(ts, t, VarKind::BoolSelect);
    let mode_name = format!("$mode.{}", t.key());
    let mode = fvm.add_var(ts, mode_name.clone(), t, VarKind::ConstBits(2));
    let literals = guard_literals(fvm, ts, t, &cands);
    let or_mode = Expr::slice(mode.clone(), 0, 0);
    let negate = Expr::slice(mode, 1, 1);
    map_defs(ts, &mut |name, e| {
        if !defs.contains(name) {
            return e.clone();
        }
        let s = product(&literals, prefix_of(name));
        e.rewrite(&mut |x| match x {
            Expr::Ternary {
                cond,
                then,
                els,
                site: Some(sid),
            } if *sid == id => {
                let c = (**cond).clone();
                let cc = Expr::mux(negate.clone(), Expr::not(c.clone()), c.clone(), None);
                let or = Expr::bin(crate::rtl::ir::BinOp::Or, cc.clone(), s.clone());
                let and = Expr::bin(crate::rtl::ir::BinOp::And, cc, s.clone());
                let guarded = Expr::mux(or_mode.clone(), or, and, None);
                let new_cond = Expr::mux(flag.clone(), guarded, c, None);
                Some(Expr::Ternary {
                    cond: Box::new(new_cond),
                    then: then.clone(),
                    els: els.clone(),
                    site: Some(*sid),
                })
            }
            _ => None,
        })
    });
    fvm.sites.push(InstrumentedSite {
        target: t.clone(),
        flag: flag_name,
        detail: SiteDetail::Guard {
            info,
            mode: mode_name,
            literals,
        },
    });
    Ok(())
}

fn driven_signal<'a>(ts: &TransitionSystem, t: &'a Target) -> Result<(&'a str, u32, bool), InstrumentError> {
    let Target::Signal(name) = t else {
        return Err(not_found(t, "expected a signal name"));
    };
    if name.contains('$') {
        return Err(not_found(t, "internal signal"));
    }
    if let Some(s) = ts.state(name) {
        return Ok((name, s.width, true));
    }
    if let Some(c) = ts.comb_def(name) {
        return Ok((name, c.width, false));
    }
    if ts.is_input(name) {
        return Err(not_found(t, "inputs cannot be repaired"));
    }
    Err(not_found(t, "no such signal"))
}

fn overwrite(ts: &mut TransitionSystem, fvm: &mut FreeVarMap, t: &Target) -> Result<(), InstrumentError> {
    let (name, width, sequential) = driven_signal(ts, t)?;
    let name = name.to_string();
    let defs: BTreeSet<String> = [name.clone()].into();
    let exclude = if sequential { BTreeSet::new() } else { defs.clone() };
    let cands = guard_candidates(ts, &defs, &exclude);
    let (flag_name, flag) = fvm.add_flag(ts, t, VarKind::BoolSelect);
    let value_name = format!("$val.{}", t.key());
    let value = fvm.add_var(ts, value_name.clone(), t, VarKind::ConstBits(width));
    let literals = guard_literals(fvm, ts, t, &cands);
    let cond = Expr::bin(crate::rtl::ir::BinOp::And, flag, product(&literals, prefix_of(&name)));
    if sequential {
        let s = ts.states.iter_mut().find(|s| s.name == name).unwrap();
        s.next = Expr::mux(cond, value, s.next.clone(), None);
    } else {
        let c = ts.comb.iter_mut().find(|c| c.name == name).unwrap();
        c.expr = Expr::mux(cond, value, c.expr.clone(), None);
    }
    fvm.sites.push(InstrumentedSite {
        target: t.clone(),
        flag: flag_name,
        detail: SiteDetail::Overwrite {
            signal: name,
            width,
            sequential,
            value: value_name,
            literals,
        },
    });
    Ok(())
}

fn cycle_shift(ts: &mut TransitionSystem, fvm: &mut FreeVarMap, t: &Target) -> Result<(), InstrumentError> {
    let (name, width, was_state) = driven_signal(ts, t)?;
    let name = name.to_string();
    let (flag_name, phi) = fvm.add_flag(ts, t, VarKind::PhiSelect);
    let shadow = format!("{name}{SHIFT_SUFFIX}");
    if was_state {
        // y := phi ? next(y) : y$shift, with y$shift holding the old register
        let pos = ts.states.iter().position(|s| s.name == name).unwrap();
        let st = ts.states.remove(pos);
        let muxed = Expr::mux(phi, st.next.clone(), Expr::var(&shadow, width), None);
        ts.states.insert(
            pos,
            StateVar {
                name: shadow,
                width,
                init: st.init,
                next: st.next,
            },
        );
        ts.comb.push(CombDef {
            name: name.clone(),
            width,
            expr: muxed,
        });
    } else {
        // y := phi ? y$shift : y$pre, with y$shift registering y$pre
        let pre = format!("{name}{PRE_SUFFIX}");
        let c = ts.comb.iter_mut().find(|c| c.name == name).unwrap();
        let expr = std::mem::replace(
            &mut c.expr,
            Expr::mux(phi, Expr::var(&shadow, width), Expr::var(&pre, width), None),
        );
        ts.comb.push(CombDef {
            name: pre.clone(),
            width,
            expr,
        });
        ts.states.push(StateVar {
            name: shadow,
            width,
            init: Bv::zero(width),
            next: Expr::var(pre, width),
        });
    }
    if let Err(cycle) = ts.sort_comb() {
        return Err(InstrumentError::CombinationalLoop(cycle));
    }
    fvm.sites.push(InstrumentedSite {
        target: t.clone(),
        flag: flag_name,
        detail: SiteDetail::Shift { signal: name, was_state },
    });
    Ok(())
}
