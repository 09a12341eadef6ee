// SPDX-License-Identifier: Apache-2.0

//! Surface syntax tree for the supported Verilog subset. Every node carries the
//! [`Span`] it was parsed from so repairs can be expressed as byte-range edits.

use serde::{Deserialize, Serialize};

use super::source::{FileId, Span};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AstModule {
    pub name: String,
    pub file: FileId,
    pub span: Span,
    pub name_span: Span,
    pub params: Vec<ParamDecl>,
    pub ports: Vec<PortDecl>,
    pub decls: Vec<NetDecl>,
    pub items: Vec<Item>,
}

impl AstModule {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn decl(&self, name: &str) -> Option<&NetDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub local: bool,
    pub value: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetKind {
    Wire,
    Reg,
    Logic,
    Integer,
}

impl NetKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NetKind::Wire => "wire",
            NetKind::Reg => "reg",
            NetKind::Logic => "logic",
            NetKind::Integer => "integer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub dir: Direction,
    /// Net kind written on the port itself (`output reg q`), if any.
    pub kind: Option<NetKind>,
    pub range: Option<Range>,
    pub name_span: Span,
    /// Span of the declaration this port name belongs to (may be shared).
    pub decl_span: Span,
    /// Span of the `wire`/`reg` keyword when present.
    pub kind_span: Option<Span>,
    /// Span of the direction keyword.
    pub dir_span: Span,
    pub ansi: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub init: Option<Expr>,
    pub name_span: Span,
    pub kind_span: Span,
    /// Whole declaration statement including the semicolon.
    pub decl_span: Span,
    /// Number of names declared by the statement.
    pub group_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Assign(ContAssign),
    Always(AlwaysBlock),
    Initial(InitialBlock),
    Instance(Instance),
    GenFor(GenFor),
}

impl Item {
    pub fn span(&self) -> Span {
        match self {
            Item::Assign(a) => a.span,
            Item::Always(a) => a.span,
            Item::Initial(i) => i.span,
            Item::Instance(i) => i.span,
            Item::GenFor(g) => g.span,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContAssign {
    pub lhs: Expr,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    Pos,
    Neg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sensitivity {
    /// `@*`, `@(*)`, `always_comb`, or a plain signal list.
    Comb,
    /// Edge-triggered list; the first entry is the clock.
    Edges(Vec<(Edge, String)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlwaysBlock {
    pub sens: Sensitivity,
    pub body: Stmt,
    pub span: Span,
    /// From the `always` keyword through the end of the event control.
    pub header_span: Span,
}

impl AlwaysBlock {
    pub fn clock(&self) -> Option<(Edge, &str)> {
        match &self.sens {
            Sensitivity::Edges(e) => e.first().map(|(edge, s)| (*edge, s.as_str())),
            Sensitivity::Comb => None,
        }
    }

    pub fn is_comb(&self) -> bool {
        matches!(self.sens, Sensitivity::Comb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialBlock {
    pub body: Stmt,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub params: Vec<(Option<String>, Expr)>,
    pub conns: Vec<PortConn>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortConn {
    /// `None` for positional connections.
    pub port: Option<String>,
    pub expr: Option<Expr>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenFor {
    pub var: String,
    pub init: Expr,
    pub cond: Expr,
    pub step: Expr,
    pub label: Option<String>,
    pub items: Vec<Item>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Block {
        stmts: Vec<Stmt>,
        span: Span,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
        span: Span,
    },
    Case {
        kind: CaseKind,
        subject: Expr,
        arms: Vec<CaseArm>,
        default: Option<Box<Stmt>>,
        span: Span,
    },
    Assign {
        lhs: Expr,
        rhs: Expr,
        blocking: bool,
        span: Span,
        /// Span of the `=` / `<=` token.
        op_span: Span,
    },
    For {
        var: String,
        init: Expr,
        cond: Expr,
        step: Expr,
        body: Box<Stmt>,
        span: Span,
    },
    /// System task call such as `$display`; has no hardware meaning.
    SysTask {
        name: String,
        span: Span,
    },
    Null {
        span: Span,
    },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Block { span, .. }
            | Stmt::If { span, .. }
            | Stmt::Case { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::For { span, .. }
            | Stmt::SysTask { span, .. }
            | Stmt::Null { span } => *span,
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block { stmts, .. } => stmts.iter().for_each(|s| s.walk(f)),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                for a in arms {
                    a.body.walk(f);
                }
                if let Some(d) = default {
                    d.walk(f);
                }
            }
            Stmt::For { body, .. } => body.walk(f),
            Stmt::Assign { .. } | Stmt::SysTask { .. } | Stmt::Null { .. } => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExprKind {
    Number(Literal),
    Ident(String),
    /// `e[i]` with a constant or dynamic index.
    Index(Box<Expr>, Box<Expr>),
    /// `e[msb:lsb]`.
    PartSelect(Box<Expr>, Box<Expr>, Box<Expr>),
    /// `e[base +: width]` (`up`) or `e[base -: width]`.
    IndexedPart {
        base: Box<Expr>,
        start: Box<Expr>,
        width: Box<Expr>,
        up: bool,
    },
    Concat(Vec<Expr>),
    Repeat(Box<Expr>, Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn ident(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(s) => Some(s),
            _ => None,
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Number(_) | ExprKind::Ident(_) => {}
            ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::PartSelect(a, b, c) | ExprKind::Ternary(a, b, c) => {
                a.walk(f);
                b.walk(f);
                c.walk(f);
            }
            ExprKind::IndexedPart {
                base, start, width, ..
            } => {
                base.walk(f);
                start.walk(f);
                width.walk(f);
            }
            ExprKind::Concat(items) => items.iter().for_each(|e| e.walk(f)),
            ExprKind::Repeat(n, items) => {
                n.walk(f);
                items.iter().for_each(|e| e.walk(f));
            }
            ExprKind::Unary(_, e) => e.walk(f),
            ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    /// Names referenced anywhere inside the expression.
    pub fn idents(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ExprKind::Ident(n) = &e.kind {
                out.push(n.as_str());
            }
        });
        out
    }
}

/// Parsed number. Unsized literals are 32 bits wide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub size: Option<u32>,
    /// `b`, `o`, `d`, `h`, or `None` for a plain decimal.
    pub base: Option<char>,
    pub value: u128,
    /// Bits written as `x`, `z` or `?`.
    pub wild: u128,
    pub has_z: bool,
    /// SystemVerilog fill literal (`'0`, `'1`, `'x`).
    pub fill: Option<char>,
}

impl Literal {
    pub fn is_unsized(&self) -> bool {
        self.size.is_none()
    }

    pub fn width(&self) -> u32 {
        self.size.unwrap_or(32)
    }

    /// Bits needed to represent the value (at least 1).
    pub fn min_width(&self) -> u32 {
        (128 - self.value.leading_zeros()).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Plus,
    Neg,
    Not,
    LogicNot,
    RedAnd,
    RedNand,
    RedOr,
    RedNor,
    RedXor,
    RedXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Plus => "+",
            UnaryOp::Neg => "-",
            UnaryOp::Not => "~",
            UnaryOp::LogicNot => "!",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedXnor => "~^",
        }
    }

    pub fn is_reduction(self) -> bool {
        matches!(
            self,
            UnaryOp::RedAnd
                | UnaryOp::RedNand
                | UnaryOp::RedOr
                | UnaryOp::RedNor
                | UnaryOp::RedXor
                | UnaryOp::RedXnor
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Pow,
    And,
    Or,
    Xor,
    Xnor,
    Shl,
    Shr,
    AShl,
    AShr,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    Lt,
    Le,
    Gt,
    Ge,
    LogicAnd,
    LogicOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Rem => "%",
            Pow => "**",
            And => "&",
            Or => "|",
            Xor => "^",
            Xnor => "~^",
            Shl => "<<",
            Shr => ">>",
            AShl => "<<<",
            AShr => ">>>",
            Eq => "==",
            Ne => "!=",
            CaseEq => "===",
            CaseNe => "!==",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            LogicAnd => "&&",
            LogicOr => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Pow => 12,
            Mul | Div | Rem => 11,
            Add | Sub => 10,
            Shl | Shr | AShl | AShr => 9,
            Lt | Le | Gt | Ge => 8,
            Eq | Ne | CaseEq | CaseNe => 7,
            And => 6,
            Xor | Xnor => 5,
            Or => 4,
            LogicAnd => 3,
            LogicOr => 2,
        }
    }

    pub fn is_comparison(self) -> bool {
        use BinaryOp::*;
        matches!(self, Eq | Ne | CaseEq | CaseNe | Lt | Le | Gt | Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::LogicAnd | BinaryOp::LogicOr)
    }

    pub fn is_shift(self) -> bool {
        use BinaryOp::*;
        matches!(self, Shl | Shr | AShl | AShr | Pow)
    }
}
