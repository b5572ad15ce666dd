use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

/// Comparison operator used by branch conditions and counter constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Rel {
    pub fn negate(self) -> Rel {
        match self {
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Gt => Rel::Le,
            Rel::Ge => Rel::Lt,
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
        }
    }

    /// The relation obtained by swapping operands (`a < b` iff `b > a`).
    pub fn swap(self) -> Rel {
        match self {
            Rel::Lt => Rel::Gt,
            Rel::Le => Rel::Ge,
            Rel::Gt => Rel::Lt,
            Rel::Ge => Rel::Le,
            r => r,
        }
    }

    pub fn holds<T: Ord>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Gt => lhs > rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
            Rel::Eq => "==",
            Rel::Ne => "!=",
        }
    }
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(BigInt),
    Var(String),
    /// Read of an input array element.
    Read(String, Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Const(BigInt::from(v))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Scalar variables read by this expression, in first-occurrence order.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Read(_, idx) => idx.collect_vars(out),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Rename scalar variable reads according to `f`.
    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(c.clone()),
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Read(a, idx) => Expr::Read(a.clone(), Box::new(idx.rename(f))),
            Expr::Neg(e) => Expr::Neg(Box::new(e.rename(f))),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.rename(f), b.rename(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul, ..) => 2,
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Read(a, idx) => write!(f, "{a}[{idx}]"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                };
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

/// An atomic comparison `lhs rel rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cmp {
    pub rel: Rel,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Cmp {
    pub fn new(lhs: Expr, rel: Rel, rhs: Expr) -> Cmp {
        Cmp { rel, lhs, rhs }
    }

    pub fn negate(&self) -> Cmp {
        Cmp { rel: self.rel.negate(), lhs: self.lhs.clone(), rhs: self.rhs.clone() }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.rel, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    Cmp(Cmp),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

impl Cond {
    fn precedence(&self) -> u8 {
        match self {
            Cond::Or(..) => 1,
            Cond::And(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Cmp(c) => write!(f, "{c}"),
            Cond::Not(c) => write!(f, "!({c})"),
            Cond::And(a, b) | Cond::Or(a, b) => {
                let p = self.precedence();
                let sym = if p == 1 { "||" } else { "&&" };
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Decl { name: String, init: Expr },
    Assign { name: String, value: Expr },
    If { cond: Cond, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Cond, body: Vec<Stmt> },
    For { init: Option<Box<Stmt>>, cond: Cond, step: Option<Box<Stmt>>, body: Vec<Stmt> },
    Target,
}

/// A declared input: a scalar (`len == None`) or an array of fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDecl {
    pub name: String,
    pub len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub inputs: Vec<InputDecl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn input(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|d| d.name == name)
    }

    pub fn loop_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::If { then_body, else_body, .. } => {
                        count(then_body) + else_body.as_deref().map_or(0, count)
                    }
                    Stmt::While { body, .. } | Stmt::For { body, .. } => 1 + count(body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.body)
    }

    pub fn target_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Target => 1,
                    Stmt::If { then_body, else_body, .. } => {
                        count(then_body) + else_body.as_deref().map_or(0, count)
                    }
                    Stmt::While { body, .. } | Stmt::For { body, .. } => count(body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.body)
    }

    /// Scalar program variables in declaration order.
    pub fn scalar_vars(&self) -> Vec<String> {
        fn walk(stmts: &[Stmt], out: &mut Vec<String>) {
            for s in stmts {
                match s {
                    Stmt::Decl { name, .. } => {
                        if !out.contains(name) {
                            out.push(name.clone());
                        }
                    }
                    Stmt::If { then_body, else_body, .. } => {
                        walk(then_body, out);
                        if let Some(e) = else_body {
                            walk(e, out);
                        }
                    }
                    Stmt::While { body, .. } => walk(body, out),
                    Stmt::For { init, body, .. } => {
                        if let Some(i) = init {
                            walk(std::slice::from_ref(i), out);
                        }
                        walk(body, out);
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}

fn write_simple(f: &mut fmt::Formatter<'_>, s: &Stmt) -> fmt::Result {
    match s {
        Stmt::Decl { name, init } => write!(f, "int {name} = {init}"),
        Stmt::Assign { name, value } => write!(f, "{name} = {value}"),
        _ => Err(fmt::Error),
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], indent: usize) -> fmt::Result {
    for s in stmts {
        write_stmt(f, s, indent)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, s: &Stmt, indent: usize) -> fmt::Result {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Decl { .. } | Stmt::Assign { .. } => {
            f.write_str(&pad)?;
            write_simple(f, s)?;
            writeln!(f, ";")
        }
        Stmt::Target => writeln!(f, "{pad}target;"),
        Stmt::If { cond, then_body, else_body } => {
            writeln!(f, "{pad}if ({cond}) {{")?;
            write_block(f, then_body, indent + 1)?;
            match else_body {
                Some(e) => {
                    writeln!(f, "{pad}}} else {{")?;
                    write_block(f, e, indent + 1)?;
                    writeln!(f, "{pad}}}")
                }
                None => writeln!(f, "{pad}}}"),
            }
        }
        Stmt::While { cond, body } => {
            writeln!(f, "{pad}while ({cond}) {{")?;
            write_block(f, body, indent + 1)?;
            writeln!(f, "{pad}}}")
        }
        Stmt::For { init, cond, step, body } => {
            write!(f, "{pad}for (")?;
            if let Some(i) = init {
                write_simple(f, i)?;
            }
            write!(f, "; {cond}; ")?;
            if let Some(s) = step {
                write_simple(f, s)?;
            }
            writeln!(f, ") {{")?;
            write_block(f, body, indent + 1)?;
            writeln!(f, "{pad}}}")
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.inputs {
            match d.len {
                Some(n) => writeln!(f, "input int {}[{n}];", d.name)?,
                None => writeln!(f, "input int {};", d.name)?,
            }
        }
        write_block(f, &self.body, 0)
    }
}
