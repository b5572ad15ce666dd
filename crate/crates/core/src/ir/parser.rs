//! Recursive-descent parser for LoopNav-IR.

use std::collections::BTreeSet;

use num_bigint::BigInt;

use super::ast::{BinOp, Cmp, Cond, Expr, InputDecl, Program, Rel, Stmt};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCTS: [&str; 25] = [
    "++", "--", "+=", "-=", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "{", "}", "[", "]", ";",
    "=", "+", "-", "*", "<", ">", "!", ",",
];

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            col += 2;
            loop {
                match chars.get(i) {
                    None => return Err(Error::Syntax { line, col, msg: "unterminated comment".into() }),
                    Some('*') if chars.get(i + 1) == Some(&'/') => {
                        i += 2;
                        col += 2;
                        break;
                    }
                    Some('\n') => {
                        i += 1;
                        line += 1;
                        col = 1;
                    }
                    Some(_) => {
                        i += 1;
                        col += 1;
                    }
                }
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push(Token { tok: Tok::Int(text.parse().unwrap()), line: start_line, col: start_col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let text: String = chars[start..i].iter().collect();
            toks.push(Token { tok: Tok::Ident(text), line: start_line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                toks.push(Token { tok: Tok::Punct(p), line: start_line, col: start_col });
            }
            None => {
                return Err(Error::Syntax { line, col, msg: format!("unexpected character `{c}`") })
            }
        }
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

const KEYWORDS: [&str; 7] = ["int", "input", "if", "else", "while", "for", "target"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    inputs: Vec<InputDecl>,
    scalars: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, p: &str) -> Result<()> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{p}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn is_array(&self, name: &str) -> bool {
        self.inputs.iter().any(|d| d.name == name && d.len.is_some())
    }

    fn is_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|d| d.name == name)
    }

    fn program(&mut self) -> Result<Program> {
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            if self.is_kw("input") {
                self.input_decl()?;
            } else {
                self.stmt(&mut body)?;
            }
        }
        Ok(Program { inputs: std::mem::take(&mut self.inputs), body })
    }

    fn input_decl(&mut self) -> Result<()> {
        self.expect_kw("input")?;
        self.expect_kw("int")?;
        let name = self.ident()?;
        if self.is_input(&name) || self.scalars.contains(&name) {
            return self.err(format!("`{name}` declared twice"));
        }
        let len = if self.is_punct("[") {
            self.bump();
            let n = match self.bump() {
                Tok::Int(n) => n,
                _ => return self.err("array length must be an integer constant"),
            };
            self.expect("]")?;
            let n: usize = n.try_into().or_else(|_| self.err("array length too large"))?;
            Some(n)
        } else {
            None
        };
        self.expect(";")?;
        self.inputs.push(InputDecl { name, len });
        Ok(())
    }

    fn block(&mut self) -> Result<Vec<Stmt>> {
        let mut out = Vec::new();
        if self.is_punct("{") {
            self.bump();
            while !self.is_punct("}") {
                if *self.peek() == Tok::Eof {
                    return self.err("unterminated block");
                }
                self.stmt(&mut out)?;
            }
            self.bump();
        } else {
            self.stmt(&mut out)?;
        }
        Ok(out)
    }

    fn stmt(&mut self, out: &mut Vec<Stmt>) -> Result<()> {
        if self.is_punct("{") {
            out.extend(self.block()?);
            return Ok(());
        }
        if self.is_kw("input") {
            return self.err("input declarations are only allowed at top level");
        }
        if self.is_kw("target") {
            self.bump();
            self.expect(";")?;
            out.push(Stmt::Target);
            return Ok(());
        }
        if self.is_kw("if") {
            self.bump();
            self.expect("(")?;
            let cond = self.cond()?;
            self.expect(")")?;
            let then_body = self.block()?;
            let else_body = if self.is_kw("else") {
                self.bump();
                Some(self.block()?)
            } else {
                None
            };
            out.push(Stmt::If { cond, then_body, else_body });
            return Ok(());
        }
        if self.is_kw("while") {
            self.bump();
            self.expect("(")?;
            let cond = self.cond()?;
            self.expect(")")?;
            let body = self.block()?;
            out.push(Stmt::While { cond, body });
            return Ok(());
        }
        if self.is_kw("for") {
            self.bump();
            self.expect("(")?;
            let init = if self.is_punct(";") { None } else { Some(Box::new(self.simple()?)) };
            self.expect(";")?;
            let cond = self.cond()?;
            self.expect(";")?;
            let step = if self.is_punct(")") { None } else { Some(Box::new(self.simple()?)) };
            self.expect(")")?;
            let body = self.block()?;
            out.push(Stmt::For { init, cond, step, body });
            return Ok(());
        }
        let s = self.simple()?;
        self.expect(";")?;
        out.push(s);
        Ok(())
    }

    /// Declarations, assignments and the `++`/`--`/`+=`/`-=` sugar.
    fn simple(&mut self) -> Result<Stmt> {
        if self.is_kw("int") {
            self.bump();
            let name = self.ident()?;
            if self.is_input(&name) {
                return self.err(format!("`{name}` is an input and cannot be redeclared"));
            }
            self.expect("=")?;
            let init = self.expr()?;
            self.scalars.insert(name.clone());
            return Ok(Stmt::Decl { name, init });
        }
        if self.is_punct("++") || self.is_punct("--") {
            let op = if self.is_punct("++") { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let name = self.assign_target()?;
            let value = Expr::bin(op, Expr::Var(name.clone()), Expr::int(1));
            return Ok(Stmt::Assign { name, value });
        }
        let name = self.assign_target()?;
        let value = match self.bump() {
            Tok::Punct("=") => self.expr()?,
            Tok::Punct("++") => Expr::bin(BinOp::Add, Expr::Var(name.clone()), Expr::int(1)),
            Tok::Punct("--") => Expr::bin(BinOp::Sub, Expr::Var(name.clone()), Expr::int(1)),
            Tok::Punct("+=") => Expr::bin(BinOp::Add, Expr::Var(name.clone()), self.expr()?),
            Tok::Punct("-=") => Expr::bin(BinOp::Sub, Expr::Var(name.clone()), self.expr()?),
            Tok::Punct("[") => {
                self.pos -= 1;
                return self.err("array writes are not supported");
            }
            _ => {
                self.pos -= 1;
                return self.err("expected assignment");
            }
        };
        Ok(Stmt::Assign { name, value })
    }

    fn assign_target(&mut self) -> Result<String> {
        let name = self.ident()?;
        if self.is_input(&name) {
            self.pos -= 1;
            return self.err(format!("input `{name}` cannot be assigned"));
        }
        if !self.scalars.contains(&name) {
            self.pos -= 1;
            return self.err(format!("undeclared variable `{name}`"));
        }
        Ok(name)
    }

    fn cond(&mut self) -> Result<Cond> {
        let mut lhs = self.cond_and()?;
        while self.is_punct("||") {
            self.bump();
            let rhs = self.cond_and()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> Result<Cond> {
        let mut lhs = self.cond_unary()?;
        while self.is_punct("&&") {
            self.bump();
            let rhs = self.cond_unary()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_unary(&mut self) -> Result<Cond> {
        if self.is_punct("!") {
            self.bump();
            return Ok(Cond::Not(Box::new(self.cond_unary()?)));
        }
        if self.is_punct("(") {
            // `(` opens either a nested condition or a parenthesized operand.
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.cond() {
                if self.is_punct(")") {
                    self.bump();
                    let next_is_operator = matches!(self.peek(), Tok::Punct(p)
                        if ["<", "<=", ">", ">=", "==", "!=", "+", "-", "*"].contains(p));
                    if !next_is_operator {
                        return Ok(c);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.expr()?;
        let rel = match self.peek() {
            Tok::Punct("<") => Rel::Lt,
            Tok::Punct("<=") => Rel::Le,
            Tok::Punct(">") => Rel::Gt,
            Tok::Punct(">=") => Rel::Ge,
            Tok::Punct("==") => Rel::Eq,
            Tok::Punct("!=") => Rel::Ne,
            _ => return self.err("expected comparison operator"),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Cond::Cmp(Cmp::new(lhs, rel, rhs)))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_punct("+") {
                BinOp::Add
            } else if self.is_punct("-") {
                BinOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while self.is_punct("*") {
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Punct("-") => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.is_punct("[") {
                    if !self.is_array(&name) {
                        self.pos -= 1;
                        return self.err(format!("`{name}` is not an input array"));
                    }
                    self.bump();
                    let idx = self.expr()?;
                    self.expect("]")?;
                    Ok(Expr::Read(name, Box::new(idx)))
                } else if self.is_array(&name) {
                    self.pos -= 1;
                    self.err(format!("array `{name}` must be indexed"))
                } else if self.is_input(&name) || self.scalars.contains(&name) {
                    Ok(Expr::Var(name))
                } else {
                    self.pos -= 1;
                    self.err(format!("undeclared variable `{name}`"))
                }
            }
            _ => self.err("expected expression"),
        }
    }
}

/// Parse LoopNav-IR source text.
///
/// Besides syntax, this checks that variables are declared before use,
/// inputs are never assigned and exactly one `target;` statement exists.
pub fn parse_program(src: &str) -> Result<Program> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, inputs: Vec::new(), scalars: BTreeSet::new() };
    let prog = p.program()?;
    match prog.target_count() {
        0 => Err(Error::MissingTarget),
        1 => Ok(prog),
        _ => Err(Error::MultipleTargets),
    }
}

/// Parse a program without enforcing the single-target rule. Used for
/// target-free fragments in tests and by the concrete interpreter tooling.
pub fn parse_fragment(src: &str) -> Result<Program> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, inputs: Vec::new(), scalars: BTreeSet::new() };
    p.program()
}
