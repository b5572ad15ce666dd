//! SMT-LIB2 export of path conditions, a reader for the same fragment, and
//! an optional external solver invoked through a shell command.

use std::io::Write;
use std::process::{Command, Stdio};

use num_bigint::BigInt;
use num_traits::{One, Signed};

use crate::constraints::Literal;
use crate::error::{Error, Result};
use crate::feasibility::{PathCondition, SatResult, Witness};
use crate::sym::{Atom, InputSym, Poly, Rel, SymExpr};

/// Environment variable naming an external solver command.
pub const SOLVER_ENV: &str = "LOOPNAV_SMT";

fn int(c: &BigInt) -> String {
    if c.is_negative() {
        format!("(- {})", c.abs())
    } else {
        c.to_string()
    }
}

fn term(p: &Poly) -> String {
    let parts: Vec<String> = p
        .terms()
        .map(|(m, c)| {
            let mut factors: Vec<String> = m
                .0
                .iter()
                .map(|a| match a {
                    Atom::Input(s) => s.smt_name(),
                    other => other.to_string(),
                })
                .collect();
            if m.is_one() {
                return int(c);
            }
            if !c.is_one() {
                factors.insert(0, int(c));
            }
            if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                format!("(* {})", factors.join(" "))
            }
        })
        .collect();
    match parts.len() {
        0 => "0".into(),
        1 => parts.into_iter().next().unwrap(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

fn side(e: &SymExpr) -> String {
    match e {
        SymExpr::Poly(p) => term(p),
        other => other.to_string(),
    }
}

fn assertion(l: &Literal) -> String {
    let (a, b) = (side(&l.lhs), side(&l.rhs));
    match l.rel {
        Rel::Ne => format!("(assert (not (= {a} {b})))"),
        r => format!("(assert ({} {a} {b}))", if r == Rel::Eq { "=" } else { r.symbol() }),
    }
}

/// Script declaring every input symbol, one assertion per literal, and a
/// final `(check-sat)`.
pub fn export_smtlib(pc: &PathCondition) -> String {
    let mut out = String::new();
    for s in pc.symbols() {
        out.push_str(&format!("(declare-const {} Int)\n", s.smt_name()));
    }
    for l in &pc.lits {
        out.push_str(&assertion(l));
        out.push('\n');
    }
    out.push_str("(check-sat)\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    let mut comment = false;
    for ch in text.chars() {
        if comment {
            comment = ch != '\n';
            continue;
        }
        match ch {
            ';' => comment = true,
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>> {
    let toks = tokenize(text);
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in toks {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().filter(|_| !stack.is_empty()).ok_or_else(|| bad("unbalanced ')'"))?;
                stack.last_mut().unwrap().push(Sexp::List(done));
            }
            _ => stack.last_mut().unwrap().push(Sexp::Atom(t)),
        }
    }
    if stack.len() != 1 {
        return Err(bad("unbalanced '('"));
    }
    Ok(stack.pop().unwrap())
}

fn bad(msg: &str) -> Error {
    Error::ExternalSolver(format!("malformed SMT-LIB: {msg}"))
}

/// Inverse of [`InputSym::smt_name`]: `A_3` is element 3 of `A`.
fn symbol(name: &str) -> InputSym {
    if let Some((base, idx)) = name.rsplit_once('_') {
        if !base.is_empty() && !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(i) = idx.parse() {
                return InputSym::Elem(base.to_string(), i);
            }
        }
    }
    InputSym::Scalar(name.to_string())
}

fn to_poly(e: &Sexp) -> Result<Poly> {
    match e {
        Sexp::Atom(a) => match a.parse::<BigInt>() {
            Ok(c) => Ok(Poly::constant(c)),
            Err(_) => Ok(Poly::input(symbol(a))),
        },
        Sexp::List(items) => {
            let (Some(Sexp::Atom(op)), args) = (items.first(), &items[1.min(items.len())..]) else {
                return Err(bad("expected operator"));
            };
            let args: Vec<Poly> = args.iter().map(to_poly).collect::<Result<_>>()?;
            match (op.as_str(), args.as_slice()) {
                ("-", [x]) => Ok(-x),
                ("-", [x, rest @ ..]) => Ok(rest.iter().fold(x.clone(), |acc, y| &acc - y)),
                ("+", _) => Ok(args.iter().fold(Poly::zero(), |acc, y| &acc + y)),
                ("*", _) => Ok(args.iter().fold(Poly::constant(1), |acc, y| &acc * y)),
                _ => Err(bad(&format!("unsupported term operator {op}"))),
            }
        }
    }
}

fn to_literal(e: &Sexp) -> Result<Literal> {
    let Sexp::List(items) = e else { return Err(bad("expected comparison")) };
    match items.as_slice() {
        [Sexp::Atom(not), inner] if not == "not" => {
            let l = to_literal(inner)?;
            Ok(Literal::new(l.lhs, l.rel.negate(), l.rhs))
        }
        [Sexp::Atom(op), a, b] => {
            let rel = match op.as_str() {
                "=" => Rel::Eq,
                "<" => Rel::Lt,
                "<=" => Rel::Le,
                ">" => Rel::Gt,
                ">=" => Rel::Ge,
                "distinct" => Rel::Ne,
                _ => return Err(bad(&format!("unsupported relation {op}"))),
            };
            Ok(Literal::new(SymExpr::Poly(to_poly(a)?), rel, SymExpr::Poly(to_poly(b)?)))
        }
        _ => Err(bad("expected comparison")),
    }
}

/// Read back the assertions of a script produced by [`export_smtlib`].
pub fn parse_smtlib(text: &str) -> Result<PathCondition> {
    let mut pc = PathCondition::default();
    for cmd in parse_sexps(text)? {
        if let Sexp::List(items) = &cmd {
            if let [Sexp::Atom(head), body] = items.as_slice() {
                if head == "assert" {
                    pc.push(to_literal(body)?);
                }
            }
        }
    }
    Ok(pc)
}

fn model_value(e: &Sexp) -> Option<BigInt> {
    match e {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(m), x] if m == "-" => model_value(x).map(|v| -v),
            _ => None,
        },
    }
}

/// Parse solver output: a verdict line followed, for `sat`, by a model of
/// `define-fun` entries.
pub fn parse_solver_output(out: &str) -> Result<SatResult> {
    let trimmed = out.trim_start();
    let (verdict, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
    match verdict {
        "unsat" => Ok(SatResult::Unsat),
        "unknown" => Ok(SatResult::Unknown),
        "sat" => {
            let mut w = Witness::new();
            let mut visit = |items: &[Sexp]| {
                if let [Sexp::Atom(df), Sexp::Atom(name), _, _, value] = items {
                    if df == "define-fun" {
                        if let Some(v) = model_value(value) {
                            w.insert(symbol(name), v);
                        }
                    }
                }
            };
            for s in parse_sexps(rest)? {
                if let Sexp::List(items) = &s {
                    visit(items);
                    for inner in items {
                        if let Sexp::List(entry) = inner {
                            visit(entry);
                        }
                    }
                }
            }
            Ok(SatResult::Sat(w))
        }
        other => Err(Error::ExternalSolver(format!("unexpected solver verdict `{other}`"))),
    }
}

/// Run `cmd` through the shell with the script on stdin.
pub fn check_sat_external(cmd: &str, pc: &PathCondition) -> Result<SatResult> {
    let mut script = export_smtlib(pc);
    script.push_str("(get-model)\n");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::ExternalSolver(e.to_string()))?;
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(script.as_bytes())
        .map_err(|e| Error::ExternalSolver(e.to_string()))?;
    let out = child.wait_with_output().map_err(|e| Error::ExternalSolver(e.to_string()))?;
    parse_solver_output(&String::from_utf8_lossy(&out.stdout))
}

/// Canonical text per literal, for round-trip comparisons.
pub fn canonical(pc: &PathCondition) -> Vec<String> {
    pc.lits
        .iter()
        .map(|l| match l.difference() {
            Some(d) => format!("{d} {} 0", l.rel.symbol()),
            None => l.to_string(),
        })
        .collect()
}
