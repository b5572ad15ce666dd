//! Concrete interpreter, used as the ground-truth oracle for witnesses.
//!
//! Unassigned input elements read as 0. Reading an array out of bounds ends
//! the run without reaching the target.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::ir::ast::{BinOp, Cmp, Cond, Expr, Program, Stmt};
use crate::ir::cfg::{Cfg, Label, VertexId, VertexKind};
use crate::sym::InputSym;

pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExecResult {
    ReachedTarget,
    Terminated,
    StepLimit,
}

/// Concrete input values keyed by input symbol.
pub type InputValues = BTreeMap<InputSym, BigInt>;

struct Env<'a> {
    inputs: &'a InputValues,
    lens: BTreeMap<&'a str, Option<usize>>,
    vars: BTreeMap<String, BigInt>,
}

/// Evaluation failure: an out-of-bounds array read.
struct OutOfBounds;

impl<'a> Env<'a> {
    fn new(decls: &'a [crate::ir::ast::InputDecl], inputs: &'a InputValues) -> Self {
        Env { inputs, lens: decls.iter().map(|d| (d.name.as_str(), d.len)).collect(), vars: BTreeMap::new() }
    }

    fn eval(&self, e: &Expr) -> Result<BigInt, OutOfBounds> {
        Ok(match e {
            Expr::Const(c) => c.clone(),
            Expr::Var(v) => match self.lens.get(v.as_str()) {
                Some(None) => self.inputs.get(&InputSym::Scalar(v.clone())).cloned().unwrap_or_default(),
                _ => self.vars.get(v).cloned().unwrap_or_default(),
            },
            Expr::Read(a, idx) => {
                let i = self.eval(idx)?;
                let len = self.lens.get(a.as_str()).copied().flatten().unwrap_or(0);
                match i.to_usize() {
                    Some(i) if i < len => {
                        self.inputs.get(&InputSym::Elem(a.clone(), i)).cloned().unwrap_or_default()
                    }
                    _ => return Err(OutOfBounds),
                }
            }
            Expr::Neg(x) => -self.eval(x)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                }
            }
        })
    }

    fn cmp(&self, c: &Cmp) -> Result<bool, OutOfBounds> {
        Ok(c.rel.holds(&self.eval(&c.lhs)?, &self.eval(&c.rhs)?))
    }

    fn cond(&self, c: &Cond) -> Result<bool, OutOfBounds> {
        Ok(match c {
            Cond::Cmp(c) => self.cmp(c)?,
            Cond::And(a, b) => self.cond(a)? && self.cond(b)?,
            Cond::Or(a, b) => self.cond(a)? || self.cond(b)?,
            Cond::Not(a) => !self.cond(a)?,
        })
    }
}

enum Flow {
    Continue,
    Stop(ExecResult),
}

struct AstRun<'a> {
    env: Env<'a>,
    steps: u64,
    limit: u64,
}

impl AstRun<'_> {
    fn tick(&mut self) -> Option<Flow> {
        self.steps += 1;
        (self.steps > self.limit).then_some(Flow::Stop(ExecResult::StepLimit))
    }

    fn test(&mut self, c: &Cond) -> Result<bool, Flow> {
        if let Some(f) = self.tick() {
            return Err(f);
        }
        self.env.cond(c).map_err(|_| Flow::Stop(ExecResult::Terminated))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Flow {
        for s in stmts {
            if let Flow::Stop(r) = self.stmt(s) {
                return Flow::Stop(r);
            }
        }
        Flow::Continue
    }

    fn stmt(&mut self, s: &Stmt) -> Flow {
        match s {
            Stmt::Decl { name, init: value } | Stmt::Assign { name, value } => {
                if let Some(f) = self.tick() {
                    return f;
                }
                match self.env.eval(value) {
                    Ok(v) => {
                        self.env.vars.insert(name.clone(), v);
                        Flow::Continue
                    }
                    Err(_) => Flow::Stop(ExecResult::Terminated),
                }
            }
            Stmt::Target => Flow::Stop(ExecResult::ReachedTarget),
            Stmt::If { cond, then_body, else_body } => match self.test(cond) {
                Err(f) => f,
                Ok(true) => self.block(then_body),
                Ok(false) => else_body.as_deref().map_or(Flow::Continue, |e| self.block(e)),
            },
            Stmt::While { cond, body } => loop {
                match self.test(cond) {
                    Err(f) => return f,
                    Ok(false) => return Flow::Continue,
                    Ok(true) => {
                        if let Flow::Stop(r) = self.block(body) {
                            return Flow::Stop(r);
                        }
                    }
                }
            },
            Stmt::For { init, cond, step, body } => {
                if let Some(i) = init {
                    if let Flow::Stop(r) = self.stmt(i) {
                        return Flow::Stop(r);
                    }
                }
                loop {
                    match self.test(cond) {
                        Err(f) => return f,
                        Ok(false) => return Flow::Continue,
                        Ok(true) => {
                            if let Flow::Stop(r) = self.block(body) {
                                return Flow::Stop(r);
                            }
                            if let Some(s) = step {
                                if let Flow::Stop(r) = self.stmt(s) {
                                    return Flow::Stop(r);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Big-step interpretation of the source program.
pub fn run_program(prog: &Program, inputs: &InputValues, step_limit: u64) -> ExecResult {
    let mut run = AstRun { env: Env::new(&prog.inputs, inputs), steps: 0, limit: step_limit };
    match run.block(&prog.body) {
        Flow::Stop(r) => r,
        Flow::Continue => ExecResult::Terminated,
    }
}

/// Small-step interpretation over the control-flow graph. Returns the
/// outcome and the visited vertex sequence (starting at the start vertex).
pub fn run_cfg(cfg: &Cfg, inputs: &InputValues, step_limit: u64) -> (ExecResult, Vec<VertexId>) {
    let mut env = Env::new(&cfg.inputs, inputs);
    let mut v = cfg.start;
    let mut trace = vec![v];
    let mut steps = 0u64;
    loop {
        let label = match &cfg.vertices[v] {
            VertexKind::Terminal => return (ExecResult::Terminated, trace),
            VertexKind::Target => return (ExecResult::ReachedTarget, trace),
            VertexKind::Start => Label::Seq,
            VertexKind::Assign { var, value } => match env.eval(value) {
                Ok(x) => {
                    env.vars.insert(var.clone(), x);
                    Label::Seq
                }
                Err(_) => return (ExecResult::Terminated, trace),
            },
            VertexKind::Branch(c) => match env.cmp(c) {
                Ok(true) => Label::True,
                Ok(false) => Label::False,
                Err(_) => return (ExecResult::Terminated, trace),
            },
        };
        steps += 1;
        if steps > step_limit {
            return (ExecResult::StepLimit, trace);
        }
        v = cfg.succ[v].iter().find(|e| e.0 == label).expect("well-formed cfg").1;
        trace.push(v);
    }
}

/// Final values of scalar variables along a CFG trace, used by tests that
/// replay executions.
pub fn replay_values(cfg: &Cfg, inputs: &InputValues, trace: &[VertexId]) -> Vec<BTreeMap<String, BigInt>> {
    let mut env = Env::new(&cfg.inputs, inputs);
    let mut out = Vec::with_capacity(trace.len());
    for &v in trace {
        out.push(env.vars.clone());
        if let VertexKind::Assign { var, value } = &cfg.vertices[v] {
            let x = env.eval(value).unwrap_or_else(|_| BigInt::zero());
            env.vars.insert(var.clone(), x);
        }
    }
    out
}

/// Evaluate an expression over explicit variable and input values; `None`
/// on an out-of-bounds read.
pub fn eval_expr(
    e: &Expr,
    decls: &[crate::ir::ast::InputDecl],
    vars: &BTreeMap<String, BigInt>,
    inputs: &InputValues,
) -> Option<BigInt> {
    let mut env = Env::new(decls, inputs);
    env.vars = vars.clone();
    env.eval(e).ok()
}
