//! Control-flow graph with a unique start and terminal vertex.
//!
//! Compound guards are decomposed into cascades of atomic branch vertices,
//! so every branch vertex carries a single comparison and has exactly two
//! out-edges labeled with the comparison and its negation.

use std::collections::BTreeSet;
use std::fmt;

use super::ast::{Cmp, Cond, Expr, InputDecl, Program, Stmt};
use crate::error::{Error, Result};

pub type VertexId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VertexKind {
    Start,
    Terminal,
    Assign { var: String, value: Expr },
    Branch(Cmp),
    Target,
}

/// Edge label. Branch vertices have one `True` and one `False` out-edge,
/// every other non-terminal vertex has a single `Seq` out-edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Label {
    Seq,
    True,
    False,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub vertices: Vec<VertexKind>,
    /// Out-edges per vertex; for branches the `True` edge comes first.
    pub succ: Vec<Vec<(Label, VertexId)>>,
    pub start: VertexId,
    pub terminal: VertexId,
    pub target: Option<VertexId>,
    pub inputs: Vec<InputDecl>,
    /// Scalar program variables (not inputs).
    pub scalars: Vec<String>,
}

#[derive(Debug, Clone)]
enum Proto {
    Kind(VertexKind),
    Placeholder,
}

struct Builder {
    kinds: Vec<Proto>,
    succ: Vec<Vec<(Label, VertexId)>>,
}

impl Builder {
    fn add(&mut self, kind: VertexKind, succ: Vec<(Label, VertexId)>) -> VertexId {
        self.kinds.push(Proto::Kind(kind));
        self.succ.push(succ);
        self.kinds.len() - 1
    }

    fn placeholder(&mut self) -> VertexId {
        self.kinds.push(Proto::Placeholder);
        self.succ.push(Vec::new());
        self.kinds.len() - 1
    }

    fn redirect(&mut self, from: VertexId, to: VertexId) {
        for edges in &mut self.succ {
            for (_, v) in edges.iter_mut() {
                if *v == from {
                    *v = to;
                }
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt], mut next: VertexId) -> VertexId {
        for s in stmts.iter().rev() {
            next = self.stmt(s, next);
        }
        next
    }

    fn stmt(&mut self, s: &Stmt, next: VertexId) -> VertexId {
        match s {
            Stmt::Decl { name, init: value } | Stmt::Assign { name, value } => self.add(
                VertexKind::Assign { var: name.clone(), value: value.clone() },
                vec![(Label::Seq, next)],
            ),
            Stmt::Target => self.add(VertexKind::Target, vec![(Label::Seq, next)]),
            Stmt::If { cond, then_body, else_body } => {
                let t = self.block(then_body, next);
                let f = match else_body {
                    Some(e) => self.block(e, next),
                    None => next,
                };
                self.cond(cond, t, f)
            }
            Stmt::While { cond, body } => self.looping(cond, body, None, next),
            Stmt::For { init, cond, step, body } => {
                let header = self.looping(cond, body, step.as_deref(), next);
                match init {
                    Some(i) => self.stmt(i, header),
                    None => header,
                }
            }
        }
    }

    fn looping(&mut self, cond: &Cond, body: &[Stmt], step: Option<&Stmt>, next: VertexId) -> VertexId {
        let ph = self.placeholder();
        let latch = match step {
            Some(s) => self.stmt(s, ph),
            None => ph,
        };
        let body_entry = self.block(body, latch);
        let header = self.cond(cond, body_entry, next);
        self.redirect(ph, header);
        header
    }

    fn cond(&mut self, c: &Cond, t: VertexId, f: VertexId) -> VertexId {
        match c {
            Cond::Cmp(cmp) => {
                self.add(VertexKind::Branch(cmp.clone()), vec![(Label::True, t), (Label::False, f)])
            }
            Cond::And(a, b) => {
                let rhs = self.cond(b, t, f);
                self.cond(a, rhs, f)
            }
            Cond::Or(a, b) => {
                let rhs = self.cond(b, t, f);
                self.cond(a, t, rhs)
            }
            Cond::Not(inner) => self.cond(inner, f, t),
        }
    }
}

/// Lower a parsed program to its control-flow graph.
pub fn build_cfg(prog: &Program) -> Result<Cfg> {
    let mut b = Builder { kinds: Vec::new(), succ: Vec::new() };
    let terminal = b.add(VertexKind::Terminal, Vec::new());
    let entry = b.block(&prog.body, terminal);
    let start = b.add(VertexKind::Start, vec![(Label::Seq, entry)]);

    // Renumber in depth-first preorder from the start vertex, `True` first.
    let mut order = vec![usize::MAX; b.kinds.len()];
    let mut seq = Vec::new();
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if order[v] != usize::MAX {
            continue;
        }
        order[v] = seq.len();
        seq.push(v);
        for &(_, w) in b.succ[v].iter().rev() {
            if order[w] == usize::MAX {
                stack.push(w);
            }
        }
    }
    let mut vertices = Vec::with_capacity(seq.len());
    let mut succ = Vec::with_capacity(seq.len());
    for &old in &seq {
        match &b.kinds[old] {
            Proto::Kind(k) => vertices.push(k.clone()),
            Proto::Placeholder => unreachable!("placeholders are redirected before renumbering"),
        }
        succ.push(b.succ[old].iter().map(|&(l, w)| (l, order[w])).collect());
    }
    if order[terminal] == usize::MAX {
        return Err(Error::UnreachableCode(terminal));
    }
    let target = vertices.iter().position(|k| *k == VertexKind::Target);
    let cfg = Cfg {
        vertices,
        succ,
        start: order[start],
        terminal: order[terminal],
        target,
        inputs: prog.inputs.clone(),
        scalars: prog.scalar_vars(),
    };
    cfg.check_reachability()?;
    Ok(cfg)
}

impl Cfg {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn kind(&self, v: VertexId) -> &VertexKind {
        &self.vertices[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, Label, VertexId)> + '_ {
        self.succ.iter().enumerate().flat_map(|(u, es)| es.iter().map(move |&(l, v)| (u, l, v)))
    }

    pub fn preds(&self) -> Vec<Vec<VertexId>> {
        let mut preds = vec![Vec::new(); self.len()];
        for (u, _, v) in self.edges() {
            preds[v].push(u);
        }
        preds
    }

    fn reach_from(&self, root: VertexId, adj: &[Vec<VertexId>]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(adj[v].iter().copied().filter(|&w| !seen[w]));
        }
        seen
    }

    /// Every vertex must be reachable from start and must reach the terminal.
    pub fn check_reachability(&self) -> Result<()> {
        let fwd: Vec<Vec<VertexId>> =
            self.succ.iter().map(|es| es.iter().map(|&(_, v)| v).collect()).collect();
        let from_start = self.reach_from(self.start, &fwd);
        let to_term = self.reach_from(self.terminal, &self.preds());
        match (0..self.len()).find(|&v| !from_start[v] || !to_term[v]) {
            Some(v) => Err(Error::UnreachableCode(v)),
            None => Ok(()),
        }
    }

    /// Edges `(u, v)` closing a cycle in a depth-first search from start.
    pub fn back_edges(&self) -> Vec<(VertexId, VertexId)> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark = vec![Mark::New; self.len()];
        let mut out = Vec::new();
        let mut stack: Vec<(VertexId, usize)> = vec![(self.start, 0)];
        mark[self.start] = Mark::Active;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if let Some(&(_, w)) = self.succ[v].get(*i) {
                *i += 1;
                match mark[w] {
                    Mark::New => {
                        mark[w] = Mark::Active;
                        stack.push((w, 0));
                    }
                    Mark::Active => out.push((v, w)),
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
        out
    }

    /// Dominator sets, computed by the classic iterative data-flow method.
    pub fn dominators(&self) -> Vec<BTreeSet<VertexId>> {
        let all: BTreeSet<VertexId> = (0..self.len()).collect();
        let mut dom = vec![all; self.len()];
        dom[self.start] = BTreeSet::from([self.start]);
        let preds = self.preds();
        let mut changed = true;
        while changed {
            changed = false;
            for v in 0..self.len() {
                if v == self.start {
                    continue;
                }
                let mut acc: Option<BTreeSet<VertexId>> = None;
                for &p in &preds[v] {
                    acc = Some(match acc {
                        None => dom[p].clone(),
                        Some(a) => a.intersection(&dom[p]).copied().collect(),
                    });
                }
                let mut new = acc.unwrap_or_default();
                new.insert(v);
                if new != dom[v] {
                    dom[v] = new;
                    changed = true;
                }
            }
        }
        dom
    }

    /// A graph is reducible iff every DFS retreating edge targets a dominator
    /// of its source.
    pub fn check_reducible(&self) -> Result<()> {
        let dom = self.dominators();
        for (u, v) in self.back_edges() {
            if !dom[u].contains(&v) {
                return Err(Error::IrreducibleCfg(v));
            }
        }
        Ok(())
    }

    pub fn branch_count(&self) -> usize {
        self.vertices.iter().filter(|k| matches!(k, VertexKind::Branch(_))).count()
    }

    pub fn array_len(&self, name: &str) -> Option<usize> {
        self.inputs.iter().find(|d| d.name == name).and_then(|d| d.len)
    }
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexKind::Start => f.write_str("start"),
            VertexKind::Terminal => f.write_str("end"),
            VertexKind::Assign { var, value } => write!(f, "{var} = {value}"),
            VertexKind::Branch(c) => write!(f, "if {c}"),
            VertexKind::Target => f.write_str("target"),
        }
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (v, k) in self.vertices.iter().enumerate() {
            write!(f, "{v}: {k}")?;
            for (l, w) in &self.succ[v] {
                match l {
                    Label::Seq => write!(f, " -> {w}")?,
                    Label::True => write!(f, " T-> {w}")?,
                    Label::False => write!(f, " F-> {w}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parser::parse_program;

    fn cfg_of(src: &str) -> Cfg {
        build_cfg(&parse_program(src).unwrap()).unwrap()
    }

    fn check_invariants(cfg: &Cfg) {
        for (v, k) in cfg.vertices.iter().enumerate() {
            let labels: Vec<Label> = cfg.succ[v].iter().map(|e| e.0).collect();
            match k {
                VertexKind::Terminal => assert!(labels.is_empty()),
                VertexKind::Branch(_) => assert_eq!(labels, vec![Label::True, Label::False]),
                _ => assert_eq!(labels, vec![Label::Seq]),
            }
        }
        cfg.check_reachability().unwrap();
    }

    #[test]
    fn running_example_structure() {
        let cfg = cfg_of(include_str!("../../../../benchmarks/fig1.ln"));
        check_invariants(&cfg);
        assert_eq!(cfg.back_edges().len(), 2);
        // i < 15, A[i] == 1, j < 15, B[j] == 2, a > 12, a + b == 23
        assert_eq!(cfg.branch_count(), 6);
        cfg.check_reducible().unwrap();
        assert!(cfg.target.is_some());
    }

    #[test]
    fn straight_line_is_linear() {
        let cfg = cfg_of("int x = 1; int y = 2; x = y; target;");
        check_invariants(&cfg);
        assert_eq!(cfg.len(), 6);
        assert_eq!(cfg.branch_count(), 0);
        assert!(cfg.back_edges().is_empty());
    }

    #[test]
    fn if_else_is_a_diamond() {
        let cfg = cfg_of("input int n; int x = 0; if (n > 0) { x = 1; } else { x = 2; } target;");
        check_invariants(&cfg);
        assert_eq!(cfg.branch_count(), 1);
        let b = cfg.vertices.iter().position(|k| matches!(k, VertexKind::Branch(_))).unwrap();
        let outs: Vec<_> = cfg.succ[b].iter().map(|e| e.1).collect();
        assert_ne!(outs[0], outs[1]);
        assert_eq!(cfg.succ[outs[0]][0].1, cfg.succ[outs[1]][0].1);
    }

    #[test]
    fn disjunction_is_cascaded() {
        let cfg = cfg_of("input int n; if (n < 0 || n > 5) { target; }");
        check_invariants(&cfg);
        assert_eq!(cfg.branch_count(), 2);
    }

    #[test]
    fn empty_loop_body_is_a_self_loop() {
        let cfg = cfg_of("input int n; int i = 0; while (i < n) { } target;");
        check_invariants(&cfg);
        assert_eq!(cfg.back_edges().len(), 1);
        let (u, v) = cfg.back_edges()[0];
        assert_eq!(u, v);
    }

    #[test]
    fn irreducible_graph_is_rejected() {
        // start -> 1; 1 branches to 2 and 3; 2 <-> 3 cycle with two entries.
        let cmp = Cmp::new(Expr::var("n"), crate::ir::ast::Rel::Gt, Expr::int(0));
        let cfg = Cfg {
            vertices: vec![
                VertexKind::Start,
                VertexKind::Branch(cmp.clone()),
                VertexKind::Branch(cmp.clone()),
                VertexKind::Branch(cmp),
                VertexKind::Terminal,
            ],
            succ: vec![
                vec![(Label::Seq, 1)],
                vec![(Label::True, 2), (Label::False, 3)],
                vec![(Label::True, 3), (Label::False, 4)],
                vec![(Label::True, 2), (Label::False, 4)],
                vec![],
            ],
            start: 0,
            terminal: 4,
            target: None,
            inputs: vec![InputDecl { name: "n".into(), len: None }],
            scalars: vec![],
        };
        assert!(matches!(cfg.check_reducible(), Err(Error::IrreducibleCfg(_))));
    }
}
