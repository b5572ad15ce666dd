//! Chain program form: root chains and subchains obtained by unfolding the
//! control-flow graph into a tree that is cut whenever a vertex repeats.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ir::ast::{Cmp, Expr};
use crate::ir::cfg::{Cfg, Label, VertexId, VertexKind};

pub type ChainId = usize;

/// Where root chains end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAt {
    /// At the target vertex; paths that miss it are not roots.
    Target,
    /// At the terminal vertex (every complete path is a root).
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub stop: StopAt,
    pub max_chains: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { stop: StopAt::Target, max_chains: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ChainKind {
    Root,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Assume(Cmp),
    Assign { var: String, value: Expr },
    Target,
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Assume(c) => c.fmt(f),
            Instr::Assign { var, value } => write!(f, "{var} = {value}"),
            Instr::Target => f.write_str("target"),
        }
    }
}

/// One step of a chain: a vertex together with the edge taken out of it.
pub type Step = (VertexId, Label);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainNode {
    pub vertex: VertexId,
    pub label: Label,
    pub instr: Instr,
    /// Subchains that may run (any number of times, in any order) before
    /// this node's own instruction. Non-empty exactly for loop nodes.
    pub loop_subchains: Vec<ChainId>,
}

impl ChainNode {
    pub fn is_loop(&self) -> bool {
        !self.loop_subchains.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub id: ChainId,
    pub kind: ChainKind,
    pub nodes: Vec<ChainNode>,
    /// Loop nodes `(chain, node index)` this chain is associated with.
    pub parents: Vec<(ChainId, usize)>,
}

impl Chain {
    pub fn entry_vertex(&self) -> Option<VertexId> {
        self.nodes.first().map(|n| n.vertex)
    }

    pub fn steps(&self) -> Vec<Step> {
        self.nodes.iter().map(|n| (n.vertex, n.label)).collect()
    }

    pub fn assigned_vars(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.instr {
                Instr::Assign { var, .. } => Some(var.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainProgramForm {
    pub chains: Vec<Chain>,
    pub roots: Vec<ChainId>,
    pub stop: StopAt,
}

impl ChainProgramForm {
    pub fn chain(&self, id: ChainId) -> &Chain {
        &self.chains[id]
    }

    pub fn subchain_count(&self) -> usize {
        self.chains.len() - self.roots.len()
    }

    /// The chain and all chains reachable from it through loop nodes.
    pub fn closure(&self, id: ChainId) -> BTreeSet<ChainId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id]);
        while let Some(c) = queue.pop_front() {
            if seen.insert(c) {
                for n in &self.chains[c].nodes {
                    queue.extend(n.loop_subchains.iter().copied());
                }
            }
        }
        seen
    }

    pub fn to_json(&self) -> Value {
        let chains: Vec<Value> = self
            .chains
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "kind": c.kind,
                    "nodes": c.nodes.iter().map(|n| json!({
                        "vertex": n.vertex,
                        "instr": n.instr.to_string(),
                        "loop_subchains": n.loop_subchains,
                    })).collect::<Vec<_>>(),
                    "parents": c.parents,
                })
            })
            .collect();
        json!({ "roots": self.roots, "chains": chains })
    }
}

impl fmt::Display for ChainProgramForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.chains {
            let kind = match c.kind {
                ChainKind::Root => " (root)",
                ChainKind::Sub => "",
            };
            write!(f, "c{}{kind}:", c.id)?;
            for (i, n) in c.nodes.iter().enumerate() {
                f.write_str(if i == 0 { " " } else { "; " })?;
                write!(f, "{}", n.instr)?;
                if n.is_loop() {
                    let subs: Vec<String> = n.loop_subchains.iter().map(|s| format!("c{s}")).collect();
                    write!(f, " : {{{}}}", subs.join(","))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn instr_of(cfg: &Cfg, v: VertexId, label: Label) -> Instr {
    match (&cfg.vertices[v], label) {
        (VertexKind::Assign { var, value }, _) => Instr::Assign { var: var.clone(), value: value.clone() },
        (VertexKind::Branch(c), Label::True) => Instr::Assume(c.clone()),
        (VertexKind::Branch(c), _) => Instr::Assume(c.negate()),
        (VertexKind::Target, _) => Instr::Target,
        (k, _) => unreachable!("{k} never appears inside a chain"),
    }
}

struct RawChain {
    kind: ChainKind,
    steps: Vec<Step>,
    /// Tree node of every step.
    tree: Vec<usize>,
}

struct Unfolder<'a> {
    cfg: &'a Cfg,
    opts: ChainOptions,
    path: Vec<(Step, usize)>,
    on_path: Vec<Option<usize>>,
    next_tree_node: usize,
    raw: Vec<RawChain>,
    /// Tree node -> chains closing a cycle there.
    closing: BTreeMap<usize, Vec<usize>>,
}

impl Unfolder<'_> {
    fn push_chain(&mut self, c: RawChain) -> Result<usize> {
        if self.raw.len() >= self.opts.max_chains {
            return Err(Error::ChainExplosion { cap: self.opts.max_chains });
        }
        self.raw.push(c);
        Ok(self.raw.len() - 1)
    }

    fn visit(&mut self, v: VertexId) -> Result<()> {
        let kind = &self.cfg.vertices[v];
        if self.opts.stop == StopAt::Target && *kind == VertexKind::Target {
            let tn = self.next_tree_node;
            self.next_tree_node += 1;
            let mut steps: Vec<Step> = self.path.iter().map(|p| p.0).collect();
            let mut tree: Vec<usize> = self.path.iter().map(|p| p.1).collect();
            steps.push((v, Label::Seq));
            tree.push(tn);
            self.push_chain(RawChain { kind: ChainKind::Root, steps, tree })?;
            return Ok(());
        }
        if v == self.cfg.terminal {
            if self.opts.stop == StopAt::Terminal {
                let steps = self.path.iter().map(|p| p.0).collect();
                let tree = self.path.iter().map(|p| p.1).collect();
                self.push_chain(RawChain { kind: ChainKind::Root, steps, tree })?;
            }
            return Ok(());
        }
        if let Some(p) = self.on_path[v] {
            let steps = self.path[p..].iter().map(|x| x.0).collect();
            let tree = self.path[p..].iter().map(|x| x.1).collect();
            let id = self.push_chain(RawChain { kind: ChainKind::Sub, steps, tree })?;
            self.closing.entry(self.path[p].1).or_default().push(id);
            return Ok(());
        }
        let tn = self.next_tree_node;
        self.next_tree_node += 1;
        self.on_path[v] = Some(self.path.len());
        for &(label, w) in &self.cfg.succ[v] {
            self.path.push(((v, label), tn));
            self.visit(w)?;
            self.path.pop();
        }
        self.on_path[v] = None;
        Ok(())
    }
}

/// Unfold the graph into chain program form. Chains unreachable from the
/// kept roots are dropped; roots are numbered first, then subchains, each
/// in discovery order.
pub fn extract_chains(cfg: &Cfg, opts: ChainOptions) -> Result<ChainProgramForm> {
    cfg.check_reducible()?;
    let mut u = Unfolder {
        cfg,
        opts,
        path: Vec::new(),
        on_path: vec![None; cfg.len()],
        next_tree_node: 0,
        raw: Vec::new(),
        closing: BTreeMap::new(),
    };
    let first = cfg.succ[cfg.start][0].1;
    u.visit(first)?;
    let Unfolder { raw, closing, .. } = u;

    // Loop associations by raw index.
    let subs_of = |r: &RawChain, i: usize| -> Vec<usize> {
        if r.kind == ChainKind::Sub && i == 0 {
            return Vec::new();
        }
        closing.get(&r.tree[i]).cloned().unwrap_or_default()
    };

    let roots: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].kind == ChainKind::Root).collect();
    let mut keep = BTreeSet::new();
    let mut queue: VecDeque<usize> = roots.iter().copied().collect();
    while let Some(c) = queue.pop_front() {
        if keep.insert(c) {
            for i in 0..raw[c].steps.len() {
                queue.extend(subs_of(&raw[c], i));
            }
        }
    }
    let order: Vec<usize> = roots
        .iter()
        .copied()
        .chain((0..raw.len()).filter(|i| raw[*i].kind == ChainKind::Sub && keep.contains(i)))
        .collect();
    let new_id: BTreeMap<usize, ChainId> = order.iter().enumerate().map(|(n, &o)| (o, n)).collect();

    let mut chains: Vec<Chain> = order
        .iter()
        .map(|&o| {
            let r = &raw[o];
            let nodes = r
                .steps
                .iter()
                .enumerate()
                .map(|(i, &(v, label))| ChainNode {
                    vertex: v,
                    label,
                    instr: instr_of(cfg, v, label),
                    loop_subchains: subs_of(r, i).iter().map(|s| new_id[s]).collect(),
                })
                .collect();
            Chain { id: new_id[&o], kind: r.kind, nodes, parents: Vec::new() }
        })
        .collect();
    for c in 0..chains.len() {
        for i in 0..chains[c].nodes.len() {
            for s in chains[c].nodes[i].loop_subchains.clone() {
                chains[s].parents.push((c, i));
            }
        }
    }
    Ok(ChainProgramForm { roots: (0..roots.len()).collect(), chains, stop: opts.stop })
}

/// Chains that assign some variable more than once.
pub fn check_single_assignment(cpf: &ChainProgramForm) -> Vec<(ChainId, String)> {
    let mut out = Vec::new();
    for c in &cpf.chains {
        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for n in &c.nodes {
            if let Instr::Assign { var, .. } = &n.instr {
                if !seen.insert(var.clone()) && reported.insert(var.clone()) {
                    out.push((c.id, var.clone()));
                }
            }
        }
    }
    out
}

/// All step sequences of length at most `budget` obtained by expanding
/// root chains, where each loop node runs any sequence of its subchains
/// before its own step.
pub fn enumerate_execution_paths(cpf: &ChainProgramForm, budget: usize) -> Vec<Vec<Step>> {
    fn expand(cpf: &ChainProgramForm, chain: ChainId, from: usize, budget: usize, out: &mut Vec<Vec<Step>>) {
        // All expansions of nodes[from..] with at most `budget` steps.
        let nodes = &cpf.chains[chain].nodes;
        if from == nodes.len() {
            out.push(Vec::new());
            return;
        }
        let node = &nodes[from];
        // Prefixes: sequences of subchain runs, then the node itself.
        let mut prefixes: Vec<Vec<Step>> = Vec::new();
        let mut frontier: Vec<Vec<Step>> = vec![Vec::new()];
        while let Some(pre) = frontier.pop() {
            if pre.len() < budget {
                let mut p = pre.clone();
                p.push((node.vertex, node.label));
                prefixes.push(p);
            }
            for &s in &node.loop_subchains {
                let mut runs = Vec::new();
                expand(cpf, s, 0, budget.saturating_sub(pre.len()), &mut runs);
                for r in runs {
                    if !r.is_empty() && pre.len() + r.len() < budget {
                        let mut p = pre.clone();
                        p.extend(r);
                        frontier.push(p);
                    }
                }
            }
        }
        for p in prefixes {
            let mut rest = Vec::new();
            expand(cpf, chain, from + 1, budget - p.len(), &mut rest);
            for r in rest {
                let mut full = p.clone();
                full.extend(r);
                out.push(full);
            }
        }
    }
    let mut out = Vec::new();
    for &r in &cpf.roots {
        expand(cpf, r, 0, budget, &mut out);
    }
    out
}

/// All step sequences of complete graph paths (start to terminal, both
/// excluded) with at most `budget` steps.
pub fn enumerate_cfg_paths(cfg: &Cfg, budget: usize) -> Vec<Vec<Step>> {
    fn go(cfg: &Cfg, v: VertexId, budget: usize, path: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        if v == cfg.terminal {
            out.push(path.clone());
            return;
        }
        if path.len() == budget {
            return;
        }
        for &(label, w) in &cfg.succ[v] {
            path.push((v, label));
            go(cfg, w, budget, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(cfg, cfg.succ[cfg.start][0].1, budget, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::cfg::build_cfg;
    use crate::ir::parser::parse_program;

    const FIG1: &str = include_str!("../../../benchmarks/fig1.ln");

    fn cpf(src: &str, stop: StopAt) -> ChainProgramForm {
        let cfg = build_cfg(&parse_program(src).unwrap()).unwrap();
        extract_chains(&cfg, ChainOptions { stop, ..Default::default() }).unwrap()
    }

    #[test]
    fn running_example_chain_form() {
        let c = cpf(FIG1, StopAt::Target);
        assert_eq!(c.roots, vec![0]);
        assert_eq!(c.subchain_count(), 4);
        let loops: Vec<&Vec<ChainId>> =
            c.chains[0].nodes.iter().filter(|n| n.is_loop()).map(|n| &n.loop_subchains).collect();
        assert_eq!(loops, vec![&vec![1, 2], &vec![3, 4]]);
        let text = c.to_string();
        assert!(text.contains("c0 (root): a = 0; b = 0; i = 0; i >= 15 : {c1,c2}; j = 0; j >= 15 : {c3,c4}; a > 12; a + b == 23; target"), "{text}");
        assert!(text.contains("c1: i < 15; A[i] == 1; a = a + 1; i = i + 1"), "{text}");
        assert!(text.contains("c2: i < 15; A[i] != 1; i = i + 1"), "{text}");
        assert!(check_single_assignment(&c).is_empty());
    }

    #[test]
    fn diamond_has_two_roots() {
        let c = cpf("input int n; int x = 0; if (n > 0) { x = 1; } else { x = 2; } target;", StopAt::Target);
        assert_eq!(c.roots.len(), 2);
        assert_eq!(c.subchain_count(), 0);
        assert_eq!(enumerate_execution_paths(&c, 10).len(), 2);
    }

    #[test]
    fn straight_line_has_one_path() {
        let c = cpf("int x = 1; int y = x; target;", StopAt::Terminal);
        for budget in 3..8 {
            assert_eq!(enumerate_execution_paths(&c, budget).len(), 1);
        }
    }

    #[test]
    fn double_assignment_is_reported() {
        let cfg = build_cfg(&parse_program("int x = 1; x = 2; target;").unwrap()).unwrap();
        let c = extract_chains(&cfg, ChainOptions::default()).unwrap();
        assert_eq!(check_single_assignment(&c), vec![(0, "x".to_string())]);
        let empty = ChainProgramForm { chains: vec![], roots: vec![], stop: StopAt::Target };
        assert!(check_single_assignment(&empty).is_empty());
    }

    #[test]
    fn running_example_paths_match_graph_paths() {
        let cfg = build_cfg(&parse_program(FIG1).unwrap()).unwrap();
        let c = extract_chains(&cfg, ChainOptions { stop: StopAt::Terminal, ..Default::default() }).unwrap();
        for budget in [12, 16, 20] {
            let mut a = enumerate_execution_paths(&c, budget);
            let mut b = enumerate_cfg_paths(&cfg, budget);
            a.sort();
            b.sort();
            assert_eq!(a, b, "budget {budget}");
        }
    }

    #[test]
    fn scanner_segments_double_the_roots() {
        for k in 1..=5 {
            let mut src = String::from("input int S[8];\nint f = 0;\n");
            for s in 0..k {
                src.push_str(&format!("if (S[{s}] == {s}) {{ f = f + 1; }}\n"));
            }
            src.push_str("target;\n");
            let c = cpf(&src, StopAt::Target);
            assert_eq!(c.roots.len(), 1 << k);
        }
    }

    #[test]
    fn cap_is_reported() {
        let cfg = build_cfg(&parse_program(FIG1).unwrap()).unwrap();
        let r = extract_chains(&cfg, ChainOptions { stop: StopAt::Target, max_chains: 3 });
        assert_eq!(r, Err(Error::ChainExplosion { cap: 3 }));
    }
}
