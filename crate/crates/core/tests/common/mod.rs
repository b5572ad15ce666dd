//! Program generators and oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::Rng;

use loopnav_core::chain::{extract_chains, ChainOptions, Step};
use loopnav_core::constraints::build_all;
use loopnav_core::interp::{replay_values, run_cfg, InputValues, DEFAULT_STEP_LIMIT};
use loopnav_core::ir::cfg::{build_cfg, Cfg};
use loopnav_core::ir::normalize::normalize_assignments;
use loopnav_core::ir::parser::parse_program;
use loopnav_core::{Atom, ChainId, ChainKind, ChainProgramForm, ExecResult, InputSym, Label, Phase2, Program};

// ---------------------------------------------------------------------
// Small structured programs for path-correspondence checks.

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    fresh: usize,
    target_left: bool,
}

impl<R: Rng> Gen<'_, R> {
    fn cond(&mut self) -> String {
        let atom = |g: &mut Self| match g.rng.gen_range(0..3) {
            0 => format!("n < {}", g.rng.gen_range(0..3)),
            1 => format!("A[0] == {}", g.rng.gen_range(0..2)),
            _ => format!("A[1] != {}", g.rng.gen_range(0..2)),
        };
        match self.rng.gen_range(0..6) {
            0 => format!("{} && {}", atom(self), atom(self)),
            1 => format!("{} || {}", atom(self), atom(self)),
            _ => atom(self),
        }
    }

    fn stmt(&mut self, depth: usize) -> String {
        let pick = if depth == 0 { 0 } else { self.rng.gen_range(0..4) };
        match pick {
            0 => {
                self.fresh += 1;
                format!("int v{} = {};", self.fresh, self.fresh)
            }
            1 => {
                let c = self.cond();
                let then = self.block(depth - 1);
                if self.rng.gen_bool(0.5) {
                    format!("if ({c}) {{ {then} }} else {{ {} }}", self.block(depth - 1))
                } else {
                    format!("if ({c}) {{ {then} }}")
                }
            }
            2 => {
                let c = self.cond();
                // Empty bodies give self-loops.
                let body = if self.rng.gen_bool(0.2) { String::new() } else { self.block(depth - 1) };
                format!("while ({c}) {{ {body} }}")
            }
            _ => {
                if self.target_left {
                    self.target_left = false;
                    "target;".into()
                } else {
                    self.stmt(0)
                }
            }
        }
    }

    fn block(&mut self, depth: usize) -> String {
        let n = self.rng.gen_range(1..=2);
        (0..n).map(|_| self.stmt(depth)).collect::<Vec<_>>().join(" ")
    }
}

/// A random program with at most `max_vertices` graph vertices and at
/// most `max_back_edges` loops, or `None` if this draw is too large.
pub fn structured_program<R: Rng>(rng: &mut R, max_vertices: usize, max_back_edges: usize) -> Option<(String, Cfg)> {
    let mut g = Gen { rng, fresh: 0, target_left: true };
    let mut body = g.block(2);
    if g.target_left {
        // Put the target at a random top-level position.
        let mut parts = vec![body, "target;".to_string()];
        if g.rng.gen_bool(0.5) {
            parts.swap(0, 1);
        }
        body = parts.join(" ");
    }
    let src = format!("input int n;\ninput int A[2];\n{body}\n");
    let cfg = build_cfg(&parse_program(&src).ok()?).ok()?;
    (cfg.len() <= max_vertices && cfg.back_edges().len() <= max_back_edges).then_some((src, cfg))
}

// ---------------------------------------------------------------------
// Loop programs over small arrays for necessity and soundness checks.

fn rel<R: Rng>(rng: &mut R) -> &'static str {
    ["==", "!=", "<", "<=", ">", ">="].choose(rng).unwrap()
}

/// A random program with one or two loops over input arrays of at most
/// four elements in total, ending in a guard on the loop variables.
pub fn loop_program<R: Rng>(rng: &mut R) -> String {
    let two_arrays = rng.gen_bool(0.3);
    let (n, m) = if two_arrays { (2, 2) } else { (rng.gen_range(2..=4), 0) };
    let mut src = format!("input int A[{n}];\n");
    if two_arrays {
        src += &format!("input int B[{m}];\n");
    }
    let geometric = rng.gen_bool(0.2);
    src += &format!("int c = {};\nint d = 0;\n", if geometric { 1 } else { rng.gen_range(0..2) });
    let upd_c = if geometric { "c = c * 2;".to_string() } else { format!("c = c + {};", rng.gen_range(1..=3)) };
    let upd_d = format!("d = d + {};", rng.gen_range(1..=2));
    let v = rng.gen_range(0..4);
    match rng.gen_range(0..4) {
        0 => {
            src += &format!("for (int i = 0; i < {n}; ++i) {{\n    if (A[i] {} {v}) {{ {upd_c} }}", rel(rng));
            if rng.gen_bool(0.5) {
                src += &format!(" else {{ {upd_d} }}");
            }
            src += "\n}\n";
        }
        1 => {
            // Data-dependent exit.
            src += &format!("int i = 0;\nwhile (i < {n} && A[i] != {v}) {{\n    {upd_c}\n    i = i + 1;\n}}\n");
        }
        2 if two_arrays => {
            src += &format!(
                "for (int i = 0; i < {n}; ++i) {{\n    for (int j = 0; j < {m}; ++j) {{\n        if (A[i] {} B[j]) {{ {upd_c} }}\n    }}\n}}\n",
                rel(rng)
            );
        }
        _ => {
            src += &format!("for (int i = 0; i < {n}; ++i) {{\n    if (A[i] {} {v}) {{ {upd_c} }}\n}}\n", rel(rng));
            let w = rng.gen_range(0..4);
            src += &format!("for (int p = 0; p < {n}; ++p) {{\n    if (A[p] {} {w}) {{ {upd_d} }}\n}}\n", rel(rng));
        }
    }
    let k = rng.gen_range(0..8);
    let mut guard = format!("c {} {k}", rel(rng));
    if rng.gen_bool(0.5) {
        guard += &format!(" && d {} {}", rel(rng), rng.gen_range(0..4));
    }
    src += &format!("if ({guard}) {{\n    target;\n}}\n");
    src
}

/// Every assignment of values in `0..=3` to the program's array elements.
pub fn all_inputs(program: &Program) -> Vec<InputValues> {
    let syms: Vec<InputSym> = program
        .inputs
        .iter()
        .flat_map(|d| (0..d.len.unwrap_or(0)).map(move |i| InputSym::Elem(d.name.clone(), i)))
        .collect();
    let mut out = Vec::new();
    let total = 4usize.pow(syms.len() as u32);
    for code in 0..total {
        let mut c = code;
        let mut w = InputValues::new();
        for s in &syms {
            w.insert(s.clone(), BigInt::from(c % 4));
            c /= 4;
        }
        out.push(w);
    }
    out
}

// ---------------------------------------------------------------------
// Matching a concrete run against the chain form.

/// One execution of a chain inside a run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub chain: ChainId,
    /// Index into the run's steps where the chain starts.
    pub entry: usize,
    /// Executions of each directly associated subchain.
    pub counts: BTreeMap<ChainId, u64>,
}

fn step_matches(steps: &[Step], pos: usize, want: Step, last_by_vertex: bool) -> bool {
    match steps.get(pos) {
        Some(s) if pos + 1 == steps.len() && last_by_vertex => s.0 == want.0,
        Some(s) => *s == want,
        None => false,
    }
}

/// All ways chain `c` can consume `steps[pos..]` prefixes: end position and
/// the instances produced (this one first).
fn match_chain(cpf: &ChainProgramForm, c: ChainId, steps: &[Step], pos: usize) -> Vec<(usize, Vec<Instance>)> {
    let chain = &cpf.chains[c];
    let mut states: Vec<(usize, Vec<Instance>, BTreeMap<ChainId, u64>)> = vec![(pos, Vec::new(), BTreeMap::new())];
    for node in &chain.nodes {
        let mut next = Vec::new();
        // Iterate subchains any number of times, then take the node step.
        let mut frontier = states;
        while let Some((p, inst, counts)) = frontier.pop() {
            if step_matches(steps, p, (node.vertex, node.label), true) {
                next.push((p + 1, inst.clone(), counts.clone()));
            }
            for &s in &node.loop_subchains {
                for (end, sub) in match_chain(cpf, s, steps, p) {
                    if end > p {
                        let mut i2 = inst.clone();
                        i2.extend(sub);
                        let mut c2 = counts.clone();
                        *c2.entry(s).or_insert(0) += 1;
                        frontier.push((end, i2, c2));
                    }
                }
            }
        }
        states = next;
        if states.is_empty() {
            return Vec::new();
        }
    }
    states
        .into_iter()
        .map(|(end, nested, counts)| {
            let mut all = vec![Instance { chain: c, entry: pos, counts }];
            all.extend(nested);
            (end, all)
        })
        .collect()
}

/// Decompose a target-reaching run into chain executions.
pub fn decompose(cpf: &ChainProgramForm, steps: &[Step]) -> Option<Vec<Instance>> {
    cpf.roots
        .iter()
        .flat_map(|&r| match_chain(cpf, r, steps, 0))
        .find(|(end, _)| *end == steps.len())
        .map(|(_, inst)| inst)
}

/// Steps of a run (the start vertex excluded); the final vertex's label
/// is a placeholder matched by vertex only.
pub fn run_steps(cfg: &Cfg, trace: &[usize]) -> Vec<Step> {
    let mut out = Vec::new();
    for w in trace.windows(2) {
        let label = cfg.succ[w[0]].iter().find(|(_, v)| *v == w[1]).map(|(l, _)| *l).expect("edge in trace");
        out.push((w[0], label));
    }
    if let Some(&last) = trace.last() {
        out.push((last, Label::Seq));
    }
    out.remove(0);
    out
}

pub struct Prepared {
    pub program: Program,
    pub cfg: Cfg,
    pub cpf: ChainProgramForm,
    pub p2: Phase2,
}

pub fn prepare(src: &str) -> Prepared {
    let program = parse_program(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let cfg = normalize_assignments(&build_cfg(&program).unwrap()).unwrap();
    let cpf = extract_chains(&cfg, ChainOptions::default()).unwrap();
    let arrays = program.inputs.iter().filter_map(|d| d.len.map(|n| (d.name.clone(), n))).collect();
    let p2 = build_all(&cpf, &cfg.scalars, &arrays).unwrap();
    Prepared { program, cfg, cpf, p2 }
}

/// Check every target-reaching input against the constraint systems of
/// the chains it executes. Returns the number of reaching inputs, or a
/// description of the first violation.
pub fn check_necessity(p: &Prepared) -> Result<usize, String> {
    let mut reaching = 0;
    for input in all_inputs(&p.program) {
        let (res, trace) = run_cfg(&p.cfg, &input, DEFAULT_STEP_LIMIT);
        if res != ExecResult::ReachedTarget {
            continue;
        }
        reaching += 1;
        let steps = run_steps(&p.cfg, &trace);
        let Some(instances) = decompose(&p.cpf, &steps) else {
            return Err(format!("run does not match the chain form: {input:?}"));
        };
        let values = replay_values(&p.cfg, &input, &trace);
        for inst in &instances {
            let chain = &p.cpf.chains[inst.chain];
            if chain.kind == ChainKind::Root && p.p2.eliminated.contains(&inst.chain) {
                return Err(format!("eliminated root c{} reached with {input:?}", inst.chain));
            }
            let alpha = &values[inst.entry + 1];
            let val = |a: &Atom| -> Option<BigInt> {
                match a {
                    Atom::Counter(k) => Some(BigInt::from(inst.counts.get(&k.update).copied().unwrap_or(0))),
                    Atom::Init(v) => Some(alpha.get(v).cloned().unwrap_or_default()),
                    Atom::Input(s) => input.get(s).cloned(),
                }
            };
            for c in &p.p2.systems[inst.chain].constraints {
                if c.eval(&val) != Some(true) {
                    return Err(format!("c{}: `{c}` fails for {input:?} with counts {:?}", inst.chain, inst.counts));
                }
            }
        }
    }
    Ok(reaching)
}
